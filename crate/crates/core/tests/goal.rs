use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use groundplan::bench::DomainKind;
use groundplan::goal::*;
use groundplan::pddl::{Atom, Literal};
use groundplan::scene::{BBox, ClassDetection, PhraseDetection, SceneObservation};
use serde_json::{json, Value};

fn cooking() -> groundplan::pddl::Domain {
    DomainKind::Cooking.domain()
}

fn blocks() -> groundplan::pddl::Domain {
    DomainKind::Blocksworld.domain()
}

#[test]
fn structured_goal_examples() {
    let g = parse_structured_goal(
        "in(cucumber, white_bowl) AND NOT sliced(cucumber)",
        &cooking(),
    )
    .unwrap();
    assert_eq!(
        g.conjuncts,
        vec![
            Literal::pos(Atom::new("in", ["cucumber", "white_bowl"])),
            Literal::neg(Atom::new("sliced", ["cucumber"])),
        ]
    );
    assert_eq!(g.source, GoalSource::Structured);
    assert_eq!(
        g.to_text(),
        "in(cucumber, white_bowl) AND NOT sliced(cucumber)"
    );
    assert_eq!(parse_structured_goal(&g.to_text(), &cooking()).unwrap(), g);
    // Keywords and names are case-insensitive.
    let h = parse_structured_goal(
        "  IN( Cucumber ,white_bowl )and not SLICED(cucumber)",
        &cooking(),
    )
    .unwrap();
    assert_eq!(h, g);
}

#[test]
fn structured_goal_errors() {
    let d = cooking();
    let syntax = |text: &str| match parse_structured_goal(text, &d) {
        Err(GoalError::Syntax { offset, .. }) => offset,
        other => panic!("{text}: {other:?}"),
    };
    assert_eq!(syntax(""), 0);
    assert_eq!(syntax("in(a b)"), 5);
    assert_eq!(syntax("in(a,)"), 5);
    assert_eq!(syntax("in(a, b) AND"), 12);
    assert_eq!(syntax("in(a, b) $"), 9);
    assert_eq!(syntax("in(a, b) sliced(a)"), 9);
    assert_eq!(syntax("NOT NOT sliced(a)"), 4);
    assert!(
        matches!(parse_structured_goal("fly(a)", &d), Err(GoalError::UnknownPredicate(p)) if p == "fly")
    );
    assert!(matches!(
        parse_structured_goal("sliced(a, b)", &d),
        Err(GoalError::Arity {
            expected: 1,
            found: 2,
            ..
        })
    ));
}

fn class(ty: &str, b: [f64; 4]) -> ClassDetection {
    ClassDetection {
        query: ty.into(),
        bbox: b.into(),
        score: 0.9,
        suggested_type: ty.into(),
    }
}

fn phrase(name: &str, b: [f64; 4]) -> PhraseDetection {
    PhraseDetection {
        query: name.replace('_', " "),
        referent_name: name.into(),
        bbox: b.into(),
        score: 0.8,
        suggested_type: None,
    }
}

fn two_blocks() -> SceneObservation {
    SceneObservation {
        image_width: 100.0,
        image_height: 100.0,
        class_detections: vec![
            class("block", [10.0, 10.0, 20.0, 20.0]),
            class("block", [50.0, 10.0, 60.0, 20.0]),
        ],
        phrase_detections: vec![],
    }
}

#[test]
fn goal_names_resolve_in_a_second_pass() {
    let d = blocks();
    let spec = parse_structured_goal("on(red_block, block2)", &d).unwrap();
    let objects = groundplan::scene::merge_detections(&two_blocks(), &d, 0.5).unwrap();
    let first = ground_goal(&spec, &objects, &d).unwrap();
    assert_eq!(first.unresolved, vec!["red_block".to_string()]);

    let grounder = ScriptedPhrases(vec![
        phrase("Red_Block", [10.0, 10.0, 20.0, 20.0]),
        phrase("unrelated", [50.0, 10.0, 60.0, 20.0]),
    ]);
    let (goal, augmented) = resolve_goal(&spec, &two_blocks(), &d, 0.5, &grounder).unwrap();
    assert_eq!(goal, spec.conjuncts);
    // Only the queried name is merged.
    assert_eq!(augmented.phrase_detections.len(), 1);
    let objects = groundplan::scene::merge_detections(&augmented, &d, 0.5).unwrap();
    assert_eq!(
        objects.get("red_block").unwrap().bbox,
        BBox::new(10.0, 10.0, 20.0, 20.0)
    );

    // Nothing resolved needs no second pass.
    let plain = parse_structured_goal("on(block1, block2)", &d).unwrap();
    let (_, same) =
        resolve_goal(&plain, &two_blocks(), &d, 0.5, &ScriptedPhrases::default()).unwrap();
    assert_eq!(same, two_blocks());

    assert!(matches!(
        resolve_goal(&spec, &two_blocks(), &d, 0.5, &ScriptedPhrases::default()),
        Err(GoalError::Unresolved(n)) if n == ["red_block"]
    ));
}

#[test]
fn ill_typed_goal_is_rejected() {
    let d = cooking();
    let obs = SceneObservation {
        image_width: 100.0,
        image_height: 100.0,
        class_detections: vec![
            class("gripper", [0.0, 0.0, 10.0, 10.0]),
            class("container", [50.0, 50.0, 70.0, 60.0]),
        ],
        phrase_detections: vec![],
    };
    let objects = groundplan::scene::merge_detections(&obs, &d, 0.5).unwrap();
    let spec = parse_structured_goal("in(gripper1, container1)", &d).unwrap();
    assert!(
        matches!(ground_goal(&spec, &objects, &d), Err(GoalError::IllTyped(v)) if v.len() == 1)
    );
    let ok = parse_structured_goal("in(cucumber, container1)", &d).unwrap();
    assert_eq!(
        ground_goal(&ok, &objects, &d).unwrap().unresolved,
        ["cucumber"]
    );
}

#[test]
fn prompt_lists_the_domain_and_ends_with_the_instruction() {
    let p = build_prompt("Put the cucumber in the bowl.", &cooking());
    assert!(p.contains("vegetable (a kind of item)"));
    assert!(p.contains("in(?o - item, ?c - container)"));
    assert!(p.ends_with("Instruction: Put the cucumber in the bowl.\n"));
}

#[test]
fn llm_config_defaults_and_validation() {
    let c: LlmConfig = serde_json::from_str(r#"{"base_url": "http://x", "model": "m"}"#).unwrap();
    assert_eq!(
        (c.api_key_env.as_str(), c.timeout_s, c.retries),
        ("LLM_API_KEY", 30.0, 0)
    );
    assert!(c.validate().is_ok());
    for bad in [
        LlmConfig {
            timeout_s: 0.0,
            ..c.clone()
        },
        LlmConfig {
            timeout_s: f64::NAN,
            ..c.clone()
        },
        LlmConfig {
            model: String::new(),
            ..c.clone()
        },
    ] {
        assert!(matches!(bad.validate(), Err(GoalError::Config(_))));
    }
}

struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Minimal HTTP server answering each request with the next scripted
/// `(status, content)` pair, wrapped as a chat-completions response.
struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
    handle: JoinHandle<()>,
}

impl Stub {
    fn start(script: Vec<(u16, &'static str)>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let handle = std::thread::spawn(move || {
            for (status, content) in script {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                assert!(line.starts_with("POST /v1/chat/completions "), "{line}");
                let (mut len, mut auth) = (0, None);
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    let (k, v) = l.split_once(':').unwrap();
                    match k.to_ascii_lowercase().as_str() {
                        "content-length" => len = v.trim().parse().unwrap(),
                        "authorization" => auth = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    auth,
                    body: serde_json::from_slice(&body).unwrap(),
                });
                let payload =
                    json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                        .to_string();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                )
                .unwrap();
            }
        });
        Stub { url, seen, handle }
    }

    fn config(&self, retries: u32) -> LlmConfig {
        LlmConfig {
            base_url: self.url.clone(),
            model: "test-model".into(),
            api_key_env: "GROUNDPLAN_TEST_UNSET_KEY".into(),
            timeout_s: 5.0,
            retries,
        }
    }

    fn finish(self) -> Vec<Seen> {
        self.handle.join().unwrap();
        Arc::try_unwrap(self.seen)
            .ok()
            .unwrap()
            .into_inner()
            .unwrap()
    }
}

const INSTRUCTION: &str = "Put the cucumber in the white bowl, uncut.";

#[test]
fn llm_goal_matches_structured_goal() {
    let stub = Stub::start(vec![(
        200,
        "```\nin(cucumber, white_bowl) AND NOT sliced(cucumber)\n```",
    )]);
    std::env::set_var("GROUNDPLAN_TEST_KEY", "sekret");
    let cfg = LlmConfig {
        api_key_env: "GROUNDPLAN_TEST_KEY".into(),
        ..stub.config(0)
    };
    let t = HttpTransport::new(&cfg).unwrap();
    let spec = llm_parse_goal(INSTRUCTION, &cooking(), &cfg, &t).unwrap();
    assert_eq!(spec.source, GoalSource::Llm);
    let structured = parse_structured_goal(
        "in(cucumber, white_bowl) AND NOT sliced(cucumber)",
        &cooking(),
    )
    .unwrap();
    assert_eq!(spec.conjuncts, structured.conjuncts);

    let seen = stub.finish();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sekret"));
    assert_eq!(seen[0].body["model"], "test-model");
    assert_eq!(seen[0].body["temperature"], 0);
    assert_eq!(
        seen[0].body["messages"][0]["content"],
        build_prompt(INSTRUCTION, &cooking())
    );
}

#[test]
fn invalid_responses_are_retried() {
    let stub = Stub::start(vec![
        (200, "Sure! The cucumber goes in the bowl."),
        (200, "sliced(cucumber)"),
    ]);
    let cfg = stub.config(2);
    let spec = llm_parse_goal(
        INSTRUCTION,
        &cooking(),
        &cfg,
        &HttpTransport::new(&cfg).unwrap(),
    )
    .unwrap();
    assert_eq!(
        spec.conjuncts,
        [Literal::pos(Atom::new("sliced", ["cucumber"]))]
    );
    let seen = stub.finish();
    assert_eq!(seen.len(), 2);
    assert!(seen[0].auth.is_none());
}

#[test]
fn prose_exhausts_retries() {
    let stub = Stub::start(vec![(200, "I cannot help."), (200, "Still prose.")]);
    let cfg = stub.config(1);
    let err = llm_parse_goal(
        INSTRUCTION,
        &cooking(),
        &cfg,
        &HttpTransport::new(&cfg).unwrap(),
    )
    .unwrap_err();
    assert!(
        matches!(err, GoalError::Unparsable { attempts: 2, ref last } if last == "Still prose.")
    );
    assert_eq!(stub.finish().len(), 2);
}

#[test]
fn unknown_predicate_in_response() {
    let stub = Stub::start(vec![(200, "chopped(cucumber)")]);
    let cfg = stub.config(0);
    let err = llm_parse_goal(
        INSTRUCTION,
        &cooking(),
        &cfg,
        &HttpTransport::new(&cfg).unwrap(),
    )
    .unwrap_err();
    assert!(matches!(err, GoalError::UnknownPredicate(p) if p == "chopped"));
    stub.finish();
}

#[test]
fn transport_failures_are_network_errors() {
    let stub = Stub::start(vec![(500, "boom")]);
    let cfg = stub.config(0);
    let err = llm_parse_goal(
        INSTRUCTION,
        &cooking(),
        &cfg,
        &HttpTransport::new(&cfg).unwrap(),
    )
    .unwrap_err();
    assert!(matches!(err, GoalError::Network(_)), "{err:?}");
    stub.finish();

    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let cfg = LlmConfig {
        base_url: format!("http://127.0.0.1:{port}"),
        model: "m".into(),
        api_key_env: "GROUNDPLAN_TEST_UNSET_KEY".into(),
        timeout_s: 2.0,
        retries: 1,
    };
    let err = llm_parse_goal(
        INSTRUCTION,
        &cooking(),
        &cfg,
        &HttpTransport::new(&cfg).unwrap(),
    )
    .unwrap_err();
    assert!(matches!(err, GoalError::Network(_)), "{err:?}");
}

#[test]
fn recorded_exchanges_replay_offline() {
    let stub = Stub::start(vec![(200, "in(cucumber, white_bowl)")]);
    let cfg = stub.config(0);
    let rec = Recorder::new(HttpTransport::new(&cfg).unwrap());
    let live = llm_parse_goal(INSTRUCTION, &cooking(), &cfg, &rec).unwrap();
    stub.finish();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cassette.json");
    rec.save(&path).unwrap();
    let cassette = Cassette::load(&path).unwrap();
    assert_eq!(
        llm_parse_goal(INSTRUCTION, &cooking(), &cfg, &cassette).unwrap(),
        live
    );
    // Each exchange answers once.
    assert!(matches!(
        llm_parse_goal(INSTRUCTION, &cooking(), &cfg, &cassette),
        Err(GoalError::Cassette(_))
    ));
    // A different instruction has no recording.
    let fresh = Cassette::load(&path).unwrap();
    assert!(matches!(
        llm_parse_goal("something else", &cooking(), &cfg, &fresh),
        Err(GoalError::Cassette(_))
    ));
    assert!(matches!(
        Cassette::load(&dir.path().join("missing.json")),
        Err(GoalError::Cassette(_))
    ));
}
