use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use groundplan::eval::{load_manifest, SuiteReport};
use groundplan::goal::{build_prompt, Exchange};
use groundplan::pddl::parse_domain;
use serde_json::json;
use tempfile::TempDir;

fn groundplan<S: AsRef<OsStr>>(dir: &Path, args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundplan"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn assert_exit(o: &Output, code: i32) {
    assert_eq!(
        o.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout(o),
        stderr(o)
    );
}

/// Every file under `dir` keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn genbench(dir: &Path, kind: &str, seeds: &str, out: &str) {
    let o = groundplan(
        dir,
        &[
            "--seed", "1", "genbench", kind, "--seeds", seeds, "--out", out,
        ],
    );
    assert_exit(&o, 0);
}

struct Entry {
    dir: PathBuf,
    goal_structured: String,
    goal_text: String,
}

impl Entry {
    /// `ground` arguments up to and excluding `--goal`.
    fn ground(&self, out: &str, domain: &str) -> Vec<String> {
        let f = |n: &str| self.dir.join(n).to_str().unwrap().to_string();
        vec![
            "--out".into(),
            out.into(),
            "ground".into(),
            domain.into(),
            f("scene.json"),
            f("exemplar.json"),
            "--phrases".into(),
            f("phrases.json"),
        ]
    }
}

fn first_entry(suite: &Path) -> Entry {
    let m = load_manifest(&suite.join("manifest.json")).unwrap();
    let e = &m.problems[0];
    Entry {
        dir: suite.join(e.scene.parent().unwrap()),
        goal_structured: e.goal_structured.clone().unwrap(),
        goal_text: e.goal_text.clone().unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pddl_check_accepts_bundled_domains_and_rejects_broken_ones() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "hanoi", "1", "suite");
    let o = groundplan(tmp.path(), &["pddl", "check", "suite/domain.pddl"]);
    assert_exit(&o, 0);
    assert!(stdout(&o).starts_with("domain hanoi:"));
    let o = groundplan(
        tmp.path(),
        &[
            "pddl",
            "check",
            "suite/domain.pddl",
            "suite/hanoi-0001/truth.pddl",
        ],
    );
    assert_exit(&o, 0);
    assert!(stdout(&o).contains("problem hanoi-1:"));

    fs::write(
        tmp.path().join("bad.pddl"),
        "(define (domain x) (:predicates (p ?a - ghost)))",
    )
    .unwrap();
    let o = groundplan(tmp.path(), &["pddl", "check", "bad.pddl"]);
    assert_exit(&o, 1);
    assert!(stderr(&o).contains("bad.pddl"));

    let o = groundplan(tmp.path(), &["pddl", "check", "missing.pddl"]);
    assert_exit(&o, 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["plan"][..],
        &["frobnicate"],
        &["genbench", "chess"],
        &["plan", "a", "b", "--mode", "fastest"],
        &["eval"],
    ] {
        let o = groundplan(tmp.path(), args);
        assert_exit(&o, 2);
        assert!(
            stderr(&o).contains("Usage") || stderr(&o).contains("invalid value"),
            "{args:?}"
        );
    }
}

#[test]
fn ground_plan_validate_chain_succeeds_on_noiseless_problems() {
    let tmp = TempDir::new().unwrap();
    for kind in ["blocksworld", "hanoi", "cooking"] {
        genbench(tmp.path(), kind, "2", kind);
        let e = first_entry(&tmp.path().join(kind));
        let domain = format!("{kind}/domain.pddl");
        let work = format!("{kind}-work");
        let mut args = e.ground(&work, &domain);
        args.extend(["--goal".to_string(), e.goal_structured.clone()]);
        let o = groundplan(tmp.path(), &args);
        assert_exit(&o, 0);
        let o = groundplan(
            tmp.path(),
            &[
                "--out",
                &work,
                "plan",
                &domain,
                &format!("{work}/problem.pddl"),
            ],
        );
        assert_exit(&o, 0);
        let result: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(tmp.path().join(&work).join("result.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(result["status"], "solved");
        for key in ["plan_length", "expanded_nodes", "wall_time_ms"] {
            assert!(result[key].is_number(), "{key}");
        }
        // The predicted plan is checked against the generator's ground truth.
        let o = groundplan(
            tmp.path(),
            &[
                "validate",
                &domain,
                s(&e.dir.join("truth.pddl")),
                &format!("{work}/plan.txt"),
            ],
        );
        assert_exit(&o, 0);
        assert!(stdout(&o).starts_with("valid"));
    }
}

#[test]
fn goal_can_be_read_from_a_file() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "1", "suite");
    let e = first_entry(&tmp.path().join("suite"));
    fs::write(tmp.path().join("goal.txt"), &e.goal_structured).unwrap();
    let args = |goal: &str, out: &str| {
        let mut args = e.ground(out, "suite/domain.pddl");
        args.extend(["--goal".to_string(), goal.to_string()]);
        groundplan(tmp.path(), &args)
    };
    assert_exit(&args("goal.txt", "a"), 0);
    assert_exit(&args(&e.goal_structured, "b"), 0);
    assert_eq!(
        snapshot(&tmp.path().join("a")),
        snapshot(&tmp.path().join("b"))
    );

    let o = args("on(red_block,", "c");
    assert_exit(&o, 1);
    assert!(stderr(&o).contains("offset"));
}

#[test]
fn eval_reports_full_success_on_noiseless_blocksworld() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "6", "suite");
    let o = groundplan(tmp.path(), &["--jobs", "2", "eval", "suite/manifest.json"]);
    assert_exit(&o, 0);
    let table = stdout(&o);
    let row = table
        .lines()
        .find(|l| l.starts_with("blocksworld"))
        .unwrap();
    assert!(row.trim_end().ends_with("1.00"), "{row}");

    let report: SuiteReport =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report.rows.len(), 1);
    let r = &report.rows[0];
    assert_eq!(r.n, 6);
    assert_eq!((r.precision, r.recall, r.success), (1.0, 1.0, 1.0));
}

#[test]
fn eval_with_empty_plans_scores_below_one() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "6", "suite");
    let o = groundplan(
        tmp.path(),
        &["eval", "suite/manifest.json", "--planner", "empty-plan"],
    );
    assert_exit(&o, 0);
    let report: SuiteReport =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report.rows[0].precision, 1.0);
    assert!(report.rows[0].success < 1.0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "cooking", "3", "a");
    genbench(tmp.path(), "cooking", "3", "b");
    assert_eq!(
        snapshot(&tmp.path().join("a")),
        snapshot(&tmp.path().join("b"))
    );

    for out in ["r1", "r2"] {
        let o = groundplan(
            tmp.path(),
            &["--out", out, "--jobs", "3", "eval", "a/manifest.json"],
        );
        assert_exit(&o, 0);
    }
    assert_eq!(
        snapshot(&tmp.path().join("r1")),
        snapshot(&tmp.path().join("r2"))
    );

    let e = first_entry(&tmp.path().join("a"));
    for out in ["p1", "p2"] {
        let mut args = e.ground(out, "a/domain.pddl");
        args.extend(["--goal".to_string(), e.goal_structured.clone()]);
        let o = groundplan(tmp.path(), &args);
        assert_exit(&o, 0);
        let o = groundplan(
            tmp.path(),
            &[
                "--out",
                out,
                "plan",
                "a/domain.pddl",
                &format!("{out}/problem.pddl"),
            ],
        );
        assert_exit(&o, 0);
    }
    for f in ["problem.pddl", "graph.json", "plan.txt"] {
        assert_eq!(
            fs::read(tmp.path().join("p1").join(f)).unwrap(),
            fs::read(tmp.path().join("p2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn different_seeds_give_different_suites() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "2", "a");
    let o = groundplan(
        tmp.path(),
        &[
            "--seed",
            "9",
            "genbench",
            "blocksworld",
            "--seeds",
            "2",
            "--out",
            "b",
        ],
    );
    assert_exit(&o, 0);
    assert!(tmp.path().join("b/blocksworld-0009").is_dir());
    assert!(tmp.path().join("b/blocksworld-0010").is_dir());
    assert!(!tmp.path().join("b/blocksworld-0001").exists());
}

const TWO_BLOCKS: &str = "(define (problem cycle) (:domain blocksworld)
  (:objects a b - block)
  (:init)
  (:goal (and (on a b) (on b a))))";

#[test]
fn unsolvable_and_limited_searches_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "1", "suite");
    fs::write(tmp.path().join("cycle.pddl"), TWO_BLOCKS).unwrap();
    let o = groundplan(tmp.path(), &["plan", "suite/domain.pddl", "cycle.pddl"]);
    assert_exit(&o, 1);
    assert!(stdout(&o).contains("unsolvable"));
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/result.json")).unwrap())
            .unwrap();
    assert_eq!(result["status"], "unsolvable");
    assert!(result["plan_length"].is_null());
    assert!(!tmp.path().join("out/plan.txt").exists());

    let o = groundplan(
        tmp.path(),
        &[
            "plan",
            "suite/domain.pddl",
            "suite/blocksworld-0001/truth.pddl",
            "--node-limit",
            "1",
        ],
    );
    assert_exit(&o, 1);
    assert!(stdout(&o).contains("node-limit"));
}

#[test]
fn validate_reports_the_failing_step() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "blocksworld", "1", "suite");
    fs::write(tmp.path().join("cycle.pddl"), TWO_BLOCKS).unwrap();
    fs::write(tmp.path().join("bad.txt"), "(pickup a)\n(pickup b)\n").unwrap();
    let o = groundplan(
        tmp.path(),
        &["validate", "suite/domain.pddl", "cycle.pddl", "bad.txt"],
    );
    assert_exit(&o, 1);
    assert_eq!(
        stdout(&o).trim(),
        "invalid: precondition-unsatisfied at step 2 (pickup b)"
    );

    fs::write(tmp.path().join("empty.txt"), "").unwrap();
    let o = groundplan(
        tmp.path(),
        &["validate", "suite/domain.pddl", "cycle.pddl", "empty.txt"],
    );
    assert_exit(&o, 1);
    assert_eq!(stdout(&o).trim(), "invalid: goal-unsatisfied");

    fs::write(tmp.path().join("garbage.txt"), "(pickup a").unwrap();
    let o = groundplan(
        tmp.path(),
        &["validate", "suite/domain.pddl", "cycle.pddl", "garbage.txt"],
    );
    assert_exit(&o, 1);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "hanoi", "1", "suite");
    let truth = "suite/hanoi-0001/truth.pddl";
    fs::write(
        tmp.path().join("cfg.json"),
        r#"{"out_dir": "from-config", "search": {"node_limit": 1}, "seed": 7}"#,
    )
    .unwrap();

    let o = groundplan(
        tmp.path(),
        &["--config", "cfg.json", "plan", "suite/domain.pddl", truth],
    );
    assert_exit(&o, 1);
    assert!(tmp.path().join("from-config/result.json").is_file());

    let o = groundplan(
        tmp.path(),
        &[
            "--config",
            "cfg.json",
            "--out",
            "from-flag",
            "plan",
            "suite/domain.pddl",
            truth,
            "--node-limit",
            "100000",
        ],
    );
    assert_exit(&o, 0);
    assert!(tmp.path().join("from-flag/plan.txt").is_file());

    // Unset search fields keep their defaults.
    let o = groundplan(tmp.path(), &["plan", "suite/domain.pddl", truth]);
    assert_exit(&o, 0);

    let o = groundplan(
        tmp.path(),
        &[
            "--config", "cfg.json", "genbench", "hanoi", "--seeds", "1", "--out", "s",
        ],
    );
    assert_exit(&o, 0);
    assert!(tmp.path().join("s/hanoi-0007").is_dir());

    fs::write(tmp.path().join("typo.json"), r#"{"thetamatch": 0.5}"#).unwrap();
    let o = groundplan(
        tmp.path(),
        &[
            "--config",
            "typo.json",
            "pddl",
            "check",
            "suite/domain.pddl",
        ],
    );
    assert_exit(&o, 1);
    assert!(stderr(&o).contains("thetamatch"));
}

#[test]
fn llm_goal_replays_from_a_cassette() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "cooking", "1", "suite");
    let e = first_entry(&tmp.path().join("suite"));
    let domain =
        parse_domain(&fs::read_to_string(tmp.path().join("suite/domain.pddl")).unwrap()).unwrap();
    let request = json!({
        "model": "m",
        "temperature": 0,
        "messages": [{"role": "user", "content": build_prompt(&e.goal_text, &domain)}],
    });
    let exchange = Exchange {
        request,
        response: json!({"choices": [{"message": {"role": "assistant", "content": e.goal_structured}}]}),
    };
    fs::write(
        tmp.path().join("tape.json"),
        serde_json::to_string(&vec![exchange]).unwrap(),
    )
    .unwrap();

    let ground = |out: &str, extra: &[&str]| {
        let mut args = e.ground(out, "suite/domain.pddl");
        args.extend(extra.iter().map(|x| x.to_string()));
        groundplan(tmp.path(), &args)
    };
    let o = ground(
        "llm",
        &[
            "--goal",
            &e.goal_text,
            "--llm-url",
            "http://127.0.0.1:9",
            "--llm-model",
            "m",
            "--cassette",
            "tape.json",
        ],
    );
    assert_exit(&o, 0);
    let o = ground("structured", &["--goal", &e.goal_structured]);
    assert_exit(&o, 0);
    assert_eq!(
        fs::read(tmp.path().join("llm/problem.pddl")).unwrap(),
        fs::read(tmp.path().join("structured/problem.pddl")).unwrap()
    );

    // Nothing listens on the discard port.
    let o = ground(
        "down",
        &[
            "--goal",
            &e.goal_text,
            "--llm-url",
            "http://127.0.0.1:9",
            "--llm-model",
            "m",
        ],
    );
    assert_exit(&o, 1);
    assert!(stderr(&o).contains("request failed"));
}

/// Answers one HTTP request with a chat response carrying `content`.
fn one_shot_server(content: String) -> (String, std::thread::JoinHandle<()>) {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let payload = json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string();
        write!(
            reader.get_mut(),
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
    });
    (url, handle)
}

#[test]
fn recorded_exchanges_replay_offline() {
    let tmp = TempDir::new().unwrap();
    genbench(tmp.path(), "cooking", "2", "suite");
    let (url, server) = one_shot_server(first_entry(&tmp.path().join("suite")).goal_structured);
    let llm = ["--llm-url", &url, "--llm-model", "m"];
    let mut args = vec![
        "--jobs",
        "1",
        "--out",
        "live",
        "eval",
        "suite/manifest.json",
        "--record",
        "tape.json",
    ];
    args.extend(llm);
    // One worker keeps the request order fixed; the second request finds no server.
    let o = groundplan(tmp.path(), &args);
    assert_exit(&o, 0);
    server.join().unwrap();
    let tape: Vec<Exchange> =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("tape.json")).unwrap()).unwrap();
    assert_eq!(tape.len(), 1);

    let mut args = vec![
        "--out",
        "replay",
        "eval",
        "suite/manifest.json",
        "--cassette",
        "tape.json",
    ];
    args.extend(llm);
    let o = groundplan(tmp.path(), &args);
    assert_exit(&o, 0);
    let report = |d: &str| -> SuiteReport {
        serde_json::from_str(&fs::read_to_string(tmp.path().join(d).join("report.json")).unwrap())
            .unwrap()
    };
    let (live, replay) = (report("live"), report("replay"));
    let ok = |r: &SuiteReport| {
        r.rows[0]
            .problems
            .iter()
            .map(|p| p.success)
            .collect::<Vec<_>>()
    };
    assert_eq!(ok(&live), vec![true, false]);
    assert_eq!(ok(&replay), vec![true, false]);
}
