use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    add_to_universe, assemble, find_exemplar, pick, rng, DomainKind, GeneratedProblem, IxAtom,
    Placed, Universe,
};
use crate::scene::BBox;

// Every item and location anchor sits on the line y/H = x/W, so an item's
// unary feature depends on its box size alone.
const ANCHOR0: (f64, f64) = (40.0, 30.0);
const STEP: (f64, f64) = (232.0, 174.0);
const LOCATION: (f64, f64) = (200.0, 150.0);
const GRIPPER: (f64, f64) = (160.0, 200.0);
/// Item offsets inside a location, indexed by item.
const SUBSLOT: [(f64, f64); 3] = [(8.0, 6.0), (56.0, 42.0), (104.0, 78.0)];
/// Item offset inside a carrying gripper.
const HELD: (f64, f64) = (20.0, 15.0);
const HOME: [(f64, f64); 2] = [(1080.0, 20.0), (20.0, 740.0)];

// Object indices.
const GRIPPERS: [usize; 2] = [0, 1];
const VEGETABLES: [usize; 2] = [2, 3];
const BOWLS: [usize; 2] = [6, 7];
const ITEMS: [usize; 3] = [2, 3, 4];
const LOCATIONS: [usize; 3] = [5, 6, 7];

/// Diagonal slot of each location and of each gripper's hover point.
const LOCATION_SLOT: [usize; 3] = [0, 2, 4];
const HOVER_SLOT: [usize; 2] = [1, 3];

struct Item {
    name: &'static str,
    ty: &'static str,
    whole: (f64, f64),
    sliced: (f64, f64),
}

const ITEM_DEFS: [Item; 3] = [
    Item {
        name: "cucumber",
        ty: "vegetable",
        whole: (50.0, 110.0),
        sliced: (120.0, 30.0),
    },
    Item {
        name: "carrot",
        ty: "vegetable",
        whole: (40.0, 96.0),
        sliced: (104.0, 26.0),
    },
    Item {
        name: "knife",
        ty: "tool",
        whole: (28.0, 120.0),
        sliced: (28.0, 120.0),
    },
];

const LOCATION_DEFS: [(&str, &str); 3] = [
    ("cutting_board", "board"),
    ("white_bowl", "container"),
    ("red_bowl", "container"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    At(usize),
    Held(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct State {
    /// Indexed like `ITEMS`.
    place: [Place; 3],
    sliced: [bool; 2],
}

fn anchor(slot: usize) -> (f64, f64) {
    (
        ANCHOR0.0 + slot as f64 * STEP.0,
        ANCHOR0.1 + slot as f64 * STEP.1,
    )
}

fn rect(origin: (f64, f64), size: (f64, f64)) -> BBox {
    BBox::new(origin.0, origin.1, origin.0 + size.0, origin.1 + size.1)
}

impl State {
    fn holder(&self, g: usize) -> Option<usize> {
        (0..3).find(|&i| self.place[i] == Place::Held(g))
    }

    /// All states with at most one item per gripper.
    fn all() -> Vec<State> {
        let places: Vec<Place> = (0..3)
            .map(Place::At)
            .chain((0..2).map(Place::Held))
            .collect();
        let mut out = Vec::new();
        for &a in &places {
            for &b in &places {
                for &c in &places {
                    let place = [a, b, c];
                    let held: Vec<_> = place
                        .iter()
                        .filter(|p| matches!(p, Place::Held(_)))
                        .collect();
                    if held.len() == 2 && held[0] == held[1] {
                        continue;
                    }
                    for s in 0..4 {
                        out.push(State {
                            place,
                            sliced: [s & 1 == 1, s & 2 == 2],
                        });
                    }
                }
            }
        }
        out
    }

    fn random(rng: &mut ChaCha8Rng) -> State {
        let all = State::all();
        all[rng.random_range(0..all.len())].clone()
    }

    fn layout(&self) -> (Vec<Placed>, BTreeSet<IxAtom>) {
        let mut objs = Vec::with_capacity(8);
        let mut atoms = BTreeSet::new();
        for k in 0..GRIPPERS.len() {
            let origin = if self.holder(k).is_some() {
                anchor(HOVER_SLOT[k])
            } else {
                HOME[k]
            };
            objs.push(Placed {
                ty: "gripper".into(),
                query: "robot gripper".into(),
                bbox: rect(origin, GRIPPER),
                phrase: None,
            });
        }
        for (k, def) in ITEM_DEFS.iter().enumerate() {
            let sliced = k < 2 && self.sliced[k];
            let size = if sliced { def.sliced } else { def.whole };
            let origin = match self.place[k] {
                Place::At(l) => {
                    let a = anchor(LOCATION_SLOT[l]);
                    atoms.insert(("at", vec![ITEMS[k], LOCATIONS[l]]));
                    (a.0 + SUBSLOT[k].0, a.1 + SUBSLOT[k].1)
                }
                Place::Held(g) => {
                    let a = anchor(HOVER_SLOT[g]);
                    atoms.insert(("carry", vec![GRIPPERS[g], ITEMS[k]]));
                    (a.0 + HELD.0, a.1 + HELD.1)
                }
            };
            if sliced {
                atoms.insert(("sliced", vec![VEGETABLES[k]]));
            }
            objs.push(Placed {
                ty: def.ty.into(),
                query: def.name.into(),
                bbox: rect(origin, size),
                phrase: Some(def.name.into()),
            });
        }
        for (l, (name, ty)) in LOCATION_DEFS.iter().enumerate() {
            objs.push(Placed {
                ty: (*ty).into(),
                query: name.replace('_', " "),
                bbox: rect(anchor(LOCATION_SLOT[l]), LOCATION),
                phrase: Some((*name).into()),
            });
        }
        (objs, atoms)
    }
}

fn universe(domain: &crate::pddl::Domain) -> Universe {
    let mut u = Universe::new();
    for s in State::all() {
        let (objs, atoms) = s.layout();
        add_to_universe(&mut u, domain, &objs, &atoms);
    }
    u
}

/// Two grippers, two vegetables, a knife, a board and two bowls in a random
/// state. The goal slices one or both vegetables and puts them in a bowl.
pub fn gen_cooking(seed: u64) -> GeneratedProblem {
    let domain = DomainKind::Cooking.domain();
    let mut r = rng(seed);
    let mut init = State::random(&mut r);
    let both = r.random_bool(0.5);
    let first = pick(&mut r, &[0usize, 1]);
    let bowl = pick(&mut r, &[0usize, 1]);
    let vegs: Vec<usize> = if both {
        vec![first, 1 - first]
    } else {
        vec![first]
    };
    let mut goal: Vec<(bool, IxAtom)> = Vec::new();
    for &v in &vegs {
        // Goal vegetables start whole, so the goal never holds initially.
        init.sliced[v] = false;
        goal.push((false, ("sliced", vec![VEGETABLES[v]])));
        goal.push((false, ("in", vec![VEGETABLES[v], BOWLS[bowl]])));
    }
    let bowl_name = LOCATION_DEFS[1 + bowl].0.replace('_', " ");
    let text = if both {
        format!(
            "slice the {} and the {} and put them in the {bowl_name}",
            ITEM_DEFS[vegs[0]].name, ITEM_DEFS[vegs[1]].name
        )
    } else {
        format!(
            "slice the {} and put it in the {bowl_name}",
            ITEM_DEFS[first].name
        )
    };
    let (objs, init_atoms) = init.layout();
    let u = universe(&domain);
    let ex = find_exemplar(&domain, &u, &mut r, |r| State::random(r).layout());
    assemble(
        DomainKind::Cooking,
        &domain,
        seed,
        &objs,
        &init_atoms,
        &goal,
        move |_| text.clone(),
        ex,
    )
}
