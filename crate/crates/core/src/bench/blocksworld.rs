use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    assemble, feature_key, find_exemplar, rng, DomainKind, GeneratedProblem, IxAtom, Placed,
    Universe,
};
use crate::dcsgg::binary_feature;
use crate::scene::BBox;

// Above 15 blocks the gap between neighbouring stacks drops below half a
// block width.
pub(crate) const MAX_BLOCKS: usize = 15;

const BLOCK: f64 = 48.0;
const GAP: f64 = 2.0;
const TABLE_Y: f64 = 900.0;
const LEFT: f64 = 100.0;
/// Probability that a block starts a new stack while dealing.
const NEW_STACK: f64 = 0.5;

const COLORS: [&str; 12] = [
    "red", "blue", "green", "yellow", "orange", "purple", "pink", "brown", "black", "white",
    "gray", "cyan",
];

fn pitch(n: usize) -> f64 {
    220f64.min(1100.0 / n as f64)
}

fn block_box(n: usize, slot: usize, level: usize) -> BBox {
    let x0 = LEFT + slot as f64 * pitch(n);
    let y1 = TABLE_Y - level as f64 * (BLOCK + GAP);
    BBox::new(x0, y1 - BLOCK, x0 + BLOCK, y1)
}

/// Stacks listed bottom to top, each in its own slot.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Config {
    stacks: Vec<Vec<usize>>,
    slots: Vec<usize>,
}

impl Config {
    fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut stacks: Vec<Vec<usize>> = Vec::new();
        for b in order {
            if stacks.is_empty() || rng.random_bool(NEW_STACK) {
                stacks.push(vec![b]);
            } else {
                let k = rng.random_range(0..stacks.len());
                stacks[k].push(b);
            }
        }
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(rng);
        slots.truncate(stacks.len());
        Config { stacks, slots }
    }

    fn on(&self) -> BTreeSet<IxAtom> {
        self.stacks
            .iter()
            .flat_map(|s| s.windows(2).map(|w| ("on", vec![w[1], w[0]])))
            .collect()
    }

    fn layout(&self, names: &[Option<String>]) -> Vec<Placed> {
        let n = names.len();
        let mut boxes = vec![None; n];
        for (s, &slot) in self.stacks.iter().zip(&self.slots) {
            for (level, &b) in s.iter().enumerate() {
                boxes[b] = Some(block_box(n, slot, level));
            }
        }
        boxes
            .into_iter()
            .zip(names)
            .map(|(b, phrase)| Placed {
                ty: "block".into(),
                query: "block".into(),
                bbox: b.expect("every block is placed"),
                phrase: phrase.clone(),
            })
            .collect()
    }
}

/// Every pair of `(slot, level)` cells that two of `n` blocks can occupy at
/// once: the features any configuration produces.
fn grid_universe(n: usize) -> Universe {
    let mut u = Universe::new();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..n).map(move |l| (s, l))).collect();
    for &(s1, l1) in &cells {
        for &(s2, l2) in &cells {
            let blocks_needed = if s1 == s2 {
                l1.max(l2) + 1
            } else {
                l1 + l2 + 2
            };
            if (s1, l1) == (s2, l2) || blocks_needed > n {
                continue;
            }
            let f = binary_feature(
                &block_box(n, s1, l1),
                &block_box(n, s2, l2),
                super::IMAGE_WIDTH,
                super::IMAGE_HEIGHT,
            );
            u.insert(
                ("on".into(), feature_key(&f)),
                (s1 == s2 && l1 == l2 + 1, f.to_vec()),
            );
        }
    }
    u
}

fn describe(goal: &[(bool, IxAtom)], names: &[String]) -> String {
    let nice = |s: &str| format!("the {}", s.replace('_', " "));
    let parts: Vec<String> = goal
        .iter()
        .map(|(neg, a)| match (neg, a.0) {
            (false, "on") => format!("put {} on {}", nice(&names[a.1[0]]), nice(&names[a.1[1]])),
            _ => format!("leave {} on the table", nice(&names[a.1[0]])),
        })
        .collect();
    parts.join(", ")
}

/// `n` coloured blocks in random stacks. The goal is another random
/// configuration, with table blocks required to be on the table.
pub fn gen_blocksworld(n: usize, seed: u64) -> GeneratedProblem {
    assert!((2..=MAX_BLOCKS).contains(&n), "n in 2..=15");
    let domain = DomainKind::Blocksworld.domain();
    let mut r = rng(seed);
    let mut colors: Vec<&str> = COLORS.to_vec();
    colors.shuffle(&mut r);
    let phrases: Vec<Option<String>> = (0..n)
        .map(|i| {
            Some(match colors.get(i) {
                Some(c) => format!("{c}_block"),
                None => format!("block_{i}"),
            })
        })
        .collect();
    let init = Config::random(n, &mut r);
    let target = loop {
        let t = Config::random(n, &mut r);
        if t.on() != init.on() {
            break t;
        }
    };
    let mut goal: Vec<(bool, IxAtom)> = Vec::new();
    for s in &target.stacks {
        goal.push((true, ("aloft", vec![s[0]])));
        goal.extend(s.windows(2).map(|w| (false, ("on", vec![w[1], w[0]]))));
    }
    let objs = init.layout(&phrases);
    let u = grid_universe(n);
    let unnamed = vec![None; n];
    let ex = find_exemplar(&domain, &u, &mut r, |r| {
        let c = Config::random(n, r);
        (c.layout(&unnamed), c.on())
    });
    let g2 = goal.clone();
    assemble(
        DomainKind::Blocksworld,
        &domain,
        seed,
        &objs,
        &init.on(),
        &goal,
        move |names| describe(&g2, names),
        ex,
    )
}
