use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    add_to_universe, assemble, find_exemplar, rng, DomainKind, GeneratedProblem, IxAtom, Placed,
    Universe,
};
use crate::scene::BBox;

pub(crate) const MAX_DISKS: usize = 12;
pub(crate) const MAX_PEGS: usize = 4;

// Pixel layout. Disk rank 1 is the narrowest.
const BASE_Y: f64 = 800.0;
const PEG_W: f64 = 260.0;
const PEG_H: f64 = 20.0;
const DISK_H: f64 = 22.0;
const GAP: f64 = 2.0;
const DISK_W0: f64 = 60.0;
const DISK_DW: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HanoiGoal {
    /// Any other configuration of the disks.
    Random,
    /// The whole tower onto another peg.
    TowerTransfer,
}

struct Geometry {
    d: usize,
    g: usize,
    dw: f64,
    pitch: f64,
}

impl Geometry {
    fn new(d: usize, g: usize) -> Self {
        let dw = if d > 1 {
            DISK_DW.min((PEG_W - DISK_W0 - 10.0) / (d - 1) as f64)
        } else {
            DISK_DW
        };
        Geometry {
            d,
            g,
            dw,
            pitch: if g > 1 {
                400f64.min(980.0 / (g - 1) as f64)
            } else {
                0.0
            },
        }
    }

    fn center(&self, p: usize) -> f64 {
        640.0 + (p as f64 - (self.g - 1) as f64 / 2.0) * self.pitch
    }

    fn peg(&self, p: usize) -> BBox {
        let x = self.center(p);
        BBox::new(x - PEG_W / 2.0, BASE_Y, x + PEG_W / 2.0, BASE_Y + PEG_H)
    }

    fn disk(&self, rank: usize, p: usize, level: usize) -> BBox {
        let w = DISK_W0 + (rank - 1) as f64 * self.dw;
        let x = self.center(p);
        let y1 = BASE_Y - GAP - level as f64 * (DISK_H + GAP);
        BBox::new(x - w / 2.0, y1 - DISK_H, x + w / 2.0, y1)
    }

    /// Objects are pegs `0..g` followed by disks of rank `1..=d`;
    /// `asg[r - 1]` is the peg of rank `r`.
    fn layout(&self, asg: &[usize]) -> (Vec<Placed>, BTreeSet<IxAtom>) {
        let mut objs: Vec<Placed> = (0..self.g)
            .map(|p| Placed {
                ty: "peg".into(),
                query: "peg".into(),
                bbox: self.peg(p),
                phrase: None,
            })
            .collect();
        let disk = |r: usize| self.g + r - 1;
        let mut atoms = BTreeSet::new();
        for r in 1..=self.d {
            let p = asg[r - 1];
            let larger: Vec<usize> = (r + 1..=self.d).filter(|&s| asg[s - 1] == p).collect();
            objs.push(Placed {
                ty: "disk".into(),
                query: "disk".into(),
                bbox: self.disk(r, p, larger.len()),
                phrase: None,
            });
            let below = larger.first().map_or(p, |&s| disk(s));
            atoms.insert(("on", vec![disk(r), below]));
            atoms.insert(("onpeg", vec![disk(r), p]));
            for q in 0..self.g {
                atoms.insert(("smaller", vec![disk(r), q]));
            }
            for s in r + 1..=self.d {
                atoms.insert(("smaller", vec![disk(r), disk(s)]));
            }
        }
        (objs, atoms)
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..self.d).map(|_| rng.random_range(0..self.g)).collect()
    }
}

/// Test scenes start as a tower on one peg; the universe covers towers on
/// every peg.
fn tower_universe(geo: &Geometry, domain: &crate::pddl::Domain) -> Universe {
    let mut u = Universe::new();
    for p in 0..geo.g {
        let (objs, atoms) = geo.layout(&vec![p; geo.d]);
        add_to_universe(&mut u, domain, &objs, &atoms);
    }
    u
}

/// `d` disks stacked on a random one of `g` pegs. Disk and peg names follow
/// raster order, so the narrowest disk of the start tower is `disk1`.
pub fn gen_hanoi(d: usize, g: usize, goal: HanoiGoal, seed: u64) -> GeneratedProblem {
    assert!(
        (1..=MAX_DISKS).contains(&d) && (2..=MAX_PEGS).contains(&g),
        "d in 1..=12, g in 2..=4"
    );
    let domain = DomainKind::Hanoi.domain();
    let geo = Geometry::new(d, g);
    let mut r = rng(seed);
    let start = r.random_range(0..g);
    let init_asg = vec![start; d];
    let target: Vec<usize> = match goal {
        HanoiGoal::TowerTransfer => {
            let mut p = r.random_range(0..g - 1);
            if p >= start {
                p += 1;
            }
            vec![p; d]
        }
        HanoiGoal::Random => loop {
            let t = geo.random(&mut r);
            if t != init_asg {
                break t;
            }
        },
    };
    let (objs, init) = geo.layout(&init_asg);
    let (_, goal_atoms) = geo.layout(&target);
    let goal_lits: Vec<(bool, IxAtom)> = goal_atoms
        .into_iter()
        .filter(|a| a.0 == "on")
        .map(|a| (false, a))
        .collect();
    let u = tower_universe(&geo, &domain);
    let ex = find_exemplar(&domain, &u, &mut r, |r| geo.layout(&geo.random(r)));
    let describe = {
        let lits = goal_lits.clone();
        move |names: &[String]| {
            let parts: Vec<String> = lits
                .iter()
                .map(|(_, a)| format!("{} on {}", names[a.1[0]], names[a.1[1]]))
                .collect();
            format!("rearrange the disks so that {}", parts.join(", "))
        }
    };
    assemble(
        DomainKind::Hanoi,
        &domain,
        seed,
        &objs,
        &init,
        &goal_lits,
        describe,
        ex,
    )
}
