use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::Instant;

use super::task::Task;
use super::{Heuristic, SearchConfig, SearchMode};

pub(crate) enum Outcome {
    Plan(Vec<usize>),
    Unsolvable,
    NodeLimit,
    TimeLimit,
}

pub(crate) struct Stats {
    pub expanded: u64,
}

struct Node {
    parent: u32,
    action: u32,
}

const ROOT: u32 = u32::MAX;

fn extract(nodes: &[Node], mut i: u32) -> Vec<usize> {
    let mut out = Vec::new();
    while nodes[i as usize].parent != ROOT {
        out.push(nodes[i as usize].action as usize);
        i = nodes[i as usize].parent;
    }
    out.reverse();
    out
}

pub(crate) fn search(task: &Task, cfg: &SearchConfig, stats: &mut Stats) -> Outcome {
    let start = Instant::now();
    let truth = task.closure(&task.init);
    if task.is_goal(&truth) {
        return Outcome::Plan(Vec::new());
    }
    let mut seen: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut states: Vec<Vec<u32>> = vec![task.init.clone()];
    let mut nodes = vec![Node {
        parent: ROOT,
        action: 0,
    }];
    seen.insert(task.init.clone(), 0);

    let greedy = cfg.mode == SearchMode::Satisficing;
    let mut fifo: VecDeque<u32> = VecDeque::new();
    let mut heap: BinaryHeap<Reverse<(u64, u64, u32)>> = BinaryHeap::new();
    let mut counter = 0u64;
    if greedy {
        match heuristic(task, cfg.heuristic, &truth) {
            Some(h) => heap.push(Reverse((h, 0, 0))),
            None => return Outcome::Unsolvable,
        }
    } else {
        fifo.push_back(0);
    }

    loop {
        let cur = if greedy {
            heap.pop().map(|Reverse((_, _, n))| n)
        } else {
            fifo.pop_front()
        };
        let Some(cur) = cur else {
            return Outcome::Unsolvable;
        };
        if stats.expanded >= cfg.node_limit {
            return Outcome::NodeLimit;
        }
        if stats.expanded.is_multiple_of(256) && start.elapsed().as_secs_f64() > cfg.time_limit_s {
            return Outcome::TimeLimit;
        }
        stats.expanded += 1;
        let state = states[cur as usize].clone();
        let truth = task.closure(&state);
        for (ai, a) in task.actions.iter().enumerate() {
            if !task.applicable(a, &truth) {
                continue;
            }
            let next = task.apply(a, &state);
            if seen.contains_key(&next) {
                continue;
            }
            let id = nodes.len() as u32;
            nodes.push(Node {
                parent: cur,
                action: ai as u32,
            });
            seen.insert(next.clone(), id);
            let nt = task.closure(&next);
            if task.is_goal(&nt) {
                return Outcome::Plan(extract(&nodes, id));
            }
            if greedy {
                if let Some(h) = heuristic(task, cfg.heuristic, &nt) {
                    counter += 1;
                    heap.push(Reverse((h, counter, id)));
                }
            } else {
                fifo.push_back(id);
            }
            states.push(next);
        }
    }
}

/// `None` marks a dead end.
pub(crate) fn heuristic(task: &Task, h: Heuristic, truth: &[bool]) -> Option<u64> {
    let neg_unsat = task.goal_neg.iter().filter(|&&g| truth[g as usize]).count() as u64;
    match h {
        Heuristic::Blind => Some(u64::from(!task.is_goal(truth))),
        Heuristic::GoalCount => {
            let pos = task
                .goal_pos
                .iter()
                .filter(|&&g| !truth[g as usize])
                .count() as u64;
            Some(pos + neg_unsat)
        }
        Heuristic::AdditiveCost => h_add(task, truth).map(|v| v + neg_unsat),
    }
}

/// Additive delete-relaxation cost of the positive goal atoms. Negative
/// preconditions are ignored; axioms are free.
pub(crate) fn h_add(task: &Task, truth: &[bool]) -> Option<u64> {
    const INF: u64 = u64::MAX;
    let n = task.atoms.len();
    let mut cost = vec![INF; n];
    let mut heap = BinaryHeap::new();
    for (i, &t) in truth.iter().enumerate() {
        if t {
            cost[i] = 0;
            heap.push(Reverse((0u64, i as u32)));
        }
    }
    // Operators: actions first, then axioms.
    let n_act = task.actions.len();
    let total = n_act + task.axioms.len();
    let mut missing: Vec<usize> = Vec::with_capacity(total);
    let mut acc: Vec<u64> = vec![0; total];
    missing.extend(task.actions.iter().map(|a| a.pre_pos.len()));
    missing.extend(task.axioms.iter().map(|a| a.body.len()));
    let fire =
        |op: usize, base: u64, cost: &mut Vec<u64>, heap: &mut BinaryHeap<Reverse<(u64, u32)>>| {
            let (effects, c): (&[u32], u64) = if op < n_act {
                (&task.actions[op].add, base + 1)
            } else {
                (std::slice::from_ref(&task.axioms[op - n_act].head), base)
            };
            for &e in effects {
                if c < cost[e as usize] {
                    cost[e as usize] = c;
                    heap.push(Reverse((c, e)));
                }
            }
        };
    for (op, _) in missing.iter().enumerate().filter(|(_, &m)| m == 0) {
        fire(op, 0, &mut cost, &mut heap);
    }
    while let Some(Reverse((c, p))) = heap.pop() {
        if c > cost[p as usize] {
            continue;
        }
        for &op in &task.op_uses[p as usize] {
            let op = op as usize;
            acc[op] = acc[op].saturating_add(c);
            missing[op] -= 1;
            if missing[op] == 0 {
                fire(op, acc[op], &mut cost, &mut heap);
            }
        }
    }
    let mut sum = 0u64;
    for &g in &task.goal_pos {
        let c = cost[g as usize];
        if c == INF {
            return None;
        }
        sum = sum.saturating_add(c);
    }
    Some(sum)
}
