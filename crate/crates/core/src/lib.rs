//! Grounding object detections into PDDL problems, planning over them and
//! scoring the result.

pub mod bench;
pub mod dcsgg;
pub mod eval;
pub mod goal;
pub mod pddl;
pub mod planner;
pub mod scene;
