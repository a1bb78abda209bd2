//! Deconfliction toolkit for linear-dynamics aerial vehicles: STL planning,
//! robustness tubes, and two-stage pairwise collision avoidance.

pub mod campc;
pub mod conflict;
pub mod dynamics;
pub mod harness;
pub mod lp;
pub mod lstm;
pub mod milp;
pub mod planner;
pub mod policies;
pub mod stl;
pub mod trajectory;
