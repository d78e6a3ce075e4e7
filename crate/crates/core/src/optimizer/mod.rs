//! Cost, derivatives and the trust-region solver.

mod objective;
mod tcg;
mod trust_region;

pub use objective::{DirectionKind, HessianMethod, Objective, DEFAULT_DOF_CAP, DEGENERATE_COST};
pub use tcg::{model_value, tcg_solve, TcgParams, TcgResult, TcgStop};
pub use trust_region::{
    trust_region_run, trust_region_run_with, LocalModel, OptimRecord, StopReason,
    TrustRegionConfig, TrustRegionProblem,
};
