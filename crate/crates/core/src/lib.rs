//! Riemannian optimization of Trotter-splitting layers for translation
//! invariant, nearest-neighbour Lindblad dynamics on a ring.
//!
//! Each layer is a two-site channel stored as a stacked Kraus isometry
//! `X = [E_1; ...; E_R]`. The list of isometries is optimized on a product
//! of Stiefel manifolds with a Riemannian trust-region method so that the
//! composed layers approximate `exp(tau L)` in Frobenius norm.

pub mod chanrep;
mod engine;
pub mod error;
pub mod experiments;
pub mod expm;
pub mod lindblad;
pub mod linalg;
pub mod optimizer;
pub mod splitting;
pub mod stiefel;

pub use chanrep::{
    choi_rank, choi_to_kraus, global_local_perm, kraus_to_stiefel, stiefel_to_superop,
    superop_to_choi, unvec_row, vec_row, ChoiMatrix, KrausSet, LegPermutation, StiefelPoint,
    Superoperator,
};
pub use error::{Error, Result};
pub use expm::expm;
pub use lindblad::{
    exact_propagator, full_liouvillian, jump_operators, local_dissipator, Dissipator,
    FullLiouvillian, LindbladModel, ModelKind,
};
pub use linalg::Mat;
pub use splitting::{
    build_ansatz, build_trotter_layers, compose_global, layer_schedule, trotter_error,
    IsometryVector, LayerSchedule, Parity,
};
pub use stiefel::{
    elementary_direction, metric_inner, orthogonal_complement, param_to_tangent, project_normal,
    project_tangent, retract_polar, riemannian_gradient, suboptimal_direction, tangent_to_param,
    MetricParams, TangentBasis,
};
pub use optimizer::{
    tcg_solve, trust_region_run, trust_region_run_with, DirectionKind, HessianMethod, Objective, OptimRecord,
    TrustRegionConfig,
};
