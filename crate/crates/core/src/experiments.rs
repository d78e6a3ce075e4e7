//! Studies built on the optimizer: rank tables, average-error curves,
//! embedding into larger rings, metric comparison and convergence in the
//! number of time steps.
//!
//! Every study is a pure function of its arguments. Independent cells run in
//! parallel and are collected in input order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chanrep::{choi_rank, vec_row, Superoperator, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::lindblad::{exact_propagator, LindbladModel};
use crate::linalg::{ipow, Mat};
use crate::optimizer::{
    trust_region_run_with, DirectionKind, HessianMethod, Objective, OptimRecord,
    TrustRegionConfig,
};
use crate::splitting::{
    build_ansatz, build_trotter_layers, compose_global, layer_schedule, trotter_superop,
    IsometryVector,
};
use crate::stiefel::MetricParams;

/// `A A^T / tr(A A^T)` for a standard normal `dim x dim` matrix `A`.
pub fn random_density_matrix(dim: usize, seed: u64) -> Mat {
    density_matrix_from(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `n` density matrices drawn in sequence from one stream, so a shorter run
/// is a prefix of a longer one.
pub fn sample_density_matrices(dim: usize, n: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| density_matrix_from(dim, &mut rng)).collect()
}

fn density_matrix_from(dim: usize, rng: &mut ChaCha8Rng) -> Mat {
    let a = Mat::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let rho = &a * a.transpose();
    let tr = rho.trace();
    rho / tr
}

/// Mean of `||S(rho) - E(rho)||_F` over random density matrices.
pub fn average_error(
    scheme: &Superoperator,
    reference: &Superoperator,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if scheme.side() != reference.side() {
        return Err(Error::Shape(format!(
            "superoperator sides {} and {} differ",
            scheme.side(),
            reference.side()
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("at least one sample required".into()));
    }
    let diff = scheme.matrix() - reference.matrix();
    let dim = ipow(scheme.local_dim(), scheme.sites())?;
    let total: f64 = sample_density_matrices(dim, n_samples, seed)
        .iter()
        .map(|rho| {
            let v = nalgebra::DVector::from_vec(vec_row(rho)?);
            Ok((&diff * v).norm())
        })
        .sum::<Result<f64>>()?;
    Ok(total / n_samples as f64)
}

/// Settings shared by the studies.
#[derive(Clone, Copy, Debug)]
pub struct StudyOptions {
    pub sites: usize,
    pub choi_tol: f64,
    pub metric: MetricParams,
    pub directions: DirectionKind,
    pub hessian: HessianMethod,
    pub trust_region: TrustRegionConfig,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            sites: 4,
            choi_tol: DEFAULT_RANK_TOL,
            metric: MetricParams::canonical(),
            directions: DirectionKind::Canonical,
            hessian: HessianMethod::Analytic,
            trust_region: TrustRegionConfig::default(),
        }
    }
}

/// Rank-`rank` compression of the exact Trotter layers.
pub fn initial_point(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    rank: usize,
) -> Result<IsometryVector> {
    let max = ipow(model.local_dim(), 4)?;
    if rank == 0 || rank > max {
        return Err(Error::InvalidArgument(format!("rank {rank} outside [1, {max}]")));
    }
    let layers = build_trotter_layers(&model.dissipator(), tau, n_tau)?;
    build_ansatz(&layers, rank, &layer_schedule(n_tau)?)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: OptimRecord<IsometryVector>,
    pub initial: IsometryVector,
    /// `||exp(tau L) - S_trotter||_F` at the same step count.
    pub trotter_error: f64,
    pub dof: usize,
}

/// Optimizes the rank-`rank` ansatz against the exact propagator.
pub fn optimize(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    rank: usize,
    iters: usize,
    opts: &StudyOptions,
) -> Result<RunOutcome> {
    optimize_with(model, tau, n_tau, rank, iters, opts, |_, _| {})
}

pub fn optimize_with<F: FnMut(usize, f64)>(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    rank: usize,
    iters: usize,
    opts: &StudyOptions,
    observer: F,
) -> Result<RunOutcome> {
    let exact = exact_propagator(model, tau, opts.sites)?;
    let trotter = trotter_superop(model, tau, n_tau, opts.sites)?;
    let trotter_error = (exact.matrix() - trotter.matrix()).norm();
    let initial = initial_point(model, tau, n_tau, rank)?;
    let objective = Objective::new(&exact, layer_schedule(n_tau)?, rank, opts.metric)?
        .with_directions(opts.directions)
        .with_hessian_method(opts.hessian);
    let cfg = TrustRegionConfig {
        max_outer: iters,
        ..opts.trust_region
    };
    let record = trust_region_run_with(&objective, initial.clone(), &cfg, observer)?;
    Ok(RunOutcome {
        record,
        initial,
        trotter_error,
        dof: objective.dof(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankRow {
    pub rank: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub rank_before: usize,
    pub rank_after: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankStudyResult {
    /// Choi rank of the exact propagator.
    pub exact_rank: usize,
    pub m: usize,
    pub rows: Vec<RankRow>,
}

impl RankStudyResult {
    /// `R^(2m)`, the largest full Choi rank a rank-`R` layer product can have.
    pub fn rank_bound(&self, rank: usize) -> u128 {
        (rank as u128).saturating_pow(2 * self.m as u32)
    }
}

pub fn rank_study(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    ranks: &[usize],
    iters: usize,
    opts: &StudyOptions,
) -> Result<RankStudyResult> {
    let max = ipow(model.local_dim(), 4)?;
    if let Some(r) = ranks.iter().find(|&&r| r < 2 || r > max) {
        return Err(Error::InvalidArgument(format!("rank {r} outside [2, {max}]")));
    }
    let exact = exact_propagator(model, tau, opts.sites)?;
    let exact_rank = choi_rank(&exact, opts.choi_tol)?;
    let rows = ranks
        .par_iter()
        .map(|&rank| {
            let run = optimize(model, tau, n_tau, rank, iters, opts)?;
            let before = compose_global(&run.initial, opts.sites)?;
            let after = compose_global(&run.record.final_point, opts.sites)?;
            Ok(RankRow {
                rank,
                initial_cost: run.record.initial_cost(),
                final_cost: run.record.final_cost(),
                rank_before: choi_rank(&before, opts.choi_tol)?,
                rank_after: choi_rank(&after, opts.choi_tol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankStudyResult {
        exact_rank,
        m: 2 * n_tau + 1,
        rows,
    })
}

/// Full Choi rank of the exact-layer Trotter product for each step count.
pub fn trotter_rank_sweep(
    model: &LindbladModel,
    tau: f64,
    n_taus: &[usize],
    opts: &StudyOptions,
) -> Result<Vec<usize>> {
    n_taus
        .par_iter()
        .map(|&n| choi_rank(&trotter_superop(model, tau, n, opts.sites)?, opts.choi_tol))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub n_tau: usize,
    pub trotter: f64,
    pub riemannian: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<ErrorRow>,
}

/// Average error of Trotter and optimized schemes per step count.
#[allow(clippy::too_many_arguments)]
pub fn error_curve(
    model: &LindbladModel,
    tau: f64,
    rank: usize,
    n_taus: &[usize],
    iters: usize,
    n_samples: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<ErrorCurve> {
    let exact = exact_propagator(model, tau, opts.sites)?;
    let rows = n_taus
        .par_iter()
        .map(|&n_tau| {
            let trotter = trotter_superop(model, tau, n_tau, opts.sites)?;
            let run = optimize(model, tau, n_tau, rank, iters, opts)?;
            let optimized = compose_global(&run.record.final_point, opts.sites)?;
            Ok(ErrorRow {
                n_tau,
                trotter: average_error(&trotter, &exact, n_samples, seed)?,
                riemannian: average_error(&optimized, &exact, n_samples, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve {
        n_samples,
        seed,
        rows,
    })
}

/// Trotter and Riemannian cost at `target_sites`, reusing the layers in `xs`.
pub fn embed_larger_n(
    xs: &IsometryVector,
    model: &LindbladModel,
    tau: f64,
    target_sites: usize,
) -> Result<(f64, f64)> {
    let exact = exact_propagator(model, tau, target_sites)?;
    embed_against(xs, model, tau, &exact)
}

/// As [`embed_larger_n`] with a precomputed exact propagator, whose ring
/// size is the target.
pub fn embed_against(
    xs: &IsometryVector,
    model: &LindbladModel,
    tau: f64,
    exact: &Superoperator,
) -> Result<(f64, f64)> {
    let sites = exact.sites();
    if sites < 4 || sites % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "embedding needs an even ring of at least 4 sites, got {sites}"
        )));
    }
    let trotter = {
        let s = trotter_superop(model, tau, xs.schedule().n_tau(), sites)?;
        (exact.matrix() - s.matrix()).norm()
    };
    let riemannian = {
        let s = compose_global(xs, sites)?;
        (exact.matrix() - s.matrix()).norm()
    };
    Ok((trotter, riemannian))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub n_tau: usize,
    pub sites: usize,
    pub trotter: f64,
    pub riemannian: f64,
}

/// Optimizes at `opts.sites` per step count and evaluates the result there
/// and on each larger ring in `target_sites`.
pub fn embedding_study(
    model: &LindbladModel,
    tau: f64,
    rank: usize,
    n_taus: &[usize],
    iters: usize,
    target_sites: &[usize],
    opts: &StudyOptions,
) -> Result<Vec<EmbeddingRow>> {
    let optimized = n_taus
        .par_iter()
        .map(|&n_tau| optimize(model, tau, n_tau, rank, iters, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (&n_tau, run) in n_taus.iter().zip(&optimized) {
        rows.push(EmbeddingRow {
            n_tau,
            sites: opts.sites,
            trotter: run.trotter_error,
            riemannian: run.record.final_cost(),
        });
    }
    // Large exact propagators are built once and dropped before the next.
    for &sites in target_sites {
        let exact = exact_propagator(model, tau, sites)?;
        for (&n_tau, run) in n_taus.iter().zip(&optimized) {
            let (trotter, riemannian) = embed_against(&run.record.final_point, model, tau, &exact)?;
            rows.push(EmbeddingRow {
                n_tau,
                sites,
                trotter,
                riemannian,
            });
        }
    }
    Ok(rows)
}

/// Metric and tangent-direction combinations compared in the metric study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricVariant {
    EuclideanProjectedUnit,
    EuclideanCanonical,
    CanonicalCanonical,
}

impl MetricVariant {
    pub const ALL: [MetricVariant; 3] = [
        MetricVariant::EuclideanProjectedUnit,
        MetricVariant::EuclideanCanonical,
        MetricVariant::CanonicalCanonical,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricVariant::EuclideanProjectedUnit => "euclidean-projected-unit",
            MetricVariant::EuclideanCanonical => "euclidean-canonical",
            MetricVariant::CanonicalCanonical => "canonical-canonical",
        }
    }

    pub fn metric(self) -> MetricParams {
        match self {
            MetricVariant::CanonicalCanonical => MetricParams::canonical(),
            _ => MetricParams::euclidean(),
        }
    }

    pub fn directions(self) -> DirectionKind {
        match self {
            MetricVariant::EuclideanProjectedUnit => DirectionKind::ProjectedUnit,
            _ => DirectionKind::Canonical,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<K> {
    pub key: K,
    pub costs: Vec<f64>,
}

/// Cost histories of the three metric/direction variants from one start.
pub fn metric_comparison(
    model: &LindbladModel,
    tau: f64,
    n_tau: usize,
    rank: usize,
    iters: usize,
    opts: &StudyOptions,
) -> Result<Vec<Trajectory<MetricVariant>>> {
    MetricVariant::ALL
        .par_iter()
        .map(|&variant| {
            let o = StudyOptions {
                metric: variant.metric(),
                directions: variant.directions(),
                ..*opts
            };
            let run = optimize(model, tau, n_tau, rank, iters, &o)?;
            Ok(Trajectory {
                key: variant,
                costs: run.record.cost_history,
            })
        })
        .collect()
}

/// `f(X^k) / f(X^0)` per step count.
pub fn convergence_study(
    model: &LindbladModel,
    tau: f64,
    rank: usize,
    n_taus: &[usize],
    iters: usize,
    opts: &StudyOptions,
) -> Result<Vec<Trajectory<usize>>> {
    n_taus
        .par_iter()
        .map(|&n_tau| {
            let run = optimize(model, tau, n_tau, rank, iters, opts)?;
            let f0 = run.record.initial_cost();
            Ok(Trajectory {
                key: n_tau,
                costs: run.record.cost_history.iter().map(|c| c / f0).collect(),
            })
        })
        .collect()
}
