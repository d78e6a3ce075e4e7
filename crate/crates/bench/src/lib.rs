//! Fixtures shared by the kernel benchmarks.

use lindblad_riemann::experiments::initial_point;
use lindblad_riemann::{
    exact_propagator, layer_schedule, IsometryVector, LindbladModel, MetricParams, ModelKind,
    Objective, Result,
};

pub struct Fixture {
    pub objective: Objective,
    pub point: IsometryVector,
}

/// Four-site problem started from the Trotter isometries.
pub fn fixture(kind: ModelKind, tau: f64, n_tau: usize, rank: usize) -> Result<Fixture> {
    let model = LindbladModel::new(kind, 1.0)?;
    let reference = exact_propagator(&model, tau, 4)?;
    let objective = Objective::new(
        &reference,
        layer_schedule(n_tau)?,
        rank,
        MetricParams::canonical(),
    )?;
    let point = initial_point(&model, tau, n_tau, rank)?;
    Ok(Fixture { objective, point })
}
