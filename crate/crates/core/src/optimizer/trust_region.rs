//! Riemannian trust-region loop over a coordinate chart of the tangent space.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::tcg::{model_value, tcg_solve, TcgParams};

/// Second-order model in elementary-direction coordinates.
///
/// `cost + gradient^T xi + xi^T hessian xi / 2`, where the tangent step is
/// `sum_i xi_i E_i` and its squared metric norm is `sum_i weights_i xi_i^2`.
#[derive(Clone, Debug)]
pub struct LocalModel {
    pub cost: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl LocalModel {
    /// Metric norm of the Riemannian gradient.
    pub fn gradient_norm(&self) -> f64 {
        self.gradient
            .iter()
            .zip(self.weights.iter())
            .map(|(c, w)| c * c / w)
            .sum::<f64>()
            .sqrt()
    }
}

/// A cost on a manifold with a local quadratic model and a retraction.
pub trait TrustRegionProblem {
    type Point: Clone;
    /// Data tying model coordinates to tangent vectors at a point.
    type Frame;

    fn cost(&self, x: &Self::Point) -> Result<f64>;
    fn local_model(&self, x: &Self::Point) -> Result<(LocalModel, Self::Frame)>;
    fn retract(&self, x: &Self::Point, frame: &Self::Frame, step: &DVector<f64>)
        -> Result<Self::Point>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustRegionConfig {
    /// Initial radius; `None` means `0.1 sqrt(DOF)`.
    pub delta0: Option<f64>,
    /// Radius cap; `None` means `sqrt(DOF)`.
    pub delta_max: Option<f64>,
    pub rho_accept: f64,
    /// Accepted steps below this ratio still shrink the radius.
    pub rho_shrink: f64,
    pub rho_good: f64,
    pub shrink: f64,
    pub grow: f64,
    pub max_outer: usize,
    pub cg_kappa: f64,
    pub cg_theta: f64,
    /// Inner iteration cap; `None` means the model dimension.
    pub cg_max_iter: Option<usize>,
    pub grad_tol: f64,
    pub cost_tol: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta0: None,
            delta_max: None,
            rho_accept: 0.1,
            rho_shrink: 0.25,
            rho_good: 0.75,
            shrink: 0.25,
            grow: 2.0,
            max_outer: 100,
            cg_kappa: 0.1,
            cg_theta: 1.0,
            cg_max_iter: None,
            grad_tol: 1e-10,
            cost_tol: 1e-13,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.rho_accept
            && self.rho_accept <= self.rho_shrink
            && self.rho_shrink < self.rho_good
            && self.rho_good < 1.0
            && 0.0 < self.shrink
            && self.shrink < 1.0
            && self.grow > 1.0
            && self.cg_kappa > 0.0
            && self.cg_theta >= 0.0
            && self.delta0.map_or(true, |d| d > 0.0)
            && self.delta_max.map_or(true, |d| d > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid trust-region settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    SmallGradient,
    SmallCost,
}

/// History of a run. Index 0 of every history is the starting point.
#[derive(Clone, Debug)]
pub struct OptimRecord<P> {
    pub cost_history: Vec<f64>,
    /// Ratio of actual to predicted decrease; `NaN` at index 0.
    pub rho_history: Vec<f64>,
    /// Radius after the update of each iteration.
    pub radius_history: Vec<f64>,
    pub accepted: Vec<bool>,
    pub final_point: P,
    pub stop: StopReason,
    pub model_builds: usize,
}

impl<P> OptimRecord<P> {
    pub fn initial_cost(&self) -> f64 {
        self.cost_history[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history starts with the initial cost")
    }

    pub fn iterations(&self) -> usize {
        self.cost_history.len() - 1
    }
}

pub fn trust_region_run<Q: TrustRegionProblem>(
    problem: &Q,
    x0: Q::Point,
    cfg: &TrustRegionConfig,
) -> Result<OptimRecord<Q::Point>> {
    trust_region_run_with(problem, x0, cfg, |_, _| {})
}

/// As [`trust_region_run`], calling `observer(iteration, cost)` after each
/// iteration.
pub fn trust_region_run_with<Q, F>(
    problem: &Q,
    x0: Q::Point,
    cfg: &TrustRegionConfig,
    mut observer: F,
) -> Result<OptimRecord<Q::Point>>
where
    Q: TrustRegionProblem,
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    let mut x = x0;
    let mut f = problem.cost(&x)?;
    let mut record = OptimRecord {
        cost_history: vec![f],
        rho_history: vec![f64::NAN],
        radius_history: Vec::new(),
        accepted: vec![true],
        final_point: x.clone(),
        stop: StopReason::MaxIterations,
        model_builds: 0,
    };
    let mut delta = f64::NAN;
    let mut delta_max = f64::NAN;
    let mut current: Option<(LocalModel, Q::Frame, DVector<f64>)> = None;

    for iter in 1..=cfg.max_outer {
        if f < cfg.cost_tol {
            record.stop = StopReason::SmallCost;
            break;
        }
        if current.is_none() {
            let (model, frame) = problem.local_model(&x)?;
            record.model_builds += 1;
            let scale = model.weights.map(|w| 1.0 / w.sqrt());
            current = Some((model, frame, scale));
        }
        let (model, frame, scale) = current.as_ref().expect("built above");
        let dim = model.gradient.len();
        if delta.is_nan() {
            delta_max = cfg.delta_max.unwrap_or((dim as f64).sqrt());
            delta = cfg.delta0.unwrap_or(0.1 * (dim as f64).sqrt()).min(delta_max);
            record.radius_history.push(delta);
        }
        if model.gradient_norm() < cfg.grad_tol {
            record.stop = StopReason::SmallGradient;
            break;
        }

        // Metric-whitened coordinates y = W^{1/2} xi.
        let g = model.gradient.component_mul(scale);
        let h = DMatrix::from_fn(dim, dim, |i, j| model.hessian[(i, j)] * scale[i] * scale[j]);
        let inner = TcgParams {
            kappa: cfg.cg_kappa,
            theta: cfg.cg_theta,
            max_iter: cfg.cg_max_iter.unwrap_or(dim),
        };
        let sub = tcg_solve(&g, &h, delta, &inner)?;
        let predicted = -model_value(&g, &h, &sub.step);
        let xi = sub.step.component_mul(scale);

        let candidate = match problem.retract(&x, frame, &xi) {
            Ok(c) => Some(c),
            Err(Error::RankDeficient(_)) => None,
            Err(e) => return Err(e),
        };
        let f_new = match &candidate {
            Some(c) => problem.cost(c)?,
            None => f64::INFINITY,
        };
        let rho = if predicted > 0.0 {
            (f - f_new) / predicted
        } else {
            f64::NEG_INFINITY
        };
        let accept = rho >= cfg.rho_accept && f_new <= f;
        if rho < cfg.rho_shrink {
            delta *= cfg.shrink;
        } else if rho > cfg.rho_good && sub.on_boundary() {
            delta = (delta * cfg.grow).min(delta_max);
        }
        if accept {
            x = candidate.expect("accepted steps have a candidate");
            f = f_new;
            current = None;
        }
        record.cost_history.push(f);
        record.rho_history.push(rho);
        record.radius_history.push(delta);
        record.accepted.push(accept);
        observer(iter, f);
    }
    if record.radius_history.is_empty() {
        record.radius_history.push(cfg.delta0.unwrap_or(f64::NAN));
    }
    record.final_point = x;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = c + g^T x + x^T H x / 2` on flat space.
    struct Quadratic {
        c: f64,
        g: DVector<f64>,
        h: DMatrix<f64>,
    }

    impl TrustRegionProblem for Quadratic {
        type Point = DVector<f64>;
        type Frame = ();

        fn cost(&self, x: &DVector<f64>) -> Result<f64> {
            Ok(self.c + model_value(&self.g, &self.h, x))
        }

        fn local_model(&self, x: &DVector<f64>) -> Result<(LocalModel, ())> {
            Ok((
                LocalModel {
                    cost: self.cost(x)?,
                    gradient: &self.g + &self.h * x,
                    hessian: self.h.clone(),
                    weights: DVector::from_element(x.len(), 1.0),
                },
                (),
            ))
        }

        fn retract(&self, x: &DVector<f64>, _: &(), step: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(x + step)
        }
    }

    #[test]
    fn exact_model_gives_unit_ratio() {
        let q = Quadratic {
            c: 5.0,
            g: DVector::from_vec(vec![1.0, -2.0, 0.5]),
            h: DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]),
        };
        let cfg = TrustRegionConfig {
            delta0: Some(0.1),
            max_outer: 30,
            ..Default::default()
        };
        let rec = trust_region_run(&q, DVector::zeros(3), &cfg).unwrap();
        for (&rho, &acc) in rec.rho_history.iter().zip(&rec.accepted).skip(1) {
            assert!((rho - 1.0).abs() < 1e-8, "rho = {rho}");
            assert!(acc);
        }
        let xstar = -q.h.clone().lu().solve(&q.g).unwrap();
        assert!((rec.final_point - xstar).norm() < 1e-8);
        assert_eq!(rec.stop, StopReason::SmallGradient);
    }

    #[test]
    fn indefinite_problem_keeps_monotone_costs() {
        // Unbounded below in one direction; the radius cap limits each step.
        let q = Quadratic {
            c: 0.0,
            g: DVector::from_vec(vec![0.1, 0.2]),
            h: DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        };
        let cfg = TrustRegionConfig {
            max_outer: 10,
            delta_max: Some(2.0),
            cost_tol: f64::NEG_INFINITY,
            ..Default::default()
        };
        let rec = trust_region_run(&q, DVector::zeros(2), &cfg).unwrap();
        assert!(rec.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rec.radius_history.iter().all(|&d| d <= 2.0), "{:?}", rec.radius_history);
        assert_eq!(rec.iterations(), 10);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let q = Quadratic {
            c: 1.0,
            g: DVector::from_vec(vec![1.0]),
            h: DMatrix::identity(1, 1),
        };
        let cfg = TrustRegionConfig {
            max_outer: 0,
            ..Default::default()
        };
        let rec = trust_region_run(&q, DVector::zeros(1), &cfg).unwrap();
        assert_eq!(rec.cost_history, vec![1.0]);
        assert_eq!(rec.final_cost(), rec.initial_cost());
    }

    #[test]
    fn invalid_settings_rejected() {
        let cfg = TrustRegionConfig {
            rho_accept: 0.9,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
