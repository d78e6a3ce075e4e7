//! Steihaug-Toint truncated conjugate gradient for
//! `min g^T z + z^T H z / 2` subject to `||z|| <= delta`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcgParams {
    pub kappa: f64,
    pub theta: f64,
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcgStop {
    ZeroGradient,
    NegativeCurvature,
    ExceededRadius,
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct TcgResult {
    pub step: DVector<f64>,
    pub stop: TcgStop,
    pub iterations: usize,
    /// `m(0) - m(step)`.
    pub model_decrease: f64,
}

impl TcgResult {
    pub fn on_boundary(&self) -> bool {
        matches!(self.stop, TcgStop::NegativeCurvature | TcgStop::ExceededRadius)
    }
}

/// Quadratic model value `g^T z + z^T H z / 2`.
pub fn model_value(g: &DVector<f64>, h: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    g.dot(z) + 0.5 * z.dot(&(h * z))
}

/// Positive `t` with `||z + t d|| = delta`.
fn to_boundary(z: &DVector<f64>, d: &DVector<f64>, delta: f64) -> f64 {
    let dd = d.dot(d);
    let zd = z.dot(d);
    let zz = z.dot(z);
    let disc = (zd * zd + dd * (delta * delta - zz)).max(0.0);
    (-zd + disc.sqrt()) / dd
}

pub fn tcg_solve(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    delta: f64,
    params: &TcgParams,
) -> Result<TcgResult> {
    let n = g.len();
    if h.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Hessian is {}x{}, gradient has length {n}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {delta}")));
    }
    if g.iter().chain(h.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("trust-region subproblem"));
    }
    let finish = |z: DVector<f64>, stop, iterations| {
        let model_decrease = -model_value(g, h, &z);
        Ok(TcgResult {
            step: z,
            stop,
            iterations,
            model_decrease,
        })
    };

    let mut z = DVector::zeros(n);
    let mut r = g.clone();
    let r0 = r.norm();
    if r0 == 0.0 {
        return finish(z, TcgStop::ZeroGradient, 0);
    }
    let target = r0 * params.kappa.min(r0.powf(params.theta));
    let mut d = -&r;
    let mut rr = r.dot(&r);
    for it in 0..params.max_iter {
        let hd = h * &d;
        let curvature = d.dot(&hd);
        if curvature <= 0.0 {
            let t = to_boundary(&z, &d, delta);
            z += &d * t;
            return finish(z, TcgStop::NegativeCurvature, it + 1);
        }
        let alpha = rr / curvature;
        let trial = &z + &d * alpha;
        if trial.norm() >= delta {
            let t = to_boundary(&z, &d, delta);
            z += &d * t;
            return finish(z, TcgStop::ExceededRadius, it + 1);
        }
        z = trial;
        r += &hd * alpha;
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            return finish(z, TcgStop::Converged, it + 1);
        }
        d = -&r + &d * (rr_new / rr);
        rr = rr_new;
    }
    finish(z, TcgStop::MaxIterations, params.max_iter)
}
