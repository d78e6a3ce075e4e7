//! `f(X) = ||E - S(X)||_F` with exact first and second derivatives.
//!
//! The gradient is a reverse sweep over the layer product. Hessian columns
//! are forward-mode derivatives of that reverse sweep, so each column costs a
//! small constant number of layer applications instead of two gradients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chanrep::{channel_from_stack, Superoperator};
use crate::engine::{Block, PairEngine};
use crate::error::{Error, Result};
use crate::linalg::{kron, split_blocks, stack_blocks, Mat};
use crate::splitting::{IsometryVector, LayerSchedule};
use crate::stiefel::{
    dof, project_tangent, riemannian_gradient, suboptimal_direction, unit_position,
    MetricParams, TangentBasis,
};

use super::trust_region::{LocalModel, TrustRegionProblem};

/// Below this cost the unsquared norm is treated as non-differentiable.
pub const DEGENERATE_COST: f64 = 1e-14;
/// Default cap on the dense Hessian dimension.
pub const DEFAULT_DOF_CAP: usize = 2000;

/// Tangent directions used for the Hessian columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionKind {
    /// `X (E_ij - E_ji)` and `X_perp E_ij`.
    #[default]
    Canonical,
    /// `pi_T(E_rc)` for unit matrices placed at the positions of the
    /// canonical coordinates. The gradient keeps the canonical basis, so the
    /// quadratic model is only an approximation.
    ProjectedUnit,
}

/// How `D grad f [Z]` is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HessianMethod {
    /// Forward-mode differentiation of the gradient sweep.
    Analytic,
    /// Central differences of the Riemannian gradient field with step
    /// `step * (1 + ||X||)`.
    FiniteDifference { step: f64 },
}

impl Default for HessianMethod {
    fn default() -> Self {
        HessianMethod::Analytic
    }
}

#[derive(Clone, Debug)]
pub struct Objective {
    reference: Block,
    schedule: LayerSchedule,
    sites: usize,
    local_dim: usize,
    rank: usize,
    metric: MetricParams,
    directions: DirectionKind,
    hessian: HessianMethod,
    dof_cap: usize,
    engine: PairEngine,
}

impl Objective {
    pub fn new(
        reference: &Superoperator,
        schedule: LayerSchedule,
        rank: usize,
        metric: MetricParams,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        let engine = PairEngine::new(reference.sites(), reference.local_dim())?;
        Ok(Self {
            reference: Block::from_mat(reference.matrix()),
            schedule,
            sites: reference.sites(),
            local_dim: reference.local_dim(),
            rank,
            metric,
            directions: DirectionKind::Canonical,
            hessian: HessianMethod::Analytic,
            dof_cap: DEFAULT_DOF_CAP,
            engine,
        })
    }

    pub fn with_directions(mut self, directions: DirectionKind) -> Self {
        self.directions = directions;
        self
    }

    pub fn with_hessian_method(mut self, method: HessianMethod) -> Self {
        self.hessian = method;
        self
    }

    pub fn with_dof_cap(mut self, cap: usize) -> Self {
        self.dof_cap = cap;
        self
    }

    pub fn schedule(&self) -> &LayerSchedule {
        &self.schedule
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn metric(&self) -> &MetricParams {
        &self.metric
    }

    pub fn directions(&self) -> DirectionKind {
        self.directions
    }

    fn p(&self) -> usize {
        self.local_dim * self.local_dim
    }

    fn n(&self) -> usize {
        self.rank * self.p()
    }

    /// Total tangent dimension `m p (2n - p - 1) / 2`.
    pub fn dof(&self) -> usize {
        self.schedule.m() * dof(self.n(), self.p())
    }

    fn check(&self, xs: &[Mat]) -> Result<()> {
        if xs.len() != self.schedule.m() {
            return Err(Error::Shape(format!(
                "{} layers for a schedule of {}",
                xs.len(),
                self.schedule.m()
            )));
        }
        if xs.iter().any(|x| x.shape() != (self.n(), self.p())) {
            return Err(Error::Shape(format!(
                "every layer must be {}x{}",
                self.n(),
                self.p()
            )));
        }
        Ok(())
    }

    pub fn cost(&self, xs: &IsometryVector) -> Result<f64> {
        self.cost_of(&xs.matrices())
    }

    /// Cost for arbitrary stacked matrices, isometric or not.
    pub fn cost_of(&self, xs: &[Mat]) -> Result<f64> {
        self.check(xs)?;
        let mut acc = Block::identity(self.engine.side);
        for (x, entry) in xs.iter().zip(self.schedule.entries()) {
            let op = Block::from_mat(&channel_from_stack(x)?).data;
            acc = self.engine.apply_layer(entry.parity.offset(), &op, &acc);
        }
        Ok(acc.sub(&self.reference).norm())
    }

    /// Euclidean gradient of `f` with respect to each stacked layer.
    pub fn ambient_gradient(&self, xs: &IsometryVector) -> Result<Vec<Mat>> {
        self.ambient_gradient_of(&xs.matrices())
    }

    pub fn ambient_gradient_of(&self, xs: &[Mat]) -> Result<Vec<Mat>> {
        let ev = self.evaluate(xs)?;
        Ok(ev.gradients())
    }

    /// Riemannian Hessian applied to one tangent per layer.
    pub fn hess_vec(&self, xs: &IsometryVector, zs: &[Mat]) -> Result<Vec<Mat>> {
        let mats = xs.matrices();
        if zs.len() != mats.len() || zs.iter().zip(&mats).any(|(z, x)| z.shape() != x.shape()) {
            return Err(Error::Shape("one n x p tangent per layer required".into()));
        }
        let ev = self.evaluate(&mats)?;
        let dirs: Vec<Option<Mat>> = zs
            .iter()
            .map(|z| if z.iter().all(|&v| v == 0.0) { None } else { Some(z.clone()) })
            .collect();
        self.riemannian_hvp(&ev, &dirs)
    }

    /// Dense metric Hessian `M_ij = g(E_i, Hess[D_j])` before symmetrization.
    pub fn build_hessian_unsymmetrized(&self, xs: &IsometryVector) -> Result<DMatrix<f64>> {
        let mats = xs.matrices();
        let ev = self.evaluate(&mats)?;
        let bases: Vec<TangentBasis> = mats.iter().map(TangentBasis::new).collect();
        self.hessian_matrix(&ev, &bases)
    }

    /// Symmetrized metric Hessian over the global parametrization.
    pub fn build_hessian(&self, xs: &IsometryVector) -> Result<DMatrix<f64>> {
        let h = self.build_hessian_unsymmetrized(xs)?;
        Ok((&h + h.transpose()) * 0.5)
    }

    fn direction(&self, basis: &TangentBasis, idx: usize) -> Result<Mat> {
        match self.directions {
            DirectionKind::Canonical => basis.elementary(idx),
            DirectionKind::ProjectedUnit => {
                let (r, c) = unit_position(basis.x().ncols(), idx);
                suboptimal_direction(basis.x(), r, c)
            }
        }
    }

    fn hessian_matrix(&self, ev: &Evaluation, bases: &[TangentBasis]) -> Result<DMatrix<f64>> {
        let total = self.dof();
        if total > self.dof_cap {
            return Err(Error::HessianCap {
                dof: total,
                cap: self.dof_cap,
            });
        }
        let per = total / self.schedule.m();
        let weights: Vec<Vec<f64>> = bases.iter().map(|b| b.weights(&self.metric)).collect();
        let columns: Vec<Result<Vec<f64>>> = (0..total)
            .into_par_iter()
            .map(|col| {
                let (layer, idx) = (col / per, col % per);
                let z = self.direction(&bases[layer], idx)?;
                let mut dirs = vec![None; self.schedule.m()];
                dirs[layer] = Some(z);
                let h = self.riemannian_hvp(ev, &dirs)?;
                let mut out = Vec::with_capacity(total);
                for ((hz, basis), w) in h.iter().zip(bases).zip(&weights) {
                    out.extend(basis.coords(hz).iter().zip(w).map(|(c, w)| c * w));
                }
                Ok(out)
            })
            .collect();
        let mut m = DMatrix::zeros(total, total);
        for (j, col) in columns.into_iter().enumerate() {
            m.set_column(j, &DVector::from_vec(col?));
        }
        Ok(m)
    }

    /// Gradient coordinates `c_i = <G, E_i>`, symmetrized Hessian and metric
    /// weights at `xs`.
    pub fn local_model_of(&self, xs: &IsometryVector) -> Result<(LocalModel, Vec<TangentBasis>)> {
        let mats = xs.matrices();
        let ev = self.evaluate(&mats)?;
        let bases: Vec<TangentBasis> = mats.iter().map(TangentBasis::new).collect();
        let grads = ev.gradients();
        let mut gradient = Vec::with_capacity(self.dof());
        let mut weights = Vec::with_capacity(self.dof());
        for ((g, x), basis) in grads.iter().zip(&mats).zip(&bases) {
            // <G, E_i>_e = g(grad f, E_i) = w_i * coord_i(grad f).
            let rg = riemannian_gradient(g, x, &self.metric);
            let w = basis.weights(&self.metric);
            gradient.extend(basis.coords(&rg).iter().zip(&w).map(|(c, w)| c * w));
            weights.extend(w);
        }
        let h = self.hessian_matrix(&ev, &bases)?;
        let model = LocalModel {
            cost: ev.cost,
            gradient: DVector::from_vec(gradient),
            hessian: (&h + h.transpose()) * 0.5,
            weights: DVector::from_vec(weights),
        };
        Ok((model, bases))
    }

    /// Forward pass plus reverse sweep.
    fn evaluate(&self, xs: &[Mat]) -> Result<Evaluation> {
        self.check(xs)?;
        let engine = &self.engine;
        let p = self.p();
        let slots = engine.slots;
        let m = xs.len();
        let offsets: Vec<usize> = self.schedule.entries().iter().map(|e| e.parity.offset()).collect();
        let blocks: Vec<Vec<Mat>> = xs.iter().map(|x| split_blocks(x, p)).collect();
        let phis: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| channel_from_stack(x).map(|c| Block::from_mat(&c).data))
            .collect::<Result<_>>()?;
        let phis_t: Vec<Vec<f64>> = phis.iter().map(|op| transpose_square(op, engine.slot_dim)).collect();

        let mut prefixes = Vec::with_capacity(m + 1);
        prefixes.push(Block::identity(engine.side));
        for a in 0..m {
            let next = engine.apply_layer(offsets[a], &phis[a], &prefixes[a]);
            prefixes.push(next);
        }
        let residual = prefixes[m].sub(&self.reference);
        let cost = residual.norm();
        if !cost.is_finite() {
            return Err(Error::NonFinite("cost"));
        }
        if cost < DEGENERATE_COST {
            return Err(Error::DegenerateCost(cost));
        }

        // Adjoints U_a = (L_{m-1} ... L_{a+1})^T residual, stored in local order.
        let mut adj_local = vec![Block::zeros(0, 0); m];
        let mut u = residual.clone();
        for a in (0..m).rev() {
            adj_local[a] = engine.gather(offsets[a], &u);
            if a > 0 {
                let ops_t = vec![Some(phis_t[a].as_slice()); slots];
                u = engine.scatter(offsets[a], &engine.apply_ops(&adj_local[a], &ops_t));
            }
        }

        let mut partials = Vec::with_capacity(m);
        let mut gammas = Vec::with_capacity(m);
        let mut raw = Vec::with_capacity(m);
        for a in 0..m {
            let r_local = engine.gather(offsets[a], &prefixes[a]);
            let parts: Vec<Block> = (0..slots)
                .map(|s| {
                    let ops: Vec<Option<&[f64]>> = (0..slots)
                        .map(|t| (t != s).then_some(phis[a].as_slice()))
                        .collect();
                    engine.apply_ops(&r_local, &ops)
                })
                .collect();
            let mut gamma = vec![0.0; engine.slot_dim * engine.slot_dim];
            for (s, t) in parts.iter().enumerate() {
                engine.contract_slot(&adj_local[a], t, s, &mut gamma);
            }
            raw.push(chain(&gamma, &blocks[a]));
            gammas.push(gamma);
            partials.push(parts);
        }

        Ok(Evaluation {
            xs: xs.to_vec(),
            blocks,
            offsets,
            phis,
            phis_t,
            prefixes,
            residual,
            cost,
            adj_local,
            partials,
            gammas,
            raw,
        })
    }

    /// Directional derivative of every layer's ambient gradient.
    fn gradient_jvp(&self, ev: &Evaluation, dirs: &[Option<Mat>]) -> Vec<Mat> {
        let engine = &self.engine;
        let slots = engine.slots;
        let sd = engine.slot_dim;
        let m = ev.xs.len();
        let p = self.p();
        let f = ev.cost;

        let dblocks: Vec<Option<Vec<Mat>>> =
            dirs.iter().map(|d| d.as_ref().map(|z| split_blocks(z, p))).collect();
        let dphis: Vec<Option<Vec<f64>>> = dblocks
            .iter()
            .zip(&ev.blocks)
            .map(|(db, b)| {
                db.as_ref().map(|db| {
                    let mut acc = Mat::zeros(sd, sd);
                    for (e, de) in b.iter().zip(db) {
                        acc += kron(de, e) + kron(e, de);
                    }
                    Block::from_mat(&acc).data
                })
            })
            .collect();
        let dphis_t: Vec<Option<Vec<f64>>> = dphis
            .iter()
            .map(|d| d.as_ref().map(|op| transpose_square(op, sd)))
            .collect();

        // Tangent of the prefixes: dR_{a+1} = L_a dR_a + dL_a R_a.
        let mut dprefix: Vec<Option<Block>> = vec![None; m + 1];
        for a in 0..m {
            let mut next = dprefix[a]
                .as_ref()
                .map(|dr| engine.apply_layer(ev.offsets[a], &ev.phis[a], dr));
            if let Some(dphi) = &dphis[a] {
                let mut local = Block::zeros(engine.side, engine.side);
                for (s, part) in ev.partials[a].iter().enumerate() {
                    engine.apply_slot(dphi, s, part, &mut local, true);
                }
                let term = engine.scatter(ev.offsets[a], &local);
                match &mut next {
                    Some(n) => n.add_assign(&term),
                    None => next = Some(term),
                }
            }
            dprefix[a + 1] = next;
        }
        let Some(dres) = dprefix[m].clone() else {
            return vec![Mat::zeros(ev.xs[0].nrows(), p); m];
        };
        let df = ev.residual.dot(&dres) / f;

        let mut out = Vec::with_capacity(m);
        let mut du = dres;
        let mut result = vec![Mat::zeros(0, 0); m];
        for a in (0..m).rev() {
            let du_local = engine.gather(ev.offsets[a], &du);
            let mut dgamma = vec![0.0; sd * sd];
            for (s, part) in ev.partials[a].iter().enumerate() {
                engine.contract_slot(&du_local, part, s, &mut dgamma);
            }
            if let Some(dr) = &dprefix[a] {
                let dr_local = engine.gather(ev.offsets[a], dr);
                for s in 0..slots {
                    let ops: Vec<Option<&[f64]>> = (0..slots)
                        .map(|t| (t != s).then_some(ev.phis[a].as_slice()))
                        .collect();
                    let t = engine.apply_ops(&dr_local, &ops);
                    engine.contract_slot(&ev.adj_local[a], &t, s, &mut dgamma);
                }
            }
            if let Some(dphi) = &dphis[a] {
                if slots > 1 {
                    let r_local = engine.gather(ev.offsets[a], &ev.prefixes[a]);
                    for s in 0..slots {
                        for s2 in (0..slots).filter(|&t| t != s) {
                            let ops: Vec<Option<&[f64]>> = (0..slots)
                                .map(|t| {
                                    if t == s {
                                        None
                                    } else if t == s2 {
                                        Some(dphi.as_slice())
                                    } else {
                                        Some(ev.phis[a].as_slice())
                                    }
                                })
                                .collect();
                            let t = engine.apply_ops(&r_local, &ops);
                            engine.contract_slot(&ev.adj_local[a], &t, s, &mut dgamma);
                        }
                    }
                }
            }
            let mut draw = chain(&dgamma, &ev.blocks[a]);
            if let Some(db) = &dblocks[a] {
                draw += chain(&ev.gammas[a], db);
            }
            result[a] = draw / f - &ev.raw[a] * (df / (f * f));

            if a > 0 {
                let ops_t = vec![Some(ev.phis_t[a].as_slice()); slots];
                let mut next_local = engine.apply_ops(&du_local, &ops_t);
                if let Some(dphi_t) = &dphis_t[a] {
                    for s2 in 0..slots {
                        let ops: Vec<Option<&[f64]>> = (0..slots)
                            .map(|t| {
                                Some(if t == s2 { dphi_t.as_slice() } else { ev.phis_t[a].as_slice() })
                            })
                            .collect();
                        next_local.add_assign(&engine.apply_ops(&ev.adj_local[a], &ops));
                    }
                }
                du = engine.scatter(ev.offsets[a], &next_local);
            }
        }
        out.extend(result);
        out
    }

    /// `D grad f [Z]` as ambient fields, one per layer.
    fn gradient_field_derivative(&self, ev: &Evaluation, dirs: &[Option<Mat>]) -> Result<Vec<Mat>> {
        match self.hessian {
            HessianMethod::Analytic => {
                let dg = self.gradient_jvp(ev, dirs);
                let grads = ev.gradients();
                let (a0, a1) = (self.metric.alpha0(), self.metric.alpha1());
                let c = (1.0 / a1 - 2.0 / a0) / 2.0;
                Ok(dg
                    .iter()
                    .enumerate()
                    .map(|(a, dga)| {
                        let x = &ev.xs[a];
                        let mut dw = riemannian_gradient(dga, x, &self.metric);
                        if let Some(z) = &dirs[a] {
                            let g = &grads[a];
                            dw += (z * (x.transpose() * g) + x * (z.transpose() * g)) * c;
                            dw -= (z * (g.transpose() * x) + x * (g.transpose() * z)) / (2.0 * a1);
                        }
                        dw
                    })
                    .collect())
            }
            HessianMethod::FiniteDifference { step } => {
                let norm = ev.xs.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
                let h = step * (1.0 + norm);
                let shifted = |sign: f64| -> Result<Vec<Mat>> {
                    let xs: Vec<Mat> = ev
                        .xs
                        .iter()
                        .zip(dirs)
                        .map(|(x, d)| match d {
                            Some(z) => x + z * (sign * h),
                            None => x.clone(),
                        })
                        .collect();
                    let g = self.evaluate(&xs)?.gradients();
                    Ok(g.iter()
                        .zip(&xs)
                        .map(|(g, x)| riemannian_gradient(g, x, &self.metric))
                        .collect())
                };
                let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
                Ok(plus
                    .iter()
                    .zip(&minus)
                    .map(|(p, m)| (p - m) / (2.0 * h))
                    .collect())
            }
        }
    }

    /// Riemannian Hessian-vector product with the metric's connection term.
    fn riemannian_hvp(&self, ev: &Evaluation, dirs: &[Option<Mat>]) -> Result<Vec<Mat>> {
        let dw = self.gradient_field_derivative(ev, dirs)?;
        let grads = ev.gradients();
        let (a0, a1) = (self.metric.alpha0(), self.metric.alpha1());
        let kappa = (a0 - a1) / a0;
        Ok(dw
            .iter()
            .enumerate()
            .map(|(a, dwa)| {
                let x = &ev.xs[a];
                let mut h = project_tangent(dwa, x);
                if let (Some(z), true) = (&dirs[a], kappa != 0.0) {
                    let w = riemannian_gradient(&grads[a], x, &self.metric);
                    let inner = (&w * z.transpose() + z * w.transpose()) * x;
                    let normal_free = &inner - x * (x.transpose() * &inner);
                    h += normal_free * kappa;
                }
                h
            })
            .collect())
    }
}

fn transpose_square(op: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = op[i * n + j];
        }
    }
    out
}

/// Pull a gradient with respect to `Phi = sum_q E_q kron E_q` back to the
/// stacked blocks `E_q`.
fn chain(gamma: &[f64], blocks: &[Mat]) -> Mat {
    let p = blocks[0].nrows();
    let pp = p * p;
    let out: Vec<Mat> = blocks
        .iter()
        .map(|e| {
            let mut g = Mat::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    for k in 0..p {
                        for l in 0..p {
                            let v = gamma[(i * p + j) * pp + k * p + l];
                            g[(i, k)] += v * e[(j, l)];
                            g[(j, l)] += v * e[(i, k)];
                        }
                    }
                }
            }
            g
        })
        .collect();
    stack_blocks(&out)
}

struct Evaluation {
    xs: Vec<Mat>,
    blocks: Vec<Vec<Mat>>,
    offsets: Vec<usize>,
    phis: Vec<Vec<f64>>,
    phis_t: Vec<Vec<f64>>,
    prefixes: Vec<Block>,
    residual: Block,
    cost: f64,
    adj_local: Vec<Block>,
    partials: Vec<Vec<Block>>,
    gammas: Vec<Vec<f64>>,
    raw: Vec<Mat>,
}

impl Evaluation {
    fn gradients(&self) -> Vec<Mat> {
        self.raw.iter().map(|g| g / self.cost).collect()
    }
}

impl TrustRegionProblem for Objective {
    type Point = IsometryVector;
    type Frame = Vec<TangentBasis>;

    fn cost(&self, x: &IsometryVector) -> Result<f64> {
        Objective::cost(self, x)
    }

    fn local_model(&self, x: &IsometryVector) -> Result<(LocalModel, Vec<TangentBasis>)> {
        self.local_model_of(x)
    }

    fn retract(
        &self,
        x: &IsometryVector,
        frame: &Vec<TangentBasis>,
        step: &DVector<f64>,
    ) -> Result<IsometryVector> {
        let per = step.len() / x.m();
        let layers = x
            .layers()
            .iter()
            .zip(frame)
            .enumerate()
            .map(|(a, (pt, basis))| {
                let z = basis.from_param(&step.as_slice()[a * per..(a + 1) * per])?;
                crate::stiefel::retract_polar(pt, &z)
            })
            .collect::<Result<Vec<_>>>()?;
        IsometryVector::new(layers, x.schedule().clone())
    }
}
