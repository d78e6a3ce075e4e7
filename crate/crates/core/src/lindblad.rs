//! Two-site dissipators, full periodic Liouvillians and their exponentials.

use std::fmt;
use std::str::FromStr;

use crate::chanrep::Superoperator;
use crate::engine::{Block, PairEngine};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::linalg::{ensure_finite, ensure_square, ipow, kron, Mat};

/// Largest superoperator side built by default (six qubits).
pub const DEFAULT_SIDE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Kitaev,
    Pspl,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Kitaev => "kitaev",
            ModelKind::Pspl => "pspl",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kitaev" => Ok(ModelKind::Kitaev),
            "pspl" => Ok(ModelKind::Pspl),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

/// Translation-invariant nearest-neighbour dissipative model.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    kind: Option<ModelKind>,
    gamma: f64,
    jump_ops: Vec<Mat>,
    local_dim: usize,
}

impl LindbladModel {
    pub fn new(kind: ModelKind, gamma: f64) -> Result<Self> {
        Ok(Self {
            kind: Some(kind),
            gamma,
            jump_ops: jump_operators(kind, gamma)?,
            local_dim: 2,
        })
    }

    /// Arbitrary real two-site jump operators.
    pub fn custom(jump_ops: Vec<Mat>, local_dim: usize) -> Result<Self> {
        let p = local_dim * local_dim;
        for l in &jump_ops {
            if l.nrows() != p || l.ncols() != p {
                return Err(Error::Shape(format!(
                    "jump operator must be {p}x{p}, got {}x{}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            ensure_finite(l, "jump operator")?;
        }
        Ok(Self {
            kind: None,
            gamma: 1.0,
            jump_ops,
            local_dim,
        })
    }

    pub fn kind(&self) -> Option<ModelKind> {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn jump_ops(&self) -> &[Mat] {
        &self.jump_ops
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn dissipator(&self) -> Dissipator {
        local_dissipator(&self.jump_ops, self.local_dim).expect("jump operators validated")
    }
}

/// Jump operators of the named models. Both act on a pair of qubits.
///
/// Kitaev wire: `sqrt(g)/4 (a^+ x 1 + 1 x a^+)(a x 1 - 1 x a)` with
/// `a = [[0,1],[0,0]]`. PSPL: `sqrt(g)(X x 1 - 1 x X)`, `sqrt(g)(Z x 1 - 1 x Z)`.
pub fn jump_operators(kind: ModelKind, gamma: f64) -> Result<Vec<Mat>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let g = gamma.sqrt();
    let id = Mat::identity(2, 2);
    Ok(match kind {
        ModelKind::Kitaev => {
            let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
            let ad = a.transpose();
            let create = kron(&ad, &id) + kron(&id, &ad);
            let annihilate = kron(&a, &id) - kron(&id, &a);
            vec![create * annihilate * (g / 4.0)]
        }
        ModelKind::Pspl => {
            let x = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
            let z = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
            vec![
                (kron(&x, &id) - kron(&id, &x)) * g,
                (kron(&z, &id) - kron(&id, &z)) * g,
            ]
        }
    })
}

/// Vectorized two-site generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Dissipator {
    matrix: Mat,
    local_dim: usize,
}

impl Dissipator {
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }
}

/// `sum_k L kron L - (L^T L kron 1 + 1 kron L^T L) / 2`.
pub fn local_dissipator(jump_ops: &[Mat], local_dim: usize) -> Result<Dissipator> {
    let p = local_dim * local_dim;
    let id = Mat::identity(p, p);
    let mut d = Mat::zeros(p * p, p * p);
    for l in jump_ops {
        if ensure_square(l, "jump operator")? != p {
            return Err(Error::Shape(format!("jump operator must be {p}x{p}")));
        }
        let ltl = l.transpose() * l;
        d += kron(l, l) - (kron(&ltl, &id) + kron(&id, &ltl)) * 0.5;
    }
    Ok(Dissipator {
        matrix: d,
        local_dim,
    })
}

/// Sum of the pair generators over all `N` bonds of a ring.
#[derive(Clone, Debug)]
pub struct FullLiouvillian {
    matrix: Mat,
    model: LindbladModel,
    sites: usize,
}

impl FullLiouvillian {
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    pub fn sites(&self) -> usize {
        self.sites
    }
}

fn check_sites(sites: usize, local_dim: usize, cap: usize) -> Result<usize> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "site count must be even and at least 2, got {sites}"
        )));
    }
    let side = ipow(local_dim, 2 * sites)?;
    if side > cap {
        return Err(Error::MemoryCap { side, cap });
    }
    Ok(side)
}

/// `L M` for the ring Liouvillian, without forming `L`.
pub(crate) fn apply_liouvillian(engine: &PairEngine, dhat: &[f64], src: &Block) -> Block {
    let mut out = Block::zeros(src.rows, src.cols);
    for offset in 0..2 {
        let local = engine.gather(offset, src);
        let mut acc = Block::zeros(src.rows, src.cols);
        for slot in 0..engine.slots {
            engine.apply_slot(dhat, slot, &local, &mut acc, true);
        }
        engine.scatter_add(offset, &acc, &mut out);
    }
    out
}

pub fn full_liouvillian(model: &LindbladModel, sites: usize) -> Result<FullLiouvillian> {
    full_liouvillian_with_cap(model, sites, DEFAULT_SIDE_CAP)
}

pub fn full_liouvillian_with_cap(
    model: &LindbladModel,
    sites: usize,
    cap: usize,
) -> Result<FullLiouvillian> {
    let side = check_sites(sites, model.local_dim(), cap)?;
    let engine = PairEngine::new(sites, model.local_dim())?;
    let dhat = Block::from_mat(model.dissipator().matrix()).data;
    let l = apply_liouvillian(&engine, &dhat, &Block::identity(side));
    Ok(FullLiouvillian {
        matrix: l.to_mat(),
        model: model.clone(),
        sites,
    })
}

/// `exp(tau L)` on `N` sites.
pub fn exact_propagator(model: &LindbladModel, tau: f64, sites: usize) -> Result<Superoperator> {
    exact_propagator_with_cap(model, tau, sites, DEFAULT_SIDE_CAP)
}

/// Sides up to this use dense Pade; larger ones use the structured series.
const DENSE_EXPM_SIDE: usize = 256;

pub fn exact_propagator_with_cap(
    model: &LindbladModel,
    tau: f64,
    sites: usize,
    cap: usize,
) -> Result<Superoperator> {
    let side = check_sites(sites, model.local_dim(), cap)?;
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    let m = if side <= DENSE_EXPM_SIDE {
        expm(&(full_liouvillian_with_cap(model, sites, cap)?.matrix * tau))?
    } else {
        structured_propagator(model, tau, sites)?.to_mat()
    };
    Superoperator::new(m, sites, model.local_dim())
}

// Truncation of the scaled series: 1/19! < 1e-17 once the 1-norm is <= 1.
const SERIES_DEGREE: usize = 18;

/// Scaled Taylor series `exp(A/2^j)` applied to the identity through the
/// structured Liouvillian action, followed by `j` dense squarings.
pub(crate) fn structured_propagator(model: &LindbladModel, tau: f64, sites: usize) -> Result<Block> {
    let engine = PairEngine::new(sites, model.local_dim())?;
    let side = engine.side;
    let dhat = Block::from_mat(model.dissipator().matrix()).data;
    let l = apply_liouvillian(&engine, &dhat, &Block::identity(side));
    let mut col_sums = vec![0.0f64; side];
    for row in l.data.chunks(side) {
        for (s, x) in col_sums.iter_mut().zip(row) {
            *s += x.abs();
        }
    }
    let norm = tau.abs() * col_sums.iter().copied().fold(0.0, f64::max);
    let squarings = if norm > 1.0 { norm.log2().ceil() as u32 } else { 0 };
    let h = tau / 2f64.powi(squarings as i32);

    // Horner: T = I + A (I + A/2 (I + ... (I + A/q))).
    let mut t = Block::identity(side);
    for k in (1..=SERIES_DEGREE).rev() {
        let mut next = apply_liouvillian(&engine, &dhat, &t);
        next.scale(h / k as f64);
        for i in 0..side {
            next.data[i * side + i] += 1.0;
        }
        t = next;
    }
    for _ in 0..squarings {
        t = t.matmul(&t);
    }
    if t.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("structured propagator"));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanrep::{choi_to_kraus, superop_to_choi};

    fn vec_identity(dim: usize) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_fn(dim * dim, |i, _| if i % (dim + 1) == 0 { 1.0 } else { 0.0 })
    }

    #[test]
    fn jump_operator_entries() {
        let k = jump_operators(ModelKind::Kitaev, 1.0).unwrap();
        assert_eq!(k.len(), 1);
        assert!(k[0].iter().all(|&x| [0.0, 0.25, -0.25].contains(&x)));
        assert!(k[0].iter().any(|&x| x != 0.0));
        let k4 = jump_operators(ModelKind::Kitaev, 4.0).unwrap();
        assert_eq!(k4[0], &k[0] * 2.0);
        let p = jump_operators(ModelKind::Pspl, 1.0).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0].iter().all(|&x| [-1.0, 0.0, 1.0].contains(&x)));
        // Z x 1 - 1 x Z = diag(0, 2, -2, 0).
        assert_eq!(p[1], Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 2.0, -2.0, 0.0])));
        assert!(jump_operators(ModelKind::Pspl, 0.0).is_err());
        assert!("ising".parse::<ModelKind>().is_err());
        assert_eq!("PSPL".parse::<ModelKind>().unwrap(), ModelKind::Pspl);
    }

    #[test]
    fn empty_jump_list_gives_zero() {
        assert_eq!(local_dissipator(&[], 2).unwrap().matrix(), &Mat::zeros(16, 16));
        let m = LindbladModel::custom(vec![], 2).unwrap();
        let s = exact_propagator(&m, 0.7, 4).unwrap();
        assert_eq!(s.matrix(), &Mat::identity(256, 256));
    }

    #[test]
    fn dissipators_preserve_trace() {
        let v = vec_identity(4);
        for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
            let d = LindbladModel::new(kind, 1.0).unwrap().dissipator();
            let e = expm(d.matrix()).unwrap();
            assert!((e.transpose() * &v - &v).amax() < 1e-12);
        }
    }

    #[test]
    fn pspl_dissipator_spectrum_is_real_and_nonpositive() {
        let d = LindbladModel::new(ModelKind::Pspl, 1.0).unwrap().dissipator();
        for ev in d.matrix().complex_eigenvalues().iter() {
            assert!(ev.im.abs() < 1e-10);
            assert!(ev.re < 1e-10);
        }
    }

    #[test]
    fn two_site_choi_is_psd() {
        for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
            let model = LindbladModel::new(kind, 1.0).unwrap();
            for tau in [0.1, 0.5, 1.0] {
                let s = Superoperator::new(expm(&(model.dissipator().matrix() * tau)).unwrap(), 2, 2)
                    .unwrap();
                let c = superop_to_choi(&s).unwrap();
                assert!(*c.eigenvalues().last().unwrap() >= -1e-10);
                assert!(choi_to_kraus(&c, 16).is_ok());
            }
        }
    }

    /// Dense `L^[l,l+1]` on the full ring, built from index arithmetic.
    fn embedded_jump(l: &Mat, sites: usize, a: usize, b: usize) -> Mat {
        let dim = 1usize << sites;
        let bit = |x: usize, site: usize| (x >> (sites - 1 - site)) & 1;
        Mat::from_fn(dim, dim, |s, t| {
            for site in 0..sites {
                if site != a && site != b && bit(s, site) != bit(t, site) {
                    return 0.0;
                }
            }
            l[(bit(s, a) * 2 + bit(s, b), bit(t, a) * 2 + bit(t, b))]
        })
    }

    fn explicit_liouvillian(model: &LindbladModel, sites: usize) -> Mat {
        let dim = 1usize << sites;
        let id = Mat::identity(dim, dim);
        let mut out = Mat::zeros(dim * dim, dim * dim);
        for site in 0..sites {
            for l in model.jump_ops() {
                let big = embedded_jump(l, sites, site, (site + 1) % sites);
                let btb = big.transpose() * &big;
                out += kron(&big, &big) - (kron(&btb, &id) + kron(&id, &btb)) * 0.5;
            }
        }
        out
    }

    #[test]
    fn liouvillian_matches_explicit_construction() {
        for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
            let model = LindbladModel::new(kind, 1.0).unwrap();
            for sites in [2, 4] {
                let l = full_liouvillian(&model, sites).unwrap();
                let reference = explicit_liouvillian(&model, sites);
                assert!((l.matrix() - reference).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn propagators_preserve_trace_and_compose() {
        for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
            let model = LindbladModel::new(kind, 1.0).unwrap();
            for sites in [2, 4] {
                for tau in [0.1, 0.5, 1.0] {
                    let s = exact_propagator(&model, tau, sites).unwrap();
                    assert!(s.trace_defect() < 1e-10);
                }
                let a = exact_propagator(&model, 0.3, sites).unwrap();
                let b = exact_propagator(&model, 0.45, sites).unwrap();
                let ab = exact_propagator(&model, 0.75, sites).unwrap();
                assert!((a.matrix() * b.matrix() - ab.matrix()).norm() < 1e-10);
                let zero = exact_propagator(&model, 0.0, sites).unwrap();
                let side = zero.side();
                assert!((zero.matrix() - Mat::identity(side, side)).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn structured_series_matches_pade() {
        for kind in [ModelKind::Kitaev, ModelKind::Pspl] {
            let model = LindbladModel::new(kind, 1.0).unwrap();
            let dense = exact_propagator(&model, 1.0, 4).unwrap();
            let series = structured_propagator(&model, 1.0, 4).unwrap().to_mat();
            assert!((dense.matrix() - series).norm() < 1e-11);
        }
    }

    #[test]
    fn dissipator_exponential_matches_scaled_taylor() {
        let d = LindbladModel::new(ModelKind::Pspl, 1.0).unwrap().dissipator();
        let a = d.matrix() * 0.8;
        // 2^-6 scaling, 200 terms, then squaring back.
        let small = &a / 64.0;
        let mut term = Mat::identity(16, 16);
        let mut acc = Mat::identity(16, 16);
        for k in 1..200 {
            term = &term * &small / k as f64;
            acc += &term;
        }
        for _ in 0..6 {
            acc = &acc * &acc;
        }
        let e = expm(&a).unwrap();
        assert!((e - &acc).norm() < 1e-11 * acc.norm());
        let diag = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -1.5]));
        let ed = expm(&diag).unwrap();
        assert!((ed[(0, 0)] - 0.5f64.exp()).abs() < 1e-14 && (ed[(1, 1)] - (-1.5f64).exp()).abs() < 1e-14);
        assert_eq!(expm(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3, 3));
    }

    #[test]
    fn memory_cap_enforced() {
        let model = LindbladModel::new(ModelKind::Pspl, 1.0).unwrap();
        assert!(matches!(
            full_liouvillian_with_cap(&model, 4, 100),
            Err(Error::MemoryCap { side: 256, cap: 100 })
        ));
        assert!(matches!(
            exact_propagator(&model, 1.0, 8),
            Err(Error::MemoryCap { .. })
        ));
        assert!(full_liouvillian(&model, 3).is_err());
    }
}
