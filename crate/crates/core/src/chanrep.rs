//! Channel representations: vectorization, superoperators, Choi matrices,
//! Kraus sets and stacked isometries, plus the leg permutations that move
//! between global and pair-local orderings.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{ensure_square, ipow, kron, split_blocks, stack_blocks, Mat};

/// Choi eigenvalues in `(-CLAMP, 0)` are rounding noise and are zeroed.
pub const CHOI_CLAMP: f64 = 1e-10;
/// Choi eigenvalues below `-CHOI_NEGATIVE` mean the input is not CP.
pub const CHOI_NEGATIVE: f64 = 1e-6;
/// Default relative singular-value threshold for numerical ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Row-major flattening: `vec(A rho B) = (A kron B^T) vec(rho)`.
pub fn vec_row(m: &Mat) -> Result<Vec<f64>> {
    ensure_square(m, "vec_row input")?;
    Ok(m.transpose().as_slice().to_vec())
}

pub fn unvec_row(v: &[f64]) -> Result<Mat> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::Shape(format!(
            "vector of length {} is not a square",
            v.len()
        )));
    }
    Ok(Mat::from_row_slice(d, d, v))
}

/// Real superoperator acting on `N` sites of local dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    matrix: Mat,
    sites: usize,
    local_dim: usize,
}

impl Superoperator {
    pub fn new(matrix: Mat, sites: usize, local_dim: usize) -> Result<Self> {
        let side = ipow(local_dim, 2 * sites)?;
        if matrix.nrows() != side || matrix.ncols() != side {
            return Err(Error::Shape(format!(
                "superoperator on {sites} sites of dim {local_dim} needs side {side}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            sites,
            local_dim,
        })
    }

    pub fn identity(sites: usize, local_dim: usize) -> Result<Self> {
        let side = ipow(local_dim, 2 * sites)?;
        Self::new(Mat::identity(side, side), sites, local_dim)
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn side(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest deviation of `vec(I)^T S` from `vec(I)^T`.
    pub fn trace_defect(&self) -> f64 {
        let dim = ipow(self.local_dim, self.sites).expect("validated at construction");
        let mut worst: f64 = 0.0;
        for col in 0..self.side() {
            let mut s = 0.0;
            for a in 0..dim {
                s += self.matrix[(a * dim + a, col)];
            }
            let target = if col % (dim + 1) == 0 { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
        worst
    }
}

/// Choi matrix of a two-site channel, indexed `((i,k),(j,l))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    matrix: Mat,
}

impl ChoiMatrix {
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    /// Eigenvalues of the symmetrized matrix, largest first.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(crate::linalg::sym(&self.matrix))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Number of eigenvalues above `tol` times the largest.
    pub fn natural_rank(&self, tol: f64) -> usize {
        let ev = self.eigenvalues();
        let top = ev.first().copied().unwrap_or(0.0).abs();
        ev.iter().filter(|&&l| l > tol * top).count()
    }
}

/// Ordered Kraus operators of a two-site channel.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    ops: Vec<Mat>,
}

impl KrausSet {
    pub fn new(ops: Vec<Mat>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(Error::InvalidArgument("empty Kraus set".into()));
        };
        let p = ensure_square(first, "Kraus operator")?;
        if ops.iter().any(|e| e.nrows() != p || e.ncols() != p) {
            return Err(Error::Shape("Kraus operators differ in shape".into()));
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[Mat] {
        &self.ops
    }

    pub fn rank(&self) -> usize {
        self.ops.len()
    }

    /// `sum_q E_q^T E_q`.
    pub fn completeness(&self) -> Mat {
        let p = self.ops[0].nrows();
        self.ops
            .iter()
            .fold(Mat::zeros(p, p), |acc, e| acc + e.transpose() * e)
    }
}

/// Point on the real Stiefel manifold: `X^T X = I_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    matrix: Mat,
}

/// Isometry tolerance used when validating externally supplied points.
pub const ISOMETRY_TOL: f64 = 1e-10;

impl StiefelPoint {
    pub fn new(matrix: Mat) -> Result<Self> {
        if matrix.nrows() < matrix.ncols() {
            return Err(Error::Shape(format!(
                "Stiefel point needs n >= p, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = isometry_defect(&matrix);
        if !(defect <= ISOMETRY_TOL) {
            return Err(Error::NotIsometry(defect));
        }
        Ok(Self { matrix })
    }

    /// Wrap a matrix known to be isometric (retraction output).
    pub(crate) fn from_isometry(matrix: Mat) -> Self {
        debug_assert!(isometry_defect(&matrix) < 1e-8);
        Self { matrix }
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `||X^T X - I||_F`.
pub fn isometry_defect(x: &Mat) -> f64 {
    let p = x.ncols();
    (x.transpose() * x - Mat::identity(p, p)).norm()
}

/// Raw index reshuffle `C[(i,k),(j,l)] = S[(i,j),(k,l)]` with all indices in `0..dim`.
/// It is an involution.
pub fn reshuffle(s: &Mat, dim: usize) -> Result<Mat> {
    let side = dim * dim;
    if s.nrows() != side || s.ncols() != side {
        return Err(Error::Shape(format!(
            "reshuffle with dim {dim} needs side {side}, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let mut c = Mat::zeros(side, side);
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    c[(i * dim + k, j * dim + l)] = s[(i * dim + j, k * dim + l)];
                }
            }
        }
    }
    Ok(c)
}

pub fn superop_to_choi(s: &Superoperator) -> Result<ChoiMatrix> {
    if s.sites() != 2 {
        return Err(Error::InvalidArgument(format!(
            "Choi matrices are two-site only, got {} sites",
            s.sites()
        )));
    }
    let dim = s.local_dim() * s.local_dim();
    Ok(ChoiMatrix {
        matrix: reshuffle(s.matrix(), dim)?,
    })
}

/// Rank-`r` Kraus factorization from the top eigenpairs of the Choi matrix.
pub fn choi_to_kraus(c: &ChoiMatrix, r: usize) -> Result<KrausSet> {
    let side = c.matrix.nrows();
    let p = (side as f64).sqrt().round() as usize;
    if r == 0 || r > side {
        return Err(Error::InvalidArgument(format!(
            "Kraus rank {r} outside [1, {side}]"
        )));
    }
    let asym = (&c.matrix - c.matrix.transpose()).norm();
    if asym > 1e-8 * c.matrix.norm().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "Choi matrix is not symmetric (defect {asym:e})"
        )));
    }
    let eig = SymmetricEigen::new(crate::linalg::sym(&c.matrix));
    let mut order: Vec<usize> = (0..side).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lowest = eig.eigenvalues[order[side - 1]];
    if lowest < -CHOI_NEGATIVE {
        return Err(Error::NotCompletelyPositive(lowest));
    }
    let ops = order[..r]
        .iter()
        .map(|&q| {
            let lambda = eig.eigenvalues[q];
            let w = if lambda > -CHOI_CLAMP { lambda.max(0.0).sqrt() } else { 0.0 };
            let v = eig.eigenvectors.column(q);
            Mat::from_fn(p, p, |i, k| w * v[i * p + k])
        })
        .collect();
    KrausSet::new(ops)
}

/// Vertical stack `[E_1; ...; E_R]`. It is isometric iff the set is complete.
pub fn kraus_to_stiefel(k: &KrausSet) -> Mat {
    stack_blocks(k.ops())
}

/// `Phi = sum_q E_q kron E_q` for the blocks of a stacked matrix.
pub fn channel_from_stack(x: &Mat) -> Result<Mat> {
    let p = x.ncols();
    if p == 0 || x.nrows() % p != 0 {
        return Err(Error::Shape(format!(
            "{}x{} is not a stack of square blocks",
            x.nrows(),
            p
        )));
    }
    Ok(split_blocks(x, p)
        .iter()
        .fold(Mat::zeros(p * p, p * p), |acc, e| acc + kron(e, e)))
}

pub fn stiefel_to_superop(x: &StiefelPoint) -> Result<Superoperator> {
    let p = x.p();
    let d = (p as f64).sqrt().round() as usize;
    if d * d != p {
        return Err(Error::Shape(format!("block size {p} is not d^2")));
    }
    Superoperator::new(channel_from_stack(x.matrix())?, 2, d)
}

/// Permutation of the `2N` legs of a superoperator index.
///
/// Leg `i` of the permuted (local) order is leg `perm[i]` of the source order.
/// Legs are ordered most significant first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LegPermutation {
    perm: Vec<usize>,
    local_dim: usize,
}

impl LegPermutation {
    pub fn new(perm: Vec<usize>, local_dim: usize) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self { perm, local_dim })
    }

    pub fn identity(legs: usize, local_dim: usize) -> Self {
        Self {
            perm: (0..legs).collect(),
            local_dim,
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        Self {
            perm: inv,
            local_dim: self.local_dim,
        }
    }

    /// Permutation whose matrix is `self.as_matrix() * other.as_matrix()`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            perm: self.perm.iter().map(|&i| other.perm[i]).collect(),
            local_dim: self.local_dim,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// For each permuted index, the source index it reads from.
    pub fn index_map(&self) -> Vec<usize> {
        let legs = self.perm.len();
        let d = self.local_dim;
        let side = d.pow(legs as u32);
        let weight: Vec<usize> = (0..legs).map(|g| d.pow((legs - 1 - g) as u32)).collect();
        let mut map = vec![0usize; side];
        let mut digits = vec![0usize; legs];
        for (li, slot) in map.iter_mut().enumerate() {
            let mut rest = li;
            for leg in (0..legs).rev() {
                digits[leg] = rest % d;
                rest /= d;
            }
            *slot = digits
                .iter()
                .zip(&self.perm)
                .map(|(&digit, &g)| digit * weight[g])
                .sum();
        }
        map
    }

    /// 0/1 matrix `P` with `(P v)[i] = v[index_map[i]]`.
    pub fn as_matrix(&self) -> Mat {
        let map = self.index_map();
        let mut p = Mat::zeros(map.len(), map.len());
        for (li, &gi) in map.iter().enumerate() {
            p[(li, gi)] = 1.0;
        }
        p
    }

    /// `P A P^T` by index gathering.
    pub fn conjugate(&self, a: &Mat) -> Mat {
        let map = self.index_map();
        Mat::from_fn(map.len(), map.len(), |i, j| a[(map[i], map[j])])
    }
}

/// Global order `(k_1..k_N, b_1..b_N)` to the pair-local order
/// `(k_a, k_b, b_a, b_b)` per pair. Offset 1 pairs `(2,3), (4,5), ..., (N,1)`.
pub fn global_local_perm(sites: usize, offset: usize, local_dim: usize) -> Result<LegPermutation> {
    if sites == 0 || sites % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "site count must be even and positive, got {sites}"
        )));
    }
    if offset > 1 {
        return Err(Error::InvalidArgument(format!("offset must be 0 or 1, got {offset}")));
    }
    let mut perm = Vec::with_capacity(2 * sites);
    for pair in 0..sites / 2 {
        let a = (2 * pair + offset) % sites;
        let b = (2 * pair + 1 + offset) % sites;
        perm.extend_from_slice(&[a, b, sites + a, sites + b]);
    }
    LegPermutation::new(perm, local_dim)
}

/// Numerical rank of the full-system Choi matrix: singular values above
/// `tol` times the largest.
pub fn choi_rank(s: &Superoperator, tol: f64) -> Result<usize> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance {tol} outside (0,1)")));
    }
    let dim = ipow(s.local_dim(), s.sites())?;
    let c = reshuffle(s.matrix(), dim)?;
    let sv = c.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&x| x > tol * top).count())
}
