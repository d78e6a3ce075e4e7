//! Geometry of the real Stiefel manifold `St(n, p)`.
//!
//! Tangent vectors are plain `n x p` matrices `Z` with `X^T Z` skew. They
//! are parametrized as `Z = X A + X_perp B` with `A` skew (`p(p-1)/2`
//! upper-triangle coordinates) and `B` arbitrary (`(n-p) p` coordinates,
//! row-major).

use nalgebra::SymmetricEigen;

use crate::chanrep::StiefelPoint;
use crate::error::{Error, Result};
use crate::linalg::{polar_factor, skew, sym, Mat};

/// Metric `g_X(Z, W) = tr Z^T (a0 (I - X X^T) + a1 X X^T) W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricParams {
    alpha0: f64,
    alpha1: f64,
}

impl MetricParams {
    pub fn new(alpha0: f64, alpha1: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha1 > 0.0 && alpha0.is_finite() && alpha1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "metric parameters must be positive, got ({alpha0}, {alpha1})"
            )));
        }
        Ok(Self { alpha0, alpha1 })
    }

    pub fn euclidean() -> Self {
        Self { alpha0: 1.0, alpha1: 1.0 }
    }

    pub fn canonical() -> Self {
        Self { alpha0: 1.0, alpha1: 0.5 }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    /// Squared norms of the elementary A and B directions.
    pub fn weights(&self) -> (f64, f64) {
        (2.0 * self.alpha1, self.alpha0)
    }
}

impl Default for MetricParams {
    fn default() -> Self {
        Self::canonical()
    }
}

/// `(I - X X^T) Y + X skew(X^T Y)`.
pub fn project_tangent(y: &Mat, x: &Mat) -> Mat {
    let xty = x.transpose() * y;
    y - x * sym(&xty)
}

/// `X sym(X^T Y)`.
pub fn project_normal(y: &Mat, x: &Mat) -> Mat {
    x * sym(&(x.transpose() * y))
}

/// `||X^T Z + Z^T X||_F`.
pub fn tangency_defect(z: &Mat, x: &Mat) -> f64 {
    let xtz = x.transpose() * z;
    (&xtz + xtz.transpose()).norm()
}

pub fn metric_inner(z: &Mat, w: &Mat, x: &Mat, params: &MetricParams) -> f64 {
    let xtz = x.transpose() * z;
    let xtw = x.transpose() * w;
    params.alpha0 * z.dot(w) + (params.alpha1 - params.alpha0) * xtz.dot(&xtw)
}

/// Riemannian gradient of the ambient gradient `g` under the metric.
pub fn riemannian_gradient(g: &Mat, x: &Mat, params: &MetricParams) -> Mat {
    let (a0, a1) = (params.alpha0, params.alpha1);
    let c = (1.0 / a1 - 2.0 / a0) / 2.0;
    let xtg = x.transpose() * g;
    g / a0 + x * (&xtg * c) - x * (xtg.transpose() * x.transpose() * x) / (2.0 * a1)
}

/// Polar retraction `U V^T` of `X + Z`.
pub fn retract_polar(x: &StiefelPoint, z: &Mat) -> Result<StiefelPoint> {
    if z.shape() != x.matrix().shape() {
        return Err(Error::Shape("tangent and base point differ in shape".into()));
    }
    if z.iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    Ok(StiefelPoint::from_isometry(polar_factor(&(x.matrix() + z))?))
}

/// Orthonormal completion from the full QR factorization of `[X | I_n]`.
pub fn orthogonal_complement(x: &Mat) -> Mat {
    let (n, p) = x.shape();
    let mut aug = Mat::zeros(n, p + n);
    aug.columns_mut(0, p).copy_from(x);
    aug.columns_mut(p, n).fill_with_identity();
    // Thin QR of an n x (p + n) matrix has a square Q.
    let q = aug.qr().q();
    q.columns(p, n - p).into_owned()
}

/// A second completion: unit eigenvectors of `I - X X^T`.
pub fn orthogonal_complement_eigen(x: &Mat) -> Mat {
    let (n, p) = x.shape();
    let proj = Mat::identity(n, n) - x * x.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = Mat::zeros(n, n - p);
    for (c, &k) in order[..n - p].iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(k));
    }
    out
}

/// Per-layer tangent dimension `p (2n - p - 1) / 2`.
pub fn dof(n: usize, p: usize) -> usize {
    p * (2 * n - p - 1) / 2
}

/// Number of skew coordinates `p (p - 1) / 2`.
pub fn skew_dof(p: usize) -> usize {
    p * (p - 1) / 2
}

/// `(i, j)` with `i < j` for a skew coordinate, row-major upper triangle.
pub fn skew_pair(p: usize, k: usize) -> (usize, usize) {
    let mut k = k;
    for i in 0..p {
        let len = p - 1 - i;
        if k < len {
            return (i, i + 1 + k);
        }
        k -= len;
    }
    unreachable!("skew index out of range")
}

/// Base point with a cached orthogonal completion.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    x: Mat,
    x_perp: Mat,
}

impl TangentBasis {
    pub fn new(x: &Mat) -> Self {
        Self {
            x: x.clone(),
            x_perp: orthogonal_complement(x),
        }
    }

    pub fn with_complement(x: &Mat, x_perp: &Mat) -> Result<Self> {
        let (n, p) = x.shape();
        if x_perp.shape() != (n, n - p) {
            return Err(Error::Shape("complement has the wrong shape".into()));
        }
        Ok(Self {
            x: x.clone(),
            x_perp: x_perp.clone(),
        })
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn x_perp(&self) -> &Mat {
        &self.x_perp
    }

    pub fn dof(&self) -> usize {
        dof(self.x.nrows(), self.x.ncols())
    }

    /// Coordinates of any `n x p` matrix in the elementary basis, reading
    /// `A` from the skew part of `X^T Z`. Exact for tangent inputs.
    pub fn coords(&self, z: &Mat) -> Vec<f64> {
        let p = self.x.ncols();
        let a = skew(&(self.x.transpose() * z));
        let b = self.x_perp.transpose() * z;
        let mut out = Vec::with_capacity(self.dof());
        for i in 0..p {
            for j in i + 1..p {
                out.push(a[(i, j)]);
            }
        }
        for r in 0..b.nrows() {
            for c in 0..p {
                out.push(b[(r, c)]);
            }
        }
        out
    }

    pub fn to_param(&self, z: &Mat) -> Result<Vec<f64>> {
        if z.shape() != self.x.shape() {
            return Err(Error::Shape("tangent and base point differ in shape".into()));
        }
        let defect = tangency_defect(z, &self.x);
        if defect > 1e-10 * z.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not tangent (defect {defect:e})"
            )));
        }
        Ok(self.coords(z))
    }

    pub fn from_param(&self, coords: &[f64]) -> Result<Mat> {
        let (n, p) = self.x.shape();
        if coords.len() != self.dof() {
            return Err(Error::Shape(format!(
                "expected {} coordinates, got {}",
                self.dof(),
                coords.len()
            )));
        }
        let ka = skew_dof(p);
        let mut a = Mat::zeros(p, p);
        for (k, &v) in coords[..ka].iter().enumerate() {
            let (i, j) = skew_pair(p, k);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
        let b = Mat::from_row_slice(n - p, p, &coords[ka..]);
        Ok(&self.x * a + &self.x_perp * b)
    }

    /// Elementary direction `idx` (0-based): `X (E_ij - E_ji)` for the
    /// first `p(p-1)/2`, then `X_perp E_ij`.
    pub fn elementary(&self, idx: usize) -> Result<Mat> {
        let (n, p) = self.x.shape();
        if idx >= self.dof() {
            return Err(Error::InvalidArgument(format!(
                "direction {idx} outside [0, {})",
                self.dof()
            )));
        }
        let mut out = Mat::zeros(n, p);
        let ka = skew_dof(p);
        if idx < ka {
            let (i, j) = skew_pair(p, idx);
            for r in 0..n {
                out[(r, j)] += self.x[(r, i)];
                out[(r, i)] -= self.x[(r, j)];
            }
        } else {
            let k = idx - ka;
            let (i, j) = (k / p, k % p);
            out.set_column(j, &self.x_perp.column(i));
        }
        Ok(out)
    }

    /// Metric squared norm of each elementary direction.
    pub fn weights(&self, params: &MetricParams) -> Vec<f64> {
        let (wa, wb) = params.weights();
        let ka = skew_dof(self.x.ncols());
        (0..self.dof()).map(|i| if i < ka { wa } else { wb }).collect()
    }
}

pub fn tangent_to_param(z: &Mat, x: &Mat, x_perp: &Mat) -> Result<Vec<f64>> {
    TangentBasis::with_complement(x, x_perp)?.to_param(z)
}

pub fn param_to_tangent(coords: &[f64], x: &Mat, x_perp: &Mat) -> Result<Mat> {
    TangentBasis::with_complement(x, x_perp)?.from_param(coords)
}

pub fn elementary_direction(x: &Mat, x_perp: &Mat, idx: usize) -> Result<Mat> {
    TangentBasis::with_complement(x, x_perp)?.elementary(idx)
}

/// `pi_T(E_ij)` for the unit matrix at `(i, j)`.
pub fn suboptimal_direction(x: &Mat, i: usize, j: usize) -> Result<Mat> {
    let (n, p) = x.shape();
    if i >= n || j >= p {
        return Err(Error::InvalidArgument(format!("({i}, {j}) outside {n}x{p}")));
    }
    let mut e = Mat::zeros(n, p);
    e[(i, j)] = 1.0;
    Ok(project_tangent(&e, x))
}

/// Unit-matrix position paired with elementary index `idx`: the skew
/// coordinate `(i, j)` reads entry `(i, j)` of the top block and the `B`
/// coordinate `(a, b)` reads entry `(p + a, b)`.
pub fn unit_position(p: usize, idx: usize) -> (usize, usize) {
    let ka = skew_dof(p);
    if idx < ka {
        skew_pair(p, idx)
    } else {
        let k = idx - ka;
        (p + k / p, k % p)
    }
}
