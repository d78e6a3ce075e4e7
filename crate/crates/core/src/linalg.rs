//! Small dense helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn frob_dot(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

pub fn one_norm(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn ensure_finite(a: &Mat, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(a: &Mat, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Integer power with overflow check.
pub(crate) fn ipow(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .ok_or_else(|| Error::InvalidArgument(format!("{base}^{exp} overflows")))
}

/// Split a vertically stacked matrix into its `p x p` blocks.
pub fn split_blocks(x: &Mat, p: usize) -> Vec<Mat> {
    (0..x.nrows() / p)
        .map(|q| x.rows(q * p, p).into_owned())
        .collect()
}

pub fn stack_blocks(blocks: &[Mat]) -> Mat {
    let p = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, p);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Nearest isometry `U V^T` from the thin SVD `A = U S V^T` (`n >= p`).
pub fn polar_factor(a: &Mat) -> Result<Mat> {
    if a.nrows() < a.ncols() {
        return Err(Error::Shape(format!(
            "polar factor needs n >= p, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    ensure_finite(a, "polar factor input")?;
    let svd = a.clone().svd(true, true);
    let smallest = svd.singular_values.min();
    let largest = svd.singular_values.max();
    if !(smallest > 1e-12 * largest.max(1.0)) {
        return Err(Error::RankDeficient(smallest));
    }
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Ok(u * vt)
}
