//! Structured kernels for pair layers `P^T (op_1 kron ... kron op_K) P`.
//!
//! A block is a row-major `side x cols` matrix. Gathering its rows by the
//! global-to-local index map puts the slot legs outermost, so applying a
//! two-site operator to slot `s` is a batch of small GEMMs over contiguous
//! memory.

use crate::chanrep::global_local_perm;
use crate::error::Result;
use crate::linalg::{ipow, Mat};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n, n);
        for i in 0..n {
            b.data[i * n + i] = 1.0;
        }
        b
    }

    pub fn from_mat(m: &Mat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// Dense product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            (self.cols, 1),
            &other.data,
            (other.cols, 1),
            0.0,
            &mut out.data,
            (other.cols, 1),
        );
        out
    }
}

/// `c = a * b + beta * c` on strided slices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |r: usize, c: usize, rs: usize, cs: usize| (r - 1) * rs + (c - 1) * cs + 1;
    assert!(c.len() >= extent(m, n, rsc, csc));
    if k > 0 {
        assert!(a.len() >= extent(m, k, rsa, csa));
        assert!(b.len() >= extent(k, n, rsb, csb));
    }
    // SAFETY: all strided extents were checked against the slice lengths
    // above, and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Index maps and slot geometry for one system size.
#[derive(Clone, Debug)]
pub(crate) struct PairEngine {
    pub slot_dim: usize,
    pub slots: usize,
    pub side: usize,
    maps: [Vec<usize>; 2],
}

impl PairEngine {
    pub fn new(sites: usize, local_dim: usize) -> Result<Self> {
        let side = ipow(local_dim, 2 * sites)?;
        let maps = [
            global_local_perm(sites, 0, local_dim)?.index_map(),
            global_local_perm(sites, 1, local_dim)?.index_map(),
        ];
        Ok(Self {
            slot_dim: local_dim.pow(4),
            slots: sites / 2,
            side,
            maps,
        })
    }

    /// Rows in local order: `out[li] = src[map[li]]`.
    pub fn gather(&self, offset: usize, src: &Block) -> Block {
        debug_assert_eq!(src.rows, self.side);
        let c = src.cols;
        let mut out = Block::zeros(src.rows, c);
        for (li, &gi) in self.maps[offset].iter().enumerate() {
            out.data[li * c..(li + 1) * c].copy_from_slice(&src.data[gi * c..(gi + 1) * c]);
        }
        out
    }

    /// Inverse of [`gather`](Self::gather).
    pub fn scatter(&self, offset: usize, src: &Block) -> Block {
        let c = src.cols;
        let mut out = Block::zeros(src.rows, c);
        for (li, &gi) in self.maps[offset].iter().enumerate() {
            out.data[gi * c..(gi + 1) * c].copy_from_slice(&src.data[li * c..(li + 1) * c]);
        }
        out
    }

    pub fn scatter_add(&self, offset: usize, src: &Block, dst: &mut Block) {
        let c = src.cols;
        for (li, &gi) in self.maps[offset].iter().enumerate() {
            for (d, s) in dst.data[gi * c..(gi + 1) * c]
                .iter_mut()
                .zip(&src.data[li * c..(li + 1) * c])
            {
                *d += s;
            }
        }
    }

    /// `dst (+)= op @ slot` for a block in local order; `op` is row-major.
    pub fn apply_slot(&self, op: &[f64], slot: usize, src: &Block, dst: &mut Block, accumulate: bool) {
        let sd = self.slot_dim;
        let left = sd.pow(slot as u32);
        let right = sd.pow((self.slots - 1 - slot) as u32) * src.cols;
        let beta = if accumulate { 1.0 } else { 0.0 };
        for l in 0..left {
            let off = l * sd * right;
            let len = sd * right;
            gemm(
                sd,
                sd,
                right,
                op,
                (sd, 1),
                &src.data[off..off + len],
                (right, 1),
                beta,
                &mut dst.data[off..off + len],
                (right, 1),
            );
        }
    }

    /// Apply the present operators slot by slot to a local-order block.
    pub fn apply_ops(&self, src: &Block, ops: &[Option<&[f64]>]) -> Block {
        let mut cur = src.clone();
        let mut spare = Block::zeros(src.rows, src.cols);
        for (slot, op) in ops.iter().enumerate() {
            if let Some(op) = op {
                self.apply_slot(op, slot, &cur, &mut spare, false);
                std::mem::swap(&mut cur, &mut spare);
            }
        }
        cur
    }

    /// Global-order application of the layer with the same `op` on every slot.
    pub fn apply_layer(&self, offset: usize, op: &[f64], src: &Block) -> Block {
        let ops = vec![Some(op); self.slots];
        self.scatter(offset, &self.apply_ops(&self.gather(offset, src), &ops))
    }

    /// `acc += sum_{left,right} U[l, a, r] T[l, a', r]` for slot `slot`.
    pub fn contract_slot(&self, u_local: &Block, t_local: &Block, slot: usize, acc: &mut [f64]) {
        let sd = self.slot_dim;
        let left = sd.pow(slot as u32);
        let right = sd.pow((self.slots - 1 - slot) as u32) * u_local.cols;
        for l in 0..left {
            let off = l * sd * right;
            let len = sd * right;
            gemm(
                sd,
                right,
                sd,
                &u_local.data[off..off + len],
                (right, 1),
                &t_local.data[off..off + len],
                (1, right),
                1.0,
                acc,
                (sd, 1),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Mat {
        let mut s = seed;
        Mat::from_fn(r, c, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn layer_matches_dense_conjugation() {
        let engine = PairEngine::new(4, 2).unwrap();
        let phi = rand_mat(16, 16, 1);
        let m = rand_mat(256, 256, 2);
        for offset in 0..2 {
            let p = global_local_perm(4, offset, 2).unwrap().as_matrix();
            let dense = p.transpose() * kron(&phi, &phi) * &p * &m;
            let op = Block::from_mat(&phi).data;
            let got = engine.apply_layer(offset, &op, &Block::from_mat(&m)).to_mat();
            assert!((got - dense).norm() < 1e-11);
        }
    }

    #[test]
    fn two_site_offset_one_swaps_sites() {
        let engine = PairEngine::new(2, 2).unwrap();
        let phi = rand_mat(16, 16, 7);
        let p = global_local_perm(2, 1, 2).unwrap().as_matrix();
        let op = Block::from_mat(&phi).data;
        let got = engine.apply_layer(1, &op, &Block::identity(16)).to_mat();
        assert!((got - p.transpose() * &phi * &p).norm() < 1e-13);
    }

    #[test]
    fn contraction_is_gradient_of_bilinear_form() {
        // d/dA <U, (A kron B) T> = sum over the second slot.
        let engine = PairEngine::new(4, 2).unwrap();
        let (a, b) = (rand_mat(16, 16, 3), rand_mat(16, 16, 4));
        let (u, t) = (rand_mat(256, 8, 5), rand_mat(256, 8, 6));
        let (ub, tb) = (Block::from_mat(&u), Block::from_mat(&t));
        let bt = engine.apply_ops(&tb, &[None, Some(&Block::from_mat(&b).data)]);
        let mut acc = vec![0.0; 256];
        engine.contract_slot(&ub, &bt, 0, &mut acc);
        let grad = Mat::from_row_slice(16, 16, &acc);
        let value = |a: &Mat| (u.transpose() * kron(a, &b) * &t).trace();
        let da = rand_mat(16, 16, 8);
        let h = 1e-6;
        let fd = (value(&(&a + &da * h)) - value(&(&a - &da * h))) / (2.0 * h);
        assert!((fd - grad.dot(&da)).abs() < 1e-7 * fd.abs().max(1.0));
    }

    #[test]
    fn block_matmul() {
        let (a, b) = (rand_mat(7, 5, 1), rand_mat(5, 3, 2));
        let got = Block::from_mat(&a).matmul(&Block::from_mat(&b)).to_mat();
        assert!((got - a * b).norm() < 1e-14);
    }
}
