//! Dense matrix exponential by Pade scaling and squaring (Higham 2005).

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, one_norm, Mat};

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norms for which each Pade degree meets unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// `exp(a)` for a dense square matrix.
pub fn expm(a: &Mat) -> Result<Mat> {
    let n = ensure_square(a, "expm argument")?;
    ensure_finite(a, "expm argument")?;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = one_norm(a);
    for (deg, theta) in THETA {
        if norm <= theta {
            return low_order(a, deg);
        }
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    ensure_finite(&r, "expm result")?;
    Ok(r)
}

fn low_order(a: &Mat, deg: usize) -> Result<Mat> {
    let b: &[f64] = match deg {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let n = a.nrows();
    let a2 = a * a;
    let mut pow = Mat::identity(n, n);
    let mut u = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for k in 0..=deg / 2 {
        u += &pow * b[2 * k + 1];
        v += &pow * b[2 * k];
        pow = &pow * &a2;
    }
    let u = a * u;
    solve_pade(&u, &v)
}

fn solve_pade(u: &Mat, v: &Mat) -> Result<Mat> {
    (v - u)
        .lu()
        .solve(&(v + u))
        .ok_or(Error::Singular("Pade denominator"))
}
