//! Small least-squares helper shared by the OLS paths.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct Lstsq {
    pub coef: DVector<f64>,
    /// Upper-triangular factor of the thin QR, for (X'X)⁻¹ entries.
    pub r: DMatrix<f64>,
}

/// Solve `min ‖a·x − b‖²` via thin QR. Fails with `RankDeficient` when an
/// R diagonal entry is numerically zero.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Lstsq> {
    let n = a.nrows();
    let p = a.ncols();
    debug_assert!(n >= p);
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let scale = (n as f64).sqrt();
    for j in 0..p {
        if r[(j, j)].abs() < 1e-10 * scale {
            return Err(Error::RankDeficient(j));
        }
    }
    let qty = q.transpose() * b;
    let mut coef = DVector::zeros(p);
    for i in (0..p).rev() {
        let mut acc = qty[i];
        for j in (i + 1)..p {
            acc -= r[(i, j)] * coef[j];
        }
        coef[i] = acc / r[(i, i)];
    }
    Ok(Lstsq { coef, r })
}

/// Inverse standard normal CDF (Acklam's rational approximation,
/// |relative error| < 1.2e-9).
pub(crate) fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Diagonal entry `(X'X)⁻¹_(idx,idx)` from the R factor: ‖v‖² where
/// `Rᵀ v = e_idx`.
pub(crate) fn normal_inverse_diagonal(r: &DMatrix<f64>, idx: usize) -> f64 {
    let p = r.ncols();
    let mut v = vec![0.0; p];
    for i in 0..p {
        let target = if i == idx { 1.0 } else { 0.0 };
        let mut acc = target;
        for j in 0..i {
            acc -= r[(j, i)] * v[j];
        }
        v[i] = acc / r[(i, i)];
    }
    v.iter().map(|x| x * x).sum()
}
