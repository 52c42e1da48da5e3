//! Small dense kernels shared by the flow solver and the Newton refit.

use crate::error::{Error, Result};

/// In-place Cholesky factorization of a row-major symmetric positive
/// definite `n x n` matrix. On success the lower triangle holds `L` with
/// `A = L L^T`; the strict upper triangle is left untouched.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            let l = a[j * n + k];
            d -= l * l;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= a[ri + k] * a[rj + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Factor and solve in one call; `a` is consumed as scratch.
pub fn solve_spd(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    cholesky_in_place(a, n)?;
    cholesky_solve(a, n, b);
    Ok(())
}
