//! Dense linear algebra and small statistics helpers.
//!
//! Everything here is a pure function over immutable inputs. The eigen and
//! singular value routines use Jacobi rotations, which are accurate and
//! adequate for the matrix sizes this crate works with (at most a few
//! hundred rows).

mod decomp;
mod matrix;

pub use decomp::{
    cholesky, inv_sqrt_psd, solve_lower, solve_lower_transpose, svd, svd_values, sym_eig, Svd,
    SymEig, DECOMP_TOL, SYMMETRY_TOL,
};
pub use matrix::Matrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Numerically stable `ln(Σ exp(xᵢ))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-column mean and population variance of the rows.
pub fn column_mean_var<'a, I>(rows: I, width: usize) -> (Vec<f64>, Vec<f64>, usize)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut n = 0usize;
    let mut mean = vec![0.0; width];
    let mut m2 = vec![0.0; width];
    // Welford
    for row in rows {
        n += 1;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / n as f64;
            *s += delta * (x - *m);
        }
    }
    let var = if n > 0 {
        m2.iter().map(|s| s / n as f64).collect()
    } else {
        vec![0.0; width]
    };
    (mean, var, n)
}
