use crate::error::{Error, Result};
use crate::numkit::{inv_sqrt_psd, svd, Matrix};

#[derive(Debug, Clone)]
pub struct CcaOutput {
    /// Sum of canonical correlations.
    pub corr: f64,
    /// `∂corr/∂H₁`, same shape as `H₁`.
    pub grad_h1: Matrix,
    pub grad_h2: Matrix,
}

/// Total canonical correlation between two views, each `n × k` with rows
/// as observations, and its gradient with respect to every entry.
///
/// Both views are centered internally and their covariances get `ridge · I`.
pub fn cca_corr(h1: &Matrix, h2: &Matrix, ridge: f64) -> Result<CcaOutput> {
    let n = h1.rows();
    if h2.rows() != n {
        return Err(Error::shape(format!("views have {n} and {} rows", h2.rows())));
    }
    if n < 2 {
        return Err(Error::input(format!("correlation needs at least 2 rows, got {n}")));
    }
    if !h1.is_finite() || !h2.is_finite() {
        return Err(Error::NonFinite("correlation inputs"));
    }
    let c1 = centered(h1);
    let c2 = centered(h2);
    let scale = 1.0 / (n as f64 - 1.0);
    let s11 = c1.t_matmul(&c1)?.scale(scale).symmetrized()?;
    let s22 = c2.t_matmul(&c2)?.scale(scale).symmetrized()?;
    let s12 = c1.t_matmul(&c2)?.scale(scale);
    let r1 = inv_sqrt_psd(&s11, ridge)?;
    let r2 = inv_sqrt_psd(&s22, ridge)?;
    let t = r1.matmul(&s12)?.matmul(&r2)?;
    let dec = svd(&t)?;
    let corr: f64 = dec.s.iter().sum();

    let uvt = dec.u.matmul(&dec.v.transpose())?;
    let d12 = r1.matmul(&uvt)?.matmul(&r2)?;
    let d11 = sandwich(&r1, &dec.u, &dec.s)?;
    let d22 = sandwich(&r2, &dec.v, &dec.s)?;

    let g1 = c1.matmul(&d11)?.scale(2.0).add(&c2.matmul(&d12.transpose())?)?.scale(scale);
    let g2 = c2.matmul(&d22)?.scale(2.0).add(&c1.matmul(&d12)?)?.scale(scale);
    Ok(CcaOutput {
        corr,
        grad_h1: centered(&g1),
        grad_h2: centered(&g2),
    })
}

/// `−½ R·U·diag(s)·Uᵀ·R`
fn sandwich(r: &Matrix, u: &Matrix, s: &[f64]) -> Result<Matrix> {
    let mut us = u.clone();
    for i in 0..us.rows() {
        for (v, sv) in us.row_mut(i).iter_mut().zip(s) {
            *v *= sv;
        }
    }
    let inner = us.matmul(&u.transpose())?;
    Ok(r.matmul(&inner)?.matmul(r)?.scale(-0.5))
}

fn centered(m: &Matrix) -> Matrix {
    let (n, k) = m.shape();
    let mut mean = vec![0.0; k];
    for row in m.row_iter() {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut out = m.clone();
    for i in 0..n {
        for (v, mu) in out.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix {
        Matrix::new(n, k, (0..n * k).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn identical_views_reach_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = gaussian(&mut rng, 200, 4);
        let out = cca_corr(&h, &h, 1e-6).unwrap();
        assert!(out.corr > 4.0 - 1e-3 && out.corr <= 4.0 + 1e-9, "{}", out.corr);
    }

    #[test]
    fn independent_views_low_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(&mut rng, 500, 3);
        let b = gaussian(&mut rng, 500, 3);
        assert!(cca_corr(&a, &b, 1e-4).unwrap().corr < 0.5);
    }

    #[test]
    fn too_few_rows() {
        let h = Matrix::zeros(1, 2);
        assert!(cca_corr(&h, &h, 1e-3).is_err());
    }

    #[test]
    fn gradients_sum_to_zero_per_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(&mut rng, 30, 3);
        let b = gaussian(&mut rng, 30, 2);
        let out = cca_corr(&a, &b, 1e-3).unwrap();
        for j in 0..3 {
            assert!(out.grad_h1.column(j).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_gradients() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let a = gaussian(&mut rng, 12, 3);
            let mut b = gaussian(&mut rng, 12, 3);
            // partially correlated views keep singular values apart
            for i in 0..12 {
                for j in 0..3 {
                    b[(i, j)] = 0.5 * b[(i, j)] + 0.3 * (j as f64 + 1.0) * a[(i, j)];
                }
            }
            let out = cca_corr(&a, &b, 1e-3).unwrap();
            let f = |a: &Matrix, b: &Matrix| cca_corr(a, b, 1e-3).unwrap().corr;
            let step = 1e-4;
            for which in 0..2 {
                for idx in 0..36 {
                    let (mut ap, mut am) = (a.clone(), a.clone());
                    let (mut bp, mut bm) = (b.clone(), b.clone());
                    let analytic = if which == 0 {
                        ap.as_mut_slice()[idx] += step;
                        am.as_mut_slice()[idx] -= step;
                        out.grad_h1.as_slice()[idx]
                    } else {
                        bp.as_mut_slice()[idx] += step;
                        bm.as_mut_slice()[idx] -= step;
                        out.grad_h2.as_slice()[idx]
                    };
                    let numeric = (f(&ap, &bp) - f(&am, &bm)) / (2.0 * step);
                    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                    assert!(err < 1e-3, "seed {seed} view {which} idx {idx}: {analytic} vs {numeric}");
                }
            }
        }
    }
}
