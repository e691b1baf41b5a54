use super::Matrix;
use crate::error::{Error, Result};

/// Inputs whose asymmetry exceeds this (relative to their largest entry) are rejected.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Residual target for eigen- and singular-value decompositions.
pub const DECOMP_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix,
}

/// Thin singular value decomposition `m = U · diag(s) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

fn check_square_symmetric(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::shape(format!("{}x{} matrix is not square", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric eigendecomposition input"));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..a.rows() {
        for j in (i + 1)..a.cols() {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::input(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    a.symmetrized()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    let mut a = check_square_symmetric(a)?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let total: f64 = a.as_slice().iter().map(|x| x * x).sum();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off == 0.0 || off.sqrt() <= f64::EPSILON * 1e-2 * total.sqrt() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = a.diag();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_j)] = v[(i, old_j)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// `(a + ridge·I)^{-1/2}` for a symmetric positive definite matrix.
pub fn inv_sqrt_psd(a: &Matrix, ridge: f64) -> Result<Matrix> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::input(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let mut shifted = a.clone();
    shifted.add_diag(ridge);
    let eig = sym_eig(&shifted)?;
    if let Some(&bad) = eig.values.iter().find(|&&l| l <= 0.0) {
        return Err(Error::Singular { eigenvalue: bad });
    }
    let n = a.rows();
    let scales: Vec<f64> = eig.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for (k, s) in scales.iter().enumerate() {
                acc += eig.vectors[(i, k)] * s * eig.vectors[(j, k)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(out)
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// For an `m×n` input, `u` is `m×r`, `v` is `n×r` with `r = min(m, n)`.
/// Left singular vectors belonging to zero singular values are completed to
/// an orthonormal set.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (rows, cols) = m.shape();
    // Columns of `a` are rotated in place; store transposed for contiguous column access.
    let mut at = m.transpose();
    let mut vt = Matrix::identity(cols);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let cp = at.row(p);
                    let cq = at.row(q);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut at, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols)
        .map(|j| at.row(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let tiny = scale * f64::EPSILON * (rows.max(cols) as f64);
    let mut u = Matrix::zeros(rows, cols);
    let mut v = Matrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (new_j, &old_j) in order.iter().enumerate() {
        let sigma = norms[old_j];
        s.push(sigma);
        for i in 0..cols {
            v[(i, new_j)] = vt[(old_j, i)];
        }
        if sigma > tiny && sigma > 0.0 {
            for i in 0..rows {
                u[(i, new_j)] = at[(old_j, i)] / sigma;
            }
        } else {
            missing.push(new_j);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd { u, s, v })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other columns.
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (rows, cols) = u.shape();
    let mut filled: Vec<bool> = vec![true; cols];
    for &j in missing {
        filled[j] = false;
    }
    let mut candidate = 0;
    for &j in missing {
        loop {
            let mut w = vec![0.0; rows];
            w[candidate % rows] = 1.0;
            candidate += 1;
            for k in 0..cols {
                if !filled[k] {
                    continue;
                }
                let dot: f64 = (0..rows).map(|i| u[(i, k)] * w[i]).sum();
                for (i, wi) in w.iter_mut().enumerate() {
                    *wi -= dot * u[(i, k)];
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, wi) in w.iter().enumerate() {
                    u[(i, j)] = wi / norm;
                }
                filled[j] = true;
                break;
            }
            if candidate > 2 * rows {
                break;
            }
        }
    }
}

/// Singular values in descending order.
pub fn svd_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

/// Lower-triangular Cholesky factor `L` with `a = L·Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let a = check_square_symmetric(a)?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(Error::Singular { eigenvalue: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            let (li, lj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= li[k] * lj[k];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L·X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if l.rows() != b.rows() || l.rows() != l.cols() {
        return Err(Error::shape("triangular solve dimensions"));
    }
    let (n, m) = b.shape();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik == 0.0 {
                continue;
            }
            for j in 0..m {
                x[(i, j)] -= lik * x[(k, j)];
            }
        }
        let d = l[(i, i)];
        for j in 0..m {
            x[(i, j)] /= d;
        }
    }
    Ok(x)
}

/// Solves `Lᵀ·X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    if l.rows() != b.rows() || l.rows() != l.cols() {
        return Err(Error::shape("triangular solve dimensions"));
    }
    let (n, m) = b.shape();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l[(k, i)];
            if lki == 0.0 {
                continue;
            }
            for j in 0..m {
                x[(i, j)] -= lki * x[(k, j)];
            }
        }
        let d = l[(i, i)];
        for j in 0..m {
            x[(i, j)] /= d;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(r, c, data).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let b = random_matrix(rng, n, n);
        let mut a = b.t_matmul(&b).unwrap();
        a.add_diag(0.1);
        a
    }

    fn reconstruct(e: &SymEig) -> Matrix {
        let lam = Matrix::from_diag(&e.values);
        e.vectors.matmul(&lam).unwrap().matmul(&e.vectors.transpose()).unwrap()
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        // λ² − 4λ + 3 = 0
        let a = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = random_spd(&mut rng, 5);
            let e = sym_eig(&a).unwrap();
            let err = reconstruct(&e).sub(&a).unwrap().frobenius_norm();
            assert!(err < DECOMP_TOL, "reconstruction error {err}");
            let vtv = e.vectors.t_matmul(&e.vectors).unwrap();
            assert!(vtv.sub(&Matrix::identity(5)).unwrap().max_abs() < DECOMP_TOL);
            let av = a.matmul(&e.vectors).unwrap();
            let vl = e.vectors.matmul(&Matrix::from_diag(&e.values)).unwrap();
            assert!(av.sub(&vl).unwrap().max_abs() < DECOMP_TOL * a.frobenius_norm());
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn sym_eig_rejects_nan_and_asymmetry() {
        let bad = Matrix::from_vec_unchecked(2, 2, vec![1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(sym_eig(&bad), Err(Error::NonFinite(_))));
        let asym = Matrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(sym_eig(&asym).is_err());
    }

    #[test]
    fn inv_sqrt_cases() {
        let r = inv_sqrt_psd(&Matrix::identity(3), 0.0).unwrap();
        assert!(r.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-14);

        let r = inv_sqrt_psd(&Matrix::from_diag(&[4.0, 9.0]), 0.0).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((r[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(r[(0, 1)].abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(&mut rng, 6);
        let r = inv_sqrt_psd(&a, 1e-4).unwrap();
        let mut shifted = a.clone();
        shifted.add_diag(1e-4);
        let prod = r.matmul(&shifted).unwrap().matmul(&r).unwrap();
        assert!(prod.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-7);
    }

    #[test]
    fn inv_sqrt_reports_offending_eigenvalue() {
        let a = Matrix::from_diag(&[1.0, -2.0]);
        match inv_sqrt_psd(&a, 0.5) {
            Err(Error::Singular { eigenvalue }) => assert!((eigenvalue + 1.5).abs() < 1e-12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn svd_small_cases() {
        let s = svd_values(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
        let z = svd_values(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn svd_frobenius_identity_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 4, 3);
        let d = svd(&m).unwrap();
        let sum_sq: f64 = d.s.iter().map(|s| s * s).sum();
        let fro2 = m.frobenius_norm().powi(2);
        assert!((sum_sq - fro2).abs() < 1e-8);
        let rec = d.u.matmul(&Matrix::from_diag(&d.s)).unwrap().matmul(&d.v.transpose()).unwrap();
        assert!(rec.sub(&m).unwrap().max_abs() < 1e-10);
        let wide = svd(&m.transpose()).unwrap();
        for (a, b) in wide.s.iter().zip(&d.s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_rank_deficient_completes_u() {
        let m = Matrix::new(3, 3, vec![1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let d = svd(&m).unwrap();
        let utu = d.u.t_matmul(&d.u).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-10);
        assert!(d.s[1].abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(&mut rng, 5);
        let l = cholesky(&a).unwrap();
        let llt = l.matmul(&l.transpose()).unwrap();
        assert!(llt.sub(&a).unwrap().max_abs() < 1e-12);
        let b = random_matrix(&mut rng, 5, 2);
        let y = solve_lower(&l, &b).unwrap();
        let x = solve_lower_transpose(&l, &y).unwrap();
        assert!(a.matmul(&x).unwrap().sub(&b).unwrap().max_abs() < 1e-10);
    }
}
