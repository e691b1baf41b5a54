use crate::error::{Error, Result};
use crate::numkit::{log_sum_exp, Matrix};

#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub l_corr: f64,
    pub grad_logits1: Matrix,
    pub grad_logits2: Matrix,
    /// `∂l_total/∂corr`, always `−1/k_corr`.
    pub grad_corr: f64,
}

/// Mean softmax cross-entropy over rows and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} logit rows but {} labels", labels.len())));
    }
    if n == 0 {
        return Err(Error::input("cross-entropy over an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::input(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    let inv = 1.0 / n as f64;
    for (i, (row, &l)) in logits.row_iter().zip(labels).enumerate() {
        let lse = log_sum_exp(row);
        loss += lse - row[l];
        let g = grad.row_mut(i);
        for (gj, &z) in g.iter_mut().zip(row) {
            *gj = (z - lse).exp() * inv;
        }
        g[l] -= inv;
    }
    Ok((loss * inv, grad))
}

/// `l_total = l₁ + l₂ − corr / k_corr`.
pub fn joint_loss(logits1: &Matrix, logits2: &Matrix, labels: &[usize], corr: f64, k_corr: usize) -> Result<JointLoss> {
    if k_corr == 0 {
        return Err(Error::Config("k_corr must be >= 1".into()));
    }
    let (l1, grad_logits1) = softmax_cross_entropy(logits1, labels)?;
    let (l2, grad_logits2) = softmax_cross_entropy(logits2, labels)?;
    let l_corr = -corr / k_corr as f64;
    Ok(JointLoss {
        total: l1 + l2 + l_corr,
        l1,
        l2,
        l_corr,
        grad_logits1,
        grad_logits2,
        grad_corr: -1.0 / k_corr as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let z = Matrix::zeros(3, 4);
        let out = joint_loss(&z, &z, &[0, 1, 3], 10.0, 10).unwrap();
        assert!((out.l1 - 4f64.ln()).abs() < 1e-12);
        assert!((out.l_corr + 1.0).abs() < 1e-15);
        assert!((out.total - (2.0 * 4f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let z = Matrix::zeros(2, 3);
        assert!(joint_loss(&z, &z, &[0, 3], 0.0, 10).is_err());
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let a = Matrix::new(3, 3, vec![0.2, -1.0, 0.5, 1.5, 0.0, -0.3, 0.1, 0.1, 2.0]).unwrap();
        let b = Matrix::new(3, 3, vec![-0.4, 0.3, 0.9, 0.0, 1.1, -2.0, 0.7, -0.5, 0.2]).unwrap();
        let labels = [2, 0, 1];
        let corr = 1.7;
        let k = 4;
        let out = joint_loss(&a, &b, &labels, corr, k).unwrap();
        let f = |a: &Matrix, b: &Matrix, c: f64| joint_loss(a, b, &labels, c, k).unwrap().total;
        let h = 1e-5;
        for idx in 0..9 {
            for which in 0..2 {
                let (mut ap, mut am, mut bp, mut bm) = (a.clone(), a.clone(), b.clone(), b.clone());
                let analytic = if which == 0 {
                    ap.as_mut_slice()[idx] += h;
                    am.as_mut_slice()[idx] -= h;
                    out.grad_logits1.as_slice()[idx]
                } else {
                    bp.as_mut_slice()[idx] += h;
                    bm.as_mut_slice()[idx] -= h;
                    out.grad_logits2.as_slice()[idx]
                };
                let numeric = (f(&ap, &bp, corr) - f(&am, &bm, corr)) / (2.0 * h);
                assert!((analytic - numeric).abs() < 1e-4 * analytic.abs().max(1e-2));
            }
        }
        let numeric = (f(&a, &b, corr + h) - f(&a, &b, corr - h)) / (2.0 * h);
        assert!((out.grad_corr - numeric).abs() < 1e-8);
    }
}
