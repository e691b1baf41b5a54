use rand_chacha::ChaCha8Rng;

use super::params::{affine, glorot, outer_acc, t_matvec_acc, ParamSet};
use crate::error::{Error, Result};
use crate::numkit::{sigmoid, Matrix};

/// Weights of the multi-gated memory cell.
///
/// Every weight matrix is `hidden × (hidden + input)` and acts on the
/// concatenation `[o_prev, x]` (the candidate matrix `w_h` acts on
/// `[r ⊗ o_prev, x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGatedCellParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub w_ctemp: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub b_ctemp: Vec<f64>,
}

impl MultiGatedCellParams {
    pub fn new(rng: &mut ChaCha8Rng, hidden: usize, input: usize) -> Self {
        let cols = hidden + input;
        Self {
            w_z: glorot(rng, hidden, cols),
            w_r: glorot(rng, hidden, cols),
            w_h: glorot(rng, hidden, cols),
            w_ctemp: glorot(rng, hidden, cols),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
            b_ctemp: vec![0.0; hidden],
        }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        let cols = hidden + input;
        Self {
            w_z: Matrix::zeros(hidden, cols),
            w_r: Matrix::zeros(hidden, cols),
            w_h: Matrix::zeros(hidden, cols),
            w_ctemp: Matrix::zeros(hidden, cols),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
            b_ctemp: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows()
    }

    pub fn input(&self) -> usize {
        self.w_z.cols() - self.w_z.rows()
    }
}

impl ParamSet for MultiGatedCellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_z.as_slice(),
            self.w_r.as_slice(),
            self.w_h.as_slice(),
            self.w_ctemp.as_slice(),
            &self.b_z,
            &self.b_r,
            &self.b_h,
            &self.b_ctemp,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_z.as_mut_slice(),
            self.w_r.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.w_ctemp.as_mut_slice(),
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
            &mut self.b_ctemp,
        ]
    }
}

/// Intermediates of one forward step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    /// `[o_prev, x]`
    a: Vec<f64>,
    /// `[r ⊗ o_prev, x]`
    a_r: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    h_tilde: Vec<f64>,
    ctemp: Vec<f64>,
    c: Vec<f64>,
    /// σ(ctemp)
    gate: Vec<f64>,
}

impl CellCache {
    pub fn hidden(&self) -> usize {
        self.z.len()
    }
}

/// One step of the multi-gated cell:
///
/// ```text
/// z = σ(W_z·[o_prev, x] + b_z)          r = σ(W_r·[o_prev, x] + b_r)
/// h̃ = tanh(W·[r ⊗ o_prev, x] + b)       ctemp = tanh(W_ctemp·[o_prev, x] + b_ctemp)
/// c = (1 − z) ⊗ h̃ + z ⊗ o_prev          o = c ⊗ σ(ctemp)
/// ```
pub fn cell_forward(p: &MultiGatedCellParams, x: &[f64], o_prev: &[f64]) -> Result<(Vec<f64>, CellCache)> {
    let h = p.hidden();
    if x.len() != p.input() || o_prev.len() != h {
        return Err(Error::shape(format!(
            "cell expects input {} and state {h}, got {} and {}",
            p.input(),
            x.len(),
            o_prev.len()
        )));
    }
    let mut a = Vec::with_capacity(h + x.len());
    a.extend_from_slice(o_prev);
    a.extend_from_slice(x);

    let z: Vec<f64> = affine(&p.w_z, &p.b_z, &a).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(&p.w_r, &p.b_r, &a).into_iter().map(sigmoid).collect();
    let ctemp: Vec<f64> = affine(&p.w_ctemp, &p.b_ctemp, &a).into_iter().map(f64::tanh).collect();
    let mut a_r = a.clone();
    for (v, ri) in a_r[..h].iter_mut().zip(&r) {
        *v *= ri;
    }
    let h_tilde: Vec<f64> = affine(&p.w_h, &p.b_h, &a_r).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..h)
        .map(|i| (1.0 - z[i]) * h_tilde[i] + z[i] * o_prev[i])
        .collect();
    let gate: Vec<f64> = ctemp.iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = c.iter().zip(&gate).map(|(c, g)| c * g).collect();
    Ok((
        o,
        CellCache {
            a,
            a_r,
            z,
            r,
            h_tilde,
            ctemp,
            c,
            gate,
        },
    ))
}

/// Gradients of one cell step.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub params: MultiGatedCellParams,
    pub x: Vec<f64>,
    pub o_prev: Vec<f64>,
}

/// Reverse-mode gradient of one step given `∂L/∂o`.
pub fn cell_backward(p: &MultiGatedCellParams, cache: &CellCache, grad_o: &[f64]) -> Result<CellGrads> {
    let mut params = MultiGatedCellParams::zeros(p.hidden(), p.input());
    let (x, o_prev) = cell_backward_acc(p, cache, grad_o, &mut params)?;
    Ok(CellGrads { params, x, o_prev })
}

/// Like [`cell_backward`] but accumulates parameter gradients into `acc`.
/// Returns `(∂L/∂x, ∂L/∂o_prev)`.
pub fn cell_backward_acc(
    p: &MultiGatedCellParams,
    cache: &CellCache,
    grad_o: &[f64],
    acc: &mut MultiGatedCellParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = p.hidden();
    if cache.hidden() != h || cache.a.len() != p.w_z.cols() {
        return Err(Error::shape("cell cache does not match these parameters"));
    }
    if grad_o.len() != h {
        return Err(Error::shape(format!("output gradient has length {}, expected {h}", grad_o.len())));
    }
    let o_prev = &cache.a[..h];
    let mut g_pre_z = vec![0.0; h];
    let mut g_pre_h = vec![0.0; h];
    let mut g_pre_c = vec![0.0; h];
    let mut g_a = vec![0.0; cache.a.len()];
    for i in 0..h {
        let go = grad_o[i];
        let gc = go * cache.gate[i];
        let g_gate = go * cache.c[i];
        let s = cache.gate[i];
        let ct = cache.ctemp[i];
        g_pre_c[i] = g_gate * s * (1.0 - s) * (1.0 - ct * ct);
        let z = cache.z[i];
        let ht = cache.h_tilde[i];
        g_pre_z[i] = gc * (o_prev[i] - ht) * z * (1.0 - z);
        g_pre_h[i] = gc * (1.0 - z) * (1.0 - ht * ht);
        g_a[i] += gc * z;
    }

    // candidate path: acts on [r ⊗ o_prev, x]
    outer_acc(&mut acc.w_h, &g_pre_h, &cache.a_r);
    add_into(&mut acc.b_h, &g_pre_h);
    let mut g_ar = vec![0.0; cache.a.len()];
    t_matvec_acc(&p.w_h, &g_pre_h, &mut g_ar);
    let mut g_pre_r = vec![0.0; h];
    for i in 0..h {
        let r = cache.r[i];
        g_pre_r[i] = g_ar[i] * o_prev[i] * r * (1.0 - r);
        g_a[i] += g_ar[i] * r;
    }
    for (ga, gr) in g_a[h..].iter_mut().zip(&g_ar[h..]) {
        *ga += gr;
    }

    for (w, b, w_acc, b_acc, g) in [
        (&p.w_z, &p.b_z, &mut acc.w_z, &mut acc.b_z, &g_pre_z),
        (&p.w_r, &p.b_r, &mut acc.w_r, &mut acc.b_r, &g_pre_r),
        (&p.w_ctemp, &p.b_ctemp, &mut acc.w_ctemp, &mut acc.b_ctemp, &g_pre_c),
    ] {
        let _ = b;
        outer_acc(w_acc, g, &cache.a);
        add_into(b_acc, g);
        t_matvec_acc(w, g, &mut g_a);
    }
    let gx = g_a.split_off(h);
    Ok((gx, g_a))
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn randomized(seed: u64, h: usize, i: usize) -> MultiGatedCellParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MultiGatedCellParams::new(&mut rng, h, i);
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h, &mut p.b_ctemp] {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn zero_params_zero_state() {
        let p = MultiGatedCellParams::zeros(3, 2);
        let (o, _) = cell_forward(&p, &[0.3, -0.1], &[0.0; 3]).unwrap();
        assert_eq!(o, vec![0.0; 3]);
    }

    #[test]
    fn zero_params_quarter_of_state() {
        let p = MultiGatedCellParams::zeros(3, 2);
        let v = [0.4, -0.8, 1.0];
        let (o, _) = cell_forward(&p, &[1.0, 2.0], &v).unwrap();
        for (a, b) in o.iter().zip(v) {
            assert!((a - 0.25 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn outputs_bounded_for_bounded_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..20 {
            let p = randomized(s, 5, 3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let prev = random_vec(&mut rng, 5);
            let (o, _) = cell_forward(&p, &x, &prev).unwrap();
            assert!(o.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let p = randomized(2, 4, 3);
        let (_, cache) = cell_forward(&p, &[0.1, 0.2, 0.3], &[0.5, -0.5, 0.2, 0.0]).unwrap();
        let g = cell_backward(&p, &cache, &[0.0; 4]).unwrap();
        assert!(g.params.flatten().iter().all(|&v| v == 0.0));
        assert!(g.x.iter().chain(&g.o_prev).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatches() {
        let p = MultiGatedCellParams::zeros(4, 3);
        assert!(cell_forward(&p, &[0.0; 2], &[0.0; 4]).is_err());
        let other = MultiGatedCellParams::zeros(5, 3);
        let (_, cache) = cell_forward(&other, &[0.0; 3], &[0.0; 5]).unwrap();
        assert!(cell_backward(&p, &cache, &[0.0; 4]).is_err());
    }
}
