use super::params::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// One bias-corrected update of `params` against `grads` (same shapes).
    pub fn update<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        let gs = grads.tensors();
        if self.m.is_empty() {
            self.m = gs.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmnn::params::Dense;
    use crate::numkit::Matrix;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Dense {
            w: Matrix::new(1, 2, vec![1.0, -1.0]).unwrap(),
            b: vec![0.0],
        };
        let g = Dense {
            w: Matrix::new(1, 2, vec![3.0, -0.5]).unwrap(),
            b: vec![0.0],
        };
        let mut opt = Adam::new(0.1);
        opt.update(&mut p, &g);
        assert!((p.w[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p.w[(0, 1)] + 0.9).abs() < 1e-6);
        assert_eq!(p.b[0], 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Dense {
            w: Matrix::new(1, 1, vec![5.0]).unwrap(),
            b: vec![-3.0],
        };
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g = Dense {
                w: Matrix::new(1, 1, vec![2.0 * p.w[(0, 0)]]).unwrap(),
                b: vec![2.0 * p.b[0]],
            };
            opt.update(&mut p, &g);
        }
        assert!(p.w[(0, 0)].abs() < 1e-2 && p.b[0].abs() < 1e-2);
    }
}
