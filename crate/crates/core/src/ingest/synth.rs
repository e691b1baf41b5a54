use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::BimodalSample;
use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Parameters of a synthetic bimodal dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub timesteps: usize,
    pub dim1: usize,
    pub dim2: usize,
    /// Distance scale between class mean offsets; 0 makes every class identical.
    pub separation: f64,
    pub seed: u64,
}

const LATENT_DIM: usize = 2;
const AR_COEF: f64 = 0.7;
const LOADING_NORM: f64 = 0.8;
const BURN_IN: usize = 20;

/// Generates a class-major dataset.
///
/// Both channels are driven by one latent AR(1) process shared across
/// classes, so the channels are correlated. Each class adds a constant
/// offset `separation · dir_c` to each channel, where distinct class
/// directions are at least √2 apart. Per-dimension stationary variance is 1.
pub fn synth_bimodal(spec: &SynthSpec) -> Result<Vec<BimodalSample>> {
    if !(spec.separation >= 0.0) || !spec.separation.is_finite() {
        return Err(Error::input(format!("separation must be >= 0, got {}", spec.separation)));
    }
    if spec.classes == 0 || spec.timesteps == 0 || spec.dim1 == 0 || spec.dim2 == 0 {
        return Err(Error::input("synthetic spec needs classes, timesteps and dims >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let load1 = loadings(&mut rng, spec.dim1);
    let load2 = loadings(&mut rng, spec.dim2);
    let noise_sd = (1.0 - LOADING_NORM * LOADING_NORM).sqrt();
    let innov_sd = (1.0 - AR_COEF * AR_COEF).sqrt();

    let mut out = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for c in 0..spec.classes {
        let off1: Vec<f64> = class_direction(c, spec.classes, spec.dim1)
            .into_iter()
            .map(|v| v * spec.separation)
            .collect();
        let off2: Vec<f64> = class_direction(c, spec.classes, spec.dim2)
            .into_iter()
            .map(|v| v * spec.separation)
            .collect();
        for _ in 0..spec.samples_per_class {
            let mut s: Vec<f64> = (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect();
            for _ in 0..BURN_IN {
                step(&mut s, &mut rng, innov_sd);
            }
            let mut x1 = Vec::with_capacity(spec.timesteps * spec.dim1);
            let mut x2 = Vec::with_capacity(spec.timesteps * spec.dim2);
            for _ in 0..spec.timesteps {
                step(&mut s, &mut rng, innov_sd);
                emit(&mut x1, &off1, &load1, &s, noise_sd, &mut rng);
                emit(&mut x2, &off2, &load2, &s, noise_sd, &mut rng);
            }
            out.push(BimodalSample {
                x1: Matrix::new(spec.timesteps, spec.dim1, x1)?,
                x2: Matrix::new(spec.timesteps, spec.dim2, x2)?,
                label: c,
            });
        }
    }
    Ok(out)
}

fn step(s: &mut [f64], rng: &mut ChaCha8Rng, innov_sd: f64) {
    for v in s.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v = AR_COEF * *v + innov_sd * e;
    }
}

fn emit(out: &mut Vec<f64>, offset: &[f64], load: &[Vec<f64>], s: &[f64], noise_sd: f64, rng: &mut ChaCha8Rng) {
    for (o, row) in offset.iter().zip(load) {
        let e: f64 = rng.sample(StandardNormal);
        let latent: f64 = row.iter().zip(s).map(|(a, b)| a * b).sum();
        out.push(o + latent + noise_sd * e);
    }
}

/// Rows of norm `LOADING_NORM`, one per observed dimension.
fn loadings(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|_| {
            let v: Vec<f64> = (0..LATENT_DIM).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| LOADING_NORM * x / n).collect()
        })
        .collect()
}

/// Unit basis vectors when there are enough dimensions; otherwise points on
/// a circle (or line) whose nearest neighbours are √2 apart.
fn class_direction(c: usize, classes: usize, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    if classes <= dim {
        d[c] = 1.0;
    } else if dim == 1 {
        d[0] = c as f64 * std::f64::consts::SQRT_2;
    } else {
        let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
        let radius = std::f64::consts::SQRT_2 / (2.0 * (std::f64::consts::PI / classes as f64).sin());
        d[0] = radius * angle.cos();
        d[1] = radius * angle.sin();
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(separation: f64) -> SynthSpec {
        SynthSpec {
            classes: 4,
            samples_per_class: 50,
            timesteps: 10,
            dim1: 4,
            dim2: 3,
            separation,
            seed: 9,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_bimodal(&spec(1.0)).unwrap();
        let b = synth_bimodal(&spec(1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn large_separation_separates_class_means() {
        // fewer dims than classes in channel 2 exercises the circle layout
        let data = synth_bimodal(&spec(5.0)).unwrap();
        for channel in 0..2 {
            let pick = |s: &BimodalSample| if channel == 0 { s.x1.clone() } else { s.x2.clone() };
            let width = pick(&data[0]).cols();
            let mut means = vec![vec![0.0; width]; 4];
            let mut counts = [0usize; 4];
            for s in &data {
                let m = pick(s);
                for r in m.row_iter() {
                    counts[s.label] += 1;
                    for (a, v) in means[s.label].iter_mut().zip(r) {
                        *a += v;
                    }
                }
            }
            for (m, &n) in means.iter_mut().zip(&counts) {
                m.iter_mut().for_each(|v| *v /= n as f64);
            }
            let mut ss = 0.0;
            let mut n = 0usize;
            for s in &data {
                for r in pick(s).row_iter() {
                    for (v, mu) in r.iter().zip(&means[s.label]) {
                        ss += (v - mu).powi(2);
                        n += 1;
                    }
                }
            }
            let within_sd = (ss / n as f64).sqrt();
            for a in 0..4 {
                for b in (a + 1)..4 {
                    let d = means[a]
                        .iter()
                        .zip(&means[b])
                        .map(|(x, y)| (x - y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(d > 5.0 * within_sd, "channel {channel}: classes {a},{b} distance {d} vs sd {within_sd}");
                }
            }
        }
    }

    #[test]
    fn zero_separation_shares_offsets() {
        let data = synth_bimodal(&spec(0.0)).unwrap();
        assert_eq!(data.len(), 200);
        assert!(data.iter().all(|s| s.x1.shape() == (10, 4) && s.x2.shape() == (10, 3)));
        let mean_of = |c: usize| {
            let rows: Vec<f64> = data
                .iter()
                .filter(|s| s.label == c)
                .flat_map(|s| s.x1.column(0))
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        };
        assert!((mean_of(0) - mean_of(3)).abs() < 0.5);
    }
}
