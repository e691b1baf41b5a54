//! Spatial feature extractor.
//!
//! Channel 1 frames are encoded directly; channel 2 is described both by
//! eight time-domain statistics and by a DFT magnitude spectrum per feature
//! column. Each descriptor family gets its own diagonal GMM and Fisher vector
//! encoder. The three group-normalized Fisher vectors are concatenated and
//! reduced by LDA to the spatial feature `F_sp`.

mod descriptors;
mod fisher;
mod gmm;
mod lda;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::BimodalSample;
use crate::numkit::Matrix;

pub use descriptors::{
    direct_descriptors, freq_descriptors, freq_domain_features, time_descriptors,
    time_domain_features, DescriptorSet, SourceKind,
};
pub use fisher::{fisher_encode, fisher_len, group_normalize, FisherVector};
pub(crate) use gmm::kmeans_pp;
pub use gmm::{gmm_fit, GmmModel, GmmReport, GMM_COLLAPSE_WEIGHT, GMM_REL_TOL};
pub use lda::{lda_fit, lda_project, LdaModel, LDA_RIDGE_FACTOR};

#[derive(Debug, Clone, PartialEq)]
pub struct SfeConfig {
    /// Components for the channel-1 (direct) encoder.
    pub k1: usize,
    /// Components for both channel-2 encoders.
    pub k2: usize,
    pub strong_ratio: f64,
    /// Defaults to C − 1 when `None`.
    pub d_out: Option<usize>,
    pub gmm_iters: usize,
    /// Relative variance floor (multiplies the global per-dimension variance).
    pub var_floor: f64,
    pub seed: u64,
}

impl Default for SfeConfig {
    fn default() -> Self {
        Self {
            k1: 15,
            k2: 20,
            strong_ratio: 1.0,
            d_out: None,
            gmm_iters: 100,
            var_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfeModels {
    pub gmm_direct: GmmModel,
    pub gmm_time: GmmModel,
    pub gmm_freq: GmmModel,
    pub lda: LdaModel,
    pub strong_ratio: f64,
}

impl SfeModels {
    /// Length of the concatenated Fisher vector fed to LDA.
    pub fn fisher_dim(&self) -> usize {
        [&self.gmm_direct, &self.gmm_time, &self.gmm_freq]
            .iter()
            .map(|g| fisher_len(g.k(), g.dim()))
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SfeReport {
    pub gmm: [GmmReport; 3],
}

struct SampleDescriptors {
    direct: DescriptorSet,
    time: DescriptorSet,
    freq: DescriptorSet,
}

fn describe(sample: &BimodalSample) -> Result<SampleDescriptors> {
    Ok(SampleDescriptors {
        direct: direct_descriptors(&sample.x1),
        time: time_descriptors(&sample.x2)?,
        freq: freq_descriptors(&sample.x2)?,
    })
}

/// Fits the three GMMs on pooled training descriptors, then LDA on the training Fisher vectors.
pub fn sfe_fit(train: &[BimodalSample], cfg: &SfeConfig) -> Result<(SfeModels, SfeReport)> {
    if train.is_empty() {
        return Err(Error::input("SFE needs a non-empty training set"));
    }
    let descs: Vec<SampleDescriptors> = train.par_iter().map(describe).collect::<Result<_>>()?;
    let pool = |f: fn(&SampleDescriptors) -> &DescriptorSet| -> Result<DescriptorSet> {
        let sets: Vec<DescriptorSet> = descs.iter().map(|s| f(s).clone()).collect();
        DescriptorSet::concat(&sets)
    };
    let pooled = [pool(|s| &s.direct)?, pool(|s| &s.time)?, pool(|s| &s.freq)?];
    let ks = [cfg.k1, cfg.k2, cfg.k2];
    let fits: Vec<(GmmModel, GmmReport)> = pooled
        .par_iter()
        .zip(ks.par_iter())
        .enumerate()
        .map(|(i, (set, &k))| gmm_fit(&set.vectors, k, cfg.seed.wrapping_add(i as u64), cfg.gmm_iters, cfg.var_floor))
        .collect::<Result<_>>()?;
    let mut fits = fits.into_iter();
    let (gmm_direct, r0) = fits.next().unwrap();
    let (gmm_time, r1) = fits.next().unwrap();
    let (gmm_freq, r2) = fits.next().unwrap();

    let mut models = SfeModels {
        gmm_direct,
        gmm_time,
        gmm_freq,
        lda: LdaModel {
            projection: Matrix::zeros(0, 0),
            class_means: Matrix::zeros(0, 0),
            overall_mean: Vec::new(),
            eigenvalues: Vec::new(),
        },
        strong_ratio: cfg.strong_ratio,
    };
    let rows: Vec<Vec<f64>> = descs
        .par_iter()
        .map(|d| encode_descriptors(&models, d))
        .collect::<Result<_>>()?;
    let fvs = Matrix::from_rows(&rows)?;
    let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let d_out = cfg.d_out.unwrap_or(classes.saturating_sub(1));
    models.lda = lda_fit(&fvs, &labels, d_out)?;
    Ok((models, SfeReport { gmm: [r0, r1, r2] }))
}

fn encode_descriptors(models: &SfeModels, d: &SampleDescriptors) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(models.fisher_dim());
    for (gmm, set) in [
        (&models.gmm_direct, &d.direct),
        (&models.gmm_time, &d.time),
        (&models.gmm_freq, &d.freq),
    ] {
        let fv = fisher_encode(gmm, &set.vectors, models.strong_ratio)?;
        out.extend(group_normalize(&fv).to_vec());
    }
    Ok(out)
}

/// Concatenated `[FV₁, FV₂, FV_s]`, each group-normalized.
pub fn sfe_fisher(sample: &BimodalSample, models: &SfeModels) -> Result<Vec<f64>> {
    encode_descriptors(models, &describe(sample)?)
}

/// Spatial feature `F_sp` of one sample.
pub fn sfe_pipeline(sample: &BimodalSample, models: &SfeModels) -> Result<Vec<f64>> {
    lda_project(&models.lda, &sfe_fisher(sample, models)?)
}
