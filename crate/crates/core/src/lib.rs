//! Multimodal gait classification.
//!
//! The pipeline fuses two synchronized gait channels (for example stride
//! intervals and foot force) in three stages:
//!
//! * [`sfe`]: per-window descriptors encoded as Fisher vectors against
//!   diagonal GMMs, group-normalized and reduced with LDA into a spatial
//!   feature `F_sp`;
//! * [`corrmnn`]: a dual-channel recurrent encoder with a multi-gated
//!   memory cell, trained jointly on per-channel classification and a
//!   CCA correlation objective, whose correlation heads give per-node
//!   temporal features `F_tp`;
//! * [`discriminator`]: one Gaussian HMM per class over the fused
//!   `[F_tp, F_sp]` frames, classifying by maximum forward log-likelihood.
//!
//! [`experiment`] wires the stages together and computes metrics.

pub mod binfmt;
pub mod corrmnn;
pub mod discriminator;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod numkit;
pub mod sfe;

pub use error::{Error, ErrorKind, Result};
