//! Communication-theoretic data analytics.
//!
//! Two pipelines share this crate:
//!
//! * **Equalized fusion** for time series: each candidate cause `X_m` is
//!   passed through its own least-squares tap-delay-line equalizer
//!   ([`equalizer`]) and the equalized outputs are merged by maximal-ratio,
//!   equal-gain or selective combining ([`fusion`]). [`baselines`] holds the
//!   multivariate regression references.
//! * **Linear information coupling** for discrete data: the divergence
//!   transition matrix of a channel, its singular system and the derived
//!   score function ([`coupling`]), applied to unsupervised separation of
//!   noisy quantised images ([`scoring`]).
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod coupling;
pub mod data;
pub mod equalizer;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod scenarios;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DiscreteDistribution = stats::DiscreteDistribution<f64>;
pub type Channel = stats::Channel<f64>;
pub type TimeSeries = data::TimeSeries<f64>;
pub type AlignedSeries = data::AlignedSeries<f64>;
pub type EqualizerModel = equalizer::EqualizerModel<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type FusionModel = fusion::FusionModel<f64>;
pub type LinearModel = baselines::LinearModel<f64>;
pub type Dtm = coupling::Dtm<f64>;
pub type CouplingSolution = coupling::CouplingSolution<f64>;
pub type ScoreTable = coupling::ScoreTable<f64>;

pub type DiscreteDistribution32 = stats::DiscreteDistribution<f32>;
pub type Channel32 = stats::Channel<f32>;
pub type EqualizerModel32 = equalizer::EqualizerModel<f32>;
