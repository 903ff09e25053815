//! Reference synthetic experiments with fixed seeds and parameters.

use crate::data::{gen_diversity_series, gen_fir_series, FirSeries, InputProcess};
use crate::error::Result;
use crate::stats::DiscreteDistribution;

pub const SHIPPED_SEED: u64 = 2024;

/// Two inputs with FIR memories 4 and 12 driving one target.
pub struct LengthSelectionScenario {
    pub coefficients: [Vec<f64>; 2],
    pub true_lags: [usize; 2],
    pub n: usize,
    pub noise_sigma: f64,
    pub max_length: usize,
}

pub fn length_selection() -> LengthSelectionScenario {
    LengthSelectionScenario {
        coefficients: [
            vec![1.0, 0.8, 0.6, 0.45, 0.35],
            (0..13).map(|l| 0.9 * 0.9f64.powi(l)).collect(),
        ],
        true_lags: [4, 12],
        n: 2000,
        noise_sigma: 0.1,
        max_length: 16,
    }
}

impl LengthSelectionScenario {
    pub fn generate(&self, seed: u64) -> Result<FirSeries<f64>> {
        gen_fir_series(
            seed,
            self.n,
            &self.coefficients,
            InputProcess::IidGaussian,
            self.noise_sigma,
        )
    }
}

/// A latent target seen through two dispersive channels of unequal noise.
pub struct FusionScenario {
    pub responses: [Vec<f64>; 2],
    pub noise_sigmas: [f64; 2],
    pub n: usize,
    /// First test row; rows before it form the training block.
    pub train_end: usize,
    pub max_length: usize,
}

pub fn two_channel_fusion() -> FusionScenario {
    FusionScenario {
        responses: [vec![1.0, 0.6], vec![1.0, -0.5, 0.3]],
        noise_sigmas: [0.3, 0.6],
        n: 3000,
        train_end: 2000,
        max_length: 20,
    }
}

impl FusionScenario {
    pub fn generate(&self, seed: u64) -> Result<FirSeries<f64>> {
        gen_diversity_series(
            seed,
            self.n,
            &self.responses,
            &self.noise_sigmas,
            InputProcess::IidGaussian,
        )
    }
}

/// Two pixel classes, one concentrated on the lowest symbol and one on the
/// highest.
pub struct ImageScenario {
    pub class_a: DiscreteDistribution<f64>,
    pub class_b: DiscreteDistribution<f64>,
    pub width: usize,
    pub height: usize,
    pub n_per_class: usize,
    pub e_grid: Vec<f64>,
}

pub fn two_class_images() -> ImageScenario {
    ImageScenario {
        class_a: DiscreteDistribution::new(vec![0.7, 0.1, 0.1, 0.1]).expect("valid distribution"),
        class_b: DiscreteDistribution::new(vec![0.1, 0.1, 0.1, 0.7]).expect("valid distribution"),
        width: 19,
        height: 19,
        n_per_class: 100,
        e_grid: vec![0.0, 0.05, 0.1, 0.2],
    }
}
