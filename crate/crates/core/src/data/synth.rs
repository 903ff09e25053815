//! Seeded synthetic multi-channel FIR data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

use super::series::{AlignedSeries, TimeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputProcess {
    /// Standard normal samples.
    #[default]
    IidGaussian,
    /// Equiprobable ±1.
    IidBinary,
}

/// Inputs `X_m` and the target `Y` they drive.
#[derive(Debug, Clone, PartialEq)]
pub struct FirSeries<T> {
    pub inputs: Vec<Vec<T>>,
    pub target: Vec<T>,
}

impl<T: Real> FirSeries<T> {
    /// Packs inputs and target (last column) on the calendar `0..n`.
    pub fn to_aligned(&self, input_names: &[&str], target_name: &str) -> AlignedSeries<T> {
        let mut names: Vec<String> = input_names.iter().map(|s| s.to_string()).collect();
        names.push(target_name.to_string());
        let mut columns = self.inputs.clone();
        columns.push(self.target.clone());
        AlignedSeries {
            names,
            timestamps: (0..self.target.len() as i64).collect(),
            kind: TimeKind::DayIndex,
            columns,
        }
    }
}

/// `Y[t] = Σ_m Σ_l c_{m,l} X_m[t−l] + ε[t]` with `ε ~ N(0, σ²)`.
///
/// Each input is drawn with a burn-in of `max_len − 1` samples so that every
/// returned `Y[t]` sees a full delay line.
pub fn gen_fir_series<T: Real>(
    seed: u64,
    n: usize,
    coefficients: &[Vec<T>],
    process: InputProcess,
    noise_sigma: T,
) -> Result<FirSeries<T>> {
    let max_len = coefficients.iter().map(Vec::len).max().unwrap_or(0);
    if coefficients.is_empty() || max_len == 0 {
        return Err(Error::InvalidArgument("no channel coefficients".into()));
    }
    if n <= max_len {
        return Err(Error::InsufficientData {
            needed: max_len,
            available: n,
        });
    }
    if !(noise_sigma >= T::zero()) {
        return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
    }
    let burn = max_len - 1;
    let mut rng = seeded(seed);
    let draw = |rng: &mut crate::rng::SeededRng| -> T {
        match process {
            InputProcess::IidGaussian => T::lit(rng.sample::<f64, _>(StandardNormal)),
            InputProcess::IidBinary => {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            }
        }
    };
    let raw: Vec<Vec<T>> = coefficients
        .iter()
        .map(|_| (0..n + burn).map(|_| draw(&mut rng)).collect())
        .collect();
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        let mut y = T::zero();
        for (c, x) in coefficients.iter().zip(&raw) {
            for (l, &w) in c.iter().enumerate() {
                y += w * x[t + burn - l];
            }
        }
        if noise_sigma > T::zero() {
            y += noise_sigma * T::lit(rng.sample::<f64, _>(StandardNormal));
        }
        target.push(y);
    }
    let inputs = raw.into_iter().map(|x| x[burn..].to_vec()).collect();
    Ok(FirSeries { inputs, target })
}

/// Latent `Y` observed through several noisy channels:
/// `X_m[t] = Σ_l g_{m,l} Y[t−l] + σ_m ε_m[t]`.
///
/// `Y` is drawn from `process`; each channel gets its own independent noise.
pub fn gen_diversity_series<T: Real>(
    seed: u64,
    n: usize,
    channels: &[Vec<T>],
    noise_sigmas: &[T],
    process: InputProcess,
) -> Result<FirSeries<T>> {
    let max_len = channels.iter().map(Vec::len).max().unwrap_or(0);
    if channels.is_empty() || max_len == 0 {
        return Err(Error::InvalidArgument("no channel responses".into()));
    }
    if noise_sigmas.len() != channels.len() {
        return Err(Error::DimensionMismatch {
            what: "noise levels",
            expected: channels.len(),
            found: noise_sigmas.len(),
        });
    }
    if noise_sigmas.iter().any(|s| !(*s >= T::zero())) {
        return Err(Error::InvalidArgument("noise levels must be >= 0".into()));
    }
    if n <= max_len {
        return Err(Error::InsufficientData {
            needed: max_len,
            available: n,
        });
    }
    let burn = max_len - 1;
    let mut rng = seeded(seed);
    let latent: Vec<T> = (0..n + burn)
        .map(|_| match process {
            InputProcess::IidGaussian => T::lit(rng.sample::<f64, _>(StandardNormal)),
            InputProcess::IidBinary => {
                if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                }
            }
        })
        .collect();
    let inputs = channels
        .iter()
        .zip(noise_sigmas)
        .map(|(g, &sigma)| {
            (0..n)
                .map(|t| {
                    let clean: T = g
                        .iter()
                        .enumerate()
                        .map(|(l, &w)| w * latent[t + burn - l])
                        .sum();
                    clean + sigma * T::lit(rng.sample::<f64, _>(StandardNormal))
                })
                .collect()
        })
        .collect();
    Ok(FirSeries {
        inputs,
        target: latent[burn..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_channel() {
        let s = gen_fir_series(1, 50, &[vec![1.0]], InputProcess::IidGaussian, 0.0).unwrap();
        assert_eq!(s.target, s.inputs[0]);
    }

    #[test]
    fn two_tap_pointwise() {
        let s = gen_fir_series(2, 100, &[vec![0.5, -0.25]], InputProcess::IidBinary, 0.0).unwrap();
        let x = &s.inputs[0];
        assert!(x.iter().all(|v| *v == 1.0 || *v == -1.0));
        for t in 1..100 {
            assert_eq!(s.target[t], 0.5 * x[t] - 0.25 * x[t - 1]);
        }
    }

    #[test]
    fn deterministic() {
        let c = vec![vec![0.3, 0.2], vec![1.0, 0.0, -0.5]];
        let a = gen_fir_series(42, 300, &c, InputProcess::IidGaussian, 0.1).unwrap();
        let b = gen_fir_series(42, 300, &c, InputProcess::IidGaussian, 0.1).unwrap();
        assert_eq!(a, b);
        let d = gen_fir_series(43, 300, &c, InputProcess::IidGaussian, 0.1).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn noiseless_diversity_is_filtered_target() {
        let s = gen_diversity_series(
            5,
            80,
            &[vec![1.0, 0.5], vec![2.0]],
            &[0.0, 0.0],
            InputProcess::IidGaussian,
        )
        .unwrap();
        for t in 1..80 {
            assert_eq!(s.inputs[0][t], s.target[t] + 0.5 * s.target[t - 1]);
            assert_eq!(s.inputs[1][t], 2.0 * s.target[t]);
        }
        assert!(
            gen_diversity_series(5, 80, &[vec![1.0]], &[0.1, 0.2], InputProcess::IidGaussian)
                .is_err()
        );
    }

    #[test]
    fn rejects_short_series() {
        assert!(gen_fir_series(0, 2, &[vec![1.0, 0.5]], InputProcess::IidGaussian, 0.0).is_err());
    }
}
