//! Combining independently equalized channels into one estimate:
//! `ŷ[n] = Σ_m α_m ŷ_m[n]`.
//!
//! Each channel keeps its own equalizer length; the channels are never
//! refitted jointly.

use serde::{Deserialize, Serialize};

use crate::equalizer::{infer, EqualizerMode, EqualizerModel};
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CombiningMode {
    /// `α_m ∝ 1 / mse_m`, normalised to sum to one.
    #[default]
    MrcInverseMse,
    /// Unconstrained least-squares combiner over the training window.
    MrcLmmse,
    EqualGain,
    /// All weight on the channel with the smallest training MSE.
    Selective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionChannel<T> {
    pub name: String,
    pub model: EqualizerModel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel<T> {
    pub mode: CombiningMode,
    pub alphas: Vec<T>,
    pub channels: Vec<FusionChannel<T>>,
    #[serde(default)]
    pub degenerate: bool,
}

/// `α_m = (1/mse_m) / Σ_k (1/mse_k)`. Zero-MSE channels share all the weight.
pub fn mrc_weights_inverse_mse<T: Real>(mses: &[T]) -> Result<Vec<T>> {
    if mses.is_empty() {
        return Err(Error::NoData);
    }
    if let Some(m) = mses.iter().find(|m| !(m.is_finite() && **m >= T::zero())) {
        return Err(Error::InvalidArgument(format!("invalid channel MSE {m}")));
    }
    let zeros = mses.iter().filter(|m| **m == T::zero()).count();
    if zeros > 0 {
        let share = T::one() / T::from_usize_lossy(zeros);
        return Ok(mses
            .iter()
            .map(|&m| if m == T::zero() { share } else { T::zero() })
            .collect());
    }
    let total: T = mses.iter().map(|&m| T::one() / m).sum();
    Ok(mses.iter().map(|&m| (T::one() / m) / total).collect())
}

pub fn equal_gain_weights<T: Real>(channels: usize) -> Vec<T> {
    vec![T::one() / T::from_usize_lossy(channels.max(1)); channels]
}

/// One-hot on the smallest MSE; the first channel wins ties.
pub fn selective_weights<T: Real>(mses: &[T]) -> Result<Vec<T>> {
    if mses.is_empty() {
        return Err(Error::NoData);
    }
    let mut best = 0;
    for (i, &m) in mses.iter().enumerate() {
        if m < mses[best] {
            best = i;
        }
    }
    Ok((0..mses.len())
        .map(|i| if i == best { T::one() } else { T::zero() })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmseWeights<T> {
    pub alphas: Vec<T>,
    pub degenerate: bool,
}

/// Solves `E[ŷ ŷᵀ] α = E[ŷ y]` over the window covered by `predictions`.
pub fn mrc_weights_lmmse<T: Real>(predictions: &[Vec<T>], y: &[T]) -> Result<LmmseWeights<T>> {
    let m = predictions.len();
    if m == 0 {
        return Err(Error::NoData);
    }
    let n = y.len();
    if let Some(p) = predictions.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "channel prediction length",
            expected: n,
            found: p.len(),
        });
    }
    if n < m {
        return Err(Error::InsufficientData {
            needed: m,
            available: n,
        });
    }
    let count = T::from_usize_lossy(n);
    let gram = Matrix::from_fn(m, m, |i, j| {
        predictions[i]
            .iter()
            .zip(&predictions[j])
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            / count
    });
    let rhs: Vec<T> = predictions
        .iter()
        .map(|p| p.iter().zip(y).map(|(&a, &b)| a * b).sum::<T>() / count)
        .collect();
    let sol = solve_spd(&gram, &rhs)?;
    Ok(LmmseWeights {
        alphas: sol.x,
        degenerate: sol.degenerate,
    })
}

/// First row at which every channel has a full delay line.
fn first_common_row<T>(channels: &[FusionChannel<T>]) -> usize {
    channels.iter().map(|c| c.model.length).max().unwrap_or(0)
}

fn common_mode<T>(channels: &[FusionChannel<T>]) -> Result<EqualizerMode> {
    let mode = channels.first().ok_or(Error::NoData)?.model.mode;
    if channels.iter().any(|c| c.model.mode != mode) {
        return Err(Error::InvalidArgument(
            "fused channels mix infer and predict equalizers".into(),
        ));
    }
    Ok(mode)
}

/// Per-channel equalizer outputs on every row where all channels are
/// defined, paired with the matching target samples.
pub fn channel_outputs<T: Real>(
    channels: &[FusionChannel<T>],
    inputs: &[&[T]],
    y: &[T],
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    if inputs.len() != channels.len() {
        return Err(Error::DimensionMismatch {
            what: "fusion inputs",
            expected: channels.len(),
            found: inputs.len(),
        });
    }
    let h = common_mode(channels)?.horizon();
    let start = first_common_row(channels);
    let end = y.len().saturating_sub(h);
    if start >= end {
        return Err(Error::InsufficientData {
            needed: start + h + 1,
            available: y.len(),
        });
    }
    let preds = channels
        .iter()
        .zip(inputs)
        .map(|(c, x)| c.model.outputs(x, start..end))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds, y[start + h..end + h].to_vec()))
}

impl<T: Real> FusionModel<T> {
    /// Validates the combining-weight invariants for `mode`.
    pub fn new(
        mode: CombiningMode,
        alphas: Vec<T>,
        channels: Vec<FusionChannel<T>>,
    ) -> Result<Self> {
        if channels.is_empty() || alphas.len() != channels.len() {
            return Err(Error::DimensionMismatch {
                what: "combining weights",
                expected: channels.len(),
                found: alphas.len(),
            });
        }
        common_mode(&channels)?;
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite combining weight".into()));
        }
        let tol = T::lit(1e-9);
        match mode {
            CombiningMode::MrcInverseMse | CombiningMode::EqualGain => {
                let sum: T = alphas.iter().copied().sum();
                if alphas.iter().any(|a| *a < T::zero()) || (sum - T::one()).abs() > tol {
                    return Err(Error::InvalidArgument(
                        "weights must be non-negative and sum to one".into(),
                    ));
                }
            }
            CombiningMode::Selective => {
                let ones = alphas.iter().filter(|a| **a == T::one()).count();
                let zeros = alphas.iter().filter(|a| **a == T::zero()).count();
                if ones != 1 || ones + zeros != alphas.len() {
                    return Err(Error::InvalidArgument(
                        "selective combining needs exactly one unit weight".into(),
                    ));
                }
            }
            CombiningMode::MrcLmmse => {}
        }
        Ok(Self {
            mode,
            alphas,
            channels,
            degenerate: false,
        })
    }

    /// Static weights for `mode`. MSE-driven modes use each channel's
    /// training MSE; LMMSE needs the training inputs and target.
    pub fn fit(
        mode: CombiningMode,
        channels: Vec<FusionChannel<T>>,
        training: Option<(&[&[T]], &[T])>,
    ) -> Result<Self> {
        let mses: Vec<T> = channels.iter().map(|c| c.model.training_mse).collect();
        let (alphas, degenerate) = match mode {
            CombiningMode::MrcInverseMse => (mrc_weights_inverse_mse(&mses)?, false),
            CombiningMode::EqualGain => (equal_gain_weights(channels.len()), false),
            CombiningMode::Selective => (selective_weights(&mses)?, false),
            CombiningMode::MrcLmmse => {
                let (inputs, y) = training.ok_or_else(|| {
                    Error::InvalidArgument("LMMSE combining needs training data".into())
                })?;
                let (preds, target) = channel_outputs(&channels, inputs, y)?;
                let w = mrc_weights_lmmse(&preds, &target)?;
                (w.alphas, w.degenerate)
            }
        };
        let mut model = Self::new(mode, alphas, channels)?;
        model.degenerate = degenerate;
        Ok(model)
    }

    pub fn mode_of_channels(&self) -> EqualizerMode {
        self.channels[0].model.mode
    }

    pub fn with_alphas(&self, alphas: Vec<T>) -> Self {
        Self {
            alphas,
            ..self.clone()
        }
    }
}

/// `ŷ[n] = Σ_m α_m · infer(model_m, x_m, n)`.
pub fn fuse<T: Real>(model: &FusionModel<T>, inputs: &[&[T]], n: usize) -> Result<T> {
    if inputs.len() != model.channels.len() {
        return Err(Error::DimensionMismatch {
            what: "fusion inputs",
            expected: model.channels.len(),
            found: inputs.len(),
        });
    }
    let mut acc = T::zero();
    for ((c, &a), x) in model.channels.iter().zip(&model.alphas).zip(inputs) {
        acc += a * infer(&c.model, x, n)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy<T> {
    /// Keep the `N_c` channels with the smallest validation MSE.
    TopK(usize),
    /// Keep channels whose validation MSE is at most `τ`.
    MseThreshold(T),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSelection {
    /// Kept channel indices, in input order.
    pub indices: Vec<usize>,
    /// Threshold admitted nothing, so the single best channel was kept.
    pub forced_best: bool,
    pub warning: Option<String>,
}

/// Chooses which channels take part in fusion. Ranking ties are broken by
/// channel name, then input position.
pub fn select_channels<T: Real>(
    channels: &[FusionChannel<T>],
    policy: SelectionPolicy<T>,
) -> Result<ChannelSelection> {
    if channels.is_empty() {
        return Err(Error::NoData);
    }
    let mut ranked: Vec<usize> = (0..channels.len()).collect();
    ranked.sort_by(|&a, &b| {
        let (ca, cb) = (&channels[a], &channels[b]);
        ca.model
            .validation_mse
            .partial_cmp(&cb.model.validation_mse)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| ca.name.cmp(&cb.name))
            .then(a.cmp(&b))
    });
    let (mut indices, forced_best, warning) = match policy {
        SelectionPolicy::TopK(k) => {
            let warning = (k > channels.len()).then(|| {
                format!(
                    "requested {k} channels but only {} available; keeping all",
                    channels.len()
                )
            });
            let k = k.clamp(1, channels.len());
            (ranked[..k].to_vec(), false, warning)
        }
        SelectionPolicy::MseThreshold(tau) => {
            let kept: Vec<usize> = ranked
                .iter()
                .copied()
                .filter(|&i| channels[i].model.validation_mse <= tau)
                .collect();
            if kept.is_empty() {
                (vec![ranked[0]], true, None)
            } else {
                (kept, false, None)
            }
        }
    };
    indices.sort_unstable();
    Ok(ChannelSelection {
        indices,
        forced_best,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaUpdate<T> {
    pub model: FusionModel<T>,
    /// False when no channel had any completed error to average.
    pub updated: bool,
    /// The window was longer than the available history.
    pub truncated: bool,
}

/// Recomputes inverse-MSE weights from each channel's trailing `window`
/// squared errors.
pub fn online_alpha_update<T: Real>(
    model: &FusionModel<T>,
    recent_sq_errors: &[Vec<T>],
    window: usize,
) -> Result<AlphaUpdate<T>> {
    if model.mode != CombiningMode::MrcInverseMse {
        return Err(Error::InvalidArgument(
            "online weight updates require inverse-MSE combining".into(),
        ));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    if recent_sq_errors.len() != model.channels.len() {
        return Err(Error::DimensionMismatch {
            what: "error histories",
            expected: model.channels.len(),
            found: recent_sq_errors.len(),
        });
    }
    if recent_sq_errors.iter().any(Vec::is_empty) {
        return Ok(AlphaUpdate {
            model: model.clone(),
            updated: false,
            truncated: false,
        });
    }
    let truncated = recent_sq_errors.iter().any(|e| e.len() < window);
    let mses: Vec<T> = recent_sq_errors
        .iter()
        .map(|e| {
            let tail = &e[e.len().saturating_sub(window)..];
            tail.iter().copied().sum::<T>() / T::from_usize_lossy(tail.len())
        })
        .collect();
    Ok(AlphaUpdate {
        model: model.with_alphas(mrc_weights_inverse_mse(&mses)?),
        updated: true,
        truncated,
    })
}

/// Fused outputs over `rows` with inverse-MSE weights refreshed after every
/// observed target from the trailing `window` squared errors. The first
/// row uses the model's static weights.
pub fn fuse_online<T: Real>(
    model: &FusionModel<T>,
    inputs: &[&[T]],
    y: &[T],
    rows: std::ops::Range<usize>,
    window: usize,
) -> Result<Vec<T>> {
    let h = model.mode_of_channels().horizon();
    let mut current = model.clone();
    let mut errors: Vec<Vec<T>> = vec![Vec::new(); model.channels.len()];
    let mut out = Vec::with_capacity(rows.len());
    for n in rows {
        let outputs = model
            .channels
            .iter()
            .zip(inputs)
            .map(|(c, x)| infer(&c.model, x, n))
            .collect::<Result<Vec<T>>>()?;
        out.push(
            outputs
                .iter()
                .zip(&current.alphas)
                .map(|(&o, &a)| a * o)
                .sum(),
        );
        let target = *y.get(n + h).ok_or(Error::InsufficientData {
            needed: n + h + 1,
            available: y.len(),
        })?;
        for (e, o) in errors.iter_mut().zip(&outputs) {
            e.push((target - *o) * (target - *o));
            if e.len() > window {
                e.remove(0);
            }
        }
        current = online_alpha_update(&current, &errors, window)?.model;
    }
    Ok(out)
}
