//! Multivariate comparison methods with one lag window shared by every
//! regressor: ordinary least squares and a conjugate-Gaussian posterior
//! mean (ridge form).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Ols,
    Bayes,
}

/// `ŷ[n] = intercept + Σ_m Σ_l coefficients[m·(lag+1)+l] · x_m[n−l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    #[serde(rename = "type")]
    pub kind: LinearKind,
    pub coefficients: Vec<T>,
    pub intercept: T,
    pub common_lag: usize,
    pub residual_mse: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_variance: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<T>,
    #[serde(default)]
    pub degenerate: bool,
}

impl<T: Real> LinearModel<T> {
    pub fn inputs(&self) -> usize {
        self.coefficients.len() / (self.common_lag + 1)
    }

    pub fn coefficient(&self, input: usize, lag: usize) -> T {
        self.coefficients[input * (self.common_lag + 1) + lag]
    }
}

struct Design<T> {
    /// Centered regressors, one row per usable sample.
    rows: Vec<Vec<T>>,
    means: Vec<T>,
    target: Vec<T>,
    target_mean: T,
}

fn design<T: Real>(inputs: &[&[T]], y: &[T], lag: usize) -> Result<Design<T>> {
    if inputs.is_empty() {
        return Err(Error::NoData);
    }
    let n = y.len();
    if let Some(x) = inputs.iter().find(|x| x.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "regressor length",
            expected: n,
            found: x.len(),
        });
    }
    let p = inputs.len() * (lag + 1);
    let usable = n.saturating_sub(lag);
    if usable <= p + 1 {
        return Err(Error::InsufficientData {
            needed: p + 2 + lag,
            available: n,
        });
    }
    let mut rows: Vec<Vec<T>> = (lag..n)
        .map(|t| {
            inputs
                .iter()
                .flat_map(|x| (0..=lag).map(move |l| x[t - l]))
                .collect()
        })
        .collect();
    let count = T::from_usize_lossy(usable);
    let means: Vec<T> = (0..p)
        .map(|j| rows.iter().map(|r| r[j]).sum::<T>() / count)
        .collect();
    for r in &mut rows {
        for (v, m) in r.iter_mut().zip(&means) {
            *v -= *m;
        }
    }
    let target_mean = y[lag..].iter().copied().sum::<T>() / count;
    let target = y[lag..].iter().map(|&v| v - target_mean).collect();
    Ok(Design {
        rows,
        means,
        target,
        target_mean,
    })
}

fn fit<T: Real>(
    inputs: &[&[T]],
    y: &[T],
    lag: usize,
    ridge: T,
    kind: LinearKind,
) -> Result<LinearModel<T>> {
    let d = design(inputs, y, lag)?;
    let p = d.means.len();
    let mut gram = Matrix::from_fn(p, p, |i, j| d.rows.iter().map(|r| r[i] * r[j]).sum());
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    let rhs: Vec<T> = (0..p)
        .map(|j| d.rows.iter().zip(&d.target).map(|(r, &t)| r[j] * t).sum())
        .collect();
    let sol = solve_spd(&gram, &rhs)?;
    let beta = sol.x;
    let sse: T = d
        .rows
        .iter()
        .zip(&d.target)
        .map(|(r, &t)| {
            let e = t - r.iter().zip(&beta).map(|(&a, &b)| a * b).sum::<T>();
            e * e
        })
        .sum();
    let intercept = d.target_mean - beta.iter().zip(&d.means).map(|(&b, &m)| b * m).sum::<T>();
    Ok(LinearModel {
        kind,
        coefficients: beta,
        intercept,
        common_lag: lag,
        residual_mse: sse / T::from_usize_lossy(d.rows.len()),
        prior_variance: None,
        noise_variance: None,
        degenerate: sol.degenerate,
    })
}

/// Least squares of `y[n]` on `{x_m[n−l] : l ≤ lag}` plus an intercept.
pub fn fit_ols<T: Real>(inputs: &[&[T]], y: &[T], common_lag: usize) -> Result<LinearModel<T>> {
    fit(inputs, y, common_lag, T::zero(), LinearKind::Ols)
}

/// Posterior mean under `β ~ N(0, τ² I)` and noise variance `σ²`:
/// `β = (XᵀX + (σ²/τ²) I)⁻¹ Xᵀy` on centered data.
pub fn fit_bayes<T: Real>(
    inputs: &[&[T]],
    y: &[T],
    common_lag: usize,
    prior_variance: T,
    noise_variance: T,
) -> Result<LinearModel<T>> {
    if !(prior_variance > T::zero() && noise_variance > T::zero())
        || !prior_variance.is_finite()
        || !noise_variance.is_finite()
    {
        return Err(Error::InvalidArgument(
            "prior and noise variances must be positive".into(),
        ));
    }
    let mut m = fit(
        inputs,
        y,
        common_lag,
        noise_variance / prior_variance,
        LinearKind::Bayes,
    )?;
    m.prior_variance = Some(prior_variance);
    m.noise_variance = Some(noise_variance);
    Ok(m)
}

/// `fit_bayes` with `τ² = 1` and `σ²` set to the OLS residual variance.
pub fn fit_bayes_default<T: Real>(
    inputs: &[&[T]],
    y: &[T],
    common_lag: usize,
) -> Result<LinearModel<T>> {
    let ols = fit_ols(inputs, y, common_lag)?;
    let noise = if ols.residual_mse > T::zero() {
        ols.residual_mse
    } else {
        T::epsilon()
    };
    fit_bayes(inputs, y, common_lag, T::one(), noise)
}

pub fn predict<T: Real>(model: &LinearModel<T>, inputs: &[&[T]], n: usize) -> Result<T> {
    if inputs.len() != model.inputs() {
        return Err(Error::DimensionMismatch {
            what: "regressor count",
            expected: model.inputs(),
            found: inputs.len(),
        });
    }
    let lag = model.common_lag;
    if n < lag || inputs.iter().any(|x| n >= x.len()) {
        return Err(Error::InsufficientHistory {
            index: n,
            needed: lag,
        });
    }
    let mut acc = model.intercept;
    for (m, x) in inputs.iter().enumerate() {
        for l in 0..=lag {
            acc += model.coefficient(m, l) * x[n - l];
        }
    }
    Ok(acc)
}
