//! Discrete distributions, memoryless channels and exact information
//! measures. Everything is in nats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Probability mass function over `K ≥ 2` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T> {
    probs: Vec<T>,
}

impl<T: Real> DiscreteDistribution<T> {
    /// Validates non-negativity and normalisation (tolerance `T::prob_tol()`).
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "alphabet must have at least 2 symbols, got {}",
                probs.len()
            )));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < T::zero())
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {k} is {p}, must be a finite non-negative number"
            )));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::prob_tol() {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|&w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        let p = T::one() / T::from_usize_lossy(k.max(1));
        Self::new(vec![p; k])
    }

    /// Relative frequencies of `samples` over the alphabet `[0, k)`.
    pub fn empirical(samples: &[usize], k: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoData);
        }
        let mut counts = vec![0usize; k];
        for (position, &s) in samples.iter().enumerate() {
            if s >= k {
                return Err(Error::SymbolOutOfRange {
                    position,
                    symbol: s,
                    alphabet: k,
                });
            }
            counts[s] += 1;
        }
        Self::from_counts(&counts)
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::NoData);
        }
        let n = T::from_usize_lossy(n);
        Self::new(counts.iter().map(|&c| T::from_usize_lossy(c) / n).collect())
    }

    /// Adds `constant` to every entry and renormalises.
    pub fn smoothed(&self, constant: T) -> Result<Self> {
        let w: Vec<T> = self.probs.iter().map(|&p| p + constant).collect();
        Self::from_weights(&w)
    }

    #[inline]
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sqrt(&self) -> Vec<T> {
        self.probs.iter().map(|p| p.sqrt()).collect()
    }

    /// Product distribution `self ⊗ other`, symbol `(a, b)` mapped to `a·|other| + b`.
    pub fn product(&self, other: &Self) -> Self {
        let probs = self
            .probs
            .iter()
            .flat_map(|&a| other.probs.iter().map(move |&b| a * b))
            .collect();
        Self { probs }
    }
}

/// Column-stochastic transition matrix; entry `(y, x)` is `W(y|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T> {
    matrix: Matrix<T>,
}

impl<T: Real> Channel<T> {
    pub fn new(matrix: Matrix<T>) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::InvalidChannel("empty matrix".into()));
        }
        for i in 0..matrix.rows() {
            for j in 0..matrix.cols() {
                let w = matrix[(i, j)];
                if !(w >= T::zero() && w <= T::one()) {
                    return Err(Error::InvalidChannel(format!(
                        "entry ({i},{j}) = {w} is outside [0, 1]"
                    )));
                }
            }
        }
        for j in 0..matrix.cols() {
            let s: T = matrix.column(j).into_iter().sum();
            if (s - T::one()).abs() > T::prob_tol() {
                return Err(Error::InvalidChannel(format!(
                    "column {j} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(k: usize) -> Self {
        Self {
            matrix: Matrix::identity(k),
        }
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn binary_symmetric(p: T) -> Result<Self> {
        let q = T::one() - p;
        Self::from_rows(&[vec![q, p], vec![p, q]])
    }

    /// Channel whose every column equals `output`: the output carries no
    /// information about the input.
    pub fn constant(output: &DiscreteDistribution<T>, inputs: usize) -> Self {
        let k = output.len();
        Self {
            matrix: Matrix::from_fn(k, inputs, |y, _| output.probs()[y]),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.matrix.cols()
    }

    #[inline]
    pub fn prob(&self, y: usize, x: usize) -> T {
        self.matrix[(y, x)]
    }

    /// Output distribution for input symbol `x`, i.e. column `x`.
    pub fn column(&self, x: usize) -> Vec<T> {
        self.matrix.column(x)
    }

    /// `P_Y = W · P_X`.
    pub fn output(&self, input: &DiscreteDistribution<T>) -> Result<DiscreteDistribution<T>> {
        if input.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                what: "channel input",
                expected: self.inputs(),
                found: input.len(),
            });
        }
        let mut py = self.matrix.matvec(input.probs())?;
        // Clamp rounding noise so the normalisation check sees a proper pmf.
        for p in &mut py {
            if *p < T::zero() {
                *p = T::zero();
            }
        }
        DiscreteDistribution::new(py)
    }

    /// Channel applying `self` and `other` independently to the two
    /// coordinates of a product symbol.
    pub fn product(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix.kron(&other.matrix),
        }
    }
}

/// Largest noise level for which [`parametric_channel`] stays stochastic.
pub const MAX_NOISE_LEVEL: f64 = 0.25;

/// The four-symbol noise channel used for the pixel experiments.
///
/// Entries are affine in `e`; each column sums to one.
///
/// ```text
///   1-2e   2e    e     e/2
///   e      1-3e  2e    e/4
///   e      0     1-4e  e/4
///   0      e     e     1-e
/// ```
pub fn parametric_channel<T: Real>(e: T) -> Result<Channel<T>> {
    if !(e >= T::zero() && e <= T::lit(MAX_NOISE_LEVEL)) {
        return Err(Error::NoiseOutOfRange(e.as_f64()));
    }
    let one = T::one();
    let c = T::lit;
    let rows = vec![
        vec![one - c(2.0) * e, c(2.0) * e, e, e / c(2.0)],
        vec![e, one - c(3.0) * e, c(2.0) * e, e / c(4.0)],
        vec![e, T::zero(), one - c(4.0) * e, e / c(4.0)],
        vec![T::zero(), e, e, one - e],
    ];
    Channel::from_rows(&rows)
}

/// `D(p ‖ q)` in nats with `0·log 0 = 0`. Infinite when `p` puts mass
/// where `q` has none.
pub fn kl_divergence<T: Real>(p: &[T], q: &[T]) -> T {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= T::zero() {
                T::zero()
            } else if qi <= T::zero() {
                T::infinity()
            } else {
                // p ln(p/q) = p ln(1 + (p-q)/q), accurate when p ≈ q.
                pi * ((pi - qi) / qi).ln_1p()
            }
        })
        .sum()
}

/// `I(U;X) = Σ_u P_U(u) D(P_{X|U=u} ‖ P_X)` with `P_X` the induced mixture.
pub fn exact_mutual_information<T: Real>(
    p_u: &DiscreteDistribution<T>,
    conditionals: &[DiscreteDistribution<T>],
) -> Result<T> {
    if conditionals.len() != p_u.len() {
        return Err(Error::DimensionMismatch {
            what: "conditional count",
            expected: p_u.len(),
            found: conditionals.len(),
        });
    }
    let k = conditionals[0].len();
    if let Some(c) = conditionals.iter().find(|c| c.len() != k) {
        return Err(Error::DimensionMismatch {
            what: "conditional length",
            expected: k,
            found: c.len(),
        });
    }
    let mut p_x = vec![T::zero(); k];
    for (&w, c) in p_u.probs().iter().zip(conditionals) {
        for (acc, &p) in p_x.iter_mut().zip(c.probs()) {
            *acc += w * p;
        }
    }
    let mi: T = p_u
        .probs()
        .iter()
        .zip(conditionals)
        .filter(|(w, _)| **w > T::zero())
        .map(|(&w, c)| w * kl_divergence(c.probs(), &p_x))
        .sum();
    Ok(mi.max(T::zero()))
}

/// On-disk channel layout: row-major, row = output symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub outputs: usize,
    pub inputs: usize,
    pub matrix: Vec<Vec<f64>>,
}

/// On-disk distribution layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionFile {
    pub probs: Vec<f64>,
}

impl<T: Real> From<&Channel<T>> for ChannelFile {
    fn from(c: &Channel<T>) -> Self {
        Self {
            outputs: c.outputs(),
            inputs: c.inputs(),
            matrix: c
                .matrix()
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(Real::as_f64).collect())
                .collect(),
        }
    }
}

impl ChannelFile {
    pub fn into_channel<T: Real>(self) -> Result<Channel<T>> {
        if self.matrix.len() != self.outputs {
            return Err(Error::DimensionMismatch {
                what: "channel file rows",
                expected: self.outputs,
                found: self.matrix.len(),
            });
        }
        if let Some(r) = self.matrix.iter().find(|r| r.len() != self.inputs) {
            return Err(Error::DimensionMismatch {
                what: "channel file columns",
                expected: self.inputs,
                found: r.len(),
            });
        }
        let rows: Vec<Vec<T>> = self
            .matrix
            .iter()
            .map(|r| r.iter().map(|&v| T::lit(v)).collect())
            .collect();
        Channel::from_rows(&rows)
    }
}

impl DistributionFile {
    pub fn into_distribution<T: Real>(self) -> Result<DiscreteDistribution<T>> {
        DiscreteDistribution::new(self.probs.into_iter().map(T::lit).collect())
    }
}

impl<T: Real> From<&DiscreteDistribution<T>> for DistributionFile {
    fn from(d: &DiscreteDistribution<T>) -> Self {
        Self {
            probs: d.probs().iter().map(|p| p.as_f64()).collect(),
        }
    }
}

fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_channel<T: Real>(path: &Path) -> Result<Channel<T>> {
    read_json::<ChannelFile>(path)?.into_channel()
}

pub fn load_distribution<T: Real>(path: &Path) -> Result<DiscreteDistribution<T>> {
    read_json::<DistributionFile>(path)?.into_distribution()
}
