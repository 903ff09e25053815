//! Linear information coupling: divergence transition matrices, their
//! singular structure, perturbation vectors and score functions.

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd, Matrix};
use crate::scalar::Real;
use crate::stats::{Channel, DiscreteDistribution};

/// Singular values closer than this are treated as tied.
pub const SUBSPACE_TOL: f64 = 1e-9;
/// Entries of `psi_x` smaller than this never decide its sign.
pub const SIGN_TOL: f64 = 1e-9;

/// `B = [√P_Y]⁻¹ W [√P_X]` restricted to symbols of positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtm<T> {
    /// `|kept outputs| × |kept inputs|`.
    pub b: Matrix<T>,
    pub p_x: Vec<T>,
    pub p_y: Vec<T>,
    pub input_symbols: Vec<usize>,
    pub output_symbols: Vec<usize>,
    pub dropped_inputs: Vec<usize>,
    pub dropped_outputs: Vec<usize>,
    pub input_alphabet: usize,
    pub output_alphabet: usize,
}

impl<T: Real> Dtm<T> {
    pub fn sqrt_p_x(&self) -> Vec<T> {
        self.p_x.iter().map(|p| p.sqrt()).collect()
    }

    pub fn sqrt_p_y(&self) -> Vec<T> {
        self.p_y.iter().map(|p| p.sqrt()).collect()
    }

    /// Output marginal over the full output alphabet.
    pub fn output_distribution(&self) -> Vec<T> {
        let mut full = vec![T::zero(); self.output_alphabet];
        for (&s, &p) in self.output_symbols.iter().zip(&self.p_y) {
            full[s] = p;
        }
        full
    }
}

pub fn build_dtm<T: Real>(channel: &Channel<T>, p_x: &DiscreteDistribution<T>) -> Result<Dtm<T>> {
    if p_x.len() != channel.inputs() {
        return Err(Error::DimensionMismatch {
            what: "source alphabet",
            expected: channel.inputs(),
            found: p_x.len(),
        });
    }
    let p_y = channel.output(p_x)?;
    let (input_symbols, dropped_inputs): (Vec<usize>, Vec<usize>) =
        (0..p_x.len()).partition(|&x| p_x.probs()[x] > T::zero());
    let (output_symbols, dropped_outputs): (Vec<usize>, Vec<usize>) =
        (0..p_y.len()).partition(|&y| p_y.probs()[y] > T::zero());
    let px: Vec<T> = input_symbols.iter().map(|&x| p_x.probs()[x]).collect();
    let py: Vec<T> = output_symbols.iter().map(|&y| p_y.probs()[y]).collect();
    let b = Matrix::from_fn(output_symbols.len(), input_symbols.len(), |i, j| {
        channel.prob(output_symbols[i], input_symbols[j]) * px[j].sqrt() / py[i].sqrt()
    });
    Ok(Dtm {
        b,
        p_x: px,
        p_y: py,
        input_symbols,
        output_symbols,
        dropped_inputs,
        dropped_outputs,
        input_alphabet: channel.inputs(),
        output_alphabet: channel.outputs(),
    })
}

/// Kronecker product of two DTMs, with product marginals.
pub fn tensor_dtm<T: Real>(a: &Dtm<T>, b: &Dtm<T>) -> Dtm<T> {
    let pairs = |u: &[usize], v: &[usize], inner: usize| -> Vec<usize> {
        u.iter()
            .flat_map(|&i| v.iter().map(move |&j| i * inner + j))
            .collect()
    };
    let outer = |u: &[T], v: &[T]| -> Vec<T> {
        u.iter()
            .flat_map(|&p| v.iter().map(move |&q| p * q))
            .collect()
    };
    let input_symbols = pairs(&a.input_symbols, &b.input_symbols, b.input_alphabet);
    let output_symbols = pairs(&a.output_symbols, &b.output_symbols, b.output_alphabet);
    let input_alphabet = a.input_alphabet * b.input_alphabet;
    let output_alphabet = a.output_alphabet * b.output_alphabet;
    Dtm {
        b: a.b.kron(&b.b),
        p_x: outer(&a.p_x, &b.p_x),
        p_y: outer(&a.p_y, &b.p_y),
        dropped_inputs: (0..input_alphabet)
            .filter(|s| !input_symbols.contains(s))
            .collect(),
        dropped_outputs: (0..output_alphabet)
            .filter(|s| !output_symbols.contains(s))
            .collect(),
        input_symbols,
        output_symbols,
        input_alphabet,
        output_alphabet,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSolution<T> {
    /// Singular values of `B` in descending order; the first is the trivial one.
    pub singular_values: Vec<T>,
    /// Unit perturbation over the full input alphabet (zero on dropped symbols).
    pub psi_x: Vec<T>,
    /// `B·psi_x` over the full output alphabet (zero on dropped symbols).
    pub psi_y: Vec<T>,
    pub second_singular_value: T,
    pub degenerate_subspace: bool,
}

fn embed<T: Real>(values: &[T], symbols: &[usize], alphabet: usize) -> Vec<T> {
    let mut full = vec![T::zero(); alphabet];
    for (&s, &v) in symbols.iter().zip(values) {
        full[s] = v;
    }
    full
}

fn fix_sign<T: Real>(psi: &mut [T]) {
    if let Some(first) = psi.iter().find(|v| v.abs() > T::lit(SIGN_TOL)) {
        if *first < T::zero() {
            psi.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Projects the first standard basis vector with a usable component onto
/// the span of `basis` (orthonormal columns), then normalises.
fn canonical_in_span<T: Real>(basis: &[Vec<T>], dim: usize) -> Vec<T> {
    let mut best: Option<Vec<T>> = None;
    for j in 0..dim {
        let mut out = vec![T::zero(); dim];
        for b in basis {
            let c = b[j];
            for (o, &v) in out.iter_mut().zip(b) {
                *o += c * v;
            }
        }
        let n = norm(&out);
        if n > T::lit(1e-6) {
            out.iter_mut().for_each(|v| *v /= n);
            return out;
        }
        if best.as_ref().is_none_or(|b: &Vec<T>| n > norm(b)) {
            best = Some(out);
        }
    }
    let mut out = best.unwrap_or_else(|| vec![T::zero(); dim]);
    let n = norm(&out);
    if n > T::zero() {
        out.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Top singular direction of `B` orthogonal to `√p_x`.
///
/// The SVD is taken of `B(I − √p_x √p_xᵀ)`, whose spectrum is that of `B`
/// with the trivial singular value replaced by zero.
pub fn solve_coupling<T: Real>(dtm: &Dtm<T>) -> Result<CouplingSolution<T>> {
    let (ny, nx) = (dtm.b.rows(), dtm.b.cols());
    if nx < 2 || ny < 1 {
        return Err(Error::InvalidArgument(
            "coupling needs at least two input symbols of positive probability".into(),
        ));
    }
    let v = dtm.sqrt_p_x();
    let projector = Matrix::from_fn(nx, nx, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - v[i] * v[j]
    });
    let reduced = dtm.b.matmul(&projector)?;
    let d = svd(&reduced);
    let rank_bound = ny.min(nx) - 1;
    let trivial = norm(&dtm.b.matvec(&v)?);
    let mut singular_values = vec![trivial];
    singular_values.extend(d.s.iter().take(rank_bound).copied());
    let sigma2 = singular_values.get(1).copied().unwrap_or(T::zero());
    let sigma3 = singular_values.get(2).copied();
    let tol = T::lit(SUBSPACE_TOL);
    let degenerate = (trivial - sigma2).abs() <= tol
        || sigma3.is_some_and(|s3| (sigma2 - s3).abs() <= tol)
        || (sigma2 <= tol && rank_bound == 0);

    let floor = T::lit(1e-12).max(T::rank_tol());
    let basis: Vec<Vec<T>> = if sigma2 > floor {
        (0..d.s.len())
            .filter(|&k| d.s[k] >= sigma2 - tol)
            .map(|k| d.v.column(k))
            .collect()
    } else {
        // B' vanishes: every valid direction is optimal, so use an
        // orthonormal basis of the complement of √p_x.
        let mut basis: Vec<Vec<T>> = Vec::new();
        for j in 0..nx {
            let mut e = vec![T::zero(); nx];
            e[j] = T::one();
            for b in std::iter::once(&v).chain(basis.iter()) {
                let c = dot(&e, b);
                for (x, &y) in e.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
            let n = norm(&e);
            if n > T::lit(1e-6) {
                e.iter_mut().for_each(|x| *x /= n);
                basis.push(e);
            }
        }
        basis
    };
    let mut psi = if basis.len() == 1 {
        basis[0].clone()
    } else {
        canonical_in_span(&basis, nx)
    };
    // Remove any residual component along √p_x left by rounding.
    let c = dot(&psi, &v);
    for (p, &w) in psi.iter_mut().zip(&v) {
        *p -= c * w;
    }
    let n = norm(&psi);
    psi.iter_mut().for_each(|p| *p /= n);
    fix_sign(&mut psi);
    let psi_y = dtm.b.matvec(&psi)?;
    Ok(CouplingSolution {
        singular_values,
        psi_x: embed(&psi, &dtm.input_symbols, dtm.input_alphabet),
        psi_y: embed(&psi_y, &dtm.output_symbols, dtm.output_alphabet),
        second_singular_value: sigma2,
        degenerate_subspace: degenerate,
    })
}

/// `Q(x) = p_x(x) + sign·√(δ p_x(x))·ψ(x)`.
pub fn perturb_distribution<T: Real>(
    p_x: &DiscreteDistribution<T>,
    psi_x: &[T],
    delta: T,
    sign: i8,
) -> Result<DiscreteDistribution<T>> {
    if psi_x.len() != p_x.len() {
        return Err(Error::DimensionMismatch {
            what: "perturbation vector",
            expected: p_x.len(),
            found: psi_x.len(),
        });
    }
    if !(delta >= T::zero()) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delta must be >= 0, got {delta}"
        )));
    }
    let s = match sign {
        1 => T::one(),
        -1 => -T::one(),
        _ => return Err(Error::InvalidArgument("sign must be +1 or -1".into())),
    };
    let q: Vec<T> = p_x
        .probs()
        .iter()
        .zip(psi_x)
        .map(|(&p, &psi)| p + s * (delta * p).sqrt() * psi)
        .collect();
    if q.iter().any(|v| *v < T::zero()) {
        let max_delta = p_x
            .probs()
            .iter()
            .zip(psi_x)
            .filter(|(_, &psi)| s * psi < T::zero())
            .map(|(&p, &psi)| (p / (psi * psi)).as_f64())
            .fold(f64::INFINITY, f64::min);
        return Err(Error::DeltaTooLarge { max_delta });
    }
    DiscreteDistribution::new(q)
}

/// `(δ/2) Σ_u P_U(u) ‖ψ_u‖²` in nats.
pub fn local_mi_approx<T: Real>(
    p_u: &DiscreteDistribution<T>,
    psis: &[Vec<T>],
    delta: T,
) -> Result<T> {
    if psis.len() != p_u.len() {
        return Err(Error::DimensionMismatch {
            what: "perturbation count",
            expected: p_u.len(),
            found: psis.len(),
        });
    }
    let dim = psis[0].len();
    if let Some(p) = psis.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "perturbation length",
            expected: dim,
            found: p.len(),
        });
    }
    let energy: T = p_u
        .probs()
        .iter()
        .zip(psis)
        .map(|(&w, psi)| w * dot(psi, psi))
        .sum();
    Ok(delta / T::lit(2.0) * energy)
}

/// Score `f(y) = ψ_Y(y)/√P_Y(y)` for every output symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    pub scores: Vec<T>,
    /// Output symbols of zero probability, scored 0.
    pub dropped: Vec<usize>,
}

impl<T: Real> ScoreTable<T> {
    pub fn score(&self, symbol: usize) -> Option<T> {
        self.scores.get(symbol).copied()
    }
}

pub fn score_table<T: Real>(solution: &CouplingSolution<T>, dtm: &Dtm<T>) -> ScoreTable<T> {
    let mut scores = vec![T::zero(); dtm.output_alphabet];
    for (&s, &p) in dtm.output_symbols.iter().zip(&dtm.p_y) {
        scores[s] = solution.psi_y[s] / p.sqrt();
    }
    ScoreTable {
        scores,
        dropped: dtm.dropped_outputs.clone(),
    }
}

/// `Σ_i f(y_i)`.
pub fn sequence_score<T: Real>(table: &ScoreTable<T>, sequence: &[usize]) -> Result<T> {
    let mut acc = T::zero();
    for &y in sequence {
        acc += table.score(y).ok_or(Error::UnknownSymbol {
            symbol: y,
            alphabet: table.scores.len(),
        })?;
    }
    Ok(acc)
}

/// Score table keyed by symbol, written as a JSON object in symbol order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap<T>(pub Vec<T>);

impl<T: Serialize> Serialize for ScoreMap<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (i, v) in self.0.iter().enumerate() {
            map.serialize_entry(&i.to_string(), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de> + Default + Clone> Deserialize<'de> for ScoreMap<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Deserialize<'de> + Default + Clone> Visitor<'de> for V<T> {
            type Value = ScoreMap<T>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from symbol index to score")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut out: Vec<T> = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, T>()? {
                    let i: usize = k.parse().map_err(serde::de::Error::custom)?;
                    if out.len() <= i {
                        out.resize(i + 1, T::default());
                    }
                    out[i] = v;
                }
                Ok(ScoreMap(out))
            }
        }
        deserializer.deserialize_map(V(std::marker::PhantomData))
    }
}

/// JSON form of a solved coupling problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct CouplingReport<T> {
    pub sigma: Vec<T>,
    pub psi_x: Vec<T>,
    pub psi_y: Vec<T>,
    pub score: ScoreMap<T>,
    pub dropped_outputs: Vec<usize>,
    pub degenerate_subspace: bool,
}

impl<T: Real> CouplingReport<T> {
    pub fn new(solution: &CouplingSolution<T>, table: &ScoreTable<T>) -> Self {
        Self {
            sigma: solution.singular_values.clone(),
            psi_x: solution.psi_x.clone(),
            psi_y: solution.psi_y.clone(),
            score: ScoreMap(table.scores.clone()),
            dropped_outputs: table.dropped.clone(),
            degenerate_subspace: solution.degenerate_subspace,
        }
    }
}
