//! Points, directions and counts on the extended multinomial simplex.
//!
//! A [`ProbabilityVector`] is a point of the closed simplex over `k + 1`
//! categories. Boundary points are stored with exact zeros; the support is
//! recomputed from the entries. Mixture (−1) geometry acts by adding
//! [`MixDirection`]s, exponential (+1) geometry by tilting.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance for simplex invariants.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Largest normalization drift that is silently corrected.
pub const MAX_RENORMALIZE_DRIFT: f64 = 1e-9;

/// A point of the closed simplex over `k + 1` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates the entries. Drift of the total up to
    /// [`MAX_RENORMALIZE_DRIFT`] is removed by one renormalization; larger
    /// drift is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(
                "a probability vector needs at least two categories".into(),
            ));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "entry {i} is {p}; probabilities must be finite and non-negative"
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("probability vector has empty support".into()));
        }
        let drift = (total - 1.0).abs();
        if drift > MAX_RENORMALIZE_DRIFT {
            return Err(Error::InvalidInput(format!(
                "entries sum to {total}, drift {drift:e} exceeds {MAX_RENORMALIZE_DRIFT:e}"
            )));
        }
        let probs = if drift > 0.0 {
            probs.into_iter().map(|p| p / total).collect()
        } else {
            probs
        };
        Ok(Self { probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput(
                "weights must be non-negative with a positive finite total".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n_categories: usize) -> Result<Self> {
        Self::new(vec![1.0 / n_categories as f64; n_categories])
    }

    pub fn vertex(n_categories: usize, index: usize) -> Result<Self> {
        if index >= n_categories {
            return Err(Error::InvalidInput(format!(
                "vertex {index} out of range for {n_categories} categories"
            )));
        }
        let mut probs = vec![0.0; n_categories];
        probs[index] = 1.0;
        Self::new(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Number of categories, `k + 1`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Simplex dimension `k`.
    pub fn dim(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn support(&self) -> Vec<usize> {
        self.support_with(0.0)
    }

    /// Indices whose entry exceeds `threshold`.
    pub fn support_with(&self, threshold: f64) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > threshold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

impl Serialize for ProbabilityVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            probabilities: &'a [f64],
            support: Vec<usize>,
        }
        Repr {
            probabilities: &self.probs,
            support: self.support(),
        }
        .serialize(serializer)
    }
}

/// A tangent vector of the mixture geometry: components sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixDirection {
    components: Vec<f64>,
}

impl MixDirection {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(components, SIMPLEX_TOL)
    }

    /// The zero-sum check is scaled by `1 + ‖v‖₁`.
    pub fn with_tolerance(components: Vec<f64>, tol: f64) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("direction has non-finite components".into()));
        }
        let sum: f64 = components.iter().sum();
        let scale = 1.0 + components.iter().map(|c| c.abs()).sum::<f64>();
        if sum.abs() > tol * scale {
            return Err(Error::InvalidInput(format!(
                "direction components sum to {sum:e}, not zero"
            )));
        }
        Ok(Self { components })
    }

    /// The difference `to − from` of two points of the simplex.
    pub fn between(from: &ProbabilityVector, to: &ProbabilityVector) -> Result<Self> {
        check_len(from.len(), to.len())?;
        Self::with_tolerance(
            to.as_slice()
                .iter()
                .zip(from.as_slice())
                .map(|(a, b)| a - b)
                .collect(),
            1e-10,
        )
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            components: vec![0.0; len],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Observed bin counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInput(
                "count vector needs at least two categories".into(),
            ));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidInput("all counts are zero".into()));
        }
        Ok(Self { counts, total })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sample size `N`.
    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Partition of the bins into observed (`n_i > 0`) and unobserved indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Faces {
    pub observed: Vec<usize>,
    pub unobserved: Vec<usize>,
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// The global maximizer `n_i / N` of the multinomial likelihood.
pub fn normalize_counts(counts: &CountVector) -> Result<ProbabilityVector> {
    let n = counts.total() as f64;
    ProbabilityVector::new(counts.as_slice().iter().map(|&c| c as f64 / n).collect())
}

/// `∑_{n_i > 0} n_i log π_i`; `−∞` when an observed bin has zero mass.
pub fn log_likelihood(counts: &CountVector, pi: &ProbabilityVector) -> Result<f64> {
    check_len(counts.len(), pi.len())?;
    Ok(log_likelihood_unchecked(counts.as_slice(), pi.as_slice()))
}

pub(crate) fn log_likelihood_unchecked(counts: &[u64], probs: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&n, &p) in counts.iter().zip(probs) {
        if n == 0 {
            continue;
        }
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += n as f64 * p.ln();
    }
    total
}

pub fn observed_faces(counts: &CountVector) -> Faces {
    let (observed, unobserved): (Vec<usize>, Vec<usize>) =
        (0..counts.len()).partition(|&i| counts.as_slice()[i] > 0);
    Faces {
        observed,
        unobserved,
    }
}

/// Splits `v` into a part that is invisible to the likelihood (zero on the
/// observed face) and a part supported on the observed face plus `k_star`.
pub fn decompose_direction(
    v: &MixDirection,
    counts: &CountVector,
    k_star: usize,
) -> Result<(MixDirection, MixDirection)> {
    check_len(counts.len(), v.len())?;
    if k_star >= counts.len() || counts.as_slice()[k_star] > 0 {
        return Err(Error::NotInUnobservedFace { index: k_star });
    }
    let n = v.len();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut moved = 0.0;
    for i in 0..n {
        if i == k_star {
            continue;
        }
        if counts.as_slice()[i] > 0 {
            y[i] = v.as_slice()[i];
        } else {
            x[i] = v.as_slice()[i];
            moved += v.as_slice()[i];
        }
    }
    x[k_star] = -moved;
    y[k_star] = v.as_slice()[k_star] + moved;
    Ok((
        MixDirection { components: x },
        MixDirection { components: y },
    ))
}

/// The mixture geodesic `π + t v`.
pub fn mix_geodesic(pi: &ProbabilityVector, v: &MixDirection, t: f64) -> Result<ProbabilityVector> {
    check_len(pi.len(), v.len())?;
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for (&p, &c) in pi.as_slice().iter().zip(v.as_slice()) {
        if c < 0.0 {
            t_max = t_max.min(p / -c);
        } else if c > 0.0 {
            t_min = t_min.max(-p / c);
        }
    }
    let mut out = Vec::with_capacity(pi.len());
    for (&p, &c) in pi.as_slice().iter().zip(v.as_slice()) {
        let value = p + t * c;
        if value < -SIMPLEX_TOL {
            return Err(Error::OutOfSimplex { t_min, t_max });
        }
        out.push(value.max(0.0));
    }
    ProbabilityVector::new(out)
}

/// The exponential geodesic through a strictly positive `π` in direction `b`.
pub fn exp_geodesic(pi: &ProbabilityVector, b: &[f64], theta: f64) -> Result<ProbabilityVector> {
    check_len(pi.len(), b.len())?;
    if !pi.is_interior() {
        return Err(Error::InvalidBasePoint(
            "exponential tilting needs a strictly positive base point".into(),
        ));
    }
    let logits: Vec<f64> = pi
        .as_slice()
        .iter()
        .zip(b)
        .map(|(p, bi)| p.ln() + theta * bi)
        .collect();
    ProbabilityVector::new(softmax(&logits))
}

/// Normalized exponentials with max subtraction. `−∞` entries map to zero.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `‖v‖_π = sqrt(∑ v_i² / π_i)`.
pub fn preferred_norm(v: &MixDirection, pi: &ProbabilityVector) -> Result<f64> {
    check_len(pi.len(), v.len())?;
    weighted_norm(v.as_slice(), pi.as_slice())
}

/// The preferred-point norm for an arbitrary vector and anchor weights.
pub fn weighted_norm(v: &[f64], anchor: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, (&vi, &a)) in v.iter().zip(anchor).enumerate() {
        if vi == 0.0 {
            continue;
        }
        if a <= 0.0 {
            return Err(Error::UndefinedNorm { index: i });
        }
        total += vi * vi / a;
    }
    Ok(total.sqrt())
}
