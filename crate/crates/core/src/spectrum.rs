//! Fisher information of the multinomial chart and its closed-form spectrum.
//!
//! With bin 0 omitted, `I(π) = diag(p) − p pᵀ` where `p = (π₁, …, π_k)`.
//! Group the positive entries of `p` into distinct values `λ₁ > … > λ_g`
//! with multiplicities `m_j`. The spectrum then consists of
//!
//! * a zero for every bin `i ≥ 1` with `π_i = 0`,
//! * `λ_j` with multiplicity `m_j − 1` (contrasts within a block),
//! * `g` simple values `λ̃`, the roots of the secular function
//!   `h(x) = π₀ + x Σ m_j λ_j / (x − λ_j)`, one in each gap `(λ_{j+1}, λ_j)`
//!   and one in `[0, λ_g)`.
//!
//! Roots are stored as an offset from the nearest pole so that values
//! squeezed against a `λ_j` keep full relative accuracy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::ProbabilityVector;

/// Relative threshold for merging equal probabilities into one block.
pub const DEFAULT_GROUPING_TOL: f64 = 1e-12;

/// Relative gap below which `(λ_j, λ̃_j)` is reported as a near replicate.
pub const DEFAULT_NEAR_REPLICATE_TOL: f64 = 0.05;

const BISECTION_REL_WIDTH: f64 = 1e-14;
const MAX_BISECTION_STEPS: usize = 4000;

pub fn fisher_matrix(pi: &ProbabilityVector) -> DMatrix<f64> {
    let p = &pi.as_slice()[1..];
    let k = p.len();
    DMatrix::from_fn(k, k, |i, j| {
        let off = -p[i] * p[j];
        if i == j {
            p[i] + off
        } else {
            off
        }
    })
}

/// One block of equal probabilities among bins `1..=k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGroup {
    pub value: f64,
    /// Bin indices (into the full `0..=k` labelling) carrying this value.
    pub bins: Vec<usize>,
}

impl ValueGroup {
    pub fn multiplicity(&self) -> usize {
        self.bins.len()
    }
}

/// A root of the secular function, stored as `anchor + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecularRoot {
    pub value: f64,
    /// Index of the group whose pole anchors the offset; `None` anchors at 0.
    #[serde(skip)]
    anchor: Option<usize>,
    #[serde(skip)]
    offset: f64,
}

impl SecularRoot {
    /// `value − λ_j`, accurate when the root is anchored at group `j`.
    fn minus(&self, groups: &[ValueGroup], j: usize) -> f64 {
        match self.anchor {
            Some(a) if a == j => self.offset,
            Some(a) => (groups[a].value - groups[j].value) + self.offset,
            None => self.offset - groups[j].value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomposition {
    k: usize,
    pi0: f64,
    groups: Vec<ValueGroup>,
    roots: Vec<SecularRoot>,
    zero_bins: Vec<usize>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.k
    }

    /// Distinct positive values `λ₁ > … > λ_g` with their bins.
    pub fn groups(&self) -> &[ValueGroup] {
        &self.groups
    }

    /// The simple eigenvalues `λ̃₁ > … > λ̃_g`.
    pub fn simple_eigenvalues(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.value).collect()
    }

    /// `ln λ̃_i`, computed from the stored root (−∞ for an exact zero).
    pub fn log_simple_eigenvalues(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.value.ln()).collect()
    }

    /// `(λ_j, m_j − 1)` for every block with `m_j ≥ 2`.
    pub fn repeated_eigenvalues(&self) -> Vec<(f64, usize)> {
        self.groups
            .iter()
            .filter(|g| g.multiplicity() > 1)
            .map(|g| (g.value, g.multiplicity() - 1))
            .collect()
    }

    /// Bins `i ≥ 1` with `π_i = 0`; each contributes a zero eigenvalue.
    pub fn zero_bins(&self) -> &[usize] {
        &self.zero_bins
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    /// All `k` eigenvalues, sorted descending, with multiplicity.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut values = self.simple_eigenvalues();
        for (v, m) in self.repeated_eigenvalues() {
            values.extend(std::iter::repeat_n(v, m));
        }
        values.extend(std::iter::repeat_n(0.0, self.zero_bins.len()));
        values.sort_by(|a, b| b.total_cmp(a));
        values
    }

    /// Distinct eigenvalues with multiplicities, sorted descending.
    pub fn values_with_multiplicity(&self) -> (Vec<f64>, Vec<usize>) {
        let mut values = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        for v in self.eigenvalues() {
            match values.last() {
                Some(&last) if last == v => *mult.last_mut().unwrap() += 1,
                _ => {
                    values.push(v);
                    mult.push(1);
                }
            }
        }
        (values, mult)
    }

    /// Unnormalized eigenvector of `λ̃_i` in the `k`-dimensional chart:
    /// `λ_j / (λ̃_i − λ_j)` on block `j`, zero on zero bins.
    pub fn generator(&self, i: usize) -> DVector<f64> {
        let root = &self.roots[i];
        let mut u = DVector::zeros(self.k);
        for (j, g) in self.groups.iter().enumerate() {
            let c = g.value / root.minus(&self.groups, j);
            for &b in &g.bins {
                u[b - 1] = c;
            }
        }
        u
    }

    /// Orthonormal Helmert contrasts spanning the `λ_j` eigenspace of block `j`.
    pub fn contrast_basis(&self, j: usize) -> Vec<DVector<f64>> {
        let bins = &self.groups[j].bins;
        (1..bins.len())
            .map(|r| {
                let mut u = DVector::zeros(self.k);
                let scale = 1.0 / ((r * (r + 1)) as f64).sqrt();
                for &b in &bins[..r] {
                    u[b - 1] = scale;
                }
                u[bins[r] - 1] = -(r as f64) * scale;
                u
            })
            .collect()
    }

    /// Orthonormal eigenpairs covering all `k` dimensions.
    pub fn eigenpairs(&self) -> Vec<(f64, DVector<f64>)> {
        let mut pairs = Vec::with_capacity(self.k);
        for (i, root) in self.roots.iter().enumerate() {
            let u = self.generator(i);
            let norm = u.norm();
            pairs.push((root.value, u / norm));
        }
        for (j, g) in self.groups.iter().enumerate() {
            for u in self.contrast_basis(j) {
                pairs.push((g.value, u));
            }
        }
        for &b in &self.zero_bins {
            let mut u = DVector::zeros(self.k);
            u[b - 1] = 1.0;
            pairs.push((0.0, u));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        pairs
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.k, self.k);
        for (value, u) in self.eigenpairs() {
            m += value * &u * u.transpose();
        }
        m
    }

    /// Checks `λ₁ > λ̃₁ > λ₂ > … > λ_g > λ̃_g ≥ 0`.
    pub fn interlaces(&self) -> bool {
        self.groups.iter().zip(&self.roots).enumerate().all(|(i, (g, r))| {
            let below_ok = match self.groups.get(i + 1) {
                Some(next) => r.value > next.value,
                None => r.value >= 0.0,
            };
            g.value > r.value && below_ok
        })
    }
}

/// Serialized form: distinct values, multiplicities and optional generators.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumJson {
    pub values: Vec<f64>,
    pub multiplicities: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<f64>>>,
}

impl SpectralDecomposition {
    pub fn to_json(&self, with_generators: bool) -> SpectrumJson {
        let (values, multiplicities) = self.values_with_multiplicity();
        let generators = with_generators.then(|| {
            (0..self.roots.len())
                .map(|i| self.generator(i).iter().copied().collect())
                .collect()
        });
        SpectrumJson {
            values,
            multiplicities,
            generators,
        }
    }
}

pub fn spectral_decomposition(pi: &ProbabilityVector) -> Result<SpectralDecomposition> {
    spectral_decomposition_with(pi, DEFAULT_GROUPING_TOL)
}

pub fn spectral_decomposition_with(
    pi: &ProbabilityVector,
    grouping_tol: f64,
) -> Result<SpectralDecomposition> {
    let probs = pi.as_slice();
    let k = probs.len() - 1;
    let pi0 = probs[0];

    let mut positive: Vec<usize> = (1..=k).filter(|&i| probs[i] > 0.0).collect();
    let zero_bins: Vec<usize> = (1..=k).filter(|&i| probs[i] == 0.0).collect();
    if positive.is_empty() {
        return Err(Error::TrivialSpectrum);
    }
    positive.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));

    let mut groups: Vec<ValueGroup> = Vec::new();
    for i in positive {
        match groups.last_mut() {
            Some(g) if probs[g.bins[0]] - probs[i] <= grouping_tol * probs[g.bins[0]] => {
                g.bins.push(i)
            }
            _ => groups.push(ValueGroup {
                value: probs[i],
                bins: vec![i],
            }),
        }
    }
    for g in &mut groups {
        g.value = g.bins.iter().map(|&b| probs[b]).sum::<f64>() / g.bins.len() as f64;
        g.bins.sort_unstable();
    }

    let roots = (0..groups.len())
        .map(|i| secular_root(&groups, pi0, i))
        .collect::<Result<Vec<_>>>()?;

    Ok(SpectralDecomposition {
        k,
        pi0,
        groups,
        roots,
        zero_bins,
    })
}

/// `h` evaluated at `x = anchor + offset`, written so that the terms near the
/// anchor are exact in the offset.
fn secular_value(groups: &[ValueGroup], pi0: f64, root: &SecularRoot) -> (f64, f64) {
    let x = root.value;
    let mut sum = 0.0;
    let mut deriv = 0.0;
    for (j, g) in groups.iter().enumerate() {
        let diff = root.minus(groups, j);
        let m = g.multiplicity() as f64;
        sum += m * g.value / diff;
        deriv += m * g.value * g.value / (diff * diff);
    }
    (pi0 + x * sum, -deriv)
}

fn make_root(groups: &[ValueGroup], anchor: Option<usize>, offset: f64) -> SecularRoot {
    let base = anchor.map_or(0.0, |a| groups[a].value);
    SecularRoot {
        value: base + offset,
        anchor,
        offset,
    }
}

fn secular_root(groups: &[ValueGroup], pi0: f64, i: usize) -> Result<SecularRoot> {
    let upper = i;
    let lower = (i + 1 < groups.len()).then_some(i + 1);
    let hi = groups[upper].value;
    let lo = lower.map_or(0.0, |l| groups[l].value);

    if lower.is_none() {
        if pi0 == 0.0 {
            return Ok(make_root(groups, None, 0.0));
        }
        if groups.len() == 1 {
            let m = groups[0].multiplicity() as f64;
            let offset = hi * pi0 / (pi0 + m * hi);
            return Ok(make_root(groups, None, offset));
        }
    }

    let mid = make_root(groups, Some(upper), -(hi - lo) / 2.0);
    let (h_mid, _) = secular_value(groups, pi0, &mid);
    if h_mid == 0.0 {
        return Ok(mid);
    }
    // h decreases on the bracket, so a positive midpoint value puts the root
    // in the upper half.
    let (anchor, sign, width) = if h_mid > 0.0 {
        (Some(upper), -1.0, (hi - lo) / 2.0)
    } else {
        (lower, 1.0, (hi - lo) / 2.0)
    };
    // Offsets run from the anchor toward the midpoint; h at the anchor side
    // has the sign `sign` (−∞ at the upper pole, +∞ or π₀ at the lower end).
    let anchor_sign = if h_mid > 0.0 { -1.0 } else { 1.0 };
    let at = |d: f64| make_root(groups, anchor, sign * d);

    let near_pole = anchor.is_some();
    let (mut a, mut b) = (0.0_f64, width);
    if !near_pole {
        let (h0, _) = secular_value(groups, pi0, &at(0.0));
        if h0 == 0.0 {
            return Ok(at(0.0));
        }
    }
    let mut steps = 0;
    loop {
        let m = if a == 0.0 {
            b / 16.0
        } else if b > 4.0 * a {
            (a * b).sqrt()
        } else {
            0.5 * (a + b)
        };
        if m <= a || m >= b {
            break;
        }
        let (hm, _) = secular_value(groups, pi0, &at(m));
        if hm == 0.0 {
            return Ok(at(m));
        }
        if hm.signum() == anchor_sign {
            a = m;
        } else {
            b = m;
        }
        steps += 1;
        if b - a <= BISECTION_REL_WIDTH * b || steps >= MAX_BISECTION_STEPS {
            break;
        }
    }
    if steps >= MAX_BISECTION_STEPS {
        return Err(Error::NonConvergence(format!(
            "secular root {i} did not bracket within {MAX_BISECTION_STEPS} steps"
        )));
    }

    let mut d = 0.5 * (a + b);
    let (mut h_best, _) = secular_value(groups, pi0, &at(d));
    for _ in 0..2 {
        let (hv, dh) = secular_value(groups, pi0, &at(d));
        if dh == 0.0 || !dh.is_finite() {
            break;
        }
        // dx/dd = sign
        let candidate = d - hv / (dh * sign);
        if !(candidate > a && candidate < b) {
            break;
        }
        let (hc, _) = secular_value(groups, pi0, &at(candidate));
        if hc.abs() <= h_best.abs() {
            d = candidate;
            h_best = hc;
        } else {
            break;
        }
    }
    Ok(at(d))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearReplicate {
    pub distinct_value: f64,
    pub simple_eigenvalue: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub largest: f64,
    pub smallest: f64,
    pub singular: bool,
    pub near_replicates: Vec<NearReplicate>,
}

pub fn condition_report(pi: &ProbabilityVector) -> Result<ConditionReport> {
    condition_report_with(pi, DEFAULT_NEAR_REPLICATE_TOL)
}

/// Singularity is flagged whenever some eigenvalue is exactly zero, which
/// happens iff some `π_i` vanishes.
pub fn condition_report_with(pi: &ProbabilityVector, threshold: f64) -> Result<ConditionReport> {
    let spec = spectral_decomposition(pi)?;
    let values = spec.eigenvalues();
    let near_replicates = spec
        .groups
        .iter()
        .zip(&spec.roots)
        .filter(|(g, _)| g.multiplicity() == 1)
        .map(|(g, r)| NearReplicate {
            distinct_value: g.value,
            simple_eigenvalue: r.value,
            relative_gap: (g.value - r.value) / g.value,
        })
        .filter(|n| n.relative_gap < threshold)
        .collect();
    Ok(ConditionReport {
        largest: values[0],
        smallest: *values.last().unwrap(),
        singular: values.iter().any(|&v| v == 0.0),
        near_replicates,
    })
}
