//! Multinomial approximations of continuous families on compact domains.
//!
//! A partition cuts the continuous part of the domain into intervals; a
//! family may also carry a single atom (the censoring point of the censored
//! exponential), which always gets a bin of its own.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_vec, QuadratureOptions};
use crate::simplex::{ProbabilityVector, MAX_RENORMALIZE_DRIFT};

/// Absolute tolerance for per-bin integrals on the probability scale.
pub const BIN_ABS_TOL: f64 = 1e-10;

/// Points per bin at which the worst-case likelihood discrepancy is probed.
const PROBES_PER_BIN: usize = 9;

/// Plug-in interface for a one-parameter family. The continuous part has an
/// unnormalized log density `log_kernel`; an optional atom sits at `atom()`.
pub trait ContinuousFamily: Send + Sync {
    fn domain(&self) -> (f64, f64);
    fn parameter_domain(&self) -> (f64, f64);
    fn log_kernel(&self, x: f64, theta: f64) -> f64;
    fn atom(&self) -> Option<f64> {
        None
    }
    fn atom_log_kernel(&self, _theta: f64) -> f64 {
        f64::NEG_INFINITY
    }
}

/// Point mass of a full exponential family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub log_carrier: f64,
    pub statistic: Vec<f64>,
}

/// `ν(x) exp{ηᵀs(x) − ψ(η)}` on a compact interval, plus an optional atom.
pub trait ExponentialFamily: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn domain(&self) -> (f64, f64);
    fn log_carrier(&self, x: f64) -> f64;
    fn statistic(&self, x: f64, out: &mut [f64]);
    fn atom(&self) -> Option<Atom> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub lo: f64,
    pub hi: f64,
    pub sigma: f64,
}

impl TruncatedNormal {
    pub fn new(lo: f64, hi: f64, sigma: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { lo, hi, sigma })
    }

    /// Curve indexed by the (untruncated) mean.
    pub fn mean_curve(self) -> Curve {
        let s2 = self.sigma * self.sigma;
        Curve::new(
            Arc::new(self),
            Arc::new(move |m: f64| vec![m / s2]),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }
}

impl ExponentialFamily for TruncatedNormal {
    fn name(&self) -> String {
        format!("truncated-normal[{}, {}] sigma={}", self.lo, self.hi, self.sigma)
    }
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn log_carrier(&self, x: f64) -> f64 {
        -0.5 * x * x / (self.sigma * self.sigma)
    }
    fn statistic(&self, x: f64, out: &mut [f64]) {
        out[0] = x;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedExponential {
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedExponential {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Ok(Self { lo, hi })
    }

    /// Curve indexed by the rate; natural parameter is `−rate`.
    pub fn rate_curve(self) -> Curve {
        Curve::new(
            Arc::new(self),
            Arc::new(|rate: f64| vec![-rate]),
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }
}

impl ExponentialFamily for TruncatedExponential {
    fn name(&self) -> String {
        format!("truncated-exponential[{}, {}]", self.lo, self.hi)
    }
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn log_carrier(&self, _x: f64) -> f64 {
        0.0
    }
    fn statistic(&self, x: f64, out: &mut [f64]) {
        out[0] = x;
    }
}

/// Exponential lifetimes censored at `t`. An observation is `y = min(z, t)`;
/// `y = t` is the censored atom. The full family has statistic `(x, y)` with
/// `x = 1{z ≥ t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredExponential {
    pub t: f64,
}

impl CensoredExponential {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("censoring time must be positive, got {t}")));
        }
        Ok(Self { t })
    }

    /// `(λ¹, λ²) = (−log θ, −θ)` for rate θ.
    pub fn embedding(theta: f64) -> [f64; 2] {
        [-theta.ln(), -theta]
    }

    /// Closed-form log normalizer of the full family.
    pub fn log_normalizer(&self, lambda: [f64; 2]) -> f64 {
        let [l1, l2] = lambda;
        let body = if l2.abs() < 1e-12 {
            self.t
        } else {
            (l2 * self.t).exp_m1() / l2
        };
        (body + (l1 + l2 * self.t).exp()).ln()
    }

    pub fn rate_curve(self) -> Curve {
        Curve::new(
            Arc::new(self),
            Arc::new(|theta: f64| Self::embedding(theta).to_vec()),
            (0.0, f64::INFINITY),
        )
    }

    /// Maps raw lifetimes to observations `min(z, t)`.
    pub fn censor(&self, lifetimes: &[f64]) -> Vec<f64> {
        lifetimes.iter().map(|z| z.min(self.t)).collect()
    }
}

impl ExponentialFamily for CensoredExponential {
    fn name(&self) -> String {
        format!("censored-exponential t={}", self.t)
    }
    fn dim(&self) -> usize {
        2
    }
    fn domain(&self) -> (f64, f64) {
        (0.0, self.t)
    }
    fn log_carrier(&self, _x: f64) -> f64 {
        0.0
    }
    fn statistic(&self, x: f64, out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = x;
    }
    fn atom(&self) -> Option<Atom> {
        Some(Atom {
            location: self.t,
            log_carrier: 0.0,
            statistic: vec![1.0, self.t],
        })
    }
}

/// A one-parameter curve `θ ↦ η(θ)` through a full exponential family.
#[derive(Clone)]
pub struct Curve {
    family: Arc<dyn ExponentialFamily>,
    embedding: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    theta_domain: (f64, f64),
}

impl std::fmt::Debug for Curve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Curve")
            .field("family", &self.family.name())
            .field("theta_domain", &self.theta_domain)
            .finish()
    }
}

impl Curve {
    pub fn new(
        family: Arc<dyn ExponentialFamily>,
        embedding: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
        theta_domain: (f64, f64),
    ) -> Self {
        Self {
            family,
            embedding,
            theta_domain,
        }
    }

    pub fn family(&self) -> &dyn ExponentialFamily {
        self.family.as_ref()
    }

    pub fn eta(&self, theta: f64) -> Vec<f64> {
        (self.embedding)(theta)
    }
}

impl ContinuousFamily for Curve {
    fn domain(&self) -> (f64, f64) {
        self.family.domain()
    }
    fn parameter_domain(&self) -> (f64, f64) {
        self.theta_domain
    }
    fn log_kernel(&self, x: f64, theta: f64) -> f64 {
        let eta = self.eta(theta);
        let mut s = vec![0.0; eta.len()];
        self.family.statistic(x, &mut s);
        self.family.log_carrier(x) + dot(&eta, &s)
    }
    fn atom(&self) -> Option<f64> {
        self.family.atom().map(|a| a.location)
    }
    fn atom_log_kernel(&self, theta: f64) -> f64 {
        match self.family.atom() {
            Some(a) => a.log_carrier + dot(&self.eta(theta), &a.statistic),
            None => f64::NEG_INFINITY,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!("domain [{lo}, {hi}] is not a compact interval")));
    }
    Ok(())
}

/// Interval bins `[e_i, e_{i+1})` (the last one closed unless an atom
/// follows) plus an optional atom bin at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub edges: Vec<f64>,
    pub labels: Vec<f64>,
    #[serde(default)]
    pub atom: Option<f64>,
}

impl PartitionSpec {
    /// `n_bins` equal-width bins with midpoint labels.
    pub fn equal_width(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        check_interval(lo, hi)?;
        if n_bins == 0 {
            return Err(Error::InvalidInput("a partition needs at least one bin".into()));
        }
        let w = (hi - lo) / n_bins as f64;
        let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + w * i as f64).collect();
        edges.push(hi);
        Ok(Self::from_edges(edges))
    }

    /// Bins of the given width from `lo`; the last bin is truncated at `hi`.
    pub fn by_width(lo: f64, hi: f64, width: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidInput(format!("bin width must be positive, got {width}")));
        }
        let n = ((hi - lo) / width - 1e-12).ceil().max(1.0) as usize;
        let mut edges: Vec<f64> = (0..n).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        Ok(Self::from_edges(edges))
    }

    fn from_edges(edges: Vec<f64>) -> Self {
        let labels = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self {
            edges,
            labels,
            atom: None,
        }
    }

    /// Partition matching a family's domain and atom.
    pub fn equal_width_for(family: &dyn ExponentialFamily, n_bins: usize) -> Result<Self> {
        let (lo, hi) = family.domain();
        let p = Self::equal_width(lo, hi, n_bins)?;
        Ok(match family.atom() {
            Some(a) => p.with_atom(a.location),
            None => p,
        })
    }

    pub fn with_atom(mut self, location: f64) -> Self {
        self.atom = Some(location);
        self
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        self.labels = labels;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.edges.len() < 2 {
            return Err(Error::InvalidInput("a partition needs at least two edges".into()));
        }
        if self.edges.iter().any(|e| !e.is_finite()) || self.edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("edges must be finite and strictly increasing".into()));
        }
        if self.labels.len() != self.edges.len() - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.edges.len() - 1,
                found: self.labels.len(),
            });
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if !(self.edges[i] <= l && l <= self.edges[i + 1]) {
                return Err(Error::InvalidInput(format!(
                    "label {l} lies outside bin {i} = [{}, {}]",
                    self.edges[i],
                    self.edges[i + 1]
                )));
            }
        }
        if let Some(a) = self.atom {
            if a != *self.edges.last().unwrap() {
                return Err(Error::InvalidInput("the atom must sit at the upper domain edge".into()));
            }
        }
        Ok(self)
    }

    pub fn n_intervals(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn n_bins(&self) -> usize {
        self.n_intervals() + usize::from(self.atom.is_some())
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn max_width(&self) -> f64 {
        self.edges.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Bin index of an observation.
    pub fn locate(&self, x: f64) -> Result<usize> {
        let (lo, hi) = (self.lo(), self.hi());
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutsideDomain { value: x, lo, hi });
        }
        if self.atom == Some(x) {
            return Ok(self.n_intervals());
        }
        let upper = self.edges.partition_point(|e| *e <= x);
        Ok(upper.saturating_sub(1).min(self.n_intervals() - 1))
    }

    /// Bin counts of a sample.
    pub fn counts(&self, data: &[f64]) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; self.n_bins()];
        for &x in data {
            counts[self.locate(x)?] += 1;
        }
        Ok(counts)
    }

    fn check_against(&self, domain: (f64, f64), atom: Option<f64>) -> Result<()> {
        let scale = 1e-12 * (domain.1 - domain.0).abs().max(1.0);
        if (self.lo() - domain.0).abs() > scale || (self.hi() - domain.1).abs() > scale {
            return Err(Error::InvalidInput(format!(
                "partition covers [{}, {}] but the family lives on [{}, {}]",
                self.lo(),
                self.hi(),
                domain.0,
                domain.1
            )));
        }
        if atom.is_some() != self.atom.is_some() {
            return Err(Error::InvalidInput(
                "the family's atom and the partition's atom bin must match".into(),
            ));
        }
        Ok(())
    }
}

fn bin_options(width: f64, span: f64) -> QuadratureOptions {
    QuadratureOptions {
        abs_tol: BIN_ABS_TOL * (width / span).max(1e-6),
        rel_tol: 1e-13,
        max_intervals: 2000,
    }
}

/// Largest log kernel over a probe grid; used as a scale shift.
fn kernel_shift(kernel: &dyn Fn(f64) -> f64, partition: &PartitionSpec, atom: f64) -> f64 {
    let mut m = atom;
    for w in partition.edges.windows(2) {
        for x in [w[0], 0.5 * (w[0] + w[1]), w[1]] {
            m = m.max(kernel(x));
        }
    }
    if !m.is_finite() {
        0.0
    } else {
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinProbabilities {
    pub probabilities: Vec<f64>,
    /// `Σ π_k − 1` before renormalization, with the normalizer from an
    /// independent whole-domain quadrature.
    pub drift: f64,
    pub log_normalizer: f64,
}

impl BinProbabilities {
    pub fn to_probability_vector(&self) -> Result<ProbabilityVector> {
        ProbabilityVector::new(self.probabilities.clone())
    }
}

/// `π_k(θ) = ∫_{B_k} f(x; θ) dx`, per-bin adaptive quadrature.
pub fn bin_probabilities(
    family: &dyn ContinuousFamily,
    partition: &PartitionSpec,
    theta: f64,
) -> Result<BinProbabilities> {
    partition.check_against(family.domain(), family.atom())?;
    let (plo, phi) = family.parameter_domain();
    if !(theta.is_finite() && plo < theta && theta < phi) {
        return Err(Error::OutsideDomain {
            value: theta,
            lo: plo,
            hi: phi,
        });
    }
    let kernel = |x: f64| family.log_kernel(x, theta);
    let atom_lk = family.atom_log_kernel(theta);
    let shift = kernel_shift(&kernel, partition, atom_lk);
    let span = partition.hi() - partition.lo();
    let mut masses = Vec::with_capacity(partition.n_bins());
    for w in partition.edges.windows(2) {
        let m = integrate(|x| (kernel(x) - shift).exp(), w[0], w[1], bin_options(w[1] - w[0], span))?;
        masses.push(m);
    }
    let atom_mass = if partition.atom.is_some() {
        let m = (atom_lk - shift).exp();
        masses.push(m);
        m
    } else {
        0.0
    };
    let whole = integrate(
        |x| (kernel(x) - shift).exp(),
        partition.lo(),
        partition.hi(),
        QuadratureOptions {
            abs_tol: BIN_ABS_TOL * 1e-3,
            rel_tol: 1e-14,
            max_intervals: 20_000,
        },
    )? + atom_mass;
    if !(whole > 0.0 && whole.is_finite()) {
        return Err(Error::Quadrature(format!("normalizer is {whole}")));
    }
    let total: f64 = masses.iter().sum();
    let drift = total / whole - 1.0;
    if drift.abs() > MAX_RENORMALIZE_DRIFT {
        return Err(Error::Quadrature(format!(
            "bin probabilities sum to 1 {drift:+e}, beyond {MAX_RENORMALIZE_DRIFT:e}"
        )));
    }
    Ok(BinProbabilities {
        probabilities: masses.iter().map(|m| m / total).collect(),
        drift,
        log_normalizer: shift + whole.ln(),
    })
}

/// Checks that the density integrates to one over the domain.
pub fn normalization_error(family: &dyn ContinuousFamily, theta: f64) -> Result<f64> {
    let (lo, hi) = family.domain();
    let probe = PartitionSpec::equal_width(lo, hi, 64)?;
    let probe = match family.atom() {
        Some(a) => probe.with_atom(a),
        None => probe,
    };
    let b = bin_probabilities(family, &probe, theta)?;
    let dens = integrate(
        |x| (family.log_kernel(x, theta) - b.log_normalizer).exp(),
        lo,
        hi,
        QuadratureOptions::default(),
    )?;
    let atom = (family.atom_log_kernel(theta) - b.log_normalizer).exp();
    Ok(dens + atom - 1.0)
}

/// Per-bin conditional moments of the sufficient statistic at natural
/// parameter η. Tensors are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinMoments {
    pub dim: usize,
    pub log_normalizer: f64,
    pub probabilities: Vec<f64>,
    /// `E(s | B_k)`.
    pub means: Vec<Vec<f64>>,
    /// `Cov(s | B_k)`.
    pub covariances: Vec<Vec<f64>>,
    /// Third central moment tensor of `s` given `B_k`.
    pub third: Vec<Vec<f64>>,
}

impl BinMoments {
    /// `μ_c = ∇ψ(η) = Σ π_k E(s | B_k)`.
    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        for (p, m) in self.probabilities.iter().zip(&self.means) {
            mu.iter_mut().zip(m).for_each(|(a, b)| *a += p * b);
        }
        mu
    }

    /// Fisher information of the discretized family: the between-bin
    /// covariance of the conditional means.
    pub fn discrete_fisher(&self) -> Vec<f64> {
        let mu = self.mean();
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for (p, m) in self.probabilities.iter().zip(&self.means) {
            for r in 0..d {
                for s in 0..d {
                    out[r * d + s] += p * (m[r] - mu[r]) * (m[s] - mu[s]);
                }
            }
        }
        out
    }

    /// `I_c − I_d = Σ π_k Cov(s | B_k)`.
    pub fn fisher_loss(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for (p, c) in self.probabilities.iter().zip(&self.covariances) {
            out.iter_mut().zip(c).for_each(|(a, b)| *a += p * b);
        }
        out
    }

    pub fn continuous_fisher(&self) -> Vec<f64> {
        let mut i = self.discrete_fisher();
        i.iter_mut().zip(self.fisher_loss()).for_each(|(a, b)| *a += b);
        i
    }

    /// Third moment of the discrete score, `Σ π_k b_k⊗b_k⊗b_k` with
    /// `b_k = E(s|B_k) − μ`.
    pub fn score_skewness(&self) -> Vec<f64> {
        let mu = self.mean();
        let d = self.dim;
        let mut out = vec![0.0; d * d * d];
        for (p, m) in self.probabilities.iter().zip(&self.means) {
            let b: Vec<f64> = m.iter().zip(&mu).map(|(x, y)| x - y).collect();
            for r in 0..d {
                for s in 0..d {
                    for t in 0..d {
                        out[(r * d + s) * d + t] += p * b[r] * b[s] * b[t];
                    }
                }
            }
        }
        out
    }

    /// `T_c = ψ‴(η)`, the third cumulant of `s`, by the law of total
    /// cumulance over bins.
    pub fn continuous_skewness(&self) -> Vec<f64> {
        let mu = self.mean();
        let d = self.dim;
        let mut out = self.score_skewness();
        for k in 0..self.probabilities.len() {
            let p = self.probabilities[k];
            let b: Vec<f64> = self.means[k].iter().zip(&mu).map(|(x, y)| x - y).collect();
            let c = &self.covariances[k];
            let t3 = &self.third[k];
            for r in 0..d {
                for s in 0..d {
                    for t in 0..d {
                        let idx = (r * d + s) * d + t;
                        let mixed = c[r * d + s] * b[t] + c[r * d + t] * b[s] + c[s * d + t] * b[r];
                        out[idx] += p * (t3[idx] + mixed);
                    }
                }
            }
        }
        out
    }

    /// `T_c − T_d = Σ π_k κ₃(s|B_k)`, where `T_d = −E ∂³ log π_k` uses
    /// `∂³ log π_k = κ₃(s|B_k) − ψ‴`.
    pub fn skewness_loss(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d * d];
        for (p, t3) in self.probabilities.iter().zip(&self.third) {
            out.iter_mut().zip(t3).for_each(|(a, b)| *a += p * b);
        }
        out
    }

    pub fn discrete_skewness(&self) -> Vec<f64> {
        let mut t = self.continuous_skewness();
        t.iter_mut().zip(self.skewness_loss()).for_each(|(a, b)| *a -= b);
        t
    }

    /// `log π_k` for each bin.
    pub fn log_probabilities(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p.ln()).collect()
    }
}

/// Conditional moments of `s` within every bin at natural parameter `eta`.
pub fn bin_moments(
    family: &dyn ExponentialFamily,
    partition: &PartitionSpec,
    eta: &[f64],
) -> Result<BinMoments> {
    let d = family.dim();
    if eta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: eta.len(),
        });
    }
    let atom = family.atom();
    partition.check_against(family.domain(), atom.as_ref().map(|a| a.location))?;
    let kernel = |x: f64| {
        let mut s = vec![0.0; d];
        family.statistic(x, &mut s);
        family.log_carrier(x) + dot(eta, &s)
    };
    let atom_lk = atom
        .as_ref()
        .map(|a| a.log_carrier + dot(eta, &a.statistic))
        .unwrap_or(f64::NEG_INFINITY);
    let shift = kernel_shift(&kernel, partition, atom_lk);
    let span = partition.hi() - partition.lo();
    let width = 1 + d + d * d + d * d * d;

    let n = partition.n_bins();
    let mut masses = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let mut covariances = Vec::with_capacity(n);
    let mut third = Vec::with_capacity(n);
    let mut s = vec![0.0; d];
    let mut center = vec![0.0; d];
    for w in partition.edges.windows(2) {
        family.statistic(0.5 * (w[0] + w[1]), &mut center);
        // Raw moments about the midpoint statistic keep the magnitudes on
        // the scale of the bin.
        let r = integrate_vec(
            |x, out| {
                family.statistic(x, &mut s);
                let f = (family.log_carrier(x) + dot(eta, &s) - shift).exp();
                let u: Vec<f64> = s.iter().zip(&center).map(|(a, c)| a - c).collect();
                out[0] = f;
                let mut i = 1;
                for a in 0..d {
                    out[i] = f * u[a];
                    i += 1;
                }
                for a in 0..d {
                    for b in 0..d {
                        out[i] = f * u[a] * u[b];
                        i += 1;
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            out[i] = f * u[a] * u[b] * u[c];
                            i += 1;
                        }
                    }
                }
            },
            w[0],
            w[1],
            width,
            bin_options(w[1] - w[0], span),
        )?;
        let v = r.value;
        let m0 = v[0];
        if !(m0 > 0.0) {
            return Err(Error::Quadrature(format!("bin [{}, {}] has no mass", w[0], w[1])));
        }
        let m1: Vec<f64> = (0..d).map(|a| v[1 + a] / m0).collect();
        let m2 = |a: usize, b: usize| v[1 + d + a * d + b] / m0;
        let m3 = |a: usize, b: usize, c: usize| v[1 + d + d * d + (a * d + b) * d + c] / m0;
        let mut cov = vec![0.0; d * d];
        let mut t3 = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] = m2(a, b) - m1[a] * m1[b];
                for c in 0..d {
                    t3[(a * d + b) * d + c] = m3(a, b, c) - m1[a] * m2(b, c) - m1[b] * m2(a, c)
                        - m1[c] * m2(a, b)
                        + 2.0 * m1[a] * m1[b] * m1[c];
                }
            }
        }
        masses.push(m0);
        means.push(m1.iter().zip(&center).map(|(a, c)| a + c).collect());
        covariances.push(cov);
        third.push(t3);
    }
    if let Some(a) = atom {
        masses.push((atom_lk - shift).exp());
        means.push(a.statistic.clone());
        covariances.push(vec![0.0; d * d]);
        third.push(vec![0.0; d * d * d]);
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Quadrature(format!("normalizer is {total}")));
    }
    Ok(BinMoments {
        dim: d,
        log_normalizer: shift + total.ln(),
        probabilities: masses.iter().map(|m| m / total).collect(),
        means,
        covariances,
        third,
    })
}

/// How bin labels in statistic space are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// `s(x_k)` at the partition's label points.
    Points,
    /// `E_{η₀}(s | B_k)` at a reference natural parameter.
    ConditionalMean { eta0: Vec<f64> },
}

/// Statistic-space labels for every bin, atom included.
pub fn statistic_labels(
    family: &dyn ExponentialFamily,
    partition: &PartitionSpec,
    rule: &LabelRule,
) -> Result<Vec<Vec<f64>>> {
    match rule {
        LabelRule::Points => {
            let d = family.dim();
            let mut out: Vec<Vec<f64>> = partition
                .labels
                .iter()
                .map(|&x| {
                    let mut s = vec![0.0; d];
                    family.statistic(x, &mut s);
                    s
                })
                .collect();
            if partition.atom.is_some() {
                let a = family
                    .atom()
                    .ok_or_else(|| Error::InvalidInput("partition has an atom bin but the family has no atom".into()))?;
                out.push(a.statistic);
            }
            Ok(out)
        }
        LabelRule::ConditionalMean { eta0 } => Ok(bin_moments(family, partition, eta0)?.means),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryDiscrepancy {
    pub mean: f64,
    pub fisher: f64,
    pub skewness: f64,
    /// `‖T_c − Σ π_k b_k⊗b_k⊗b_k‖_∞`, the gap measured with third moments
    /// of the scores instead of expected third derivatives.
    pub score_skewness: f64,
    pub max_width: f64,
    pub mean_continuous: Vec<f64>,
    pub mean_discrete: Vec<f64>,
    pub fisher_continuous: Vec<f64>,
    pub fisher_discrete: Vec<f64>,
    pub skewness_continuous: Vec<f64>,
    pub skewness_discrete: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Mean, Fisher and skewness discrepancies between the continuous family
/// and its discretization at η. Differences are assembled bin by bin from
/// conditional moments rather than by subtracting the two totals.
pub fn geometry_discrepancy(
    family: &dyn ExponentialFamily,
    partition: &PartitionSpec,
    eta: &[f64],
    labels: &LabelRule,
) -> Result<GeometryDiscrepancy> {
    let bm = bin_moments(family, partition, eta)?;
    let lab = statistic_labels(family, partition, labels)?;
    let d = bm.dim;
    let mut mean_gap = vec![0.0; d];
    let mut mean_discrete = vec![0.0; d];
    for k in 0..bm.probabilities.len() {
        for a in 0..d {
            mean_gap[a] += bm.probabilities[k] * (lab[k][a] - bm.means[k][a]);
            mean_discrete[a] += bm.probabilities[k] * lab[k][a];
        }
    }
    Ok(GeometryDiscrepancy {
        mean: mean_gap.iter().map(|x| x * x).sum::<f64>().sqrt(),
        fisher: max_abs(&bm.fisher_loss()),
        skewness: max_abs(&bm.skewness_loss()),
        score_skewness: {
            let tc = bm.continuous_skewness();
            let ts = bm.score_skewness();
            tc.iter().zip(&ts).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        },
        max_width: partition.max_width(),
        mean_continuous: bm.mean(),
        mean_discrete,
        fisher_continuous: bm.continuous_fisher(),
        fisher_discrete: bm.discrete_fisher(),
        skewness_continuous: bm.continuous_skewness(),
        skewness_discrete: bm.discrete_skewness(),
    })
}

/// Moments of `s` over the whole domain by direct quadrature, independent
/// of any partition: `(ψ, mean, covariance, third central tensor)`.
pub fn continuous_moments(
    family: &dyn ExponentialFamily,
    eta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (lo, hi) = family.domain();
    let one = PartitionSpec::equal_width(lo, hi, 1)?;
    let one = match family.atom() {
        Some(a) => one.with_atom(a.location),
        None => one,
    };
    let bm = bin_moments(family, &one, eta)?;
    Ok((bm.log_normalizer, bm.mean(), bm.continuous_fisher(), bm.continuous_skewness()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodDiscrepancy {
    pub sup: f64,
    pub argmax_theta: f64,
    pub per_theta: Vec<(f64, f64)>,
}

/// Log-likelihood of a sample under the continuous family and under its
/// discretization, as functions of θ.
pub fn log_likelihoods(
    family: &dyn ContinuousFamily,
    partition: &PartitionSpec,
    data: &[f64],
    theta: f64,
) -> Result<(f64, f64)> {
    let counts = partition.counts(data)?;
    let b = bin_probabilities(family, partition, theta)?;
    let mut ld = 0.0;
    for (n, p) in counts.iter().zip(&b.probabilities) {
        if *n > 0 {
            ld += *n as f64 * p.ln();
        }
    }
    let mut lc = 0.0;
    for &x in data {
        lc += if partition.atom == Some(x) {
            family.atom_log_kernel(theta)
        } else {
            family.log_kernel(x, theta)
        } - b.log_normalizer;
    }
    Ok((lc, ld))
}

/// `sup_θ |log{Lik_d(θ)/Lik_d(θ₀)} − log{Lik_c(θ)/Lik_c(θ₀)}|` over a grid.
pub fn likelihood_discrepancy(
    family: &dyn ContinuousFamily,
    partition: &PartitionSpec,
    data: &[f64],
    theta_grid: &[f64],
    theta0: f64,
) -> Result<LikelihoodDiscrepancy> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidInput("empty θ grid".into()));
    }
    let (c0, d0) = log_likelihoods(family, partition, data, theta0)?;
    let mut per_theta = Vec::with_capacity(theta_grid.len());
    let mut best = (f64::NEG_INFINITY, theta0);
    for &theta in theta_grid {
        let (c, d) = if theta == theta0 {
            (c0, d0)
        } else {
            log_likelihoods(family, partition, data, theta)?
        };
        let gap = ((d - d0) - (c - c0)).abs();
        per_theta.push((theta, gap));
        if gap > best.0 {
            best = (gap, theta);
        }
    }
    Ok(LikelihoodDiscrepancy {
        sup: best.0,
        argmax_theta: best.1,
        per_theta,
    })
}

/// Worst case of the single-observation discrepancy over the grid, every
/// bin and a set of probe points within each bin. Bounds the per-sample
/// discrepancy of any data set by `N` times this value.
pub fn worst_case_likelihood_discrepancy(
    family: &dyn ContinuousFamily,
    partition: &PartitionSpec,
    theta_grid: &[f64],
    theta0: f64,
) -> Result<LikelihoodDiscrepancy> {
    let mut probes = Vec::new();
    for w in partition.edges.windows(2) {
        for j in 0..PROBES_PER_BIN {
            // Stay strictly inside so each probe belongs to its own bin.
            let u = (j as f64 + 0.5) / PROBES_PER_BIN as f64;
            probes.push(w[0] + u * (w[1] - w[0]));
        }
    }
    if let Some(a) = partition.atom {
        probes.push(a);
    }
    let b0 = bin_probabilities(family, partition, theta0)?;
    let single = |theta: f64| -> Result<f64> {
        let b = bin_probabilities(family, partition, theta)?;
        let mut worst = 0.0f64;
        for &x in &probes {
            let k = partition.locate(x)?;
            let ld = (b.probabilities[k] / b0.probabilities[k]).ln();
            let lc = if partition.atom == Some(x) {
                family.atom_log_kernel(theta) - family.atom_log_kernel(theta0)
            } else {
                family.log_kernel(x, theta) - family.log_kernel(x, theta0)
            } - (b.log_normalizer - b0.log_normalizer);
            worst = worst.max((ld - lc).abs());
        }
        Ok(worst)
    };
    let mut per_theta = Vec::with_capacity(theta_grid.len());
    let mut best = (f64::NEG_INFINITY, theta0);
    for &theta in theta_grid {
        let gap = single(theta)?;
        per_theta.push((theta, gap));
        if gap > best.0 {
            best = (gap, theta);
        }
    }
    Ok(LikelihoodDiscrepancy {
        sup: best.0,
        argmax_theta: best.1,
        per_theta,
    })
}

/// Maximizes a unimodal function on `[a, b]` by golden-section search.
pub fn golden_section_max<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..400 {
        if (b - a).abs() <= tol * (1.0 + 0.5 * (a + b).abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMle {
    pub theta_continuous: f64,
    pub theta_discrete: f64,
    pub loglik_continuous: f64,
    pub loglik_discrete: f64,
}

/// MLEs of θ along a one-parameter family from raw and from binned data.
pub fn curve_mle(
    family: &dyn ContinuousFamily,
    partition: &PartitionSpec,
    data: &[f64],
    bracket: (f64, f64),
) -> Result<CurveMle> {
    let tol = 1e-11;
    let (tc, lc) = golden_section_max(|t| Ok(log_likelihoods(family, partition, data, t)?.0), bracket.0, bracket.1, tol)?;
    let (td, ld) = golden_section_max(|t| Ok(log_likelihoods(family, partition, data, t)?.1), bracket.0, bracket.1, tol)?;
    for (name, t) in [("continuous", tc), ("discrete", td)] {
        let edge = 1e-6 * (bracket.1 - bracket.0);
        if t - bracket.0 < edge || bracket.1 - t < edge {
            return Err(Error::NonConvergence(format!(
                "{name} MLE {t} sits on the bracket [{}, {}]",
                bracket.0, bracket.1
            )));
        }
    }
    Ok(CurveMle {
        theta_continuous: tc,
        theta_discrete: td,
        loglik_continuous: lc,
        loglik_discrete: ld,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleDiscrepancy {
    pub eta_continuous: Vec<f64>,
    pub eta_discrete: Vec<f64>,
    pub gap: f64,
    /// Largest entry of the difference of per-observation observed
    /// information matrices.
    pub information_gap: f64,
    pub iterations: (usize, usize),
}

fn solve_linear(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    let m = nalgebra::DMatrix::from_row_slice(d, d, a);
    let v = nalgebra::DVector::from_column_slice(b);
    m.cholesky()
        .map(|c| c.solve(&v).as_slice().to_vec())
        .ok_or_else(|| Error::RankDeficient("information matrix is not positive definite".into()))
}

/// Fisher scoring with step halving on a concave objective.
fn scoring<F>(mut eval: F, start: Vec<f64>, what: &str) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>,
{
    let mut eta = start;
    let (mut obj, mut grad, mut info) = eval(&eta)?;
    for it in 0..200 {
        let step = solve_linear(&info, &grad)?;
        let dec: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if dec.abs() < 1e-24 || step.iter().zip(&eta).all(|(s, e)| s.abs() <= 1e-13 * (1.0 + e.abs())) {
            return Ok((eta, it));
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = eta.iter().zip(&step).map(|(e, s)| e + t * s).collect();
            if let Ok((o, g, i)) = eval(&cand) {
                if o >= obj - 1e-13 * obj.abs().max(1.0) {
                    eta = cand;
                    obj = o;
                    grad = g;
                    info = i;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok((eta, it));
        }
    }
    Err(Error::NonConvergence(format!("{what} scoring did not converge in 200 iterations")))
}

/// Full-family MLEs from raw data and from binned data. The discrete score
/// is `Σ n_k E(s|B_k)/N − ∇ψ(η)`.
pub fn mle_discrepancy(
    family: &dyn ExponentialFamily,
    partition: &PartitionSpec,
    data: &[f64],
    start: &[f64],
) -> Result<MleDiscrepancy> {
    let d = family.dim();
    if data.is_empty() {
        return Err(Error::InvalidInput("no data".into()));
    }
    let counts = partition.counts(data)?;
    let n = data.len() as f64;
    let mut tbar = vec![0.0; d];
    let mut s = vec![0.0; d];
    let atom = family.atom();
    for &x in data {
        match (&atom, partition.atom == Some(x)) {
            (Some(a), true) => s.copy_from_slice(&a.statistic),
            _ => family.statistic(x, &mut s),
        }
        tbar.iter_mut().zip(&s).for_each(|(t, v)| *t += v / n);
    }
    let (eta_c, it_c) = scoring(
        |eta| {
            let bm = bin_moments(family, partition, eta)?;
            let mu = bm.mean();
            let obj = dot(eta, &tbar) - bm.log_normalizer;
            let grad = tbar.iter().zip(&mu).map(|(t, m)| t - m).collect();
            Ok((obj, grad, bm.continuous_fisher()))
        },
        start.to_vec(),
        "continuous",
    )?;
    let (eta_d, it_d) = scoring(
        |eta| {
            let bm = bin_moments(family, partition, eta)?;
            let mu = bm.mean();
            let mut obj = 0.0;
            let mut grad = vec![0.0; d];
            for (k, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let w = c as f64 / n;
                obj += w * bm.probabilities[k].ln();
                for a in 0..d {
                    grad[a] += w * (bm.means[k][a] - mu[a]);
                }
            }
            Ok((obj, grad, bm.discrete_fisher()))
        },
        start.to_vec(),
        "discrete",
    )?;
    // Observed information per observation.
    let obs_c = bin_moments(family, partition, &eta_c)?.continuous_fisher();
    let bm = bin_moments(family, partition, &eta_d)?;
    let mut obs_d = bm.continuous_fisher();
    for (k, &c) in counts.iter().enumerate() {
        let w = c as f64 / n;
        obs_d.iter_mut().zip(&bm.covariances[k]).for_each(|(o, v)| *o -= w * v);
    }
    let gap = eta_c
        .iter()
        .zip(&eta_d)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let information_gap = obs_c.iter().zip(&obs_d).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(MleDiscrepancy {
        eta_continuous: eta_c,
        eta_discrete: eta_d,
        gap,
        information_gap,
        iterations: (it_c, it_d),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("need at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("log-log regression needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub bins: usize,
    pub max_width: f64,
    pub likelihood: f64,
    pub mean: f64,
    pub fisher: f64,
    pub skewness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub levels: Vec<RefinementLevel>,
    pub slope_likelihood: f64,
    pub slope_mean: f64,
    pub slope_fisher: f64,
    pub slope_skewness: f64,
}

/// Discrepancies on equal-width partitions of increasing size with their
/// log-log slopes against bin width. Geometry is compared at `eta` with
/// midpoint labels; likelihood ratios against `theta0` over `theta_grid`.
pub fn refinement_study(
    family: &dyn ExponentialFamily,
    curve: &dyn ContinuousFamily,
    bins: &[usize],
    theta0: f64,
    eta: &[f64],
    theta_grid: &[f64],
) -> Result<RefinementStudy> {
    let mut levels = Vec::with_capacity(bins.len());
    for &k in bins {
        let p = PartitionSpec::equal_width_for(family, k)?;
        let g = geometry_discrepancy(family, &p, eta, &LabelRule::Points)?;
        let lr = worst_case_likelihood_discrepancy(curve, &p, theta_grid, theta0)?;
        levels.push(RefinementLevel {
            bins: k,
            max_width: p.max_width(),
            likelihood: lr.sup,
            mean: g.mean,
            fisher: g.fisher,
            skewness: g.skewness,
        });
    }
    let w: Vec<f64> = levels.iter().map(|l| l.max_width).collect();
    let slope = |f: fn(&RefinementLevel) -> f64| log_log_slope(&w, &levels.iter().map(f).collect::<Vec<_>>());
    Ok(RefinementStudy {
        slope_likelihood: slope(|l| l.likelihood)?,
        slope_mean: slope(|l| l.mean)?,
        slope_fisher: slope(|l| l.fisher)?,
        slope_skewness: slope(|l| l.skewness)?,
        levels,
    })
}
