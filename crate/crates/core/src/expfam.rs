//! Exponential families embedded in the simplex.
//!
//! A family is given by a base point `π⁰`, `d` tilting directions `a_i` and
//! `k − d` offsets `b_j ∈ V_mix` orthogonal to every `a_i`:
//!
//! ```text
//! p_h(λ, σ) ∝ (π⁰_h + Σ_j σ_j b_{j,h}) · exp(Σ_i λ_i a_{i,h})
//! ```
//!
//! For fixed `σ` the image is a `d`-dimensional exponential family with
//! sufficient statistic `h ↦ (a_{1,h}, …, a_{d,h})`. All numerics go through
//! [`Tilted`], which works on log-weights so that boundary bins are exact
//! zeros and large tilts cannot overflow.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::boundary;
use crate::error::{Error, Result};
use crate::simplex::{log_sum_exp, ProbabilityVector};

/// Numerical rank tolerance for `{1, a_1, …, a_d}` and `{b_j}`.
pub const RANK_TOL: f64 = 1e-10;

/// Orthogonality tolerance for `a_iᵀ b_j`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Offsets are synthesized automatically only up to this many bins.
pub const MAX_SYNTHESIZED_BINS: usize = 1024;

/// Default cap on the number of observations in a logistic embedding.
pub const DEFAULT_LOGISTIC_CAP: usize = 20;

/// Tolerance for the shifted base `π⁰ + Bσ` dipping below zero.
const POLYTOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpFamilySpec {
    base_point: Vec<f64>,
    plus_directions: Vec<Vec<f64>>,
    #[serde(default)]
    minus_offsets: Vec<Vec<f64>>,
}

/// A point of the family together with its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyPoint {
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub pi: ProbabilityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddlepointSolution {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub condition_number: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedCoordinates {
    pub natural: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Newton controls for [`solve_saddlepoint_equation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub condition_threshold: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 200,
            max_halvings: 30,
            condition_threshold: 1e12,
        }
    }
}

/// Modified Gram–Schmidt. Returns the orthonormalized vectors, or the index
/// of the first vector whose residual falls below `tol` relative to its norm.
fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> std::result::Result<Vec<Vec<f64>>, usize> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (idx, v) in vectors.iter().enumerate() {
        let norm0 = dot(v, v).sqrt();
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&r, &r).sqrt();
        if norm0 == 0.0 || norm <= tol * norm0 {
            return Err(idx);
        }
        r.iter_mut().for_each(|x| *x /= norm);
        basis.push(r);
    }
    Ok(basis)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic completion of `span{1, a_1, …, a_d}` to `ℝ^{k+1}` by sweeping
/// the standard basis in index order.
fn synthesize_offsets(directions: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut spanning = vec![vec![1.0; n]];
    spanning.extend(directions.iter().cloned());
    let mut basis = orthonormalize(&spanning, RANK_TOL).expect("rank checked by caller");
    let fixed = basis.len();
    let wanted = n - fixed;
    for e in 0..n {
        if basis.len() - fixed == wanted {
            break;
        }
        let mut r = vec![0.0; n];
        r[e] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&r, q);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&r, &r).sqrt();
        if norm > 1e-8 {
            r.iter_mut().for_each(|x| *x /= norm);
            basis.push(r);
        }
    }
    basis.split_off(fixed)
}

/// Validates a family. Offsets are synthesized when `offsets` is `None` and
/// the simplex has at most [`MAX_SYNTHESIZED_BINS`] vertices; otherwise the
/// family carries no offsets and only `σ = 0` is available.
pub fn make_family(
    base_point: &ProbabilityVector,
    directions: Vec<Vec<f64>>,
    offsets: Option<Vec<Vec<f64>>>,
) -> Result<ExpFamilySpec> {
    let n = base_point.len();
    let d = directions.len();
    if d == 0 {
        return Err(Error::InvalidInput("a family needs at least one direction".into()));
    }
    for a in &directions {
        if a.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.len(),
            });
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("direction has non-finite entries".into()));
        }
    }
    let mut spanning = vec![vec![1.0; n]];
    spanning.extend(directions.iter().cloned());
    if let Err(idx) = orthonormalize(&spanning, RANK_TOL) {
        return Err(Error::RankDeficient(if idx == 0 {
            "constant vector".into()
        } else {
            format!("direction {} depends on the constant vector and earlier directions", idx - 1)
        }));
    }
    if d > n - 1 {
        return Err(Error::RankDeficient(format!(
            "{d} directions exceed the simplex dimension {}",
            n - 1
        )));
    }

    let offsets = match offsets {
        Some(b) => {
            if b.len() != n - 1 - d {
                return Err(Error::DimensionMismatch {
                    expected: n - 1 - d,
                    found: b.len(),
                });
            }
            for (j, bj) in b.iter().enumerate() {
                if bj.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: bj.len(),
                    });
                }
                let norm_b = dot(bj, bj).sqrt();
                let sum: f64 = bj.iter().sum();
                if sum.abs() > ORTHOGONALITY_TOL * (1.0 + norm_b * (n as f64).sqrt()) {
                    return Err(Error::NotOrthogonal(format!(
                        "offset {j} sums to {sum:e}, so it is not a mixture direction"
                    )));
                }
                for (i, ai) in directions.iter().enumerate() {
                    let ip = dot(ai, bj);
                    let scale = dot(ai, ai).sqrt() * norm_b;
                    if ip.abs() > ORTHOGONALITY_TOL * scale.max(1.0) {
                        return Err(Error::NotOrthogonal(format!(
                            "direction {i} and offset {j} have inner product {ip:e}"
                        )));
                    }
                }
            }
            if let Err(j) = orthonormalize(&b, RANK_TOL) {
                return Err(Error::RankDeficient(format!(
                    "offset {j} depends on earlier offsets"
                )));
            }
            b
        }
        None if n <= MAX_SYNTHESIZED_BINS => synthesize_offsets(&directions, n),
        None => Vec::new(),
    };

    Ok(ExpFamilySpec {
        base_point: base_point.as_slice().to_vec(),
        plus_directions: directions,
        minus_offsets: offsets,
    })
}

impl ExpFamilySpec {
    /// Re-validates a deserialized spec.
    pub fn validated(self) -> Result<Self> {
        let base = ProbabilityVector::new(self.base_point)?;
        let offsets = if self.minus_offsets.is_empty() {
            None
        } else {
            Some(self.minus_offsets)
        };
        make_family(&base, self.plus_directions, offsets)
    }

    /// Number of categories `k + 1`.
    pub fn n_bins(&self) -> usize {
        self.base_point.len()
    }

    pub fn dim(&self) -> usize {
        self.plus_directions.len()
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.plus_directions
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.minus_offsets
    }

    /// The statistic `(a_{1,h}, …, a_{d,h})` of bin `h`.
    pub fn statistic(&self, h: usize) -> Vec<f64> {
        self.plus_directions.iter().map(|a| a[h]).collect()
    }

    /// `π⁰ + Bσ` with entries clamped at zero; errors outside the polytope.
    pub fn shifted_base(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        if !sigma.is_empty() && sigma.len() != self.minus_offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: self.minus_offsets.len(),
                found: sigma.len(),
            });
        }
        let mut w = self.base_point.clone();
        for (s, b) in sigma.iter().zip(&self.minus_offsets) {
            w.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        for (h, x) in w.iter_mut().enumerate() {
            if *x < -POLYTOPE_TOL {
                return Err(Error::OutsidePolytope { index: h, value: *x });
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        Ok(w)
    }

    /// The `d`-parameter slice at fixed `σ`.
    pub fn slice(&self, sigma: &[f64]) -> Result<Tilted> {
        let w = self.shifted_base(sigma)?;
        let stats = (0..self.n_bins()).map(|h| self.statistic(h)).collect();
        Tilted::new(w.iter().map(|x| x.ln()).collect(), stats)
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: lambda.len(),
            });
        }
        Ok(())
    }
}

pub fn point(spec: &ExpFamilySpec, lambda: &[f64], sigma: &[f64]) -> Result<FamilyPoint> {
    spec.check_lambda(lambda)?;
    let family = spec.slice(sigma)?;
    Ok(FamilyPoint {
        lambda: lambda.to_vec(),
        sigma: sigma.to_vec(),
        pi: ProbabilityVector::new(family.probs(lambda))?,
    })
}

/// `μ_i = Σ_h a_{i,h} π_h(λ, σ)`.
pub fn mean_map(spec: &ExpFamilySpec, sigma: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    spec.check_lambda(lambda)?;
    Ok(spec.slice(sigma)?.mean(lambda))
}

/// Covariance of the statistic, which is `AᵀI(π)A` in the chart.
pub fn family_fisher(spec: &ExpFamilySpec, sigma: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>> {
    spec.check_lambda(lambda)?;
    Ok(spec.slice(sigma)?.covariance(lambda))
}

pub fn solve_saddlepoint_equation(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    target: &[f64],
) -> Result<SaddlepointSolution> {
    solve_saddlepoint_equation_with(spec, sigma, target, None, NewtonOptions::default())
}

pub fn solve_saddlepoint_equation_with(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    target: &[f64],
    start: Option<&[f64]>,
    options: NewtonOptions,
) -> Result<SaddlepointSolution> {
    spec.check_lambda(target)?;
    spec.slice(sigma)?.solve(target, start, options)
}

/// Natural coordinates of the first `r` directions and mean coordinates of
/// the remaining `d − r`.
pub fn mixed_parameterization(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    pi: &ProbabilityVector,
    r: usize,
) -> Result<MixedCoordinates> {
    if r > spec.dim() {
        return Err(Error::InvalidInput(format!(
            "split {r} exceeds the family dimension {}",
            spec.dim()
        )));
    }
    let lambda = natural_coordinates(spec, sigma, pi)?;
    let mean: Vec<f64> = spec.plus_directions[r..]
        .iter()
        .map(|a| dot(a, pi.as_slice()))
        .collect();
    Ok(MixedCoordinates {
        natural: lambda[..r].to_vec(),
        mean,
    })
}

/// Inverse of [`mixed_parameterization`]: fixes the first `r` natural
/// coordinates and solves for the rest from the mean block.
pub fn from_mixed(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    coords: &MixedCoordinates,
) -> Result<FamilyPoint> {
    let r = coords.natural.len();
    if r + coords.mean.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: r + coords.mean.len(),
        });
    }
    let full = spec.slice(sigma)?;
    let mut lambda = coords.natural.clone();
    if r < spec.dim() {
        let log_base = (0..spec.n_bins())
            .map(|h| full.log_base[h] + dot(&coords.natural, &full.stats[h][..r]))
            .collect();
        let stats = full.stats.iter().map(|s| s[r..].to_vec()).collect();
        let sub = Tilted::new(log_base, stats)?;
        let sol = sub.solve(&coords.mean, None, NewtonOptions::default())?;
        lambda.extend(sol.lambda);
    }
    point(spec, &lambda, sigma)
}

/// Recovers `λ` from a point of the slice by least squares on log-ratios.
pub fn natural_coordinates(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    pi: &ProbabilityVector,
) -> Result<Vec<f64>> {
    let w = spec.shifted_base(sigma)?;
    if pi.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: pi.len(),
        });
    }
    let support: Vec<usize> = (0..w.len()).filter(|&h| w[h] > 0.0).collect();
    for h in 0..w.len() {
        if (w[h] > 0.0) != (pi[h] > 0.0) {
            return Err(Error::NotInFamily(format!(
                "support differs from the family's at bin {h}"
            )));
        }
    }
    let d = spec.dim();
    let design = DMatrix::from_fn(support.len(), d + 1, |row, col| {
        if col == 0 {
            1.0
        } else {
            spec.plus_directions[col - 1][support[row]]
        }
    });
    let rhs = DVector::from_iterator(
        support.len(),
        support.iter().map(|&h| pi[h].ln() - w[h].ln()),
    );
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::NotInFamily(e.to_string()))?;
    let residual = (&design * &coef - &rhs).amax();
    let scale = 1.0 + rhs.amax();
    if residual > 1e-8 * scale {
        return Err(Error::NotInFamily(format!(
            "log-ratio residual {residual:e} is not explained by the directions"
        )));
    }
    Ok(coef.iter().skip(1).copied().collect())
}

/// The binary-sequence embedding of a logistic regression with `N`
/// observations and `D` covariates over `2^N` vertices. Vertex `j` is the
/// sequence with `t_i = (j >> i) & 1`.
pub fn logistic_embedding(design: &[Vec<f64>], cap: usize) -> Result<ExpFamilySpec> {
    let n_obs = design.len();
    if n_obs == 0 {
        return Err(Error::InvalidInput("design has no rows".into()));
    }
    if n_obs > cap {
        return Err(Error::CapExceeded {
            what: "observations",
            value: n_obs,
            cap,
        });
    }
    let n_cov = design[0].len();
    if design.iter().any(|row| row.len() != n_cov) || n_cov == 0 {
        return Err(Error::InvalidInput("design rows must share a positive length".into()));
    }
    let n_bins = 1usize << n_obs;
    let directions: Vec<Vec<f64>> = (0..n_cov)
        .map(|c| {
            (0..n_bins)
                .map(|j| {
                    (0..n_obs)
                        .filter(|i| (j >> i) & 1 == 1)
                        .map(|i| design[i][c])
                        .sum()
                })
                .collect()
        })
        .collect();
    make_family(&ProbabilityVector::uniform(n_bins)?, directions, None)
}

/// Index of a binary response sequence under the logistic embedding.
pub fn sequence_index(responses: &[u8]) -> Result<usize> {
    responses.iter().enumerate().try_fold(0usize, |acc, (i, &t)| match t {
        0 => Ok(acc),
        1 => Ok(acc | (1 << i)),
        _ => Err(Error::InvalidInput(format!("response {i} is {t}, not 0 or 1"))),
    })
}

/// The bit-string of vertex `j`, first observation leftmost.
pub fn vertex_bits(j: usize, n_obs: usize) -> String {
    (0..n_obs)
        .map(|i| if (j >> i) & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalPositivityRank {
    pub rank: usize,
    pub expected: usize,
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Numerical rank of `B̃ = [π(θ_0), …, π(θ_k)] − π(θ_0)1ᵀ` for a
/// one-dimensional family. Rows and columns are equilibrated before the SVD;
/// diagonal scaling does not change rank.
pub fn total_positivity_rank(spec: &ExpFamilySpec, thetas: &[f64]) -> Result<TotalPositivityRank> {
    if spec.dim() != 1 {
        return Err(Error::InvalidInput("total positivity needs a one-dimensional family".into()));
    }
    let n = spec.n_bins();
    if thetas.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: thetas.len(),
        });
    }
    if thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("θ grid must be strictly increasing".into()));
    }
    let mut warnings = Vec::new();
    let a = &spec.plus_directions[0];
    let mut sorted = a.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] <= 1e-12 * (1.0 + w[0].abs())) {
        warnings.push("direction has repeated components; the family is not generic".into());
    }
    let family = spec.slice(&[])?;
    let cols: Vec<Vec<f64>> = thetas.iter().map(|&t| family.probs(&[t])).collect();
    let mut m = DMatrix::from_fn(n, n - 1, |h, j| cols[j + 1][h] - cols[0][h]);
    for _ in 0..50 {
        for mut row in m.row_iter_mut() {
            let s = row.amax().sqrt();
            if s > 0.0 {
                row /= s;
            }
        }
        for mut col in m.column_iter_mut() {
            let s = col.amax().sqrt();
            if s > 0.0 {
                col /= s;
            }
        }
    }
    let sv: Vec<f64> = {
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    };
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * sv[0]).count();
    Ok(TotalPositivityRank {
        rank,
        expected: n - 1,
        singular_values: sv,
        warnings,
    })
}

/// A finite exponential family `p_h(λ) ∝ exp(log_base_h + λ·s_h)`.
///
/// Bins with `log_base = −∞` carry no mass for any `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tilted {
    log_base: Vec<f64>,
    stats: Vec<Vec<f64>>,
    dim: usize,
}

impl Tilted {
    pub fn new(log_base: Vec<f64>, stats: Vec<Vec<f64>>) -> Result<Self> {
        if log_base.len() != stats.len() || log_base.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: log_base.len(),
                found: stats.len(),
            });
        }
        let dim = stats[0].len();
        if stats.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidInput("statistics must share one dimension".into()));
        }
        if log_base.iter().all(|l| *l == f64::NEG_INFINITY) || log_base.iter().any(|l| l.is_nan()) {
            return Err(Error::InvalidInput("base measure is empty".into()));
        }
        Ok(Self { log_base, stats, dim })
    }

    /// A one-dimensional family on weights `w` with scalar statistic `s`.
    pub fn scalar(weights: &[f64], stats: &[f64]) -> Result<Self> {
        Self::new(
            weights.iter().map(|w| w.ln()).collect(),
            stats.iter().map(|&s| vec![s]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_bins(&self) -> usize {
        self.log_base.len()
    }

    pub fn stats(&self) -> &[Vec<f64>] {
        &self.stats
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n_bins())
            .filter(|&h| self.log_base[h] > f64::NEG_INFINITY)
            .collect()
    }

    fn logits(&self, lambda: &[f64]) -> Vec<f64> {
        self.log_base
            .iter()
            .zip(&self.stats)
            .map(|(&l, s)| if l == f64::NEG_INFINITY { l } else { l + dot(lambda, s) })
            .collect()
    }

    /// `ψ(λ) = log Σ_h exp(log_base_h + λ·s_h)`.
    pub fn log_partition(&self, lambda: &[f64]) -> f64 {
        log_sum_exp(&self.logits(lambda))
    }

    pub fn probs(&self, lambda: &[f64]) -> Vec<f64> {
        crate::simplex::softmax(&self.logits(lambda))
    }

    pub fn mean(&self, lambda: &[f64]) -> Vec<f64> {
        self.mean_of(&self.probs(lambda))
    }

    fn mean_of(&self, p: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        for (ph, s) in p.iter().zip(&self.stats) {
            if *ph > 0.0 {
                mu.iter_mut().zip(s).for_each(|(m, x)| *m += ph * x);
            }
        }
        mu
    }

    pub fn covariance(&self, lambda: &[f64]) -> DMatrix<f64> {
        let p = self.probs(lambda);
        self.covariance_of(&p, &self.mean_of(&p))
    }

    fn covariance_of(&self, p: &[f64], mu: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut cov = DMatrix::zeros(d, d);
        for (ph, s) in p.iter().zip(&self.stats) {
            if *ph == 0.0 {
                continue;
            }
            for i in 0..d {
                let ci = s[i] - mu[i];
                for j in 0..=i {
                    cov[(i, j)] += ph * ci * (s[j] - mu[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        cov
    }

    /// Central moment tensor of order `order`, flattened row-major over
    /// `d^order` indices.
    pub fn central_moment(&self, lambda: &[f64], order: u32) -> Vec<f64> {
        let p = self.probs(lambda);
        let mu = self.mean_of(&p);
        let d = self.dim;
        let size = d.pow(order);
        let mut out = vec![0.0; size];
        for (ph, s) in p.iter().zip(&self.stats) {
            if *ph == 0.0 {
                continue;
            }
            let c: Vec<f64> = s.iter().zip(&mu).map(|(x, m)| x - m).collect();
            for (flat, slot) in out.iter_mut().enumerate() {
                let mut idx = flat;
                let mut prod = *ph;
                for _ in 0..order {
                    prod *= c[idx % d];
                    idx /= d;
                }
                *slot += prod;
            }
        }
        out
    }

    /// Solves `mean(λ) = target` by damped Newton on the convex dual
    /// `F(λ) = ψ(λ) − λ·target`. The target must lie in the relative
    /// interior of the convex hull of the supported statistics.
    pub fn solve(
        &self,
        target: &[f64],
        start: Option<&[f64]>,
        options: NewtonOptions,
    ) -> Result<SaddlepointSolution> {
        if target.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: target.len(),
            });
        }
        let support = self.support();
        let cloud: Vec<Vec<f64>> = support.iter().map(|&h| self.stats[h].clone()).collect();
        let check = boundary::relative_interior(&cloud, target)?;
        if !check.interior {
            let face = check.face.iter().map(|&i| support[i]).collect();
            return Err(Error::NoInteriorSolution { face });
        }
        let mut warnings = Vec::new();
        if check.affine_dim < self.dim {
            warnings.push(format!(
                "statistics span an affine space of dimension {} < {}; λ is not identifiable",
                check.affine_dim, self.dim
            ));
        }

        let d = self.dim;
        let mut lambda: Vec<f64> = start.map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
        let objective = |l: &[f64]| self.log_partition(l) - dot(l, target);
        let mut f = objective(&lambda);
        if !f.is_finite() {
            lambda = vec![0.0; d];
            f = objective(&lambda);
        }
        let mut ill_conditioned = false;
        let mut condition_number = 1.0;
        let mut residual = f64::INFINITY;
        let mut best: Option<(Vec<f64>, f64, usize)> = None;
        let mut polish = 0;

        for iteration in 0..=options.max_iterations {
            let p = self.probs(&lambda);
            let mu = self.mean_of(&p);
            let grad: Vec<f64> = mu.iter().zip(target).map(|(m, t)| m - t).collect();
            residual = grad.iter().fold(0.0, |acc, g| acc.max(g.abs()));
            let cov = self.covariance_of(&p, &mu);
            let eig = SymmetricEigen::new(cov);
            let top = eig.eigenvalues.max();
            let bottom = eig.eigenvalues.min();
            condition_number = if bottom > 0.0 { top / bottom } else { f64::INFINITY };
            // Once within tolerance, take up to two more Newton steps while
            // they keep shrinking the residual; λ error is residual/variance.
            if residual <= options.tol {
                let improved = best.as_ref().is_none_or(|(_, r, _)| residual < 0.5 * *r);
                if improved {
                    best = Some((lambda.clone(), residual, iteration));
                }
                if !improved || polish >= 2 || residual == 0.0 {
                    let (lambda, residual, iterations) = best.take().unwrap();
                    if ill_conditioned {
                        warnings.push(format!(
                            "Fisher information is ill-conditioned (condition number {condition_number:e}); \
                             used bisection along weak directions"
                        ));
                    }
                    return Ok(SaddlepointSolution {
                        lambda,
                        iterations,
                        residual,
                        condition_number,
                        warnings,
                    });
                }
                polish += 1;
            }
            if iteration == options.max_iterations {
                break;
            }

            let cutoff = top / options.condition_threshold;
            let mut step = vec![0.0; d];
            let mut weak = Vec::new();
            for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
                let u = eig.eigenvectors.column(idx);
                if ev > cutoff && ev > 0.0 {
                    let c = u.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() / ev;
                    step.iter_mut().zip(u.iter()).for_each(|(s, ui)| *s -= c * ui);
                } else {
                    weak.push(u.iter().copied().collect::<Vec<f64>>());
                }
            }

            let slope = dot(&grad, &step);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=options.max_halvings {
                let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, s)| l + alpha * s).collect();
                let ft = objective(&trial);
                // Near the solution F is flat to rounding, so a drop in the
                // residual also accepts the step.
                let decreases = ft.is_finite()
                    && (ft <= f + 1e-4 * alpha * slope || {
                        let mu = self.mean(&trial);
                        let r = mu.iter().zip(target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                        r < residual
                    });
                if decreases {
                    lambda = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }

            if !weak.is_empty() {
                ill_conditioned = true;
                for u in &weak {
                    lambda = self.line_solve(&lambda, u, target);
                }
                f = objective(&lambda);
            } else if !accepted {
                break;
            }
        }
        if let Some((lambda, residual, iterations)) = best {
            return Ok(SaddlepointSolution {
                lambda,
                iterations,
                residual,
                condition_number,
                warnings,
            });
        }
        Err(Error::NonConvergence(format!(
            "saddlepoint residual {residual:e} above tolerance {:e} (condition number {condition_number:e})",
            options.tol
        )))
    }

    /// Minimizes the dual along `u` by bisection on its monotone derivative.
    fn line_solve(&self, lambda: &[f64], u: &[f64], target: &[f64]) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> { lambda.iter().zip(u).map(|(l, x)| l + t * x).collect() };
        let deriv = |t: f64| {
            let mu = self.mean(&at(t));
            mu.iter().zip(target).zip(u).map(|((m, g), x)| (m - g) * x).sum::<f64>()
        };
        let g0 = deriv(0.0);
        if g0 == 0.0 {
            return lambda.to_vec();
        }
        let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
        let (mut lo, mut hi) = (0.0, dir);
        let mut found = false;
        for _ in 0..80 {
            if deriv(hi).signum() != g0.signum() {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !found {
            return at(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if deriv(mid).signum() == g0.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::exp_geodesic;
    use crate::spectrum::fisher_matrix;
    use proptest::prelude::*;

    fn uniform(n: usize) -> ProbabilityVector {
        ProbabilityVector::uniform(n).unwrap()
    }

    fn example5() -> ExpFamilySpec {
        make_family(
            &uniform(4),
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 4.0, 9.0, -1.0]],
            None,
        )
        .unwrap()
    }

    fn bernoulli() -> ExpFamilySpec {
        make_family(&uniform(2), vec![vec![0.0, 1.0]], None).unwrap()
    }

    #[test]
    fn construction() {
        let spec = example5();
        assert_eq!(spec.offsets().len(), 1);
        let b = &spec.offsets()[0];
        assert!(b.iter().sum::<f64>().abs() < 1e-12);
        for a in spec.directions() {
            assert!(dot(a, b).abs() < 1e-12);
        }
        assert!(matches!(
            make_family(&uniform(3), vec![vec![1.0; 3]], None),
            Err(Error::RankDeficient(_))
        ));
        let sat = make_family(&uniform(3), vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], None).unwrap();
        assert!(sat.offsets().is_empty());
        assert!(matches!(
            make_family(&uniform(3), vec![vec![0.0, 1.0, 2.0]], Some(vec![vec![1.0, -1.0, 0.0]])),
            Err(Error::NotOrthogonal(_))
        ));
        let ok = make_family(&uniform(3), vec![vec![0.0, 1.0, 2.0]], Some(vec![vec![1.0, -2.0, 1.0]]));
        assert!(ok.is_ok());
    }

    #[test]
    fn point_examples() {
        let spec = example5();
        let p = point(&spec, &[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(p.pi.as_slice(), uniform(4).as_slice());

        let tri = make_family(&uniform(3), vec![vec![1.0, 2.0, 3.0]], None).unwrap();
        let a = point(&tri, &[0.7], &[]).unwrap();
        let b = exp_geodesic(&uniform(3), &[1.0, 2.0, 3.0], 0.7).unwrap();
        for (x, y) in a.pi.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }

        // Push σ to the facet where the shifted base first vanishes.
        let bvec = &spec.offsets()[0];
        let (h, sigma) = bvec
            .iter()
            .enumerate()
            .filter(|(_, &x)| x < 0.0)
            .map(|(h, &x)| (h, 0.25 / -x))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let facet = point(&spec, &[0.4, -0.1], &[sigma]).unwrap();
        assert_eq!(facet.pi[h], 0.0);
        assert!(matches!(
            point(&spec, &[0.0, 0.0], &[sigma * 1.01]),
            Err(Error::OutsidePolytope { index, .. }) if index == h
        ));
    }

    #[test]
    fn mean_map_examples() {
        let b = bernoulli();
        assert_eq!(mean_map(&b, &[], &[0.0]).unwrap(), vec![0.5]);
        let far = mean_map(&b, &[], &[50.0]).unwrap()[0];
        assert!(1.0 - far < 1e-20);

        // Trinomial with b = (1,2,3): vertex (π₁,π₂) = (1,0) is π = (0,1,0),
        // whose mean is 2, the same as the uniform point's.
        let tri = make_family(&uniform(3), vec![vec![1.0, 2.0, 3.0]], None).unwrap();
        assert!((mean_map(&tri, &[], &[0.0]).unwrap()[0] - 2.0).abs() < 1e-15);
        assert_eq!(dot(&tri.directions()[0], &[0.0, 1.0, 0.0]), 2.0);
    }

    #[test]
    fn saddlepoint_examples() {
        let b = bernoulli();
        let s = solve_saddlepoint_equation(&b, &[], &[0.5]).unwrap();
        assert!(s.lambda[0].abs() < 1e-12);
        let s = solve_saddlepoint_equation(&b, &[], &[0.8]).unwrap();
        assert!((s.lambda[0] - 4f64.ln()).abs() < 1e-9);
        assert!(matches!(
            solve_saddlepoint_equation(&b, &[], &[1.0]),
            Err(Error::NoInteriorSolution { face }) if face == vec![1]
        ));

        let spec = example5();
        let mu = mean_map(&spec, &[0.0], &[0.3, -0.2]).unwrap();
        let s = solve_saddlepoint_equation(&spec, &[0.0], &mu).unwrap();
        assert!((s.lambda[0] - 0.3).abs() < 1e-8 && (s.lambda[1] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn ill_conditioned_target_still_solves() {
        let b = bernoulli();
        let s = solve_saddlepoint_equation(&b, &[], &[1.0 - 1e-7]).unwrap();
        assert!((s.lambda[0] - ((1.0 - 1e-7) / 1e-7f64).ln()).abs() < 1e-3);
        let spec = example5();
        let target = mean_map(&spec, &[0.0], &[6.0, 2.0]).unwrap();
        let s = solve_saddlepoint_equation(&spec, &[0.0], &target).unwrap();
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn family_fisher_matches_chart_form() {
        let spec = example5();
        let lambda = [0.2, -0.1];
        let p = point(&spec, &lambda, &[0.0]).unwrap().pi;
        let chart = DMatrix::from_fn(3, 2, |h, i| spec.directions()[i][h + 1] - spec.directions()[i][0]);
        let want = chart.transpose() * fisher_matrix(&p) * &chart;
        let got = family_fisher(&spec, &[0.0], &lambda).unwrap();
        assert!((want - got).amax() < 1e-12);
    }

    #[test]
    fn mixed_coordinates() {
        let spec = example5();
        let p = point(&spec, &[0.3, -0.2], &[0.0]).unwrap();
        let full = mixed_parameterization(&spec, &[0.0], &p.pi, 2).unwrap();
        assert!((full.natural[0] - 0.3).abs() < 1e-10 && full.mean.is_empty());
        let means = mixed_parameterization(&spec, &[0.0], &p.pi, 0).unwrap();
        assert_eq!(means.mean, mean_map(&spec, &[0.0], &[0.3, -0.2]).unwrap());
        for r in 0..=2 {
            let c = mixed_parameterization(&spec, &[0.0], &p.pi, r).unwrap();
            let back = from_mixed(&spec, &[0.0], &c).unwrap();
            for (x, y) in back.pi.as_slice().iter().zip(p.pi.as_slice()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        let off = ProbabilityVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(matches!(
            mixed_parameterization(&spec, &[0.0], &off, 1),
            Err(Error::NotInFamily(_))
        ));
    }

    #[test]
    fn orthogonal_statistics_read_directly() {
        // At the uniform base, centred statistics with disjoint support are
        // Fisher orthogonal, so the mixed coordinates are (λ₁, μ₂).
        let spec = make_family(
            &uniform(4),
            vec![vec![1.0, -1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, -1.0]],
            None,
        )
        .unwrap();
        let cov = family_fisher(&spec, &[0.0], &[0.0, 0.0]).unwrap();
        assert!(cov[(0, 1)].abs() < 1e-15);
        let p = point(&spec, &[0.0, 0.0], &[0.0]).unwrap();
        let c = mixed_parameterization(&spec, &[0.0], &p.pi, 1).unwrap();
        assert!(c.natural[0].abs() < 1e-12 && c.mean[0].abs() < 1e-15);
    }

    #[test]
    fn logistic() {
        let two = logistic_embedding(&[vec![1.0], vec![1.0]], DEFAULT_LOGISTIC_CAP).unwrap();
        assert_eq!(two.directions()[0], vec![0.0, 1.0, 1.0, 2.0]);
        let design: Vec<Vec<f64>> = (1..=7).map(|i| vec![1.0, i as f64]).collect();
        let spec = logistic_embedding(&design, DEFAULT_LOGISTIC_CAP).unwrap();
        assert_eq!(spec.n_bins(), 128);
        let j = sequence_index(&[0, 1, 0, 1, 0, 1, 1]).unwrap();
        assert_eq!(spec.statistic(j), vec![4.0, 19.0]);
        assert_eq!(vertex_bits(j, 7), "0101011");
        let big = vec![vec![1.0]; 21];
        assert!(matches!(
            logistic_embedding(&big, DEFAULT_LOGISTIC_CAP),
            Err(Error::CapExceeded { value: 21, .. })
        ));
    }

    #[test]
    fn total_positivity_examples() {
        let spec = make_family(&uniform(3), vec![vec![0.0, 1.0, 2.0]], None).unwrap();
        let r = total_positivity_rank(&spec, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.warnings.is_empty());
        let flat = make_family(&uniform(3), vec![vec![1.0, 1.0, 2.0]], None).unwrap();
        let r = total_positivity_rank(&flat, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(r.rank <= 1);
        assert_eq!(r.warnings.len(), 1);
    }

    fn random_family() -> impl Strategy<Value = (ExpFamilySpec, Vec<f64>)> {
        (3usize..8, 1usize..3).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(0.1f64..1.0, n),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), d),
                prop::collection::vec(-1.0f64..1.0, d),
            )
                .prop_filter_map("rank", |(w, a, l)| {
                    let base = ProbabilityVector::from_weights(&w).ok()?;
                    make_family(&base, a, None).ok().map(|s| (s, l))
                })
        })
    }

    proptest! {
        #[test]
        fn round_trip((spec, lambda) in random_family()) {
            let mu = mean_map(&spec, &[], &lambda).unwrap();
            let sol = solve_saddlepoint_equation(&spec, &[], &mu).unwrap();
            for (a, b) in sol.lambda.iter().zip(&lambda) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn jacobian_is_fisher((spec, lambda) in random_family()) {
            let cov = family_fisher(&spec, &[], &lambda).unwrap();
            let d = spec.dim();
            for j in 0..d {
                let mut up = lambda.clone();
                let mut dn = lambda.clone();
                up[j] += 1e-5;
                dn[j] -= 1e-5;
                let mu_up = mean_map(&spec, &[], &up).unwrap();
                let mu_dn = mean_map(&spec, &[], &dn).unwrap();
                for i in 0..d {
                    let fd = (mu_up[i] - mu_dn[i]) / 2e-5;
                    prop_assert!((fd - cov[(i, j)]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn slices_are_plus_parallel((spec, lambda) in random_family(), s1 in -0.05f64..0.05, s2 in -0.05f64..0.05) {
            let m = spec.offsets().len();
            prop_assume!(m > 0);
            let sig1 = vec![s1; m];
            let sig2 = vec![s2; m];
            let (Ok(p0), Ok(q0)) = (point(&spec, &vec![0.0; spec.dim()], &sig1), point(&spec, &vec![0.0; spec.dim()], &sig2)) else {
                return Ok(());
            };
            let p1 = point(&spec, &lambda, &sig1).unwrap();
            let q1 = point(&spec, &lambda, &sig2).unwrap();
            // log p − log q changes along λ only by a constant.
            let diff: Vec<f64> = (0..spec.n_bins())
                .map(|h| (p1.pi[h].ln() - q1.pi[h].ln()) - (p0.pi[h].ln() - q0.pi[h].ln()))
                .collect();
            for w in diff.windows(2) {
                prop_assert!((w[0] - w[1]).abs() < 1e-10);
            }
        }

        #[test]
        fn sigma_domain_is_convex((spec, _l) in random_family(), s1 in -3.0f64..3.0, s2 in -3.0f64..3.0, t in 0.0f64..1.0) {
            let m = spec.offsets().len();
            prop_assume!(m > 0);
            let a = vec![s1; m];
            let b = vec![s2; m];
            if spec.shifted_base(&a).is_ok() && spec.shifted_base(&b).is_ok() {
                let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
                prop_assert!(spec.shifted_base(&c).is_ok());
            }
        }

        #[test]
        fn mean_is_monotone_on_lines((spec, lambda) in random_family(), dir in prop::collection::vec(-1.0f64..1.0, 2)) {
            let d = spec.dim();
            let u = &dir[..d];
            prop_assume!(u.iter().any(|x| x.abs() > 0.1));
            let family = spec.slice(&[]).unwrap();
            let along = |t: f64| {
                let l: Vec<f64> = lambda.iter().zip(u).map(|(a, b)| a + t * b).collect();
                dot(&family.mean(&l), u)
            };
            prop_assert!(along(0.1) > along(0.0));
        }
    }
}
