//! Nonparametric maximum likelihood over mixtures of a one-parameter curve
//! in the simplex.
//!
//! The curve is replaced by a polygon through `π(θ_1), …, π(θ_M)`. The
//! weights on the vertices are fitted by vertex exchange with a constrained
//! Newton (NNLS) corrective step, and the polygon's distance to the curve
//! gives a first-order bound on the likelihood lost by the approximation.
//! All distances are measured on the observed bins only, where the
//! likelihood lives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::golden_section_max;
use crate::error::{Error, Result};
use crate::expfam::{ExpFamilySpec, Tilted};
use crate::simplex::{weighted_norm, CountVector, ProbabilityVector};

type CurveFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// A map `θ ↦ π(θ)` on a compact interval.
#[derive(Clone)]
pub struct ComponentCurve {
    name: String,
    lo: f64,
    hi: f64,
    n_bins: usize,
    eval: Arc<CurveFn>,
}

impl std::fmt::Debug for ComponentCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComponentCurve")
            .field("name", &self.name)
            .field("domain", &(self.lo, self.hi))
            .field("n_bins", &self.n_bins)
            .finish()
    }
}

fn ln_choose(n: usize, i: usize) -> f64 {
    (1..=i).map(|j| ((n - i + j) as f64 / j as f64).ln()).sum()
}

fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    (0..=trials)
        .map(|i| {
            if p == 0.0 {
                return if i == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if i == trials { 1.0 } else { 0.0 };
            }
            (ln_choose(trials, i) + i as f64 * p.ln() + (trials - i) as f64 * (-p).ln_1p()).exp()
        })
        .collect()
}

impl ComponentCurve {
    pub fn new<F>(name: impl Into<String>, lo: f64, hi: f64, n_bins: usize, eval: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("curve domain [{lo}, {hi}] is not a compact interval")));
        }
        if n_bins < 2 {
            return Err(Error::InvalidInput("curve needs at least two bins".into()));
        }
        let curve = Self {
            name: name.into(),
            lo,
            hi,
            n_bins,
            eval: Arc::new(eval),
        };
        for t in [lo, 0.5 * (lo + hi), hi] {
            let p = curve.eval(t);
            if p.len() != n_bins {
                return Err(Error::DimensionMismatch {
                    expected: n_bins,
                    found: p.len(),
                });
            }
            ProbabilityVector::new(p)?;
        }
        Ok(curve)
    }

    /// `Bin(p, trials)` over `p ∈ [0, 1]`.
    pub fn binomial(trials: usize) -> Result<Self> {
        Self::binomial_on(trials, 0.0, 1.0)
    }

    pub fn binomial_on(trials: usize, lo: f64, hi: f64) -> Result<Self> {
        if trials == 0 || !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
            return Err(Error::InvalidInput(format!(
                "binomial curve needs trials >= 1 and [{lo}, {hi}] inside [0, 1]"
            )));
        }
        Self::new(format!("binomial({trials})"), lo, hi, trials + 1, move |p| binomial_pmf(trials, p))
    }

    /// A one-parameter family of the simplex on natural parameters `[lo, hi]`,
    /// taken at zero offsets.
    pub fn from_family(spec: &ExpFamilySpec, lo: f64, hi: f64) -> Result<Self> {
        if spec.dim() != 1 {
            return Err(Error::InvalidInput(format!(
                "mixing curve must be one-dimensional, the family has dimension {}",
                spec.dim()
            )));
        }
        let slice: Tilted = spec.slice(&[])?;
        Self::new("exponential family", lo, hi, spec.n_bins(), move |t| slice.probs(&[t]))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        (self.eval)(theta.clamp(self.lo, self.hi))
    }

    /// Largest `‖Δπ‖₁ / Δθ` over a uniform grid of `samples` intervals.
    pub fn lipschitz_estimate(&self, samples: usize) -> f64 {
        let samples = samples.max(1);
        let h = (self.hi - self.lo) / samples as f64;
        let mut prev = self.eval(self.lo);
        let mut best = 0.0f64;
        for j in 1..=samples {
            let cur = self.eval(self.lo + j as f64 * h);
            let d: f64 = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            best = best.max(d / h);
            prev = cur;
        }
        best
    }
}

/// The coordinates of `π` on the index set (the observed face).
pub fn lindsay_projection(pi: &ProbabilityVector, indices: &[usize]) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("projection needs a non-empty index set".into()));
    }
    indices
        .iter()
        .map(|&i| {
            if i < pi.len() {
                Ok(pi[i])
            } else {
                Err(Error::InvalidInput(format!("index {i} out of range for {} bins", pi.len())))
            }
        })
        .collect()
}

fn project(v: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&i| v[i]).collect()
}

/// Distance from `m` to the chord `[a, b]` in the anchor's preferred norm.
/// The minimizing `ρ` of the quadratic is clamped to `[0, 1]`.
fn chord_distance(m: &[f64], a: &[f64], b: &[f64], anchor: &[f64], coords: &[usize]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in coords {
        if anchor[i] <= 0.0 {
            return Err(Error::UndefinedNorm { index: i });
        }
        let d = a[i] - b[i];
        num += (m[i] - b[i]) * d / anchor[i];
        den += d * d / anchor[i];
    }
    let rho = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
    let resid: Vec<f64> = coords
        .iter()
        .map(|&i| m[i] - (rho * a[i] + (1.0 - rho) * b[i]))
        .collect();
    let w: Vec<f64> = coords.iter().map(|&i| anchor[i]).collect();
    let dist = weighted_norm(&resid, &w).map_err(|e| match e {
        Error::UndefinedNorm { index } => Error::UndefinedNorm { index: coords[index] },
        other => other,
    })?;
    if !dist.is_finite() {
        return Err(Error::InvalidInput("chord distance is not finite".into()));
    }
    Ok(dist)
}

/// Points per segment in the audit of the polygonal approximation.
pub const AUDIT_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveGrid {
    pub thetas: Vec<f64>,
    /// Largest audited distance of the curve from its own chord.
    pub epsilon: f64,
    pub audit_rounds: usize,
}

/// Largest chord distance on `AUDIT_FACTOR − 1` interior points of every
/// segment, per segment.
fn audit_segments(
    curve: &ComponentCurve,
    thetas: &[f64],
    anchor: &[f64],
    coords: &[usize],
) -> Result<Vec<f64>> {
    let vals: Vec<Vec<f64>> = thetas.iter().map(|&t| curve.eval(t)).collect();
    let mut out = Vec::with_capacity(thetas.len().saturating_sub(1));
    for s in 0..thetas.len() - 1 {
        let (a, b) = (thetas[s], thetas[s + 1]);
        let mut worst = 0.0f64;
        for j in 1..AUDIT_FACTOR {
            let t = a + (b - a) * j as f64 / AUDIT_FACTOR as f64;
            let d = chord_distance(&curve.eval(t), &vals[s], &vals[s + 1], anchor, coords)?;
            worst = worst.max(d);
        }
        out.push(worst);
    }
    Ok(out)
}

/// Bisects segments until the curve's midpoint lies within `epsilon_target`
/// of the chord, then audits every segment at `AUDIT_FACTOR`× resolution and
/// splits again where the audit exceeds the target. Distances use the
/// preferred norm of `anchor` restricted to `coords`.
pub fn adaptive_support(
    curve: &ComponentCurve,
    epsilon_target: f64,
    anchor: &[f64],
    coords: &[usize],
    max_points: usize,
) -> Result<AdaptiveGrid> {
    adaptive_support_from(curve, &[curve.lo, curve.hi], epsilon_target, anchor, coords, max_points)
}

pub fn adaptive_support_from(
    curve: &ComponentCurve,
    start: &[f64],
    epsilon_target: f64,
    anchor: &[f64],
    coords: &[usize],
    max_points: usize,
) -> Result<AdaptiveGrid> {
    if !(epsilon_target.is_finite() && epsilon_target >= 0.0) {
        return Err(Error::InvalidInput(format!("epsilon target {epsilon_target} is invalid")));
    }
    if anchor.len() != curve.n_bins {
        return Err(Error::DimensionMismatch {
            expected: curve.n_bins,
            found: anchor.len(),
        });
    }
    if coords.is_empty() || coords.iter().any(|&i| i >= curve.n_bins) {
        return Err(Error::InvalidInput("coordinate set is empty or out of range".into()));
    }
    let min_width = 1e-12 * (curve.hi - curve.lo);
    let mut thetas = start.to_vec();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut refined = vec![thetas[0]];
        let mut stack: Vec<(f64, f64)> = thetas.windows(2).rev().map(|w| (w[0], w[1])).collect();
        while let Some((a, b)) = stack.pop() {
            let mid = 0.5 * (a + b);
            let d = chord_distance(&curve.eval(mid), &curve.eval(a), &curve.eval(b), anchor, coords)?;
            if d > epsilon_target && b - a > min_width {
                stack.push((mid, b));
                stack.push((a, mid));
            } else {
                refined.push(b);
            }
            if refined.len() + stack.len() > max_points {
                return Err(Error::CapExceeded {
                    what: "polygon vertices",
                    value: refined.len() + stack.len(),
                    cap: max_points,
                });
            }
        }
        thetas = refined;
        let audit = audit_segments(curve, &thetas, anchor, coords)?;
        let epsilon = audit.iter().fold(0.0f64, |m, d| m.max(*d));
        let bad: Vec<usize> = (0..audit.len())
            .filter(|&s| audit[s] > epsilon_target && thetas[s + 1] - thetas[s] > min_width)
            .collect();
        if bad.is_empty() || rounds >= 50 {
            return Ok(AdaptiveGrid {
                thetas,
                epsilon,
                audit_rounds: rounds,
            });
        }
        let mut next = Vec::with_capacity(thetas.len() + bad.len());
        let mut it = bad.iter().peekable();
        for s in 0..thetas.len() - 1 {
            next.push(thetas[s]);
            if it.peek() == Some(&&s) {
                it.next();
                next.push(0.5 * (thetas[s] + thetas[s + 1]));
            }
        }
        next.push(*thetas.last().unwrap());
        thetas = next;
    }
}

/// Subdivides every segment of a grid into `factor` equal pieces.
pub fn refine_grid(thetas: &[f64], factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    let mut out = Vec::with_capacity((thetas.len() - 1) * factor + 1);
    for w in thetas.windows(2) {
        for j in 0..factor {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
        }
    }
    out.extend(thetas.last());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NpmleOptions {
    pub epsilon_target: f64,
    /// Directional-derivative tolerance per observation; the stopping
    /// threshold is this times `N`.
    pub dd_tol_per_n: f64,
    pub prune: f64,
    pub max_iterations: usize,
    pub max_points: usize,
    /// Re-anchoring rounds when the audited ε at the fit exceeds twice the
    /// target.
    pub max_reanchor: usize,
    /// Cap on vertices inserted at maximizers of `D` off the polygon grid.
    pub max_inserted: usize,
}

impl Default for NpmleOptions {
    fn default() -> Self {
        Self {
            epsilon_target: 1e-3,
            dd_tol_per_n: 1e-6,
            prune: 1e-8,
            max_iterations: 1000,
            max_points: 20_000,
            max_reanchor: 5,
            max_inserted: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureFit {
    pub curve: String,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    pub fitted: Vec<f64>,
    pub log_likelihood: f64,
    pub saturated_log_likelihood: f64,
    /// Largest `D(θ)` over the polygon vertices (the finite program's
    /// optimality certificate).
    pub max_directional_derivative: f64,
    /// Largest `D(θ)` over the audit grid on Θ with local polishing.
    pub max_directional_derivative_curve: f64,
    pub argmax_directional_derivative: f64,
    pub dd_tol: f64,
    pub epsilon_target: f64,
    pub epsilon: f64,
    pub gap_bound: f64,
    pub grid: Vec<f64>,
    pub iterations: usize,
    pub reanchor_rounds: usize,
    pub inserted_vertices: usize,
}

/// `ℓ = Σ n_i log f_i` over observed bins.
fn loglik(n: &[f64], f: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&ni, &fi) in n.iter().zip(f) {
        if ni > 0.0 {
            if fi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += ni * fi.ln();
        }
    }
    s
}

fn mix(columns: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; columns[0].len()];
    for (col, &wj) in columns.iter().zip(w) {
        if wj > 0.0 {
            f.iter_mut().zip(col).for_each(|(x, c)| *x += wj * c);
        }
    }
    f
}

/// `D_j = Σ n_i π_i(θ_j) / f_i − N`.
fn derivatives(columns: &[Vec<f64>], n: &[f64], f: &[f64]) -> Vec<f64> {
    let total: f64 = n.iter().sum();
    columns
        .iter()
        .map(|col| {
            col.iter()
                .zip(n)
                .zip(f)
                .filter(|((_, &ni), _)| ni > 0.0)
                .map(|((c, ni), fi)| ni * c / fi)
                .sum::<f64>()
                - total
        })
        .collect()
}

/// Lawson–Hanson non-negative least squares.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: b.len() });
    }
    let tol = 10.0 * f64::EPSILON * a.norm() * (m.max(n) as f64);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-13)
            .map_err(|e| Error::NonConvergence(format!("least squares: {e}")))?;
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        Ok(z)
    };
    // Columns whose entry was rejected by rounding are skipped until the
    // iterate moves again; this prevents cycling on nearly parallel columns.
    let mut skip = vec![false; n];
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !skip[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else {
            return Ok(x);
        };
        passive[t] = true;
        let mut first = true;
        loop {
            let z = solve(&passive)?;
            if first && z[t] <= 0.0 {
                passive[t] = false;
                skip[t] = true;
                break;
            }
            first = false;
            let bad: Vec<usize> = (0..n).filter(|&j| passive[j] && z[j] <= 0.0).collect();
            if bad.is_empty() {
                x = z;
                skip.iter_mut().for_each(|s| *s = false);
                break;
            }
            let alpha = bad
                .iter()
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (&z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    // The iterate is feasible and no worse than the start.
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    pub fitted: Vec<f64>,
    pub log_likelihood: f64,
    pub derivatives: Vec<f64>,
    pub iterations: usize,
}

/// Maximizes `Σ n_i log(Σ_j w_j c_{j,i})` over the weight simplex for fixed
/// component columns `c_j`. Vertex exchange: the active set grows by the
/// local maxima of `D` that are positive; the corrective step solves the
/// quadratic model `min Σ n_i (2 − Σ_j w_j c_{j,i}/f_i)²` over `w ≥ 0`,
/// `Σ w = 1` (the sum enforced by a heavy penalty row) with NNLS, and is
/// damped by an Armijo line search.
pub fn fit_weights(columns: &[Vec<f64>], n: &[f64], dd_tol: f64, prune: f64, max_iterations: usize) -> Result<WeightFit> {
    let m = columns.len();
    if m == 0 {
        return Err(Error::InvalidInput("no mixture components".into()));
    }
    let rows: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    for &i in &rows {
        if columns.iter().all(|c| c[i] <= 0.0) {
            return Err(Error::Infeasible(format!(
                "bin {i} is observed but no component gives it positive probability"
            )));
        }
    }
    // Start from the best single component, or the uniform mixture when
    // none covers every observed bin.
    let singles: Vec<f64> = columns.iter().map(|c| loglik(n, c)).collect();
    let best = (0..m).max_by(|&i, &j| singles[i].total_cmp(&singles[j])).unwrap();
    let mut w = vec![0.0; m];
    if singles[best].is_finite() {
        w[best] = 1.0;
    } else {
        w.iter_mut().for_each(|x| *x = 1.0 / m as f64);
    }
    let mut f = mix(columns, &w);
    let mut ll = loglik(n, &f);
    let mut iterations = 0;
    loop {
        let d = derivatives(columns, n, &f);
        let dmax = d.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if dmax <= dd_tol {
            if reduce_support(columns, &rows, n, &f, &mut w) {
                f = mix(columns, &w);
                ll = loglik(n, &f);
                continue;
            }
            let mut weights = w;
            let mut changed = false;
            for x in weights.iter_mut() {
                if *x > 0.0 && *x < prune {
                    *x = 0.0;
                    changed = true;
                }
            }
            if changed {
                let s: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|x| *x /= s);
                f = mix(columns, &weights);
                ll = loglik(n, &f);
            }
            let derivs = derivatives(columns, n, &f);
            return Ok(WeightFit {
                weights,
                fitted: f,
                log_likelihood: ll,
                derivatives: derivs,
                iterations,
            });
        }
        if iterations >= max_iterations {
            return Err(Error::NonConvergence(format!(
                "weight fit stopped after {iterations} iterations with max D = {dmax:e}"
            )));
        }
        iterations += 1;
        let mut active: Vec<usize> = (0..m).filter(|&j| w[j] > 0.0).collect();
        for j in 0..m {
            let left = j == 0 || d[j] >= d[j - 1];
            let right = j + 1 == m || d[j] >= d[j + 1];
            if d[j] > 0.0 && left && right && w[j] == 0.0 {
                active.push(j);
            }
        }
        let jmax = (0..m).max_by(|&i, &j| d[i].total_cmp(&d[j])).unwrap();
        if !active.contains(&jmax) {
            active.push(jmax);
        }
        active.sort_unstable();
        // The last row pins Σw = 1; without it the model is solved by
        // rescaling the current point.
        let pin = 1e3 * n.iter().sum::<f64>().sqrt();
        let mut a = DMatrix::zeros(rows.len() + 1, active.len());
        let mut b = DVector::zeros(rows.len() + 1);
        for (r, &i) in rows.iter().enumerate() {
            let s = n[i].sqrt();
            b[r] = 2.0 * s;
            for (c, &j) in active.iter().enumerate() {
                a[(r, c)] = s * columns[j][i] / f[i];
            }
        }
        b[rows.len()] = pin;
        for c in 0..active.len() {
            a[(rows.len(), c)] = pin;
        }
        let sol = nnls(&a, &b)?;
        let total: f64 = sol.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonConvergence("corrective step returned zero weights".into()));
        }
        let mut target = vec![0.0; m];
        for (c, &j) in active.iter().enumerate() {
            target[j] = sol[c] / total;
        }
        let dir: Vec<f64> = target.iter().zip(&w).map(|(t, x)| t - x).collect();
        let slope: f64 = dir.iter().zip(&d).map(|(x, dj)| x * dj).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-12 {
            let trial: Vec<f64> = w.iter().zip(&dir).map(|(x, s)| (x + alpha * s).max(0.0)).collect();
            let ft = mix(columns, &trial);
            let lt = loglik(n, &ft);
            if lt >= ll + alpha * slope / 3.0 {
                w = trial;
                f = ft;
                ll = lt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Fall back to a plain step toward the best vertex.
            let mut best = (0.0, ll, w.clone(), f.clone());
            for k in 1..=60 {
                let t = 0.5f64.powi(k);
                let trial: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(j, x)| (1.0 - t) * x + if j == jmax { t } else { 0.0 })
                    .collect();
                let ft = mix(columns, &trial);
                let lt = loglik(n, &ft);
                if lt > best.1 {
                    best = (t, lt, trial, ft);
                }
            }
            if best.0 == 0.0 {
                return Err(Error::NonConvergence(format!(
                    "no ascent step at max D = {dmax:e}"
                )));
            }
            ll = best.1;
            w = best.2;
            f = best.3;
        }
        for x in w.iter_mut() {
            if *x < 1e-300 {
                *x = 0.0;
            }
        }
    }
}

/// Removes one support point when the support columns are affinely
/// dependent on the observed bins, keeping `f` and `Σw` fixed. At an optimum
/// every support point satisfies `D = 0`, so a basic representation has at
/// most as many points as there are observed bins.
fn reduce_support(columns: &[Vec<f64>], rows: &[usize], n: &[f64], f: &[f64], w: &mut [f64]) -> bool {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
    if support.len() < 2 {
        return false;
    }
    let total: f64 = n.iter().sum();
    let mut m = DMatrix::zeros(rows.len() + 1, support.len());
    for (c, &j) in support.iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            m[(r, c)] = n[i].sqrt() * columns[j][i] / f[i];
        }
        m[(rows.len(), c)] = total.sqrt();
    }
    let eig = (m.transpose() * &m).symmetric_eigen();
    let (kmin, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, l)| (k, *l))
        .unwrap();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    if lmin > 1e-14 * lmax {
        return false;
    }
    let mut z: Vec<f64> = eig.eigenvectors.column(kmin).iter().copied().collect();
    if !z.iter().any(|&x| x > 0.0) {
        z.iter_mut().for_each(|x| *x = -*x);
    }
    let (drop, t) = support
        .iter()
        .zip(&z)
        .filter(|(_, &zc)| zc > 0.0)
        .map(|(&j, &zc)| (j, w[j] / zc))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    for (&j, &zc) in support.iter().zip(&z) {
        w[j] = (w[j] - t * zc).max(0.0);
    }
    w[drop] = 0.0;
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    true
}

fn counts_f64(counts: &CountVector) -> Vec<f64> {
    counts.as_slice().iter().map(|&c| c as f64).collect()
}

fn saturated(n: &[f64]) -> f64 {
    let total: f64 = n.iter().sum();
    n.iter().filter(|&&x| x > 0.0).map(|&x| x * (x / total).ln()).sum()
}

/// `D(θ) = Σ_{n_i > 0} n_i π_i(θ) / π̂_i − N`.
pub fn directional_derivative(fit: &MixtureFit, counts: &CountVector, curve: &ComponentCurve, theta: f64) -> Result<f64> {
    if counts.len() != fit.fitted.len() || curve.n_bins() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.fitted.len(),
            found: counts.len(),
        });
    }
    let p = curve.eval(theta);
    let mut s = 0.0;
    for (i, &c) in counts.as_slice().iter().enumerate() {
        if c == 0 {
            continue;
        }
        if fit.fitted[i] <= 0.0 {
            return Err(Error::InvalidInput(format!("fitted probability of observed bin {i} is zero")));
        }
        s += c as f64 * p[i] / fit.fitted[i];
    }
    Ok(s - counts.total() as f64)
}

/// `D(θ)` on a uniform grid of `points` values over Θ.
pub fn directional_derivative_curve(
    fit: &MixtureFit,
    counts: &CountVector,
    curve: &ComponentCurve,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = curve.domain();
    let points = points.max(2);
    (0..points)
        .map(|j| {
            let t = lo + (hi - lo) * j as f64 / (points - 1) as f64;
            Ok((t, directional_derivative(fit, counts, curve, t)?))
        })
        .collect()
}

/// First-order likelihood-gap bound `ε N ‖π̂^G − π̂‖_{π̂}` on the observed
/// bins. The `o(ε)` remainder is not included.
pub fn gap_bound(fit: &MixtureFit, counts: &CountVector) -> Result<f64> {
    let n = counts.total() as f64;
    let coords: Vec<usize> = (0..counts.len()).filter(|&i| counts.as_slice()[i] > 0).collect();
    let diff: Vec<f64> = coords
        .iter()
        .map(|&i| counts.as_slice()[i] as f64 / n - fit.fitted[i])
        .collect();
    let anchor = project(&fit.fitted, &coords);
    Ok(fit.epsilon * n * weighted_norm(&diff, &anchor)?)
}

/// Fits the mixture weights on a fixed polygon and audits it.
pub fn fit_on_grid(
    counts: &CountVector,
    curve: &ComponentCurve,
    grid: &[f64],
    options: &NpmleOptions,
) -> Result<MixtureFit> {
    if counts.len() != curve.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: curve.n_bins(),
            found: counts.len(),
        });
    }
    let n = counts_f64(counts);
    let total = counts.total() as f64;
    let dd_tol = options.dd_tol_per_n * total;
    let columns: Vec<Vec<f64>> = grid.iter().map(|&t| curve.eval(t)).collect();
    let wf = fit_weights(&columns, &n, dd_tol, options.prune, options.max_iterations)?;
    let coords: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0.0).collect();
    let audit = audit_segments(curve, grid, &wf.fitted, &coords)?;
    let epsilon = audit.iter().fold(0.0f64, |m, d| m.max(*d));
    let support: Vec<f64> = (0..grid.len()).filter(|&j| wf.weights[j] > 0.0).map(|j| grid[j]).collect();
    let weights: Vec<f64> = wf.weights.iter().copied().filter(|&x| x > 0.0).collect();
    let max_dd = wf.derivatives.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut fit = MixtureFit {
        curve: curve.name().to_string(),
        support,
        weights,
        fitted: wf.fitted,
        log_likelihood: wf.log_likelihood,
        saturated_log_likelihood: saturated(&n),
        max_directional_derivative: max_dd,
        max_directional_derivative_curve: f64::NAN,
        argmax_directional_derivative: f64::NAN,
        dd_tol,
        epsilon_target: options.epsilon_target,
        epsilon,
        gap_bound: 0.0,
        grid: grid.to_vec(),
        iterations: wf.iterations,
        reanchor_rounds: 0,
        inserted_vertices: 0,
    };
    let (theta, value) = curve_max_derivative(&fit, counts, curve)?;
    fit.max_directional_derivative_curve = value;
    fit.argmax_directional_derivative = theta;
    fit.gap_bound = gap_bound(&fit, counts)?;
    Ok(fit)
}

/// Max of `D` over the audit grid, polished by golden section around the
/// three largest local maxima.
fn curve_max_derivative(fit: &MixtureFit, counts: &CountVector, curve: &ComponentCurve) -> Result<(f64, f64)> {
    let audit = refine_grid(&fit.grid, AUDIT_FACTOR);
    let vals: Vec<f64> = audit
        .iter()
        .map(|&t| directional_derivative(fit, counts, curve, t))
        .collect::<Result<_>>()?;
    let mut peaks: Vec<usize> = (0..audit.len())
        .filter(|&j| (j == 0 || vals[j] >= vals[j - 1]) && (j + 1 == audit.len() || vals[j] >= vals[j + 1]))
        .collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    peaks.truncate(3);
    let mut best = (audit[peaks[0]], vals[peaks[0]]);
    for &j in &peaks {
        let a = audit[j.saturating_sub(1)];
        let b = audit[(j + 1).min(audit.len() - 1)];
        if b > a {
            let (t, v) = golden_section_max(|t| directional_derivative(fit, counts, curve, t), a, b, 1e-10)?;
            if v > best.1 {
                best = (t, v);
            }
        }
    }
    Ok(best)
}

/// Polygonal-approximation NPMLE. The polygon is built against the
/// empirical proportions on the observed bins, the weights are fitted, and
/// the polygon is rebuilt against the fit while the audited ε at the fit
/// exceeds twice the target.
pub fn npmle(counts: &CountVector, curve: &ComponentCurve, options: &NpmleOptions) -> Result<MixtureFit> {
    if counts.len() != curve.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: curve.n_bins(),
            found: counts.len(),
        });
    }
    let n = counts_f64(counts);
    let total = counts.total() as f64;
    let coords: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0.0).collect();
    let empirical: Vec<f64> = n.iter().map(|x| x / total).collect();
    let grid = adaptive_support(curve, options.epsilon_target, &empirical, &coords, options.max_points)?;
    let mut fit = fit_on_grid(counts, curve, &grid.thetas, options)?;
    let mut rounds = 0;
    while fit.epsilon > 2.0 * options.epsilon_target && rounds < options.max_reanchor {
        rounds += 1;
        let regrid = adaptive_support_from(
            curve,
            &fit.grid,
            options.epsilon_target,
            &fit.fitted,
            &coords,
            options.max_points,
        )?;
        fit = fit_on_grid(counts, curve, &regrid.thetas, options)?;
    }
    // Vertex exchange on Θ itself: insert the polished maximizer of D as a
    // new polygon vertex until the certificate holds on the whole curve.
    let mut inserted = 0;
    while fit.max_directional_derivative_curve > fit.dd_tol && inserted < options.max_inserted {
        let t = fit.argmax_directional_derivative;
        if fit.grid.iter().any(|&g| (g - t).abs() <= 1e-14 * (1.0 + t.abs())) {
            break;
        }
        let mut grid = fit.grid.clone();
        let pos = grid.partition_point(|&g| g < t);
        grid.insert(pos, t);
        fit = fit_on_grid(counts, curve, &grid, options)?;
        inserted += 1;
    }
    fit.reanchor_rounds = rounds;
    fit.inserted_vertices = inserted;
    Ok(fit)
}

/// Counts from `n` draws of a finite mixture of `Bin(p, trials)`.
pub fn simulate_binomial_mixture(trials: usize, support: &[f64], weights: &[f64], n: usize, seed: u64) -> Result<CountVector> {
    if support.is_empty() || support.len() != weights.len() {
        return Err(Error::InvalidInput("support and weights must be non-empty and of equal length".into()));
    }
    let w = ProbabilityVector::from_weights(weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; trials + 1];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = support.len() - 1;
        for (j, &wj) in w.as_slice().iter().enumerate() {
            acc += wj;
            if u < acc {
                comp = j;
                break;
            }
        }
        let p = support[comp];
        let x = (0..trials).filter(|_| rng.random::<f64>() < p).count();
        counts[x] += 1;
    }
    CountVector::new(counts)
}
