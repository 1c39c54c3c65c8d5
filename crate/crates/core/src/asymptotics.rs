//! Cumulants, Edgeworth and saddlepoint densities for finite exponential
//! families.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{bin_moments, Curve, PartitionSpec};
use crate::error::{Error, Result};
use crate::expfam::{ExpFamilySpec, NewtonOptions, Tilted};

/// Smallest eigenvalue ratio of the covariance accepted as nonsingular.
pub const SINGULAR_COVARIANCE: f64 = 1e-12;

/// Cumulants of the sufficient statistic. Tensors are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantSet {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub skewness: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kurtosis: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl CumulantSet {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariance)
    }
}

pub fn cumulants(spec: &ExpFamilySpec, sigma: &[f64], lambda: &[f64], order: u32) -> Result<CumulantSet> {
    if lambda.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: lambda.len(),
        });
    }
    let mut set = cumulants_of(&spec.slice(sigma)?, lambda, order)?;
    let base = spec.shifted_base(sigma)?;
    if base.iter().any(|w| *w == 0.0) {
        set.warnings
            .push("base point has empty bins; the family lives on a face of the simplex".into());
    }
    Ok(set)
}

/// Cumulants up to `order` (3 or 4) by finite summation.
pub fn cumulants_of(family: &Tilted, lambda: &[f64], order: u32) -> Result<CumulantSet> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidInput(format!("cumulant order must be 2, 3 or 4, got {order}")));
    }
    let d = family.dim();
    let mean = family.mean(lambda);
    let cov = family.central_moment(lambda, 2);
    let skewness = if order >= 3 {
        family.central_moment(lambda, 3)
    } else {
        vec![0.0; d * d * d]
    };
    let kurtosis = (order == 4).then(|| {
        let m4 = family.central_moment(lambda, 4);
        let c = |a: usize, b: usize| cov[a * d + b];
        let mut k4 = m4;
        for a in 0..d {
            for b in 0..d {
                for e in 0..d {
                    for f in 0..d {
                        let idx = ((a * d + b) * d + e) * d + f;
                        k4[idx] -= c(a, b) * c(e, f) + c(a, e) * c(b, f) + c(a, f) * c(b, e);
                    }
                }
            }
        }
        k4
    });
    let mut warnings = Vec::new();
    let eig = DMatrix::from_row_slice(d, d, &cov).symmetric_eigenvalues();
    let top = eig.max();
    if !(eig.min() > SINGULAR_COVARIANCE * top) {
        warnings.push(format!(
            "covariance is singular or nearly so (eigenvalues {:?}); the point is at or near the boundary",
            eig.as_slice()
        ));
    }
    Ok(CumulantSet {
        dim: d,
        mean,
        covariance: cov,
        skewness,
        kurtosis,
        warnings,
    })
}

/// Which terms of the Edgeworth series to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeworthOrder {
    /// The `N^{-1/2}` skewness term only.
    #[default]
    Skewness,
    /// Adds the `N^{-1}` kurtosis and squared-skewness terms.
    Kurtosis,
}

/// Multivariate Hermite polynomial for identity covariance, indexed by a
/// multiset of coordinates, via `h_{S+a} = z_a h_S − Σ_{b∈S} δ_{ab} h_{S−b}`.
fn hermite(indices: &[usize], z: &[f64], memo: &mut HashMap<Vec<usize>, f64>) -> f64 {
    if indices.is_empty() {
        return 1.0;
    }
    let mut key = indices.to_vec();
    key.sort_unstable();
    if let Some(v) = memo.get(&key) {
        return *v;
    }
    let (&a, rest) = key.split_last().unwrap();
    let mut v = z[a] * hermite(rest, z, memo);
    for (i, &b) in rest.iter().enumerate() {
        if b == a {
            let mut without: Vec<usize> = rest.to_vec();
            without.remove(i);
            v -= hermite(&without, z, memo);
        }
    }
    memo.insert(key, v);
    v
}

/// Standard normal density in `d` dimensions.
pub fn standard_normal_density(z: &[f64]) -> f64 {
    let q: f64 = z.iter().map(|x| x * x).sum();
    (-0.5 * q).exp() / (2.0 * PI).powf(0.5 * z.len() as f64)
}

/// Contracts every index of a flattened tensor with `m` (row-major, d×d).
fn transform_tensor(t: &[f64], m: &DMatrix<f64>, order: usize) -> Vec<f64> {
    let d = m.nrows();
    let mut cur = t.to_vec();
    for axis in 0..order {
        let mut next = vec![0.0; cur.len()];
        let stride = d.pow((order - 1 - axis) as u32);
        for (flat, slot) in next.iter_mut().enumerate() {
            let i = (flat / stride) % d;
            let base = flat - i * stride;
            *slot = (0..d).map(|j| m[(i, j)] * cur[base + j * stride]).sum();
        }
        cur = next;
    }
    cur
}

fn whitening(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = cov.clone().symmetric_eigenvalues();
    if !(eig.min() > SINGULAR_COVARIANCE * eig.max()) {
        return Err(Error::RankDeficient(format!(
            "covariance is singular (eigenvalues {:?})",
            eig.as_slice()
        )));
    }
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("covariance is not positive definite".into()))?;
    l.l()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("Cholesky factor is singular".into()))
}

/// Edgeworth approximation to the density of `z = √N L⁻¹(t̄ − μ)` with
/// `LLᵀ = Σ`, evaluated at each grid point.
pub fn edgeworth_density(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    lambda: &[f64],
    n: usize,
    grid: &[Vec<f64>],
    order: EdgeworthOrder,
) -> Result<Vec<f64>> {
    edgeworth_density_of(&spec.slice(sigma)?, lambda, n, grid, order)
}

pub fn edgeworth_density_of(
    family: &Tilted,
    lambda: &[f64],
    n: usize,
    grid: &[Vec<f64>],
    order: EdgeworthOrder,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let want = if order == EdgeworthOrder::Kurtosis { 4 } else { 3 };
    let c = cumulants_of(family, lambda, want)?;
    let d = c.dim;
    let m = whitening(&c.covariance_matrix())?;
    let k3 = transform_tensor(&c.skewness, &m, 3);
    let k4 = c.kurtosis.as_ref().map(|k| transform_tensor(k, &m, 4));
    let rn = (n as f64).sqrt();
    let mut out = Vec::with_capacity(grid.len());
    for z in grid {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: z.len(),
            });
        }
        let mut memo = HashMap::new();
        let mut s3 = 0.0;
        for (flat, &k) in k3.iter().enumerate() {
            if k != 0.0 {
                let idx = [flat / (d * d), (flat / d) % d, flat % d];
                s3 += k * hermite(&idx, z, &mut memo);
            }
        }
        let mut corr = s3 / (6.0 * rn);
        if let Some(k4) = &k4 {
            let mut s4 = 0.0;
            for (flat, &k) in k4.iter().enumerate() {
                if k != 0.0 {
                    let idx = [flat / (d * d * d), (flat / (d * d)) % d, (flat / d) % d, flat % d];
                    s4 += k * hermite(&idx, z, &mut memo);
                }
            }
            let mut s33 = 0.0;
            for (f1, &a) in k3.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (f2, &b) in k3.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    let idx = [
                        f1 / (d * d),
                        (f1 / d) % d,
                        f1 % d,
                        f2 / (d * d),
                        (f2 / d) % d,
                        f2 % d,
                    ];
                    s33 += a * b * hermite(&idx, z, &mut memo);
                }
            }
            corr += (s4 / 24.0 + s33 / 72.0) / n as f64;
        }
        out.push(standard_normal_density(z) * (1.0 + corr));
    }
    Ok(out)
}

/// One evaluation of the saddlepoint density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddlepointPoint {
    pub t_bar: Vec<f64>,
    pub density: Option<f64>,
    pub lambda_hat: Option<Vec<f64>>,
    pub error: Option<String>,
}

/// `p̂(t̄) = (N/2π)^{d/2} |Σ(λ̂)|^{−1/2} exp{−N[(λ̂−λ₀)ᵀt̄ − (ψ(λ̂) − ψ(λ₀))]}`
/// with `λ̂` solving `mean(λ̂) = t̄`. Points outside the interior of the
/// mean domain carry an error entry instead of a value.
pub fn saddlepoint_density(
    spec: &ExpFamilySpec,
    sigma: &[f64],
    lambda_true: &[f64],
    n: usize,
    grid: &[Vec<f64>],
) -> Result<Vec<SaddlepointPoint>> {
    saddlepoint_density_of(&spec.slice(sigma)?, lambda_true, n, grid)
}

pub fn saddlepoint_density_of(
    family: &Tilted,
    lambda_true: &[f64],
    n: usize,
    grid: &[Vec<f64>],
) -> Result<Vec<SaddlepointPoint>> {
    let d = family.dim();
    if lambda_true.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: lambda_true.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let nf = n as f64;
    let psi0 = family.log_partition(lambda_true);
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(grid.len());
    for t in grid {
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: t.len(),
            });
        }
        let solved = family
            .solve(t, warm.as_deref(), NewtonOptions::default())
            .or_else(|_| family.solve(t, None, NewtonOptions::default()));
        match solved {
            Ok(sol) => {
                let lh = sol.lambda;
                let cov = family.covariance(&lh);
                let det = cov.determinant();
                let gap: f64 = lh
                    .iter()
                    .zip(lambda_true)
                    .zip(t)
                    .map(|((a, b), x)| (a - b) * x)
                    .sum::<f64>()
                    - (family.log_partition(&lh) - psi0);
                let density = if det > 0.0 {
                    Some((nf / (2.0 * PI)).powf(0.5 * d as f64) / det.sqrt() * (-nf * gap).exp())
                } else {
                    None
                };
                out.push(SaddlepointPoint {
                    t_bar: t.clone(),
                    density,
                    lambda_hat: Some(lh.clone()),
                    error: density.is_none().then(|| "covariance is singular at the saddlepoint".into()),
                });
                warm = Some(lh);
            }
            Err(e) => out.push(SaddlepointPoint {
                t_bar: t.clone(),
                density: None,
                lambda_hat: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

/// Rescales densities so that `Σ value · cell_volume = 1`; missing values
/// count as zero.
pub fn renormalize(values: &[Option<f64>], cell_volume: f64) -> Result<Vec<f64>> {
    let total: f64 = values.iter().flatten().sum::<f64>() * cell_volume;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidInput("densities have no mass on the grid".into()));
    }
    Ok(values.iter().map(|v| v.unwrap_or(0.0) / total).collect())
}

/// Exact distribution of the sum of `N` draws from a 1-dim family whose
/// statistic lives on a lattice `s_min + span·ℤ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeDistribution {
    pub n: usize,
    pub origin: f64,
    pub span: f64,
    /// `probs[j] = P(Σ s = origin + j·span)`.
    pub probs: Vec<f64>,
}

impl LatticeDistribution {
    pub fn mean_value(&self, j: usize) -> f64 {
        (self.origin + j as f64 * self.span) / self.n as f64
    }

    /// Width of a lattice cell on the scale of the mean.
    pub fn mean_cell(&self) -> f64 {
        self.span / self.n as f64
    }
}

/// Smallest `h` with every `(s_i − s_min)/h` an integer, within `1e-9`.
pub fn lattice_span(values: &[f64]) -> Option<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = values.iter().fold(0.0f64, |m, v| m.max((v - lo).abs()));
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-9 * scale;
    let mut g = 0.0f64;
    for &v in values {
        let mut a = v - lo;
        let mut b = g;
        while b > tol {
            let r = a % b;
            a = b;
            b = r;
        }
        g = a;
    }
    let ok = values.iter().all(|v| {
        let q = (v - lo) / g;
        (q - q.round()).abs() < 1e-6
    });
    ok.then_some(g)
}

/// Dynamic-programming convolution of `N` independent draws.
pub fn lattice_distribution(family: &Tilted, lambda: &[f64], n: usize) -> Result<LatticeDistribution> {
    if family.dim() != 1 {
        return Err(Error::InvalidInput("lattice enumeration needs a 1-dim family".into()));
    }
    let probs = family.probs(lambda);
    let support: Vec<usize> = (0..probs.len()).filter(|&h| probs[h] > 0.0).collect();
    let values: Vec<f64> = support.iter().map(|&h| family.stats()[h][0]).collect();
    let span = lattice_span(&values)
        .ok_or_else(|| Error::InvalidInput("statistic is not supported on a lattice".into()))?;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let steps: Vec<usize> = values.iter().map(|v| ((v - lo) / span).round() as usize).collect();
    let top = *steps.iter().max().unwrap();
    let mut dist = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; dist.len() + top];
        for (j, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (&h, &s) in support.iter().zip(&steps) {
                next[j + s] += p * probs[h];
            }
        }
        dist = next;
    }
    Ok(LatticeDistribution {
        n,
        origin: n as f64 * lo,
        span,
        probs: dist,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeRow {
    pub t_bar: f64,
    pub exact: f64,
    pub approx: Option<f64>,
    /// The two extreme lattice points, where the saddlepoint equation has no
    /// solution and the boundary limit is used instead.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddlepointComparison {
    pub total_variation: f64,
    pub rows: Vec<LatticeRow>,
}

/// Saddlepoint versus exact enumeration at the lattice points of `t̄`, both
/// on the density scale (probability per unit of `t̄`).
///
/// At the two extreme lattice points the tilted law degenerates to a point
/// mass, so the local normal factor of the saddlepoint mass is replaced by
/// one and only the exponential factor `exp{−N·gap}` remains; in the limit
/// that is `(Σ_{h: s_h extreme} π_h)^N`. With `renormalized` the values are
/// scaled to unit mass over the lattice cells.
pub fn compare_saddlepoint_lattice(
    family: &Tilted,
    lambda: &[f64],
    n: usize,
    renormalized: bool,
) -> Result<SaddlepointComparison> {
    let exact = lattice_distribution(family, lambda, n)?;
    let cell = exact.mean_cell();
    let last = exact.probs.len() - 1;
    let grid: Vec<Vec<f64>> = (0..=last).map(|j| vec![exact.mean_value(j)]).collect();
    let sp = saddlepoint_density_of(family, lambda, n, &grid)?;
    let probs = family.probs(lambda);
    let extreme_mass = |target: f64| -> f64 {
        let tol = 1e-9 * exact.span;
        let m: f64 = probs
            .iter()
            .zip(family.stats())
            .filter(|(p, s)| **p > 0.0 && (s[0] - target).abs() <= tol)
            .map(|(p, _)| p)
            .sum();
        m.powi(n as i32) / cell
    };
    let mut raw: Vec<Option<f64>> = sp.iter().map(|p| p.density).collect();
    raw[0] = Some(extreme_mass(exact.mean_value(0)));
    raw[last] = Some(extreme_mass(exact.mean_value(last)));
    let values: Vec<Option<f64>> = if renormalized {
        renormalize(&raw, cell)?.into_iter().zip(&raw).map(|(v, r)| r.map(|_| v)).collect()
    } else {
        raw
    };
    let mut tv = 0.0;
    let mut rows = Vec::with_capacity(grid.len());
    for (j, v) in values.iter().enumerate() {
        let q = v.unwrap_or(0.0) * cell;
        tv += (q - exact.probs[j]).abs();
        rows.push(LatticeRow {
            t_bar: exact.mean_value(j),
            exact: exact.probs[j] / cell,
            approx: *v,
            boundary: j == 0 || j == last,
        });
    }
    Ok(SaddlepointComparison {
        total_variation: 0.5 * tv,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeworthComparison {
    pub sup_error_edgeworth: f64,
    pub sup_error_normal: f64,
    /// `(z, exact, edgeworth, normal)` at each lattice point.
    pub rows: Vec<(f64, f64, f64, f64)>,
}

/// Edgeworth and normal approximations against exact enumeration, on the
/// standardized scale; exact lattice masses are divided by the cell width.
pub fn compare_edgeworth_lattice(
    family: &Tilted,
    lambda: &[f64],
    n: usize,
    order: EdgeworthOrder,
) -> Result<EdgeworthComparison> {
    let exact = lattice_distribution(family, lambda, n)?;
    let mu = family.mean(lambda)[0];
    let sd = family.covariance(lambda)[(0, 0)].sqrt();
    let rn = (n as f64).sqrt();
    let dz = exact.mean_cell() * rn / sd;
    let zs: Vec<Vec<f64>> = (0..exact.probs.len())
        .map(|j| vec![rn * (exact.mean_value(j) - mu) / sd])
        .collect();
    let ew = edgeworth_density_of(family, lambda, n, &zs, order)?;
    let mut rows = Vec::with_capacity(zs.len());
    let (mut se, mut sn) = (0.0f64, 0.0f64);
    for j in 0..zs.len() {
        let e = exact.probs[j] / dz;
        let nd = standard_normal_density(&zs[j]);
        se = se.max((ew[j] - e).abs());
        sn = sn.max((nd - e).abs());
        rows.push((zs[j][0], e, ew[j], nd));
    }
    Ok(EdgeworthComparison {
        sup_error_edgeworth: se,
        sup_error_normal: sn,
        rows,
    })
}

/// Means of `reps` simulated samples of size `n`.
pub fn monte_carlo_means(family: &Tilted, lambda: &[f64], n: usize, reps: usize, seed: u64) -> Vec<Vec<f64>> {
    let probs = family.probs(lambda);
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let d = family.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..reps)
        .map(|_| {
            let mut m = vec![0.0; d];
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * acc;
                let h = cdf.partition_point(|c| *c <= u).min(probs.len() - 1);
                m.iter_mut().zip(&family.stats()[h]).for_each(|(a, s)| *a += s / n as f64);
            }
            m
        })
        .collect()
}

/// The 1-dim full family through `π(θ̂)` of a discretized curve, tilted
/// along the curve's tangent: statistic `u_k = η'(θ̂)·E_{θ̂}(s | B_k)`.
/// A sample is mapped back to the curve by solving `E_θ(u) = ū` along the
/// curve itself, which is the curve MLE when the curve is +1-flat.
#[derive(Debug, Clone)]
pub struct TangentProjection {
    pub theta_hat: f64,
    pub family: Tilted,
    pub tangent: Vec<f64>,
    pub description: String,
    curve: Curve,
    partition: PartitionSpec,
}

impl TangentProjection {
    /// `E_θ(u)` along the curve.
    pub fn curve_mean(&self, theta: f64) -> Result<f64> {
        let bm = bin_moments(self.curve.family(), &self.partition, &self.curve.eta(theta))?;
        Ok(bm
            .probabilities
            .iter()
            .zip(self.family.stats())
            .map(|(p, u)| p * u[0])
            .sum())
    }
}

pub fn tangent_projection(curve: &Curve, partition: &PartitionSpec, theta_hat: f64) -> Result<TangentProjection> {
    let eta = curve.eta(theta_hat);
    let h = 1e-6 * theta_hat.abs().max(1e-300);
    let up = curve.eta(theta_hat + h);
    let dn = curve.eta(theta_hat - h);
    let tangent: Vec<f64> = up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let bm = bin_moments(curve.family(), partition, &eta)?;
    let u: Vec<f64> = bm
        .means
        .iter()
        .map(|m| m.iter().zip(&tangent).map(|(a, b)| a * b).sum())
        .collect();
    let family = Tilted::scalar(&bm.probabilities, &u)?;
    Ok(TangentProjection {
        theta_hat,
        family,
        description: format!(
            "sufficient statistic projected on the curve tangent at theta = {theta_hat}; \
             theta recovered by matching the projected mean along the curve"
        ),
        tangent,
        curve: curve.clone(),
        partition: partition.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleDensityPoint {
    pub theta: f64,
    pub density: Option<f64>,
}

/// Saddlepoint density of the curve MLE for samples of size `n` drawn at
/// `θ̂`: `p(θ) = p_ū(m(θ)) |m'(θ)|` with `m(θ) = E_θ(u)`.
pub fn tangent_mle_density(proj: &TangentProjection, n: usize, theta_grid: &[f64]) -> Result<Vec<MleDensityPoint>> {
    let mut means = Vec::with_capacity(theta_grid.len());
    let mut slopes = Vec::with_capacity(theta_grid.len());
    for &t in theta_grid {
        let h = 1e-5 * t.abs().max(1e-300);
        means.push(vec![proj.curve_mean(t)?]);
        slopes.push((proj.curve_mean(t + h)? - proj.curve_mean(t - h)?) / (2.0 * h));
    }
    let sp = saddlepoint_density_of(&proj.family, &[0.0], n, &means)?;
    Ok(theta_grid
        .iter()
        .zip(sp)
        .zip(slopes)
        .map(|((t, p), m)| MleDensityPoint {
            theta: *t,
            density: p.density.map(|v| v * m.abs()),
        })
        .collect())
}
