//! Where an embedded exponential family meets the boundary of the simplex.
//!
//! Along a ray `λ = R·u` with `R → ∞` the family concentrates on the bins
//! maximizing `u·a_h`, so the reachable vertices are the extreme points of
//! the statistic cloud `{a_h}`. In two dimensions this is the envelope of the
//! line pencil `θ ↦ a_{1,h} θ + a_{2,h}`; in general it is decided by one
//! small linear program per point.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expfam::{dot, ExpFamilySpec};
use crate::simplex::CountVector;

/// Slack margin above which a target counts as relatively interior.
pub const INTERIOR_MARGIN: f64 = 1e-9;

/// Default cap on the number of bins for vertex enumeration.
pub const DEFAULT_VERTEX_CAP: usize = 1 << 20;

const COLLINEAR_TOL: f64 = 1e-12;
const DUPLICATE_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-9;

/// Lines `θ ↦ slope_h θ + intercept_h`, one per component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinePencil {
    pub lines: Vec<(f64, f64)>,
}

impl LinePencil {
    pub fn new(lines: Vec<(f64, f64)>) -> Result<Self> {
        if lines.len() < 2 {
            return Err(Error::InvalidInput("a pencil needs at least two lines".into()));
        }
        if lines.iter().any(|(s, c)| !s.is_finite() || !c.is_finite()) {
            return Err(Error::InvalidInput("lines must have finite coefficients".into()));
        }
        Ok(Self { lines })
    }

    /// The pencil `θ a_1 + a_2` of a two-dimensional family.
    pub fn from_family(spec: &ExpFamilySpec) -> Result<Self> {
        if spec.dim() != 2 {
            return Err(Error::InvalidInput("a line pencil needs a two-dimensional family".into()));
        }
        let a = spec.directions();
        Self::new(a[0].iter().zip(&a[1]).map(|(&s, &c)| (s, c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    /// Components on the upper envelope, by increasing slope.
    pub upper: Vec<usize>,
    /// Components on the lower envelope, by increasing slope.
    pub lower: Vec<usize>,
    /// Components on neither envelope, including collinear middles.
    pub redundant: Vec<usize>,
    /// `(duplicate, kept)` pairs for identical lines; the lowest index is kept.
    pub duplicates: Vec<(usize, usize)>,
}

fn same_point(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL * (1.0 + a.abs().max(b.abs())))
}

/// Groups identical points; returns the representative of each index.
fn dedupe(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut rep: Vec<usize> = (0..points.len()).collect();
    for w in 0..order.len() {
        let i = order[w];
        if w > 0 {
            let prev = order[w - 1];
            if same_point(&points[prev], &points[i]) {
                rep[i] = rep[prev];
            }
        }
    }
    rep
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let u = (a.0 - o.0, a.1 - o.1);
    let v = (b.0 - o.0, b.1 - o.1);
    let c = u.0 * v.1 - u.1 * v.0;
    let scale = (u.0.hypot(u.1)) * (v.0.hypot(v.1));
    (c, scale)
}

/// Monotone chain over points with distinct x. `sign = −1` builds the upper
/// chain (strict right turns), `+1` the lower chain.
fn chain(points: &[(f64, f64)], idx: &[usize], sign: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &i in idx {
        while out.len() >= 2 {
            let (c, scale) = cross(points[out[out.len() - 2]], points[out[out.len() - 1]], points[i]);
            if sign * c > COLLINEAR_TOL * scale {
                break;
            }
            out.pop();
        }
        out.push(i);
    }
    out
}

pub fn envelope_1d(pencil: &LinePencil) -> Envelope {
    let pts: Vec<(f64, f64)> = pencil.lines.clone();
    let as_vec: Vec<Vec<f64>> = pts.iter().map(|&(s, c)| vec![s, c]).collect();
    let rep = dedupe(&as_vec);
    let duplicates: Vec<(usize, usize)> = (0..pts.len())
        .filter(|&i| rep[i] != i)
        .map(|i| (i, rep[i]))
        .collect();
    let mut unique: Vec<usize> = (0..pts.len()).filter(|&i| rep[i] == i).collect();
    unique.sort_by(|&i, &j| pts[i].0.total_cmp(&pts[j].0).then(pts[i].1.total_cmp(&pts[j].1)).then(i.cmp(&j)));

    // One candidate per slope: the highest intercept for the upper chain,
    // the lowest for the lower chain.
    let mut top: Vec<usize> = Vec::new();
    let mut bottom: Vec<usize> = Vec::new();
    for &i in &unique {
        match top.last() {
            Some(&j) if pts[j].0 == pts[i].0 => {
                if pts[i].1 > pts[j].1 {
                    *top.last_mut().unwrap() = i;
                }
            }
            _ => top.push(i),
        }
        match bottom.last() {
            Some(&j) if pts[j].0 == pts[i].0 => {}
            _ => bottom.push(i),
        }
    }
    let upper = chain(&pts, &top, -1.0);
    let lower = chain(&pts, &bottom, 1.0);
    let redundant = (0..pts.len())
        .filter(|&i| rep[i] == i && !upper.contains(&i) && !lower.contains(&i))
        .collect();
    Envelope {
        upper,
        lower,
        redundant,
        duplicates,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSupport {
    pub direction: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    /// Bins reached as single vertices.
    pub reachable_vertices: Vec<usize>,
    /// Supported bins that are not extreme points of the statistic cloud.
    pub redundant_components: Vec<usize>,
    /// Supported bins sharing their statistic with a lower-indexed bin.
    pub duplicate_components: Vec<usize>,
    /// Bins with zero base mass, never reached.
    pub unsupported: Vec<usize>,
    pub limit_supports: Vec<LimitSupport>,
}

/// Extreme points of the statistic cloud over the base support.
pub fn reachable_vertices(spec: &ExpFamilySpec) -> Result<BoundaryReport> {
    reachable_vertices_with(spec, DEFAULT_VERTEX_CAP)
}

pub fn reachable_vertices_with(spec: &ExpFamilySpec, cap: usize) -> Result<BoundaryReport> {
    let n = spec.n_bins();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "bins",
            value: n,
            cap,
        });
    }
    let support: Vec<usize> = (0..n).filter(|&h| spec.base_point()[h] > 0.0).collect();
    let unsupported: Vec<usize> = (0..n).filter(|&h| spec.base_point()[h] == 0.0).collect();
    let cloud: Vec<Vec<f64>> = support.iter().map(|&h| spec.statistic(h)).collect();
    let rep = dedupe(&cloud);
    let has_twin = |i: usize| (0..cloud.len()).any(|j| j != i && rep[j] == rep[i]);
    let duplicate_components: Vec<usize> = (0..cloud.len())
        .filter(|&i| rep[i] != i)
        .map(|i| support[i])
        .collect();

    let (extreme, directions): (Vec<usize>, Vec<Vec<f64>>) = match spec.dim() {
        1 => {
            let (lo, hi) = (0..cloud.len()).fold((0, 0), |(lo, hi), i| {
                (
                    if cloud[i][0] < cloud[lo][0] { i } else { lo },
                    if cloud[i][0] > cloud[hi][0] { i } else { hi },
                )
            });
            (vec![lo, hi], vec![vec![-1.0], vec![1.0]])
        }
        2 => {
            let pencil = LinePencil::new(cloud.iter().map(|p| (p[0], p[1])).collect())?;
            let env = envelope_1d(&pencil);
            let mut ext: Vec<usize> = env.upper.iter().chain(&env.lower).copied().collect();
            ext.sort_unstable();
            ext.dedup();
            let dirs = planar_directions(&cloud, &env);
            let vertex_dirs = ext.iter().map(|&i| vertex_direction_2d(&cloud, &env, i)).collect();
            let mut all = dirs;
            all.extend::<Vec<Vec<f64>>>(vertex_dirs);
            (ext, all)
        }
        _ => {
            let mut ext = Vec::new();
            let mut dirs = Vec::new();
            for i in 0..cloud.len() {
                if rep[i] != i {
                    continue;
                }
                if let Some(c) = separating_functional(&cloud, i, &rep)? {
                    ext.push(i);
                    dirs.push(c);
                }
            }
            (ext, dirs)
        }
    };

    let mut reachable: Vec<usize> = extreme
        .iter()
        .copied()
        .filter(|&i| !has_twin(i))
        .map(|i| support[i])
        .collect();
    reachable.sort_unstable();
    reachable.dedup();
    let extreme_bins: Vec<usize> = extreme.iter().map(|&i| support[i]).collect();
    let redundant_components = (0..cloud.len())
        .filter(|&i| rep[i] == i && !extreme_bins.contains(&support[i]))
        .map(|i| support[i])
        .collect();
    let mut limit_supports: Vec<LimitSupport> = directions
        .into_iter()
        .map(|direction| LimitSupport {
            support: limit_family(spec, &direction).unwrap_or_default(),
            direction,
        })
        .collect();
    limit_supports.sort_by(|a, b| a.support.cmp(&b.support));
    limit_supports.dedup_by(|a, b| a.support == b.support);

    Ok(BoundaryReport {
        reachable_vertices: reachable,
        redundant_components,
        duplicate_components,
        unsupported,
        limit_supports,
    })
}

/// Outward normals of the hull edges of a planar cloud.
fn planar_directions(cloud: &[Vec<f64>], env: &Envelope) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for w in env.upper.windows(2) {
        let (a, b) = (&cloud[w[0]], &cloud[w[1]]);
        dirs.push(vec![-(b[1] - a[1]), b[0] - a[0]]);
    }
    for w in env.lower.windows(2) {
        let (a, b) = (&cloud[w[0]], &cloud[w[1]]);
        dirs.push(vec![b[1] - a[1], -(b[0] - a[0])]);
    }
    dirs.into_iter()
        .map(|v| {
            let n = v[0].hypot(v[1]);
            vec![v[0] / n, v[1] / n]
        })
        .collect()
}

/// A direction strictly inside the normal cone of hull vertex `i`.
fn vertex_direction_2d(cloud: &[Vec<f64>], env: &Envelope, i: usize) -> Vec<f64> {
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let edge_normal = |a: &[f64], b: &[f64], upper: bool| -> Vec<f64> {
        let v = if upper {
            vec![-(b[1] - a[1]), b[0] - a[0]]
        } else {
            vec![b[1] - a[1], -(b[0] - a[0])]
        };
        let n = v[0].hypot(v[1]);
        vec![v[0] / n, v[1] / n]
    };
    for (chain, upper) in [(&env.upper, true), (&env.lower, false)] {
        for w in chain.windows(2) {
            if w[0] == i || w[1] == i {
                normals.push(edge_normal(&cloud[w[0]], &cloud[w[1]], upper));
            }
        }
        // Chain ends also see the vertical direction of their side.
        if chain.len() == 1 && chain[0] == i {
            normals.push(vec![0.0, if upper { 1.0 } else { -1.0 }]);
        }
    }
    if env.upper.first() == Some(&i) || env.lower.first() == Some(&i) {
        normals.push(vec![-1.0, 0.0]);
    }
    if env.upper.last() == Some(&i) || env.lower.last() == Some(&i) {
        normals.push(vec![1.0, 0.0]);
    }
    let mut sum = vec![0.0, 0.0];
    for v in &normals {
        sum[0] += v[0];
        sum[1] += v[1];
    }
    let n = sum[0].hypot(sum[1]);
    if n == 0.0 {
        return normals.first().cloned().unwrap_or(vec![1.0, 0.0]);
    }
    vec![sum[0] / n, sum[1] / n]
}

/// Scales the cloud to a unit box around its centroid.
fn normalized(cloud: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let d = cloud[0].len();
    let mut center = vec![0.0; d];
    let mut scale = vec![0.0f64; d];
    for p in cloud {
        center.iter_mut().zip(p).for_each(|(c, x)| *c += x / cloud.len() as f64);
    }
    for p in cloud {
        for i in 0..d {
            scale[i] = scale[i].max((p[i] - center[i]).abs());
        }
    }
    scale.iter_mut().for_each(|s| {
        if *s == 0.0 {
            *s = 1.0
        }
    });
    let pts = cloud
        .iter()
        .map(|p| (0..d).map(|i| (p[i] - center[i]) / scale[i]).collect())
        .collect();
    (pts, center, scale)
}

fn lp_error(e: microlp::Error) -> Error {
    Error::LinearProgram(e.to_string())
}

/// A functional `c` with `c·(p_i − p_j) ≥ 1` for every distinct `p_j`,
/// expressed in original coordinates; `None` when `p_i` is not extreme.
fn separating_functional(cloud: &[Vec<f64>], i: usize, rep: &[usize]) -> Result<Option<Vec<f64>>> {
    if (0..cloud.len()).any(|j| j != i && rep[j] == rep[i]) {
        return Ok(None);
    }
    let (pts, _, scale) = normalized(cloud);
    let d = pts[0].len();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = (0..d)
        .map(|_| problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for j in 0..pts.len() {
        if j == i || rep[j] != j {
            continue;
        }
        let terms: Vec<(Variable, f64)> = (0..d).map(|c| (vars[c], pts[i][c] - pts[j][c])).collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Ge, 1.0);
    }
    match problem.solve() {
        Ok(outcome) => {
            let sol = outcome
                .into_solution()
                .map_err(|e| Error::LinearProgram(format!("{:?}", e.termination_reason())))?;
            Ok(Some((0..d).map(|c| sol.var_value(vars[c]) / scale[c]).collect()))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorCheck {
    pub inside_hull: bool,
    pub interior: bool,
    pub margin: f64,
    /// Indices into the cloud spanning the smallest face containing the target.
    pub face: Vec<usize>,
    pub affine_dim: usize,
}

/// Affine dimension of a point cloud, by SVD with relative tolerance 1e-10.
pub fn affine_dimension(cloud: &[Vec<f64>]) -> usize {
    if cloud.len() < 2 {
        return 0;
    }
    let (pts, _, _) = normalized(cloud);
    let d = pts[0].len();
    let m = DMatrix::from_fn(pts.len() - 1, d, |r, c| pts[r + 1][c] - pts[0][c]);
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// Decides whether `target` lies in the relative interior of the convex
/// hull of `cloud` by maximizing the smallest weight of a representation.
pub fn relative_interior(cloud: &[Vec<f64>], target: &[f64]) -> Result<InteriorCheck> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    let d = target.len();
    if cloud.iter().any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cloud[0].len(),
        });
    }
    let affine_dim = affine_dimension(cloud);
    let (pts, center, scale) = normalized(cloud);
    let t: Vec<f64> = (0..d).map(|i| (target[i] - center[i]) / scale[i]).collect();

    let build = |objective: Option<usize>| {
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let w: Vec<Variable> = (0..pts.len())
            .map(|h| problem.add_var(if objective == Some(h) { 1.0 } else { 0.0 }, (0.0, 1.0)))
            .collect();
        let s = objective
            .is_none()
            .then(|| problem.add_var(1.0, (0.0, 1.0)));
        for i in 0..d {
            let terms: Vec<(Variable, f64)> = w.iter().zip(&pts).map(|(&v, p)| (v, p[i])).collect();
            problem.add_constraint(terms.as_slice(), ComparisonOp::Eq, t[i]);
        }
        let ones: Vec<(Variable, f64)> = w.iter().map(|&v| (v, 1.0)).collect();
        problem.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
        if let Some(s) = s {
            for &v in &w {
                problem.add_constraint([(v, 1.0), (s, -1.0)].as_slice(), ComparisonOp::Ge, 0.0);
            }
        }
        (problem, w, s)
    };

    let (problem, w, s) = build(None);
    let solution = match problem.solve() {
        Ok(outcome) => outcome
            .into_solution()
            .map_err(|e| Error::LinearProgram(format!("{:?}", e.termination_reason())))?,
        Err(microlp::Error::Infeasible) => {
            return Ok(InteriorCheck {
                inside_hull: false,
                interior: false,
                margin: 0.0,
                face: Vec::new(),
                affine_dim,
            })
        }
        Err(e) => return Err(lp_error(e)),
    };
    let margin = solution.var_value(s.unwrap());
    if margin > INTERIOR_MARGIN {
        return Ok(InteriorCheck {
            inside_hull: true,
            interior: true,
            margin,
            face: (0..pts.len()).collect(),
            affine_dim,
        });
    }

    let mut in_face: Vec<bool> = w.iter().map(|&v| solution.var_value(v) > INTERIOR_MARGIN).collect();
    for h in 0..pts.len() {
        if in_face[h] {
            continue;
        }
        let (problem, w, _) = build(Some(h));
        let sol = problem
            .solve()
            .map_err(lp_error)?
            .into_solution()
            .map_err(|e| Error::LinearProgram(format!("{:?}", e.termination_reason())))?;
        for (j, &v) in w.iter().enumerate() {
            if sol.var_value(v) > INTERIOR_MARGIN {
                in_face[j] = true;
            }
        }
    }
    let face: Vec<usize> = (0..pts.len()).filter(|&h| in_face[h]).collect();
    Ok(InteriorCheck {
        inside_hull: true,
        interior: false,
        margin,
        face,
        affine_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleExistence {
    pub exists_interior: bool,
    /// Bins of the face where the likelihood limit concentrates; empty when
    /// the MLE is interior.
    pub boundary_face: Vec<usize>,
    pub mean_statistic: Vec<f64>,
    pub margin: f64,
    pub affine_dim: usize,
    pub notes: Vec<String>,
}

pub fn mle_exists(spec: &ExpFamilySpec, counts: &CountVector) -> Result<MleExistence> {
    let n = spec.n_bins();
    if counts.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: counts.len(),
        });
    }
    let support: Vec<usize> = (0..n).filter(|&h| spec.base_point()[h] > 0.0).collect();
    if let Some(h) = (0..n).find(|&h| counts.as_slice()[h] > 0 && spec.base_point()[h] == 0.0) {
        return Err(Error::Infeasible(format!(
            "bin {h} is observed but has zero base mass"
        )));
    }
    let total = counts.total() as f64;
    let d = spec.dim();
    let mut mean = vec![0.0; d];
    for h in 0..n {
        let c = counts.as_slice()[h] as f64;
        if c > 0.0 {
            mean.iter_mut()
                .zip(spec.statistic(h))
                .for_each(|(m, x)| *m += c * x / total);
        }
    }
    let cloud: Vec<Vec<f64>> = support.iter().map(|&h| spec.statistic(h)).collect();
    let check = relative_interior(&cloud, &mean)?;
    let mut notes = Vec::new();
    if check.affine_dim < d {
        notes.push(format!(
            "statistic cloud has affine dimension {} < {d}; existence is judged in its affine hull",
            check.affine_dim
        ));
    }
    Ok(MleExistence {
        exists_interior: check.interior,
        boundary_face: if check.interior {
            Vec::new()
        } else {
            check.face.iter().map(|&i| support[i]).collect()
        },
        mean_statistic: mean,
        margin: check.margin,
        affine_dim: check.affine_dim,
        notes,
    })
}

/// Support of the limit of `point(spec, R·direction, 0)` as `R → ∞`.
pub fn limit_family(spec: &ExpFamilySpec, direction: &[f64]) -> Result<Vec<usize>> {
    if direction.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: direction.len(),
        });
    }
    if direction.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("limit direction must be nonzero".into()));
    }
    let support: Vec<usize> = (0..spec.n_bins()).filter(|&h| spec.base_point()[h] > 0.0).collect();
    let values: Vec<f64> = support.iter().map(|&h| dot(direction, &spec.statistic(h))).collect();
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(support
        .iter()
        .zip(&values)
        .filter(|(_, &v)| best - v <= TIE_TOL * scale)
        .map(|(&h, _)| h)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{logistic_embedding, make_family, sequence_index, DEFAULT_LOGISTIC_CAP};
    use crate::simplex::ProbabilityVector;

    fn example5() -> ExpFamilySpec {
        make_family(
            &ProbabilityVector::uniform(4).unwrap(),
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 4.0, 9.0, -1.0]],
            None,
        )
        .unwrap()
    }

    fn logistic7() -> ExpFamilySpec {
        let design: Vec<Vec<f64>> = (1..=7).map(|i| vec![1.0, i as f64]).collect();
        logistic_embedding(&design, DEFAULT_LOGISTIC_CAP).unwrap()
    }

    #[test]
    fn example5_envelope() {
        let pencil = LinePencil::from_family(&example5()).unwrap();
        let env = envelope_1d(&pencil);
        assert_eq!(env.redundant, vec![1]);
        assert_eq!(env.upper, vec![0, 2, 3]);
        assert_eq!(env.lower, vec![0, 3]);
        let report = reachable_vertices(&example5()).unwrap();
        assert_eq!(report.reachable_vertices, vec![0, 2, 3]);
        assert_eq!(report.redundant_components, vec![1]);
    }

    #[test]
    fn small_pencils() {
        let env = envelope_1d(&LinePencil::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap());
        assert!(env.redundant.is_empty());
        let env = envelope_1d(&LinePencil::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap());
        assert_eq!(env.redundant, vec![1]);
        let env = envelope_1d(&LinePencil::new(vec![(0.0, 0.0), (1.0, 5.0), (0.0, 0.0)]).unwrap());
        assert_eq!(env.duplicates, vec![(2, 0)]);
        assert!(LinePencil::new(vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn logistic_vertices() {
        let report = reachable_vertices(&logistic7()).unwrap();
        let mut want: Vec<usize> = (0..=7)
            .map(|h| {
                let seq: Vec<u8> = (0..7).map(|i| u8::from(i >= h)).collect();
                sequence_index(&seq).unwrap()
            })
            .chain((1..=6).map(|h| {
                let seq: Vec<u8> = (0..7).map(|i| u8::from(i < h)).collect();
                sequence_index(&seq).unwrap()
            }))
            .collect();
        want.sort_unstable();
        assert_eq!(report.reachable_vertices, want);
        assert_eq!(want.len(), 14);
    }

    #[test]
    fn lp_and_hull_agree_in_the_plane() {
        let spec = logistic7();
        let cloud: Vec<Vec<f64>> = (0..spec.n_bins()).map(|h| spec.statistic(h)).collect();
        let rep = dedupe(&cloud);
        let mut lp: Vec<usize> = (0..cloud.len())
            .filter(|&i| rep[i] == i && separating_functional(&cloud, i, &rep).unwrap().is_some())
            .filter(|&i| (0..cloud.len()).all(|j| j == i || rep[j] != rep[i]))
            .collect();
        lp.sort_unstable();
        assert_eq!(lp, reachable_vertices(&spec).unwrap().reachable_vertices);
    }

    #[test]
    fn saturated_family_reaches_everything() {
        let spec = make_family(
            &ProbabilityVector::uniform(5).unwrap(),
            (1..5).map(|i| (0..5).map(|h| f64::from(u8::from(h == i))).collect()).collect(),
            None,
        )
        .unwrap();
        assert_eq!(reachable_vertices(&spec).unwrap().reachable_vertices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn mle_existence_examples() {
        let spec = logistic7();
        let mut counts = vec![0u64; 128];
        counts[sequence_index(&[0, 1, 0, 1, 0, 1, 1]).unwrap()] = 1;
        let r = mle_exists(&spec, &CountVector::new(counts).unwrap()).unwrap();
        assert!(r.exists_interior);
        assert_eq!(r.mean_statistic, vec![4.0, 19.0]);

        let mut counts = vec![0u64; 128];
        let j = sequence_index(&[1, 1, 0, 0, 0, 0, 0]).unwrap();
        counts[j] = 1;
        let r = mle_exists(&spec, &CountVector::new(counts).unwrap()).unwrap();
        assert!(!r.exists_interior);
        assert_eq!(r.boundary_face, vec![j]);

        let bern = make_family(&ProbabilityVector::uniform(2).unwrap(), vec![vec![0.0, 1.0]], None).unwrap();
        let r = mle_exists(&bern, &CountVector::new(vec![0, 9]).unwrap()).unwrap();
        assert!(!r.exists_interior);
        assert_eq!(r.boundary_face, vec![1]);
    }

    #[test]
    fn edge_faces() {
        // Mean on the edge between two hull vertices of Example 5.
        let spec = example5();
        let r = mle_exists(&spec, &CountVector::new(vec![1, 0, 1, 0]).unwrap()).unwrap();
        assert!(!r.exists_interior);
        assert_eq!(r.boundary_face, vec![0, 2]);
        // The lower edge 0–3 has component 1 above it, so it is a face.
        let r = mle_exists(&spec, &CountVector::new(vec![1, 0, 0, 1]).unwrap()).unwrap();
        assert_eq!(r.boundary_face, vec![0, 3]);
    }

    #[test]
    fn limit_supports() {
        let tri = make_family(&ProbabilityVector::uniform(3).unwrap(), vec![vec![1.0, 2.0, 3.0]], None).unwrap();
        assert_eq!(limit_family(&tri, &[1.0]).unwrap(), vec![2]);
        assert_eq!(limit_family(&tri, &[-1.0]).unwrap(), vec![0]);
        // Lines θ+1 and 3θ+9 cross at θ = −4; lines 3θ+9 and 4θ−1 at θ = 10.
        let spec = example5();
        assert_eq!(limit_family(&spec, &[-4.0, 1.0]).unwrap(), vec![0, 2]);
        assert_eq!(limit_family(&spec, &[10.0, 1.0]).unwrap(), vec![2, 3]);
        assert!(limit_family(&spec, &[0.0, 0.0]).is_err());
        let report = reachable_vertices(&spec).unwrap();
        let edges: Vec<&Vec<usize>> = report
            .limit_supports
            .iter()
            .map(|l| &l.support)
            .filter(|s| s.len() == 2)
            .collect();
        assert_eq!(edges, vec![&vec![0, 2], &vec![0, 3], &vec![2, 3]]);
    }

    #[test]
    fn interior_checks() {
        let square = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let c = relative_interior(&square, &[0.5, 0.5]).unwrap();
        assert!(c.interior && c.margin > 0.1);
        let c = relative_interior(&square, &[2.0, 0.5]).unwrap();
        assert!(!c.inside_hull);
        let c = relative_interior(&square, &[1.0, 0.5]).unwrap();
        assert_eq!(c.face, vec![1, 3]);
        let line = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let c = relative_interior(&line, &[0.5, 0.5]).unwrap();
        assert!(c.interior);
        assert_eq!(c.affine_dim, 1);
    }
}
