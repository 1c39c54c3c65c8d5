//! One runner per subcommand. Each reads its data from `--input`, the
//! resolved params, or a preset, writes the defaults it used back into the
//! params (so the echoed config is complete) and returns a JSON result plus
//! a CSV table.

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use cig_core::asymptotics::{
    compare_edgeworth_lattice, compare_saddlepoint_lattice, cumulants_of, tangent_mle_density, tangent_projection,
    EdgeworthOrder,
};
use cig_core::boundary::{envelope_1d, mle_exists, reachable_vertices, Envelope, LinePencil, MleExistence};
use cig_core::discretize::{
    bin_probabilities, curve_mle, log_likelihoods, refinement_study, worst_case_likelihood_discrepancy,
    CensoredExponential, CurveMle, PartitionSpec, RefinementStudy, TruncatedNormal,
};
use cig_core::expfam::{
    logistic_embedding, sequence_index, solve_saddlepoint_equation_with, vertex_bits, ExpFamilySpec, Tilted,
    DEFAULT_LOGISTIC_CAP,
};
use cig_core::mixture::{npmle, simulate_binomial_mixture, ComponentCurve, MixtureFit};
use cig_core::simplex::{CountVector, ProbabilityVector};
use cig_core::spectrum::{condition_report_with, spectral_decomposition_with, ConditionReport, SpectrumJson};

use crate::config::WorkflowConfig;
use crate::io::read_table;

pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

pub struct Outcome {
    pub result: Value,
    pub csv: Csv,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn no_data(subcommand: &str, what: &str) -> anyhow::Error {
    anyhow::anyhow!(
        "{subcommand} needs {what}: pass --input, set params in --config, or use --preset ({})",
        crate::presets::names(subcommand).join(", ")
    )
}

pub fn run(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    match cfg.subcommand.as_str() {
        "spectrum" => spectrum(cfg),
        "limits" => limits(cfg),
        "fit-mixture" => fit_mixture(cfg),
        "discretize" => discretize(cfg),
        "edgeworth" => edgeworth(cfg),
        "saddlepoint" => saddlepoint(cfg),
        "embed-logistic" => embed_logistic(cfg),
        other => bail!("unknown subcommand {other:?}"),
    }
}

#[derive(Serialize)]
struct Pairing {
    pairs: usize,
    max_relative_gap: f64,
    min_max_ratio: f64,
}

#[derive(Serialize)]
struct SpectrumResult {
    n_bins: usize,
    pi0: f64,
    singular: bool,
    interlacing: bool,
    eigenvalues: Vec<f64>,
    spectrum: SpectrumJson,
    condition: ConditionReport,
    pairing: Option<Pairing>,
}

fn spectrum(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let p = &mut cfg.params;
    let probs = if let Some(path) = &cfg.input {
        read_table(path)?.floats("probability")?
    } else if let Some(v) = &p.probabilities {
        v.clone()
    } else if let Some(model) = p.model.as_deref() {
        ensure!(model == "truncated-normal", "unknown spectrum model {model:?}");
        let (lo, hi) = *p.interval.get_or_insert((-5.0, 5.0));
        let bins = p.bins.get_or_insert_with(|| vec![81]);
        ensure!(bins.len() == 1, "spectrum takes a single bin count");
        let k = bins[0];
        let sigma = *p.sigma.get_or_insert(1.0);
        let theta = *p.theta.get_or_insert(0.0);
        let curve = TruncatedNormal::new(lo, hi, sigma)?.mean_curve();
        bin_probabilities(&curve, &PartitionSpec::equal_width(lo, hi, k)?, theta)?.probabilities
    } else {
        return Err(no_data(&cfg.subcommand, "a probability vector"));
    };
    let with_generators = *p.with_generators.get_or_insert(false);
    let pi = ProbabilityVector::new(probs).context("probabilities do not form a point of the simplex")?;
    let dec = spectral_decomposition_with(&pi, cfg.tol.grouping)?;
    let condition = condition_report_with(&pi, cfg.tol.near_replicate)?;
    let eig = dec.eigenvalues();
    let pairing = (eig.len() >= 2).then(|| Pairing {
        pairs: eig.len() / 2,
        max_relative_gap: eig
            .chunks_exact(2)
            .map(|c| if c[0] > 0.0 { (c[0] - c[1]) / c[0] } else { 0.0 })
            .fold(0.0, f64::max),
        min_max_ratio: eig[eig.len() - 1] / eig[0],
    });
    let mut csv = Csv::new(&["index", "eigenvalue", "pair", "pair_relative_gap"]);
    for (i, v) in eig.iter().enumerate() {
        let partner = if i % 2 == 0 { eig.get(i + 1) } else { eig.get(i - 1) };
        let gap = partner.map(|q| {
            let hi = v.max(*q);
            if hi > 0.0 {
                (v - q).abs() / hi
            } else {
                0.0
            }
        });
        csv.rows.push(vec![i.to_string(), num(*v), (i / 2).to_string(), opt(gap)]);
    }
    let r = SpectrumResult {
        n_bins: pi.len(),
        pi0: dec.pi0(),
        singular: condition.singular,
        interlacing: dec.interlaces(),
        eigenvalues: eig,
        spectrum: dec.to_json(with_generators),
        condition,
        pairing,
    };
    Ok(Outcome {
        result: serde_json::to_value(r)?,
        csv,
    })
}

fn signed(x: f64) -> String {
    if x < 0.0 {
        format!("- {}", -x)
    } else {
        format!("+ {x}")
    }
}

#[derive(Serialize)]
struct LimitsResult {
    n_bins: usize,
    dim: usize,
    reachable_vertices: Vec<usize>,
    vertex_labels: Option<Vec<String>>,
    redundant_components: Vec<usize>,
    redundant_lines: Option<Vec<String>>,
    duplicate_components: Vec<usize>,
    unsupported: Vec<usize>,
    envelope: Option<Envelope>,
    limit_supports: Vec<cig_core::boundary::LimitSupport>,
    mle: Option<MleExistence>,
}

fn limits(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let p = &mut cfg.params;
    let mut n_obs = None;
    let spec: ExpFamilySpec = if let Some(path) = &cfg.input {
        crate::io::read_json::<ExpFamilySpec>(path)?.validated()?
    } else if let Some(f) = &p.family {
        f.clone().validated()?
    } else if let Some(model) = p.model.as_deref() {
        ensure!(model == "logistic", "unknown limits model {model:?}");
        let design = p.design.as_ref().context("the logistic model needs a design")?;
        n_obs = Some(design.len());
        logistic_embedding(design, DEFAULT_LOGISTIC_CAP)?
    } else {
        return Err(no_data(&cfg.subcommand, "a family"));
    };
    let report = reachable_vertices(&spec)?;
    let envelope = if spec.dim() == 2 {
        Some(envelope_1d(&LinePencil::from_family(&spec)?))
    } else {
        None
    };
    let redundant_lines = (spec.dim() == 2).then(|| {
        let a = spec.directions();
        report
            .redundant_components
            .iter()
            .map(|&h| format!("{}θ {}", a[0][h], signed(a[1][h])))
            .collect()
    });
    let mle = match &p.counts {
        Some(c) => Some(mle_exists(&spec, &CountVector::new(c.clone())?)?),
        None => None,
    };
    let labels = n_obs.map(|n| report.reachable_vertices.iter().map(|&j| vertex_bits(j, n)).collect::<Vec<_>>());
    let mut header = vec!["vertex".to_string(), "label".to_string()];
    header.extend((1..=spec.dim()).map(|i| format!("t{i}")));
    let mut csv = Csv { header, rows: Vec::new() };
    for (i, &j) in report.reachable_vertices.iter().enumerate() {
        let mut row = vec![j.to_string(), labels.as_ref().map(|l| l[i].clone()).unwrap_or_default()];
        row.extend(spec.statistic(j).into_iter().map(num));
        csv.rows.push(row);
    }
    let r = LimitsResult {
        n_bins: spec.n_bins(),
        dim: spec.dim(),
        reachable_vertices: report.reachable_vertices,
        vertex_labels: labels,
        redundant_components: report.redundant_components,
        redundant_lines,
        duplicate_components: report.duplicate_components,
        unsupported: report.unsupported,
        envelope,
        limit_supports: report.limit_supports,
        mle,
    };
    Ok(Outcome {
        result: serde_json::to_value(r)?,
        csv,
    })
}

#[derive(Serialize)]
struct MixtureResult {
    counts: Vec<u64>,
    n: u64,
    trials: usize,
    saturated_gap: f64,
    fit: MixtureFit,
}

fn fit_mixture(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let seed = cfg.seed;
    let p = &mut cfg.params;
    let counts: Vec<u64> = if let Some(path) = &cfg.input {
        read_table(path)?.unsigned("count")?
    } else if let Some(c) = &p.counts {
        c.clone()
    } else if let Some(model) = p.model.as_deref() {
        ensure!(model == "simulate", "unknown fit-mixture model {model:?}");
        let trials = p.trials.context("simulation needs trials")?;
        let support = p.mixing_support.as_ref().context("simulation needs mixing_support")?;
        let weights = p.mixing_weights.as_ref().context("simulation needs mixing_weights")?;
        let n = p.sample_size.context("simulation needs sample_size")?;
        simulate_binomial_mixture(trials, support, weights, n, seed)?.as_slice().to_vec()
    } else {
        return Err(no_data(&cfg.subcommand, "counts"));
    };
    ensure!(counts.len() >= 2, "need at least two count cells");
    let trials = *p.trials.get_or_insert(counts.len() - 1);
    ensure!(
        counts.len() == trials + 1,
        "{} count cells do not match {trials} binomial trials",
        counts.len()
    );
    let curve = ComponentCurve::binomial(trials)?;
    let cv = CountVector::new(counts.clone())?;
    let fit = npmle(&cv, &curve, &cfg.tol.npmle())?;
    let mut csv = Csv::new(&["theta", "weight"]);
    for (t, w) in fit.support.iter().zip(&fit.weights) {
        csv.rows.push(vec![num(*t), num(*w)]);
    }
    let r = MixtureResult {
        n: cv.total(),
        counts,
        trials,
        saturated_gap: fit.saturated_log_likelihood - fit.log_likelihood,
        fit,
    };
    Ok(Outcome {
        result: serde_json::to_value(r)?,
        csv,
    })
}

#[derive(Serialize)]
struct CensoredResult {
    n: usize,
    uncensored: usize,
    censor: f64,
    width: f64,
    bins: usize,
    mle: CurveMle,
    mu_continuous: f64,
    mu_discrete: f64,
    standard_error: f64,
    grid_clipped: bool,
    mle_difference_in_se: f64,
    curve_range: f64,
    max_curve_difference: f64,
    relative_curve_difference: f64,
    refinement: Option<RefinementStudy>,
}

#[derive(Serialize)]
struct DiscrepancyLevel {
    bins: usize,
    max_width: f64,
    sup: f64,
    argmax_theta: f64,
}

#[derive(Serialize)]
struct TruncatedResult {
    interval: (f64, f64),
    sigma: f64,
    theta0: f64,
    likelihood: Vec<DiscrepancyLevel>,
    refinement: Option<RefinementStudy>,
}

fn discretize(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let model = match cfg.params.model.as_deref() {
        Some(m) => m.to_string(),
        None if cfg.input.is_some() => "censored-exponential".to_string(),
        None => return Err(no_data(&cfg.subcommand, "a model")),
    };
    cfg.params.model = Some(model.clone());
    match model.as_str() {
        "censored-exponential" => censored(cfg),
        "truncated-normal" => truncated(cfg),
        other => bail!("unknown discretize model {other:?}"),
    }
}

fn censored_data(cfg: &mut WorkflowConfig) -> Result<(CensoredExponential, Vec<f64>)> {
    let p = &mut cfg.params;
    let raw = match &cfg.input {
        Some(path) => read_table(path)?.floats("time")?,
        None => p.data.clone().context("censored model needs data (times)")?,
    };
    ensure!(raw.iter().all(|x| x.is_finite() && *x >= 0.0), "times must be finite and non-negative");
    let censor = p.censor.context("censored model needs a censoring time")?;
    let fam = CensoredExponential::new(censor)?;
    let data = fam.censor(&raw);
    ensure!(data.iter().any(|y| *y < censor), "every observation is censored");
    Ok((fam, data))
}

fn censored(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let (fam, data) = censored_data(cfg)?;
    let p = &mut cfg.params;
    let censor = p.censor.unwrap();
    let width = *p.width.get_or_insert(4.0);
    let points = *p.grid_points.get_or_insert(61);
    ensure!(points >= 2, "grid_points must be at least 2");
    let curve = fam.rate_curve();
    let partition = PartitionSpec::by_width(0.0, censor, width)?.with_atom(censor).validated()?;
    let r = data.iter().filter(|y| **y < censor).count();
    let theta_c = r as f64 / data.iter().sum::<f64>();
    let mle = curve_mle(&curve, &partition, &data, (0.3 * theta_c, 3.0 * theta_c))?;
    let mu_c = 1.0 / mle.theta_continuous;
    let mu_d = 1.0 / mle.theta_discrete;
    let se = mu_c / (r as f64).sqrt();
    let mut csv = Csv::new(&["mu", "theta", "loglik_ratio_continuous", "loglik_ratio_discrete", "difference"]);
    let (mut lo, mut hi, mut worst) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    // Small samples put μ̂ − 3 SE below zero; start the grid at μ̂/10 then.
    let first = (mu_c - 3.0 * se).max(0.1 * mu_c);
    let grid_clipped = first > mu_c - 3.0 * se;
    for i in 0..points {
        let mu = first + (mu_c + 3.0 * se - first) * i as f64 / (points - 1) as f64;
        let (c, d) = log_likelihoods(&curve, &partition, &data, 1.0 / mu)?;
        let (c, d) = (c - mle.loglik_continuous, d - mle.loglik_discrete);
        lo = lo.min(c);
        hi = hi.max(c);
        worst = worst.max((c - d).abs());
        csv.rows.push(vec![num(mu), num(1.0 / mu), num(c), num(d), num(d - c)]);
    }
    let refinement = match &p.bins {
        Some(levels) if levels.len() >= 2 => {
            let theta = *p.theta.get_or_insert(mle.theta_continuous);
            let grid = p
                .theta_grid
                .get_or_insert_with(|| vec![0.6 * theta, 0.8 * theta, 1.25 * theta, 1.5 * theta])
                .clone();
            let eta = CensoredExponential::embedding(theta);
            Some(refinement_study(&fam, &curve, levels, theta, &eta, &grid)?)
        }
        _ => None,
    };
    let range = hi - lo;
    let res = CensoredResult {
        n: data.len(),
        uncensored: r,
        censor,
        width,
        bins: partition.n_bins(),
        mu_continuous: mu_c,
        mu_discrete: mu_d,
        standard_error: se,
        grid_clipped,
        mle_difference_in_se: (mu_d - mu_c).abs() / se,
        curve_range: range,
        max_curve_difference: worst,
        relative_curve_difference: if range > 0.0 { worst / range } else { 0.0 },
        mle,
        refinement,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

fn truncated(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let p = &mut cfg.params;
    let (lo, hi) = *p.interval.get_or_insert((-5.0, 5.0));
    let sigma = *p.sigma.get_or_insert(1.0);
    let theta0 = *p.theta.get_or_insert(0.0);
    let levels = p.bins.get_or_insert_with(|| vec![20, 40, 80, 160]).clone();
    let grid = p
        .theta_grid
        .get_or_insert_with(|| vec![theta0 - 0.5, theta0 - 0.25, theta0 + 0.25, theta0 + 0.5])
        .clone();
    ensure!(!levels.is_empty() && !grid.is_empty(), "bins and theta_grid must be non-empty");
    let fam = TruncatedNormal::new(lo, hi, sigma)?;
    let curve = fam.mean_curve();
    let mut csv = Csv::new(&["bins", "max_width", "theta", "discrepancy"]);
    let mut likelihood = Vec::new();
    for &k in &levels {
        let part = PartitionSpec::equal_width(lo, hi, k)?;
        let d = worst_case_likelihood_discrepancy(&curve, &part, &grid, theta0)?;
        for (t, v) in &d.per_theta {
            csv.rows.push(vec![k.to_string(), num(part.max_width()), num(*t), num(*v)]);
        }
        likelihood.push(DiscrepancyLevel {
            bins: k,
            max_width: part.max_width(),
            sup: d.sup,
            argmax_theta: d.argmax_theta,
        });
    }
    let refinement = if levels.len() >= 2 {
        Some(refinement_study(&fam, &curve, &levels, theta0, &curve.eta(theta0), &grid)?)
    } else {
        None
    };
    let res = TruncatedResult {
        interval: (lo, hi),
        sigma,
        theta0,
        likelihood,
        refinement,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

/// A one-dimensional lattice family from `--input` (weight, statistic) or
/// the params.
fn scalar_family(cfg: &mut WorkflowConfig) -> Result<Tilted> {
    let p = &mut cfg.params;
    let (w, s) = match &cfg.input {
        Some(path) => {
            let t = read_table(path)?;
            (t.floats("weight")?, t.floats("statistic")?)
        }
        None => match (&p.base, &p.statistic) {
            (Some(w), Some(s)) => (w.clone(), s.clone()),
            _ => return Err(no_data(&cfg.subcommand, "base weights and a statistic")),
        },
    };
    ensure!(w.len() == s.len(), "weight and statistic lengths differ");
    Ok(Tilted::scalar(&w, &s)?)
}

#[derive(Serialize)]
struct EdgeworthResult {
    sample_size: usize,
    lambda: f64,
    order: EdgeworthOrder,
    mean: f64,
    variance: f64,
    third_cumulant: f64,
    sup_error_edgeworth: f64,
    sup_error_normal: f64,
    edgeworth_beats_normal: bool,
    max_correction: f64,
}

fn edgeworth(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let fam = scalar_family(cfg)?;
    let p = &mut cfg.params;
    let n = *p.sample_size.get_or_insert(20);
    let lambda = *p.lambda.get_or_insert(0.0);
    let order = *p.order.get_or_insert(EdgeworthOrder::Skewness);
    let cum = cumulants_of(&fam, &[lambda], 3)?;
    let c = compare_edgeworth_lattice(&fam, &[lambda], n, order)?;
    let mut csv = Csv::new(&["z", "exact", "edgeworth", "normal"]);
    let mut max_correction = 0.0f64;
    for &(z, e, ew, nd) in &c.rows {
        max_correction = max_correction.max((ew - nd).abs());
        csv.rows.push(vec![num(z), num(e), num(ew), num(nd)]);
    }
    let res = EdgeworthResult {
        sample_size: n,
        lambda,
        order,
        mean: cum.mean[0],
        variance: cum.covariance[0],
        third_cumulant: cum.skewness[0],
        sup_error_edgeworth: c.sup_error_edgeworth,
        sup_error_normal: c.sup_error_normal,
        edgeworth_beats_normal: c.sup_error_edgeworth < c.sup_error_normal,
        max_correction,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

#[derive(Serialize)]
struct CenterCheck {
    t_bar: f64,
    saddlepoint: Option<f64>,
    exact: f64,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct LatticeResult {
    sample_size: usize,
    lambda: f64,
    renormalized: bool,
    total_variation: f64,
    total_variation_raw: f64,
    center: CenterCheck,
}

fn saddlepoint(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    if cfg.params.model.as_deref() == Some("censored-mle") {
        return censored_mle(cfg);
    }
    if let Some(m) = cfg.params.model.as_deref() {
        bail!("unknown saddlepoint model {m:?}");
    }
    let fam = scalar_family(cfg)?;
    let p = &mut cfg.params;
    let n = *p.sample_size.get_or_insert(10);
    let lambda = *p.lambda.get_or_insert(0.0);
    let renormalized = *p.renormalized.get_or_insert(true);
    let cmp = compare_saddlepoint_lattice(&fam, &[lambda], n, renormalized)?;
    let raw = compare_saddlepoint_lattice(&fam, &[lambda], n, false)?;
    let mean = fam.mean(&[lambda])[0];
    let j = raw
        .rows
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.t_bar - mean).abs().total_cmp(&(b.1.t_bar - mean).abs()))
        .map(|(j, _)| j)
        .context("empty lattice")?;
    let row = &raw.rows[j];
    let center = CenterCheck {
        t_bar: row.t_bar,
        saddlepoint: row.approx,
        exact: row.exact,
        relative_error: row.approx.map(|a| (a - row.exact) / row.exact),
    };
    let mut csv = Csv::new(&["t_bar", "exact", "saddlepoint", "saddlepoint_raw", "boundary"]);
    for (a, b) in cmp.rows.iter().zip(&raw.rows) {
        csv.rows.push(vec![num(a.t_bar), num(a.exact), opt(a.approx), opt(b.approx), a.boundary.to_string()]);
    }
    let res = LatticeResult {
        sample_size: n,
        lambda,
        renormalized,
        total_variation: cmp.total_variation,
        total_variation_raw: raw.total_variation,
        center,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

#[derive(Serialize)]
struct MleDensityResult {
    n: usize,
    theta_hat: f64,
    mu_hat: f64,
    projection: String,
    mass: f64,
    mean: f64,
    sd: f64,
    monte_carlo_replications: usize,
    monte_carlo_mean: f64,
    monte_carlo_sd: f64,
}

/// Simulated `μ̂ = total / uncensored` for samples with at least one
/// uncensored time.
fn simulate_censored_means(theta: f64, censor: f64, n: usize, reps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(reps);
    while out.len() < reps {
        let (mut total, mut r) = (0.0, 0usize);
        for _ in 0..n {
            let z = -(1.0 - rng.random::<f64>()).ln() / theta;
            if z < censor {
                r += 1;
                total += z;
            } else {
                total += censor;
            }
        }
        if r > 0 {
            out.push(total / r as f64);
        }
    }
    out
}

fn censored_mle(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let (fam, data) = censored_data(cfg)?;
    let seed = cfg.seed;
    let p = &mut cfg.params;
    let censor = p.censor.unwrap();
    let width = *p.width.get_or_insert(4.0);
    let points = *p.grid_points.get_or_insert(400);
    let reps = *p.replications.get_or_insert(2000);
    ensure!(points >= 2, "grid_points must be at least 2");
    let n = data.len();
    let curve = fam.rate_curve();
    let partition = PartitionSpec::by_width(0.0, censor, width)?.with_atom(censor).validated()?;
    let r = data.iter().filter(|y| **y < censor).count();
    let theta_hat = r as f64 / data.iter().sum::<f64>();
    let mu_hat = 1.0 / theta_hat;
    let proj = tangent_projection(&curve, &partition, theta_hat)?;
    let (lo, hi) = (0.4 * mu_hat, 2.7 * mu_hat);
    let step = (hi - lo) / (points - 1) as f64;
    let mus: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let thetas: Vec<f64> = mus.iter().map(|m| 1.0 / m).collect();
    let dens = tangent_mle_density(&proj, n, &thetas)?;
    let mut csv = Csv::new(&["mu", "density_mu", "theta", "density_theta"]);
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (d, &mu) in dens.iter().zip(&mus) {
        let fm = d.density.map(|v| v / (mu * mu));
        let f = fm.unwrap_or(0.0);
        mass += f * step;
        m1 += f * mu * step;
        m2 += f * mu * mu * step;
        csv.rows.push(vec![num(mu), opt(fm), num(d.theta), opt(d.density)]);
    }
    let mean = m1 / mass;
    let sd = (m2 / mass - mean * mean).max(0.0).sqrt();
    let sims = simulate_censored_means(theta_hat, censor, n, reps, seed);
    let mc_mean = sims.iter().sum::<f64>() / sims.len() as f64;
    let mc_sd = (sims.iter().map(|x| (x - mc_mean).powi(2)).sum::<f64>() / sims.len() as f64).sqrt();
    let res = MleDensityResult {
        n,
        theta_hat,
        mu_hat,
        projection: proj.description.clone(),
        mass,
        mean,
        sd,
        monte_carlo_replications: reps,
        monte_carlo_mean: mc_mean,
        monte_carlo_sd: mc_sd,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

#[derive(Serialize)]
struct NewtonFit {
    coefficients: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct LogisticResult {
    n_obs: usize,
    n_covariates: usize,
    responses: String,
    sequence_index: usize,
    reachable_vertices: Vec<String>,
    mle: MleExistence,
    boundary_face: Vec<String>,
    fit: Option<NewtonFit>,
}

fn logistic_inputs(cfg: &mut WorkflowConfig) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let p = &cfg.params;
    if let Some(path) = &cfg.input {
        let t = read_table(path)?;
        let y = t
            .floats("response")?
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                0.0 => Ok(0u8),
                1.0 => Ok(1u8),
                _ => bail!("row {}: response {v} is not 0 or 1", i + 2),
            })
            .collect::<Result<Vec<u8>>>()?;
        return Ok((t.numeric_rows_except(&["response"])?, y));
    }
    match (&p.design, &p.responses) {
        (Some(d), Some(y)) => Ok((d.clone(), y.clone())),
        _ => Err(no_data(&cfg.subcommand, "a design and responses")),
    }
}

fn embed_logistic(cfg: &mut WorkflowConfig) -> Result<Outcome> {
    let (design, y) = logistic_inputs(cfg)?;
    ensure!(design.len() == y.len(), "design has {} rows but {} responses", design.len(), y.len());
    let n_obs = y.len();
    let spec = logistic_embedding(&design, DEFAULT_LOGISTIC_CAP)?;
    let j = sequence_index(&y)?;
    let mut counts = vec![0u64; spec.n_bins()];
    counts[j] = 1;
    let mle = mle_exists(&spec, &CountVector::new(counts)?)?;
    let report = reachable_vertices(&spec)?;
    let fit = if mle.exists_interior {
        let sol = solve_saddlepoint_equation_with(&spec, &[], &mle.mean_statistic, None, cfg.tol.newton_options())?;
        Some(NewtonFit {
            converged: sol.residual <= cfg.tol.newton,
            coefficients: sol.lambda,
            iterations: sol.iterations,
            residual: sol.residual,
            warnings: sol.warnings,
        })
    } else {
        None
    };
    let mut csv = Csv::new(&["vertex", "sequence", "observed"]);
    for &v in &report.reachable_vertices {
        csv.rows.push(vec![v.to_string(), vertex_bits(v, n_obs), (v == j).to_string()]);
    }
    let res = LogisticResult {
        n_obs,
        n_covariates: design[0].len(),
        responses: vertex_bits(j, n_obs),
        sequence_index: j,
        reachable_vertices: report.reachable_vertices.iter().map(|&v| vertex_bits(v, n_obs)).collect(),
        boundary_face: mle.boundary_face.iter().map(|&v| vertex_bits(v, n_obs)).collect(),
        mle,
        fit,
    };
    Ok(Outcome {
        result: serde_json::to_value(res)?,
        csv,
    })
}

/// Applies the preset, if any, under the explicitly given params.
pub fn resolve(cfg: &mut WorkflowConfig) -> Result<()> {
    if let Some(name) = &cfg.preset {
        let base = crate::presets::preset(&cfg.subcommand, name)?;
        cfg.params = base.overlay(std::mem::take(&mut cfg.params));
    }
    Ok(())
}
