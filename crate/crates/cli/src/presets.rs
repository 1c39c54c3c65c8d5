//! Named parameter bundles, one set per subcommand.

use anyhow::{bail, Result};

use cig_core::asymptotics::EdgeworthOrder;
use cig_core::expfam::make_family;
use cig_core::simplex::ProbabilityVector;

use crate::config::Params;

/// Acute leukaemia survival times in days, 43 patients.
pub const LEUKAEMIA: [f64; 43] = [
    7., 47., 58., 74., 177., 232., 273., 285., 317., 429., 440., 445., 455., 468., 495., 497., 532.,
    571., 579., 581., 650., 702., 715., 779., 881., 900., 930., 968., 1077., 1109., 1314., 1334.,
    1367., 1534., 1712., 1784., 1877., 1886., 2045., 2056., 2260., 2429., 2509.,
];

/// Counts of 0..7 successes in 7 trials for 524 units.
pub const TABLE_COUNTS: [u64; 8] = [214, 154, 83, 34, 25, 9, 5, 0];

pub const PRESETS: &[(&str, &[&str])] = &[
    ("spectrum", &["discretized-normal", "uniform", "zero-entry"]),
    ("limits", &["example5", "logistic7", "saturated"]),
    ("fit-mixture", &["table1", "single-point", "two-point-sim"]),
    ("discretize", &["censored-exponential", "truncated-normal", "zero-discrepancy"]),
    ("edgeworth", &["skewed", "symmetric"]),
    ("saddlepoint", &["bernoulli", "censored-mle"]),
    ("embed-logistic", &["logistic7-interior", "logistic7-boundary"]),
];

pub fn names(subcommand: &str) -> &'static [&'static str] {
    PRESETS
        .iter()
        .find(|(s, _)| *s == subcommand)
        .map(|(_, n)| *n)
        .unwrap_or(&[])
}

fn trend_design(n: usize) -> Vec<Vec<f64>> {
    (1..=n).map(|i| vec![1.0, i as f64]).collect()
}

pub fn preset(subcommand: &str, name: &str) -> Result<Params> {
    let p = match (subcommand, name) {
        ("spectrum", "discretized-normal") => Params {
            model: Some("truncated-normal".into()),
            interval: Some((-5.0, 5.0)),
            bins: Some(vec![81]),
            sigma: Some(1.0),
            theta: Some(0.0),
            ..Params::default()
        },
        ("spectrum", "uniform") => Params {
            probabilities: Some(vec![0.2; 5]),
            ..Params::default()
        },
        ("spectrum", "zero-entry") => Params {
            probabilities: Some(vec![0.3, 0.2, 0.0, 0.5]),
            ..Params::default()
        },
        ("limits", "example5") => Params {
            family: Some(make_family(
                &ProbabilityVector::uniform(4)?,
                vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 4.0, 9.0, -1.0]],
                None,
            )?),
            ..Params::default()
        },
        ("limits", "logistic7") => Params {
            model: Some("logistic".into()),
            design: Some(trend_design(7)),
            ..Params::default()
        },
        ("limits", "saturated") => Params {
            family: Some(make_family(
                &ProbabilityVector::uniform(5)?,
                (1..5).map(|i| (0..5).map(|h| f64::from(u8::from(h == i))).collect()).collect(),
                None,
            )?),
            ..Params::default()
        },
        ("fit-mixture", "table1") => Params {
            counts: Some(TABLE_COUNTS.to_vec()),
            trials: Some(7),
            ..Params::default()
        },
        // Counts exactly proportional to Bin(4, 1/2).
        ("fit-mixture", "single-point") => Params {
            counts: Some(vec![100, 400, 600, 400, 100]),
            trials: Some(4),
            ..Params::default()
        },
        ("fit-mixture", "two-point-sim") => Params {
            model: Some("simulate".into()),
            trials: Some(8),
            mixing_support: Some(vec![0.2, 0.7]),
            mixing_weights: Some(vec![0.5, 0.5]),
            sample_size: Some(5000),
            ..Params::default()
        },
        ("discretize", "censored-exponential") => Params {
            model: Some("censored-exponential".into()),
            data: Some(LEUKAEMIA.to_vec()),
            censor: Some(750.0),
            width: Some(4.0),
            grid_points: Some(61),
            bins: Some(vec![25, 50, 100, 200]),
            theta: Some(1e-3),
            theta_grid: Some(vec![0.6e-3, 0.8e-3, 1.25e-3, 1.5e-3]),
            ..Params::default()
        },
        ("discretize", "truncated-normal") => Params {
            model: Some("truncated-normal".into()),
            interval: Some((-5.0, 5.0)),
            sigma: Some(1.0),
            bins: Some(vec![20, 40, 80, 160]),
            theta: Some(0.7),
            theta_grid: Some(vec![0.2, 0.45, 0.95, 1.2]),
            ..Params::default()
        },
        ("discretize", "zero-discrepancy") => Params {
            model: Some("truncated-normal".into()),
            interval: Some((-5.0, 5.0)),
            sigma: Some(1.0),
            bins: Some(vec![20]),
            theta: Some(0.7),
            theta_grid: Some(vec![0.7]),
            ..Params::default()
        },
        ("edgeworth", "skewed") => Params {
            base: Some(vec![0.7, 0.2, 0.1]),
            statistic: Some(vec![0.0, 1.0, 2.0]),
            sample_size: Some(20),
            lambda: Some(0.0),
            order: Some(EdgeworthOrder::Skewness),
            ..Params::default()
        },
        ("edgeworth", "symmetric") => Params {
            base: Some(vec![0.25, 0.5, 0.25]),
            statistic: Some(vec![0.0, 1.0, 2.0]),
            sample_size: Some(20),
            lambda: Some(0.0),
            order: Some(EdgeworthOrder::Skewness),
            ..Params::default()
        },
        ("saddlepoint", "bernoulli") => Params {
            base: Some(vec![0.5, 0.5]),
            statistic: Some(vec![0.0, 1.0]),
            sample_size: Some(10),
            lambda: Some(0.0),
            renormalized: Some(true),
            ..Params::default()
        },
        ("saddlepoint", "censored-mle") => Params {
            model: Some("censored-mle".into()),
            data: Some(LEUKAEMIA.to_vec()),
            censor: Some(750.0),
            width: Some(4.0),
            grid_points: Some(400),
            replications: Some(2000),
            ..Params::default()
        },
        ("embed-logistic", "logistic7-interior") => Params {
            design: Some(trend_design(7)),
            responses: Some(vec![0, 1, 0, 1, 0, 1, 1]),
            ..Params::default()
        },
        ("embed-logistic", "logistic7-boundary") => Params {
            design: Some(trend_design(7)),
            responses: Some(vec![1, 1, 0, 0, 0, 0, 0]),
            ..Params::default()
        },
        _ => bail!(
            "unknown preset {name:?} for {subcommand}; available: {}",
            names(subcommand).join(", ")
        ),
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves() {
        for (sub, list) in PRESETS {
            for name in *list {
                preset(sub, name).unwrap();
            }
        }
        assert!(preset("spectrum", "table1").is_err());
    }

    #[test]
    fn table_total() {
        assert_eq!(TABLE_COUNTS.iter().sum::<u64>(), 524);
    }
}
