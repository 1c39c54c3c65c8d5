use cig_core::boundary::reachable_vertices;
use cig_core::expfam::{make_family, total_positivity_rank};
use cig_core::simplex::ProbabilityVector;
use cig_core::spectrum::{fisher_matrix, spectral_decomposition};
use proptest::prelude::*;

fn dense_eigenvalues(pi: &ProbabilityVector) -> Vec<f64> {
    let mut ev: Vec<f64> = fisher_matrix(pi).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

proptest! {
    #[test]
    fn closed_form_matches_dense_solver(w in proptest::collection::vec(0.05f64..1.0, 2..12)) {
        let pi = ProbabilityVector::from_weights(&w).unwrap();
        let dec = spectral_decomposition(&pi).unwrap();
        let mut ours = dec.eigenvalues();
        ours.sort_by(|a, b| b.total_cmp(a));
        let dense = dense_eigenvalues(&pi);
        prop_assert_eq!(ours.len(), dense.len());
        for (a, b) in ours.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-12 * dense[0], "{} vs {}", a, b);
        }
        prop_assert!(dec.interlaces());
    }

    #[test]
    fn eigenpairs_satisfy_the_eigen_equation(w in proptest::collection::vec(0.05f64..1.0, 2..9)) {
        let pi = ProbabilityVector::from_weights(&w).unwrap();
        let a = fisher_matrix(&pi);
        for (lambda, v) in spectral_decomposition(&pi).unwrap().eigenpairs() {
            let r = &a * &v - &v * lambda;
            prop_assert!(r.amax() <= 1e-12 * v.amax().max(1.0));
        }
    }
}

#[test]
fn repeated_probabilities_give_repeated_eigenvalues() {
    let pi = ProbabilityVector::new(vec![0.1, 0.3, 0.3, 0.3]).unwrap();
    let dec = spectral_decomposition(&pi).unwrap();
    let rep = dec.repeated_eigenvalues();
    assert_eq!(rep.len(), 1);
    assert!((rep[0].0 - 0.3).abs() < 1e-15);
    assert_eq!(rep[0].1, 2);
}

#[test]
fn saturated_family_reaches_all_vertices() {
    let dirs = (1..4).map(|i| (0..4).map(|h| f64::from(u8::from(h == i))).collect()).collect();
    let spec = make_family(&ProbabilityVector::uniform(4).unwrap(), dirs, None).unwrap();
    let rep = reachable_vertices(&spec).unwrap();
    assert_eq!(rep.reachable_vertices, vec![0, 1, 2, 3]);
    assert!(rep.redundant_components.is_empty());
}

#[test]
fn linear_statistic_only_reaches_its_extremes() {
    let spec = make_family(&ProbabilityVector::uniform(5).unwrap(), vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]], None).unwrap();
    let rep = reachable_vertices(&spec).unwrap();
    assert_eq!(rep.reachable_vertices, vec![0, 4]);
    assert_eq!(rep.redundant_components, vec![1, 2, 3]);
}

#[test]
fn generic_one_parameter_family_has_full_rank() {
    let spec = make_family(&ProbabilityVector::uniform(5).unwrap(), vec![vec![-1.3, -0.2, 0.4, 1.1, 2.0]], None).unwrap();
    let r = total_positivity_rank(&spec, &[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
    assert_eq!(r.rank, r.expected);
    assert!(r.warnings.is_empty());
}
