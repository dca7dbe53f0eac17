mod common;

use common::{curved_box, flat_box, sup_diff};
use constraint_forge::conformal_data::ConformalConstants;
use constraint_forge::geometry::Domain;
use constraint_forge::lichnerowicz::{constant_root, picard_solve, LichnerowiczProblem, PicardOptions, ShiftMode, Start, Term};
use constraint_forge::operators::assemble_laplace_beltrami;
use constraint_forge::ForgeError;
use num_rational::Rational64;
use proptest::prelude::*;

fn terms(len: usize, a_tau: f64, a_k: f64, a_r: f64) -> Vec<Term> {
    let k = ConformalConstants::new(3).unwrap();
    vec![
        Term { name: "A_R", coef: vec![a_r; len], power: Rational64::from_integer(1), sign: 1.0 },
        Term { name: "A_tau", coef: vec![a_tau; len], power: k.critical(), sign: 1.0 },
        Term { name: "A_K", coef: vec![a_k; len], power: k.k_power(), sign: -1.0 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Iterates rise from `φ₋` and fall from `φ₊`, meeting at one solution.
    #[test]
    fn monotone_squeeze(a_tau in 0.2f64..1.0, a_k in 0.05f64..0.5, bump in 0.0f64..0.3) {
        let m = curved_box(2, 9, &format!("1+{bump}*x*(1-x)*y*(1-y)"));
        let op = assemble_laplace_beltrami(&m);
        let len = m.chart().len();
        let root = (a_k / a_tau).powf(1.0 / 12.0);
        let problem = LichnerowiczProblem::from_terms(&op, Domain::interior(m.chart()), terms(len, a_tau, a_k, 0.0), vec![root; len]);
        let (lo, hi) = (vec![0.8 * root; len], vec![1.25 * root; len]);
        for shift in [ShiftMode::Global, ShiftMode::Local] {
            let up = PicardOptions { tol: 1e-11, max_iter: 5000, shift, start: Start::Lower, ..Default::default() };
            let down = PicardOptions { start: Start::Upper, ..up.clone() };
            let (a, ta) = picard_solve(&problem, &lo, &hi, &up).unwrap();
            let (b, tb) = picard_solve(&problem, &lo, &hi, &down).unwrap();
            let slack = 1e-12 * root;
            prop_assert!(ta.max_decrease.iter().all(|d| *d <= slack));
            prop_assert!(tb.max_decrease.iter().all(|d| *d >= -slack));
            prop_assert!(ta.bracket_violation.iter().chain(&tb.bracket_violation).all(|v| *v == 0.0));
            prop_assert!(sup_diff(&a, &b) <= 1e-9);
        }
    }
}

#[test]
fn constant_coefficients_reproduce_the_scalar_root() {
    let m = flat_box(2, 9, 3);
    let op = assemble_laplace_beltrami(&m);
    let len = m.chart().len();
    let (a_tau, a_k, a_r) = (0.75, 0.2, 0.1);
    let mut problem = LichnerowiczProblem::from_terms(&op, Domain::interior(m.chart()), terms(len, a_tau, a_k, a_r), vec![1.0; len]);
    let root = constant_root(&problem, 0, 0.1, 10.0).unwrap();
    problem.boundary = vec![root; len];
    let opts = PicardOptions { tol: 1e-10, ..Default::default() };
    let (phi, _) = picard_solve(&problem, &vec![0.7 * root; len], &vec![1.4 * root; len], &opts).unwrap();
    assert!(phi.iter().all(|v| (v - root).abs() <= 10.0 * opts.tol), "{}", sup_diff(&phi, &vec![root; len]));
    assert!(problem.residual(&phi).iter().enumerate().filter(|(p, _)| problem.domain.is_free(*p)).all(|(_, r)| r.abs() < 1e-8));
}

#[test]
fn eps3_term_is_constant_in_six_dimensions() {
    assert_eq!(ConformalConstants::new(6).unwrap().eps3_power(), Rational64::from_integer(0));
    assert!(ConformalConstants::new(3).unwrap().eps3_power() < Rational64::from_integer(0));
    assert!(ConformalConstants::new(7).unwrap().eps3_power() > Rational64::from_integer(0));
}

#[test]
fn invalid_brackets_are_domain_errors() {
    let m = flat_box(2, 7, 3);
    let op = assemble_laplace_beltrami(&m);
    let len = m.chart().len();
    let problem = LichnerowiczProblem::from_terms(&op, Domain::interior(m.chart()), terms(len, 1.0, 0.5, 0.0), vec![1.0; len]);
    let opts = PicardOptions::default();
    let err = |lo: f64, hi: f64| picard_solve(&problem, &vec![lo; len], &vec![hi; len], &opts).unwrap_err();
    assert!(matches!(err(0.0, 2.0), ForgeError::Domain(_)));
    assert!(matches!(err(1.5, 1.2), ForgeError::Domain(_)));
    assert!(matches!(err(1.1, 2.0), ForgeError::Domain(_)));
}

#[test]
fn iteration_cap_is_nonconvergence() {
    let m = flat_box(2, 9, 3);
    let op = assemble_laplace_beltrami(&m);
    let len = m.chart().len();
    let problem = LichnerowiczProblem::from_terms(&op, Domain::interior(m.chart()), terms(len, 1.0, 0.5, 0.0), vec![1.0; len]);
    let opts = PicardOptions { max_iter: 2, tol: 1e-14, ..Default::default() };
    let e = picard_solve(&problem, &vec![0.5; len], &vec![2.0; len], &opts).unwrap_err();
    assert!(matches!(e, ForgeError::NonConvergence { iterations: 2, .. }));
}
