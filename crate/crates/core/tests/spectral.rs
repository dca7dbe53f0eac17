mod common;

use common::{curved_box, flat_box};
use constraint_forge::geometry::{curvature, Domain};
use constraint_forge::operators::{assemble_laplace_beltrami, DiscreteOperator};
use constraint_forge::spectral::{lambda1_conf, lambda1_schrodinger, zero_set, SpectralEstimate, SpectralOptions};
use proptest::prelude::*;

fn rayleigh(op: &DiscreteOperator, e: &SpectralEstimate, potential: Option<&[f64]>) -> f64 {
    let sx = op.stiffness_apply(&e.vector);
    let mut num: f64 = e.vector.iter().zip(&sx).map(|(a, b)| a * b).sum();
    if let Some(v) = potential {
        num += e.vector.iter().enumerate().map(|(i, x)| x * x * op.mass[i] * v[i]).sum::<f64>();
    }
    num / op.inner(&e.vector, &e.vector)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rayleigh_quotient_matches_lambda(a in -0.3f64..0.3, shift in -20.0f64..20.0) {
        let m = curved_box(2, 9, &format!("1+{a}*x*y"));
        let dom = Domain::interior(m.chart());
        let pot = vec![shift; m.chart().len()];
        let e = lambda1_schrodinger(&m, &pot, &dom, SpectralOptions::default()).unwrap();
        let op = assemble_laplace_beltrami(&m);
        let rq = rayleigh(&op, &e, Some(&pot));
        prop_assert!((rq - e.lambda).abs() <= e.residual.max(1e-12) * (1.0 + e.lambda.abs()));
        prop_assert!(e.lambda >= -e.residual || shift < 0.0);
    }
}

#[test]
fn conformal_killing_spectrum_is_positive_on_flat_boxes() {
    for (dim, nodes) in [(2, 9), (2, 17), (3, 7)] {
        let m = flat_box(dim, nodes, 3);
        let e = lambda1_conf(&m, &Domain::interior(m.chart()), SpectralOptions::default()).unwrap();
        assert!(e.lambda > 0.0, "{dim}D {nodes}: {}", e.lambda);
    }
}

#[test]
fn same_seed_same_estimate() {
    let m = curved_box(2, 9, "1+0.1*x");
    let r = curvature(&m).scalar;
    let dom = Domain::interior(m.chart());
    let a = lambda1_schrodinger(&m, &r, &dom, SpectralOptions::default()).unwrap();
    let b = lambda1_schrodinger(&m, &r, &dom, SpectralOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_set_of_sign_changing_tau() {
    let m = flat_box(2, 9, 3);
    let c = m.chart();
    let tau: Vec<f64> = (0..c.len()).map(|p| c.coords(p)[0] - 0.5).collect();
    let b0 = zero_set(&tau, &Domain::interior(c), 1e-10);
    assert_eq!(b0.count(), 7);
}
