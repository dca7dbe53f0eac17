mod common;

use common::{expr, flat_box, Fixture};
use constraint_forge::barriers::{build_barriers, build_supersolution, check_hypotheses, BarrierOptions, Route, YamabeChoice};
use constraint_forge::conformal_data::DataExprs;
use constraint_forge::geometry::{build_exhaustion, Domain};
use constraint_forge::spectral::SpectralOptions;
use constraint_forge::ForgeError;
use proptest::prelude::*;

fn fixture(tau: &str, eps2: &str, eps3: &str) -> Fixture {
    let ex = DataExprs { tau: Some(expr(tau)), eps2: Some(expr(eps2)), eps3: Some(expr(eps3)), ..Default::default() };
    Fixture::new(flat_box(2, 9, 3), &ex)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// `0 < φ₋ ≤ φ₊` and `1 ≤ φ₊ ≤ 1 + max(1, c₊)` on free nodes.
    #[test]
    fn nonvacuum_pair_is_ordered_and_capped(
        t0 in 0.3f64..2.0, t1 in -0.2f64..0.2, e2 in 0.01f64..1.0, e3 in 0.0f64..0.5,
        c_plus in 0.0f64..2.0, c_minus in 0.0f64..1.0,
    ) {
        let f = fixture(&format!("{t0}+{t1}*x*y"), &format!("{e2}"), &format!("{e3}*x"));
        let dom = Domain::interior(f.metric.chart());
        let opts = BarrierOptions { c_plus, c_minus, ..Default::default() };
        let pair = build_barriers(&f.lap, &f.curv, &f.data, &f.k, &dom, Route::LinearNonvacuum, &opts, SpectralOptions::default()).unwrap();
        let cap = 1.0 + c_plus.max(1.0) + 1e-10;
        for p in dom.free_nodes() {
            prop_assert!(pair.lower[p] > 0.0);
            prop_assert!(pair.lower[p] <= pair.upper[p]);
            prop_assert!(pair.upper[p] >= 1.0 - 1e-10 && pair.upper[p] <= cap);
        }
        prop_assert!(pair.l > 0.0 && pair.l <= pair.m);
    }

    /// `v ≡ 1` when `c₊ = 1`; with `c₊ = 0`, `φ₊` is nondecreasing in `τ`.
    #[test]
    fn supersolution_comparison(t0 in 0.3f64..2.0, grow in 1.0f64..3.0) {
        let opts = BarrierOptions { c_plus: 1.0, ..Default::default() };
        let a = fixture(&format!("{t0}"), "0.1", "0");
        let b = fixture(&format!("{}", t0 * grow), "0.1", "0");
        let dom = Domain::interior(a.metric.chart());
        let sa = build_supersolution(&a.lap, &a.curv, &a.data, &a.k, &dom, &opts).unwrap();
        let sb = build_supersolution(&b.lap, &b.curv, &b.data, &b.k, &dom, &opts).unwrap();
        prop_assert!(sa.phi.iter().zip(&sb.phi).all(|(x, y)| (x - 2.0).abs() <= 1e-9 && (y - 2.0).abs() <= 1e-9));
        let zero = BarrierOptions::default();
        let za = build_supersolution(&a.lap, &a.curv, &a.data, &a.k, &dom, &zero).unwrap();
        let zb = build_supersolution(&b.lap, &b.curv, &b.data, &b.k, &dom, &zero).unwrap();
        prop_assert!(za.phi.iter().zip(&zb.phi).all(|(x, y)| *y >= *x - 1e-12));
    }
}

#[test]
fn vacuum_data_reject_the_nonvacuum_route() {
    let f = fixture("1", "0", "0");
    let dom = Domain::interior(f.metric.chart());
    let e = build_barriers(&f.lap, &f.curv, &f.data, &f.k, &dom, Route::LinearNonvacuum, &BarrierOptions::default(), SpectralOptions::default())
        .unwrap_err();
    assert!(matches!(e, ForgeError::Vacuum(_)), "{e}");
}

#[test]
fn yamabe_route_handles_vacuum_data() {
    let f = fixture("1+0.5*x", "0", "0");
    let dom = Domain::interior(f.metric.chart());
    let opts = BarrierOptions { c_plus: 1.0, ..Default::default() };
    let pair = build_barriers(&f.lap, &f.curv, &f.data, &f.k, &dom, Route::Yamabe(YamabeChoice::RTau), &opts, SpectralOptions::default()).unwrap();
    for p in dom.free_nodes() {
        assert!(pair.lower[p] > 0.0 && pair.lower[p] <= pair.upper[p]);
    }
}

#[test]
fn yamabe_route_needs_nonzero_tau() {
    let f = fixture("0", "0", "0");
    let dom = Domain::interior(f.metric.chart());
    let e = build_barriers(&f.lap, &f.curv, &f.data, &f.k, &dom, Route::Yamabe(YamabeChoice::RTau), &BarrierOptions::default(), SpectralOptions::default())
        .unwrap_err();
    assert!(matches!(e, ForgeError::Hypothesis(_)), "{e}");
}

/// `τ_far` is the minimum of `|τ|` over free nodes outside `Ω₁`.
#[test]
fn hypotheses_with_exhaustion_measure_tau_off_the_inner_level() {
    let f = fixture("0.5+x", "0.1", "0");
    let chart = f.metric.chart();
    let dom = Domain::interior(chart);
    let ex = build_exhaustion(chart, 2, 0.5).unwrap();
    let rep = check_hypotheses(&f.lap, &f.metric, &f.curv, &f.data, &f.k, &dom, Some(&ex), None, None).unwrap();
    let inner = ex.interior_compact();
    let expect = dom.free_nodes().into_iter().filter(|&p| !inner[p]).map(|p| f.data.tau[p].abs()).fold(f64::INFINITY, f64::min);
    assert_eq!(rep.tau_far_min, Some(expect));
    assert_eq!(rep.tau_far_ok(), Some(true));
    assert!((expect - (0.5 + chart.spacing(0))).abs() < 1e-12);
}
