//! Property tests for the transforms, the Keller-Osserman decision and the
//! structural validators.

use std::sync::Arc;

use kobarrier::heisenberg::Geometry;
use kobarrier::ko::{decide_ko, decide_ko_hat, Condition, Evidence, Tier, Verdict};
use kobarrier::profile::{Constants, PowerLaw, ProblemSpec};
use kobarrier::quadrature::QuadOptions;
use kobarrier::transforms::{big_k, Anchor, FVariant, Primitive, TransformKind, Transforms};
use kobarrier::validate::{
    log_grid, validate_base, validate_homogeneity, CheckVerdict, Hypothesis, StructuralReport, Witness,
};
use proptest::prelude::*;

const H1: Geometry = Geometry::Heisenberg { m: 1 };

fn product(phi: &str, f: &str, l: &str, constants: Constants) -> ProblemSpec {
    ProblemSpec::product(H1, phi, f, l, constants).unwrap()
}

fn l_of(a_l: f64) -> String {
    if a_l == 0.0 {
        "1".into()
    } else {
        format!("1 + t^{a_l}")
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn arb_profiles() -> impl Strategy<Value = (String, String, String)> {
    let phi = prop_oneof![
        (0.3..3.0f64).prop_map(|a| format!("t^{a}")),
        (0.3..1.5f64, 1.5..3.0f64).prop_map(|(a, b)| format!("t^{a} + t^{b}")),
    ];
    let f = prop_oneof![
        (0.1..4.0f64).prop_map(|a| format!("t^{a}")),
        (0.1..1.0f64, 1.0..4.0f64).prop_map(|(a, b)| format!("2*t^{a} + t^{b}")),
        (0.5..3.0f64).prop_map(|a| format!("t^{a}*log(2 + t)")),
    ];
    let l = prop_oneof![Just("1".to_string()), (0.1..0.9f64).prop_map(|a| format!("1 + t^{a}"))];
    (phi, f, l)
}

fn all_verdicts(spec: &ProblemSpec) -> StructuralReport {
    let mut r = StructuralReport::default();
    if let Ok(b) = validate_base(spec) {
        r = r.merge(b);
    }
    if let Ok(h) = validate_homogeneity(spec) {
        r = r.merge(h);
    }
    r
}

fn witness(r: &StructuralReport, h: Hypothesis) -> Option<Witness> {
    match &r.get(h)?.verdict {
        CheckVerdict::Fail { witness } => Some(witness.clone()),
        _ => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transforms_are_increasing((phi, f, l) in arb_profiles(), theta in 0.0..1.5f64) {
        let spec = product(&phi, &f, &l, Constants::default());
        let tr = Transforms::new(&spec).unwrap();
        let grid = log_grid(1e-4, 1e4, 40);
        let k: Vec<f64> = grid.iter().map(|&t| tr.big_k(t).unwrap()).collect();
        let ff: Vec<f64> = grid.iter().map(|&t| tr.big_f(t, FVariant::Plain).unwrap()).collect();
        prop_assert!(strictly_increasing(&k), "K not increasing for phi={phi}, l={l}");
        prop_assert!(strictly_increasing(&ff), "F not increasing for f={f}");
        let kinv: Vec<f64> = k.iter().map(|&v| tr.big_k_inverse(v).unwrap()).collect();
        prop_assert!(strictly_increasing(&kinv));
        for (t, back) in grid.iter().zip(&kinv) {
            prop_assert!((back - t).abs() <= 1e-6 * t, "K^-1(K({t})) = {back}");
        }

        let constants = Constants { theta: Some(theta), ..Constants::default() };
        let spec = ProblemSpec::difference(H1, &phi, &f, "exp(-t)", "t^2", constants).unwrap();
        let tr = Transforms::new(&spec).unwrap();
        let fhat: Vec<f64> = grid.iter().map(|&t| tr.big_f(t, FVariant::Hat).unwrap()).collect();
        prop_assert!(strictly_increasing(&fhat), "F-hat not increasing for f={f}, theta={theta}");
    }

    #[test]
    fn k_is_homogeneous_for_monomials(p in 1.2..4.0f64, t in 1e-3..1e3f64, y in 0.1..10.0f64) {
        let spec = product(&format!("t^{}", p - 1.0), "t^2", "1", Constants::default());
        let theta = 2.0 - p;
        let lhs = big_k(&spec, t * y).unwrap();
        let rhs = y.powf(2.0 - theta) * big_k(&spec, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs, "K(ty) = {lhs}, y^(2-theta) K(t) = {rhs}");
    }

    #[test]
    fn closed_form_and_table_agree(c in 0.1..10.0f64, a in -0.9..3.0f64, x in 1e-6..1e6f64) {
        let integrand: kobarrier::transforms::Integrand = Arc::new(move |s: f64| Ok(c * s.powf(a)));
        let build = |closed| {
            Primitive::new(TransformKind::F, integrand.clone(), Anchor::From(0.0), closed, (1e-12, 1e300),
                QuadOptions::default(), 1e-12).unwrap()
        };
        let exact = build(Some(PowerLaw { c, a }));
        let table = build(None);
        prop_assert!(exact.closed_form().is_some() && table.closed_form().is_none());
        let (e, q) = (exact.eval(x).unwrap(), table.eval(x).unwrap());
        prop_assert!((e - q).abs() <= 1e-7 * e, "closed {e}, table {q} at {x}");
        let (ei, qi) = (exact.inverse(e).unwrap(), table.inverse(e).unwrap());
        prop_assert!((ei - qi).abs() <= 1e-7 * ei, "inverses {ei} vs {qi}");
    }

    #[test]
    fn exact_tier_matches_exponent_arithmetic(p in prop::sample::select(vec![2.0, 3.0]), a_l in 0.0..0.9f64, a_f in 0.1..4.0f64) {
        let gap = a_f + 1.0 - (p - a_l);
        prop_assume!(gap.abs() >= 0.1);
        let spec = product(&format!("t^{}", p - 1.0), &format!("t^{a_f}"), &l_of(a_l), Constants::default());
        let v = decide_ko(&spec);
        let expect = if gap > 0.0 { Verdict::Holds } else { Verdict::Fails };
        prop_assert_eq!(v.tier, Tier::ExactPowerLaw);
        prop_assert_eq!(v.verdict, expect, "p={} a_l={} a_f={}", p, a_l, a_f);
    }

    #[test]
    fn hat_agrees_when_h_is_integrable(
        p in 1.5..3.5f64,
        a_f in 0.1..4.0f64,
        h in prop::sample::select(vec!["exp(-t)", "1/(1 + t)^2", "2/(1 + t^3)"]),
        theta in 0.0..1.5f64,
    ) {
        prop_assume!((a_f + 1.0 - p).abs() >= 0.1);
        let constants = Constants { theta: Some(theta), ..Constants::default() };
        let spec = ProblemSpec::difference(H1, &format!("t^{}", p - 1.0), &format!("t^{a_f}"), h, "t^2", constants)
            .unwrap();
        let plain = decide_ko(&spec);
        let hat = decide_ko_hat(&spec).unwrap();
        prop_assert_eq!(hat.condition, Condition::KOhat);
        prop_assert!(plain.verdict != Verdict::Inconclusive);
        prop_assert_eq!(hat.verdict, plain.verdict);
    }

    #[test]
    fn numeric_partial_integrals_are_monotone(a in 0.5..3.0f64, p in 1.5..3.0f64) {
        let spec = product(&format!("t^{}", p - 1.0), &format!("t^{a}*log(2 + t)"), "1", Constants::default());
        let v = decide_ko(&spec);
        prop_assert_eq!(v.tier, Tier::NumericTail);
        match v.evidence {
            Evidence::TailSlopes { partial_integrals, .. } => {
                prop_assert!(partial_integrals.windows(2).all(|w| w[1] >= w[0]), "{partial_integrals:?}");
            }
            other => prop_assert!(false, "unexpected evidence {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refining_the_grid_never_breaks_a_pass(
        p in 1.5..4.0f64,
        extra in 0.0..2.0f64,
        a_f in 0.2..3.0f64,
        a_l in 0.0..0.9f64,
        c in 1.0..3.0f64,
        lambda in 1.0..2.0f64,
    ) {
        let constants = Constants {
            c_monotone: Some(c),
            tau: Some(p - 1.0 + extra),
            d: Some(1.0),
            lambda: Some(lambda),
            ..Constants::default()
        };
        let mut spec = product(&format!("t^{}", p - 1.0), &format!("t^{a_f}"), &l_of(a_l), constants);
        spec.tolerances.grid_n = 12;
        let coarse = all_verdicts(&spec);
        spec.tolerances.grid_n = 120;
        let fine = all_verdicts(&spec);
        for check in coarse.checks.iter().filter(|c| c.passed()) {
            let after = fine.get(check.hypothesis).unwrap();
            prop_assert!(!matches!(after.verdict, CheckVerdict::Fail { .. }), "{:?} flipped: {:?}", check.hypothesis, after);
        }
    }

    #[test]
    fn phi2_witnesses_are_real_violations(c in 0.5..3.0f64, a in 0.2..3.0f64, tau in 0.0..4.0f64, d in 1.0..3.0f64) {
        let constants = Constants { tau: Some(tau), d: Some(d), ..Constants::default() };
        let spec = product(&format!("{c}*t^{a}"), "t^2", "1", constants);
        let r = validate_homogeneity(&spec).unwrap();
        let Some(w) = witness(&r, Hypothesis::Phi2) else {
            prop_assert!(a >= tau, "no witness although tau = {tau} > {a}");
            return Ok(());
        };
        let s = w.s.unwrap();
        let (lhs, rhs) = if w.clause.starts_with("s phi'") {
            (s * c * a * (s * w.t).powf(a - 1.0), d * s.powf(tau) * c * a * w.t.powf(a - 1.0))
        } else {
            (c * (s * w.t).powf(a), d * s.powf(tau) * c * w.t.powf(a))
        };
        prop_assert!(lhs > rhs, "witness {w:?} re-evaluates to {lhs} <= {rhs}");
    }

    #[test]
    fn l2_witnesses_are_real_violations(e in 0.0..4.0f64, tau in 0.0..2.0f64, lambda in 0.5..2.0f64) {
        let constants = Constants { tau: Some(tau), lambda: Some(lambda), ..Constants::default() };
        let spec = product("t", "t^2", &format!("1 + t^{e}"), constants);
        let r = validate_homogeneity(&spec).unwrap();
        if let Some(w) = witness(&r, Hypothesis::L2) {
            let (s, t) = (w.s.unwrap(), w.t);
            let lhs = s.powf(1.0 + tau) * (1.0 + t.powf(e));
            let rhs = lambda * (1.0 + (s * t).powf(e));
            prop_assert!(lhs > rhs, "witness {w:?} re-evaluates to {lhs} <= {rhs}");
        } else {
            prop_assert!(e <= 1.0 + tau && lambda >= 1.0, "no witness for e={e}, tau={tau}, Lambda={lambda}");
        }
    }

    #[test]
    fn phi2_fails_above_the_p_laplacian_threshold(p in 1.3..4.0f64, delta in 0.05..2.0f64) {
        let constants = Constants { tau: Some(p - 1.0 + delta), d: Some(1.0), ..Constants::default() };
        let spec = product(&format!("t^{}", p - 1.0), "t^2", "1", constants);
        let r = validate_homogeneity(&spec).unwrap();
        prop_assert!(witness(&r, Hypothesis::Phi2).is_some(), "{:?}", r.get(Hypothesis::Phi2));
    }
}
