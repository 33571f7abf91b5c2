//! Property tests for the barrier builders and the certificates.

use kobarrier::barrier::{
    build_annulus_profile, build_subsolution_p, build_supersolution, build_supersolution_bounded,
    build_supersolution_gradient, Barrier, BarrierKind, GluedSubsolution, DEFAULT_GLUING_RATE,
};
use kobarrier::heisenberg::{radial_field, radial_phi_laplacian_at, Geometry, RadialKind, RadialProfile};
use kobarrier::profile::{Constants, ProblemSpec};
use kobarrier::verify::{fullspace_residual, weak_residual, Bump, FullspaceOptions, Region, Sign, WEAK_MAX_N};
use proptest::prelude::*;

const H1: Geometry = Geometry::Heisenberg { m: 1 };

fn product(phi: &str, f: &str) -> ProblemSpec {
    ProblemSpec::product(H1, phi, f, "1", Constants::default()).unwrap()
}

/// Five-point derivative of component `k` of the jet.
fn diff(p: &dyn RadialProfile, k: usize, t: f64, h: f64) -> f64 {
    let v = |x: f64| p.jet(x).unwrap()[k];
    (-v(t + 2.0 * h) + 8.0 * v(t + h) - 8.0 * v(t - h) + v(t - 2.0 * h)) / (12.0 * h)
}

/// Checks the jet against differences of itself on `n` points of `[lo, hi]`.
fn jet_consistent(p: &dyn RadialProfile, lo: f64, hi: f64, n: usize) -> Result<(), TestCaseError> {
    let h = 1e-3 * (hi - lo);
    for i in 0..n {
        let t = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        let [a, d1, d2] = p.jet(t).unwrap();
        let (fd1, fd2) = (diff(p, 0, t, h), diff(p, 1, t, h));
        prop_assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(a.abs() / t), "alpha' at {t}: {d1} vs {fd1}");
        prop_assert!((fd2 - d2).abs() <= 1e-4 * d2.abs().max(d1.abs() / t), "alpha'' at {t}: {d2} vs {fd2}");
    }
    Ok(())
}

/// Interior of a finite-horizon barrier, away from the blow-up.
fn interior(b: &Barrier) -> (f64, f64) {
    let (t0, t1) = (b.t0(), b.t_end());
    let span = t1 - t0;
    (t0 + 0.05 * span, t1 - 0.1 * span)
}

fn arb_super() -> impl Strategy<Value = (Barrier, ProblemSpec)> {
    (1.3..3.0f64, 0u8..3).prop_map(|(a, kind)| {
        let spec = product("t", &format!("t^{a}"));
        let b = match kind {
            0 => build_supersolution(&spec, 0.1, 0.2, 1.0, 2.0, 1.0),
            1 => build_supersolution_bounded(&spec, 0.1, 0.2, 1.0, 2.0, 1.0, 10.0),
            _ => {
                let c = Constants { d: Some(1.0), theta: Some(0.0), b: Some(1.0), ..Constants::default() };
                let spec = ProblemSpec::difference(H1, "t", &format!("t^{a}"), "exp(-t)", "t^2", c).unwrap();
                return (build_supersolution_gradient(&spec, 0.1, 0.2, 1.0, 2.0).unwrap(), spec);
            }
        };
        (b.unwrap(), spec)
    })
}

fn arb_sub() -> impl Strategy<Value = (GluedSubsolution, ProblemSpec)> {
    // a < p - 1 so that the Keller-Osserman condition fails.
    (1.8..3.0f64, 0.0..1.0f64).prop_map(|(p, u)| {
        let a = 0.1 + u * (p - 1.2);
        let spec = product(&format!("t^{}", p - 1.0), &format!("t^{a}"));
        (build_subsolution_p(&spec, None, DEFAULT_GLUING_RATE).unwrap(), spec)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn supersolution_jets_are_consistent((b, _) in arb_super()) {
        let (lo, hi) = interior(&b);
        jet_consistent(&b, lo, hi, 25)?;
    }

    #[test]
    fn supersolutions_increase((b, _) in arb_super()) {
        for t in b.audit_grid(200) {
            let [_, d1, d2] = b.jet(t).unwrap();
            prop_assert!(d1 > 0.0, "alpha'({t}) = {d1}");
            if b.kind() == BarrierKind::SupersolutionKO {
                prop_assert!(d2 >= 0.0, "alpha''({t}) = {d2}");
            }
        }
    }

    #[test]
    fn annulus_jets_are_consistent(p in 1.5..3.5f64, r in 1.5..4.0f64, top in 0.5..3.0f64) {
        let spec = product(&format!("t^{}", p - 1.0), "t^2");
        let b = build_annulus_profile(&spec, r, 0.0, top).unwrap();
        let (lo, hi) = (b.t0(), b.t_end());
        let span = hi - lo;
        jet_consistent(&b, lo + 0.05 * span, hi - 0.05 * span, 25)?;
    }

    #[test]
    fn subsolution_jets_are_consistent((s, _) in arb_sub()) {
        let ts = s.t_sigma;
        jet_consistent(&s, 0.2 * ts, 0.8 * ts, 10)?;
        jet_consistent(&s, 1.2 * ts, 5.0 * ts, 20)?;
    }

    #[test]
    fn subsolution_is_c1((s, _) in arb_sub()) {
        let (dv, ds) = s.junction_mismatch().unwrap();
        let [a, d1, _] = s.inner_jet(s.t_sigma);
        prop_assert!(dv <= 1e-9 * a.abs().max(1.0), "value jump {dv}");
        prop_assert!(ds <= 1e-9 * d1.abs().max(1.0), "slope jump {ds}");
        prop_assert_eq!(s.jet(0.0).unwrap()[1], 0.0);
    }

    #[test]
    fn gluing_stays_below_the_diagonal((s, _) in arb_sub()) {
        let bound = s.alpha_junction - 2.0 * s.eps;
        prop_assert!(bound < 0.0, "alpha(t_sigma) - 2 eps = {bound}");
        prop_assert!((s.w0 - 2.0 * s.eps).abs() <= 1e-12 * s.w0);
        for k in 0..200 {
            let y = s.w0 * 1e4f64.powf(k as f64 / 199.0);
            let gap = s.gamma(y)[0] - y;
            prop_assert!(gap <= bound + 1e-12 * y, "gamma({y}) - {y} = {gap} > {bound}");
        }
    }

    #[test]
    fn fullspace_residuals_match_the_closed_form((b, spec) in arb_super(), seed in any::<u64>()) {
        let (lo, hi) = interior(&b);
        let region = Region { radius: (lo, hi), height: 0.0, seam: None };
        let g = fullspace_residual(&b, RadialKind::GaugeRadial, &spec, &region, &FullspaceOptions::new(Sign::SuperLE, seed))
            .unwrap();
        prop_assert_eq!(g.seed, Some(seed));
        prop_assert!(g.worst.is_finite() && g.worst_location.is_some());
        prop_assert!(g.pass, "worst {} at {:?}", g.worst, g.worst_location);
        for pt in &g.points {
            let k = H1.gauge(&pt.location);
            let [u, d1, _] = b.jet(k.r).unwrap();
            let closed = radial_phi_laplacian_at(H1, &b, &pt.location, None, &spec.phi, RadialKind::GaugeRadial).unwrap()
                - spec.rhs.eval(u, d1 * k.psi.sqrt()).unwrap();
            prop_assert!((closed - pt.residual).abs() <= 1e-3 * pt.scale, "fd {} vs closed {closed}", pt.residual);
        }
    }

    #[test]
    fn weak_sign_matches_pointwise((b, spec) in arb_super(), frac in 0.1..0.9f64) {
        let (lo, hi) = interior(&b);
        let x = lo + frac * (hi - lo);
        let radius = 0.25 * (x - lo).min(hi - x).min(1.0);
        prop_assume!(radius > 1e-3);
        let u = radial_field(H1, &b, None, RadialKind::GaugeRadial);
        let w = weak_residual(&spec, &u, &Bump { center: vec![x, 0.0, 0.0], radius }, 32, 0).unwrap();
        if w.error_estimate < w.value.abs() {
            prop_assert!(w.value < 0.0, "supersolution with positive weak residual {w:?}");
        }
    }

    #[test]
    fn weak_sign_matches_pointwise_for_subsolutions((s, spec) in arb_sub(), frac in 0.3..3.0f64) {
        let u = radial_field(H1, &s, None, RadialKind::StationaryRadial);
        let x = frac * s.t_sigma;
        let w = weak_residual(&spec, &u, &Bump { center: vec![x, 0.0, 0.0], radius: 0.2 * x }, WEAK_MAX_N, 0).unwrap();
        if w.error_estimate < w.value.abs() {
            prop_assert!(w.value > 0.0, "subsolution with negative weak residual {w:?}");
        }
    }
}
