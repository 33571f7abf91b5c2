//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion over all of them so every line is printed even when one fails.

use std::io::Write;
use std::time::{Duration, Instant};

use kobarrier::barrier::{
    build_annulus_profile, build_subsolution_p, build_supersolution, build_supersolution_bounded,
    build_supersolution_gradient, DEFAULT_GLUING_RATE,
};
use kobarrier::heisenberg::{phi_laplacian_fd_at, radial_field, radial_phi_laplacian_at, Geometry, RadialKind};
use kobarrier::ko::{decide_ko, decide_ko_hat, sigma_scaling_check, Verdict};
use kobarrier::profile::{Constants, ProblemSpec, Profile};
use kobarrier::transforms::big_k;
use kobarrier::validate::log_grid;
use kobarrier::verify::{
    fullspace_residual, geometry_checks, radial_residual, weak_residual, Bump, FullspaceOptions, Region, Sign,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H1: Geometry = Geometry::Heisenberg { m: 1 };

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn product(phi: &str, f: &str, l: &str) -> ProblemSpec {
    ProblemSpec::product(H1, phi, f, l, Constants::default()).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ko_power_law_oracle() -> Outcome {
    let start = Instant::now();
    let (mut agree, mut total) = (0, 0);
    for p in [2.0, 3.0] {
        for a_l in [0.0, 0.5] {
            for a_f in [0.25, 0.5, 1.0, 2.0, 4.0] {
                let k_growth: f64 = p - a_l;
                if (a_f + 1.0 - k_growth).abs() < 1e-12 {
                    continue;
                }
                let l = if a_l == 0.0 { "1".to_string() } else { format!("1 + t^{}", a_l) };
                let spec = product(&format!("t^{}", p - 1.0), &format!("t^{}", a_f), &l);
                let expect = if a_f + 1.0 > k_growth { Verdict::Holds } else { Verdict::Fails };
                total += 1;
                if decide_ko(&spec).verdict == expect {
                    agree += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(agree == total, || format!("{agree}/{total} agree"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("{agree}/{total} agree in {elapsed:.2?}"))
}

fn geometry_suite() -> Outcome {
    let mut notes = Vec::new();
    for m in 1..=3 {
        let r = geometry_checks(m, 200, 2024).map_err(|e| e.to_string())?;
        for c in &r.checks {
            ensure(c.pass, || format!("m={m} {}: {:.3e} > {:.0e}", c.name, c.worst, c.tolerance))?;
        }
        let worst = r.checks.iter().map(|c| c.worst).fold(0.0, f64::max);
        notes.push(format!("m={m} worst {worst:.1e}"));
    }
    Ok(notes.join(", "))
}

fn radialization_cross_check() -> Outcome {
    let phi = Profile::parse("t + t^3").unwrap();
    let alpha = |t: f64| -> kobarrier::Result<[f64; 3]> { Ok([t * t * t + t, 3.0 * t * t + 1.0, 6.0 * t]) };
    let field = radial_field(H1, &alpha, None, RadialKind::GaugeRadial);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_err, mut worst_order) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let x: Vec<f64> = vec![rng.gen_range(0.3..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let exact = radial_phi_laplacian_at(H1, &alpha, &x, None, &phi, RadialKind::GaugeRadial).unwrap();
        let fd = |h: f64| phi_laplacian_fd_at(H1, &field, &x, &phi, h).unwrap();
        let rel = |v: f64| (v - exact).abs() / exact.abs();
        worst_err = worst_err.max(rel(fd(1e-4)));
        let (e1, e2) = (rel(fd(2e-2)), rel(fd(1e-2)));
        worst_order = worst_order.min((e1 / e2).log2());
    }
    ensure(worst_err <= 1e-3, || format!("rel. error {worst_err:.2e} at step 1e-4"))?;
    ensure(worst_order >= 1.8, || format!("observed order {worst_order:.2}"))?;
    Ok(format!("worst rel. error {worst_err:.1e}, min order {worst_order:.2}"))
}

fn p2_square() -> ProblemSpec {
    product("t", "t^2", "1")
}

fn supersolution_certificate() -> Outcome {
    let spec = p2_square();
    let start = Instant::now();
    let b = build_supersolution(&spec, 0.1, 0.2, 1.0, 2.0, 1.0).map_err(|e| e.to_string())?;
    let at = |t: f64| b.alpha(t).map_err(|e| e.to_string());
    let t_end = b.t_end();
    ensure(at(1.0)? == 0.1, || format!("alpha(t0) = {}", at(1.0).unwrap()))?;
    ensure(at(2.0)? <= 0.2, || format!("alpha(t1) = {}", at(2.0).unwrap()))?;
    let near = at(t_end - 1e-6)?;
    ensure(near > 1e5, || format!("alpha(T - 1e-6) = {near}"))?;
    let grid = radial_residual(&b, &spec, Sign::SuperLE, &b.audit_grid(1000)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(grid.pass && grid.points.len() == 1000, || format!("worst residual {}", grid.worst))?;
    ensure(grid.points.iter().all(|p| p.residual <= 0.0), || "a residual is positive".into())?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "sigma {}, T {t_end:.6}, alpha(T-1e-6) {near:.2e}, worst residual {:.2e}, {elapsed:.2?}",
        b.sigma().unwrap(),
        grid.worst
    ))
}

fn bounded_variant() -> Outcome {
    let spec = p2_square();
    let b = build_supersolution_bounded(&spec, 0.1, 0.2, 1.0, 2.0, 1.0, 10.0).map_err(|e| e.to_string())?;
    let top = b.alpha(b.t_end()).map_err(|e| e.to_string())?;
    ensure((top - 10.0).abs() <= 1e-8, || format!("alpha(T) = {top}"))?;
    let grid = radial_residual(&b, &spec, Sign::SuperLE, &b.audit_grid(1000)).map_err(|e| e.to_string())?;
    ensure(grid.points.iter().all(|p| p.residual <= 0.0), || format!("worst residual {}", grid.worst))?;
    Ok(format!("alpha(T) - A = {:.1e}, worst residual {:.2e}", top - 10.0, grid.worst))
}

fn gradient_variant() -> Outcome {
    let c = Constants { d: Some(1.0), b: Some(1.0), theta: Some(0.0), ..Default::default() };
    let spec = ProblemSpec::difference(H1, "t", "t^2", "exp(-t)", "t^2", c).unwrap();
    let b = build_supersolution_gradient(&spec, 0.1, 0.2, 1.0, 2.0).map_err(|e| e.to_string())?;
    let grid = radial_residual(&b, &spec, Sign::SuperLE, &b.audit_grid(1000)).map_err(|e| e.to_string())?;
    ensure(grid.points.iter().all(|p| p.residual <= 0.0), || format!("worst residual {}", grid.worst))?;

    let zero = ProblemSpec::difference(H1, "t", "t^2", "0", "t^2", c).unwrap();
    let g = build_supersolution_gradient(&zero, 0.1, 0.2, 1.0, 2.0).map_err(|e| e.to_string())?;
    let plain = build_supersolution(&p2_square(), 0.1, 0.2, 1.0, 2.0, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t in plain.audit_grid(200) {
        if t >= g.t_end() {
            continue;
        }
        let (x, y) = (g.alpha(t).map_err(|e| e.to_string())?, plain.alpha(t).map_err(|e| e.to_string())?);
        worst = worst.max((x - y).abs() / y.abs());
    }
    ensure(worst <= 1e-6, || format!("h = 0 differs from the plain construction by {worst:.2e}"))?;
    Ok(format!("worst residual {:.2e}, h = 0 vs plain rel. {worst:.1e}", grid.worst))
}

fn subsolution_certificate() -> Outcome {
    let spec = product("t", "t^0.5", "1");
    let s = build_subsolution_p(&spec, None, DEFAULT_GLUING_RATE).map_err(|e| e.to_string())?;
    let (dv, dd) = s.junction_mismatch().map_err(|e| e.to_string())?;
    ensure(dv.abs() <= 1e-9 && dd.abs() <= 1e-9, || format!("junction mismatch ({dv:.2e}, {dd:.2e})"))?;

    let ts = s.t_sigma;
    let region = Region { radius: (0.05 * ts, 20.0 * ts.max(1.0)), height: 2.0, seam: Some(ts) };
    let grid =
        fullspace_residual(&s, RadialKind::StationaryRadial, &spec, &region, &FullspaceOptions::new(Sign::SubGE, 7))
            .map_err(|e| e.to_string())?;
    ensure(grid.points.len() >= 200 - grid.skipped && !grid.points.is_empty(), || "no points".into())?;
    ensure(grid.points.iter().all(|p| p.residual >= 0.0), || format!("worst residual {}", grid.worst))?;

    let u = radial_field(H1, &s, None, RadialKind::StationaryRadial);
    let bump = Bump { center: vec![ts, 0.0, 0.0], radius: 0.5 * ts };
    let w = weak_residual(&spec, &u, &bump, 32, 0).map_err(|e| e.to_string())?;
    ensure(w.value >= -w.error_estimate, || format!("weak residual {} (error {})", w.value, w.error_estimate))?;

    let far = u.value(&[1e3, 0.0, 0.0]).map_err(|e| e.to_string())?;
    ensure(far > 1e2, || format!("u at |z| = 1e3 is {far}"))?;
    Ok(format!(
        "t_sigma {ts:.4}, mismatch ({dv:.0e}, {dd:.0e}), {} points (skipped {}), weak {:.3e} +- {:.1e}, u(1e3) {far:.3e}",
        grid.points.len(),
        grid.skipped,
        w.value,
        w.error_estimate
    ))
}

fn sigma_scaling() -> Outcome {
    let mut notes = Vec::new();
    for (name, spec) in [("l=1", p2_square()), ("l=1+0.5t^0.3", product("t", "t^2", "1 + 0.5*t^0.3"))] {
        for sigma in [0.1, 0.5, 1.0] {
            let c = sigma_scaling_check(&spec, sigma, 1.0).map_err(|e| e.to_string())?;
            ensure(c.holds, || format!("{name}, sigma {sigma}: {} > {}", c.lhs, c.rhs))?;
            if sigma == 1.0 {
                let rel = (c.lhs - c.rhs).abs() / c.rhs;
                ensure(rel <= 1e-12, || format!("{name}: equality off by {rel:.1e}"))?;
            }
        }
        notes.push(name);
    }
    Ok(format!("sigma in {{0.1, 0.5, 1}} for {}", notes.join(", ")))
}

fn ko_hat_equivalence() -> Outcome {
    let c = Constants { theta: Some(0.0), b: Some(1.0), d: Some(1.0), ..Default::default() };
    let mut agree = 0;
    for f in ["t^0.25", "t^0.5", "t^2", "t^4"] {
        let spec = ProblemSpec::difference(H1, "t", f, "exp(-t)", "t^2", c).unwrap();
        let plain = decide_ko(&spec).verdict;
        let hat = decide_ko_hat(&spec).map_err(|e| e.to_string())?.verdict;
        ensure(plain == hat, || format!("f = {f}: KO {plain:?}, hat {hat:?}"))?;
        ensure(plain != Verdict::Inconclusive, || format!("f = {f}: inconclusive"))?;
        agree += 1;
    }
    Ok(format!("{agree}/4 agree"))
}

fn k_homogeneity() -> Outcome {
    let mut worst = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        let theta = 2.0 - p;
        let spec = product(&format!("t^{}", p - 1.0), "t^2", "1");
        let grid = log_grid(1e-2, 1e2, 20);
        for &t in &grid {
            let kt = big_k(&spec, t).map_err(|e| e.to_string())?;
            for &y in &grid {
                let kty = big_k(&spec, t * y).map_err(|e| e.to_string())?;
                worst = worst.max((kty / (y.powf(2.0 - theta) * kt) - 1.0).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("worst deviation {worst:.2e}"))?;
    Ok(format!("p in {{1.5, 2, 3}}, worst deviation {worst:.1e}"))
}

fn annulus_profile() -> Outcome {
    let mut notes = Vec::new();
    for phi in ["t", "t^2", "t + t^3"] {
        let spec = product(phi, "t^2", "1");
        let (r, a, u_star) = (2.0, 0.5, 3.0);
        let b = build_annulus_profile(&spec, r, a, u_star).map_err(|e| e.to_string())?;
        let lo = b.alpha(r / 2.0).map_err(|e| e.to_string())?;
        let hi = b.alpha(r).map_err(|e| e.to_string())?;
        ensure((lo - a).abs() <= 1e-9 && (hi - u_star).abs() <= 1e-9, || format!("phi = {phi}: z = ({lo}, {hi})"))?;
        let grid = radial_residual(&b, &spec, Sign::SuperLE, &b.audit_grid(200)).map_err(|e| e.to_string())?;
        let worst = grid.points.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        ensure(worst <= 1e-8, || format!("phi = {phi}: |residual| {worst:.2e}"))?;
        notes.push(format!("{phi}: {worst:.0e}"));
    }
    Ok(format!("worst |residual| {}", notes.join(", ")))
}

fn tail_asymptotic() -> Outcome {
    let (p, mu) = (2.0, 0.3);
    let spec = product("t", "t^2", "1 + 0.5*t^0.3");
    let ts = log_grid(1e3, 1e6, 31);
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> =
        ts.iter().map(|&t| big_k(&spec, t).map(f64::ln)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    ensure((slope - (p - mu)).abs() <= 0.05, || format!("fitted exponent {slope:.4}, expected {}", p - mu))?;
    Ok(format!("fitted exponent {slope:.4} vs {}", p - mu))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 12] = [
        ("power-law KO oracle", ko_power_law_oracle),
        ("geometry suite", geometry_suite),
        ("radialization cross-check", radialization_cross_check),
        ("supersolution certificate", supersolution_certificate),
        ("bounded variant", bounded_variant),
        ("gradient variant", gradient_variant),
        ("subsolution certificate", subsolution_certificate),
        ("sigma scaling", sigma_scaling),
        ("hat equivalence", ko_hat_equivalence),
        ("K homogeneity", k_homogeneity),
        ("annulus profile", annulus_profile),
        ("tail asymptotic", tail_asymptotic),
    ];
    // Written to the stderr handle directly so the lines survive test output capture.
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => writeln!(err, "[PASS] {:>2} {name}: {detail} ({took:.2?})", i + 1).unwrap(),
            Err(why) => {
                writeln!(err, "[FAIL] {:>2} {name}: {why} ({took:.2?})", i + 1).unwrap();
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
