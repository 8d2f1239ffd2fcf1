//! Acceptance checks, one line per criterion.
//!
//! Reference values come from oracles written here (nalgebra eigensolvers,
//! closed forms, a separate secular-equation bisection), not from the library.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng as _;

use gapbound::bound;
use gapbound::dynamics;
use gapbound::ensembles::{self, DegreeExpr, DegreeRule, EdgeProbability, EnsembleSpec, Family, GRule, ScanOptions};
use gapbound::generator::{build_generator, check_detailed_balance, symmetrize, GeneratorMatrix, ProbabilityVector, Rate};
use gapbound::rng;
use gapbound::spectra::{self, GroundSpace, HermitianOperator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn random_symmetric(m: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let x = rng.random_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    a
}

fn random_metropolis(m: usize, seed: u64) -> GeneratorMatrix {
    let base = ensembles::er_connected(m, 0.5, seed).unwrap();
    let energies = ensembles::random_energies(m, 2.0, rng::derive_seed(seed, 1, 0));
    ensembles::metropolis_chain(&energies, 1.0, &base).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &m in &[8usize, 32, 64] {
        for r in 0..50u64 {
            let mut rng = rng::stream(101, m as u64 * 100 + r);
            let a = random_symmetric(m, &mut rng);
            let ev = sym_eigenvalues(&a);
            let shifted = &a - DMatrix::identity(m, m) * ev[0];
            let mu2 = ev[1] - ev[0];
            let h = HermitianOperator::real(shifted).unwrap();
            let gs = spectra::default_ground_space(&spectra::eigendecompose(&h).unwrap()).unwrap();
            let scale = h.norm().max(1.0);
            for ratio in [0.1, 0.5, 0.9, 1.1, 2.0, 10.0] {
                let lambda = ratio * mu2;
                let f = spectra::deflate(&h, &gs, &vec![lambda; gs.k]).unwrap();
                let got = sym_eigenvalues(f.operator.re())[0];
                worst = worst.max((got - lambda.min(mu2)).abs() / scale);
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-9, format!("{cases} cases, max |GSL[F] - min(λ,μ₂)|/max(1,‖H‖) = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for m in 2..=64usize {
        let gs = GroundSpace::uniform(m);
        for alpha in [-3.0f64, -1.0, -0.5, 0.5, 1.0, 3.0] {
            let got = bound::gsl_alpha_u(alpha, &gs).unwrap().gsl;
            let expect = if alpha < 0.0 { -alpha.abs() * (m as f64 - 1.0) } else { -alpha.abs() };
            worst = worst.max((got - expect).abs() / m as f64);
            cases += 1;
        }
    }
    outcome(worst <= 1e-10, format!("{cases} cases, max error/M = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut specs = Vec::new();
    let sizes: Vec<usize> = (8..=40).step_by(4).collect();
    let mut complete = EnsembleSpec::new(Family::Complete, sizes.clone(), 3);
    complete.g = GRule::Value(0.9);
    specs.push(complete);
    for (p, g) in [(0.5, 0.9), (0.8, 0.9), (0.3, 0.5)] {
        let mut er = EnsembleSpec::new(Family::ErConnected, sizes.clone(), 5);
        er.p = Some(EdgeProbability::Constant(p));
        er.g = GRule::Value(g);
        er.replicas = 12;
        specs.push(er);
    }
    for (base, beta) in [(Family::Complete, 0.2), (Family::Complete, 1.0), (Family::ErConnected, 0.5)] {
        let mut metro = EnsembleSpec::new(Family::Metropolis, sizes.clone(), 7);
        metro.base = base;
        metro.beta = beta;
        metro.p = Some(EdgeProbability::Constant(0.6));
        metro.g = GRule::Value(0.9);
        metro.replicas = 8;
        specs.push(metro);
    }
    let mut rr = EnsembleSpec::new(Family::RandomRegular, vec![16, 32, 64, 128], 9);
    rr.degree = Some(DegreeRule::Constant(6));
    rr.replicas = 10;
    specs.push(rr);
    let mut cyc = EnsembleSpec::new(Family::Cycle, vec![16, 32, 64], 1);
    cyc.alpha = Some(0.5);
    cyc.g = GRule::Alpha(0.25);
    specs.push(cyc);

    let (mut total, mut holding, mut exceptions, mut surrogate_only) = (0, 0, 0, 0);
    for spec in &specs {
        for row in ensembles::scan(spec, ScanOptions::default()).unwrap() {
            let Ok(r) = row.report else { continue };
            total += 1;
            let bound_ok = r.mu2 >= r.min_v - 1e-9 * r.operator_norm;
            if r.profile.holds() {
                holding += 1;
                if !bound_ok {
                    exceptions += 1;
                }
            } else if r.profile.surrogates_hold() && !bound_ok {
                surrogate_only += 1;
            }
        }
    }
    outcome(
        total >= 500 && holding > 0 && exceptions == 0,
        format!(
            "{total} instances, {holding} with hypotheses holding, {exceptions} exceptions; \
             {surrogate_only} more pass σ/ergodicity/E₁ alone but fail the Weyl regime certificate and the bound"
        ),
    )
}

fn criterion_4() -> Outcome {
    let spec = EnsembleSpec::new(Family::Complete, vec![8, 16, 32, 64], 1);
    let rows = ensembles::scan(&spec, ScanOptions::default()).unwrap();
    let quoted = [1.14286, 1.06667, 1.03226, 1.01587];
    let mut worst = 0.0f64;
    let mut quoted_ok = true;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio().unwrap()).collect();
    for ((row, &ratio), q) in rows.iter().zip(&ratios).zip(quoted) {
        let m = row.m as f64;
        worst = worst.max((ratio - m / (m - 1.0)).abs());
        quoted_ok &= (ratio - q).abs() < 5e-6;
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]) && ratios.iter().all(|&r| r > 1.0);
    outcome(
        worst <= 1e-9 && quoted_ok && decreasing,
        format!("ratios {ratios:.5?}, max error vs M/(M-1) = {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let sizes = vec![64usize, 256, 1024, 4096];
    let mut spec = EnsembleSpec::new(Family::RandomRegular, sizes.clone(), 2024);
    spec.degree = Some(DegreeRule::Named(DegreeExpr::CeilLn2));
    spec.replicas = 5;
    let rows = ensembles::scan(&spec, ScanOptions::default()).unwrap();
    let mut means = Vec::new();
    let mut in_band = true;
    let mut parts = Vec::new();
    for &m in &sizes {
        let k = (m as f64).ln().powi(2).ceil();
        let vals: Vec<f64> = rows.iter().filter(|r| r.m == m).map(|r| r.ratio().unwrap()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let lo = 1.0 - 2.0 / (k - 1.0).sqrt() - 0.15;
        in_band &= vals.len() == 5 && mean >= lo && mean <= 1.15;
        parts.push(format!("M={m} k={k} mean {mean:.4} band [{lo:.4}, 1.15]"));
        means.push(mean);
    }
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    outcome(monotone && in_band, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for r in 0..100u64 {
        let m = 2 + (r as usize * 13) % 63;
        let l = random_metropolis(m, rng::derive_seed(606, r, 0));
        let p = check_detailed_balance(&l, None).unwrap();
        let ls = symmetrize(&l, &p).unwrap();
        let mut direct: Vec<f64> = l.matrix().complex_eigenvalues().iter().map(|z| z.re).collect();
        direct.sort_by(f64::total_cmp);
        let sym = spectra::eigenvalues(&ls).unwrap();
        let err = sym.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / l.max_abs());
    }
    outcome(worst <= 1e-10, format!("100 chains, max spectral mismatch/max|L| = {worst:.2e}"))
}

fn fit_error(l: &GeneratorMatrix, p0: &ProbabilityVector, exact: f64) -> f64 {
    let fit = dynamics::relaxation_rate(l, p0).unwrap();
    (fit.rate - exact).abs() / exact
}

/// Relative error of `−d ln d/dt` against `μ₂` where `d(t)` first drops below 1e-8.
fn floor_slope_error(l: &GeneratorMatrix, p0: &ProbabilityVector, mu2: f64) -> f64 {
    let eq = gapbound::generator::stationary_vector(l).unwrap();
    let d = |t: f64| {
        let p = dynamics::propagate(l, p0.as_slice(), t);
        p.iter().zip(&eq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut t = 1.0 / mu2;
    while d(t) > 1e-8 {
        t += 0.05 / mu2;
    }
    let h = 1e-3 / mu2;
    let slope = -(d(t + h).ln() - d(t - h).ln()) / (2.0 * h);
    (slope - mu2).abs() / mu2
}

fn criterion_7() -> Outcome {
    let two = build_generator(2, &[Rate::new(0, 1, 0.3), Rate::new(1, 0, 0.7)]).unwrap();
    let e_two = fit_error(&two, &ProbabilityVector::delta(2, 0).unwrap(), 1.0);
    let c8 = ensembles::cycle(8).unwrap();
    let e_c8 = fit_error(&c8, &ProbabilityVector::delta(8, 0).unwrap(), 2.0 - 2f64.sqrt());

    let mut chains = 0;
    let mut within = 0;
    let mut worst_chain = (0.0f64, 0.0f64, 0.0f64);
    let mut seed = 0u64;
    while chains < 20 {
        seed += 1;
        let m = 4 + (seed as usize % 12);
        let l = random_metropolis(m, rng::derive_seed(707, seed, 0));
        let p = check_detailed_balance(&l, None).unwrap();
        let ev = sym_eigenvalues(symmetrize(&l, &p).unwrap().re());
        let (mu2, mu3) = (ev[1] - ev[0], ev[2] - ev[0]);
        if mu3 / mu2 < 1.2 {
            continue;
        }
        let mut r = rng::seeded(rng::derive_seed(708, seed, 0));
        let w: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
        let p0 = ProbabilityVector::normalized(w).unwrap();
        let err = fit_error(&l, &p0, mu2);
        within += usize::from(err <= 0.02);
        if err > worst_chain.0 {
            // Local log-slope of d(t) at the 1e-8 floor: the best any fit inside the window can do.
            worst_chain = (err, mu3 / mu2, floor_slope_error(&l, &p0, mu2));
        }
        chains += 1;
    }

    let mut worst_z = 0.0f64;
    let reps = 200_000u64;
    let k4 = ensembles::complete(4).unwrap();
    let metro = random_metropolis(6, 42);
    for (l, t, start) in [(&k4, 0.5, 0usize), (&two, 1.0, 0), (&metro, 0.7, 2)] {
        let hist = dynamics::jump_process_sample(l, start, t, reps, 1).unwrap();
        let expect = dynamics::propagate(l, ProbabilityVector::delta(l.size(), start).unwrap().as_slice(), t);
        for (f, p) in hist.frequencies().iter().zip(&expect) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            worst_z = worst_z.max((f - p).abs() / se);
        }
    }
    let pass = e_two <= 0.02 && e_c8 <= 0.02 && within == chains && worst_z <= 4.0;
    outcome(
        pass,
        format!(
            "relative fit error: two-state {e_two:.2e}, C8 {e_c8:.2e}; Metropolis {within}/{chains} within 2%, \
             worst {:.2e} (μ₃/μ₂ = {:.3}, local slope at d = 1e-8 off by {:.2e}); jump histograms max {worst_z:.2} SE",
            worst_chain.0, worst_chain.1, worst_chain.2
        ),
    )
}

/// Smallest root of `Σ w/(μ + w) = 1`, bracketed in `(−w₁, −w₂)`.
fn secular_oracle(w: &[f64]) -> f64 {
    let mut s = w.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let f = |mu: f64| w.iter().map(|x| x / (mu + x)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (-s[0], -s[1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // f falls from +∞ just above −w₁ to −∞ just below −w₂.
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_8() -> Outcome {
    let mut worst_dense = 0.0f64;
    let mut worst_lib = 0.0f64;
    let mut compared = 0;
    for r in 0..100u64 {
        let mut rng = rng::stream(808, r);
        let m = rng.random_range(2..=32usize);
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gs = GroundSpace::from_vectors(0.0, vec![v.iter().map(|x| (x / norm).into()).collect()]).unwrap();
        let w: Vec<f64> = gs.abs_u_sq(0);
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            continue;
        }
        let u = DMatrix::from_fn(m, m, |a, b| if a == b { 0.0 } else { (w[a] * w[b]).sqrt() });
        let dense = -sym_eigenvalues(&u)[0];
        let secular = -secular_oracle(&w);
        let lib = bound::s_and_s_star(&gs).unwrap().s_star;
        worst_dense = worst_dense.max((dense - secular).abs());
        worst_lib = worst_lib.max((lib - secular).abs());
        compared += 1;
    }
    let uniform = bound::s_and_s_star(&GroundSpace::uniform(17)).unwrap();
    let exact = uniform.s == 1.0 && uniform.s_star == 1.0;
    outcome(
        worst_dense <= 1e-10 && worst_lib <= 1e-10 && exact && compared > 0,
        format!(
            "{compared} ground spaces, max |−λ_min(U) − secular| = {worst_lib:.2e} (oracle {worst_dense:.2e}); \
             uniform s = {}, s* = {}",
            uniform.s, uniform.s_star
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut worst = f64::INFINITY;
    for r in 0..200u64 {
        let mut rng = rng::stream(909, r);
        let m = rng.random_range(2..=32usize);
        let a = random_symmetric(m, &mut rng);
        let lambda = rng.random_range(0.0..(3.0 * m as f64));
        let h = HermitianOperator::real(a).unwrap();
        let gs = spectra::default_ground_space(&spectra::eigendecompose(&h).unwrap()).unwrap();
        let w = bound::weyl_check(&bound::decompose(&h), &gs, lambda).unwrap();
        worst = worst.min(w.slack / h.norm());
    }
    outcome(worst >= -1e-10, format!("200 pairs, min slack/‖H‖ = {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"family":"metropolis","base":"er-connected","p":0.5,"sizes":[8,12,16],"replicas":3,"beta":1.5,"seed":11}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_gapbound"))
            .args(["scan", spec.to_str().unwrap(), "--jobs", "2", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        (status.status.success(), std::fs::read(out).unwrap_or_default())
    };
    let (ok_a, a) = run("a.csv");
    let (ok_b, b) = run("b.csv");
    outcome(ok_a && ok_b && !a.is_empty() && a == b, format!("two runs, {} bytes each, identical: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("deflation step identity", Duration::from_secs(30), criterion_1),
        ("U2 exactness", Duration::from_secs(5), criterion_2),
        ("falsification trigger", Duration::from_secs(300), criterion_3),
        ("tight complete family", Duration::from_secs(60), criterion_4),
        ("random-regular trend", Duration::from_secs(600), criterion_5),
        ("isospectral symmetrization", Duration::from_secs(10), criterion_6),
        ("dynamics consistency", Duration::from_secs(120), criterion_7),
        ("s* consistency", Duration::from_secs(5), criterion_8),
        ("Weyl slack", Duration::from_secs(30), criterion_9),
        ("scan determinism", Duration::from_secs(60), criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2} {name}: {} ({:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
