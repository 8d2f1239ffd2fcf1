//! Property suites behind `gapbound verify`.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::Deserialize;
use serde_json::{json, Value};

use gapbound::bound::{self, BoundConfig, Verdict};
use gapbound::dynamics;
use gapbound::ensembles::{self, DegreeExpr, DegreeRule, EdgeProbability, EnsembleSpec, Family, GRule, ScanOptions};
use gapbound::generator::{check_detailed_balance, symmetrize, GeneratorMatrix, ProbabilityVector};
use gapbound::rng;
use gapbound::spectra::{self, GroundSpace, HermitianOperator};

pub struct Failure {
    pub code: u8,
    pub msg: String,
}

const BUILTIN_VECTORS: &str = r#"{
  "complete_ratio": [[8, 1.1428571428571428], [16, 1.0666666666666667], [32, 1.032258064516129], [64, 1.0158730158730158]],
  "two_state_p1_at_1": 0.8103638323514327,
  "k4_p1_at_half": 0.35150146242745955,
  "two_state_s_star": 0.9165151389911680
}"#;

#[derive(Deserialize)]
struct Vectors {
    complete_ratio: Vec<(usize, f64)>,
    two_state_p1_at_1: f64,
    k4_p1_at_half: f64,
    two_state_s_star: f64,
}

/// Outcome of one suite: case count and the first counterexample.
struct Suite {
    name: &'static str,
    passed: usize,
    total: usize,
    counterexample: Option<Value>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, passed: 0, total: 0, counterexample: None }
    }

    fn check(&mut self, ok: bool, case: impl FnOnce() -> Value) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.counterexample.is_none() {
            self.counterexample = Some(case());
        }
    }

    fn error(&mut self, e: impl std::fmt::Display, case: Value) {
        self.check(false, || json!({ "case": case, "error": e.to_string() }));
    }
}

fn random_symmetric(m: usize, rng: &mut rng::Rng) -> HermitianOperator {
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let x = rng.random_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    HermitianOperator::real(a).expect("symmetric by construction")
}

fn random_metropolis(m: usize, seed: u64) -> gapbound::Result<GeneratorMatrix> {
    let base = ensembles::er_connected(m, 0.4, seed)?;
    let energies = ensembles::random_energies(m, 2.0, seed ^ 0x5a5a);
    ensembles::metropolis_chain(&energies, 1.0, &base)
}

fn vectors_suite(text: &str) -> Result<Suite, Failure> {
    let v: Vectors =
        serde_json::from_str(text).map_err(|e| Failure { code: 2, msg: format!("reference vectors: {e}") })?;
    let mut s = Suite::new("reference-vectors");
    for &(m, expect) in &v.complete_ratio {
        let got = ensembles::complete(m)
            .and_then(|l| bound::rw_bound(&l))
            .map(|r| r.mu2 / (m as f64 - 1.0));
        s.check(got.as_ref().is_ok_and(|g| (g - expect).abs() <= 1e-9), || {
            json!({ "quantity": "complete_ratio", "M": m, "expected": expect, "got": got.ok() })
        });
    }
    let two = gapbound::generator::build_generator(
        2,
        &[gapbound::generator::Rate::new(0, 1, 0.3), gapbound::generator::Rate::new(1, 0, 0.7)],
    )
    .expect("valid");
    let p = dynamics::propagate(&two, &[1.0, 0.0], 1.0)[0];
    s.check((p - v.two_state_p1_at_1).abs() <= 1e-12, || {
        json!({ "quantity": "two_state_p1_at_1", "expected": v.two_state_p1_at_1, "got": p })
    });
    let k4 = ensembles::complete(4).expect("valid");
    let p = dynamics::propagate(&k4, &[1.0, 0.0, 0.0, 0.0], 0.5)[0];
    s.check((p - v.k4_p1_at_half).abs() <= 1e-12, || {
        json!({ "quantity": "k4_p1_at_half", "expected": v.k4_p1_at_half, "got": p })
    });
    let peq = check_detailed_balance(&two, None).expect("balanced");
    let star = symmetrize(&two, &peq)
        .and_then(|h| spectra::eigendecompose(&h))
        .and_then(|sp| spectra::default_ground_space(&sp))
        .and_then(|gs| bound::s_and_s_star(&gs))
        .map(|x| x.s_star);
    s.check(star.as_ref().is_ok_and(|x| (x - v.two_state_s_star).abs() <= 1e-12), || {
        json!({ "quantity": "two_state_s_star", "expected": v.two_state_s_star, "got": star.ok() })
    });
    Ok(s)
}

fn t4_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("t4-identity");
    let sizes: &[usize] = if full { &[8, 32, 64] } else { &[8, 32] };
    let per = if full { 50 } else { 10 };
    for &m in sizes {
        for r in 0..per {
            let mut rng = rng::stream(seed, (m * 1000 + r) as u64);
            let h = random_symmetric(m, &mut rng);
            let outcome = (|| {
                let spec = spectra::eigendecompose(&h)?;
                let gs = spectra::default_ground_space(&spec)?;
                let mu2 = spectra::gap(&spec)?;
                let base = h.shifted(-gs.e1);
                let centered = GroundSpace { e1: 0.0, ..gs.clone() };
                let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
                for ratio in [0.1, 0.5, 0.9, 1.1, 2.0, 10.0] {
                    let lambda = ratio * mu2;
                    let f = spectra::deflate(&base, &centered, &vec![lambda; gs.k])?;
                    let got = spectra::gsl(&f.operator)?;
                    let err = (got - lambda.min(mu2)).abs();
                    if err > worst.0 {
                        worst = (err, ratio, got);
                    }
                }
                Ok::<_, gapbound::Error>((worst, h.norm().max(1.0)))
            })();
            match outcome {
                Ok(((err, ratio, got), scale)) => s.check(err <= 1e-9 * scale, || {
                    json!({ "M": m, "replica": r, "lambda_over_mu2": ratio, "gsl": got, "error": err })
                }),
                Err(e) => s.error(e, json!({ "M": m, "replica": r })),
            }
        }
    }
    s
}

fn u2_suite(full: bool) -> Suite {
    let mut s = Suite::new("u2-exactness");
    let top = if full { 64 } else { 32 };
    for m in 2..=top {
        let gs = GroundSpace::uniform(m);
        for alpha in [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0] {
            match bound::gsl_alpha_u(alpha, &gs) {
                Ok(a) => {
                    let expect = a.uniform_formula.unwrap_or(f64::NAN);
                    s.check((a.gsl - expect).abs() <= 1e-10 * m as f64, || {
                        json!({ "M": m, "alpha": alpha, "gsl": a.gsl, "formula": expect })
                    })
                }
                Err(e) => s.error(e, json!({ "M": m, "alpha": alpha })),
            }
        }
    }
    s
}

fn weyl_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("weyl-slack");
    let n = if full { 200 } else { 50 };
    for r in 0..n {
        let mut rng = rng::stream(seed ^ 0x3e11, r as u64);
        let m = rng.random_range(2..=24);
        let h = random_symmetric(m, &mut rng);
        let lambda = rng.random_range(0.0..(4.0 * m as f64));
        let outcome = (|| {
            let gs = spectra::default_ground_space(&spectra::eigendecompose(&h)?)?;
            bound::weyl_check(&bound::decompose(&h), &gs, lambda)
        })();
        match outcome {
            Ok(w) => s.check(w.holds, || json!({ "replica": r, "M": m, "lambda": lambda, "slack": w.slack })),
            Err(e) => s.error(e, json!({ "replica": r, "M": m })),
        }
    }
    s
}

fn similarity_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("similarity");
    let n = if full { 100 } else { 20 };
    for r in 0..n {
        let m = 2 + (r * 7) % if full { 63 } else { 31 };
        let chain_seed = rng::derive_seed(seed, 6, r as u64);
        let outcome = (|| {
            let l = random_metropolis(m, chain_seed)?;
            let p = check_detailed_balance(&l, None)?;
            let sym = spectra::eigenvalues(&symmetrize(&l, &p)?)?;
            let mut direct: Vec<f64> = l.matrix().complex_eigenvalues().iter().map(|z| z.re).collect();
            direct.sort_by(f64::total_cmp);
            let err = sym.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok::<_, gapbound::Error>((err, l.max_abs()))
        })();
        match outcome {
            Ok((err, scale)) => s.check(err <= 1e-10 * scale, || json!({ "M": m, "seed": chain_seed, "error": err })),
            Err(e) => s.error(e, json!({ "M": m, "seed": chain_seed })),
        }
    }
    s
}

fn conservation_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("conservation");
    let n = if full { 50 } else { 10 };
    let times: Vec<f64> = (0..=20).map(|i| 0.05 * 1.5f64.powi(i)).collect();
    for r in 0..n {
        let m = 3 + r % 14;
        let chain_seed = rng::derive_seed(seed, 7, r as u64);
        let outcome = (|| {
            let l = random_metropolis(m, chain_seed)?;
            let p0 = ProbabilityVector::delta(m, r % m)?;
            dynamics::evolve(&l, &p0, &times)
        })();
        match outcome {
            Ok(tr) => {
                let drift = tr.states.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
                let low = tr.states.iter().flatten().copied().fold(f64::INFINITY, f64::min);
                s.check(drift <= 1e-10 && low >= -1e-12, || {
                    json!({ "M": m, "seed": chain_seed, "sum_drift": drift, "min_entry": low })
                })
            }
            Err(e) => s.error(e, json!({ "M": m, "seed": chain_seed })),
        }
    }
    s
}

fn s_star_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("s-star");
    let n = if full { 100 } else { 30 };
    for r in 0..n {
        let mut rng = rng::stream(seed ^ 0x5575, r as u64);
        let m = rng.random_range(2..=32);
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vec = v.iter().map(|x| (x / norm).into()).collect();
        let outcome = GroundSpace::from_vectors(0.0, vec![vec]).and_then(|gs| bound::s_and_s_star(&gs));
        match outcome {
            Ok(x) if x.distinct => s.check((x.s_star - x.secular).abs() <= 1e-10, || {
                json!({ "M": m, "replica": r, "dense": x.s_star, "secular": x.secular })
            }),
            Ok(_) => {}
            Err(e) => s.error(e, json!({ "M": m, "replica": r })),
        }
    }
    s
}

fn falsification_suite(full: bool, seed: u64) -> Suite {
    let mut s = Suite::new("falsification");
    let small_sizes = vec![8, 12, 16, 24, 32];
    let mut specs = Vec::new();
    let mut complete = EnsembleSpec::new(Family::Complete, small_sizes.clone(), seed);
    complete.g = GRule::Value(0.9);
    specs.push(complete);
    let mut er = EnsembleSpec::new(Family::ErConnected, small_sizes.clone(), seed);
    er.p = Some(EdgeProbability::Constant(0.6));
    er.replicas = 3;
    specs.push(er);
    let mut metro = EnsembleSpec::new(Family::Metropolis, small_sizes.clone(), seed);
    metro.base = Family::Complete;
    metro.beta = 0.5;
    metro.replicas = 3;
    metro.g = GRule::Value(0.9);
    specs.push(metro);
    if full {
        let mut rr = EnsembleSpec::new(Family::RandomRegular, vec![64, 256, 1024, 4096], seed);
        rr.degree = Some(DegreeRule::Named(DegreeExpr::CeilLn2));
        specs.push(rr);
    }
    for spec in &specs {
        let rows = match ensembles::scan(spec, ScanOptions::default()) {
            Ok(r) => r,
            Err(e) => {
                s.error(e, json!({ "family": spec.family.name() }));
                continue;
            }
        };
        for row in rows {
            match &row.report {
                Ok(r) => {
                    let tol = 1e-9 * r.operator_norm;
                    let ok = !r.profile.holds() || r.mu2 >= r.min_v - tol;
                    s.check(ok && r.verdict != Verdict::BoundViolatedHypothesesHold, || {
                        json!({ "family": row.family.name(), "M": row.m, "replica": row.replica, "report": r })
                    })
                }
                Err(e) => s.error(e, json!({ "family": row.family.name(), "M": row.m, "replica": row.replica })),
            }
        }
    }
    // Sanity: the tight family satisfies every hypothesis at moderate size.
    let h = ensembles::complete(16).and_then(|l| l.to_operator()).map(|h| h.scaled(1.0 / 15.0));
    let verdict = h.and_then(|h| bound::bound_verdict(&h, &BoundConfig::new(0.5))).map(|r| r.verdict);
    s.check(matches!(verdict, Ok(Verdict::HypothesesHoldAndBoundHolds)), || {
        json!({ "family": "complete", "M": 16, "verdict": verdict.map(|v| v.to_string()).ok() })
    });
    s
}

pub fn run(full: bool, vectors: &str, seed: u64) -> Result<(), Failure> {
    let text = if vectors == "builtin" {
        BUILTIN_VECTORS.to_string()
    } else {
        std::fs::read_to_string(vectors).map_err(|e| Failure { code: 2, msg: format!("{vectors}: {e}") })?
    };
    let mut suites = vec![vectors_suite(&text)?];
    suites.push(t4_suite(full, seed));
    suites.push(u2_suite(full));
    suites.push(weyl_suite(full, seed));
    suites.push(similarity_suite(full, seed));
    suites.push(conservation_suite(full, seed));
    suites.push(s_star_suite(full, seed));
    suites.push(falsification_suite(full, seed));

    let mut first = None;
    for suite in &suites {
        println!("{}: {}/{} passed", suite.name, suite.passed, suite.total);
        if first.is_none() {
            if let Some(c) = &suite.counterexample {
                first = Some(json!({ "suite": suite.name, "counterexample": c }));
            }
        }
    }
    match first {
        None => Ok(()),
        Some(c) => {
            println!("{}", serde_json::to_string_pretty(&c).expect("json"));
            Err(Failure { code: 1, msg: format!("suite {} failed", c["suite"].as_str().unwrap_or("?")) })
        }
    }
}
