//! Worked cases checked against closed forms and reference solvers.

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use rand::Rng as _;

use gapbound::bound::{self, BoundConfig, Verdict};
use gapbound::dynamics;
use gapbound::ensembles::{self, EnsembleSpec, Family, ScanOptions};
use gapbound::generator::{build_generator, check_detailed_balance, symmetrize, ProbabilityVector, Rate};
use gapbound::io;
use gapbound::rng;
use gapbound::spectra::{self, Vectors};

#[test]
fn cycle_fit_recovers_circulant_gap() {
    let l = ensembles::cycle(8).unwrap();
    let mut r = rng::seeded(5);
    let w: Vec<f64> = (0..8).map(|_| 1.0 + 0.2 * (r.random::<f64>() - 0.5)).collect();
    let fit = dynamics::relaxation_rate(&l, &ProbabilityVector::normalized(w).unwrap()).unwrap();
    let exact = 2.0 - 2f64.sqrt();
    assert!((fit.rate - exact).abs() / exact < 0.02, "{fit:?}");
    assert_abs_diff_eq!(fit.spectral_mu2.unwrap(), exact, epsilon = 1e-12);
}

#[test]
fn jump_sampler_matches_equilibrium_and_evolve() {
    let two = build_generator(2, &[Rate::new(0, 1, 0.3), Rate::new(1, 0, 0.7)]).unwrap();
    let reps = 200_000;
    let h = dynamics::jump_process_sample(&two, 0, 20.0, reps, 1).unwrap();
    let se = (0.7f64 * 0.3 / reps as f64).sqrt();
    assert!((h.frequencies()[0] - 0.7).abs() <= 3.0 * se, "{:?}", h.frequencies());

    let k4 = ensembles::complete(4).unwrap();
    let h = dynamics::jump_process_sample(&k4, 0, 0.5, reps, 1).unwrap();
    let p = 0.25 + 0.75 * (-2f64).exp();
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!((h.frequencies()[0] - p).abs() <= 3.0 * se);
}

#[test]
fn metropolis_six_state_is_isospectral() {
    let base = ensembles::er_connected(6, 0.6, 42).unwrap();
    let l = ensembles::metropolis_chain(&ensembles::random_energies(6, 1.0, 42), 1.0, &base).unwrap();
    let p = check_detailed_balance(&l, None).unwrap();
    let sym = spectra::eigenvalues(&symmetrize(&l, &p).unwrap()).unwrap();
    let mut direct: Vec<f64> = l.matrix().complex_eigenvalues().iter().map(|z| z.re).collect();
    direct.sort_by(f64::total_cmp);
    for (a, b) in sym.iter().zip(&direct) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }
}

#[test]
fn ground_only_and_full_paths_share_eigenvalues() {
    let mut r = rng::seeded(3);
    let m = 40;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let x = r.random_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    let h = spectra::HermitianOperator::real(a).unwrap();
    let full = spectra::eigendecompose_with(&h, Vectors::All).unwrap();
    let ground = spectra::eigendecompose_with(&h, Vectors::Ground).unwrap();
    let none = spectra::eigendecompose_with(&h, Vectors::None).unwrap();
    assert_eq!(full.eigenvalues, ground.eigenvalues);
    assert_eq!(full.eigenvalues, none.eigenvalues);
    let g = &ground.vectors[0];
    let f = &full.vectors[0];
    let overlap: f64 = g.iter().zip(f).map(|(x, y)| (x.conj() * y).re).sum();
    assert_abs_diff_eq!(overlap.abs(), 1.0, epsilon = 1e-10);
}

#[test]
fn scaled_cycle_is_labelled_hypotheses_fail() {
    let m = 64;
    let h = ensembles::cycle(m).unwrap().to_operator().unwrap().scaled(1.0 / (m as f64).ln());
    let mu2 = (2.0 - 2.0 * (2.0 * PI / m as f64).cos()) / (m as f64).ln();
    for g in [0.3, 0.5, 0.9] {
        let r = bound::bound_verdict(&h, &BoundConfig::new(g)).unwrap();
        assert_abs_diff_eq!(r.mu2, mu2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.min_v, 2.0 / 64f64.ln(), epsilon = 1e-14);
        assert_eq!(r.verdict, Verdict::HypothesesFail);
    }
}

#[test]
fn complete_family_is_tight_and_decreasing() {
    let spec = EnsembleSpec::new(Family::Complete, vec![8, 16, 32, 64, 128], 1);
    let rows = ensembles::scan(&spec, ScanOptions::default()).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio().unwrap()).collect();
    for (row, ratio) in rows.iter().zip(&ratios) {
        let m = row.m as f64;
        assert_abs_diff_eq!(*ratio, m / (m - 1.0), epsilon = 1e-9);
        assert_eq!(row.verdict(), Some(Verdict::HypothesesHoldAndBoundHolds));
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0] && w[1] > 1.0));
}

#[test]
fn star_walk_ratio() {
    let l = ensembles::star(5).unwrap();
    let rw = bound::rw_bound(&l).unwrap();
    assert_eq!(rw.min_degree, 1.0);
    assert_abs_diff_eq!(rw.mu2, 1.0, epsilon = 1e-12);
}

#[test]
fn generated_instances_round_trip_through_files() {
    let l = ensembles::random_regular(20, 4, 8).unwrap();
    let back = io::parse_edge_list(&io::write_edge_list(&l)).unwrap();
    assert_eq!(back, l);
    let m = l.matrix().clone();
    assert_eq!(io::parse_matrix(&io::write_matrix(&m)).unwrap(), m);
}
