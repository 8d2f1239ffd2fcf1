//! Master-equation dynamics: `p(t) = exp(−L·t)·p₀`, relaxation-rate fits and a
//! continuous-time jump-process sampler used as a stochastic cross-check.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use crate::generator::{check_detailed_balance, check_irreducible, stationary_vector, symmetrize, GeneratorMatrix, ProbabilityVector};
use crate::rng;
use crate::spectra::{self, HermitianOperator};
use crate::{Error, Result};

pub mod expm {
    //! Scaling-and-squaring matrix exponential with diagonal Padé approximants
    //! of degree 3, 5, 7, 9 or 13, chosen from the 1-norm.

    use nalgebra::DMatrix;

    const THETA: [(usize, f64); 4] = [
        (3, 1.495_585_217_958_292e-2),
        (5, 2.539_398_330_063_230e-1),
        (7, 9.504_178_996_162_932e-1),
        (9, 2.097_847_961_257_068e0),
    ];
    const THETA_13: f64 = 5.371_920_351_148_152e0;

    fn coefficients(m: usize) -> &'static [f64] {
        match m {
            3 => &[120.0, 60.0, 12.0, 1.0],
            5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
            7 => &[17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0],
            9 => &[
                17_643_225_600.0,
                8_821_612_800.0,
                2_075_673_600.0,
                302_702_400.0,
                30_270_240.0,
                2_162_160.0,
                110_880.0,
                3960.0,
                90.0,
                1.0,
            ],
            _ => &[
                64_764_752_532_480_000.0,
                32_382_376_266_240_000.0,
                7_771_770_303_897_600.0,
                1_187_353_796_428_800.0,
                129_060_195_264_000.0,
                10_559_470_521_600.0,
                670_442_572_800.0,
                33_522_128_640.0,
                1_323_241_920.0,
                40_840_800.0,
                960_960.0,
                16_380.0,
                182.0,
                1.0,
            ],
        }
    }

    pub fn one_norm(a: &DMatrix<f64>) -> f64 {
        a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    fn pade(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let b = coefficients(m);
        let id = DMatrix::<f64>::identity(n, n);
        let a2 = a * a;
        let (u, v) = if m == 13 {
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
            let u = a * inner_u;
            let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
            (u, v)
        } else {
            let mut u_acc = &id * b[1];
            let mut v_acc = &id * b[0];
            let mut pow = id.clone();
            for j in 1..=m / 2 {
                pow = &pow * &a2;
                u_acc += &pow * b[2 * j + 1];
                v_acc += &pow * b[2 * j];
            }
            (a * u_acc, v_acc)
        };
        let num = &v + &u;
        let den = &v - &u;
        den.lu().solve(&num).expect("Padé denominator is nonsingular for scaled arguments")
    }

    /// `exp(A)`.
    pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let norm = one_norm(a);
        for &(m, theta) in &THETA {
            if norm <= theta {
                return pade(a, m);
            }
        }
        let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
        let scaled = a / 2f64.powi(s);
        let mut x = pade(&scaled, 13);
        for _ in 0..s {
            x = &x * &x;
        }
        x
    }

}

/// `p(t)` at each sample time with its distances to equilibrium.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub p_eq: Option<Vec<f64>>,
    /// `‖p(t) − p_eq‖₂`, empty when there is no unique equilibrium.
    pub d2: Vec<f64>,
    /// `½‖p(t) − p_eq‖₁`.
    pub d_tv: Vec<f64>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let m = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=m {
            out.push_str(&format!(",p_{i}"));
        }
        out.push_str(",d2,dTV\n");
        for (k, (t, p)) in self.times.iter().zip(&self.states).enumerate() {
            out.push_str(&format!("{t:.16e}"));
            for x in p {
                out.push_str(&format!(",{x:.16e}"));
            }
            let d2 = self.d2.get(k).copied().unwrap_or(f64::NAN);
            let dtv = self.d_tv.get(k).copied().unwrap_or(f64::NAN);
            out.push_str(&format!(",{d2:.16e},{dtv:.16e}\n"));
        }
        out
    }
}

fn distances(p: &[f64], eq: &[f64]) -> (f64, f64) {
    let d2 = p.iter().zip(eq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let tv = 0.5 * p.iter().zip(eq).map(|(a, b)| (a - b).abs()).sum::<f64>();
    (d2, tv)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::param("sample times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("sample times must be strictly ascending"));
    }
    Ok(())
}

fn check_p0(l: &GeneratorMatrix, p0: &ProbabilityVector) -> Result<()> {
    if p0.len() != l.size() {
        return Err(Error::DimensionMismatch { expected: l.size(), got: p0.len() });
    }
    Ok(())
}

/// `exp(−L·t)·p₀`.
pub fn propagate(l: &GeneratorMatrix, p0: &[f64], t: f64) -> Vec<f64> {
    if t == 0.0 {
        return p0.to_vec();
    }
    let e = expm::expm(&(l.matrix() * -t));
    (e * DVector::from_column_slice(p0)).iter().copied().collect()
}

/// Integrate the master equation with the matrix exponential.
pub fn evolve(l: &GeneratorMatrix, p0: &ProbabilityVector, times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    check_p0(l, p0)?;
    let states: Vec<Vec<f64>> = times.iter().map(|&t| propagate(l, p0.as_slice(), t)).collect();
    Ok(with_distances(l, times.to_vec(), states))
}

fn with_distances(l: &GeneratorMatrix, times: Vec<f64>, states: Vec<Vec<f64>>) -> Trajectory {
    let p_eq = check_irreducible(l).then(|| stationary_vector(l).ok()).flatten();
    let (d2, d_tv) = match &p_eq {
        Some(eq) => states.iter().map(|p| distances(p, eq)).unzip(),
        None => (Vec::new(), Vec::new()),
    };
    Trajectory { times, states, p_eq, d2, d_tv }
}

/// Integrate a symmetric generator by eigen-reconstruction
/// `p(t) = Σ_k e^{−μ_k t}⟨v_k, p₀⟩ v_k`.
pub fn evolve_spectral(l: &GeneratorMatrix, p0: &ProbabilityVector, times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    check_p0(l, p0)?;
    let spec = spectra::eigendecompose(&l.to_operator()?)?;
    let p = p0.as_slice();
    let coeffs: Vec<f64> = spec
        .vectors
        .iter()
        .map(|v| v.iter().zip(p).map(|(a, b)| a.re * b).sum())
        .collect();
    let states = times
        .iter()
        .map(|&t| {
            let mut out = vec![0.0; p.len()];
            for ((v, &mu), &c) in spec.vectors.iter().zip(&spec.eigenvalues).zip(&coeffs) {
                let w = c * (-mu * t).exp();
                out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x.re);
            }
            out
        })
        .collect();
    Ok(with_distances(l, times.to_vec(), states))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RelaxationFit {
    pub rate: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// `μ₂` of the symmetrized generator, when detailed balance holds.
    pub spectral_mu2: Option<f64>,
    /// `p₀ − p_eq` has no weight on the slowest mode, so the fit sees a faster one.
    pub slow_mode_missed: bool,
}

/// Upper edge of the fit window relative to `d(0)`.
pub const WINDOW_UPPER: f64 = 0.1;
/// Lower edge of the fit window.
pub const WINDOW_LOWER: f64 = 1e-8;
const GRID_RATIO: f64 = 1.05;
const GRID_POINTS: usize = 4000;
const UNIFORM_POINTS: usize = 128;
const MIN_FIT_POINTS: usize = 8;
/// RMS log residual above which the leading part of the window is dropped.
const CURVATURE_TOL: f64 = 1e-4;

/// Fit `d(t) = ‖p(t) − p_eq‖₂ ≈ C·e^{−rate·t}`.
///
/// A geometric time grid locates the window `d ∈ [1e-8, 0.1·d(0)]`; the fit
/// uses evenly spaced samples inside it, trimming the start of the window
/// while the log-linear residual exceeds `1e-4`.
pub fn relaxation_rate(l: &GeneratorMatrix, p0: &ProbabilityVector) -> Result<RelaxationFit> {
    check_p0(l, p0)?;
    if !check_irreducible(l) {
        return Err(Error::Reducible(
            crate::generator::strongly_connected_components(l).iter().max().map_or(0, |x| x + 1),
        ));
    }
    let eq = stationary_vector(l)?;
    let p = p0.as_slice();
    let (d0, _) = distances(p, &eq);
    if d0 <= 1e-12 {
        return Err(Error::Fit("initial state is already the equilibrium".into()));
    }
    let scale = l.degrees().into_iter().fold(0.0, f64::max);
    let upper = WINDOW_UPPER * d0;

    // Geometric grid from well inside the fastest time scale, until d(t)
    // falls below the window.
    let mut grid: Vec<(f64, f64)> = vec![(0.0, d0)];
    let mut t = 1e-3 / scale;
    let mut prev_t = 0.0;
    let mut state = DVector::from_column_slice(p);
    for _ in 0..GRID_POINTS {
        state = expm::expm(&(l.matrix() * -(t - prev_t))) * state;
        let (d, _) = distances(state.as_slice(), &eq);
        grid.push((t, d));
        if d < WINDOW_LOWER {
            break;
        }
        prev_t = t;
        t *= GRID_RATIO;
    }
    let inside = grid.iter().filter(|(_, d)| *d <= upper && *d >= WINDOW_LOWER).count();
    if inside < 3 {
        return Err(Error::Fit("d(t) underflowed before the fit window; use a shorter horizon".into()));
    }
    let first_in = grid.iter().position(|(_, d)| *d <= upper).expect("window is non-empty");
    let last_in = grid.iter().rposition(|(_, d)| *d >= WINDOW_LOWER).expect("window is non-empty");
    let d_at = |t: f64| distances(&propagate(l, p, t), &eq).0;
    // Window edges located by bisection between neighbouring grid points.
    let crossing = |mut lo: f64, mut hi: f64, level: f64| {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if d_at(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let t_a = if first_in == 0 { 0.0 } else { crossing(grid[first_in - 1].0, grid[first_in].0, upper) };
    let t_b = match grid.get(last_in + 1) {
        Some(&(next, _)) => crossing(grid[last_in].0, next, WINDOW_LOWER),
        None => grid[last_in].0,
    };

    // Resample the window uniformly in time, then drop its leading edge while
    // faster modes still bend log d(t).
    let dt = (t_b - t_a) / (UNIFORM_POINTS - 1) as f64;
    let step = expm::expm(&(l.matrix() * -dt));
    let mut state = expm::expm(&(l.matrix() * -t_a)) * DVector::from_column_slice(p);
    let mut uniform = Vec::with_capacity(UNIFORM_POINTS);
    for i in 0..UNIFORM_POINTS {
        let (d, _) = distances(state.as_slice(), &eq);
        if d > 0.0 {
            uniform.push((t_a + i as f64 * dt, d));
        }
        state = &step * state;
    }
    let mut fit = log_linear_fit(&uniform);
    let mut first = 0;
    while fit.2 > CURVATURE_TOL && uniform.len() - first >= 2 * MIN_FIT_POINTS {
        first += (uniform.len() - first) / 4;
        fit = log_linear_fit(&uniform[first..]);
    }
    let samples = &uniform[first..];
    let (slope, intercept, residual) = fit;
    let rate = -slope;
    if !(rate > 0.0) {
        return Err(Error::Fit(format!("non-positive fitted rate {rate}")));
    }

    let (spectral_mu2, slow_mode_missed) = match slow_mode_overlap(l, p, &eq) {
        Some((mu2, overlap)) => (Some(mu2), overlap < 1e-8),
        None => (None, false),
    };
    Ok(RelaxationFit {
        rate,
        prefactor: intercept.exp(),
        window: (samples[0].0, samples[samples.len() - 1].0),
        points: samples.len(),
        residual,
        spectral_mu2,
        slow_mode_missed,
    })
}

/// Slope, intercept and RMS residual of `ln d` against `t`.
fn log_linear_fit(samples: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let (st, sy) = samples.iter().fold((0.0, 0.0), |acc, (t, d)| (acc.0 + t, acc.1 + d.ln()));
    let (mt, my) = (st / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, d) in samples {
        sxx += (t - mt).powi(2);
        sxy += (t - mt) * (d.ln() - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let residual = (samples.iter().map(|(t, d)| (d.ln() - intercept - slope * t).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, residual)
}

/// `μ₂` of the symmetrized generator and the relative weight of `p₀ − p_eq` on
/// its slowest relaxation level.
fn slow_mode_overlap(l: &GeneratorMatrix, p: &[f64], eq: &[f64]) -> Option<(f64, f64)> {
    let p_eq = check_detailed_balance(l, None).ok()?;
    let h: HermitianOperator = symmetrize(l, &p_eq).ok()?;
    let spec = spectra::eigendecompose(&h).ok()?;
    let mu2 = spectra::gap(&spec).ok()?;
    // In the symmetric frame the deviation is R⁻¹(p − p_eq).
    let dev: Vec<f64> = p.iter().zip(eq).map(|(a, b)| (a - b) / b.sqrt()).collect();
    let norm = dev.iter().map(|x| x * x).sum::<f64>().sqrt();
    let level = spec.levels[1];
    let start = spec.levels[0].mult;
    let weight = spec.vectors[start..start + level.mult]
        .iter()
        .map(|v| v.iter().zip(&dev).map(|(a, b)| a.re * b).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt();
    Some((mu2, weight / norm))
}

/// Empirical state occupancy at `t_max` over independent jump trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub repetitions: u64,
    pub seed: u64,
}

impl Histogram {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.repetitions as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,count,frequency\n");
        for (i, (c, f)) in self.counts.iter().zip(self.frequencies()).enumerate() {
            out.push_str(&format!("{},{c},{f:.16e}\n", i + 1));
        }
        out
    }
}

/// Sample `repetitions` continuous-time trajectories from `start` up to `t_max`.
///
/// Each repetition draws from its own stream of the seeded generator, so the
/// result does not depend on how repetitions are scheduled across threads.
pub fn jump_process_sample(
    l: &GeneratorMatrix,
    start: usize,
    t_max: f64,
    repetitions: u64,
    seed: u64,
) -> Result<Histogram> {
    let m = l.size();
    if start >= m {
        return Err(Error::IndexOutOfRange { index: start, size: m });
    }
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::param("t_max must be finite and non-negative"));
    }
    if repetitions == 0 {
        return Err(Error::param("repetitions must be positive"));
    }
    // Cumulative jump tables per state.
    let tables: Vec<(f64, Vec<(usize, f64)>)> = (0..m)
        .map(|n| {
            let mut acc = 0.0;
            let cum = l
                .out_rates(n)
                .into_iter()
                .map(|(to, r)| {
                    acc += r;
                    (to, acc)
                })
                .collect();
            (acc, cum)
        })
        .collect();

    let final_state = |rep: u64| -> usize {
        let mut rng = rng::stream(seed, rep);
        let mut state = start;
        let mut t = 0.0;
        loop {
            let (total, cum) = &tables[state];
            if *total <= 0.0 {
                return state;
            }
            let u: f64 = 1.0 - rng.random::<f64>();
            t += -u.ln() / total;
            if t > t_max {
                return state;
            }
            let target = rng.random::<f64>() * total;
            state = cum.iter().find(|(_, c)| target < *c).map_or(cum[cum.len() - 1].0, |(to, _)| *to);
        }
    };
    let counts = (0..repetitions)
        .into_par_iter()
        .fold(
            || vec![0u64; m],
            |mut acc, rep| {
                acc[final_state(rep)] += 1;
                acc
            },
        )
        .reduce(|| vec![0u64; m], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(Histogram { counts, repetitions, seed })
}

/// Propagator `exp(−L·t)` as a dense matrix.
pub fn propagator(l: &GeneratorMatrix, t: f64) -> DMatrix<f64> {
    expm::expm(&(l.matrix() * -t))
}
