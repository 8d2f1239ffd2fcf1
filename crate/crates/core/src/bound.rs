//! The gap lower bound `μ₂ ≥ min_n V_n` and its hypotheses.
//!
//! An operator is split as `H = V + K` into its diagonal ("potential") and its
//! zero-diagonal remainder ("kinetic", `K = −σ`). The bound holds asymptotically
//! when the ground states are ergodic and the couplings, measured relative to the
//! ground-state components, vanish faster than an envelope `g(M)`. This module
//! evaluates each of those conditions at a finite size `M` and runs the whole
//! chain in [`bound_verdict`].
//!
//! The central construction is the operator
//! `U = M·Σ_i P_i − Σ_i D^(i)` with `D^(i) = diag(|u_n^(i)|²)`, whose lowest
//! eigenvalue switches from `−|α|(M−1)` to `−|α|` as the sign of `α` in `α·U`
//! flips (for a uniform ground state). Together with Weyl's inequality it gives
//! the finite-size certificate used by the verdict:
//!
//! `E₁ + min(λ, μ₂) = GSL[H + λ·ΣP_i] ≥ min_n (V_n + (λ/M)·Σ_i|u_n^(i)|²) + GSL[K + (λ/M)·U]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::generator::{check_irreducible, GeneratorMatrix};
use crate::spectra::{self, GroundSpace, HermitianOperator, Vectors};
use crate::{Error, Result};

pub const DEFAULT_ERGODICITY_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_E1_OVER_M_THRESHOLD: f64 = 1e-6;
/// Above this size `s*` comes from the secular equation instead of a dense eigensolve.
pub const DENSE_S_STAR_LIMIT: usize = 1024;

/// `H = V + K`, with `V` the diagonal and `K` the zero-diagonal remainder.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub potential: Vec<f64>,
    pub kinetic: HermitianOperator,
}

impl Decomposition {
    pub fn size(&self) -> usize {
        self.potential.len()
    }

    /// `σ_{m,n} = −K_{m,n}`.
    pub fn sigma(&self, m: usize, n: usize) -> Complex64 {
        -self.kinetic.entry(m, n)
    }

    /// `min_n V_n` and the smallest index attaining it.
    pub fn min_potential(&self) -> (usize, f64) {
        self.potential
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }

    /// States `n` with some `σ_{m,n} ≠ 0` or `σ_{n,m} ≠ 0`.
    pub fn touched(&self) -> Vec<bool> {
        let n = self.size();
        (0..n)
            .map(|a| (0..n).any(|b| b != a && (self.sigma(a, b) != Complex64::new(0.0, 0.0))))
            .collect()
    }

    /// `V + K`, entrywise.
    pub fn reconstruct(&self) -> HermitianOperator {
        let mut out = self.kinetic.clone();
        let n = self.size();
        let mut diag = DMatrix::zeros(n, n);
        for i in 0..n {
            diag[(i, i)] = self.potential[i];
        }
        out = out.add(&HermitianOperator::real(diag).expect("diagonal")).expect("same size");
        out
    }
}

pub fn decompose(h: &HermitianOperator) -> Decomposition {
    let potential = h.diagonal();
    let mut re = h.re().clone();
    for i in 0..h.size() {
        re[(i, i)] = 0.0;
    }
    let kinetic = match h.im() {
        None => HermitianOperator::real(re),
        Some(im) => {
            let n = h.size();
            HermitianOperator::complex(DMatrix::from_fn(n, n, |a, b| Complex64::new(re[(a, b)], im[(a, b)])))
        }
    }
    .expect("off-diagonal part of a Hermitian matrix is Hermitian");
    Decomposition { potential, kinetic }
}

/// `σ = max_i max_{m≠n} |σ_{m,n}| / (|u_m^(i)|·|u_n^(i)|)` over pairs with `σ_{m,n} ≠ 0`;
/// zero when there are none.
pub fn sigma_max(dec: &Decomposition, gs: &GroundSpace) -> Result<f64> {
    let n = dec.size();
    if gs.size() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gs.size() });
    }
    let mut best = 0.0f64;
    for abs_u in (0..gs.k).map(|i| gs.u[i].iter().map(|z| z.norm()).collect::<Vec<_>>()) {
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let s = dec.sigma(a, b).norm();
                if s == 0.0 {
                    continue;
                }
                let den = abs_u[a] * abs_u[b];
                if den == 0.0 {
                    return Err(Error::ZeroGroundComponent { m: a, n: b });
                }
                best = best.max(s / den);
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgodicityClass {
    Ergodic,
    WeaklyErgodic,
    NonErgodic,
}

impl std::fmt::Display for ErgodicityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErgodicityClass::Ergodic => "ergodic",
            ErgodicityClass::WeaklyErgodic => "weakly-ergodic",
            ErgodicityClass::NonErgodic => "non-ergodic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicityReport {
    pub class: ErgodicityClass,
    pub min_abs_u: f64,
    /// `(ground vector, state)` where `min_abs_u` is attained.
    pub argmin: (usize, usize),
    /// Minimum over the states touched by a nonzero coupling.
    pub min_abs_u_touched: f64,
}

pub fn ergodicity_report(gs: &GroundSpace, dec: &Decomposition, threshold: f64) -> ErgodicityReport {
    let touched = dec.touched();
    let mut min_abs_u = f64::INFINITY;
    let mut argmin = (0, 0);
    let mut min_touched = f64::INFINITY;
    for (i, u) in gs.u.iter().enumerate() {
        for (n, z) in u.iter().enumerate() {
            let a = z.norm();
            if a < min_abs_u {
                min_abs_u = a;
                argmin = (i, n);
            }
            if touched[n] {
                min_touched = min_touched.min(a);
            }
        }
    }
    let class = if min_abs_u >= threshold {
        ErgodicityClass::Ergodic
    } else if min_touched.is_finite() && min_touched >= threshold {
        ErgodicityClass::WeaklyErgodic
    } else {
        ErgodicityClass::NonErgodic
    };
    ErgodicityReport { class, min_abs_u, argmin, min_abs_u_touched: min_touched }
}

/// `U = Σ_i (u^(i) u^(i)† − D^(i))`, zero diagonal.
#[derive(Debug, Clone)]
pub struct UOperator {
    pub operator: HermitianOperator,
}

fn rank_one_u(u: &[Complex64]) -> DMatrix<Complex64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |a, b| if a == b { Complex64::new(0.0, 0.0) } else { u[a] * u[b].conj() })
}

pub fn u_operator(gs: &GroundSpace) -> UOperator {
    let n = gs.size();
    let mut acc = DMatrix::<Complex64>::zeros(n, n);
    for u in &gs.u {
        acc += rank_one_u(u);
    }
    let operator = to_operator(acc);
    UOperator { operator }
}

fn to_operator(z: DMatrix<Complex64>) -> HermitianOperator {
    if z.iter().all(|x| x.im == 0.0) {
        HermitianOperator::real(z.map(|x| x.re))
    } else {
        HermitianOperator::complex(z)
    }
    .expect("Hermitian by construction")
}

/// Smallest root of `Σ_n w_n/(μ + w_n) = 1` for `w_n = |u_n|²`, located in
/// `[−w_(1), −w_(2)]` by interlacing, found by bisection.
pub fn secular_min_root(abs_u_sq: &[f64]) -> f64 {
    let mut w: Vec<f64> = abs_u_sq.iter().copied().filter(|&x| x > 0.0).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    match w.len() {
        0 => return 0.0,
        1 => return 0.0,
        _ => {}
    }
    let (w1, w2) = (w[0], w[1]);
    if w1 == w2 {
        return -w1;
    }
    let f = |mu: f64| w.iter().map(|&x| x / (mu + x)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (-w1, -w2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // f decreases from +∞ to −∞ across the interval.
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SStarMethod {
    /// Dense eigensolve of each rank-one `U^(i)`.
    Dense,
    /// Secular-equation root of each `U^(i)`.
    Secular,
    /// Dense up to [`DENSE_S_STAR_LIMIT`], secular above.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SStar {
    /// `max_n |u_n|²`.
    pub s: f64,
    /// `−λ_min(U)`.
    pub s_star: f64,
    /// `−(smallest secular root)`, for comparison with `s_star`.
    pub secular: f64,
    /// All `|u_n|²` are pairwise distinct, so the secular root is simple.
    pub distinct: bool,
}

pub fn s_and_s_star(gs: &GroundSpace) -> Result<SStar> {
    s_and_s_star_with(gs, SStarMethod::Dense)
}

/// `s` and `s*` per ground vector, maximized over the ground vectors.
///
/// The dense value is clamped into the interlacing interval
/// `[w_(2), w_(1)]` of the two largest `|u_n|²`; when the maximum is attained
/// twice the interval is a point and `s* = s` exactly.
pub fn s_and_s_star_with(gs: &GroundSpace, method: SStarMethod) -> Result<SStar> {
    let dense = match method {
        SStarMethod::Dense => true,
        SStarMethod::Secular => false,
        SStarMethod::Auto => gs.size() <= DENSE_S_STAR_LIMIT,
    };
    let mut out = SStar { s: 0.0, s_star: 0.0, secular: 0.0, distinct: true };
    for (i, u) in gs.u.iter().enumerate() {
        let w = gs.abs_u_sq(i);
        let mut sorted = w.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let s = sorted[0];
        let w2 = sorted.get(1).copied().unwrap_or(0.0);
        let secular = -secular_min_root(&w);
        let s_star = if dense {
            let lam = spectra::gsl(&to_operator(rank_one_u(u)))?;
            (-lam).clamp(w2, s)
        } else {
            secular
        };
        let distinct = sorted.windows(2).all(|p| p[0] != p[1]);
        out.s = out.s.max(s);
        out.s_star = out.s_star.max(s_star);
        out.secular = out.secular.max(secular);
        out.distinct &= distinct;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaU {
    pub alpha: f64,
    /// `GSL[α·U]` by eigensolve.
    pub gsl: f64,
    /// `−|α|(M−1)` or `−|α|` for a uniform ground state, `None` otherwise.
    pub uniform_formula: Option<f64>,
    pub s_star: f64,
    /// `M − λ_max(U)`, the correction of the `α < 0` branch.
    pub s_diamond: f64,
    /// The two-branch prediction using `s_star` and `s_diamond`.
    pub predicted: f64,
}

/// `GSL[α·U]` with the closed forms it is compared against.
pub fn gsl_alpha_u(alpha: f64, gs: &GroundSpace) -> Result<AlphaU> {
    let m = gs.size() as f64;
    let u = u_operator(gs);
    let ev = spectra::eigenvalues(&u.operator)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let gsl = spectra::gsl(&u.operator.scaled(alpha))?;
    let uniform = gs.k == 1 && gs.u[0].iter().all(|z| *z == Complex64::new(1.0, 0.0));
    let uniform_formula = uniform.then(|| if alpha < 0.0 { -alpha.abs() * (m - 1.0) } else { -alpha.abs() });
    let s_star = -lo;
    let s_diamond = m - hi;
    let predicted = if alpha < 0.0 { -alpha.abs() * (m - s_diamond) } else { -alpha.abs() * s_star };
    Ok(AlphaU { alpha, gsl, uniform_formula, s_star, s_diamond, predicted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylCheck {
    pub lambda: f64,
    /// `GSL[H + λ·ΣP_i]`.
    pub lhs: f64,
    /// `min_n (V_n + (λ/M)Σ_i|u_n^(i)|²)`.
    pub potential_term: f64,
    /// `GSL[K + (λ/M)U]`.
    pub kinetic_term: f64,
    pub slack: f64,
    pub holds: bool,
}

fn shifted_potential(dec: &Decomposition, gs: &GroundSpace, lambda: f64) -> Vec<f64> {
    let m = dec.size() as f64;
    let mut pot = dec.potential.clone();
    for i in 0..gs.k {
        for (p, w) in pot.iter_mut().zip(gs.abs_u_sq(i)) {
            *p += lambda / m * w;
        }
    }
    pot
}

/// Both sides of Weyl's inequality for `F(λ) = V + (λ/M)ΣD + K + (λ/M)U`.
pub fn weyl_check(dec: &Decomposition, gs: &GroundSpace, lambda: f64) -> Result<WeylCheck> {
    let m = dec.size() as f64;
    let u = u_operator(gs);
    let kin = dec.kinetic.add(&u.operator.scaled(lambda / m))?;
    let pot = shifted_potential(dec, gs, lambda);
    let potential_term = pot.iter().copied().fold(f64::INFINITY, f64::min);
    let n = dec.size();
    let mut pot_m = DMatrix::zeros(n, n);
    for i in 0..n {
        pot_m[(i, i)] = pot[i];
    }
    let f = kin.add(&HermitianOperator::real(pot_m)?)?;
    let lhs = spectra::gsl(&f)?;
    let kinetic_term = spectra::gsl(&kin)?;
    let slack = lhs - potential_term - kinetic_term;
    let tol = 1e-10 * dec.reconstruct().norm().max(1.0);
    Ok(WeylCheck { lambda, lhs, potential_term, kinetic_term, slack, holds: slack >= -tol })
}

/// `λ(M) = M·√g`.
pub fn lambda_schedule(m: usize, g_value: f64) -> Result<f64> {
    if !(g_value > 0.0) || !g_value.is_finite() {
        return Err(Error::param(format!("g must be positive, got {g_value}")));
    }
    Ok(m as f64 * g_value.sqrt())
}

/// `g = 1/[ln M]^α`.
pub fn g_from_alpha(m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if m < 2 {
        return Err(Error::param("g from alpha needs M >= 2"));
    }
    Ok((m as f64).ln().powf(-alpha))
}

/// Is `A − t·I` positive definite? Decided by Cholesky on the real form.
fn exceeds(a: &HermitianOperator, t: f64) -> bool {
    let n = a.size();
    let real = match a.im() {
        None => a.re().clone(),
        Some(b) => {
            let mut out = DMatrix::zeros(2 * n, 2 * n);
            out.view_mut((0, 0), (n, n)).copy_from(a.re());
            out.view_mut((n, n), (n, n)).copy_from(a.re());
            out.view_mut((0, n), (n, n)).copy_from(&(-b));
            out.view_mut((n, 0), (n, n)).copy_from(b);
            out
        }
    };
    let mut shifted = real;
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= t;
    }
    shifted.cholesky().is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HypothesesHoldAndBoundHolds,
    HypothesesFail,
    BoundViolatedHypothesesHold,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::HypothesesHoldAndBoundHolds => "hypotheses-hold-and-bound-holds",
            Verdict::HypothesesFail => "hypotheses-fail",
            Verdict::BoundViolatedHypothesesHold => "bound-violated-hypotheses-hold",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    pub g_value: f64,
    pub ergodicity_threshold: f64,
    pub e1_over_m_threshold: f64,
    pub s_star_method: SStarMethod,
}

impl BoundConfig {
    pub fn new(g_value: f64) -> Self {
        BoundConfig {
            g_value,
            ergodicity_threshold: DEFAULT_ERGODICITY_THRESHOLD,
            e1_over_m_threshold: DEFAULT_E1_OVER_M_THRESHOLD,
            s_star_method: SStarMethod::Auto,
        }
    }

    pub fn with_ergodicity_threshold(mut self, t: f64) -> Self {
        self.ergodicity_threshold = t;
        self
    }
}

/// Finite-size readings of the bound's hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisProfile {
    /// `None` when a nonzero coupling meets a zero ground-state component.
    pub sigma: Option<f64>,
    pub g_value: f64,
    pub s: f64,
    pub s_star: f64,
    pub ergodicity: ErgodicityReport,
    pub lambda_schedule: f64,
    pub e1_over_m: f64,
    pub sigma_below_g: bool,
    pub ergodic_enough: bool,
    pub e1_small: bool,
    /// The Weyl certificate at `λ(M)` reaches `min_n V_n`; `None` when not
    /// evaluated because an earlier hypothesis failed.
    pub regime_certificate: Option<bool>,
}

impl HypothesisProfile {
    /// σ, ergodicity and `|E₁|/M`, the three threshold surrogates.
    pub fn surrogates_hold(&self) -> bool {
        self.sigma_below_g && self.ergodic_enough && self.e1_small
    }

    pub fn holds(&self) -> bool {
        self.surrogates_hold() && self.regime_certificate == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapBoundReport {
    pub size: usize,
    pub e1: f64,
    pub k: usize,
    pub mu2: f64,
    pub min_v: f64,
    pub min_v_index: usize,
    pub ratio: Option<f64>,
    pub profile: HypothesisProfile,
    pub verdict: Verdict,
    pub near_degenerate: bool,
    pub operator_norm: f64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ReportJson<'a> {
    M: usize,
    E1: f64,
    mu2: f64,
    k: usize,
    min_V: f64,
    ratio: Option<f64>,
    sigma: Option<f64>,
    g: f64,
    s: f64,
    s_star: f64,
    min_abs_u: f64,
    ergodicity: ErgodicityClass,
    E1_over_M: f64,
    lambda_schedule: f64,
    verdict: &'a Verdict,
}

impl Serialize for GapBoundReport {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let p = &self.profile;
        ReportJson {
            M: self.size,
            E1: self.e1,
            mu2: self.mu2,
            k: self.k,
            min_V: self.min_v,
            ratio: self.ratio,
            sigma: p.sigma,
            g: p.g_value,
            s: p.s,
            s_star: p.s_star,
            min_abs_u: p.ergodicity.min_abs_u,
            ergodicity: p.ergodicity.class,
            E1_over_M: p.e1_over_m,
            lambda_schedule: p.lambda_schedule,
            verdict: &self.verdict,
        }
        .serialize(ser)
    }
}

/// Evaluate the hypotheses at this size and compare `μ₂` with `min_n V_n`.
///
/// The hypotheses hold when `σ < g`, the ground space is ergodic (or weakly
/// ergodic with `s*·√g` below the ergodicity threshold), `|E₁|/M` is below its
/// threshold, and the Weyl certificate at `λ(M) = M·√g` reaches
/// `min_n V_n − 1e-9·‖H‖`.
pub fn bound_verdict(h: &HermitianOperator, config: &BoundConfig) -> Result<GapBoundReport> {
    let m = h.size();
    let lambda = lambda_schedule(m, config.g_value)?;
    let dec = decompose(h);
    let spec = spectra::eigendecompose_with(h, Vectors::Ground)?;
    let gs = spectra::default_ground_space(&spec)?;
    let mu2 = spectra::gap(&spec)?;
    let ergodicity = ergodicity_report(&gs, &dec, config.ergodicity_threshold);
    let sigma = match sigma_max(&dec, &gs) {
        Ok(s) => Some(s),
        Err(Error::ZeroGroundComponent { .. }) => None,
        Err(e) => return Err(e),
    };
    let ss = s_and_s_star_with(&gs, config.s_star_method)?;
    let (min_v_index, min_v) = dec.min_potential();
    let norm = h.norm();
    let tol = 1e-9 * norm;
    let e1_over_m = gs.e1 / m as f64;

    let sigma_below_g = sigma.is_some_and(|s| s < config.g_value);
    let ergodic_enough = match ergodicity.class {
        ErgodicityClass::Ergodic => true,
        ErgodicityClass::WeaklyErgodic => ss.s_star * config.g_value.sqrt() < config.ergodicity_threshold,
        ErgodicityClass::NonErgodic => false,
    };
    let e1_small = e1_over_m.abs() < config.e1_over_m_threshold;
    let mut profile = HypothesisProfile {
        sigma,
        g_value: config.g_value,
        s: ss.s,
        s_star: ss.s_star,
        ergodicity,
        lambda_schedule: lambda,
        e1_over_m,
        sigma_below_g,
        ergodic_enough,
        e1_small,
        regime_certificate: None,
    };
    if profile.surrogates_hold() {
        let pot = shifted_potential(&dec, &gs, lambda);
        let potential_term = pot.iter().copied().fold(f64::INFINITY, f64::min);
        let kin = dec.kinetic.add(&u_operator(&gs).operator.scaled(lambda / m as f64))?;
        // Certificate: GSL[K + (λ/M)U] ≥ min V − tol + E₁ − potential_term.
        let target = min_v - tol + gs.e1 - potential_term;
        profile.regime_certificate = Some(exceeds(&kin, target));
    }

    let ratio = (min_v > 0.0).then(|| mu2 / min_v);
    let verdict = if !profile.holds() {
        Verdict::HypothesesFail
    } else if mu2 >= min_v - tol {
        Verdict::HypothesesHoldAndBoundHolds
    } else {
        Verdict::BoundViolatedHypothesesHold
    };
    Ok(GapBoundReport {
        size: m,
        e1: gs.e1,
        k: gs.k,
        mu2,
        min_v,
        min_v_index,
        ratio,
        profile,
        verdict,
        near_degenerate: spec.near_degenerate,
        operator_norm: norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomWalkBound {
    pub min_degree: f64,
    pub mu2: f64,
    pub ratio: f64,
}

/// `μ₂ / min_n k(n)` for a symmetric, irreducible walk.
pub fn rw_bound(l: &GeneratorMatrix) -> Result<RandomWalkBound> {
    if !l.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if !check_irreducible(l) {
        return Err(Error::Reducible(crate::generator::strongly_connected_components(l).iter().max().map_or(0, |x| x + 1)));
    }
    let min_degree = l.degrees().into_iter().fold(f64::INFINITY, f64::min);
    let spec = spectra::eigendecompose_with(&l.to_operator()?, Vectors::None)?;
    let mu2 = spectra::gap(&spec)?;
    Ok(RandomWalkBound { min_degree, mu2, ratio: mu2 / min_degree })
}
