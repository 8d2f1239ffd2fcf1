//! Random model families and M-scaling scans.
//!
//! Logarithms in `[ln M]^α` and `⌈ln² M⌉` are natural.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{self, BoundConfig, ErgodicityClass, GapBoundReport, Verdict, DEFAULT_ERGODICITY_THRESHOLD};
use crate::generator::{build_generator, check_detailed_balance, check_irreducible, symmetrize, GeneratorMatrix, Rate};
use crate::rng;
use crate::spectra::HermitianOperator;
use crate::{Error, Result};

/// Attempts allowed for rejection sampling of graphs.
pub const REJECTION_CAP: usize = 1000;

fn undirected(m: usize, edges: &[(usize, usize)], rate: f64) -> Result<GeneratorMatrix> {
    let rates: Vec<Rate> = edges
        .iter()
        .flat_map(|&(a, b)| [Rate::new(a, b, rate), Rate::new(b, a, rate)])
        .collect();
    build_generator(m, &rates)
}

fn connected(m: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); m];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == m
}

pub fn complete(m: usize) -> Result<GeneratorMatrix> {
    let edges: Vec<_> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
    undirected(m, &edges, 1.0)
}

pub fn cycle(m: usize) -> Result<GeneratorMatrix> {
    if m < 3 {
        return Err(Error::param(format!("a cycle needs at least 3 states, got {m}")));
    }
    let edges: Vec<_> = (0..m).map(|a| (a, (a + 1) % m)).collect();
    undirected(m, &edges, 1.0)
}

/// Star with state 0 at the centre.
pub fn star(m: usize) -> Result<GeneratorMatrix> {
    if m < 2 {
        return Err(Error::param(format!("a star needs at least 2 states, got {m}")));
    }
    let edges: Vec<_> = (1..m).map(|b| (0, b)).collect();
    undirected(m, &edges, 1.0)
}

/// One pass of sequential stub pairing; `None` when the remaining stubs admit
/// no simple pairing.
fn pair_stubs(m: usize, k: usize, rng: &mut rng::Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..m).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    let mut edges = Vec::with_capacity(m * k / 2);
    let mut present: HashSet<(usize, usize)> = HashSet::with_capacity(m * k);
    let ok = |a: usize, b: usize, present: &HashSet<(usize, usize)>| a != b && !present.contains(&(a.min(b), a.max(b)));
    while !stubs.is_empty() {
        let len = stubs.len();
        let mut failures = 0usize;
        let (i, j) = loop {
            let i = rng.random_range(0..len);
            let j = rng.random_range(0..len);
            if i != j && ok(stubs[i], stubs[j], &present) {
                break (i, j);
            }
            failures += 1;
            if failures > 50 * len {
                let exists = (0..len).any(|x| (x + 1..len).any(|y| ok(stubs[x], stubs[y], &present)));
                if !exists {
                    return None;
                }
                failures = 0;
            }
        };
        let (a, b) = (stubs[i], stubs[j]);
        present.insert((a.min(b), a.max(b)));
        edges.push((a.min(b), a.max(b)));
        let (hi, lo) = (i.max(j), i.min(j));
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    Some(edges)
}

/// Connected simple `k`-regular graph with unit rates.
///
/// Stubs are paired one edge at a time, redrawing any pair that would form a
/// self-loop or a repeated edge; a dead end or a disconnected result restarts
/// the draw.
pub fn random_regular(m: usize, k: usize, seed: u64) -> Result<GeneratorMatrix> {
    if k >= m {
        return Err(Error::param(format!("degree k = {k} must be below M = {m}")));
    }
    if k == 0 || (k * m) % 2 != 0 {
        return Err(Error::param(format!("k·M must be even and k positive, got k = {k}, M = {m}")));
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..REJECTION_CAP {
        if let Some(edges) = pair_stubs(m, k, &mut rng) {
            if connected(m, &edges) {
                return undirected(m, &edges, 1.0);
            }
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

/// Erdős–Rényi graph conditioned on connectivity, unit rates.
pub fn er_connected(m: usize, p: f64, seed: u64) -> Result<GeneratorMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("edge probability must lie in (0,1], got {p}")));
    }
    if m < 2 {
        return Err(Error::param(format!("need at least 2 states, got {m}")));
    }
    if m == 2 {
        return complete(2);
    }
    let mut rng = rng::seeded(seed);
    for _ in 0..REJECTION_CAP {
        let edges: Vec<_> = (0..m)
            .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        if connected(m, &edges) {
            return undirected(m, &edges, 1.0);
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

fn max_off_diagonal(l: &GeneratorMatrix) -> f64 {
    l.rates().iter().map(|r| r.rate).fold(0.0, f64::max)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// Scale all rates so the largest equals `1/[ln M]^α`.
pub fn infinitesimal_rescale(l: &GeneratorMatrix, alpha: f64) -> Result<GeneratorMatrix> {
    check_alpha(alpha)?;
    if l.size() < 2 {
        return Err(Error::param("rescaling needs M >= 2"));
    }
    if !l.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let w = max_off_diagonal(l);
    if w <= 0.0 {
        return Err(Error::ZeroGenerator);
    }
    let bound = (l.size() as f64).ln().powf(-alpha);
    let mut out = l.scaled(bound / w)?;
    // Pin the largest rates to the bound exactly.
    let mut raw = out.matrix().clone();
    let mut touched = false;
    for r in l.rates() {
        if r.rate == w && raw[(r.to, r.from)] != -bound {
            let delta = -bound - raw[(r.to, r.from)];
            raw[(r.to, r.from)] = -bound;
            raw[(r.from, r.from)] -= delta;
            touched = true;
        }
    }
    if touched {
        out = GeneratorMatrix::from_matrix(raw)?;
    }
    Ok(out)
}

/// Metropolis rates `W(n→m) = w_base(n→m)·min(1, e^{−β(E_m−E_n)})` on the edges of `base`.
pub fn metropolis_chain(energies: &[f64], beta: f64, base: &GeneratorMatrix) -> Result<GeneratorMatrix> {
    let m = base.size();
    if energies.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: energies.len() });
    }
    if !base.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if !check_irreducible(base) {
        return Err(Error::Reducible(crate::generator::strongly_connected_components(base).iter().max().map_or(0, |x| x + 1)));
    }
    if !beta.is_finite() || energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::param("energies and beta must be finite"));
    }
    let rates: Vec<Rate> = base
        .rates()
        .into_iter()
        .map(|r| Rate::new(r.from, r.to, r.rate * (-beta * (energies[r.to] - energies[r.from])).exp().min(1.0)))
        .collect();
    build_generator(m, &rates)
}

/// Energies drawn uniformly from `[0, scale]`.
pub fn random_energies(m: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    (0..m).map(|_| scale * rng.random::<f64>()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Complete,
    Cycle,
    Star,
    RandomRegular,
    ErConnected,
    Metropolis,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Complete => "complete",
            Family::Cycle => "cycle",
            Family::Star => "star",
            Family::RandomRegular => "random-regular",
            Family::ErConnected => "er-connected",
            Family::Metropolis => "metropolis",
        }
    }
}

/// Degree schedule `k(M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreeRule {
    Constant(usize),
    Named(DegreeExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeExpr {
    /// `⌈ln² M⌉`
    CeilLn2,
}

impl DegreeRule {
    pub fn at(self, m: usize) -> usize {
        match self {
            DegreeRule::Constant(k) => k,
            DegreeRule::Named(DegreeExpr::CeilLn2) => (m as f64).ln().powi(2).ceil() as usize,
        }
    }
}

/// Edge probability `p(M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeProbability {
    Constant(f64),
    /// `min(1, c·ln M / M)`
    LnFactor { ln_factor: f64 },
}

impl EdgeProbability {
    pub fn at(self, m: usize) -> f64 {
        match self {
            EdgeProbability::Constant(p) => p,
            EdgeProbability::LnFactor { ln_factor } => (ln_factor * (m as f64).ln() / m as f64).min(1.0),
        }
    }
}

/// How `g(M)` is chosen for each row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GRule {
    Value(f64),
    /// `g = 1/[ln M]^α`
    Alpha(f64),
}

impl GRule {
    pub fn at(self, m: usize) -> Result<f64> {
        match self {
            GRule::Value(g) if g > 0.0 && g.is_finite() => Ok(g),
            GRule::Value(g) => Err(Error::param(format!("g: must be positive, got {g}"))),
            GRule::Alpha(a) => bound::g_from_alpha(m, a),
        }
    }
}

impl Default for GRule {
    fn default() -> Self {
        GRule::Alpha(0.5)
    }
}

fn default_base() -> Family {
    Family::Cycle
}

fn default_one() -> f64 {
    1.0
}

fn default_replicas() -> usize {
    1
}

fn default_ergodicity_tol() -> f64 {
    DEFAULT_ERGODICITY_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub family: Family,
    pub sizes: Vec<usize>,
    /// Rate-decay exponent; when present rates are rescaled to `1/[ln M]^α`,
    /// otherwise `H = L / min_n k(n)`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub degree: Option<DegreeRule>,
    #[serde(default)]
    pub p: Option<EdgeProbability>,
    #[serde(default = "default_one")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub energy_scale: f64,
    /// Base graph for the metropolis family.
    #[serde(default = "default_base")]
    pub base: Family,
    #[serde(default)]
    pub g: GRule,
    #[serde(default = "default_ergodicity_tol")]
    pub ergodicity_tol: f64,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

impl EnsembleSpec {
    pub fn new(family: Family, sizes: Vec<usize>, seed: u64) -> Self {
        EnsembleSpec {
            family,
            sizes,
            alpha: None,
            degree: None,
            p: None,
            beta: 1.0,
            energy_scale: 1.0,
            base: Family::Cycle,
            g: GRule::default(),
            ergodicity_tol: DEFAULT_ERGODICITY_THRESHOLD,
            seed,
            replicas: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EnsembleSpec = serde_json::from_str(text).map_err(|e| Error::param(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Field-level checks; the error message starts with the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::param("sizes: schedule is empty"));
        }
        if let Some(&m) = self.sizes.iter().find(|&&m| m < 2) {
            return Err(Error::param(format!("sizes: every M must be at least 2, got {m}")));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::param(format!("alpha: must lie in (0,1), got {a}")));
            }
        }
        if self.replicas == 0 {
            return Err(Error::param("replicas: must be positive"));
        }
        match self.g {
            GRule::Value(g) if !(g > 0.0 && g.is_finite()) => return Err(Error::param(format!("g: must be positive, got {g}"))),
            GRule::Alpha(a) if !(a > 0.0 && a < 1.0) => return Err(Error::param(format!("g: alpha must lie in (0,1), got {a}"))),
            _ => {}
        }
        if !(self.ergodicity_tol > 0.0) {
            return Err(Error::param("ergodicity_tol: must be positive"));
        }
        let graph = if self.family == Family::Metropolis {
            if self.base == Family::Metropolis {
                return Err(Error::param("base: must be a graph family"));
            }
            if !self.beta.is_finite() {
                return Err(Error::param("beta: must be finite"));
            }
            if !(self.energy_scale.is_finite() && self.energy_scale >= 0.0) {
                return Err(Error::param("energy_scale: must be finite and non-negative"));
            }
            self.base
        } else {
            self.family
        };
        match graph {
            Family::RandomRegular if self.degree.is_none() => return Err(Error::param("degree: required for random-regular")),
            Family::ErConnected => match self.p {
                None => return Err(Error::param("p: required for er-connected")),
                Some(EdgeProbability::Constant(p)) if !(p > 0.0 && p <= 1.0) => {
                    return Err(Error::param(format!("p: must lie in (0,1], got {p}")))
                }
                Some(EdgeProbability::LnFactor { ln_factor }) if !(ln_factor > 0.0) => {
                    return Err(Error::param("p: ln_factor must be positive"))
                }
                _ => {}
            },
            Family::Cycle if self.sizes.iter().any(|&m| m < 3) => return Err(Error::param("sizes: a cycle needs M >= 3")),
            _ => {}
        }
        Ok(())
    }

    fn graph(&self, family: Family, m: usize, seed: u64) -> Result<GeneratorMatrix> {
        match family {
            Family::Complete => complete(m),
            Family::Cycle => cycle(m),
            Family::Star => star(m),
            Family::RandomRegular => random_regular(m, self.degree.map_or(0, |d| d.at(m)), seed),
            Family::ErConnected => er_connected(m, self.p.map_or(0.0, |p| p.at(m)), seed),
            Family::Metropolis => Err(Error::param("base: must be a graph family")),
        }
    }

    /// Build the operator analysed for one `(M, replica)` row.
    pub fn instance(&self, m: usize, seed: u64) -> Result<HermitianOperator> {
        let h = if self.family == Family::Metropolis {
            let base = self.graph(self.base, m, rng::derive_seed(seed, 0, 0))?;
            let energies = random_energies(m, self.energy_scale, rng::derive_seed(seed, 1, 0));
            let l = metropolis_chain(&energies, self.beta, &base)?;
            let p_eq = check_detailed_balance(&l, None)?;
            symmetrize(&l, &p_eq)?
        } else {
            self.graph(self.family, m, seed)?.to_operator()?
        };
        match self.alpha {
            Some(alpha) => {
                let w = (0..m)
                    .flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b)))
                    .map(|(a, b)| h.entry(a, b).norm())
                    .fold(0.0, f64::max);
                if w <= 0.0 {
                    return Err(Error::ZeroGenerator);
                }
                Ok(h.scaled((m as f64).ln().powf(-alpha) / w))
            }
            None => {
                let min_degree = h.diagonal().into_iter().fold(f64::INFINITY, f64::min);
                if !(min_degree > 0.0) {
                    return Err(Error::ZeroGenerator);
                }
                Ok(h.scaled(1.0 / min_degree))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub family: Family,
    pub m: usize,
    pub replica: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub g_value: f64,
    pub report: std::result::Result<GapBoundReport, String>,
    pub wall_ms: u128,
}

impl ScanRow {
    pub fn ratio(&self) -> Option<f64> {
        self.report.as_ref().ok().and_then(|r| r.ratio)
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.report.as_ref().ok().map(|r| r.verdict)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    /// Worker threads; 1 runs rows in the calling thread.
    pub jobs: usize,
    /// Record wall-clock times. Off by default so the CSV is reproducible
    /// byte for byte; `wall_ms` is then written as 0.
    pub wall_time: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { jobs: 1, wall_time: false }
    }
}

/// Seed of row `(M, replica)`.
pub fn row_seed(master: u64, m: usize, replica: usize) -> u64 {
    rng::derive_seed(master, m as u64, replica as u64)
}

fn run_row(spec: &EnsembleSpec, m: usize, replica: usize, wall_time: bool) -> ScanRow {
    let seed = row_seed(spec.seed, m, replica);
    let start = Instant::now();
    let g_value = spec.g.at(m).unwrap_or(f64::NAN);
    let report = spec
        .g
        .at(m)
        .and_then(|g| {
            let h = spec.instance(m, seed)?;
            let config = BoundConfig::new(g).with_ergodicity_threshold(spec.ergodicity_tol);
            bound::bound_verdict(&h, &config)
        })
        .map_err(|e| e.to_string());
    if let Err(e) = &report {
        log::warn!("{} M={m} replica={replica}: {e}", spec.family.name());
    } else {
        log::debug!("{} M={m} replica={replica} done", spec.family.name());
    }
    ScanRow {
        family: spec.family,
        m,
        replica,
        seed,
        alpha: spec.alpha,
        g_value,
        report,
        wall_ms: if wall_time { start.elapsed().as_millis() } else { 0 },
    }
}

/// Run every `(M, replica)` row of the spec; rows come back in schedule order
/// whatever the number of worker threads.
pub fn scan(spec: &EnsembleSpec, options: ScanOptions) -> Result<Vec<ScanRow>> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = spec.sizes.iter().flat_map(|&m| (0..spec.replicas).map(move |r| (m, r))).collect();
    if options.jobs <= 1 {
        return Ok(tasks.into_iter().map(|(m, r)| run_row(spec, m, r, options.wall_time)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::param(format!("jobs: {e}")))?;
    Ok(pool.install(|| tasks.into_par_iter().map(|(m, r)| run_row(spec, m, r, options.wall_time)).collect()))
}

pub const SCAN_CSV_HEADER: &str =
    "family,M,replica,seed,alpha,min_V,mu2,ratio,sigma,g,s,s_star,min_abs_u,ergodicity,verdict,wall_ms";

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// Scan rows as CSV. Failed rows keep their identifying columns and carry
/// `error` in the verdict column.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let head = format!("{},{},{},{},{}", row.family.name(), row.m, row.replica, row.seed, opt(row.alpha));
        let body = match &row.report {
            Ok(r) => {
                let p = &r.profile;
                let class: ErgodicityClass = p.ergodicity.class;
                format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.min_v,
                    r.mu2,
                    opt(r.ratio),
                    opt(p.sigma),
                    p.g_value,
                    p.s,
                    p.s_star,
                    p.ergodicity.min_abs_u,
                    class,
                    r.verdict
                )
            }
            Err(_) => format!(",,,,{},,,,,error", row.g_value),
        };
        out.push_str(&format!("{head},{body},{}\n", row.wall_ms));
    }
    out
}
