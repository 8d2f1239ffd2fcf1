//! Hermitian operators, their spectra, ground spaces and deflation.

mod eigen;

pub use eigen::MAX_SWEEPS;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// Relative tolerance on `|H - H†|` accepted at construction.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense Hermitian matrix. Real symmetric inputs keep `im = None` and take the
/// real solver path directly; complex inputs are solved through the real
/// embedding `[[A, -B], [B, A]]` of doubled size.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    re: DMatrix<f64>,
    im: Option<DMatrix<f64>>,
    residual: f64,
}

impl HermitianOperator {
    /// Accepts a real matrix that is symmetric within `1e-12·max|H|` and stores its
    /// exact symmetric part.
    pub fn real(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let max = m.amax();
        let residual = (&m - m.transpose()).amax();
        let tol = HERMITICITY_TOL * max;
        if residual > tol {
            return Err(Error::NotHermitian { residual, tol });
        }
        let re = if residual == 0.0 { m } else { (&m + m.transpose()) * 0.5 };
        Ok(HermitianOperator { re, im: None, residual })
    }

    /// Accepts a complex matrix that is Hermitian within `1e-12·max|H|`. Falls back to
    /// the real representation when every imaginary part is zero.
    pub fn complex(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let n = m.nrows();
        let max = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let adj = m.adjoint();
        let residual = m.iter().zip(adj.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let tol = HERMITICITY_TOL * max;
        if residual > tol {
            return Err(Error::NotHermitian { residual, tol });
        }
        let h = (&m + adj) * Complex64::new(0.5, 0.0);
        let re = DMatrix::from_fn(n, n, |i, j| h[(i, j)].re);
        let im = DMatrix::from_fn(n, n, |i, j| h[(i, j)].im);
        let im = if im.iter().all(|&x| x == 0.0) { None } else { Some(im) };
        Ok(HermitianOperator { re, im, residual })
    }

    pub fn size(&self) -> usize {
        self.re.nrows()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn re(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn im(&self) -> Option<&DMatrix<f64>> {
        self.im.as_ref()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.residual
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        let im = self.im.as_ref().map_or(0.0, |b| b[(m, n)]);
        Complex64::new(self.re[(m, n)], im)
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// `max |H_{m,n}|`.
    pub fn max_abs(&self) -> f64 {
        match &self.im {
            None => self.re.amax(),
            Some(b) => self.re.zip_map(b, |x, y| x.hypot(y)).amax(),
        }
    }

    /// Spectral-norm proxy: maximum absolute row sum.
    pub fn norm(&self) -> f64 {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.re.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.re[(i, i)]).collect()
    }

    /// `H + shift·I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.size() {
            out.re[(i, i)] += shift;
        }
        out
    }

    /// `c·H`.
    pub fn scaled(&self, c: f64) -> Self {
        HermitianOperator {
            re: &self.re * c,
            im: self.im.as_ref().map(|b| b * c),
            residual: self.residual * c.abs(),
        }
    }

    /// Sum of two operators of equal size.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), got: other.size() });
        }
        let im = match (&self.im, &other.im) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a + b),
        };
        Ok(HermitianOperator { re: &self.re + &other.re, im, residual: 0.0 })
    }

    /// Real symmetric matrix the solver works on, row-major.
    fn solver_input(&self) -> (Vec<f64>, usize) {
        match &self.im {
            // Symmetric, so the column-major buffer is also the row-major one.
            None => (self.re.as_slice().to_vec(), self.size()),
            Some(b) => {
                let n = self.size();
                let m = 2 * n;
                let mut out = vec![0.0; m * m];
                for i in 0..n {
                    for j in 0..n {
                        let (a, bij) = (self.re[(i, j)], b[(i, j)]);
                        out[i * m + j] = a;
                        out[(i + n) * m + j + n] = a;
                        out[i * m + j + n] = -bij;
                        out[(i + n) * m + j] = bij;
                    }
                }
                (out, m)
            }
        }
    }

    /// `H·v` for a complex vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j) * v[j]).sum())
            .collect()
    }
}

/// One distinct eigenvalue and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub value: f64,
    pub mult: usize,
}

/// Which eigenvectors to compute alongside the eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectors {
    None,
    /// Only the lowest distinct level.
    Ground,
    All,
}

/// Eigenvalues (ascending, with multiplicity) and orthonormal eigenvectors for
/// the leading `vectors.len()` of them.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub levels: Vec<Level>,
    pub residuals: Vec<f64>,
    pub degeneracy_tol: f64,
    /// Set when some spacing sits within a factor 10 above the clustering
    /// tolerance, so the level structure depends on the tolerance choice.
    pub near_degenerate: bool,
    norm: f64,
}

/// `1e-8·(E_max − E_min + 1)`.
pub fn default_degeneracy_tol(eigenvalues: &[f64]) -> f64 {
    match (eigenvalues.first(), eigenvalues.last()) {
        (Some(lo), Some(hi)) => 1e-8 * (hi - lo + 1.0),
        _ => 1e-8,
    }
}

/// Single-linkage clustering of sorted eigenvalues.
pub fn cluster_levels(eigenvalues: &[f64], tol: f64) -> Vec<Level> {
    let mut levels: Vec<Level> = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        if i == eigenvalues.len() || eigenvalues[i] - eigenvalues[i - 1] > tol {
            let block = &eigenvalues[start..i];
            levels.push(Level {
                value: block.iter().sum::<f64>() / block.len() as f64,
                mult: block.len(),
            });
            start = i;
        }
    }
    levels
}

impl Spectrum {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.size() - 1]
    }

    pub fn residual_max(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// The operator-norm proxy used for residual tolerances.
    pub fn operator_norm(&self) -> f64 {
        self.norm
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eigenvalues": self.eigenvalues,
            "levels": self.levels,
            "residual_max": self.residual_max(),
        })
    }
}

/// Full eigendecomposition.
pub fn eigendecompose(h: &HermitianOperator) -> Result<Spectrum> {
    eigendecompose_with(h, Vectors::All)
}

/// Eigenvalues only, computed with the same arithmetic as [`eigendecompose`].
pub fn eigenvalues(h: &HermitianOperator) -> Result<Vec<f64>> {
    Ok(eigendecompose_with(h, Vectors::None)?.eigenvalues)
}

pub fn eigendecompose_with(h: &HermitianOperator, which: Vectors) -> Result<Spectrum> {
    let n = h.size();
    if n == 0 {
        return Err(Error::param("empty operator"));
    }
    let (buf, m) = h.solver_input();
    let tri = eigen::tridiagonalize(buf, m);
    let mut d = tri.diag.clone();
    let mut e = tri.off.clone();

    let mut zt = if which == Vectors::All {
        let q = tri.accumulate();
        let mut zt = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                zt[j * m + i] = q[i * m + j];
            }
        }
        Some(zt)
    } else {
        None
    };
    eigen::ql_implicit(&mut d, &mut e, zt.as_deref_mut())?;
    let order = eigen::ascending_order(&d);
    let sorted: Vec<f64> = order.iter().map(|&i| d[i]).collect();

    // Raw real eigenvectors (length m) in ascending eigenvalue order.
    let raw: Vec<Vec<f64>> = match which {
        Vectors::None => Vec::new(),
        Vectors::All => {
            let zt = zt.expect("accumulated");
            order.iter().map(|&j| zt[j * m..(j + 1) * m].to_vec()).collect()
        }
        Vectors::Ground => {
            let tol = default_degeneracy_tol(&sorted);
            let count = sorted.iter().take_while(|&&x| x - sorted[0] <= tol * m as f64).count();
            let count = cluster_levels(&sorted[..count.max(1)], tol)[0].mult;
            let targets = &sorted[..count];
            let mut vs = eigen::tridiagonal_vectors(&tri.diag, &tri.off, targets, tol);
            for v in vs.iter_mut() {
                tri.back_transform(v);
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
            }
            vs
        }
    };

    let (eigenvalues, vectors) = if h.is_real() {
        let vecs = raw
            .into_iter()
            .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
            .collect();
        (sorted, vecs)
    } else {
        fold_embedding(&sorted, raw, n)
    };

    let degeneracy_tol = default_degeneracy_tol(&eigenvalues);
    let levels = cluster_levels(&eigenvalues, degeneracy_tol);
    let near_degenerate = eigenvalues
        .windows(2)
        .any(|w| w[1] - w[0] > degeneracy_tol && w[1] - w[0] < 10.0 * degeneracy_tol);
    let norm = h.norm();
    let residuals = vectors
        .iter()
        .zip(&eigenvalues)
        .map(|(v, &lam)| {
            h.apply(v).iter().zip(v).map(|(a, b)| (a - b * lam).norm()).fold(0.0, f64::max)
        })
        .collect();
    Ok(Spectrum { eigenvalues, vectors, levels, residuals, degeneracy_tol, near_degenerate, norm })
}

/// Recover the complex spectrum from the doubled real embedding. Every
/// eigenvalue appears twice; the complex eigenvectors of a cluster are obtained
/// by Gram–Schmidt on `x + i·y` over the cluster's real vectors.
fn fold_embedding(sorted: &[f64], raw: Vec<Vec<f64>>, n: usize) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let eigenvalues: Vec<f64> = sorted.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    if raw.is_empty() {
        return (eigenvalues, Vec::new());
    }
    let tol = default_degeneracy_tol(sorted);
    let mut vectors: Vec<Vec<Complex64>> = Vec::new();
    let mut start = 0;
    let avail = raw.len();
    while start < avail {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] - sorted[end - 1] <= tol {
            end += 1;
        }
        let want = (end - start) / 2;
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for r in &raw[start..end.min(avail)] {
            if basis.len() == want {
                break;
            }
            let mut z: Vec<Complex64> = (0..n).map(|i| Complex64::new(r[i], r[i + n])).collect();
            for _ in 0..2 {
                for b in &basis {
                    let dot: Complex64 = b.iter().zip(&z).map(|(bi, zi)| bi.conj() * zi).sum();
                    z.iter_mut().zip(b).for_each(|(zi, bi)| *zi -= dot * bi);
                }
            }
            let nrm = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                z.iter_mut().for_each(|x| *x /= nrm);
                basis.push(z);
            }
        }
        vectors.extend(basis);
        start = end;
    }
    (eigenvalues, vectors)
}

/// Lowest eigenvalue, its degeneracy and scaled components `u_n = √M·⟨n|E₁⟩`.
#[derive(Debug, Clone)]
pub struct GroundSpace {
    pub e1: f64,
    pub k: usize,
    pub vectors: Vec<Vec<Complex64>>,
    pub u: Vec<Vec<Complex64>>,
}

impl GroundSpace {
    pub fn size(&self) -> usize {
        self.u[0].len()
    }

    /// Ground space from explicitly given vectors (orthonormalized here).
    pub fn from_vectors(e1: f64, vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::param("ground space needs at least one vector"));
        }
        let m = vectors[0].len();
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for mut z in vectors {
            if z.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: z.len() });
            }
            for b in &basis {
                let dot: Complex64 = b.iter().zip(&z).map(|(bi, zi)| bi.conj() * zi).sum();
                z.iter_mut().zip(b).for_each(|(zi, bi)| *zi -= dot * bi);
            }
            let nrm = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if nrm < 1e-12 {
                return Err(Error::param("ground vectors are linearly dependent"));
            }
            z.iter_mut().for_each(|x| *x /= nrm);
            basis.push(z);
        }
        let scale = (m as f64).sqrt();
        let u = basis.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
        Ok(GroundSpace { e1, k: basis.len(), vectors: basis, u })
    }

    /// `|u_n^{(i)}|²`.
    pub fn abs_u_sq(&self, i: usize) -> Vec<f64> {
        self.u[i].iter().map(|x| x.norm_sqr()).collect()
    }

    /// Uniform real ground state `u ≡ 1` with `E₁ = 0`.
    pub fn uniform(m: usize) -> Self {
        let c = 1.0 / (m as f64).sqrt();
        GroundSpace {
            e1: 0.0,
            k: 1,
            vectors: vec![vec![Complex64::new(c, 0.0); m]],
            u: vec![vec![Complex64::new(1.0, 0.0); m]],
        }
    }
}

/// Ground space of `spec` with the level cut at `degeneracy_tol` above the minimum.
pub fn ground_space(spec: &Spectrum, degeneracy_tol: f64) -> Result<GroundSpace> {
    let e_min = spec.min();
    let k = spec.eigenvalues.iter().take_while(|&&x| x - e_min <= degeneracy_tol).count().max(1);
    if spec.vectors.len() < k {
        return Err(Error::DimensionMismatch { expected: k, got: spec.vectors.len() });
    }
    let m = spec.size();
    let scale = (m as f64).sqrt();
    let vectors: Vec<Vec<Complex64>> = spec.vectors[..k].to_vec();
    let e1 = spec.eigenvalues[..k].iter().sum::<f64>() / k as f64;
    let u = vectors.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
    Ok(GroundSpace { e1, k, vectors, u })
}

/// Ground space with the spectrum's own clustering tolerance.
pub fn default_ground_space(spec: &Spectrum) -> Result<GroundSpace> {
    ground_space(spec, spec.degeneracy_tol)
}

/// `μ₂ = E₂ − E₁` between the two lowest distinct levels.
pub fn gap(spec: &Spectrum) -> Result<f64> {
    match spec.levels.as_slice() {
        [first, second, ..] => Ok(second.value - first.value),
        _ => Err(Error::NoGap),
    }
}

/// Ground-state level: the minimal eigenvalue.
pub fn gsl(h: &HermitianOperator) -> Result<f64> {
    Ok(eigenvalues(h)?[0])
}

/// `F = H + Σ_i (λ_i + E₁)·P_i`, with `P_i` the projector on the `i`-th ground vector.
#[derive(Debug, Clone)]
pub struct DeflatedOperator {
    pub operator: HermitianOperator,
    pub shifts: Vec<f64>,
    pub e1: f64,
}

pub fn deflate(h: &HermitianOperator, gs: &GroundSpace, lambdas: &[f64]) -> Result<DeflatedOperator> {
    if lambdas.len() != gs.k {
        return Err(Error::DimensionMismatch { expected: gs.k, got: lambdas.len() });
    }
    if gs.size() != h.size() {
        return Err(Error::DimensionMismatch { expected: h.size(), got: gs.size() });
    }
    let n = h.size();
    let complex = !h.is_real() || gs.vectors.iter().flatten().any(|z| z.im != 0.0);
    let mut re = h.re().clone();
    let mut im = h.im().cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
    for (v, &lambda) in gs.vectors.iter().zip(lambdas) {
        let w = lambda + gs.e1;
        for i in 0..n {
            for j in 0..n {
                let p = v[i] * v[j].conj() * w;
                re[(i, j)] += p.re;
                im[(i, j)] += p.im;
            }
        }
    }
    let operator = if complex {
        let z = DMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
        HermitianOperator::complex(z)?
    } else {
        HermitianOperator::real(re)?
    };
    Ok(DeflatedOperator { operator, shifts: lambdas.to_vec(), e1: gs.e1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeflationGap {
    pub gap: f64,
    pub lambda_max: f64,
    /// `GSL[F(λ_max)]` and `GSL[F(λ_max/2)]` agree, so the plateau was reached.
    pub plateau: bool,
}

/// Gap read off the deflation plateau: `GSL[F(λ_max,…,λ_max)]` for the operator
/// shifted so that `E₁ = 0`. `λ_max` defaults to `10·(E_max − E_min)`.
pub fn gap_via_deflation(
    h: &HermitianOperator,
    gs: &GroundSpace,
    lambda_max: Option<f64>,
) -> Result<DeflationGap> {
    let lambda_max = match lambda_max {
        Some(l) => l,
        None => {
            let ev = eigenvalues(h)?;
            10.0 * (ev[ev.len() - 1] - ev[0])
        }
    };
    if !(lambda_max > 0.0) {
        return Err(Error::param("lambda_max must be positive"));
    }
    let base = h.shifted(-gs.e1);
    let centered = GroundSpace { e1: 0.0, ..gs.clone() };
    let at = |l: f64| -> Result<f64> {
        let f = deflate(&base, &centered, &vec![l; gs.k])?;
        gsl(&f.operator)
    };
    let top = at(lambda_max)?;
    let half = at(0.5 * lambda_max)?;
    let tol = 1e-9 * h.norm().max(1.0);
    Ok(DeflationGap { gap: top, lambda_max, plateau: (top - half).abs() <= tol })
}
