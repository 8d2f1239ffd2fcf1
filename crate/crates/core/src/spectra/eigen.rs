//! Dense real-symmetric eigensolver.
//!
//! Householder reduction to tridiagonal form followed by the implicit-shift QL
//! iteration. The reduction works on the lower triangle of a row-major buffer so
//! that every inner loop streams a contiguous row. Eigenvectors can be produced
//! for the whole spectrum (accumulated transforms) or for a chosen set of
//! eigenvalues (tridiagonal inverse iteration plus back-transformation), which
//! keeps the cost of large problems at the reduction alone.

use crate::{Error, Result};

/// Maximum QL sweeps spent on any single eigenvalue.
pub const MAX_SWEEPS: usize = 50;

/// Output of the Householder reduction. The reflectors stay in the lower triangle
/// of `a`; `tau[i]` is the normalizer of the reflector built from row `i`.
pub(crate) struct Tridiagonal {
    pub n: usize,
    pub a: Vec<f64>,
    pub tau: Vec<f64>,
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i - 1` and `i`; `off[0] = 0`.
    pub off: Vec<f64>,
}

pub(crate) fn tridiagonalize(mut a: Vec<f64>, n: usize) -> Tridiagonal {
    debug_assert_eq!(a.len(), n * n);
    let mut off = vec![0.0; n];
    let mut tau = vec![0.0; n];
    let mut work = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        let (head, tail) = a.split_at_mut(i * n);
        let u = &mut tail[..i];
        if l > 0 {
            let scale: f64 = u.iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                off[i] = u[l];
            } else {
                for x in u.iter_mut() {
                    *x /= scale;
                    h += *x * *x;
                }
                let f = u[l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                off[i] = scale * g;
                h -= f * g;
                u[l] = f - g;

                // p = A u / h over the leading (l+1) block, lower triangle only.
                let p = &mut work[..i];
                p.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..i {
                    let row = &head[j * n..j * n + j + 1];
                    let uj = u[j];
                    let mut acc = row[j] * uj;
                    for k in 0..j {
                        acc += row[k] * u[k];
                        p[k] += row[k] * uj;
                    }
                    p[j] += acc;
                }
                let mut f = 0.0;
                for j in 0..i {
                    p[j] /= h;
                    f += p[j] * u[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    p[j] -= hh * u[j];
                }
                for j in 0..i {
                    let (uj, qj) = (u[j], p[j]);
                    let row = &mut head[j * n..j * n + j + 1];
                    for k in 0..=j {
                        row[k] -= uj * p[k] + qj * u[k];
                    }
                }
            }
        } else {
            off[i] = u[l];
        }
        tau[i] = h;
    }

    let diag = (0..n).map(|i| a[i * n + i]).collect();
    Tridiagonal { n, a, tau, diag, off }
}

impl Tridiagonal {
    /// Form the orthogonal matrix `Q` with `A = Q T Qᵀ`, row-major.
    pub fn accumulate(&self) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for i in 0..n {
            if self.tau[i] != 0.0 {
                let u = &self.a[i * n..i * n + i];
                let h = self.tau[i];
                g[..i].iter_mut().for_each(|x| *x = 0.0);
                for k in 0..i {
                    let uk = u[k];
                    let row = &q[k * n..k * n + i];
                    for j in 0..i {
                        g[j] += uk * row[j];
                    }
                }
                for k in 0..i {
                    let s = u[k] / h;
                    let row = &mut q[k * n..k * n + i];
                    for j in 0..i {
                        row[j] -= s * g[j];
                    }
                }
            }
            q[i * n + i] = 1.0;
        }
        q
    }

    /// Map an eigenvector of the tridiagonal matrix back to the original basis.
    pub fn back_transform(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 1..n {
            let h = self.tau[i];
            if h == 0.0 {
                continue;
            }
            let u = &self.a[i * n..i * n + i];
            let dot: f64 = u.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            let s = dot / h;
            for k in 0..i {
                x[k] -= s * u[k];
            }
        }
    }
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// `diag` and `off` follow the [`Tridiagonal`] layout and are overwritten; the
/// eigenvalues end up in `diag`, unsorted. When `zt` is given it holds the
/// transposed transform (row `j` is the `j`-th basis vector) and receives the
/// rotations, so its rows become eigenvectors.
pub(crate) fn ql_implicit(
    diag: &mut [f64],
    off: &mut [f64],
    mut zt: Option<&mut [f64]>,
) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[1..]);
    let d = diag;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iter == MAX_SWEEPS {
                return Err(Error::NoConvergence(m));
            }
            iter += 1;

            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = zt.as_deref_mut() {
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        let f = zi1[k];
                        zi1[k] = s * zi[k] + c * f;
                        zi[k] = c * zi[k] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    off.iter_mut().for_each(|x| *x = 0.0);
    Ok(())
}

/// Ascending order of `values`, ties broken by position.
pub(crate) fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Gaussian elimination with partial pivoting of `T - shift·I`, kept for
/// repeated solves during inverse iteration.
struct ShiftedTridiagonalLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedTridiagonalLu {
    fn new(diag: &[f64], off: &[f64], shift: f64, tiny: f64) -> Self {
        let n = diag.len();
        let mut lu = ShiftedTridiagonalLu {
            u0: vec![0.0; n],
            u1: vec![0.0; n],
            u2: vec![0.0; n],
            mult: vec![0.0; n],
            swapped: vec![false; n],
        };
        let sup = |i: usize| if i + 1 < n { off[i + 1] } else { 0.0 };
        let (mut p0, mut p1, mut p2) = (diag[0] - shift, sup(0), 0.0);
        for i in 0..n.saturating_sub(1) {
            let c = off[i + 1];
            let a_next = diag[i + 1] - shift;
            let b_next = sup(i + 1);
            if p0.abs() >= c.abs() {
                let piv = if p0 == 0.0 { tiny } else { p0 };
                let m = c / piv;
                lu.u0[i] = piv;
                lu.u1[i] = p1;
                lu.u2[i] = p2;
                lu.mult[i] = m;
                p0 = a_next - m * p1;
                p1 = b_next - m * p2;
            } else {
                let m = p0 / c;
                lu.u0[i] = c;
                lu.u1[i] = a_next;
                lu.u2[i] = b_next;
                lu.mult[i] = m;
                lu.swapped[i] = true;
                p0 = p1 - m * a_next;
                p1 = p2 - m * b_next;
            }
            p2 = 0.0;
        }
        lu.u0[n - 1] = if p0 == 0.0 { tiny } else { p0 };
        for x in lu.u0.iter_mut() {
            if x.abs() < tiny {
                *x = tiny.copysign(*x);
            }
        }
        lu
    }

    fn solve(&self, y: &mut [f64]) {
        let n = y.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.mult[i] * y[i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v -= self.u1[i] * y[i + 1];
            }
            if i + 2 < n {
                v -= self.u2[i] * y[i + 2];
            }
            y[i] = v / self.u0[i];
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    nrm
}

/// Eigenvectors of the tridiagonal matrix for the eigenvalues in `targets`
/// (ascending). Vectors belonging to nearby eigenvalues are orthogonalized
/// against each other.
pub(crate) fn tridiagonal_vectors(
    diag: &[f64],
    off: &[f64],
    targets: &[f64],
    cluster_tol: f64,
) -> Vec<Vec<f64>> {
    let n = diag.len();
    let norm = diag
        .iter()
        .zip(off)
        .map(|(d, e)| d.abs() + 2.0 * e.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * norm;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(targets.len());
    let mut cluster_start = 0;
    for (t, &lambda) in targets.iter().enumerate() {
        if t > 0 && (lambda - targets[t - 1]).abs() > cluster_tol {
            cluster_start = t;
        }
        let lu = ShiftedTridiagonalLu::new(diag, off, lambda, tiny);
        // Deterministic, non-degenerate start vector.
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75 * (t as f64 + 1.0)).sin())
            .collect();
        normalize(&mut x);
        for _ in 0..4 {
            lu.solve(&mut x);
            for prev in &out[cluster_start..t] {
                let dot: f64 = prev.iter().zip(&x).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(prev).for_each(|(xi, pi)| *xi -= dot * pi);
            }
            normalize(&mut x);
        }
        out.push(x);
    }
    out
}
