//! Lax matrix, symmetric tridiagonal eigen-decomposition, localization
//! centers and the resolvent corner product.

use crate::assign::{max_weight_assignment, perfect_matching, Edge};
use crate::dynamics::TodaState;
use crate::ensemble::FlaschkaState;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Symmetric tridiagonal matrix with diagonal `b` and off-diagonal `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaxMatrix {
    pub n1: i64,
    pub n2: i64,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl LaxMatrix {
    pub fn new(n1: i64, diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(Error::Domain(format!("tridiagonal shape mismatch: {} diagonal, {} off-diagonal", diag.len(), offdiag.len())));
        }
        Ok(Self { n1, n2: n1 + diag.len() as i64 - 1, diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry `(i, j)` by 0-based offsets.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.offdiag[i]
        } else if j + 1 == i {
            self.offdiag[j]
        } else {
            0.0
        }
    }

    /// `y = L x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.offdiag[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.diag.iter().chain(&self.offdiag).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Short description for error messages.
    pub fn fingerprint(&self) -> String {
        let s: f64 = self.diag.iter().chain(&self.offdiag).sum();
        format!("N={} n1={} sum={s:.17e} max={:.6e}", self.dim(), self.n1, self.max_abs())
    }
}

/// Lax matrix of a state; the pinned `a_{n2} = 0` is dropped.
pub fn build_lax(state: &FlaschkaState) -> LaxMatrix {
    let n = state.len();
    LaxMatrix { n1: state.n1, n2: state.n2, diag: state.b.clone(), offdiag: state.a[..n - 1].to_vec() }
}

/// Eigen-decomposition: eigenvalues descending, eigenvectors stored
/// vector-major (`vectors[j * n + i]` is component `i` of `u_j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub n1: i64,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<f64>,
    pub zeta: f64,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[j * n..(j + 1) * n]
    }

    /// Worst `(‖u‖ − 1, max |⟨u_i, u_j⟩|, max residual / (1 + |λ|))` over all vectors.
    /// The inner-product scan is quadratic in `N`.
    pub fn invariants(&self, lax: &LaxMatrix) -> (f64, f64, f64) {
        let n = self.dim();
        let mut norm_err = 0.0f64;
        let mut resid = 0.0f64;
        for j in 0..n {
            let u = self.vector(j);
            let nn: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            norm_err = norm_err.max((nn - 1.0).abs());
            let lu = lax.mul(u);
            let r: f64 = lu.iter().zip(u).map(|(x, y)| (x - self.eigenvalues[j] * y).powi(2)).sum::<f64>().sqrt();
            resid = resid.max(r / (1.0 + self.eigenvalues[j].abs()));
        }
        let mut ortho = 0.0f64;
        for j in 0..n {
            let u = self.vector(j);
            for k in j + 1..n {
                let v = self.vector(k);
                ortho = ortho.max(u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>().abs());
            }
        }
        (norm_err, ortho, resid)
    }
}

const QL_MAX_ITER: usize = 60;

/// Implicit-shift QL on `(d, e)` where `e[i]` couples `i` and `i + 1` and
/// `e.len() == d.len()` (last entry ignored). Rotations are applied to the
/// vector-major `z` when given.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
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
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(Error::NoConvergence(format!("tridiagonal QL: no convergence at index {l} after {QL_MAX_ITER} sweeps")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
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
                if let Some(z) = z.as_deref_mut() {
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
    Ok(())
}

/// Eigenvalues only, descending.
pub fn eigenvalues(lax: &LaxMatrix) -> Result<Vec<f64>> {
    let mut d = lax.diag.clone();
    let mut e = lax.offdiag.clone();
    e.push(0.0);
    tql(&mut d, &mut e, None).map_err(|err| annotate(err, lax))?;
    d.sort_by(|x, y| y.total_cmp(x));
    Ok(d)
}

fn annotate(err: Error, lax: &LaxMatrix) -> Error {
    match err {
        Error::NoConvergence(m) => Error::NoConvergence(format!("{m}; matrix {}", lax.fingerprint())),
        other => other,
    }
}

/// Full QL with eigenvector accumulation on one block; returns
/// `(values, vector-major vectors)` unsorted.
fn block_ql(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = d.len();
    let mut dd = d.to_vec();
    let mut ee = e.to_vec();
    ee.push(0.0);
    let mut z = vec![0.0; m * m];
    for i in 0..m {
        z[i * m + i] = 1.0;
    }
    tql(&mut dd, &mut ee, Some(&mut z))?;
    Ok((dd, z))
}

/// Eigenvector of an unreduced block at `lambda` from the twisted
/// factorization with twist index `r`; candidates in `banned` are skipped.
fn twisted_vector(d: &[f64], e: &[f64], lambda: f64, banned: &[usize]) -> (Vec<f64>, usize) {
    let m = d.len();
    let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + lambda.abs());
    let guard = |x: f64| if x.abs() < tiny { tiny.copysign(if x == 0.0 { 1.0 } else { x }) } else { x };
    let mut dp = vec![0.0; m];
    let mut dm = vec![0.0; m];
    dp[0] = guard(d[0] - lambda);
    for i in 1..m {
        dp[i] = guard(d[i] - lambda - e[i - 1] * e[i - 1] / dp[i - 1]);
    }
    dm[m - 1] = guard(d[m - 1] - lambda);
    for i in (0..m - 1).rev() {
        dm[i] = guard(d[i] - lambda - e[i] * e[i] / dm[i + 1]);
    }
    let mut r = usize::MAX;
    let mut best = f64::INFINITY;
    for i in 0..m {
        if banned.contains(&i) {
            continue;
        }
        let g = (dp[i] + dm[i] - (d[i] - lambda)).abs();
        if g < best {
            best = g;
            r = i;
        }
    }
    let mut z = vec![0.0; m];
    z[r] = 1.0;
    for i in (0..r).rev() {
        z[i] = -e[i] * z[i + 1] / dp[i];
    }
    for i in r + 1..m {
        z[i] = -e[i - 1] * z[i - 1] / dm[i];
    }
    let nn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter_mut().for_each(|v| *v /= nn);
    (z, r)
}

fn block_residual(d: &[f64], e: &[f64], lambda: f64, z: &[f64]) -> f64 {
    let m = d.len();
    let mut s = 0.0;
    for i in 0..m {
        let mut v = (d[i] - lambda) * z[i];
        if i > 0 {
            v += e[i - 1] * z[i - 1];
        }
        if i + 1 < m {
            v += e[i] * z[i + 1];
        }
        s += v * v;
    }
    s.sqrt()
}

/// Blocks of size at most this use QL with vector accumulation directly.
const SMALL_BLOCK: usize = 48;
/// Eigenvalues closer than this (relative to the block scale) are orthogonalized together.
const CLUSTER_GAP: f64 = 1e-4;

/// Eigenpairs of one unreduced block via QL eigenvalues and twisted
/// factorization vectors, falling back to full QL when checks fail.
fn block_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = d.len();
    if m <= SMALL_BLOCK {
        return block_ql(d, e);
    }
    let mut vals = d.to_vec();
    let mut ee = e.to_vec();
    ee.push(0.0);
    tql(&mut vals, &mut ee, None)?;
    vals.sort_by(|x, y| y.total_cmp(x));
    let scale = d.iter().chain(e).fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut vecs = vec![0.0; m * m];
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && vals[end - 1] - vals[end] < CLUSTER_GAP * scale {
            end += 1;
        }
        let mut twists: Vec<usize> = Vec::new();
        for j in start..end {
            let (mut z, r) = twisted_vector(d, e, vals[j], &twists);
            twists.push(r);
            for k in start..j {
                let u = &vecs[k * m..(k + 1) * m];
                let dot: f64 = u.iter().zip(&z).map(|(x, y)| x * y).sum();
                z.iter_mut().zip(u).for_each(|(zz, uu)| *zz -= dot * uu);
            }
            let nn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(nn > 0.5) {
                return block_ql(d, e);
            }
            z.iter_mut().for_each(|v| *v /= nn);
            if block_residual(d, e, vals[j], &z) > 1e-11 * (1.0 + vals[j].abs()) {
                return block_ql(d, e);
            }
            vecs[j * m..(j + 1) * m].copy_from_slice(&z);
        }
        start = end;
    }
    Ok((vals, vecs))
}

/// Full spectrum with orthonormal eigenvectors, eigenvalues descending,
/// each vector's first nonzero entry positive.
///
/// The matrix is split at negligible couplings; each unreduced block is
/// solved independently so the cost is near-quadratic in practice.
pub fn eig_tridiagonal(lax: &LaxMatrix) -> Result<SpectralData> {
    let n = lax.dim();
    let mut pairs: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n {
            let dd = lax.diag[end].abs() + lax.diag[end + 1].abs();
            if lax.offdiag[end].abs() <= f64::EPSILON * dd {
                break;
            }
            end += 1;
        }
        let d = &lax.diag[start..=end];
        let e = &lax.offdiag[start..end];
        let (vals, vecs) = block_eigen(d, e).map_err(|err| annotate(err, lax))?;
        let m = d.len();
        for (j, &v) in vals.iter().enumerate() {
            pairs.push((v, start, vecs[j * m..(j + 1) * m].to_vec()));
        }
        start = end + 1;
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (j, (v, off, local)) in pairs.into_iter().enumerate() {
        eigenvalues.push(v);
        let sign = match local.iter().find(|x| **x != 0.0) {
            Some(x) if *x < 0.0 => -1.0,
            _ => 1.0,
        };
        for (k, x) in local.iter().enumerate() {
            vectors[j * n + off + k] = sign * x;
        }
    }
    Ok(SpectralData { n1: lax.n1, eigenvalues, vectors, zeta: 1.0 / (2.0 * n as f64) })
}

/// Bijection between eigen-indices and sites with `|u_j(φ(j))| ≥ ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMap {
    pub n1: i64,
    /// Site offset (from `n1`) for each eigen-index.
    pub phi: Vec<usize>,
    /// Eigen-index for each site offset.
    pub inverse: Vec<usize>,
    pub zeta: f64,
    /// Smallest realized `|u_j(φ(j))|`.
    pub min_weight: f64,
    /// Eigen-indices whose argmax site was shared with another.
    pub collisions: usize,
    /// Whether the threshold-graph matching was needed.
    pub fallback: bool,
}

impl LocalizationMap {
    pub fn site(&self, j: usize) -> i64 {
        self.n1 + self.phi[j] as i64
    }
}

const TOP_K: usize = 8;

fn argmax_abs(u: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    best
}

fn top_k(u: &[f64], k: usize, zeta: f64) -> Vec<Edge> {
    let mut idx: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() >= zeta).collect();
    idx.sort_by(|&x, &y| u[y].abs().total_cmp(&u[x].abs()).then(x.cmp(&y)));
    idx.truncate(k);
    idx.into_iter().map(|i| Edge { col: i, weight: u[i].abs() }).collect()
}

/// Localization centers: argmax per eigenvector, with collisions repaired by a
/// maximum-weight assignment on each vector's top entries, growing the set of
/// reassigned vectors until it is feasible; a threshold-graph matching at
/// `ζ = (2N)^{-1}` is the last resort.
pub fn localization_centers(spec: &SpectralData) -> Result<LocalizationMap> {
    let n = spec.dim();
    let zeta = 1.0 / (2.0 * n as f64);
    let argmax: Vec<usize> = (0..n).map(|j| argmax_abs(spec.vector(j))).collect();
    let mut owners = vec![0usize; n];
    for &s in &argmax {
        owners[s] += 1;
    }
    let collisions = argmax.iter().filter(|&&s| owners[s] > 1).count();
    let mut phi = argmax.clone();
    let mut fallback = false;
    if collisions > 0 {
        let mut affected: Vec<bool> = argmax.iter().map(|&s| owners[s] > 1).collect();
        let candidates: Vec<Vec<Edge>> = (0..n).map(|j| top_k(spec.vector(j), TOP_K, zeta)).collect();
        let mut solved = None;
        loop {
            // Sites held by unaffected vectors stay put.
            let mut held = vec![false; n];
            for j in 0..n {
                if !affected[j] {
                    held[argmax[j]] = true;
                }
            }
            let rows: Vec<usize> = (0..n).filter(|&j| affected[j]).collect();
            let edges: Vec<Vec<Edge>> = rows.iter().map(|&j| candidates[j].iter().copied().filter(|e| !held[e.col]).collect()).collect();
            if let Some(cols) = max_weight_assignment(&edges, n) {
                solved = Some((rows, cols));
                break;
            }
            // Release every vector holding a site that an affected vector wants.
            let mut grew = false;
            for &j in &rows {
                for e in &candidates[j] {
                    if held[e.col] {
                        for k in 0..n {
                            if !affected[k] && argmax[k] == e.col {
                                affected[k] = true;
                                grew = true;
                            }
                        }
                    }
                }
            }
            if !grew {
                break;
            }
        }
        match solved {
            Some((rows, cols)) => {
                for (j, c) in rows.into_iter().zip(cols) {
                    phi[j] = c;
                }
            }
            None => {
                fallback = true;
                let adj: Vec<Vec<usize>> = (0..n).map(|j| (0..n).filter(|&i| spec.vector(j)[i].abs() >= zeta).collect()).collect();
                phi = perfect_matching(&adj, n).ok_or_else(|| Error::Inconsistency(format!("no {zeta:e}-localization bijection found for N = {n}")))?;
            }
        }
    }
    let mut inverse = vec![usize::MAX; n];
    let mut min_weight = f64::INFINITY;
    for (j, &s) in phi.iter().enumerate() {
        if inverse[s] != usize::MAX {
            return Err(Error::Inconsistency(format!("site offset {s} assigned twice")));
        }
        inverse[s] = j;
        min_weight = min_weight.min(spec.vector(j)[s].abs());
    }
    if min_weight < zeta {
        return Err(Error::Inconsistency(format!("center weight {min_weight:e} below {zeta:e}")));
    }
    Ok(LocalizationMap { n1: spec.n1, phi, inverse, zeta, min_weight, collisions, fallback })
}

/// `Q_j = q_{φ(j)}` for every eigen-index.
pub fn quasiparticle_positions(spec: &SpectralData, map: &LocalizationMap, toda: &TodaState) -> Result<Vec<f64>> {
    let n = spec.dim();
    if map.phi.len() != n || toda.len() != n || map.n1 != toda.n1 || spec.n1 != toda.n1 {
        return Err(Error::Inconsistency(format!("index mismatch: spectrum {n} at {}, map {} at {}, state {} at {}", spec.n1, map.phi.len(), map.n1, toda.len(), toda.n1)));
    }
    Ok(map.phi.iter().map(|&s| toda.q[s]).collect())
}

/// Exponential decay fit `|u_j(i)| ≈ C e^{−c |i − φ|}` around the argmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Largest `|u_j(i)| / (C e^{−c|i−φ|})` over the fitted entries.
    pub max_tail: f64,
    pub center: usize,
    pub points: usize,
}

/// Least-squares fit of `log|u_j(i)|` against distance from the argmax site
/// over entries above `1e-300`.
pub fn localization_profile(spec: &SpectralData, j: usize) -> Result<DecayFit> {
    let n = spec.dim();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j as i64, lo: 0, hi: n as i64 - 1 });
    }
    let u = spec.vector(j);
    let center = argmax_abs(u);
    let pts: Vec<(f64, f64)> = (0..n).filter(|&i| u[i].abs() > 1e-300).map(|i| ((i as f64 - center as f64).abs(), u[i].abs().ln())).collect();
    if pts.len() < 2 {
        return Ok(DecayFit { rate: f64::INFINITY, intercept: 0.0, max_tail: 1.0, center, points: pts.len() });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = crate::stats::linear_fit(&xs, &ys);
    let max_tail = pts.iter().map(|&(x, y)| (y - (fit.intercept + fit.slope * x)).exp()).fold(0.0f64, f64::max);
    Ok(DecayFit { rate: -fit.slope, intercept: fit.intercept, max_tail, center, points: pts.len() })
}

/// `|G_{n1 n2}(E)| = ∏ |a_i| · ∏ |λ_k − E|^{-1}`, evaluated in logs.
pub fn resolvent_corner_product(lax: &LaxMatrix, energy: f64) -> Result<f64> {
    let eig = eigenvalues(lax)?;
    let gap = eig.iter().fold(f64::INFINITY, |m, l| m.min((l - energy).abs()));
    if gap <= 1e-12 {
        return Err(Error::NearSingular(format!("energy {energy} within {gap:e} of the spectrum")));
    }
    let mut log = 0.0;
    for a in &lax.offdiag {
        if *a == 0.0 {
            return Ok(0.0);
        }
        log += a.abs().ln();
    }
    for l in &eig {
        log -= (l - energy).abs().ln();
    }
    Ok(log.exp())
}

/// Bound and separation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BndSep {
    pub bnd: bool,
    pub sep: bool,
    pub min_gap: f64,
    pub max_abs: f64,
}

/// `bnd`: all matrix entries and eigenvalues within `bound`;
/// `sep`: all consecutive eigenvalue gaps at least `delta`.
pub fn bnd_sep_check(lax: &LaxMatrix, spec: &SpectralData, bound: f64, delta: f64) -> BndSep {
    let max_eig = spec.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_abs = lax.max_abs().max(max_eig);
    let min_gap = spec.eigenvalues.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    BndSep { bnd: max_abs <= bound, sep: min_gap >= delta, min_gap, max_abs }
}

/// Matches a new descending spectrum to a reference one by value: identity is
/// the sorted index, valid when every eigenvalue moved by at most `tol`.
pub fn match_by_value(reference: &[f64], current: &[f64], tol: f64) -> Result<f64> {
    if reference.len() != current.len() {
        return Err(Error::Inconsistency(format!("spectrum sizes differ: {} vs {}", reference.len(), current.len())));
    }
    let drift = reference.iter().zip(current).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if drift > tol {
        return Err(Error::Inconsistency(format!("eigenvalue drift {drift:e} exceeds {tol:e}")));
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_thermal, ThermalParams};
    use nalgebra::DMatrix;

    fn thermal_lax(n: i64, theta: f64, seed: u64) -> LaxMatrix {
        let p = ThermalParams::new(1.0, theta).unwrap();
        build_lax(&sample_thermal(&p, 0, n - 1, seed).unwrap())
    }

    /// Number of eigenvalues below `x` from the Sturm sequence.
    fn sturm_count(lax: &LaxMatrix, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..lax.dim() {
            let off = if i > 0 { lax.offdiag[i - 1].powi(2) } else { 0.0 };
            q = lax.diag[i] - x - if i > 0 { off / q } else { 0.0 };
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bisection_eigs(lax: &LaxMatrix) -> Vec<f64> {
        let r = 2.0 * lax.max_abs() + 1.0;
        let n = lax.dim();
        (0..n)
            .map(|k| {
                // k-th smallest
                let (mut lo, mut hi) = (-r, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if sturm_count(lax, mid) > k {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .rev()
            .collect()
    }

    #[test]
    fn build_examples() {
        let st = FlaschkaState::new(0, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let l = build_lax(&st);
        assert_eq!((l.get(0, 1), l.get(1, 0), l.get(0, 0)), (1.0, 1.0, 0.0));
        let st = FlaschkaState::new(3, vec![0.0], vec![2.5]).unwrap();
        let l = build_lax(&st);
        assert_eq!(l.dim(), 1);
        assert_eq!(l.diag, vec![2.5]);
    }

    #[test]
    fn two_by_two() {
        let l = LaxMatrix::new(0, vec![0.0, 0.0], vec![1.0]).unwrap();
        let s = eig_tridiagonal(&l).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15 && (s.eigenvalues[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.vector(0)[0] - h).abs() < 1e-15 && (s.vector(0)[1] - h).abs() < 1e-15);
        assert!((s.vector(1)[0] - h).abs() < 1e-15 && (s.vector(1)[1] + h).abs() < 1e-15);
    }

    #[test]
    fn diagonal_matrix() {
        let l = LaxMatrix::new(-2, vec![0.5, 3.0, -1.0, 2.0], vec![0.0; 3]).unwrap();
        let s = eig_tridiagonal(&l).unwrap();
        assert_eq!(s.eigenvalues, vec![3.0, 2.0, 0.5, -1.0]);
        let m = localization_centers(&s).unwrap();
        assert_eq!(m.phi, vec![1, 3, 0, 2]);
        assert_eq!(m.site(0), -1);
        let toda = TodaState { n1: -2, n2: 1, p: l.diag.clone(), q: vec![10.0, 11.0, 12.0, 13.0], time: 0.0 };
        assert_eq!(quasiparticle_positions(&s, &m, &toda).unwrap(), vec![11.0, 13.0, 10.0, 12.0]);
        let fit = localization_profile(&s, 0).unwrap();
        assert_eq!(fit.points, 1);
    }

    #[test]
    fn single_site() {
        let l = LaxMatrix::new(0, vec![1.5], vec![]).unwrap();
        let s = eig_tridiagonal(&l).unwrap();
        let m = localization_centers(&s).unwrap();
        assert_eq!(m.phi, vec![0]);
        let toda = TodaState { n1: 0, n2: 0, p: vec![1.5], q: vec![4.0], time: 0.0 };
        assert_eq!(quasiparticle_positions(&s, &m, &toda).unwrap(), vec![4.0]);
    }

    #[test]
    fn matches_sturm_oracle() {
        for seed in 0..5 {
            let l = thermal_lax(12, 1.0, seed);
            let s = eig_tridiagonal(&l).unwrap();
            let oracle = bisection_eigs(&l);
            for (a, b) in s.eigenvalues.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn invariants_on_thermal_samples() {
        for (n, theta) in [(40, 1.0), (300, 0.5), (300, 0.1), (200, 3.0)] {
            let l = thermal_lax(n, theta, 7);
            let s = eig_tridiagonal(&l).unwrap();
            let (ne, ortho, resid) = s.invariants(&l);
            assert!(ne < 1e-12 && ortho < 1e-10 && resid < 1e-10, "n={n} θ={theta}: {ne:e} {ortho:e} {resid:e}");
            for j in 0..s.dim() {
                let first = s.vector(j).iter().find(|v| **v != 0.0).unwrap();
                assert!(*first > 0.0);
            }
            let fast = eigenvalues(&l).unwrap();
            for (a, b) in fast.iter().zip(&s.eigenvalues) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clustered_spectrum() {
        // Two nearly identical weakly coupled blocks.
        let n = 120;
        let mut diag: Vec<f64> = (0..n).map(|i| ((i % 60) as f64 * 0.37).sin()).collect();
        diag[60..].iter_mut().for_each(|v| *v += 1e-9);
        let mut off = vec![0.5; n - 1];
        off[59] = 1e-7;
        let l = LaxMatrix::new(0, diag, off).unwrap();
        let s = eig_tridiagonal(&l).unwrap();
        let (ne, ortho, resid) = s.invariants(&l);
        assert!(ne < 1e-12 && ortho < 1e-10 && resid < 1e-10, "{ne:e} {ortho:e} {resid:e}");
        localization_centers(&s).unwrap();
    }

    #[test]
    fn centers_are_bijective() {
        let mut no_collision = 0;
        for seed in 0..20 {
            let l = thermal_lax(256, 0.5, seed);
            let s = eig_tridiagonal(&l).unwrap();
            let m = localization_centers(&s).unwrap();
            let mut seen = vec![false; 256];
            for (j, &site) in m.phi.iter().enumerate() {
                assert!(!seen[site]);
                seen[site] = true;
                assert_eq!(m.inverse[site], j);
                assert!(s.vector(j)[site].abs() >= m.zeta);
            }
            if m.collisions == 0 {
                no_collision += 1;
                for j in 0..256 {
                    assert_eq!(m.phi[j], argmax_abs(s.vector(j)));
                }
            }
        }
        // Shared argmax sites are common at this coupling strength.
        assert!(no_collision < 20);
        let s = eig_tridiagonal(&thermal_lax(64, 0.01, 2)).unwrap();
        let m = localization_centers(&s).unwrap();
        assert_eq!(m.collisions, 0);
        assert!((0..64).all(|j| m.phi[j] == argmax_abs(s.vector(j))));
    }

    #[test]
    fn corner_product() {
        let l = LaxMatrix::new(0, vec![0.0, 0.0], vec![0.5]).unwrap();
        assert!((resolvent_corner_product(&l, 0.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(resolvent_corner_product(&l, 0.5), Err(Error::NearSingular(_))));
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let diag: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let off: Vec<f64> = (0..7).map(|_| rng.random_range(0.1..1.5)).collect();
            let l = LaxMatrix::new(0, diag, off).unwrap();
            let e: f64 = rng.random_range(-3.0..3.0);
            let dense = DMatrix::from_fn(8, 8, |i, j| l.get(i, j) - if i == j { e } else { 0.0 });
            let inv = dense.try_inverse().unwrap();
            let want = inv[(0, 7)].abs();
            let got = resolvent_corner_product(&l, e).unwrap();
            assert!((got - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn bnd_sep() {
        let l = LaxMatrix::new(0, vec![0.0, 0.0], vec![1.0]).unwrap();
        let s = eig_tridiagonal(&l).unwrap();
        let r = bnd_sep_check(&l, &s, 1.0, 1.0);
        assert!(r.bnd && r.sep && (r.min_gap - 2.0).abs() < 1e-14);
        assert!(!bnd_sep_check(&l, &s, 1.0, 3.0).sep);
    }

    #[test]
    fn thermal_vectors_localize() {
        let l = thermal_lax(512, 0.5, 3);
        let s = eig_tridiagonal(&l).unwrap();
        let positive = (128..384).filter(|&j| localization_profile(&s, j).unwrap().rate > 0.0).count();
        assert!(positive as f64 >= 0.99 * 256.0);
    }
}
