//! The S matrix, its dominance diagnostics, and the proxy dynamics `𝔔(s)`
//! defined by `S 𝔔′ = Λ` on a shrinking window of sites.

use crate::dressing::GridFn;
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, BandMatrix, DenseSolver};
use crate::scattering::{CutoffChi, SoftLog};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Window and step parameters of the proxy dynamics. Sites are offsets from
/// the left lattice edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyParams {
    pub t_final: f64,
    pub k1: usize,
    pub k2: usize,
    /// Window shrink per unit stage.
    pub shrink: usize,
    /// Rows within this distance of a window edge carry the penalty.
    pub boundary_width: usize,
    pub penalty: f64,
    /// RK4 step.
    pub step: f64,
}

impl ProxyParams {
    /// Windows of width `T³`, boundary `T²` when they fit inside `[k1, k2]`
    /// for every stage, otherwise shrink `min(⌈T⌉, ⌊(k2 − k1)/(4T)⌋)` and
    /// boundary `⌈√T⌉`. The second value reports whether the fallback was taken.
    pub fn desk(n: usize, t_final: f64) -> Result<(Self, bool)> {
        if !(t_final > 0.0) {
            return Err(Error::Config(format!("proxy horizon must be positive, got {t_final}")));
        }
        let ct = t_final.ceil() as usize;
        if n < 2 * ct + 8 {
            return Err(Error::Config(format!("lattice of {n} sites too small for T = {t_final}")));
        }
        let (k1, k2) = (ct, n - 1 - ct);
        let penalty = t_final.powi(3);
        let faithful = Self { t_final, k1, k2, shrink: penalty.ceil() as usize, boundary_width: (t_final * t_final).ceil() as usize, penalty, step: 0.05 };
        if faithful.has_interior() {
            return Ok((faithful, false));
        }
        let shrink = ct.min(((k2 - k1) as f64 / (4.0 * t_final)).floor().max(1.0) as usize);
        let desk = Self { shrink, boundary_width: t_final.sqrt().ceil() as usize, ..faithful };
        if !desk.has_interior() {
            return Err(Error::Config(format!("no proxy window fits {n} sites at T = {t_final}")));
        }
        Ok((desk, true))
    }

    /// Number of unit stages.
    pub fn stages(&self) -> usize {
        self.t_final.ceil() as usize
    }

    /// Window `[ℓ_i, m_i]` of stage `i`.
    pub fn window(&self, stage: usize) -> Result<(usize, usize)> {
        let d = stage * self.shrink;
        let lo = self.k1 + d;
        match self.k2.checked_sub(d) {
            Some(hi) if lo <= hi => Ok((lo, hi)),
            _ => Err(Error::Config(format!("window collapsed at stage {stage}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.penalty >= 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("proxy step, penalty and horizon must be positive".into()));
        }
        self.window(self.stages().saturating_sub(1)).map(|_| ())
    }

    /// Whether the final window keeps rows beyond the penalized boundary.
    pub fn has_interior(&self) -> bool {
        match self.window(self.stages().saturating_sub(1)) {
            Ok((lo, hi)) => lo + self.boundary_width < hi.saturating_sub(self.boundary_width),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Band(BandMatrix),
    Dense(DMatrix<f64>),
}

/// `S` restricted to a window `[lo, hi]` of sites.
#[derive(Debug, Clone)]
pub struct SMatrix {
    pub lo: usize,
    pub hi: usize,
    pub band: usize,
    pub diag: Vec<f64>,
    /// `Σ_{i≠j} |𝔩(Λ_j − Λ_i) χ′(𝔔_j − 𝔔_i)|` per row.
    pub offsum: Vec<f64>,
    storage: Storage,
}

impl SMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry at local indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Band(b) => b.get(i, j),
            Storage::Dense(d) => d[(i, j)],
        }
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.storage, Storage::Band(_))
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        match &self.storage {
            Storage::Band(b) => b.mul(x),
            Storage::Dense(d) => (d * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Band(b) => b.to_dense(),
            Storage::Dense(d) => d.clone(),
        }
    }
}

/// Interacting pairs `(j, k, g_jk)`, `j < k`, local indices, with
/// `g = 𝔩(Λ_j − Λ_k) χ′(𝔔_j − 𝔔_k) ≠ 0`.
fn interacting_pairs(lambda: &[f64], q: &[f64], chi: &CutoffChi, sl: &SoftLog) -> Vec<(usize, usize, f64)> {
    let n = q.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]).then(a.cmp(&b)));
    let mut pairs = Vec::new();
    for (r, &j) in order.iter().enumerate() {
        for &k in &order[r + 1..] {
            if q[k] - q[j] >= chi.m {
                break;
            }
            let g = sl.eval(lambda[j] - lambda[k]) * chi.prime(q[j] - q[k]);
            if g != 0.0 {
                pairs.push((j.min(k), j.max(k), g));
            }
        }
    }
    pairs
}

/// Builds `S` on the window `[lo, hi]` from site-indexed `Λ` and `𝔔`.
#[allow(clippy::too_many_arguments)]
pub fn build_s(lambda: &[f64], q: &[f64], lo: usize, hi: usize, chi: &CutoffChi, sl: &SoftLog, penalty: f64, boundary_width: usize) -> Result<SMatrix> {
    if lo > hi || hi >= q.len() || lambda.len() != q.len() {
        return Err(Error::Config(format!("window [{lo}, {hi}] invalid for {} sites", q.len())));
    }
    let (lw, qw) = (&lambda[lo..=hi], &q[lo..=hi]);
    let n = qw.len();
    let pairs = interacting_pairs(lw, qw, chi, sl);
    let band = pairs.iter().map(|&(j, k, _)| k - j).max().unwrap_or(0);
    let mut diag = vec![1.0; n];
    let mut offsum = vec![0.0; n];
    for &(j, k, g) in &pairs {
        diag[j] += 2.0 * g;
        diag[k] += 2.0 * g;
        offsum[j] += g.abs();
        offsum[k] += g.abs();
    }
    for (r, d) in diag.iter_mut().enumerate() {
        let site = lo + r;
        if site <= lo + boundary_width || site + boundary_width >= hi {
            *d += penalty;
        }
    }
    let storage = if 2 * band <= n {
        let mut b = BandMatrix::zeros(n, band);
        for (r, &d) in diag.iter().enumerate() {
            b.add(r, r, d);
        }
        for &(j, k, g) in &pairs {
            b.add(j, k, -2.0 * g);
            b.add(k, j, -2.0 * g);
        }
        Storage::Band(b)
    } else {
        let mut d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&diag));
        for &(j, k, g) in &pairs {
            d[(j, k)] -= 2.0 * g;
            d[(k, j)] -= 2.0 * g;
        }
        Storage::Dense(d)
    };
    Ok(SMatrix { lo, hi, band, diag, offsum, storage })
}

/// Slack of `|S_jj| ≥ (2 + ε) Σ_{i≠j} |𝔩 χ′| + ε` over the rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub min_margin: f64,
    /// Site offset of the tightest row.
    pub worst_site: usize,
    pub failing_rows: usize,
    pub eps: f64,
}

/// Dominance slack with `ε = 1/log N` for a lattice of `n_total` sites.
pub fn dominance_margin(s: &SMatrix, n_total: usize) -> Dominance {
    let eps = 1.0 / (n_total.max(3) as f64).ln();
    let mut out = Dominance { min_margin: f64::INFINITY, worst_site: s.lo, failing_rows: 0, eps };
    for (r, (&d, &o)) in s.diag.iter().zip(&s.offsum).enumerate() {
        let m = d.abs() - (2.0 + eps) * o - eps;
        if m <= 0.0 {
            out.failing_rows += 1;
        }
        if m < out.min_margin {
            out.min_margin = m;
            out.worst_site = s.lo + r;
        }
    }
    out
}

/// Solution of `S w = v` with its relative residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSolve {
    pub w: Vec<f64>,
    pub residual: f64,
    /// Whether the pivoted dense path was used.
    pub pivoted: bool,
}

const SOLVE_TOL: f64 = 1e-10;

/// Banded elimination when `S` is dominant, pivoted dense LU otherwise.
pub fn solve_s(s: &SMatrix, v: &[f64], n_total: usize) -> Result<SSolve> {
    if v.len() != s.dim() {
        return Err(Error::Inconsistency(format!("rhs of length {} for S of size {}", v.len(), s.dim())));
    }
    let dominant = dominance_margin(s, n_total).min_margin > 0.0;
    let residual_of = |w: &[f64]| -> f64 {
        let sw = s.mul(w);
        let r = sw.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        r / norm_inf(v).max(f64::MIN_POSITIVE)
    };
    if let (true, Storage::Band(b)) = (dominant, &s.storage) {
        let mut w = b.solve(v)?;
        let sw = b.mul(&w);
        let r: Vec<f64> = v.iter().zip(&sw).map(|(a, b)| a - b).collect();
        for (wi, ci) in w.iter_mut().zip(b.solve(&r)?) {
            *wi += ci;
        }
        let residual = residual_of(&w);
        if residual < SOLVE_TOL {
            return Ok(SSolve { w, residual, pivoted: false });
        }
    }
    if !dominant {
        log::debug!("S on [{}, {}] is not diagonally dominant; using pivoted LU", s.lo, s.hi);
    }
    let solved = DenseSolver::new(s.to_dense())?.solve(v, 2)?;
    let residual = residual_of(&solved.x);
    if !(residual < SOLVE_TOL) {
        return Err(Error::OperatorSingular(format!("S solve residual {residual:e} on [{}, {}]", s.lo, s.hi)));
    }
    Ok(SSolve { w: solved.x, residual, pivoted: true })
}

/// Envelope check `|w_i| ≤ ε^{-1} max_{|𝔔_k − 𝔔_i| ≤ U𝔐} |v_k| + ε^{-1} e^{−εU/8} max |v|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Locality {
    pub u: f64,
    pub violations: usize,
    /// Largest `|w_i|` over its envelope.
    pub worst_ratio: f64,
}

pub fn locality_check(q: &[f64], v: &[f64], w: &[f64], eps: f64, m: f64, us: &[f64]) -> Vec<Locality> {
    let vmax = norm_inf(v);
    us.iter()
        .map(|&u| {
            let mut out = Locality { u, violations: 0, worst_ratio: 0.0 };
            for i in 0..q.len() {
                let near = (0..q.len()).filter(|&k| (q[k] - q[i]).abs() <= u * m).fold(0.0f64, |a, k| a.max(v[k].abs()));
                let env = (near + (-eps * u / 8.0).exp() * vmax) / eps;
                let ratio = if env > 0.0 { w[i].abs() / env } else { 0.0 };
                out.worst_ratio = out.worst_ratio.max(ratio);
                if ratio > 1.0 {
                    out.violations += 1;
                }
            }
            out
        })
        .collect()
}

/// Per-stage diagnostics, emitted as JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    pub lo: usize,
    pub hi: usize,
    pub frozen: bool,
    pub min_margin: f64,
    pub solves: usize,
    pub pivoted: usize,
}

/// `𝔔` on the observer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyTrajectory {
    pub times: Vec<f64>,
    /// `q[s][site]`.
    pub q: Vec<Vec<f64>>,
    /// Active window at each observation.
    pub windows: Vec<(usize, usize)>,
    /// Dominance slack of `S` at each observation.
    pub margins: Vec<f64>,
    /// Rows violating dominance at each observation, with the window size.
    pub failing_rows: Vec<(usize, usize)>,
    pub stages: Vec<StageLog>,
}

struct StageCtx<'a> {
    lambda: &'a [f64],
    lo: usize,
    hi: usize,
    chi: &'a CutoffChi,
    sl: &'a SoftLog,
    params: &'a ProxyParams,
    n_total: usize,
}

impl StageCtx<'_> {
    fn build(&self, q: &[f64]) -> Result<SMatrix> {
        build_s(self.lambda, q, self.lo, self.hi, self.chi, self.sl, self.params.penalty, self.params.boundary_width)
    }

    /// `𝔔′` on the window, with the dominance slack and whether pivoting was used.
    fn velocity(&self, q: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let s = self.build(q)?;
        let margin = dominance_margin(&s, self.n_total).min_margin;
        let sol = solve_s(&s, &self.lambda[self.lo..=self.hi], self.n_total)?;
        Ok((sol.w, margin, sol.pivoted))
    }
}

fn rk4_step(ctx: &StageCtx, q: &mut [f64], h: f64, log: &mut StageLog) -> Result<()> {
    let (lo, hi) = (ctx.lo, ctx.hi);
    let mut k = Vec::with_capacity(4);
    let mut trial = q.to_vec();
    for stage in 0..4 {
        if stage > 0 {
            let c = if stage == 3 { h } else { 0.5 * h };
            let prev: &Vec<f64> = &k[stage - 1];
            for (r, site) in (lo..=hi).enumerate() {
                trial[site] = q[site] + c * prev[r];
            }
        }
        let (v, margin, pivoted) = ctx.velocity(&trial)?;
        log.solves += 1;
        log.pivoted += pivoted as usize;
        log.min_margin = log.min_margin.min(margin);
        k.push(v);
    }
    for (r, site) in (lo..=hi).enumerate() {
        q[site] += h / 6.0 * (k[0][r] + 2.0 * k[1][r] + 2.0 * k[2][r] + k[3][r]);
    }
    Ok(())
}

/// Integrates `𝔔` stage by stage from `𝔔(0) = q0` with site-indexed
/// `Λ_j = λ_{φ₀^{-1}(j)}`. Sites outside the stage window are frozen; a stage
/// in which some solve fails is frozen entirely and logged.
pub fn proxy_evolve(lambda: &[f64], q0: &[f64], params: &ProxyParams, chi: &CutoffChi, sl: &SoftLog, obs_times: &[f64]) -> Result<ProxyTrajectory> {
    params.validate()?;
    let n_total = q0.len();
    if lambda.len() != n_total || params.k2 >= n_total {
        return Err(Error::Config(format!("proxy input of {} sites, Λ of {}, k2 = {}", n_total, lambda.len(), params.k2)));
    }
    if obs_times.windows(2).any(|w| w[1] < w[0]) || obs_times.iter().any(|&t| t < 0.0 || t > params.t_final) {
        return Err(Error::Domain(format!("observer times must be sorted within [0, {}]", params.t_final)));
    }
    let mut out = ProxyTrajectory { times: Vec::new(), q: Vec::new(), windows: Vec::new(), margins: Vec::new(), failing_rows: Vec::new(), stages: Vec::new() };
    let mut q = q0.to_vec();
    let mut next_obs = 0;
    for stage in 0..params.stages() {
        let (lo, hi) = params.window(stage)?;
        let ctx = StageCtx { lambda, lo, hi, chi, sl, params, n_total };
        let t0 = stage as f64;
        let t1 = ((stage + 1) as f64).min(params.t_final);
        let last = stage + 1 == params.stages();
        let start = q.clone();
        let mut log = StageLog { stage, lo, hi, frozen: false, min_margin: f64::INFINITY, solves: 0, pivoted: 0 };
        let mut pending: Vec<(f64, Vec<f64>, f64, usize)> = Vec::new();
        let mut t = t0;
        let outcome: Result<()> = (|| loop {
            while next_obs + pending.len() < obs_times.len() {
                let to = obs_times[next_obs + pending.len()];
                if to > t || (to == t && to >= t1 && !last) {
                    break;
                }
                let d = dominance_margin(&ctx.build(&q)?, n_total);
                pending.push((to, q.clone(), d.min_margin, d.failing_rows));
            }
            if t >= t1 {
                return Ok(());
            }
            let target = obs_times.get(next_obs + pending.len()).copied().filter(|&to| to < t1).unwrap_or(t1);
            let steps = ((target - t) / params.step).ceil().max(1.0) as usize;
            let h = (target - t) / steps as f64;
            for _ in 0..steps {
                rk4_step(&ctx, &mut q, h, &mut log)?;
            }
            t = target;
        })();
        match outcome {
            Ok(()) => {}
            Err(Error::OperatorSingular(msg)) => {
                log::warn!("stage {stage} frozen: {msg}");
                log.frozen = true;
                q = start;
                // Observations inside a frozen stage see 𝔔(i).
                let mut k = next_obs;
                pending.clear();
                while k < obs_times.len() && (obs_times[k] < t1 || (last && obs_times[k] <= t1)) {
                    pending.push((obs_times[k], q.clone(), f64::NAN, 0));
                    k += 1;
                }
            }
            Err(e) => return Err(e),
        }
        if log.pivoted > 0 {
            log::warn!("stage {stage}: {} of {} S solves were not diagonally dominant", log.pivoted, log.solves);
        }
        for (to, qs, margin, failing) in pending {
            out.failing_rows.push((failing, hi - lo + 1));
            out.times.push(to);
            out.q.push(qs);
            out.windows.push((lo, hi));
            out.margins.push(margin);
            next_obs += 1;
        }
        out.stages.push(log);
    }
    Ok(out)
}

/// Largest `|𝔔_j − Q_{φ₀^{-1}(j)}|` over window sites at each observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyDeviation {
    pub per_time: Vec<f64>,
    pub sup: f64,
}

/// `true_q[s][site]` is `Q_{φ₀^{-1}(site)}` at `proxy.times[s]`.
pub fn proxy_vs_true(proxy: &ProxyTrajectory, true_q: &[Vec<f64>]) -> Result<ProxyDeviation> {
    if true_q.len() != proxy.q.len() {
        return Err(Error::Inconsistency(format!("{} true snapshots for {} proxy snapshots", true_q.len(), proxy.q.len())));
    }
    let mut per_time = Vec::with_capacity(true_q.len());
    for ((pq, tq), &(lo, hi)) in proxy.q.iter().zip(true_q).zip(&proxy.windows) {
        if pq.len() != tq.len() {
            return Err(Error::Inconsistency("snapshot sizes differ".into()));
        }
        per_time.push((lo..=hi).fold(0.0f64, |m, j| m.max((pq[j] - tq[j]).abs())));
    }
    let sup = per_time.iter().copied().fold(0.0, f64::max);
    Ok(ProxyDeviation { per_time, sup })
}

/// `Λ_j − v(Λ_j)(2 Σ_k 𝔩(Λ_j − Λ_k) χ′(Q_j − Q_k) + 1) + 2 Σ_k v(Λ_k) 𝔩(Λ_j − Λ_k) χ′(Q_j − Q_k)`
/// over `k ≠ j` in `[lo, hi]`, site-indexed inputs.
#[allow(clippy::too_many_arguments)]
pub fn veff_substitution_residual(lambda: &[f64], q: &[f64], j: usize, lo: usize, hi: usize, chi: &CutoffChi, sl: &SoftLog, veff: &GridFn) -> Result<f64> {
    if j < lo || j > hi || hi >= q.len() || lambda.len() != q.len() {
        return Err(Error::IndexOutOfRange { index: j as i64, lo: lo as i64, hi: hi as i64 });
    }
    let vj = veff.eval(lambda[j])?;
    let mut sum = 0.0;
    let mut cross = 0.0;
    for k in lo..=hi {
        if k == j {
            continue;
        }
        let c = chi.prime(q[j] - q[k]);
        if c == 0.0 {
            continue;
        }
        let g = sl.value(lambda[j] - lambda[k])? * c;
        sum += g;
        cross += veff.eval(lambda[k])? * g;
    }
    Ok(lambda[j] - vj * (2.0 * sum + 1.0) + 2.0 * cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn chi(m: f64) -> CutoffChi {
        CutoffChi::new(m, 1.0).unwrap()
    }

    #[test]
    fn free_region_is_identity_plus_penalty() {
        let q: Vec<f64> = (0..10).map(|i| 10.0 * i as f64).collect();
        let l: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
        let s = build_s(&l, &q, 0, 9, &chi(1.0), &SoftLog::new(0.0).unwrap(), 5.0, 1).unwrap();
        assert_eq!(s.band, 0);
        for r in 0..10 {
            let expect = if r <= 1 || r >= 8 { 6.0 } else { 1.0 };
            assert_eq!(s.get(r, r), expect);
        }
        let d = dominance_margin(&s, 100);
        assert!((d.min_margin - (1.0 - d.eps)).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_formula() {
        let sl = SoftLog::new(0.0).unwrap();
        let c = chi(2.0);
        let (l, q) = (vec![1.0, -2.0], vec![0.0, 0.7]);
        let s = build_s(&l, &q, 0, 1, &c, &sl, 0.0, 0).unwrap();
        let g = 3f64.ln() * c.prime(-0.7);
        assert!((s.get(0, 0) - (1.0 + 2.0 * g)).abs() < 1e-15);
        assert!((s.get(1, 1) - (1.0 + 2.0 * g)).abs() < 1e-15);
        assert!((s.get(0, 1) + 2.0 * g).abs() < 1e-15);
        assert_eq!(s.get(0, 1), s.get(1, 0));
    }

    fn random_s(n: usize, m: f64, seed: u64) -> (Vec<f64>, Vec<f64>, SMatrix) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut q = vec![0.0; n];
        for i in 1..n {
            q[i] = q[i - 1] + rng.random_range(0.2..3.0);
        }
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = build_s(&l, &q, 0, n - 1, &chi(m), &SoftLog::new(1e-3).unwrap(), 10.0, 1).unwrap();
        (l, q, s)
    }

    #[test]
    fn symmetric_and_matches_dense_oracle() {
        for seed in 0..20 {
            let n = 5 + (seed as usize * 3) % 60;
            let (l, _, s) = random_s(n, 1.5, seed);
            let d = s.to_dense();
            assert!((&d - d.transpose()).abs().max() == 0.0);
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) > s.band {
                        assert_eq!(d[(i, j)], 0.0);
                    }
                }
            }
            let sol = solve_s(&s, &l, 1000).unwrap();
            assert!(sol.residual < 1e-10);
            let oracle = d.lu().solve(&nalgebra::DVector::from_column_slice(&l)).unwrap();
            for (a, b) in sol.w.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn scaled_identity_solve() {
        let q: Vec<f64> = (0..6).map(|i| 100.0 * i as f64).collect();
        let s = build_s(&[0.0; 6], &q, 0, 5, &chi(1.0), &SoftLog::new(0.0).unwrap(), 1.0, 10).unwrap();
        let w = solve_s(&s, &[1.0; 6], 100).unwrap().w;
        assert!(w.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn locality_decays() {
        let n = 80;
        let (_, q, s) = random_s(n, 3.0, 7);
        let mut v = vec![0.0; n];
        v[40] = 1.0;
        let w = solve_s(&s, &v, 1000).unwrap().w;
        let far: f64 = (0..n).filter(|&i| (q[i] - q[40]).abs() > 12.0).map(|i| w[i].abs()).fold(0.0, f64::max);
        assert!(far < 1e-2 * w[40].abs());
        let eps = 1.0 / 1000f64.ln();
        let rep = locality_check(&q, &v, &w, eps, 3.0, &[1.0, 2.0, 4.0]);
        assert_eq!(rep.len(), 3);
        assert!(rep.iter().all(|r| r.violations == 0));
    }

    #[test]
    fn free_streaming_and_frozen_outside() {
        let n = 60;
        let q0: Vec<f64> = (0..n).map(|i| 50.0 * i as f64).collect();
        let l: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect();
        let params = ProxyParams { t_final: 3.0, k1: 5, k2: 54, shrink: 4, boundary_width: 2, penalty: 27.0, step: 0.05 };
        let times = [0.0, 0.5, 1.0, 2.5, 3.0];
        let tr = proxy_evolve(&l, &q0, &params, &chi(2.0), &SoftLog::new(0.0).unwrap(), &times).unwrap();
        assert_eq!(tr.times, times);
        assert_eq!(tr.q[0], q0);
        let mut expect = q0.clone();
        let mut clock = 0.0;
        let mut s = 0;
        for (k, &t) in times.iter().enumerate() {
            while clock < t - 1e-12 {
                let (lo, hi) = params.window(s).unwrap();
                let end = ((s + 1) as f64).min(t);
                for j in lo..=hi {
                    let free = if j <= lo + 2 || j + 2 >= hi { 28.0 } else { 1.0 };
                    expect[j] += (end - clock) * l[j] / free;
                }
                clock = end;
                if clock >= (s + 1) as f64 {
                    s += 1;
                }
            }
            for j in 0..n {
                assert!((tr.q[k][j] - expect[j]).abs() < 1e-12 * (1.0 + expect[j].abs()), "t = {t}, site {j}: {} vs {}", tr.q[k][j], expect[j]);
            }
        }
        // Sites outside every window never move.
        for j in (0..5).chain(55..60) {
            assert_eq!(tr.q[4][j].to_bits(), q0[j].to_bits());
        }
        assert!(tr.stages.iter().all(|s| !s.frozen));
        let dev = proxy_vs_true(&tr, &tr.q).unwrap();
        assert_eq!(dev.sup, 0.0);
    }

    #[test]
    fn single_site_moves_at_lambda() {
        let params = ProxyParams { t_final: 2.0, k1: 0, k2: 0, shrink: 0, boundary_width: 0, penalty: 0.0, step: 0.05 };
        // Boundary rule marks the lone site; penalty 0 keeps S = 1.
        let tr = proxy_evolve(&[0.7], &[1.0], &params, &chi(1.0), &SoftLog::new(0.0).unwrap(), &[2.0]).unwrap();
        assert!((tr.q[0][0] - 2.4).abs() < 1e-14);
    }

    #[test]
    fn solve_satisfies_substitution_form() {
        let n = 40;
        let (l, q, s) = random_s(n, 2.0, 3);
        let w = solve_s(&s, &l, 1000).unwrap().w;
        let sw = s.mul(&w);
        for j in 0..n {
            assert!((sw[j] - l[j]).abs() < 1e-10 * (1.0 + l[j].abs()));
        }
        let _ = q;
    }

    #[test]
    fn veff_residual_without_interaction() {
        let grid = crate::dressing::DosGrid::new(101, 8.0).unwrap();
        let v = GridFn::new(&grid, grid.nodes().iter().map(|x| 0.5 * x).collect());
        let q = vec![0.0, 100.0, 200.0];
        let l = vec![1.0, 2.0, -1.0];
        let r = veff_substitution_residual(&l, &q, 1, 0, 2, &chi(1.0), &SoftLog::new(0.0).unwrap(), &v).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(veff_substitution_residual(&l, &q, 3, 0, 2, &chi(1.0), &SoftLog::new(0.0).unwrap(), &v).is_err());
    }

    #[test]
    fn desk_parameters_fit() {
        let (p, fallback) = ProxyParams::desk(512, 20.0).unwrap();
        assert!(fallback);
        assert_eq!((p.k1, p.k2, p.shrink, p.boundary_width), (20, 491, 5, 5));
        let (small, fb) = ProxyParams::desk(200, 1.0).unwrap();
        assert!(!fb);
        assert_eq!(small.shrink, 1);
        assert!(ProxyParams::desk(20, 20.0).is_err());
    }
}
