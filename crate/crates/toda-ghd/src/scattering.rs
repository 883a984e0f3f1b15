//! The cutoff `χ`, the softened log `𝔩`, scattering residuals and
//! concentration statistics over tracked quasiparticles.

use crate::dressing::{DosTable, GridFn};
use crate::error::{Error, Result};
use crate::harness::TrajectoryRecord;
use crate::quad::integrate;
use serde::{Deserialize, Serialize};

/// Smooth step from 0 to `sgn(α)` across `[−𝔐, 𝔐]`:
/// `χ(x) = sgn(α) · S((x + 𝔐)/(2𝔐))` with `S(u) = 10u³ − 15u⁴ + 6u⁵`.
///
/// `χ′ = sgn(α) S′/(2𝔐)` is even and carries the sign of `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffChi {
    pub m: f64,
    pub b: f64,
    pub alpha_sign: f64,
}

/// Sampled derivative bounds of a [`CutoffChi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiCheck {
    /// `sup |∂^k χ| · 𝔐^k` for `k = 0, 1, 2`.
    pub scaled_sup: [f64; 3],
    /// `∫ χ′` by the trapezoid rule.
    pub integral: f64,
    pub within_b: bool,
}

impl CutoffChi {
    pub const DEFAULT_B: f64 = 10.0;

    pub fn new(m: f64, alpha: f64) -> Result<Self> {
        if !(m > 0.0) || alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::Domain(format!("cutoff needs 𝔐 > 0 and α ≠ 0, got 𝔐 = {m}, α = {alpha}")));
        }
        Ok(Self { m, b: Self::DEFAULT_B, alpha_sign: alpha.signum() })
    }

    fn u(&self, x: f64) -> f64 {
        ((x + self.m) / (2.0 * self.m)).clamp(0.0, 1.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x >= self.m {
            return self.alpha_sign;
        }
        if x <= -self.m {
            return 0.0;
        }
        let u = self.u(x);
        self.alpha_sign * u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }

    pub fn prime(&self, x: f64) -> f64 {
        if x.abs() >= self.m {
            return 0.0;
        }
        let u = self.u(x);
        let v = 1.0 - u;
        self.alpha_sign * 30.0 * u * u * v * v / (2.0 * self.m)
    }

    pub fn second(&self, x: f64) -> f64 {
        if x.abs() >= self.m {
            return 0.0;
        }
        let u = self.u(x);
        self.alpha_sign * 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (4.0 * self.m * self.m)
    }

    /// `χ(x) − sgn(α)·1_{x>0}`, odd and supported on `[−𝔐, 𝔐]`.
    pub fn minus_step(&self, x: f64) -> f64 {
        self.value(x) - if x > 0.0 { self.alpha_sign } else { 0.0 }
    }

    /// Dense sampling of the derivative bounds at `samples` points.
    pub fn verify(&self, samples: usize) -> ChiCheck {
        let lo = -1.25 * self.m;
        let dx = 2.5 * self.m / (samples - 1) as f64;
        let mut sup = [0.0f64; 3];
        let mut integral = 0.0;
        let mut prev = None;
        for k in 0..samples {
            let x = lo + k as f64 * dx;
            sup[0] = sup[0].max(self.value(x).abs());
            let p = self.prime(x);
            sup[1] = sup[1].max(p.abs() * self.m);
            sup[2] = sup[2].max(self.second(x).abs() * self.m * self.m);
            if let Some(q) = prev {
                integral += 0.5 * dx * (p + q);
            }
            prev = Some(p);
        }
        ChiCheck { scaled_sup: sup, integral, within_b: sup.iter().all(|&s| s <= self.b) }
    }
}

/// `𝔩(x) = ½ log(x² + 𝔡²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLog {
    pub frak_d: f64,
}

impl SoftLog {
    pub fn new(frak_d: f64) -> Result<Self> {
        if !(frak_d >= 0.0) {
            return Err(Error::Domain(format!("𝔡 must be nonnegative, got {frak_d}")));
        }
        Ok(Self { frak_d })
    }

    /// `𝔡 = max(e^{−5 (log N)²}, 1e-300)`.
    pub fn for_size(n: usize) -> Self {
        let l = (n as f64).ln();
        Self { frak_d: (-5.0 * l * l).exp().max(1e-300) }
    }

    /// Errors at `x = 𝔡 = 0`.
    pub fn value(&self, x: f64) -> Result<f64> {
        if x == 0.0 && self.frak_d == 0.0 {
            return Err(Error::Domain("𝔩(0) with 𝔡 = 0 is −∞".into()));
        }
        Ok(self.eval(x))
    }

    /// Unchecked evaluation (−∞ at `x = 𝔡 = 0`).
    pub fn eval(&self, x: f64) -> f64 {
        // hypot avoids underflow of 𝔡² for tiny 𝔡.
        x.hypot(self.frak_d).ln()
    }
}

/// Sharp residual with the number of near-degenerate pairs skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpResidual {
    pub value: f64,
    pub skipped: usize,
}

const DEGENERATE_GAP: f64 = 1e-13;

/// `λ_k t − Q_k(t) + Q_k(0) − 2 sgn(α) Σ_{Q_i(t)<Q_k(t)} log|λ_k − λ_i| + 2 sgn(α) Σ_{Q_i(0)<Q_k(0)} log|λ_k − λ_i|`
/// at snapshot index `s`.
pub fn scattering_residual(track: &TrajectoryRecord, k: usize, s: usize) -> Result<SharpResidual> {
    let n = track.lambda.len();
    let (qt, q0) = (track.snapshot(s)?, track.snapshot(0)?);
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k as i64, lo: 0, hi: n as i64 - 1 });
    }
    let t = track.times[s] - track.times[0];
    let sign = track.alpha.signum();
    let lk = track.lambda[k];
    let mut sum = 0.0;
    let mut skipped = 0;
    for i in 0..n {
        if i == k {
            continue;
        }
        let gap = (lk - track.lambda[i]).abs();
        if gap < DEGENERATE_GAP {
            skipped += 1;
            continue;
        }
        let l = gap.ln();
        if qt[i] < qt[k] {
            sum += l;
        }
        if q0[i] < q0[k] {
            sum -= l;
        }
    }
    Ok(SharpResidual { value: lk * t - qt[k] + q0[k] - 2.0 * sign * sum, skipped })
}

/// `λ_k t − Q_k(t) + Q_k(0) − 2 Σ 𝔩(λ_k − λ_i)(χ(Q_k(t) − Q_i(t)) − χ(Q_k(0) − Q_i(0)))`.
pub fn regularized_residual(track: &TrajectoryRecord, k: usize, s: usize, chi: &CutoffChi, sl: &SoftLog) -> Result<f64> {
    let n = track.lambda.len();
    let (qt, q0) = (track.snapshot(s)?, track.snapshot(0)?);
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k as i64, lo: 0, hi: n as i64 - 1 });
    }
    let t = track.times[s] - track.times[0];
    let lk = track.lambda[k];
    let mut sum = 0.0;
    for i in 0..n {
        let dchi = chi.value(qt[k] - qt[i]) - chi.value(q0[k] - q0[i]);
        if dchi != 0.0 {
            sum += sl.value(lk - track.lambda[i])? * dchi;
        }
    }
    Ok(lk * t - qt[k] + q0[k] - 2.0 * sum)
}

/// Spectral weight `F(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FCatalog {
    One,
    /// `ς₁(λ) = λ`.
    Sigma1,
    Veff(GridFn),
}

/// Optional two-body factor `f(λ − λ_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FTwoBody {
    None,
    SoftLog,
    AbsSoftLog,
}

/// Compactly supported position weight `G(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GCatalog {
    ChiPrime,
    ChiMinusStep,
    /// `1_{|q| ≤ 𝔐}`.
    Box,
}

impl FCatalog {
    fn eval(&self, l: f64) -> Result<f64> {
        match self {
            FCatalog::One => Ok(1.0),
            FCatalog::Sigma1 => Ok(l),
            FCatalog::Veff(g) => g.eval(l),
        }
    }
}

impl FTwoBody {
    fn eval(&self, sl: &SoftLog, x: f64) -> f64 {
        match self {
            FTwoBody::None => 1.0,
            FTwoBody::SoftLog => sl.eval(x),
            FTwoBody::AbsSoftLog => sl.eval(x).abs(),
        }
    }
}

impl GCatalog {
    pub fn eval(&self, chi: &CutoffChi, q: f64) -> f64 {
        match self {
            GCatalog::ChiPrime => chi.prime(q),
            GCatalog::ChiMinusStep => chi.minus_step(q),
            GCatalog::Box => {
                if q.abs() <= chi.m {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ G(αq) dq = |α|^{-1} ∫ G`.
    pub fn scaled_integral(&self, chi: &CutoffChi, alpha: f64) -> f64 {
        let raw = match self {
            GCatalog::ChiPrime => chi.alpha_sign,
            GCatalog::ChiMinusStep => 0.0,
            GCatalog::Box => 2.0 * chi.m,
        };
        raw / alpha.abs()
    }
}

/// Lattice sum, its predicted mean, and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStat {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// `Σ_i F(λ_i) f(λ_i − λ_j) G(Q_i(s) − Q_j(s))` against
/// `∫ F f ϱ dλ · ∫ G(αq) dq`.
#[allow(clippy::too_many_arguments)]
pub fn concentration_stat(track: &TrajectoryRecord, s: usize, j: usize, f_big: &FCatalog, f_two: FTwoBody, g: GCatalog, chi: &CutoffChi, sl: &SoftLog, table: &DosTable) -> Result<ConcentrationStat> {
    let q = track.snapshot(s)?;
    let n = track.lambda.len();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j as i64, lo: 0, hi: n as i64 - 1 });
    }
    let lj = track.lambda[j];
    let mut lhs = 0.0;
    for i in 0..n {
        let gv = g.eval(chi, q[i] - q[j]);
        if gv != 0.0 {
            lhs += f_big.eval(track.lambda[i])? * f_two.eval(sl, track.lambda[i] - lj) * gv;
        }
    }
    let rho = table.rho_fn();
    let cut = table.grid.cutoff();
    let mut breaks = vec![-cut, cut];
    if f_two != FTwoBody::None && lj.abs() < cut {
        breaks.push(lj);
        let s1 = (1.0 - sl.frak_d * sl.frak_d).max(0.0).sqrt();
        breaks.extend([lj - s1, lj + s1].into_iter().filter(|b| b.abs() < cut));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut failure = None;
    let spectral = integrate(
        |x: f64| {
            let r = rho.eval(x.clamp(-cut, cut)).unwrap_or(0.0);
            match f_big.eval(x.clamp(-cut, cut)) {
                Ok(fv) => fv * f_two.eval(sl, x - lj) * r,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        1e-12,
        1e-12,
        4000,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let rhs = spectral.value * g.scaled_integral(chi, table.params.alpha());
    Ok(ConcentrationStat { lhs, rhs, diff: lhs - rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dressing::DosGrid;
    use crate::ensemble::ThermalParams;

    fn record(lambda: Vec<f64>, q0: Vec<f64>, qt: Vec<f64>, t: f64, alpha: f64) -> TrajectoryRecord {
        let n = lambda.len();
        TrajectoryRecord { n1: 0, alpha, times: vec![0.0, t], lambda, q: vec![q0, qt], phi0: (0..n).collect(), bulk: vec![true; n], max_drift: 0.0, collisions: vec![0, 0], reorders: 0 }
    }

    #[test]
    fn chi_examples() {
        let chi = CutoffChi::new(3.0, 0.5).unwrap();
        assert!((chi.value(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(chi.value(3.0), 1.0);
        assert_eq!(chi.value(-3.0), 0.0);
        let c = chi.verify(10_000);
        assert!(c.within_b && (c.integral - 1.0).abs() < 1e-6);
        assert!((c.scaled_sup[1] - 0.9375).abs() < 1e-3);
        let neg = CutoffChi::new(2.0, -1.0).unwrap();
        assert_eq!(neg.value(5.0), -1.0);
        assert!((neg.value(0.0) + 0.5).abs() < 1e-15);
        assert!((neg.verify(10_000).integral + 1.0).abs() < 1e-6);
        for x in [0.3, 1.1, 2.9] {
            assert!((chi.prime(x) - chi.prime(-x)).abs() < 1e-15);
            assert!((chi.value(x) + chi.value(-x) - 1.0).abs() < 1e-14);
        }
        assert!(CutoffChi::new(1.0, 0.0).is_err());
    }

    #[test]
    fn softlog_examples() {
        let sl = SoftLog::new(0.0).unwrap();
        assert_eq!(sl.value(1.0).unwrap(), 0.0);
        assert!(sl.value(0.0).is_err());
        let sl = SoftLog::new((-2f64).exp()).unwrap();
        assert!((sl.value(0.0).unwrap() + 2.0).abs() < 1e-15);
        for x in [0.2, 1.0, 5.0] {
            assert!((sl.eval(x) - x.ln()).abs() <= sl.frak_d.powi(2) / (x * x));
        }
        assert!(SoftLog::for_size(512).frak_d > 0.0);
        assert_eq!(SoftLog::for_size(1_000_000).frak_d, 1e-300);
    }

    #[test]
    fn free_particle_residuals() {
        let tr = record(vec![1.3], vec![0.0], vec![2.6], 2.0, 1.0);
        assert_eq!(scattering_residual(&tr, 0, 1).unwrap().value, 0.0);
        assert_eq!(scattering_residual(&tr, 0, 0).unwrap().value, 0.0);
        let chi = CutoffChi::new(1.0, 1.0).unwrap();
        assert_eq!(regularized_residual(&tr, 0, 0, &chi, &SoftLog::new(0.0).unwrap()).unwrap(), 0.0);
        assert!(scattering_residual(&tr, 0, 5).is_err());
    }

    #[test]
    fn sharp_and_regularized_agree_for_small_m() {
        // Particle 0 overtakes particle 1.
        let tr = record(vec![2.0, -1.0], vec![0.0, 5.0], vec![9.0, 2.0], 3.0, 1.0);
        let sharp = scattering_residual(&tr, 0, 1).unwrap().value;
        let chi = CutoffChi::new(1e-3, 1.0).unwrap();
        let reg = regularized_residual(&tr, 0, 1, &chi, &SoftLog::new(0.0).unwrap()).unwrap();
        assert!((sharp - reg).abs() < 1e-12);
        assert!((sharp - (6.0 - 9.0 - 2.0 * 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn concentration_rhs_identities() {
        let p = ThermalParams::new(1.0, 1.0).unwrap();
        let table = DosTable::new(&p, DosGrid::new(401, 8.0).unwrap()).unwrap();
        let tr = record(vec![0.5, -0.2, 0.1], vec![0.0, 0.6, 1.1], vec![0.0, 0.6, 1.1], 1.0, p.alpha());
        let chi = CutoffChi::new(2.0, p.alpha()).unwrap();
        let sl = SoftLog::new(0.0).unwrap();
        let odd = concentration_stat(&tr, 0, 1, &FCatalog::One, FTwoBody::None, GCatalog::ChiMinusStep, &chi, &sl, &table).unwrap();
        assert_eq!(odd.rhs, 0.0);
        let prime = concentration_stat(&tr, 0, 1, &FCatalog::One, FTwoBody::None, GCatalog::ChiPrime, &chi, &sl, &table).unwrap();
        assert!((prime.rhs - 1.0 / p.alpha()).abs() < 1e-6);
        let bx = concentration_stat(&tr, 0, 1, &FCatalog::One, FTwoBody::None, GCatalog::Box, &chi, &sl, &table).unwrap();
        assert_eq!(bx.lhs, 3.0);
        assert!((bx.rhs - 4.0 / p.alpha()).abs() < 1e-6);
        let sig = concentration_stat(&tr, 0, 1, &FCatalog::Sigma1, FTwoBody::None, GCatalog::Box, &chi, &sl, &table).unwrap();
        assert!(sig.rhs.abs() < 1e-8);
        let logged = concentration_stat(&tr, 0, 1, &FCatalog::One, FTwoBody::AbsSoftLog, GCatalog::Box, &chi, &sl, &table).unwrap();
        assert!(logged.rhs.is_finite() && logged.rhs > 0.0);
    }
}
