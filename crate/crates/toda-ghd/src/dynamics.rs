//! State conversions, the Hamiltonian, and time evolution of the open lattice.
//!
//! Two integration routes are provided: an adaptive Dormand–Prince 5(4)
//! method with dense output (on Flaschka variables by default, or on the
//! canonical pair `(q, p)`), and a fixed-step leapfrog on `(q, p)`.

use crate::ensemble::FlaschkaState;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Canonical positions and momenta on the sites `n1..=n2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodaState {
    pub n1: i64,
    pub n2: i64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub time: f64,
}

impl TodaState {
    pub fn len(&self) -> usize {
        self.q.len()
    }
    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Integration route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Adaptive Dormand–Prince 5(4) on `(a, b)`.
    #[default]
    AdaptiveRk,
    /// Adaptive Dormand–Prince 5(4) on `(q, p)`.
    AdaptiveRkCanonical,
    /// Fixed-step velocity Verlet on `(q, p)` with step `max_step`.
    Leapfrog,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { scheme: Scheme::AdaptiveRk, abs_tol: 1e-10, rel_tol: 1e-10, max_step: 0.5 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.max_step > 0.0) {
            return Err(Error::Config(format!("integrator tolerances and max_step must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Counters from one call to [`evolve`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// `p = b`, `q_{i+1} − q_i = −2 log a_i`, anchored at the reference site.
pub fn flaschka_to_toda(state: &FlaschkaState) -> Result<TodaState> {
    let n = state.len();
    let r0 = state.offset(state.ref_site())?;
    let mut q = vec![0.0; n];
    q[r0] = state.q_ref;
    for k in r0 + 1..n {
        let a = state.a[k - 1];
        if a <= 0.0 {
            return Err(Error::SingularGap { site: state.n1 + k as i64 - 1 });
        }
        q[k] = q[k - 1] - 2.0 * a.ln();
    }
    for k in (0..r0).rev() {
        let a = state.a[k];
        if a <= 0.0 {
            return Err(Error::SingularGap { site: state.n1 + k as i64 });
        }
        q[k] = q[k + 1] + 2.0 * a.ln();
    }
    Ok(TodaState { n1: state.n1, n2: state.n2, p: state.b.clone(), q, time: state.time })
}

/// `a_i = e^{−(q_{i+1} − q_i)/2}` for `i < n2`, `a_{n2} = 0`, `b = p`.
pub fn toda_to_flaschka(state: &TodaState) -> FlaschkaState {
    let n = state.len();
    let mut a: Vec<f64> = (0..n.saturating_sub(1)).map(|k| (-(state.q[k + 1] - state.q[k]) / 2.0).exp()).collect();
    a.push(0.0);
    let r0 = (0i64.clamp(state.n1, state.n2) - state.n1) as usize;
    FlaschkaState { n1: state.n1, n2: state.n2, a, b: state.p.clone(), time: state.time, q_ref: state.q[r0] }
}

/// `H = Σ p_j²/2 + Σ_{j<n2} e^{q_j − q_{j+1}}`.
pub fn hamiltonian(state: &TodaState) -> f64 {
    let kinetic: f64 = state.p.iter().map(|p| 0.5 * p * p).sum();
    let potential: f64 = state.q.windows(2).map(|w| (w[0] - w[1]).exp()).sum();
    kinetic + potential
}

/// Hamiltonian from Flaschka variables: `Σ b²/2 + Σ a²`.
pub fn hamiltonian_flaschka(state: &FlaschkaState) -> f64 {
    state.b.iter().map(|b| 0.5 * b * b).sum::<f64>() + state.a.iter().map(|a| a * a).sum::<f64>()
}

/// Time derivatives `(da/dt, db/dt)` with `a_{n2}` held at 0.
pub fn rhs_flaschka(state: &FlaschkaState) -> (Vec<f64>, Vec<f64>) {
    let n = state.len();
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    for k in 0..n - 1 {
        da[k] = 0.5 * state.a[k] * (state.b[k] - state.b[k + 1]);
    }
    for k in 0..n {
        let left = if k > 0 { state.a[k - 1] * state.a[k - 1] } else { 0.0 };
        let right = if k + 1 < n { state.a[k] * state.a[k] } else { 0.0 };
        db[k] = left - right;
    }
    (da, db)
}

/// First-order system integrated by the Runge–Kutta driver.
trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], dy: &mut [f64]);
    /// Error scale of component `i`.
    fn scale(&self, i: usize, y0: f64, y1: f64, cfg: &IntegratorConfig) -> f64;
}

/// `y = [a_0..a_{N-2}, b_0..b_{N-1}, q_ref]`.
struct FlaschkaSys {
    n: usize,
    r0: usize,
}

impl System for FlaschkaSys {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (a, rest) = y.split_at(n - 1);
        let b = &rest[..n];
        let (da, rest) = dy.split_at_mut(n - 1);
        let (db, dq) = rest.split_at_mut(n);
        for k in 0..n - 1 {
            da[k] = 0.5 * a[k] * (b[k] - b[k + 1]);
        }
        let mut prev = 0.0;
        for k in 0..n {
            let cur = if k + 1 < n { a[k] * a[k] } else { 0.0 };
            db[k] = prev - cur;
            prev = cur;
        }
        dq[0] = b[self.r0];
    }
    fn scale(&self, i: usize, y0: f64, y1: f64, cfg: &IntegratorConfig) -> f64 {
        let m = y0.abs().max(y1.abs());
        if i + 1 < self.n {
            // Couplings evolve multiplicatively; control their relative error.
            (cfg.rel_tol * m).max(f64::MIN_POSITIVE)
        } else {
            cfg.abs_tol + cfg.rel_tol * m
        }
    }
}

/// `y = [q_0..q_{N-1}, p_0..p_{N-1}]`.
struct CanonicalSys {
    n: usize,
}

fn canonical_force(q: &[f64], f: &mut [f64]) {
    let n = q.len();
    let mut prev = 0.0;
    for j in 0..n {
        let cur = if j + 1 < n { (q[j] - q[j + 1]).exp() } else { 0.0 };
        f[j] = prev - cur;
        prev = cur;
    }
}

impl System for CanonicalSys {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let (q, p) = y.split_at(self.n);
        let (dq, dp) = dy.split_at_mut(self.n);
        dq.copy_from_slice(p);
        canonical_force(q, dp);
    }
    fn scale(&self, _i: usize, y0: f64, y1: f64, cfg: &IntegratorConfig) -> f64 {
        cfg.abs_tol + cfg.rel_tol * y0.abs().max(y1.abs())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Adaptive Dormand–Prince integration from `t0` to `t1`, calling `emit(t, y)`
/// at every requested output time via the order-4 continuous extension.
fn dopri5<S: System, E: FnMut(f64, &[f64]) -> Result<()>>(sys: &S, y: &mut Vec<f64>, t0: f64, t1: f64, cfg: &IntegratorConfig, outputs: &[f64], mut emit: E) -> Result<EvolveStats> {
    let n = sys.dim();
    let mut stats = EvolveStats::default();
    let mut out_idx = 0;
    while out_idx < outputs.len() && outputs[out_idx] <= t0 {
        emit(outputs[out_idx], y)?;
        out_idx += 1;
    }
    if t1 <= t0 {
        return Ok(stats);
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut dense = vec![0.0; n];
    sys.rhs(y, &mut k1);
    stats.rhs_evals += 1;

    // Initial step from the ratio of state and derivative scales.
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let sc = sys.scale(i, y[i], y[i], cfg);
        d0 += (y[i] / sc).powi(2);
        d1 += (k1[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n as f64).sqrt(), (d1 / n as f64).sqrt());
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-4 } else { 0.01 * d0 / d1 };
    h = h.min(cfg.max_step).min(t1 - t0).max(1e-8);
    let mut t = t0;
    let mut last_rejected = false;
    let mut last_err = 0.0;

    while t < t1 {
        if t + h > t1 || t1 - (t + h) < 1e-12 * t1.abs().max(1.0) {
            h = t1 - t;
        }
        if h < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h, err_norm: last_err });
        }
        let stage = |k_in: &[&[f64]], coef: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let mut s = 0.0;
                for (kk, c) in k_in.iter().zip(coef) {
                    s += c * kk[i];
                }
                out[i] = y[i] + h * s;
            }
        };
        stage(&[&k1], &[A21], &mut ytmp);
        sys.rhs(&ytmp, &mut k2);
        stage(&[&k1, &k2], &[A31, A32], &mut ytmp);
        sys.rhs(&ytmp, &mut k3);
        stage(&[&k1, &k2, &k3], &[A41, A42, A43], &mut ytmp);
        sys.rhs(&ytmp, &mut k4);
        stage(&[&k1, &k2, &k3, &k4], &[A51, A52, A53, A54], &mut ytmp);
        sys.rhs(&ytmp, &mut k5);
        stage(&[&k1, &k2, &k3, &k4, &k5], &[A61, A62, A63, A64, A65], &mut ytmp);
        sys.rhs(&ytmp, &mut k6);
        stage(&[&k1, &k3, &k4, &k5, &k6], &[A71, A73, A74, A75, A76], &mut ynew);
        sys.rhs(&ynew, &mut k7);
        stats.rhs_evals += 6;
        let _ = (C2, C3, C4, C5);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = sys.scale(i, y[i], ynew[i], cfg);
            err += (e / sc).powi(2);
        }
        err = (err / n as f64).sqrt();
        last_err = err;
        if !err.is_finite() {
            h *= 0.2;
            last_rejected = true;
            stats.rejected += 1;
            continue;
        }
        if err <= 1.0 {
            let t_new = t + h;
            // Dense output on [t, t_new] for any pending output times.
            if out_idx < outputs.len() && outputs[out_idx] <= t_new {
                for i in 0..n {
                    dense[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                while out_idx < outputs.len() && outputs[out_idx] <= t_new {
                    let s = (outputs[out_idx] - t) / h;
                    let s1 = 1.0 - s;
                    for i in 0..n {
                        let r2 = ynew[i] - y[i];
                        let r3 = h * k1[i] - r2;
                        let r4 = r2 - h * k7[i] - r3;
                        ytmp[i] = y[i] + s * (r2 + s1 * (r3 + s * (r4 + s1 * dense[i])));
                    }
                    if outputs[out_idx] == t_new {
                        ytmp.copy_from_slice(&ynew);
                    }
                    emit(outputs[out_idx], &ytmp)?;
                    out_idx += 1;
                }
            }
            std::mem::swap(y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            stats.accepted += 1;
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
            h = (h * fac).min(cfg.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok(stats)
}

fn check_times(t0: f64, t_final: f64, obs: &[f64]) -> Result<()> {
    if !(t_final >= t0) {
        return Err(Error::Domain(format!("t_final {t_final} precedes state time {t0}")));
    }
    if obs.windows(2).any(|w| w[1] < w[0]) || obs.iter().any(|&t| t < t0 || t > t_final) {
        return Err(Error::Domain(format!("observer times must be sorted within [{t0}, {t_final}]")));
    }
    Ok(())
}

/// Advances `state` to `t_final`, invoking `observer` at each of `obs_times`
/// (sorted, inside `[state.time, t_final]`).
pub fn evolve<F: FnMut(&FlaschkaState) -> Result<()>>(state: &FlaschkaState, t_final: f64, cfg: &IntegratorConfig, obs_times: &[f64], mut observer: F) -> Result<(FlaschkaState, EvolveStats)> {
    cfg.validate()?;
    check_times(state.time, t_final, obs_times)?;
    let n = state.len();
    match cfg.scheme {
        Scheme::AdaptiveRk => {
            let r0 = state.offset(state.ref_site())?;
            let sys = FlaschkaSys { n, r0 };
            let mut y = Vec::with_capacity(2 * n);
            y.extend_from_slice(&state.a[..n - 1]);
            y.extend_from_slice(&state.b);
            y.push(state.q_ref);
            let unpack = |t: f64, y: &[f64]| {
                let mut a = y[..n - 1].to_vec();
                a.push(0.0);
                FlaschkaState { n1: state.n1, n2: state.n2, a, b: y[n - 1..2 * n - 1].to_vec(), time: t, q_ref: y[2 * n - 1] }
            };
            let stats = dopri5(&sys, &mut y, state.time, t_final, cfg, obs_times, |t, y| observer(&unpack(t, y)))?;
            Ok((unpack(t_final, &y), stats))
        }
        Scheme::AdaptiveRkCanonical => {
            let toda = flaschka_to_toda(state)?;
            let sys = CanonicalSys { n };
            let mut y = [toda.q.clone(), toda.p.clone()].concat();
            let unpack = |t: f64, y: &[f64]| toda_to_flaschka(&TodaState { n1: state.n1, n2: state.n2, q: y[..n].to_vec(), p: y[n..].to_vec(), time: t });
            let stats = dopri5(&sys, &mut y, state.time, t_final, cfg, obs_times, |t, y| observer(&unpack(t, y)))?;
            Ok((unpack(t_final, &y), stats))
        }
        Scheme::Leapfrog => {
            let mut toda = flaschka_to_toda(state)?;
            let mut stats = EvolveStats::default();
            let mut stops: Vec<f64> = obs_times.to_vec();
            stops.push(t_final);
            let mut force = vec![0.0; n];
            canonical_force(&toda.q, &mut force);
            stats.rhs_evals += 1;
            let mut t = state.time;
            for (si, &stop) in stops.iter().enumerate() {
                let span = stop - t;
                if span > 0.0 {
                    let steps = (span / cfg.max_step).ceil().max(1.0) as usize;
                    let dt = span / steps as f64;
                    for _ in 0..steps {
                        for j in 0..n {
                            toda.p[j] += 0.5 * dt * force[j];
                            toda.q[j] += dt * toda.p[j];
                        }
                        canonical_force(&toda.q, &mut force);
                        for j in 0..n {
                            toda.p[j] += 0.5 * dt * force[j];
                        }
                        stats.accepted += 1;
                        stats.rhs_evals += 1;
                    }
                    t = stop;
                }
                toda.time = stop;
                if si < obs_times.len() {
                    observer(&toda_to_flaschka(&toda))?;
                }
            }
            toda.time = t_final;
            Ok((toda_to_flaschka(&toda), stats))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_thermal, ThermalParams};

    fn thermal(n: i64, theta: f64, seed: u64) -> FlaschkaState {
        let p = ThermalParams::new(1.0, theta).unwrap();
        sample_thermal(&p, -(n / 2), n - n / 2 - 1, seed).unwrap()
    }

    #[test]
    fn conversions() {
        let st = FlaschkaState::new(0, vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let t = flaschka_to_toda(&st).unwrap();
        assert_eq!(t.q, vec![0.0, 0.0]);
        let st = FlaschkaState::new(0, vec![0.5, 0.0], vec![0.0, 0.0]).unwrap();
        let t = flaschka_to_toda(&st).unwrap();
        assert!((t.q[1] - 2.0 * 2f64.ln()).abs() < 1e-15);
        let st = FlaschkaState::new(0, vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(flaschka_to_toda(&st), Err(Error::SingularGap { site: 0 })));
        let alpha = 0.7;
        let t = TodaState { n1: 0, n2: 3, p: vec![1.0, 2.0, 3.0, 4.0], q: (0..4).map(|i| alpha * i as f64).collect(), time: 0.0 };
        let f = toda_to_flaschka(&t);
        assert_eq!(f.b, t.p);
        for k in 0..3 {
            assert!((f.a[k] - (-alpha / 2.0).exp()).abs() < 1e-15);
        }
        assert_eq!(f.a[3], 0.0);
    }

    #[test]
    fn round_trip() {
        let st = thermal(40, 0.5, 3);
        let back = toda_to_flaschka(&flaschka_to_toda(&st).unwrap());
        for k in 0..st.len() {
            assert!((back.a[k] - st.a[k]).abs() <= 1e-14 * st.a[k].max(1.0));
        }
        assert_eq!(back.b, st.b);
        let t = flaschka_to_toda(&st).unwrap();
        assert_eq!(t.q[st.offset(0).unwrap()], 0.0);
    }

    #[test]
    fn hamiltonian_examples() {
        let t = TodaState { n1: 0, n2: 1, p: vec![0.0, 0.0], q: vec![0.0, 0.0], time: 0.0 };
        assert_eq!(hamiltonian(&t), 1.0);
        let t = TodaState { n1: 0, n2: 0, p: vec![3.0], q: vec![0.0], time: 0.0 };
        assert_eq!(hamiltonian(&t), 4.5);
        let st = thermal(20, 1.0, 1);
        let h1 = hamiltonian(&flaschka_to_toda(&st).unwrap());
        assert!((h1 - hamiltonian_flaschka(&st)).abs() < 1e-12 * h1.abs());
    }

    #[test]
    fn rhs_examples() {
        let st = FlaschkaState::new(0, vec![0.3, 0.4, 0.0], vec![1.0, 1.0, 1.0]).unwrap();
        let (da, _) = rhs_flaschka(&st);
        assert!(da.iter().all(|&v| v == 0.0));
        let st = FlaschkaState::new(0, vec![0.0, 0.0, 0.0], vec![1.0, -2.0, 3.0]).unwrap();
        let (_, db) = rhs_flaschka(&st);
        assert!(db.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_matches_finite_difference() {
        let st = thermal(16, 1.0, 5);
        let (da, db) = rhs_flaschka(&st);
        let dt = 1e-6;
        let cfg = IntegratorConfig { abs_tol: 1e-13, rel_tol: 1e-13, ..Default::default() };
        let (fwd, _) = evolve(&st, dt, &cfg, &[], |_| Ok(())).unwrap();
        for k in 0..st.len() {
            assert!(((fwd.a[k] - st.a[k]) / dt - da[k]).abs() < 1e-5);
            assert!(((fwd.b[k] - st.b[k]) / dt - db[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn identity_and_free_particle() {
        let st = thermal(8, 1.0, 2);
        let cfg = IntegratorConfig::default();
        let (same, _) = evolve(&st, 0.0, &cfg, &[], |_| Ok(())).unwrap();
        assert_eq!(same, st);
        let single = FlaschkaState::new(0, vec![0.0], vec![1.5]).unwrap();
        for scheme in [Scheme::AdaptiveRk, Scheme::AdaptiveRkCanonical, Scheme::Leapfrog] {
            let (out, _) = evolve(&single, 2.0, &IntegratorConfig { scheme, ..cfg }, &[], |_| Ok(())).unwrap();
            assert!((out.q_ref - 3.0).abs() < 1e-12, "{scheme:?}");
        }
    }

    #[test]
    fn dense_output_matches_stepping_to_time() {
        let st = thermal(32, 0.5, 9);
        let cfg = IntegratorConfig { abs_tol: 1e-10, rel_tol: 1e-10, max_step: 0.5, ..Default::default() };
        let times = [0.0, 0.37, 1.234, 2.5];
        let mut seen = Vec::new();
        evolve(&st, 3.0, &cfg, &times, |s| {
            seen.push(s.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), times.len());
        for (s, &t) in seen.iter().zip(&times) {
            assert_eq!(s.time, t);
            let (direct, _) = evolve(&st, t, &cfg, &[], |_| Ok(())).unwrap();
            for k in 0..st.len() {
                assert!((direct.b[k] - s.b[k]).abs() < 1e-8, "t={t}");
                assert!((direct.a[k] - s.a[k]).abs() < 1e-8 * direct.a[k].max(1e-3), "t={t}");
            }
            assert!((direct.q_ref - s.q_ref).abs() < 1e-8);
        }
    }

    #[test]
    fn routes_agree() {
        let st = thermal(32, 1.0, 4);
        let tol = 1e-10;
        let base = IntegratorConfig { abs_tol: tol, rel_tol: tol, max_step: 0.5, scheme: Scheme::AdaptiveRk };
        let (ab, _) = evolve(&st, 3.0, &base, &[], |_| Ok(())).unwrap();
        let (pq, _) = evolve(&st, 3.0, &IntegratorConfig { scheme: Scheme::AdaptiveRkCanonical, ..base }, &[], |_| Ok(())).unwrap();
        let qa = flaschka_to_toda(&ab).unwrap();
        let qb = flaschka_to_toda(&pq).unwrap();
        for k in 0..st.len() {
            assert!((qa.q[k] - qb.q[k]).abs() < 10.0 * tol * (1.0 + qa.q[k].abs()) * 10.0, "q {k}");
            assert!((qa.p[k] - qb.p[k]).abs() < 100.0 * tol, "p {k}");
        }
        let (lf, _) = evolve(&st, 3.0, &IntegratorConfig { scheme: Scheme::Leapfrog, max_step: 1e-3, ..base }, &[], |_| Ok(())).unwrap();
        let ql = flaschka_to_toda(&lf).unwrap();
        for k in 0..st.len() {
            assert!((qa.q[k] - ql.q[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn time_reversal() {
        let st = thermal(24, 0.7, 8);
        let tol = 1e-11;
        let cfg = IntegratorConfig { abs_tol: tol, rel_tol: tol, ..Default::default() };
        let (mut fwd, _) = evolve(&st, 4.0, &cfg, &[], |_| Ok(())).unwrap();
        fwd.b.iter_mut().for_each(|b| *b = -*b);
        fwd.time = 0.0;
        let (back, _) = evolve(&fwd, 4.0, &cfg, &[], |_| Ok(())).unwrap();
        let q0 = flaschka_to_toda(&st).unwrap();
        let q1 = flaschka_to_toda(&back).unwrap();
        for k in 0..st.len() {
            assert!((q0.q[k] - q1.q[k]).abs() < 100.0 * tol * (1.0 + q0.q[k].abs()));
        }
    }

    #[test]
    fn hamiltonian_conserved() {
        let st = thermal(64, 0.5, 12);
        let cfg = IntegratorConfig::default();
        let (out, _) = evolve(&st, 10.0, &cfg, &[], |_| Ok(())).unwrap();
        let h0 = hamiltonian_flaschka(&st);
        assert!((hamiltonian_flaschka(&out) - h0).abs() < 1e-8 * h0.abs());
    }

    #[test]
    fn rejects_bad_times() {
        let st = thermal(8, 1.0, 2);
        let cfg = IntegratorConfig::default();
        assert!(evolve(&st, -1.0, &cfg, &[], |_| Ok(())).is_err());
        assert!(evolve(&st, 1.0, &cfg, &[0.5, 0.2], |_| Ok(())).is_err());
    }
}
