//! Density of states, the log-kernel operator `T`, the dressing operator
//! `(θ^{-1} − Tϱ_β)^{-1}` and the effective velocity.
//!
//! `T f(x) = 2 ∫ log|x − y| f(y) dy` is discretized by product integration:
//! on each pair of grid cells `f` is replaced by its quadratic interpolant
//! and the log kernel is integrated exactly against it, so the scheme is
//! fourth order away from the endpoint singularities of `f` (there are none,
//! the densities decay like Gaussians).

use crate::ensemble::ThermalParams;
use crate::error::{Error, Result};
use crate::linalg::DenseSolver;
use crate::quad::integrate;
use crate::special::ln_gamma;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

const GL12_X: [f64; 6] = [0.125_233_408_511_468_9, 0.367_831_498_998_180_2, 0.587_317_954_286_617_5, 0.769_902_674_194_304_7, 0.904_117_256_370_474_9, 0.981_560_634_246_719_2];
const GL12_W: [f64; 6] = [0.249_147_045_813_402_8, 0.233_492_536_538_354_8, 0.203_167_426_723_065_9, 0.160_078_328_543_346_2, 0.106_939_325_995_318_4, 0.047_175_336_386_511_8];

/// `P_k(u) = u^{k+1}/(k+1) · (log|u| − 1/(k+1))`, the antiderivative of `u^k log|u|`.
fn p_anti(k: i32, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let k1 = (k + 1) as f64;
    u.powi(k + 1) / k1 * (u.abs().ln() - 1.0 / k1)
}

/// Moments `m_k = ∫_{-h}^{h} s^k log|d + s| ds`, `k = 0, 1, 2`.
fn log_moments(d: f64, h: f64) -> [f64; 3] {
    if d.abs() <= 4.0 * h {
        let (a, b) = (d - h, d + h);
        let p0 = p_anti(0, b) - p_anti(0, a);
        let p1 = p_anti(1, b) - p_anti(1, a);
        let p2 = p_anti(2, b) - p_anti(2, a);
        [p0, p1 - d * p0, p2 - 2.0 * d * p1 + d * d * p0]
    } else {
        let mut m = [0.0; 3];
        for (x, w) in GL12_X.iter().zip(&GL12_W) {
            for s in [h * x, -h * x] {
                let l = (d + s).abs().ln() * w * h;
                m[0] += l;
                m[1] += l * s;
                m[2] += l * s * s;
            }
        }
        m
    }
}

/// Weights `2·(w_left, w_center, w_right)` of a cell pair whose center lies
/// at signed distance `d` from the evaluation point.
fn pair_weights(d: f64, h: f64) -> [f64; 3] {
    let [m0, m1, m2] = log_moments(d, h);
    let h2 = h * h;
    [(m2 - h * m1) / h2, 2.0 * (h2 * m0 - m2) / h2, (m2 + h * m1) / h2]
}

/// Uniform grid on `[−Λ, Λ]` with an odd number of nodes, trapezoid
/// weights, and the precomputed log-kernel weight table.
#[derive(Debug, Clone)]
pub struct DosGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cutoff: f64,
    h: f64,
    // Pair weights indexed by (2p + 1 − i) + M.
    table: Vec<[f64; 3]>,
}

impl DosGrid {
    pub const DEFAULT_NODES: usize = 2001;

    pub fn new(m: usize, cutoff: f64) -> Result<Self> {
        if m < 5 || m % 2 == 0 {
            return Err(Error::Config(format!("grid size must be odd and at least 5, got {m}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::Config(format!("grid cutoff must be positive, got {cutoff}")));
        }
        let h = 2.0 * cutoff / (m - 1) as f64;
        let nodes: Vec<f64> = (0..m).map(|i| -cutoff + i as f64 * h).collect();
        let mut weights = vec![h; m];
        weights[0] = h / 2.0;
        weights[m - 1] = h / 2.0;
        let table = (0..=2 * m).map(|k| pair_weights((k as f64 - m as f64) * h, h)).collect();
        Ok(Self { nodes, weights, cutoff, h, table })
    }

    /// `M = 2001` nodes on `[−Λ, Λ]`, `Λ = max(6, 8/√β)`.
    pub fn default_for(beta: f64) -> Result<Self> {
        Self::new(Self::DEFAULT_NODES, 6f64.max(8.0 / beta.sqrt()))
    }

    /// Rejects cutoffs whose Gaussian tail `e^{−βΛ²/2}` exceeds `1e-10`.
    pub fn check_cutoff(&self, beta: f64) -> Result<()> {
        let tail = (-beta * self.cutoff * self.cutoff / 2.0).exp();
        if tail >= 1e-10 {
            return Err(Error::Config(format!("cutoff {} too small for β = {beta}: tail estimate {tail:e}", self.cutoff)));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid quadrature of grid values.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn pair_row(&self, i: usize) -> impl Iterator<Item = (usize, [f64; 3])> + '_ {
        let m = self.len();
        (0..(m - 1) / 2).map(move |p| (2 * p, self.table[2 * p + 1 + m - i]))
    }

    /// `T f` at every node.
    pub fn t_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.pair_row(i).map(|(j, w)| w[0] * f[j] + w[1] * f[j + 1] + w[2] * f[j + 2]).sum()).collect()
    }

    /// `T f(x)` at an arbitrary point.
    pub fn t_apply_at(&self, f: &[f64], x: f64) -> f64 {
        let m = self.len();
        (0..(m - 1) / 2)
            .map(|p| {
                let w = pair_weights(self.nodes[2 * p + 1] - x, self.h);
                w[0] * f[2 * p] + w[1] * f[2 * p + 1] + w[2] * f[2 * p + 2]
            })
            .sum()
    }

    /// Row `i` of the dense matrix representing `T`.
    fn t_row(&self, i: usize, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (j, w) in self.pair_row(i) {
            row[j] += w[0];
            row[j + 1] += w[1];
            row[j + 2] += w[2];
        }
    }
}

/// `F(θ; x) = (θ/Γ(θ))^{1/2} ∫_0^∞ y^{θ−1} e^{ixy − y²/2} dy`.
///
/// On `[0, c]`, `c = min(1/2, 1/(2|x|))`, the factor `e^{ixy − y²/2}` is
/// expanded in powers of `y` and integrated term by term, which absorbs the
/// `y^{θ−1}` singularity exactly; `[c, 24]` uses adaptive Gauss–Kronrod.
pub fn script_f(theta: f64, x: f64) -> Result<Complex64> {
    if !(theta > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("F(θ; x) needs θ > 0 and finite x, got θ = {theta}, x = {x}")));
    }
    let c = if x.abs() > 1.0 { 0.5 / x.abs() } else { 0.5 };
    let z = Complex64::new(0.0, x);
    let mut g_prev = Complex64::new(0.0, 0.0);
    let mut g = Complex64::new(1.0, 0.0);
    let mut cp = c.powf(theta);
    let mut head = g * (cp / theta);
    let mut last = head.norm();
    for k in 0..120 {
        let next = (z * g - g_prev) / (k as f64 + 1.0);
        g_prev = g;
        g = next;
        cp *= c;
        let term = g * (cp / (theta + k as f64 + 1.0));
        head += term;
        // Odd or even coefficients vanish when x = 0, so require two small terms.
        let size = term.norm();
        if k > 4 && size.max(last) < 1e-18 * head.norm() {
            break;
        }
        last = size;
    }
    let mut breaks = vec![c];
    breaks.extend([1.0, 2.0, 4.0, 8.0, 12.0, 16.0, 24.0].into_iter().filter(|&b| b > c));
    let tail = integrate(|y: f64| Complex64::new(-y * y / 2.0, x * y).exp() * y.powf(theta - 1.0), &breaks, 1e-17, 1e-15, 2000);
    let pref = (0.5 * (theta.ln() - ln_gamma(theta))).exp();
    Ok((head + tail.value) * pref)
}

fn rho_beta_theta(beta: f64, theta: f64, x: f64) -> Result<f64> {
    let f = script_f(theta, beta.sqrt() * x.abs())?;
    let f2 = f.norm_sqr();
    if !(f2 > 1e-300) {
        return Err(Error::Domain(format!("|F| underflow at θ = {theta}, x = {x}")));
    }
    Ok((beta / (2.0 * std::f64::consts::PI)).sqrt() / f2 * (-beta * x * x / 2.0).exp())
}

/// `ϱ_β(x) = (β/2π)^{1/2} |F(θ; β^{1/2} x)|^{−2} e^{−βx²/2}`.
pub fn rho_beta(params: &ThermalParams, x: f64) -> Result<f64> {
    rho_beta_theta(params.beta(), params.theta(), x)
}

/// Values of an even function on a symmetric grid, computed on `x ≥ 0` only.
fn even_on_grid<F: FnMut(f64) -> Result<f64>>(grid: &DosGrid, mut f: F) -> Result<Vec<f64>> {
    let m = grid.len();
    let mid = (m - 1) / 2;
    let mut out = vec![0.0; m];
    for i in mid..m {
        out[i] = f(grid.nodes[i])?;
        out[m - 1 - i] = out[i];
    }
    Ok(out)
}

/// `θ`-step of the five-point derivative defining `ϱ`.
pub fn theta_step(theta: f64) -> f64 {
    (1e-4 * theta.max(1.0)).min(theta / 4.0)
}

/// `ϱ(x) = ∂_θ(θ ϱ_{β;θ}(x))` on the grid by the fourth-order central stencil.
pub fn rho_on_grid(params: &ThermalParams, grid: &DosGrid) -> Result<Vec<f64>> {
    let (beta, theta) = (params.beta(), params.theta());
    let h = theta_step(theta);
    even_on_grid(grid, |x| {
        let g = |t: f64| rho_beta_theta(beta, t, x).map(|v| t * v);
        Ok((-g(theta + 2.0 * h)? + 8.0 * g(theta + h)? - 8.0 * g(theta - h)? + g(theta - 2.0 * h)?) / (12.0 * h))
    })
}

/// Cubic Lagrange interpolant of values on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    pub x0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: &DosGrid, values: Vec<f64>) -> Self {
        Self { x0: grid.nodes[0], h: grid.h, values }
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.values.len() - 1) as f64 * self.h
    }

    /// Value at `x`; queries outside the grid are an error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let n = self.values.len();
        let slack = 1e-12 * self.h;
        if !(x >= self.x0 - slack && x <= self.x_max() + slack) {
            return Err(Error::OutOfRange(format!("{x} outside [{}, {}]", self.x0, self.x_max())));
        }
        let s = (x - self.x0) / self.h;
        let i = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let t = s - i as f64;
        let (t0, t1, t2, t3) = (t, t - 1.0, t - 2.0, t - 3.0);
        let v = &self.values[i..i + 4];
        Ok(-v[0] * t1 * t2 * t3 / 6.0 + v[1] * t0 * t2 * t3 / 2.0 - v[2] * t0 * t1 * t3 / 2.0 + v[3] * t0 * t1 * t2 / 6.0)
    }
}

/// `ϱ_β`, `ϱ` and `Tϱ` on a grid, without the dressing solve.
#[derive(Debug, Clone)]
pub struct DosTable {
    pub params: ThermalParams,
    pub grid: DosGrid,
    pub rho_beta: Vec<f64>,
    pub rho: Vec<f64>,
    pub t_rho: Vec<f64>,
    /// `max |ϱ − θ(Tϱ + α)ϱ_β|` over the grid.
    pub rhorho_residual: f64,
}

impl DosTable {
    /// Errors when the self-consistency residual exceeds `1e-3`.
    pub fn new(params: &ThermalParams, grid: DosGrid) -> Result<Self> {
        grid.check_cutoff(params.beta())?;
        let rho_beta = even_on_grid(&grid, |x| rho_beta(params, x))?;
        let rho = rho_on_grid(params, &grid)?;
        let t_rho = grid.t_apply(&rho);
        let (theta, alpha) = (params.theta(), params.alpha());
        let rhorho_residual = (0..grid.len()).map(|i| (rho[i] - theta * (t_rho[i] + alpha) * rho_beta[i]).abs()).fold(0.0, f64::max);
        if !(rhorho_residual <= 1e-3) {
            return Err(Error::Inconsistency(format!("density of states fails self-consistency: residual {rhorho_residual:e} at θ = {theta}")));
        }
        Ok(Self { params: *params, grid, rho_beta, rho, t_rho, rhorho_residual })
    }

    pub fn rho_fn(&self) -> GridFn {
        GridFn::new(&self.grid, self.rho.clone())
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.rho)
    }

    /// `∫_{-∞}^{x} ϱ` by trapezoid on the grid plus linear interpolation.
    pub fn cdf(&self, x: f64) -> f64 {
        let nodes = self.grid.nodes();
        if x <= nodes[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 1..nodes.len() {
            let (a, b) = (nodes[i - 1], nodes[i]);
            if x <= b {
                let t = (x - a) / (b - a);
                let fx = self.rho[i - 1] + t * (self.rho[i] - self.rho[i - 1]);
                return acc + 0.5 * (x - a) * (self.rho[i - 1] + fx);
            }
            acc += 0.5 * (b - a) * (self.rho[i - 1] + self.rho[i]);
        }
        acc
    }

    /// `⟨f, g⟩_ϱ`.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> f64 {
        inner_product_rho(f, g, &self.rho, &self.grid)
    }
}

/// `⟨f, g⟩_ϱ = ∫ f g ϱ` by grid quadrature.
pub fn inner_product_rho(f: &[f64], g: &[f64], rho: &[f64], grid: &DosGrid) -> f64 {
    (0..grid.len()).map(|i| f[i] * g[i] * rho[i] * grid.weights[i]).sum()
}

/// Factored `θ^{-1} − Tϱ_β`, split into reflection-even and -odd blocks.
pub struct DressingOperator {
    theta: f64,
    grid: DosGrid,
    rho_beta: Vec<f64>,
    even: DenseSolver,
    odd: DenseSolver,
}

impl DressingOperator {
    /// `rho_beta` must be even on the grid.
    pub fn new(theta: f64, grid: &DosGrid, rho_beta: &[f64]) -> Result<Self> {
        let m = grid.len();
        let mid = (m - 1) / 2;
        let mut even = DMatrix::zeros(mid + 1, mid + 1);
        let mut odd = DMatrix::zeros(mid, mid);
        let mut row = vec![0.0; m];
        for i in 0..=mid {
            grid.t_row(i, &mut row);
            let a = |j: usize| if i == j { 1.0 / theta } else { 0.0 } - row[j] * rho_beta[j];
            for j in 0..mid {
                let (x, y) = (a(j), a(m - 1 - j));
                even[(i, j)] = x + y;
                if i < mid {
                    odd[(i, j)] = x - y;
                }
            }
            even[(i, mid)] = a(mid);
        }
        Ok(Self { theta, grid: grid.clone(), rho_beta: rho_beta.to_vec(), even: DenseSolver::new(even)?, odd: DenseSolver::new(odd)? })
    }

    /// `(θ^{-1} − Tϱ_β) g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> = g.iter().zip(&self.rho_beta).map(|(a, b)| a * b).collect();
        let tg = self.grid.t_apply(&weighted);
        g.iter().zip(&tg).map(|(a, t)| a / self.theta - t).collect()
    }

    /// `f^dr`, checked to `‖(θ^{-1} − Tϱ_β) f^dr − f‖∞ < 1e-8 ‖f‖∞`.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let m = self.grid.len();
        let mid = (m - 1) / 2;
        let fe: Vec<f64> = (0..=mid).map(|i| 0.5 * (f[i] + f[m - 1 - i])).collect();
        let fo: Vec<f64> = (0..mid).map(|i| 0.5 * (f[i] - f[m - 1 - i])).collect();
        let xe = self.even.solve(&fe, 3)?.x;
        let xo = self.odd.solve(&fo, 3)?.x;
        let mut out = vec![0.0; m];
        for i in 0..mid {
            out[i] = xe[i] + xo[i];
            out[m - 1 - i] = xe[i] - xo[i];
        }
        out[mid] = xe[mid];
        let back = self.apply(&out);
        let fnorm = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let res = back.iter().zip(f).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if res > 1e-8 * fnorm {
            return Err(Error::OperatorSingular(format!("dressing residual {res:e} exceeds 1e-8·{fnorm:e}")));
        }
        Ok(out)
    }
}

/// Sup-norm residuals of the identities tying `ϱ`, `ς^dr` and `v_eff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    /// `|∫ϱ − 1|`.
    pub mass: f64,
    /// `ϱ − θ(Tϱ + α)ϱ_β`.
    pub rhorho: f64,
    /// `ϱ − α ς₀^dr ϱ_β`.
    pub rho0: f64,
    /// `(θ^{-1}ς₀^dr − α^{-1} T∘ϱ) v_eff − ς₁`.
    pub vt: f64,
    /// `v_eff + α^{-1}(v_eff·Tϱ − T(ϱ v_eff)) − λ`.
    pub vlambda01: f64,
    /// `min sgn(α) ς₀^dr`; positive when the sign property holds.
    pub min_signed_sigma0: f64,
}

impl IdentityResiduals {
    /// The residuals that must vanish as the grid is refined.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [("mass", self.mass), ("rhorho", self.rhorho), ("rho0", self.rho0), ("vt", self.vt), ("vlambda01", self.vlambda01)]
    }
}

/// Dressed `ς₀ = 1`, `ς₁ = x` and `v_eff = ς₁^dr / ς₀^dr` on a grid.
pub struct DressingSolution {
    pub table: DosTable,
    pub operator: DressingOperator,
    pub sigma0dr: Vec<f64>,
    pub sigma1dr: Vec<f64>,
    pub veff: Vec<f64>,
}

impl DressingSolution {
    pub fn solve(params: &ThermalParams, grid: DosGrid) -> Result<Self> {
        let table = DosTable::new(params, grid)?;
        let operator = DressingOperator::new(params.theta(), &table.grid, &table.rho_beta)?;
        let m = table.grid.len();
        let sigma0dr = operator.solve(&vec![1.0; m])?;
        let sigma1dr = operator.solve(table.grid.nodes())?;
        let veff: Vec<f64> = sigma1dr.iter().zip(&sigma0dr).map(|(a, b)| a / b).collect();
        Ok(Self { table, operator, sigma0dr, sigma1dr, veff })
    }

    pub fn params(&self) -> &ThermalParams {
        &self.table.params
    }

    pub fn grid(&self) -> &DosGrid {
        &self.table.grid
    }

    pub fn veff_fn(&self) -> GridFn {
        GridFn::new(self.grid(), self.veff.clone())
    }

    /// `v_eff(λ)` by cubic interpolation; errors outside `[−Λ, Λ]`.
    pub fn veff_at(&self, lambda: f64) -> Result<f64> {
        self.veff_fn().eval(lambda)
    }

    pub fn residuals(&self) -> IdentityResiduals {
        let t = &self.table;
        let (theta, alpha) = (t.params.theta(), t.params.alpha());
        let m = t.grid.len();
        let x = t.grid.nodes();
        let rv: Vec<f64> = (0..m).map(|i| t.rho[i] * self.veff[i]).collect();
        let t_rv = t.grid.t_apply(&rv);
        let sup = |f: &dyn Fn(usize) -> f64| (0..m).map(f).fold(0.0f64, |a, v| a.max(v.abs()));
        IdentityResiduals {
            mass: (t.mass() - 1.0).abs(),
            rhorho: t.rhorho_residual,
            rho0: sup(&|i| t.rho[i] - alpha * self.sigma0dr[i] * t.rho_beta[i]),
            vt: sup(&|i| self.sigma0dr[i] / theta * self.veff[i] - t_rv[i] / alpha - x[i]),
            vlambda01: sup(&|i| self.veff[i] + (self.veff[i] * t.t_rho[i] - t_rv[i]) / alpha - x[i]),
            min_signed_sigma0: self.sigma0dr.iter().map(|s| s * t.params.alpha_sign()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Residual of the `v_eff` fixed-point identity at off-grid points.
    pub fn vlambda01_at(&self, lambdas: &[f64]) -> Result<f64> {
        let t = &self.table;
        let alpha = t.params.alpha();
        let rv: Vec<f64> = t.rho.iter().zip(&self.veff).map(|(a, b)| a * b).collect();
        let vf = self.veff_fn();
        let mut worst = 0.0f64;
        for &l in lambdas {
            let v = vf.eval(l)?;
            let r = v + (v * t.grid.t_apply_at(&t.rho, l) - t.grid.t_apply_at(&rv, l)) / alpha - l;
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }

    /// Writes `x, rho_beta, rho, sigma0dr, sigma1dr, veff` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "rho_beta", "rho", "sigma0dr", "sigma1dr", "veff"])?;
        let t = &self.table;
        for i in 0..t.grid.len() {
            w.serialize((t.grid.nodes()[i], t.rho_beta[i], t.rho[i], self.sigma0dr[i], self.sigma1dr[i], self.veff[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `|2α^{-1} ∫ 𝔩(x−λ) ϱ dx + 1| − (2|α|^{-1} ∫ |𝔩(x−λ)| ϱ dx + 1/2)` with
/// `𝔩(x) = ½ log(x² + 𝔡²)`; positive when the small-θ dominance mechanism holds.
pub fn beta0_margin(table: &DosTable, lambda: f64, frak_d: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&frak_d) {
        return Err(Error::Domain(format!("𝔡 must lie in [0, 1), got {frak_d}")));
    }
    let rho = table.rho_fn();
    let cut = table.grid.cutoff();
    let s = (1.0 - frak_d * frak_d).sqrt();
    let mut breaks = vec![-cut, cut];
    breaks.extend([lambda - s, lambda, lambda + s].into_iter().filter(|b| b.abs() < cut));
    breaks.sort_by(f64::total_cmp);
    let d2 = frak_d * frak_d;
    let soft = |x: f64| {
        let u = x - lambda;
        if u == 0.0 && d2 == 0.0 {
            0.0
        } else {
            0.5 * (u * u + d2).ln()
        }
    };
    let r = |x: f64| rho.eval(x.clamp(-cut, cut)).unwrap_or(0.0);
    let signed = integrate(|x: f64| soft(x) * r(x), &breaks, 1e-12, 1e-12, 4000);
    let absolute = integrate(|x: f64| soft(x).abs() * r(x), &breaks, 1e-12, 1e-12, 4000);
    let alpha = table.params.alpha();
    Ok((2.0 / alpha * signed.value + 1.0).abs() - (2.0 / alpha.abs() * absolute.value + 0.5))
}

/// Margins over a `θ` list at fixed `β`, and the largest `θ` whose margin is
/// positive at every `λ` in `lambdas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta0Scan {
    pub thetas: Vec<f64>,
    pub min_margin: Vec<f64>,
    pub theta0: Option<f64>,
}

pub fn theta0_scan(beta: f64, thetas: &[f64], lambdas: &[f64], frak_d: f64, grid_nodes: usize) -> Result<Theta0Scan> {
    let mut min_margin = Vec::with_capacity(thetas.len());
    let mut theta0 = None;
    for &theta in thetas {
        let params = ThermalParams::new(beta, theta)?;
        let grid = DosGrid::new(grid_nodes, 6f64.max(8.0 / beta.sqrt()))?;
        let table = DosTable::new(&params, grid)?;
        let mut worst = f64::INFINITY;
        for &l in lambdas {
            worst = worst.min(beta0_margin(&table, l, frak_d)?);
        }
        if worst > 0.0 && theta0.map_or(true, |t0| theta > t0) {
            theta0 = Some(theta);
        }
        min_margin.push(worst);
    }
    Ok(Theta0Scan { thetas: thetas.to_vec(), min_margin, theta0 })
}
