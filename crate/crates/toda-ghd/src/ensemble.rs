//! Thermal-equilibrium sampling and the constants attached to `(β, θ)`.
//!
//! Under the thermal measure the momenta `b_i` are i.i.d. `N(0, 1/β)` and the
//! couplings satisfy `a_i² ~ Gamma(shape θ, rate β)` for `i < n2`, with the
//! right-edge coupling pinned to zero.

use crate::error::{Error, Result};
use crate::special::digamma;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

/// Smallest admissible `|α|`; the dressing operator is singular at `α = 0`.
pub const ALPHA_MIN: f64 = 1e-8;

/// Inverse temperature `β`, shape `θ` and the derived `α = log β − ψ(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    beta: f64,
    theta: f64,
    alpha: f64,
}

impl ThermalParams {
    /// Validates `β, θ > 0` and rejects `|α| < 1e-8`.
    pub fn new(beta: f64, theta: f64) -> Result<Self> {
        let alpha = alpha(beta, theta)?;
        Ok(Self { beta, theta, alpha })
    }

    /// Same as [`ThermalParams::new`] without the `|α|` guard; for sampling only.
    pub fn new_unchecked_alpha(beta: f64, theta: f64) -> Result<Self> {
        check_positive(beta, theta)?;
        Ok(Self { beta, theta, alpha: beta.ln() - digamma(theta)? })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// `sgn(α)` as `±1`.
    pub fn alpha_sign(&self) -> f64 {
        if self.alpha >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
    /// Copy with `θ` replaced; used by finite differences in `θ`.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new_unchecked_alpha(self.beta, theta)
    }
}

fn check_positive(beta: f64, theta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) || !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("beta and theta must be positive and finite, got beta={beta}, theta={theta}")));
    }
    Ok(())
}

/// `α = log β − ψ(θ)`; errors when `|α| < 1e-8`.
pub fn alpha(beta: f64, theta: f64) -> Result<f64> {
    check_positive(beta, theta)?;
    let a = beta.ln() - digamma(theta)?;
    if a.abs() < ALPHA_MIN {
        return Err(Error::DegenerateParameters { alpha: a });
    }
    Ok(a)
}

/// Flaschka variables `(a, b)` on the sites `n1..=n2`.
///
/// `a[k]` and `b[k]` refer to site `n1 + k`. `q_ref` is the canonical position
/// of the reference site (site 0 when it lies in the interval, else `n1`); it
/// is not determined by `(a, b)` and is carried along by the integrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaschkaState {
    pub n1: i64,
    pub n2: i64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub time: f64,
    pub q_ref: f64,
}

impl FlaschkaState {
    /// Builds a state and checks the length and boundary invariants.
    pub fn new(n1: i64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Domain(format!("a and b must be nonempty with equal length ({} vs {})", a.len(), b.len())));
        }
        if a[a.len() - 1] != 0.0 {
            return Err(Error::Domain("right-edge coupling a_{n2} must be exactly 0".into()));
        }
        if a.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain("couplings must be nonnegative".into()));
        }
        let n2 = n1 + a.len() as i64 - 1;
        Ok(Self { n1, n2, a, b, time: 0.0, q_ref: 0.0 })
    }

    /// Number of sites `N = n2 − n1 + 1`.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Array offset of a site label.
    pub fn offset(&self, site: i64) -> Result<usize> {
        if site < self.n1 || site > self.n2 {
            return Err(Error::IndexOutOfRange { index: site, lo: self.n1, hi: self.n2 });
        }
        Ok((site - self.n1) as usize)
    }

    /// Site whose position `q_ref` is tracked.
    pub fn ref_site(&self) -> i64 {
        0i64.clamp(self.n1, self.n2)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, replica, site)`.
///
/// The ChaCha key is derived from `(seed, site)` by SplitMix64 and the
/// replica selects the ChaCha stream, so draws do not depend on the order in
/// which sites or replicas are visited.
pub fn site_rng(seed: u64, replica: u64, site: i64) -> ChaCha12Rng {
    let mut s = seed ^ splitmix64(&mut (site as u64 ^ 0xD1B5_4A32_D192_ED03));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(replica);
    rng
}

/// Draws one `(a, b)` pair at a site; `interior` is false at the right edge.
fn draw_site<R: Rng>(rng: &mut R, normal: &Normal<f64>, gamma: &Gamma<f64>, interior: bool) -> (f64, f64) {
    let b = normal.sample(rng);
    let a = if interior { gamma.sample(rng).sqrt() } else { 0.0 };
    (a, b)
}

/// Samples the thermal measure on `n1..=n2` (replica 0).
pub fn sample_thermal(params: &ThermalParams, n1: i64, n2: i64, seed: u64) -> Result<FlaschkaState> {
    sample_thermal_replica(params, n1, n2, seed, 0)
}

/// Samples the thermal measure on `n1..=n2` for an explicit replica stream.
pub fn sample_thermal_replica(params: &ThermalParams, n1: i64, n2: i64, seed: u64, replica: u64) -> Result<FlaschkaState> {
    if n2 < n1 {
        return Err(Error::Domain(format!("empty interval [{n1}, {n2}]")));
    }
    let normal = Normal::new(0.0, 1.0 / params.beta().sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let gamma = Gamma::new(params.theta(), 1.0 / params.beta()).map_err(|e| Error::Domain(e.to_string()))?;
    let n = (n2 - n1 + 1) as usize;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for site in n1..=n2 {
        let mut rng = site_rng(seed, replica, site);
        let (ai, bi) = draw_site(&mut rng, &normal, &gamma, site < n2);
        // Gamma draws can underflow to 0 for tiny θ; keep the gap finite.
        a.push(if site < n2 { ai.max(f64::MIN_POSITIVE) } else { 0.0 });
        b.push(bi);
    }
    let mut st = FlaschkaState::new(n1, a, b)?;
    st.time = 0.0;
    Ok(st)
}

/// Draws `count` i.i.d. interior couplings `a` (no boundary), for moment checks.
pub fn sample_couplings(params: &ThermalParams, count: usize, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0 / params.beta().sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let gamma = Gamma::new(params.theta(), 1.0 / params.beta()).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..count as i64)
        .map(|site| {
            let mut rng = site_rng(seed, 0, site);
            draw_site(&mut rng, &normal, &gamma, true).0.max(f64::MIN_POSITIVE)
        })
        .collect())
}

/// `q_j − q_i − α(j − i)` for the reconstruction `q_{k+1} − q_k = −2 log a_k`.
pub fn spacing_statistic(state: &FlaschkaState, params: &ThermalParams, i: i64, j: i64) -> Result<f64> {
    let oi = state.offset(i)?;
    let oj = state.offset(j)?;
    if i == j {
        return Err(Error::Domain("spacing statistic needs i != j".into()));
    }
    let (lo, hi, sign) = if oi < oj { (oi, oj, 1.0) } else { (oj, oi, -1.0) };
    let mut sum = 0.0;
    for k in lo..hi {
        let ak = state.a[k];
        if ak <= 0.0 {
            return Err(Error::SingularGap { site: state.n1 + k as i64 });
        }
        sum += -2.0 * ak.ln();
    }
    Ok(sign * sum - params.alpha() * (j - i) as f64)
}
