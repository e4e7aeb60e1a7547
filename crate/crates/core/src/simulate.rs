//! Monte Carlo of the closed loop: OU phase, adaptive homodyne measurement
//! and a first-order filter, stepped with Euler-Maruyama.
//!
//! ```text
//! phi[k+1]   = phi[k] (1 - lambda_u dt) + sqrt(kappa dt) xi[k]
//! theta[k]   = phi_hat[k] + m(phi[k] - phi_hat[k]) + sqrt(r / dt) n[k]
//! phi_hat[k+1] = phi_hat[k] + dt drift phi_hat[k] + dt gain (theta[k] - phi_hat[k])
//! ```
//!
//! `m` is the identity or `sin`, and `r = 1 / (4 |alpha|^2)` (doubled for the
//! dual-homodyne SQL filter). Trajectory `j` draws from a ChaCha8 generator
//! seeded with `seed` on stream `j`, so results do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::measurement_noise_intensity;
use crate::design::FilterDesign;
use crate::error::{Error, Result};
use crate::model::{lambda_u, PlantParams, Uncertainty};

pub const BATCHES_PER_TRAJECTORY: usize = 32;
pub const MIN_STEPS: u64 = 10_000;
const BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    #[default]
    Linearized,
    Sine,
}

impl MeasurementMode {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            MeasurementMode::Linearized => x,
            MeasurementMode::Sine => x.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: u64,
    pub n_traj: u32,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub measurement_mode: MeasurementMode,
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
}

fn default_burn_in() -> f64 {
    0.2
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 2e-8,
            n_steps: 5_000_000,
            n_traj: 8,
            burn_in_fraction: default_burn_in(),
            seed: 0,
            measurement_mode: MeasurementMode::Linearized,
            tau_grid: None,
        }
    }
}

impl SimConfig {
    fn burn_in_steps(&self) -> u64 {
        (self.burn_in_fraction * self.n_steps as f64).ceil() as u64
    }

    /// Checks the step-size and burn-in guards against a filter's corner frequency.
    pub fn check(&self, f: &FilterDesign) -> Result<()> {
        let fail = |s: String| Err(Error::ConfigInvariantViolated(s));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_steps < MIN_STEPS {
            return fail(format!("n_steps must be at least {MIN_STEPS}, got {}", self.n_steps));
        }
        if self.n_traj < 1 {
            return fail("n_traj must be at least 1".into());
        }
        if !(self.burn_in_fraction > 0.0 && self.burn_in_fraction < 1.0) {
            return fail(format!(
                "burn_in_fraction must lie in (0, 1), got {}",
                self.burn_in_fraction
            ));
        }
        if !(self.dt * f.corner <= 0.02) {
            return fail(format!(
                "dt * corner = {:.3e} exceeds 0.02 for the {} filter",
                self.dt * f.corner,
                f.kind
            ));
        }
        let burn_time_constants = self.burn_in_fraction * self.n_steps as f64 * self.dt * f.corner;
        if burn_time_constants < 10.0 {
            return fail(format!(
                "burn-in spans {burn_time_constants:.2} filter time constants, need at least 10"
            ));
        }
        if let Some(g) = &self.tau_grid {
            if g.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return fail("tau_grid values must be nonnegative".into());
            }
        }
        Ok(())
    }
}

/// Lag-product averages with batch-means error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTwoTime {
    /// Lags actually used, snapped to multiples of `dt`.
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_error: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mse: f64,
    pub std_error: f64,
    pub two_time: Option<EmpiricalTwoTime>,
    /// Equivalent number of independent squared-error samples, `var(e^2) / std_error^2`.
    pub n_effective: u64,
}

/// Sum in a fixed binary tree so the result does not depend on how the
/// inputs were produced.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

struct Lags {
    lags: Vec<usize>,
    tau: Vec<f64>,
    warnings: Vec<String>,
}

fn snap_lags(tau_grid: &[f64], dt: f64) -> Lags {
    let mut warnings = Vec::new();
    let mut lags = Vec::with_capacity(tau_grid.len());
    for &t in tau_grid {
        let l = (t / dt).round();
        if (l * dt - t).abs() > 1e-9 * t.max(dt) {
            warnings.push(format!("tau {t:e} snapped to {:e}", l * dt));
        }
        lags.push(l as usize);
    }
    let tau = lags.iter().map(|&l| l as f64 * dt).collect();
    Lags { lags, tau, warnings }
}

fn check_samples(n: usize, lags: &[usize]) -> Result<()> {
    let lag = lags.iter().copied().max().unwrap_or(0);
    if n < lag || n - lag < 100 * lag.max(1) {
        return Err(Error::InsufficientSamples { samples: n, lag });
    }
    Ok(())
}

/// Batch boundaries: batch `b` holds samples `[start(b), start(b + 1))`.
fn batch_start(b: usize, n: usize, batches: usize) -> usize {
    ((b as u128 * n as u128) / batches as u128) as usize
}

/// Streaming accumulator for squared errors and lag products, kept per batch.
struct Accumulator {
    lags: Vec<usize>,
    ring: Vec<f64>,
    mask: usize,
    seen: usize,
    sums: Vec<f64>,
    lag_sums: Vec<f64>,
    lag_counts: Vec<u64>,
    counts: Vec<u64>,
    sum4: f64,
}

impl Accumulator {
    fn new(lags: &[usize], batches: usize) -> Self {
        let max = lags.iter().copied().max().unwrap_or(0);
        let size = if lags.is_empty() {
            1
        } else {
            (max + 1).next_power_of_two()
        };
        Self {
            lags: lags.to_vec(),
            ring: vec![0.0; size],
            mask: size - 1,
            seen: 0,
            sums: vec![0.0; batches],
            lag_sums: vec![0.0; batches * lags.len()],
            lag_counts: vec![0; batches * lags.len()],
            counts: vec![0; batches],
            sum4: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, e: f64, batch: usize, sum: &mut f64) {
        let e2 = e * e;
        *sum += e2;
        self.sum4 += e2 * e2;
        if !self.lags.is_empty() {
            let pos = self.seen & self.mask;
            self.ring[pos] = e;
            let nl = self.lags.len();
            for (j, &l) in self.lags.iter().enumerate() {
                if self.seen >= l {
                    let prev = self.ring[(self.seen - l) & self.mask];
                    self.lag_sums[batch * nl + j] += e * prev;
                    self.lag_counts[batch * nl + j] += 1;
                }
            }
        }
        self.seen += 1;
    }
}

/// Per-trajectory totals collected before the ordered reduction.
struct Partial {
    batch_sums: Vec<f64>,
    batch_counts: Vec<u64>,
    lag_sums: Vec<f64>,
    lag_counts: Vec<u64>,
    sum4: f64,
}

impl From<Accumulator> for Partial {
    fn from(a: Accumulator) -> Self {
        Partial {
            batch_sums: a.sums,
            batch_counts: a.counts,
            lag_sums: a.lag_sums,
            lag_counts: a.lag_counts,
            sum4: a.sum4,
        }
    }
}

fn batch_means_error(means: &[f64]) -> f64 {
    let b = means.len();
    if b < 2 {
        return 0.0;
    }
    let mean = pairwise_sum(means) / b as f64;
    let dev: Vec<f64> = means.iter().map(|m| (m - mean).powi(2)).collect();
    (pairwise_sum(&dev) / (b as f64 * (b - 1) as f64)).sqrt()
}

fn reduce(parts: &[Partial], lags: Option<&Lags>) -> SimResult {
    let sums: Vec<f64> = parts.iter().flat_map(|p| p.batch_sums.iter().copied()).collect();
    let counts: Vec<u64> = parts.iter().flat_map(|p| p.batch_counts.iter().copied()).collect();
    let total: u64 = counts.iter().sum();
    let mse = pairwise_sum(&sums) / total as f64;
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let std_error = batch_means_error(&means);
    let sum4: Vec<f64> = parts.iter().map(|p| p.sum4).collect();
    let var = pairwise_sum(&sum4) / total as f64 - mse * mse;
    let n_effective = if std_error > 0.0 {
        ((var / (std_error * std_error)).round() as u64).clamp(1, total)
    } else {
        total
    };

    let two_time = lags.map(|l| {
        let nl = l.lags.len();
        let mut values = Vec::with_capacity(nl);
        let mut errors = Vec::with_capacity(nl);
        for j in 0..nl {
            let mut s = Vec::new();
            let mut c = Vec::new();
            for p in parts {
                for b in 0..p.batch_counts.len() {
                    s.push(p.lag_sums[b * nl + j]);
                    c.push(p.lag_counts[b * nl + j]);
                }
            }
            let n: u64 = c.iter().sum();
            values.push(pairwise_sum(&s) / n as f64);
            let m: Vec<f64> = s
                .iter()
                .zip(&c)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s / c as f64)
                .collect();
            errors.push(batch_means_error(&m));
        }
        EmpiricalTwoTime {
            tau_grid: l.tau.clone(),
            values,
            std_error: errors,
            warnings: l.warnings.clone(),
        }
    });

    SimResult {
        mse,
        std_error,
        two_time,
        n_effective,
    }
}

/// Lag-product averages over a stored error trace, split into 32 batches.
pub fn empirical_two_time(trace: &[f64], tau_grid: &[f64], dt: f64) -> Result<EmpiricalTwoTime> {
    let lags = snap_lags(tau_grid, dt);
    check_samples(trace.len(), &lags.lags)?;
    let batches = BATCHES_PER_TRAJECTORY;
    let mut acc = Accumulator::new(&lags.lags, batches);
    for b in 0..batches {
        let mut sum = 0.0;
        let (lo, hi) = (
            batch_start(b, trace.len(), batches),
            batch_start(b + 1, trace.len(), batches),
        );
        for &e in &trace[lo..hi] {
            acc.push(e, b, &mut sum);
        }
        acc.sums[b] = sum;
        acc.counts[b] = (hi - lo) as u64;
    }
    Ok(reduce(&[acc.into()], Some(&lags)).two_time.expect("lags requested"))
}

struct Stepper {
    decay: f64,
    plant_noise: f64,
    meas_noise: f64,
    filt_decay: f64,
    gain_dt: f64,
    prior_sd: f64,
    mode: MeasurementMode,
}

impl Stepper {
    fn new(p: &PlantParams, u: Uncertainty, f: &FilterDesign, cfg: &SimConfig) -> Self {
        let lu = lambda_u(p, u);
        Self {
            decay: 1.0 - lu * cfg.dt,
            plant_noise: (p.kappa * cfg.dt).sqrt(),
            meas_noise: (measurement_noise_intensity(f.kind, p) / cfg.dt).sqrt(),
            filt_decay: 1.0 + cfg.dt * f.drift(),
            gain_dt: f.gain * cfg.dt,
            prior_sd: (p.kappa / (2.0 * lu)).sqrt(),
            mode: cfg.measurement_mode,
        }
    }
}

impl Stepper {
    /// Advances one step and returns the error before the update.
    #[inline(always)]
    fn advance<R: Rng>(&self, rng: &mut R, phi: &mut f64, est: &mut f64) -> f64 {
        let err = *phi - *est;
        let xi: f64 = rng.sample(StandardNormal);
        let n: f64 = rng.sample(StandardNormal);
        let innovation = self.mode.apply(err) + self.meas_noise * n;
        *est = *est * self.filt_decay + self.gain_dt * innovation;
        *phi = *phi * self.decay + self.plant_noise * xi;
        err
    }
}

fn run_trajectory(st: &Stepper, cfg: &SimConfig, lags: &[usize], traj: u32) -> Result<Partial> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(traj as u64);
    let mut phi = st.prior_sd * rng.sample::<f64, _>(StandardNormal);
    let mut est = 0.0f64;

    let burn = cfg.burn_in_steps();
    for k in 0..burn {
        st.advance(&mut rng, &mut phi, &mut est);
        if !(est.abs() <= BLOWUP) {
            return Err(Error::NumericalBlowup { step: k as usize });
        }
    }
    let n = (cfg.n_steps - burn) as usize;
    let batches = BATCHES_PER_TRAJECTORY;
    let mut acc = Accumulator::new(lags, batches);
    for b in 0..batches {
        let (lo, hi) = (batch_start(b, n, batches), batch_start(b + 1, n, batches));
        let mut sum = 0.0;
        for _ in lo..hi {
            let e = st.advance(&mut rng, &mut phi, &mut est);
            acc.push(e, b, &mut sum);
        }
        if !(est.abs() <= BLOWUP && sum.is_finite()) {
            return Err(Error::NumericalBlowup {
                step: burn as usize + hi,
            });
        }
        acc.sums[b] = sum;
        acc.counts[b] = (hi - lo) as u64;
    }
    Ok(acc.into())
}

fn check_plant(p: &PlantParams, u: Uncertainty) -> Result<()> {
    let ok = p.lambda > 0.0
        && p.kappa >= 0.0
        && p.kappa.is_finite()
        && p.alpha2 > 0.0
        && p.eta_d > 0.0
        && p.eta_d <= 1.0
        && (0.0..1.0).contains(&u.mu)
        && (-1.0..=1.0).contains(&u.delta);
    if ok && lambda_u(p, u).is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvariantViolated(format!("invalid plant {p:?} / {u:?}")))
    }
}

/// Simulates `n_traj` independent closed-loop trajectories of the filter
/// running against the plant with decay rate `lambda_u`.
pub fn run_closed_loop(p: &PlantParams, u: Uncertainty, f: &FilterDesign, cfg: &SimConfig) -> Result<SimResult> {
    check_plant(p, u)?;
    cfg.check(f)?;
    let st = Stepper::new(p, u, f, cfg);
    let lags = cfg.tau_grid.as_deref().map(|g| snap_lags(g, cfg.dt));
    let lag_list: &[usize] = lags.as_ref().map(|l| l.lags.as_slice()).unwrap_or(&[]);
    if lags.is_some() {
        check_samples((cfg.n_steps - cfg.burn_in_steps()) as usize, lag_list)?;
    }
    let parts = (0..cfg.n_traj)
        .into_par_iter()
        .map(|j| run_trajectory(&st, cfg, lag_list, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&parts, lags.as_ref()))
}

/// Exact stationary mean-square error of the linearized discrete recursion,
/// from `P = F P F^T + G G^T`. Its gap to the continuous value is the
/// discretization bias of the simulator at step `dt`.
pub fn discrete_stationary_mse(p: &PlantParams, u: Uncertainty, f: &FilterDesign, dt: f64) -> Result<f64> {
    let lu = lambda_u(p, u);
    let r = measurement_noise_intensity(f.kind, p);
    let fm = DMatrix::from_row_slice(2, 2, &[1.0 - lu * dt, 0.0, f.gain * dt, 1.0 + f.pole * dt]);
    let q = DMatrix::from_row_slice(2, 2, &[p.kappa * dt, 0.0, 0.0, f.gain * f.gain * r * dt]);
    let kron = fm.kronecker(&fm);
    let lhs = DMatrix::<f64>::identity(4, 4) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let x = lhs.full_piv_lu().solve(&rhs).ok_or(Error::Singular)?;
    let pm = DMatrix::from_column_slice(2, 2, x.as_slice());
    Ok(pm[(0, 0)] - pm[(0, 1)] - pm[(1, 0)] + pm[(1, 1)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasProbe {
    pub mse_linear: f64,
    pub mse_sine: f64,
    pub std_error_linear: f64,
    pub std_error_sine: f64,
    /// `(mse_sine - mse_linear) / mse_linear`
    pub relative_gap: f64,
}

/// Runs both measurement models on identical noise streams.
pub fn linearization_bias_probe(
    p: &PlantParams,
    u: Uncertainty,
    f: &FilterDesign,
    cfg: &SimConfig,
) -> Result<BiasProbe> {
    let mut c = cfg.clone();
    c.tau_grid = None;
    c.measurement_mode = MeasurementMode::Linearized;
    let lin = run_closed_loop(p, u, f, &c)?;
    c.measurement_mode = MeasurementMode::Sine;
    let sine = run_closed_loop(p, u, f, &c)?;
    Ok(BiasProbe {
        mse_linear: lin.mse,
        mse_sine: sine.mse,
        std_error_linear: lin.std_error,
        std_error_sine: sine.std_error,
        relative_gap: (sine.mse - lin.mse) / lin.mse,
    })
}
