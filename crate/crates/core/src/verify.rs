//! Pathwise identity checks and Monte Carlo estimators, each producing a [`StatReport`].
//!
//! Monte Carlo paths are generated in parallel, one noise stream per path, and
//! reduced in stream order so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrators::{
    coarsen, draw_increments, exact_ou_update, integrate, SamplePath, SchemeKind,
};
use crate::models::ModelSpec;
use crate::noise::{ou_convolution_std, CovarianceSpec, NoiseSampler};
use crate::spectral::{laplacian_eigenvalue, InnerProduct, RandomFieldSpec, SpectralField, TorusGrid};

/// How a report's estimate is compared with its target.
#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// `|estimate - target| <= multiplier · se`.
    WithinSe { multiplier: f64 },
    /// `|estimate - target| <= tol`.
    AbsTol { tol: f64 },
    /// `|estimate - target| <= tol · |target|`.
    RelTol { tol: f64 },
    /// `estimate <= target · (1 + slack)`.
    UpperBound { slack: f64 },
    /// `lo <= estimate <= hi`.
    Range { lo: f64, hi: f64 },
    /// `estimate >= threshold`.
    AtLeast { threshold: f64 },
    /// Reported without a pass/fail judgement.
    Informational,
    Skipped { reason: String },
}

impl Criterion {
    /// The numeric slack written to the `tolerance` column.
    pub fn tolerance(&self) -> f64 {
        match self {
            Self::WithinSe { multiplier } => *multiplier,
            Self::AbsTol { tol } | Self::RelTol { tol } => *tol,
            Self::UpperBound { slack } => *slack,
            Self::Range { lo, hi } => hi - lo,
            Self::AtLeast { threshold } => *threshold,
            Self::Informational | Self::Skipped { .. } => 0.0,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WithinSe { multiplier } => write!(f, "within {multiplier} se"),
            Self::AbsTol { tol } => write!(f, "abs tol {tol:e}"),
            Self::RelTol { tol } => write!(f, "rel tol {tol:e}"),
            Self::UpperBound { slack } => write!(f, "upper bound with slack {slack}"),
            Self::Range { lo, hi } => write!(f, "range [{lo:.6}, {hi:.6}]"),
            Self::AtLeast { threshold } => write!(f, "at least {threshold}"),
            Self::Informational => write!(f, "informational"),
            Self::Skipped { reason } => write!(f, "{reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "true",
            Self::Fail => "false",
            Self::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    pub n: usize,
    pub criterion: Criterion,
    pub metadata: BTreeMap<String, String>,
}

impl StatReport {
    pub fn new(name: impl Into<String>, estimate: f64, target: f64, criterion: Criterion) -> Self {
        Self {
            name: name.into(),
            estimate,
            target,
            se: 0.0,
            n: 1,
            criterion,
            metadata: BTreeMap::new(),
        }
    }

    pub fn skipped(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            estimate: f64::NAN,
            target: f64::NAN,
            se: 0.0,
            n: 0,
            criterion: Criterion::Skipped {
                reason: reason.into(),
            },
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_se(mut self, se: f64, n: usize) -> Self {
        self.se = se;
        self.n = n;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn outcome(&self) -> Outcome {
        let (e, t) = (self.estimate, self.target);
        let pass = match &self.criterion {
            Criterion::Skipped { .. } => return Outcome::Skipped,
            Criterion::Informational => true,
            _ if !e.is_finite() => false,
            Criterion::WithinSe { multiplier } => (e - t).abs() <= multiplier * self.se,
            Criterion::AbsTol { tol } => (e - t).abs() <= *tol,
            Criterion::RelTol { tol } => (e - t).abs() <= tol * t.abs(),
            Criterion::UpperBound { slack } => e <= t * (1.0 + slack),
            Criterion::Range { lo, hi } => *lo <= e && e <= *hi,
            Criterion::AtLeast { threshold } => e >= *threshold,
        };
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome() == Outcome::Pass
    }

    pub fn note(&self) -> String {
        self.criterion.to_string()
    }

    pub const CSV_HEADER: &'static str = "name,estimate,target,se,n,pass,seed,tolerance,note";

    pub fn csv_row(&self) -> String {
        let seed = self.metadata.get("seed").map_or("", String::as_str);
        format!(
            "{},{:.16e},{:.16e},{:.16e},{},{},{},{:.16e},{}",
            self.name,
            self.estimate,
            self.target,
            self.se,
            self.n,
            self.outcome(),
            seed,
            self.criterion.tolerance(),
            self.note().replace(',', ";")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    pub base_seed: u64,
    pub tolerance_multiplier: f64,
}

impl McConfig {
    pub fn new(n_paths: usize, base_seed: u64) -> Result<Self> {
        if n_paths < 2 {
            return Err(Error::InvalidParameter(format!(
                "Monte Carlo needs at least 2 paths, got {n_paths}"
            )));
        }
        Ok(Self {
            n_paths,
            base_seed,
            tolerance_multiplier: 3.0,
        })
    }

    pub fn with_tolerance(mut self, multiplier: f64) -> Self {
        self.tolerance_multiplier = multiplier;
        self
    }

    fn criterion(&self) -> Criterion {
        Criterion::WithinSe {
            multiplier: self.tolerance_multiplier,
        }
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Summary {
        mean,
        se: (var / n as f64).sqrt(),
        n,
    }
}

/// Evaluates `f(stream_id)` for every path, in parallel, returning results in stream order.
pub fn mc_collect<T, F>(cfg: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..cfg.n_paths as u64).into_par_iter().map(f).collect()
}

fn mc_report(
    name: &str,
    cfg: &McConfig,
    values: &[f64],
    target: f64,
) -> StatReport {
    let s = summarize(values);
    StatReport::new(name, s.mean, target, cfg.criterion())
        .with_se(s.se, s.n)
        .with_meta("seed", cfg.base_seed)
}

/// Trapezoidal running integral of `values` over `times`.
fn running_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..values.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

fn require_model(path: &SamplePath, expected: &'static str) -> Result<()> {
    if path.model == expected {
        Ok(())
    } else {
        Err(Error::WrongModel {
            expected,
            got: path.model,
        })
    }
}

/// Largest deviation `max_t |‖u_t‖² + (2-σ)∫‖u‖²_{H¹} - ‖u₀‖² - (2-σ)∫‖u‖²_{L²}|`,
/// reported relative to `‖u₀‖²`.
pub fn energy_identity_residual(path: &SamplePath, sigma: f64) -> Result<StatReport> {
    require_model(path, "TransportHeat")?;
    let l2: Vec<f64> = path.states.iter().map(SpectralField::l2_norm_sq).collect();
    let h1: Vec<f64> = path.states.iter().map(SpectralField::h1_norm_sq).collect();
    let int_h1 = running_integral(&path.times, &h1);
    let int_l2 = running_integral(&path.times, &l2);
    let c = 2.0 - sigma;
    let residual = (0..l2.len())
        .map(|i| ((l2[i] + c * int_h1[i]) - (l2[0] + c * int_l2[i])).abs())
        .fold(0.0, f64::max);
    let relative = if l2[0] > 0.0 { residual / l2[0] } else { residual };
    Ok(
        StatReport::new("energy_identity", relative, 0.0, Criterion::AbsTol { tol: 0.05 })
            .with_meta("abs_residual", format!("{residual:e}"))
            .with_meta("sigma", sigma)
            .with_meta("dt", path.times.get(1).copied().unwrap_or(0.0))
            .with_meta("steps", path.steps()),
    )
}

/// Energy residuals along a refinement ladder (coarse to fine). Passes when the
/// relative residual decreases at every refinement and the finest is below `tol`.
pub fn energy_identity_refinement(paths: &[SamplePath], sigma: f64, tol: f64) -> Result<StatReport> {
    let residuals: Vec<f64> = paths
        .iter()
        .map(|p| energy_identity_residual(p, sigma).map(|r| r.estimate))
        .collect::<Result<_>>()?;
    let finest = *residuals.last().ok_or_else(|| {
        Error::InvalidParameter("energy refinement needs at least one path".into())
    })?;
    let decreasing = residuals.windows(2).all(|w| w[1] < w[0]) || finest == 0.0;
    let estimate = if decreasing { finest } else { f64::INFINITY };
    let ratios: Vec<String> = residuals
        .windows(2)
        .map(|w| format!("{:.4}", w[0] / w[1]))
        .collect();
    Ok(
        StatReport::new("energy_identity_refinement", estimate, 0.0, Criterion::AbsTol { tol })
            .with_meta("residuals", format!("{residuals:?}"))
            .with_meta("decay_ratios", ratios.join(" ")),
    )
}

/// `max_t [‖u_t‖² + (2-σ)∫₀ᵗ‖u‖²_{H¹}] / (‖u₀‖² e^{(2-σ)t})`, checked against 1 with 5% slack.
pub fn gronwall_check(path: &SamplePath, sigma: f64) -> Result<StatReport> {
    require_model(path, "TransportHeat")?;
    if sigma >= 2.0 {
        return Err(Error::SigmaAboveThreshold(sigma));
    }
    let c = 2.0 - sigma;
    let l2: Vec<f64> = path.states.iter().map(SpectralField::l2_norm_sq).collect();
    let h1: Vec<f64> = path.states.iter().map(SpectralField::h1_norm_sq).collect();
    let int_h1 = running_integral(&path.times, &h1);
    let ratio = (0..l2.len())
        .map(|i| {
            let lhs = l2[i] + c * int_h1[i];
            if lhs == 0.0 {
                0.0
            } else {
                lhs / (l2[0] * (c * path.times[i]).exp())
            }
        })
        .fold(0.0, f64::max);
    Ok(
        StatReport::new("gronwall", ratio, 1.0, Criterion::UpperBound { slack: 0.05 })
            .with_meta("sigma", sigma),
    )
}

/// `max_t |∫u_t dx - ∫u_0 dx|` for transport noise; for Burgers the accumulated
/// mean of the forcing is subtracted first. Other models are skipped.
pub fn mass_conservation_check(path: &SamplePath) -> StatReport {
    let forced = match path.model {
        "TransportHeat" | "BurgersRemainder" => false,
        "Burgers" => true,
        other => {
            return StatReport::skipped(
                "mass_conservation",
                format!("not applicable to {other}: mean is not conserved"),
            )
        }
    };
    let m0 = path.initial().mean();
    let mut forcing = 0.0;
    let mut dev: f64 = 0.0;
    for (i, u) in path.states.iter().enumerate().skip(1) {
        if forced {
            forcing += path.increments[i - 1].field.mean();
        }
        dev = dev.max((u.mean() - m0 - forcing).abs());
    }
    StatReport::new("mass_conservation", dev, 0.0, Criterion::AbsTol { tol: 1e-10 })
        .with_meta("model", path.model)
}

/// `E‖φ·W_T‖²` for a constant diagonal integrand `φ e_k = φ_k e_k` (`phi[k]` for
/// `k = 0..=K`) against `T Σ_k λ_k φ_k²`.
pub fn ito_isometry_mc(
    spec: &CovarianceSpec,
    phi: &[f64],
    t: f64,
    cfg: &McConfig,
) -> Result<StatReport> {
    let k_max = spec.grid().n_modes();
    if phi.len() != k_max + 1 {
        return Err(Error::InvalidParameter(format!(
            "phi has {} entries, grid needs {}",
            phi.len(),
            k_max + 1
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let target = t
        * (0..=k_max)
            .map(|k| if k == 0 { 1.0 } else { 2.0 } * spec.eigenvalue(k as i64) * phi[k] * phi[k])
            .sum::<f64>();
    let steps = 4;
    let values = if t == 0.0 {
        vec![0.0; cfg.n_paths]
    } else {
        mc_collect(cfg, |stream| {
            let s = NoiseSampler::new(spec.clone(), cfg.base_seed, stream);
            let mut integral = SpectralField::zeros(*spec.grid());
            for step in 0..steps {
                let inc = s.increment_at(step, t / steps as f64)?;
                integral.axpy(1.0, &inc.field.apply_real_multiplier(|k| phi[k as usize]));
            }
            Ok(integral.l2_norm_sq())
        })?
    };
    Ok(mc_report("ito_isometry", cfg, &values, target).with_meta("K", k_max))
}

/// `E⟨W_t, h⟩⟨W_s, g⟩` against `min(s, t) ⟨Qh, g⟩`.
pub fn wiener_covariance_mc(
    spec: &CovarianceSpec,
    h: &SpectralField,
    g: &SpectralField,
    s: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<StatReport> {
    if !(s >= 0.0) || !(t >= 0.0) {
        return Err(Error::NegativeTime(s.min(t)));
    }
    let target = s.min(t) * spec.covariance_pairing(h, g)?;
    let (lo, hi) = (s.min(t), s.max(t));
    let values = mc_collect(cfg, |stream| {
        let sampler = NoiseSampler::new(spec.clone(), cfg.base_seed, stream);
        let w_lo = if lo > 0.0 {
            sampler.increment_at(0, lo)?.field
        } else {
            SpectralField::zeros(*spec.grid())
        };
        let mut w_hi = w_lo.clone();
        if hi > lo {
            w_hi.axpy(1.0, &sampler.increment_at(1, hi - lo)?.field);
        }
        let (w_t, w_s) = if t >= s { (&w_hi, &w_lo) } else { (&w_lo, &w_hi) };
        Ok(w_t.h_inner(h, InnerProduct::L2)? * w_s.h_inner(g, InnerProduct::L2)?)
    })?;
    Ok(mc_report("wiener_covariance", cfg, &values, target))
}

/// `E‖W_T‖²_{L²}` against `T · Tr Q` (truncated trace for white noise).
pub fn trace_identity_mc(spec: &CovarianceSpec, t: f64, cfg: &McConfig) -> Result<StatReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidStep(t));
    }
    let steps = 4;
    let values = mc_collect(cfg, |stream| {
        let s = NoiseSampler::new(spec.clone(), cfg.base_seed, stream);
        let mut w = SpectralField::zeros(*spec.grid());
        for step in 0..steps {
            w.axpy(1.0, &s.increment_at(step, t / steps as f64)?.field);
        }
        Ok(w.l2_norm_sq())
    })?;
    Ok(
        mc_report("trace_identity", cfg, &values, t * spec.truncated_trace())
            .with_meta("K", spec.grid().n_modes()),
    )
}

/// Marginal `E|v_k|²` after one exact OU step of length `dt` from zero, for each
/// requested mode, against `λ_k (1 - e^{-2μ_k dt}) / (2μ_k)`.
pub fn ou_variance_mc(
    spec: &CovarianceSpec,
    modes: &[usize],
    dt: f64,
    cfg: &McConfig,
) -> Result<Vec<StatReport>> {
    let grid = *spec.grid();
    if let Some(&k) = modes.iter().find(|&&k| k > grid.n_modes()) {
        return Err(Error::ModeOutOfRange {
            mode: k as i64,
            max: grid.n_modes(),
        });
    }
    let samples = mc_collect(cfg, |stream| {
        let s = NoiseSampler::new(spec.clone(), cfg.base_seed, stream);
        let v = exact_ou_update(spec, &SpectralField::zeros(grid), &s.increment_at(0, dt)?)?;
        Ok(modes
            .iter()
            .map(|&k| v.amp(k as i64).norm_sqr())
            .collect::<Vec<f64>>())
    })?;
    Ok(modes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mu = laplacian_eigenvalue(k as i64);
            let target = spec.eigenvalue(k as i64) * ou_convolution_std(mu, dt).powi(2);
            let values: Vec<f64> = samples.iter().map(|row| row[j]).collect();
            mc_report(&format!("ou_variance_k{k}"), cfg, &values, target).with_meta("dt", dt)
        })
        .collect())
}

/// Partition sums `Σ (M_{t_i} - M_{t_{i-1}})²` of uniformly sampled `samples` at
/// each partition size in `levels`; the estimate is the finest level.
pub fn quadratic_variation_partition(
    samples: &[f64],
    levels: &[usize],
    target: f64,
    tol: f64,
) -> Result<StatReport> {
    let steps = samples.len().saturating_sub(1);
    let mut sums = Vec::with_capacity(levels.len());
    for &n in levels {
        if n == 0 || steps == 0 || !steps.is_multiple_of(n) {
            return Err(Error::PartitionMisaligned { intervals: n, steps });
        }
        let stride = steps / n;
        let qv: f64 = (0..n)
            .map(|i| (samples[(i + 1) * stride] - samples[i * stride]).powi(2))
            .sum();
        sums.push((n, qv));
    }
    let &(finest_n, estimate) = sums
        .iter()
        .max_by_key(|(n, _)| *n)
        .ok_or_else(|| Error::InvalidParameter("no partition levels".into()))?;
    let criterion = if target == 0.0 {
        Criterion::AbsTol { tol }
    } else {
        Criterion::RelTol { tol }
    };
    let levels_meta: Vec<String> = sums.iter().map(|(n, q)| format!("{n}:{q:.6e}")).collect();
    Ok(StatReport::new("quadratic_variation", estimate, target, criterion)
        .with_se(0.0, finest_n)
        .with_meta("levels", levels_meta.join(" ")))
}

/// Samples of a scalar Brownian motion on `n` uniform steps of `[0, t]`.
pub fn brownian_samples(seed: u64, stream_id: u64, n: usize, t: f64) -> Result<Vec<f64>> {
    let grid = TorusGrid::with_modes(0);
    let s = NoiseSampler::new(CovarianceSpec::zero(grid), seed, stream_id).with_scalar_channels(1);
    let dt = t / n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut b = 0.0;
    out.push(b);
    for step in 0..n as u64 {
        b += s.increment_at(step, dt)?.scalar[0];
        out.push(b);
    }
    Ok(out)
}

/// `E‖v_t - v_s‖²_{H^α}` for the white-noise OU system truncated at `K`, started at zero.
pub fn she_increment_structure(alpha: f64, k_max: usize, s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::NegativeTime(s));
    }
    if s > t {
        return Err(Error::InvalidTimeGrid(format!("s = {s} > t = {t}")));
    }
    let h = t - s;
    let mut sum = 0.0;
    for k in 0..=k_max as i64 {
        let mu = laplacian_eigenvalue(k);
        let term = if k == 0 {
            h
        } else {
            let decay = (-mu * h).exp_m1().powi(2) * ou_convolution_std(mu, s).powi(2);
            decay + ou_convolution_std(mu, h).powi(2)
        };
        let w = (1.0 + mu).powf(alpha);
        sum += if k == 0 { w * term } else { 2.0 * w * term };
    }
    Ok(sum)
}

/// Monte Carlo cross-check of [`she_increment_structure`] with exact OU paths.
pub fn she_increment_mc(
    alpha: f64,
    k_max: usize,
    s: f64,
    t: f64,
    cfg: &McConfig,
) -> Result<StatReport> {
    let target = she_increment_structure(alpha, k_max, s, t)?;
    let grid = TorusGrid::with_modes(k_max);
    let q = CovarianceSpec::white(grid);
    let values = mc_collect(cfg, |stream| {
        let sampler = NoiseSampler::new(q.clone(), cfg.base_seed, stream);
        let zero = SpectralField::zeros(grid);
        let v_s = if s > 0.0 {
            exact_ou_update(&q, &zero, &sampler.increment_at(0, s)?)?
        } else {
            zero
        };
        let v_t = exact_ou_update(&q, &v_s, &sampler.increment_at(1, t - s)?)?;
        Ok(v_t.sub(&v_s)?.sobolev_norm(alpha).powi(2))
    })?;
    Ok(mc_report("she_increment", cfg, &values, target).with_meta("K", k_max))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Dyadic lags `2^{-hi}, ..., 2^{-lo}`.
pub fn dyadic_lags(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).rev().map(|j| 2f64.powi(-j)).collect()
}

/// Fits the exponent of `h ↦ E‖v_{s+h} - v_s‖²_{H^α}` and compares it with
/// `min(1, 1/2 - α)`; passes when the fit lies in `[0.9, 1.0]` times that value.
pub fn holder_exponent_fit(alpha: f64, k_max: usize, lags: &[f64], s: f64) -> Result<StatReport> {
    if alpha >= 0.5 {
        return Err(Error::RegularityAboveThreshold(alpha));
    }
    if laplacian_eigenvalue(1) * s <= 3.0 {
        return Err(Error::InvalidParameter(format!(
            "base time s = {s} is not in the near-stationary regime (need (2π)² s > 3)"
        )));
    }
    if lags.len() < 2 || lags.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("need at least two positive lags".into()));
    }
    let values: Vec<f64> = lags
        .iter()
        .map(|&h| she_increment_structure(alpha, k_max, s, s + h))
        .collect::<Result<_>>()?;
    let slope = log_log_slope(lags, &values);
    let kappa = (0.5 - alpha).min(1.0);
    Ok(StatReport::new(
        format!("holder_exponent_alpha{alpha}"),
        slope,
        kappa,
        Criterion::Range {
            lo: 0.9 * kappa,
            hi: kappa,
        },
    )
    .with_se(0.0, lags.len())
    .with_meta("K", k_max)
    .with_meta("s", s))
}

/// `L²` distances at `T` between Euler–Maruyama on the Itô form and Heun on the
/// Stratonovich form of transport noise, for each step in `dts` (coarse to fine),
/// all driven by one Brownian path sampled at the finest step.
pub fn ito_strat_distances(
    sigma: f64,
    u0: &SpectralField,
    dts: &[f64],
    t: f64,
    seed: u64,
    stream_id: u64,
) -> Result<Vec<f64>> {
    let model = ModelSpec::transport_heat(vec![sigma])?;
    let grid = *u0.grid();
    let finest = *dts
        .last()
        .ok_or_else(|| Error::InvalidParameter("empty dt ladder".into()))?;
    let n_fine = crate::integrators::step_count(t, finest)?;
    let sampler = model.noise_sampler(grid, seed, stream_id)?;
    let fine = draw_increments(&sampler, n_fine, finest)?;
    dts.iter()
        .map(|&dt| {
            let factor = (dt / finest).round() as usize;
            if factor == 0 || (factor as f64 * finest - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidTimeGrid(format!(
                    "dt = {dt} is not a multiple of the finest step {finest}"
                )));
            }
            let incs = if factor == 1 {
                fine.clone()
            } else {
                coarsen(&fine, factor)?
            };
            let ito = integrate(&model, SchemeKind::EulerMaruyama, u0, &incs)?;
            let strat = integrate(&model, SchemeKind::HeunStratonovich, u0, &incs)?;
            Ok(ito.final_state().sub(strat.final_state())?.l2_norm())
        })
        .collect()
}

/// Whether a distance ladder is non-increasing and its finest entry stays below
/// `10 ·` coarsest `· (dt_fine / dt_coarse)^{1/2}`.
pub fn ito_strat_ladder_ok(distances: &[f64], dts: &[f64]) -> bool {
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    let (first, last) = (distances[0], *distances.last().unwrap());
    let bound = 10.0 * first * (dts.last().unwrap() / dts[0]).sqrt();
    monotone && last <= bound
}

/// Single-path Itô/Stratonovich comparison.
pub fn ito_strat_compare(
    sigma: f64,
    u0: &SpectralField,
    dts: &[f64],
    t: f64,
    seed: u64,
    stream_id: u64,
) -> Result<StatReport> {
    let d = ito_strat_distances(sigma, u0, dts, t, seed, stream_id)?;
    let ok = ito_strat_ladder_ok(&d, dts);
    Ok(StatReport::new(
        "ito_strat_compare",
        *d.last().unwrap(),
        0.0,
        Criterion::Informational,
    )
    .with_meta("distances", format!("{d:?}"))
    .with_meta("ladder_ok", ok)
    .with_meta("seed", seed))
}

/// Ensemble version: the estimate is the number of paths whose ladder is monotone
/// and bounded; passes when at least 90% of paths qualify.
pub fn ito_strat_ensemble(
    sigma: f64,
    u0: &SpectralField,
    dts: &[f64],
    t: f64,
    cfg: &McConfig,
) -> Result<StatReport> {
    let oks = mc_collect(cfg, |stream| {
        let d = ito_strat_distances(sigma, u0, dts, t, cfg.base_seed, stream)?;
        Ok(ito_strat_ladder_ok(&d, dts))
    })?;
    let count = oks.iter().filter(|ok| **ok).count();
    Ok(StatReport::new(
        "ito_strat_ensemble",
        count as f64,
        cfg.n_paths as f64,
        Criterion::AtLeast {
            threshold: (0.9 * cfg.n_paths as f64).ceil(),
        },
    )
    .with_se(0.0, cfg.n_paths)
    .with_meta("seed", cfg.base_seed))
}

/// `E‖X‖⁴` for `X ~ N(0, Q)` against `(Tr Q)² + 2 Tr(Q²)`.
pub fn gaussian_moment_ratio(spec: &CovarianceSpec, cfg: &McConfig) -> Result<StatReport> {
    let tr = spec.trace()?;
    let target = tr * tr + 2.0 * spec.hs_norm_sq()?;
    let values = mc_collect(cfg, |stream| {
        let s = NoiseSampler::new(spec.clone(), cfg.base_seed, stream);
        Ok(s.increment_at(0, 1.0)?.field.l2_norm_sq().powi(2))
    })?;
    Ok(mc_report("gaussian_fourth_moment", cfg, &values, target))
}

/// Independent random smooth fields, drawn from one seeded generator.
pub fn random_field_ensemble(
    grid: TorusGrid,
    n: usize,
    seed: u64,
    spec: &RandomFieldSpec,
) -> Vec<SpectralField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SpectralField::random_smooth(grid, spec, &mut rng))
        .collect()
}

/// Counts fields whose coercivity margin has the wrong sign: negative when the
/// hypothesis is expected to hold, non-negative when it is expected to fail.
pub fn coercivity_sweep(
    model: &ModelSpec,
    alpha: f64,
    fields: &[SpectralField],
    expect_hold: bool,
) -> Result<StatReport> {
    let mut wrong = 0usize;
    let mut worst = if expect_hold { f64::INFINITY } else { f64::NEG_INFINITY };
    for u in fields {
        let r = model.coercivity_check(u, alpha)?;
        if expect_hold {
            worst = worst.min(r.margin);
            if !(r.margin > 0.0) {
                wrong += 1;
            }
        } else {
            worst = worst.max(r.margin);
            if !(r.margin < 0.0) {
                wrong += 1;
            }
        }
    }
    Ok(StatReport::new(
        "coercivity",
        wrong as f64,
        0.0,
        Criterion::AbsTol { tol: 0.0 },
    )
    .with_se(0.0, fields.len())
    .with_meta("alpha", alpha)
    .with_meta("worst_margin", format!("{worst:e}"))
    .with_meta("expect_hold", expect_hold))
}

/// Largest `lhs` of the monotonicity inequality over consecutive pairs of `fields`.
pub fn monotonicity_sweep(model: &ModelSpec, fields: &[SpectralField]) -> Result<StatReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0usize;
    for pair in fields.chunks_exact(2) {
        let r = model.monotonicity_check(&pair[0], &pair[1])?;
        worst = worst.max(r.lhs);
        if r.lhs > 1e-10 {
            violations += 1;
        }
    }
    Ok(StatReport::new(
        "monotonicity",
        worst,
        0.0,
        Criterion::AbsTol { tol: 1e-10 },
    )
    .with_se(0.0, fields.len() / 2)
    .with_meta("violations", violations))
}

/// Largest `|⟨A(u), u⟩_{H^{-1}} + ‖u‖^m_{L^m}| / ‖u‖^m_{L^m}` for the porous medium
/// drift over `fields`, with the model's nonlinear quadrature.
pub fn porous_duality_sweep(m: u32, fields: &[SpectralField]) -> Result<StatReport> {
    let grid = *fields
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?
        .grid();
    let model = ModelSpec::porous_medium(m, CovarianceSpec::zero(grid))?;
    let n = model.nonlinear_points(&grid);
    let mut worst: f64 = 0.0;
    for u in fields {
        let pairing = model.drift(u)?.h_inner(u, InnerProduct::HMinusOne)?;
        let lm = u.lp_norm(m as f64, n)?.powi(m as i32);
        if lm > 0.0 {
            worst = worst.max((pairing + lm).abs() / lm);
        }
    }
    Ok(StatReport::new(
        format!("porous_duality_m{m}"),
        worst,
        0.0,
        Criterion::AbsTol { tol: 1e-6 },
    )
    .with_se(0.0, fields.len())
    .with_meta("quad_points", n))
}
