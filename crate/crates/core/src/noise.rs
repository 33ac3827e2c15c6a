//! Truncated Q-Wiener increments on the torus grid.
//!
//! A diagonal covariance `Q e_k = λ_k e_k` is sampled through its eigen-expansion.
//! Every conjugate pair `(k, -k)` with `k > 0` is driven by a cosine and a sine
//! channel, each of variance `λ_k dt / 2`, so `Var⟨ΔW, e_k⟩ = λ_k dt` and the
//! realized field stays real.
//!
//! Draws are counter based: the generator for step `n` of stream `s` is keyed by
//! `(seed, s)` and positioned at stream `n`, so increments can be regenerated in
//! any order and paths can be produced in parallel.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{laplacian_eigenvalue, SpectralField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    TraceClass,
    /// Identity covariance, truncated to the grid's `2K + 1` modes.
    White,
}

/// Diagonal covariance operator. `eigen[k]` is `λ_k = λ_{-k}` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    grid: TorusGrid,
    kind: CovarianceKind,
    eigen: Vec<f64>,
}

impl CovarianceSpec {
    pub fn white(grid: TorusGrid) -> Self {
        Self {
            grid,
            kind: CovarianceKind::White,
            eigen: vec![1.0; grid.n_modes() + 1],
        }
    }

    pub fn zero(grid: TorusGrid) -> Self {
        Self {
            grid,
            kind: CovarianceKind::TraceClass,
            eigen: vec![0.0; grid.n_modes() + 1],
        }
    }

    /// `λ_k = f(k)` for `k = 0..=K`.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(usize) -> f64) -> Result<Self> {
        let eigen: Vec<f64> = (0..=grid.n_modes()).map(f).collect();
        Self::list(grid, &eigen)
    }

    /// `λ_k = (1 + k²)^{-γ}`.
    pub fn power(grid: TorusGrid, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("power exponent {gamma}")));
        }
        Self::from_fn(grid, |k| (1.0 + (k * k) as f64).powf(-gamma))
    }

    /// Explicit eigenvalues for `k = 0, 1, ...`; modes beyond the list get `λ_k = 0`.
    pub fn list(grid: TorusGrid, values: &[f64]) -> Result<Self> {
        if values.len() > grid.n_modes() + 1 {
            return Err(Error::ModeOutOfRange {
                mode: values.len() as i64 - 1,
                max: grid.n_modes(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "covariance eigenvalue {bad} must be finite and non-negative"
            )));
        }
        let mut eigen = values.to_vec();
        eigen.resize(grid.n_modes() + 1, 0.0);
        Ok(Self {
            grid,
            kind: CovarianceKind::TraceClass,
            eigen,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn is_white(&self) -> bool {
        self.kind == CovarianceKind::White
    }

    /// `λ_k`, zero outside the grid.
    pub fn eigenvalue(&self, k: i64) -> f64 {
        self.eigen
            .get(k.unsigned_abs() as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Eigenvalues for `k = 0..=K`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen
    }

    /// `Σ_{|k|<=K} λ_k`. White noise has no finite trace; see
    /// [`truncated_trace`](Self::truncated_trace).
    pub fn trace(&self) -> Result<f64> {
        match self.kind {
            CovarianceKind::White => Err(Error::UntruncatedWhiteNoise),
            CovarianceKind::TraceClass => Ok(self.truncated_trace()),
        }
    }

    /// Trace of the operator restricted to the grid's modes (`2K + 1` for white noise).
    pub fn truncated_trace(&self) -> f64 {
        self.symmetric_sum(|l| l)
    }

    pub fn hs_norm_sq(&self) -> Result<f64> {
        match self.kind {
            CovarianceKind::White => Err(Error::UntruncatedWhiteNoise),
            CovarianceKind::TraceClass => Ok(self.truncated_hs_norm_sq()),
        }
    }

    pub fn truncated_hs_norm_sq(&self) -> f64 {
        self.symmetric_sum(|l| l * l)
    }

    fn symmetric_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        f(self.eigen[0]) + 2.0 * self.eigen[1..].iter().map(|&l| f(l)).sum::<f64>()
    }

    /// `⟨Q h, g⟩ = Σ_k λ_k Re(h_k conj(g_k))`.
    pub fn covariance_pairing(&self, h: &SpectralField, g: &SpectralField) -> Result<f64> {
        if *h.grid() != self.grid || *g.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let (a, b) = (h.coefficients(), g.coefficients());
        let mut sum = self.eigen[0] * a[0].re * b[0].re;
        for k in 1..self.eigen.len() {
            sum += 2.0 * self.eigen[k] * (a[k] * b[k].conj()).re;
        }
        Ok(sum)
    }

    /// Standard deviation multiplying the real draw at per-mode index `i`.
    fn channel_scale(&self, i: usize) -> f64 {
        let k = channel_mode(i);
        if k == 0 {
            self.eigen[0].sqrt()
        } else {
            (self.eigen[k] / 2.0).sqrt()
        }
    }

    /// Field from a vector of real channel values laid out as `[k0, re1, im1, re2, im2, ...]`.
    pub(crate) fn field_from_channels(&self, draws: &[f64]) -> SpectralField {
        field_from_scaled_channels(self.grid, draws, |i| self.channel_scale(i))
    }
}

/// Mode index of the per-mode channel `i` in the layout `[k0, re1, im1, ...]`.
#[inline]
pub fn channel_mode(i: usize) -> usize {
    i.div_ceil(2)
}

pub(crate) fn field_from_scaled_channels(
    grid: TorusGrid,
    draws: &[f64],
    scale: impl Fn(usize) -> f64,
) -> SpectralField {
    let k_max = grid.n_modes();
    let mut coeffs = Vec::with_capacity(k_max + 1);
    coeffs.push(Complex64::new(scale(0) * draws[0], 0.0));
    for k in 1..=k_max {
        let (re, im) = (2 * k - 1, 2 * k);
        coeffs.push(Complex64::new(scale(re) * draws[re], scale(im) * draws[im]));
    }
    SpectralField::from_coefficients(grid, coeffs).expect("coefficient count matches grid")
}

/// Standard deviation of the OU convolution `∫_0^dt e^{-μ(dt-s)} dβ_s`.
pub fn ou_convolution_std(mu: f64, dt: f64) -> f64 {
    if mu == 0.0 {
        dt.sqrt()
    } else {
        (-(-2.0 * mu * dt).exp_m1() / (2.0 * mu)).sqrt()
    }
}

/// One realized noise increment over a step of length `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    /// `ΔW` as a field.
    pub field: SpectralField,
    /// Brownian increments of the real channels `[k0, re1, im1, ...]`, each `N(0, dt)`.
    pub per_mode: Vec<f64>,
    /// Increments of independent scalar Brownian motions (transport noise).
    pub scalar: Vec<f64>,
    /// Standard normal draws for the exact heat-semigroup convolution over this
    /// step. Set when the increment is an aggregate of finer steps; otherwise the
    /// normalized `per_mode` draws are used.
    pub ou_draws: Option<Vec<f64>>,
}

impl NoiseIncrement {
    pub fn zero(grid: TorusGrid, dt: f64, scalar_channels: usize) -> Self {
        Self {
            dt,
            field: SpectralField::zeros(grid),
            per_mode: vec![0.0; grid.mode_count()],
            scalar: vec![0.0; scalar_channels],
            ou_draws: None,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }

    /// Standard normal draws driving the exact stochastic convolution of this step.
    pub fn convolution_draws(&self) -> Vec<f64> {
        match &self.ou_draws {
            Some(z) => z.clone(),
            None => {
                let inv = 1.0 / self.dt.sqrt();
                self.per_mode.iter().map(|d| d * inv).collect()
            }
        }
    }

    /// Merges consecutive increments into one coarse increment. Brownian parts are
    /// summed; the convolution draws are composed so that the coarse exact-OU
    /// update reproduces the fine ones.
    pub fn aggregate(parts: &[NoiseIncrement]) -> Result<NoiseIncrement> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot aggregate zero increments".into()))?;
        let grid = *first.grid();
        let mut out = NoiseIncrement::zero(grid, 0.0, first.scalar.len());
        let mut conv = vec![0.0; first.per_mode.len()];
        for part in parts {
            if *part.grid() != grid || part.scalar.len() != out.scalar.len() {
                return Err(Error::GridMismatch);
            }
            out.dt += part.dt;
            out.field.axpy(1.0, &part.field);
            for (s, d) in out.per_mode.iter_mut().zip(&part.per_mode) {
                *s += d;
            }
            for (s, d) in out.scalar.iter_mut().zip(&part.scalar) {
                *s += d;
            }
            let z = part.convolution_draws();
            for (i, c) in conv.iter_mut().enumerate() {
                let mu = laplacian_eigenvalue(channel_mode(i) as i64);
                *c = (-mu * part.dt).exp() * *c + ou_convolution_std(mu, part.dt) * z[i];
            }
        }
        let draws = conv
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mu = laplacian_eigenvalue(channel_mode(i) as i64);
                c / ou_convolution_std(mu, out.dt)
            })
            .collect();
        out.ou_draws = Some(draws);
        Ok(out)
    }
}

/// Reproducible source of increments for one path.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    spec: CovarianceSpec,
    seed: u64,
    stream_id: u64,
    scalar_channels: usize,
    step: u64,
    key: [u8; 32],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, stream_id: u64) -> [u8; 32] {
    let mut state = seed;
    let a = splitmix64(&mut state);
    state ^= stream_id.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&a.to_le_bytes());
    for chunk in key[8..].chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

impl NoiseSampler {
    pub fn new(spec: CovarianceSpec, seed: u64, stream_id: u64) -> Self {
        Self {
            spec,
            seed,
            stream_id,
            scalar_channels: 0,
            step: 0,
            key: derive_key(seed, stream_id),
        }
    }

    /// Adds `j` independent scalar Brownian motions to every increment.
    pub fn with_scalar_channels(mut self, j: usize) -> Self {
        self.scalar_channels = j;
        self
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TorusGrid {
        self.spec.grid()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn scalar_channels(&self) -> usize {
        self.scalar_channels
    }

    /// Index of the next increment returned by [`sample_increment`](Self::sample_increment).
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn reset(&mut self) {
        self.step = 0;
    }

    pub fn sample_increment(&mut self, dt: f64) -> Result<NoiseIncrement> {
        let inc = self.increment_at(self.step, dt)?;
        self.step += 1;
        Ok(inc)
    }

    /// The increment of step `step`, independent of the sampler's position.
    pub fn increment_at(&self, step: u64, dt: f64) -> Result<NoiseIncrement> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidStep(dt));
        }
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(step);
        let sd = dt.sqrt();
        let per_mode: Vec<f64> = (0..self.grid().mode_count())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let scalar: Vec<f64> = (0..self.scalar_channels)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(NoiseIncrement {
            dt,
            field: self.spec.field_from_channels(&per_mode),
            per_mode,
            scalar,
            ou_draws: None,
        })
    }
}
