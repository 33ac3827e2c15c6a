//! Real fields on the torus `[0, 1)` in the Fourier basis `e_k(x) = exp(2πikx)`.
//!
//! A [`SpectralField`] stores only the amplitudes for `k = 0..=K`; the negative
//! modes are implied by Hermitian symmetry, so every field is real-valued by
//! construction. Differential operators and the heat semigroup act as mode-wise
//! multipliers with Laplacian eigenvalue `-(2πk)^2`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative size of the mean mode tolerated by mean-zero preconditions.
pub const MEAN_TOLERANCE: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    })
}

/// `(2πk)^2`, the magnitude of the Laplacian eigenvalue at mode `k`.
#[inline]
pub fn laplacian_eigenvalue(k: i64) -> f64 {
    let w = 2.0 * PI * k as f64;
    w * w
}

/// Mode set `{-K, ..., K}` together with the `M` real-space quadrature points `x_j = j / M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    n_modes: usize,
    n_points: usize,
}

impl TorusGrid {
    pub fn new(n_modes: usize, n_points: usize) -> Result<Self> {
        if n_points < 2 * n_modes + 1 {
            return Err(Error::InvalidGrid(format!(
                "{n_points} points cannot represent {n_modes} modes (need at least {})",
                2 * n_modes + 1
            )));
        }
        Ok(Self { n_modes, n_points })
    }

    /// Grid with the default `M = 4K` quadrature points (at least `2K + 1`).
    pub fn with_modes(n_modes: usize) -> Self {
        Self {
            n_modes,
            n_points: (4 * n_modes).max(2 * n_modes + 1),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Number of complex modes, `2K + 1`.
    pub fn mode_count(&self) -> usize {
        2 * self.n_modes + 1
    }

    pub fn modes(&self) -> RangeInclusive<i64> {
        -(self.n_modes as i64)..=self.n_modes as i64
    }

    pub fn contains(&self, k: i64) -> bool {
        k.unsigned_abs() as usize <= self.n_modes
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.n_points as f64;
        (0..self.n_points).map(move |j| j as f64 / m)
    }
}

/// Regularity and integrability exponents of a Bessel potential space `W^{α,p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevIndex {
    alpha: f64,
    p: f64,
}

impl SobolevIndex {
    pub fn new(alpha: f64, p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidExponent(p));
        }
        Ok(Self { alpha, p })
    }

    /// The Hilbert case `H^α = W^{α,2}`.
    pub fn hilbert(alpha: f64) -> Self {
        Self { alpha, p: 2.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Inner product selector for [`SpectralField::h_inner`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerProduct {
    L2,
    /// `Σ (2πk)^2 f_k conj(g_k)`, the homogeneous `H^1_0` product.
    H1Zero,
    /// `Σ_{k≠0} f_k conj(g_k) / (2πk)^2`, the product induced by `(-Δ)^{-1}`.
    HMinusOne,
}

/// Band-limited real field on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    // amplitudes for k = 0..=K
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_modes + 1],
        }
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    /// Builds a field from `(k, amplitude)` entries. A mode given without its
    /// mirror gets the conjugate amplitude at `-k`; unspecified modes are zero.
    pub fn from_modes(grid: TorusGrid, entries: &[(i64, Complex64)]) -> Result<Self> {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.n_modes + 1];
        let mut seen = vec![false; grid.n_modes + 1];
        for &(k, amp) in entries {
            if !grid.contains(k) {
                return Err(Error::ModeOutOfRange {
                    mode: k,
                    max: grid.n_modes,
                });
            }
            if k == 0 && amp.im != 0.0 {
                return Err(Error::ImaginaryMean(amp.im));
            }
            let idx = k.unsigned_abs() as usize;
            let value = if k < 0 { amp.conj() } else { amp };
            if seen[idx] {
                let prev = coeffs[idx];
                let scale = prev.norm().max(value.norm()).max(f64::MIN_POSITIVE);
                if (prev - value).norm() > 1e-12 * scale {
                    return Err(Error::ConjugateConflict(k));
                }
            }
            seen[idx] = true;
            coeffs[idx] = value;
        }
        Ok(Self { grid, coeffs })
    }

    /// Field from amplitudes for `k = 0..=K`. The imaginary part of the mean is discarded.
    pub fn from_coefficients(grid: TorusGrid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_modes + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients, got {}",
                grid.n_modes + 1,
                coeffs.len()
            )));
        }
        coeffs[0].im = 0.0;
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Amplitudes for `k = 0..=K`.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Amplitude at mode `k`; zero outside the grid's band.
    pub fn amp(&self, k: i64) -> Complex64 {
        let idx = k.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            Some(&a) if k < 0 => a.conj(),
            Some(&a) => a,
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Real part of the mean mode, `∫ u dx`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn is_mean_free(&self) -> bool {
        self.coeffs[0].re.abs() <= MEAN_TOLERANCE * self.l2_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub(crate) fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Values at the grid points `x_j = j / M`.
    pub fn to_physical(&self) -> Vec<f64> {
        self.sample_unchecked(self.grid.n_points)
    }

    /// Values on an alternative uniform grid of `n_points >= 2K + 1` points.
    pub fn sample_on(&self, n_points: usize) -> Result<Vec<f64>> {
        if n_points < self.grid.mode_count() {
            return Err(Error::InvalidGrid(format!(
                "{n_points} points cannot resolve {} modes",
                self.grid.n_modes
            )));
        }
        Ok(self.sample_unchecked(n_points))
    }

    fn sample_unchecked(&self, n_points: usize) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n_points];
        buf[0] = self.coeffs[0];
        for (k, &a) in self.coeffs.iter().enumerate().skip(1) {
            buf[k] = a;
            buf[n_points - k] = a.conj();
        }
        fft_plan(n_points, true).process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Inverse of [`to_physical`](Self::to_physical): requires exactly `M` samples.
    pub fn from_physical(grid: TorusGrid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.n_points {
            return Err(Error::SampleCount {
                expected: grid.n_points,
                got: samples.len(),
            });
        }
        Ok(Self::project_samples(grid, samples))
    }

    /// Projects samples on any uniform grid of at least `2K + 1` points onto
    /// the modes of `grid` (discrete Fourier coefficients, truncated to `|k| <= K`).
    pub(crate) fn project_samples(grid: TorusGrid, samples: &[f64]) -> Self {
        let n = samples.len();
        debug_assert!(n >= grid.mode_count());
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft_plan(n, false).process(&mut buf);
        let inv = 1.0 / n as f64;
        let mut coeffs: Vec<Complex64> = buf[..=grid.n_modes].iter().map(|c| c * inv).collect();
        coeffs[0].im = 0.0;
        Self { grid, coeffs }
    }

    /// Applies `f` pointwise on a uniform grid of `n_points` and projects back.
    pub fn map_physical(&self, n_points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples: Vec<f64> = self.sample_on(n_points)?.into_iter().map(f).collect();
        Ok(Self::project_samples(self.grid, &samples))
    }

    /// Pointwise product evaluated on `n_points` and truncated to the grid's modes.
    pub fn product(&self, other: &SpectralField, n_points: usize) -> Result<Self> {
        self.check_grid(other)?;
        let a = self.sample_on(n_points)?;
        let b = other.sample_on(n_points)?;
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Self::project_samples(self.grid, &prod))
    }

    /// Multiplies each mode by `symbol(k)`. The symbol must satisfy
    /// `symbol(-k) = conj(symbol(k))` and be real at `k = 0`.
    pub fn apply_multiplier(&self, symbol: impl Fn(i64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &a)| a * symbol(k as i64))
            .collect::<Vec<_>>();
        let mut out = Self {
            grid: self.grid,
            coeffs,
        };
        out.coeffs[0].im = 0.0;
        out
    }

    /// Mode-wise multiplication by a real, even symbol.
    pub fn apply_real_multiplier(&self, symbol: impl Fn(i64) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &a)| a * symbol(k as i64))
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn laplacian(&self) -> Self {
        self.apply_real_multiplier(|k| -laplacian_eigenvalue(k))
    }

    pub fn derivative(&self) -> Self {
        self.apply_multiplier(|k| Complex64::new(0.0, 2.0 * PI * k as f64))
    }

    /// `e^{tΔ} f`.
    pub fn heat_semigroup(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.apply_real_multiplier(|k| (-laplacian_eigenvalue(k) * t).exp()))
    }

    /// `(Σ_k (1 + (2πk)^2)^α |f_k|^2)^{1/2}`.
    pub fn sobolev_norm(&self, alpha: f64) -> f64 {
        self.weighted_sum(|k| (1.0 + laplacian_eigenvalue(k)).powf(alpha))
            .sqrt()
    }

    /// `(Σ_k (1 + (2πk)^2)^{αp/2} |f_k|^p)^{1/p}`; agrees with
    /// [`sobolev_norm`](Self::sobolev_norm) when `p = 2`.
    pub fn bessel_potential_norm(&self, idx: SobolevIndex) -> f64 {
        let (alpha, p) = (idx.alpha, idx.p);
        let term = |k: i64, a: Complex64| {
            (1.0 + laplacian_eigenvalue(k)).powf(alpha * p / 2.0) * a.norm().powf(p)
        };
        let mut sum = term(0, self.coeffs[0]);
        for (k, &a) in self.coeffs.iter().enumerate().skip(1) {
            sum += 2.0 * term(k as i64, a);
        }
        sum.powf(1.0 / p)
    }

    /// `Σ_{|k|<=K} weight(k) |f_k|^2` for an even weight.
    fn weighted_sum(&self, weight: impl Fn(i64) -> f64) -> f64 {
        let mut sum = weight(0) * self.coeffs[0].norm_sqr();
        for (k, a) in self.coeffs.iter().enumerate().skip(1) {
            sum += 2.0 * weight(k as i64) * a.norm_sqr();
        }
        sum
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `‖∂ₓ f‖²_{L²}`.
    pub fn gradient_norm_sq(&self) -> f64 {
        self.weighted_sum(laplacian_eigenvalue)
    }

    /// `‖f‖²_{H¹} = ‖f‖²_{L²} + ‖∂ₓ f‖²_{L²}`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.weighted_sum(|k| 1.0 + laplacian_eigenvalue(k))
    }

    /// Rectangle-rule `L^p` norm on `quad_points` equispaced nodes.
    pub fn lp_norm(&self, p: f64, quad_points: usize) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidExponent(p));
        }
        let samples = self.sample_on(quad_points)?;
        Ok(lp_norm_of_samples(&samples, p))
    }

    pub fn h_inner(&self, other: &SpectralField, space: InnerProduct) -> Result<f64> {
        self.check_grid(other)?;
        let weight: fn(i64) -> f64 = match space {
            InnerProduct::L2 => |_| 1.0,
            InnerProduct::H1Zero => laplacian_eigenvalue,
            InnerProduct::HMinusOne => |k| {
                if k == 0 {
                    0.0
                } else {
                    1.0 / laplacian_eigenvalue(k)
                }
            },
        };
        if space != InnerProduct::L2 && !(self.is_mean_free() && other.is_mean_free()) {
            return Err(Error::NonzeroMean("H^1_0 / H^-1 inner product"));
        }
        let mut sum = weight(0) * self.coeffs[0].re * other.coeffs[0].re;
        for (k, (a, b)) in self.coeffs.iter().zip(&other.coeffs).enumerate().skip(1) {
            sum += 2.0 * weight(k as i64) * (a * b.conj()).re;
        }
        Ok(sum)
    }

    /// Zeroes every mode with `|k| > fraction · K`.
    pub fn dealias(&self, fraction: f64) -> Self {
        assert!(
            fraction > 0.0 && fraction <= 1.0,
            "dealias fraction must lie in (0, 1], got {fraction}"
        );
        let cutoff = fraction * self.grid.n_modes as f64 + 1e-9;
        self.apply_real_multiplier(|k| if (k as f64) > cutoff { 0.0 } else { 1.0 })
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.apply_real_multiplier(|_| a)
    }

    /// `self += a · x`. Panics on grid mismatch.
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        assert_eq!(self.grid, x.grid, "axpy on mismatched grids");
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += v * a;
        }
    }

    /// Largest amplitude difference over all modes.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Random smooth field: `f_k ~ N(0, v_k)` complex Gaussian with
    /// `v_k = scale² · max(|k|, 1)^{-decay}` for `|k| <= max_mode`.
    pub fn random_smooth<R: Rng + ?Sized>(
        grid: TorusGrid,
        spec: &RandomFieldSpec,
        rng: &mut R,
    ) -> Self {
        let mut f = Self::zeros(grid);
        let top = spec.max_mode.min(grid.n_modes);
        if !spec.mean_free {
            let z: f64 = rng.sample(StandardNormal);
            f.coeffs[0] = Complex64::new(spec.scale * z, 0.0);
        }
        for k in 1..=top {
            let sd = spec.scale * (k as f64).powf(-spec.decay / 2.0) / std::f64::consts::SQRT_2;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            f.coeffs[k] = Complex64::new(sd * re, sd * im);
        }
        f
    }
}

/// Parameters for [`SpectralField::random_smooth`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFieldSpec {
    pub max_mode: usize,
    pub decay: f64,
    pub mean_free: bool,
    pub scale: f64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        Self {
            max_mode: 8,
            decay: 4.0,
            mean_free: true,
            scale: 1.0,
        }
    }
}

pub(crate) fn lp_norm_of_samples(samples: &[f64], p: f64) -> f64 {
    let n = samples.len() as f64;
    let sum: f64 = samples.iter().map(|x| x.abs().powf(p)).sum();
    (sum / n).powf(1.0 / p)
}
