//! Drift/diffusion pairs for the SPDE models and numerical checks of the
//! coercivity, monotonicity and growth hypotheses.

use crate::error::{Error, Result};
use crate::noise::{CovarianceSpec, NoiseIncrement, NoiseSampler};
use crate::spectral::{InnerProduct, SpectralField, TorusGrid};

/// Fraction of modes kept after the Burgers product.
pub const BURGERS_DEALIAS: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `du = Δu dt + Σ_j √σ_j ∂ₓu dβ^j` (Itô form).
    TransportHeat { sigma: Vec<f64> },
    /// `du = Δu dt + Q^{1/2} dW`.
    AdditiveHeat { q: CovarianceSpec },
    /// `du = (Δu + θ|u|^{m-2}u) dt + Q^{1/2} dW`.
    ReactionDiffusion {
        theta: f64,
        m: u32,
        q: CovarianceSpec,
    },
    /// `du = Δ(|u|^{m-2}u) dt + Q^{1/2} dW`.
    PorousMedium { m: u32, q: CovarianceSpec },
    /// `du = (Δu + ∂ₓ(u²)) dt + Q^{1/2} dW`.
    Burgers { q: CovarianceSpec },
}

/// An evaluated hypothesis inequality `lhs <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub lhs: f64,
    pub bound: f64,
    /// `bound - lhs`; non-negative when the inequality holds.
    pub margin: f64,
    pub witness: Vec<SpectralField>,
}

impl HypothesisReport {
    fn new(lhs: f64, bound: f64, witness: Vec<SpectralField>) -> Self {
        Self {
            lhs,
            bound,
            margin: bound - lhs,
            witness,
        }
    }

    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }

    /// `lhs / bound`, the empirical constant of a growth check.
    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.bound
        }
    }
}

fn validate_q(q: &CovarianceSpec) -> Result<()> {
    if q.eigenvalues().iter().all(|l| l.is_finite() && *l >= 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("covariance eigenvalues".into()))
    }
}

impl ModelSpec {
    pub fn transport_heat(sigma: Vec<f64>) -> Result<Self> {
        if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "transport coefficient {s} must be finite and non-negative"
            )));
        }
        Ok(Self::TransportHeat { sigma })
    }

    pub fn additive_heat(q: CovarianceSpec) -> Result<Self> {
        validate_q(&q)?;
        Ok(Self::AdditiveHeat { q })
    }

    pub fn reaction_diffusion(theta: f64, m: u32, q: CovarianceSpec) -> Result<Self> {
        if m < 3 || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "reaction-diffusion needs m >= 3 and finite theta (m = {m}, theta = {theta})"
            )));
        }
        validate_q(&q)?;
        Ok(Self::ReactionDiffusion { theta, m, q })
    }

    pub fn porous_medium(m: u32, q: CovarianceSpec) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "porous medium needs m >= 2, got {m}"
            )));
        }
        validate_q(&q)?;
        Ok(Self::PorousMedium { m, q })
    }

    pub fn burgers(q: CovarianceSpec) -> Result<Self> {
        validate_q(&q)?;
        Ok(Self::Burgers { q })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TransportHeat { .. } => "TransportHeat",
            Self::AdditiveHeat { .. } => "AdditiveHeat",
            Self::ReactionDiffusion { .. } => "ReactionDiffusion",
            Self::PorousMedium { .. } => "PorousMedium",
            Self::Burgers { .. } => "Burgers",
        }
    }

    pub fn covariance(&self) -> Option<&CovarianceSpec> {
        match self {
            Self::TransportHeat { .. } => None,
            Self::AdditiveHeat { q }
            | Self::ReactionDiffusion { q, .. }
            | Self::PorousMedium { q, .. }
            | Self::Burgers { q } => Some(q),
        }
    }

    /// `‖σ‖_{ℓ¹}` for transport noise, zero otherwise.
    pub fn sigma_l1(&self) -> f64 {
        match self {
            Self::TransportHeat { sigma } => sigma.iter().sum(),
            _ => 0.0,
        }
    }

    /// Whether the linear part is exactly `Δ`, so exponential integrators apply.
    pub fn has_heat_linear_part(&self) -> bool {
        !matches!(self, Self::PorousMedium { m, .. } if *m > 2)
    }

    /// Whether the mean `∫u dx` is unaffected by the drift.
    pub fn conserves_mean(&self) -> bool {
        !matches!(self, Self::ReactionDiffusion { .. })
    }

    fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        match self.covariance() {
            Some(q) if q.grid() != grid => Err(Error::GridMismatch),
            _ => Ok(()),
        }
    }

    /// Quadrature size for pointwise nonlinearities: large enough that the
    /// projection of a degree-`m - 1` product onto `|k| <= K` is unaliased.
    pub fn nonlinear_points(&self, grid: &TorusGrid) -> usize {
        let k = grid.n_modes();
        let degree = match self {
            Self::ReactionDiffusion { m, .. } | Self::PorousMedium { m, .. } => *m as usize - 1,
            Self::Burgers { .. } => 2,
            _ => 1,
        };
        grid.n_points().max((degree + 1) * k + 1)
    }

    /// `|u|^{m-2} u` projected onto the grid's modes.
    fn signed_power(&self, u: &SpectralField, m: u32) -> Result<SpectralField> {
        let n = self.nonlinear_points(u.grid());
        let e = m as i32 - 2;
        u.map_physical(n, |x| x.abs().powi(e) * x)
    }

    /// The drift minus `Δu`. For the porous medium equation this is the whole drift
    /// minus `Δu` and is only meaningful for `m = 2`, where it vanishes.
    pub fn nonlinear_part(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_grid(u.grid())?;
        match self {
            Self::TransportHeat { .. } | Self::AdditiveHeat { .. } => {
                Ok(SpectralField::zeros(*u.grid()))
            }
            Self::ReactionDiffusion { theta, m, .. } => {
                Ok(self.signed_power(u, *m)?.scale(*theta))
            }
            Self::PorousMedium { m, .. } => {
                if *m == 2 {
                    Ok(SpectralField::zeros(*u.grid()))
                } else {
                    Err(Error::WrongModel {
                        expected: "model with a Laplacian linear part",
                        got: self.name(),
                    })
                }
            }
            Self::Burgers { .. } => {
                let n = self.nonlinear_points(u.grid());
                Ok(u.product(u, n)?.dealias(BURGERS_DEALIAS).derivative())
            }
        }
    }

    /// `A(u)`.
    pub fn drift(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check_grid(u.grid())?;
        match self {
            Self::PorousMedium { m, .. } => Ok(self.signed_power(u, *m)?.laplacian()),
            _ => {
                let mut out = u.laplacian();
                out.axpy(1.0, &self.nonlinear_part(u)?);
                Ok(out)
            }
        }
    }

    /// `B(u) ΔW` for one increment.
    pub fn diffusion_apply(&self, u: &SpectralField, inc: &NoiseIncrement) -> Result<SpectralField> {
        if inc.grid() != u.grid() {
            return Err(Error::GridMismatch);
        }
        match self {
            Self::TransportHeat { sigma } => {
                if inc.scalar.len() < sigma.len() {
                    return Err(Error::InvalidParameter(format!(
                        "transport noise needs {} scalar channels, increment has {}",
                        sigma.len(),
                        inc.scalar.len()
                    )));
                }
                let weight: f64 = sigma
                    .iter()
                    .zip(&inc.scalar)
                    .map(|(s, db)| s.sqrt() * db)
                    .sum();
                Ok(u.derivative().scale(weight))
            }
            _ => {
                self.check_grid(u.grid())?;
                Ok(inc.field.clone())
            }
        }
    }

    /// `‖B(u)‖²_{L₂}`, using the truncated trace for white noise.
    pub fn diffusion_hs_norm_sq(&self, u: &SpectralField) -> f64 {
        match self {
            Self::TransportHeat { sigma } => sigma.iter().sum::<f64>() * u.gradient_norm_sq(),
            _ => self.covariance().map_or(0.0, |q| q.truncated_trace()),
        }
    }

    /// Sampler matching the model's noise: the covariance of `q` for additive
    /// models, `J` scalar Brownian channels for transport noise.
    pub fn noise_sampler(&self, grid: TorusGrid, seed: u64, stream_id: u64) -> Result<NoiseSampler> {
        self.check_grid(&grid)?;
        Ok(match self {
            Self::TransportHeat { sigma } => {
                NoiseSampler::new(CovarianceSpec::zero(grid), seed, stream_id)
                    .with_scalar_channels(sigma.len())
            }
            _ => NoiseSampler::new(self.covariance().unwrap().clone(), seed, stream_id),
        })
    }

    fn requires_mean_free(&self) -> bool {
        matches!(self, Self::TransportHeat { .. } | Self::PorousMedium { .. })
    }

    /// Gelfand pairing `⟨A(u), v⟩`: `L²` for the heat-type models, `H^{-1}` for
    /// the porous medium equation.
    fn pairing(&self, a: &SpectralField, v: &SpectralField) -> Result<f64> {
        match self {
            Self::PorousMedium { .. } => a.h_inner(v, InnerProduct::HMinusOne),
            _ => a.h_inner(v, InnerProduct::L2),
        }
    }

    /// `(‖u‖_V, exponent)` entering the coercivity inequality: `‖∂ₓu‖_{L²}` with
    /// power 2 for transport/additive/Burgers, power `m` for reaction-diffusion,
    /// and `‖u‖_{L^m}` with power `m` for the porous medium equation.
    fn coercivity_norm(&self, u: &SpectralField) -> Result<(f64, f64)> {
        match self {
            Self::PorousMedium { m, .. } => {
                let n = self.nonlinear_points(u.grid());
                Ok((u.lp_norm(*m as f64, n)?, *m as f64))
            }
            Self::ReactionDiffusion { m, .. } => Ok((u.gradient_norm_sq().sqrt(), *m as f64)),
            _ => Ok((u.gradient_norm_sq().sqrt(), 2.0)),
        }
    }

    /// `2⟨A(u), u⟩ + ‖B(u)‖²_{L₂} + α‖u‖_V^p <= λ|u|²_H + ν` with `λ = 0`
    /// and `ν` the truncated trace of `q`.
    pub fn coercivity_check(&self, u: &SpectralField, alpha: f64) -> Result<HypothesisReport> {
        self.check_grid(u.grid())?;
        if self.requires_mean_free() && !u.is_mean_free() {
            return Err(Error::NonzeroMean("coercivity check"));
        }
        let a = self.drift(u)?;
        let (v_norm, power) = self.coercivity_norm(u)?;
        let lhs = 2.0 * self.pairing(&a, u)? + self.diffusion_hs_norm_sq(u) + alpha * v_norm.powf(power);
        let nu = self.covariance().map_or(0.0, |q| q.truncated_trace());
        Ok(HypothesisReport::new(lhs, nu, vec![u.clone()]))
    }

    /// `2⟨A(u) - A(w), u - w⟩ + ‖B(u) - B(w)‖²_{L₂} <= 0`.
    pub fn monotonicity_check(&self, u: &SpectralField, w: &SpectralField) -> Result<HypothesisReport> {
        u.check_grid(w)?;
        self.check_grid(u.grid())?;
        if self.requires_mean_free() && !(u.is_mean_free() && w.is_mean_free()) {
            return Err(Error::NonzeroMean("monotonicity check"));
        }
        let d = u.sub(w)?;
        let da = self.drift(u)?.sub(&self.drift(w)?)?;
        let noise = match self {
            Self::TransportHeat { sigma } => sigma.iter().sum::<f64>() * d.gradient_norm_sq(),
            _ => 0.0,
        };
        let lhs = 2.0 * self.pairing(&da, &d)? + noise;
        Ok(HypothesisReport::new(lhs, 0.0, vec![u.clone(), w.clone()]))
    }

    /// `‖A(u)‖_{V*} <= c (1 + ‖u‖_V^{m-1})`, reported with `bound = 1 + ‖u‖_V^{m-1}`
    /// so that [`HypothesisReport::ratio`] is the empirical `c`. `V = H¹` with the
    /// `H^{-1}` dual norm for the heat-type models; for the porous medium equation
    /// the dual norm of `Δφ` in `(L^m)*` is `‖φ‖_{L^{m/(m-1)}}` with `φ = |u|^{m-2}u`.
    pub fn growth_check(&self, u: &SpectralField) -> Result<HypothesisReport> {
        self.check_grid(u.grid())?;
        let (dual, v_norm, power) = match self {
            Self::PorousMedium { m, .. } => {
                let n = self.nonlinear_points(u.grid());
                let mf = *m as f64;
                let phi = self.signed_power(u, *m)?;
                let dual = phi.lp_norm(mf / (mf - 1.0), n)?;
                (dual, u.lp_norm(mf, n)?, mf - 1.0)
            }
            Self::ReactionDiffusion { m, .. } => {
                let a = self.drift(u)?;
                (a.sobolev_norm(-1.0), u.sobolev_norm(1.0), *m as f64 - 1.0)
            }
            _ => {
                let a = self.drift(u)?;
                (a.sobolev_norm(-1.0), u.sobolev_norm(1.0), 1.0)
            }
        };
        Ok(HypothesisReport::new(dual, 1.0 + v_norm.powf(power), vec![u.clone()]))
    }
}
