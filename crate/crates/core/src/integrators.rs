//! Time stepping for the Galerkin systems.
//!
//! All schemes are explicit. For explicit treatment of the Laplacian the step
//! must satisfy `dt < 2 / (2πK)²`; the exponential schemes integrate the
//! linear part exactly and have no such restriction.

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::noise::{
    channel_mode, field_from_scaled_channels, ou_convolution_std, CovarianceSpec, NoiseIncrement,
    NoiseSampler,
};
use crate::spectral::{laplacian_eigenvalue, SpectralField};

/// States with an `L²` norm above this are treated as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    EulerMaruyama,
    HeunStratonovich,
    ExponentialEuler,
    ExactOU,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EulerMaruyama => "euler_maruyama",
            Self::HeunStratonovich => "heun_stratonovich",
            Self::ExponentialEuler => "exponential_euler",
            Self::ExactOU => "exact_ou",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub dt: f64,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidStep(dt));
        }
        Ok(Self { kind, dt })
    }

    /// Checks that the scheme can integrate `model`.
    pub fn supports(&self, model: &ModelSpec) -> Result<()> {
        let ok = match self.kind {
            SchemeKind::EulerMaruyama => true,
            SchemeKind::HeunStratonovich => matches!(model, ModelSpec::TransportHeat { .. }),
            SchemeKind::ExponentialEuler => model.has_heat_linear_part(),
            SchemeKind::ExactOU => matches!(model, ModelSpec::AdditiveHeat { .. }),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::WrongModel {
                expected: match self.kind {
                    SchemeKind::HeunStratonovich => "TransportHeat",
                    SchemeKind::ExactOU => "AdditiveHeat",
                    _ => "model with a Laplacian linear part",
                },
                got: model.name(),
            })
        }
    }
}

/// Time grid, states and the increments that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub model: &'static str,
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub increments: Vec<NoiseIncrement>,
}

impl SamplePath {
    pub fn new(model: &'static str, u0: SpectralField) -> Self {
        Self {
            model,
            times: vec![0.0],
            states: vec![u0],
            increments: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: SpectralField, inc: NoiseIncrement) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.states.push(state);
        self.increments.push(inc);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn initial(&self) -> &SpectralField {
        &self.states[0]
    }

    pub fn final_state(&self) -> &SpectralField {
        self.states.last().unwrap()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// `u + A(u) dt + B(u) ΔW`.
pub fn em_step(model: &ModelSpec, u: &SpectralField, inc: &NoiseIncrement) -> Result<SpectralField> {
    let mut out = u.clone();
    out.axpy(inc.dt, &model.drift(u)?);
    out.axpy(1.0, &model.diffusion_apply(u, inc)?);
    Ok(out)
}

/// Stratonovich predictor-corrector for transport noise:
/// `ũ = u + Σ√σ_j ∂ₓu Δβ^j`, then
/// `u' = u + (1 - ‖σ‖₁/2) Δu dt + Σ√σ_j ∂ₓ((u + ũ)/2) Δβ^j`.
pub fn heun_strat_step(
    model: &ModelSpec,
    u: &SpectralField,
    inc: &NoiseIncrement,
) -> Result<SpectralField> {
    if !matches!(model, ModelSpec::TransportHeat { .. }) {
        return Err(Error::WrongModel {
            expected: "TransportHeat",
            got: model.name(),
        });
    }
    let mut predictor = u.clone();
    predictor.axpy(1.0, &model.diffusion_apply(u, inc)?);
    let mut mid = u.add(&predictor)?;
    mid = mid.scale(0.5);
    let mut out = u.clone();
    out.axpy((1.0 - model.sigma_l1() / 2.0) * inc.dt, &u.laplacian());
    out.axpy(1.0, &model.diffusion_apply(&mid, inc)?);
    Ok(out)
}

/// Exact stochastic convolution `∫ e^{(dt-s)Δ} Q^{1/2} dW_s` over one step,
/// driven by the increment's convolution draws.
pub fn stochastic_convolution(q: &CovarianceSpec, inc: &NoiseIncrement) -> Result<SpectralField> {
    if inc.grid() != q.grid() {
        return Err(Error::GridMismatch);
    }
    let z = inc.convolution_draws();
    let eigen = q.eigenvalues();
    Ok(field_from_scaled_channels(*q.grid(), &z, |i| {
        let k = channel_mode(i);
        let pair = if k == 0 { 1.0 } else { 0.5 };
        ou_convolution_std(laplacian_eigenvalue(k as i64), inc.dt) * (eigen[k] * pair).sqrt()
    }))
}

/// One Duhamel step with the nonlinearity frozen at the left endpoint:
/// `u' = e^{dtΔ}(u + N(u) dt) + (exact stochastic convolution)` for additive
/// noise and `u' = e^{dtΔ}(u + B(u) ΔW)` for transport noise.
pub fn exp_euler_step(
    model: &ModelSpec,
    u: &SpectralField,
    inc: &NoiseIncrement,
) -> Result<SpectralField> {
    if !model.has_heat_linear_part() {
        return Err(Error::WrongModel {
            expected: "model with a Laplacian linear part",
            got: model.name(),
        });
    }
    let dt = inc.dt;
    match model.covariance() {
        None => {
            let mut v = u.clone();
            v.axpy(1.0, &model.diffusion_apply(u, inc)?);
            v.heat_semigroup(dt)
        }
        Some(q) => {
            let mut v = u.clone();
            v.axpy(dt, &model.nonlinear_part(u)?);
            let mut out = v.heat_semigroup(dt)?;
            out.axpy(1.0, &stochastic_convolution(q, inc)?);
            Ok(out)
        }
    }
}

/// Distributionally exact transition of `dv = Δv dt + Q^{1/2} dW` over `inc.dt`.
pub fn exact_ou_update(
    q: &CovarianceSpec,
    v: &SpectralField,
    inc: &NoiseIncrement,
) -> Result<SpectralField> {
    let mut out = v.heat_semigroup(inc.dt)?;
    out.axpy(1.0, &stochastic_convolution(q, inc)?);
    Ok(out)
}

/// Draws the next increment from `sampler` and applies [`exact_ou_update`].
pub fn exact_ou_step(
    q: &CovarianceSpec,
    v: &SpectralField,
    dt: f64,
    sampler: &mut NoiseSampler,
) -> Result<SpectralField> {
    if sampler.spec().grid() != q.grid() {
        return Err(Error::GridMismatch);
    }
    let inc = sampler.sample_increment(dt)?;
    exact_ou_update(q, v, &inc)
}

/// One step of `kind` applied to `u`.
pub fn scheme_step(
    model: &ModelSpec,
    kind: SchemeKind,
    u: &SpectralField,
    inc: &NoiseIncrement,
) -> Result<SpectralField> {
    match kind {
        SchemeKind::EulerMaruyama => em_step(model, u, inc),
        SchemeKind::HeunStratonovich => heun_strat_step(model, u, inc),
        SchemeKind::ExponentialEuler => exp_euler_step(model, u, inc),
        SchemeKind::ExactOU => match model {
            ModelSpec::AdditiveHeat { q } => exact_ou_update(q, u, inc),
            _ => Err(Error::WrongModel {
                expected: "AdditiveHeat",
                got: model.name(),
            }),
        },
    }
}

/// Number of steps of size `dt` covering `[0, t]`.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidStep(dt));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(Error::InvalidTimeGrid(format!(
            "dt = {dt} does not divide T = {t}"
        )));
    }
    Ok(n as usize)
}

fn blown_up(u: &SpectralField) -> bool {
    !u.is_finite() || u.l2_norm() > BLOW_UP_THRESHOLD
}

fn run(
    model: &ModelSpec,
    kind: SchemeKind,
    u0: &SpectralField,
    times: impl Iterator<Item = f64>,
    mut next: impl FnMut() -> Result<NoiseIncrement>,
) -> Result<SamplePath> {
    let mut path = SamplePath::new(model.name(), u0.clone());
    let mut u = u0.clone();
    for t in times {
        let inc = next()?;
        u = scheme_step(model, kind, &u, &inc)?;
        if blown_up(&u) {
            return Err(Error::BlowUp { time: t });
        }
        path.push(t, u.clone(), inc);
    }
    Ok(path)
}

/// Integrates `model` from `u0` up to `t_end` with increments drawn from `sampler`.
pub fn simulate(
    model: &ModelSpec,
    scheme: &SchemeSpec,
    u0: &SpectralField,
    t_end: f64,
    sampler: &mut NoiseSampler,
) -> Result<SamplePath> {
    scheme.supports(model)?;
    if sampler.grid() != u0.grid() {
        return Err(Error::GridMismatch);
    }
    let n = step_count(t_end, scheme.dt)?;
    let dt = scheme.dt;
    let times = (1..=n).map(move |i| if i == n { t_end } else { i as f64 * dt });
    run(model, scheme.kind, u0, times, || sampler.sample_increment(dt))
}

/// Integrates `model` along a prescribed sequence of increments.
pub fn integrate(
    model: &ModelSpec,
    kind: SchemeKind,
    u0: &SpectralField,
    increments: &[NoiseIncrement],
) -> Result<SamplePath> {
    SchemeSpec::new(kind, increments.first().map_or(1.0, |i| i.dt))?.supports(model)?;
    let mut t = 0.0;
    let times: Vec<f64> = increments
        .iter()
        .map(|inc| {
            t += inc.dt;
            t
        })
        .collect();
    let mut iter = increments.iter();
    run(model, kind, u0, times.into_iter(), || {
        Ok(iter.next().expect("one increment per time").clone())
    })
}

/// Increments for `n` steps of size `dt` from a fresh copy of `sampler`.
pub fn draw_increments(sampler: &NoiseSampler, n: usize, dt: f64) -> Result<Vec<NoiseIncrement>> {
    (0..n as u64).map(|s| sampler.increment_at(s, dt)).collect()
}

/// Aggregates consecutive groups of `factor` fine increments.
pub fn coarsen(increments: &[NoiseIncrement], factor: usize) -> Result<Vec<NoiseIncrement>> {
    if factor == 0 || !increments.len().is_multiple_of(factor) {
        return Err(Error::PartitionMisaligned {
            intervals: increments.len() / factor.max(1),
            steps: increments.len(),
        });
    }
    increments.chunks(factor).map(NoiseIncrement::aggregate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TorusGrid;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cos(g: TorusGrid) -> SpectralField {
        SpectralField::from_modes(g, &[(1, c(0.5, 0.0))]).unwrap()
    }

    fn sin(g: TorusGrid) -> SpectralField {
        SpectralField::from_modes(g, &[(1, c(0.0, -0.5))]).unwrap()
    }

    #[test]
    fn em_examples() {
        let g = TorusGrid::with_modes(4);
        let ah = ModelSpec::additive_heat(CovarianceSpec::zero(g)).unwrap();
        let k = SpectralField::constant(g, 2.0);
        let inc = NoiseIncrement::zero(g, 0.01, 0);
        assert_eq!(em_step(&ah, &k, &inc).unwrap(), k);

        let heat = ModelSpec::transport_heat(vec![0.0]).unwrap();
        let dt = 1e-3;
        let e1 = SpectralField::from_modes(g, &[(1, c(1.0, 0.0))]).unwrap();
        let out = em_step(&heat, &e1, &NoiseIncrement::zero(g, dt, 1)).unwrap();
        assert!((out.amp(1).re - (1.0 - (2.0 * PI).powi(2) * dt)).abs() < 1e-15);

        let white = ModelSpec::additive_heat(CovarianceSpec::white(g)).unwrap();
        let inc = white.noise_sampler(g, 3, 0).unwrap().increment_at(0, dt).unwrap();
        let out = em_step(&white, &SpectralField::zeros(g), &inc).unwrap();
        assert_eq!(out, inc.field);
    }

    #[test]
    fn heun_examples() {
        let g = TorusGrid::with_modes(8);
        let sigma = 1.3;
        let th = ModelSpec::transport_heat(vec![sigma]).unwrap();
        let u = cos(g).add(&SpectralField::from_modes(g, &[(3, c(0.1, 0.4))]).unwrap()).unwrap();
        let dt = 1e-4;
        let out = heun_strat_step(&th, &u, &NoiseIncrement::zero(g, dt, 1)).unwrap();
        let mut expected = u.clone();
        expected.axpy((1.0 - sigma / 2.0) * dt, &u.laplacian());
        assert!(out.max_abs_diff(&expected) < 1e-15);

        let heat = ModelSpec::transport_heat(vec![0.0]).unwrap();
        let mut inc = NoiseIncrement::zero(g, dt, 1);
        inc.scalar[0] = 0.7;
        let a = heun_strat_step(&heat, &u, &inc).unwrap();
        let b = em_step(&heat, &u, &inc).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);

        let ah = ModelSpec::additive_heat(CovarianceSpec::zero(g)).unwrap();
        assert!(matches!(
            heun_strat_step(&ah, &u, &inc),
            Err(Error::WrongModel { .. })
        ));
    }

    #[test]
    fn heun_is_second_order_in_the_noise() {
        // For a single mode the Stratonovich flow of the noise term is a rotation
        // u_1 -> u_1 exp(i 2π √σ Δβ); Heun matches it to O(Δβ³).
        let g = TorusGrid::with_modes(4);
        let th = ModelSpec::transport_heat(vec![1.0]).unwrap();
        let u = cos(g);
        let mut errs = Vec::new();
        for db in [1e-2, 5e-3] {
            let mut inc = NoiseIncrement::zero(g, 1e-300, 1);
            inc.scalar[0] = db;
            let out = heun_strat_step(&th, &u, &inc).unwrap();
            let exact = u.amp(1) * Complex64::from_polar(1.0, 2.0 * PI * db);
            errs.push((out.amp(1) - exact).norm());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 3.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn exp_euler_heat_is_exact() {
        let g = TorusGrid::with_modes(8);
        let heat = ModelSpec::transport_heat(vec![0.0]).unwrap();
        let u = SpectralField::from_modes(g, &[(2, c(1.0, 0.5)), (5, c(-0.2, 0.0))]).unwrap();
        let dt = 0.37;
        let out = exp_euler_step(&heat, &u, &NoiseIncrement::zero(g, dt, 1)).unwrap();
        for k in [2i64, 5] {
            let factor = (-laplacian_eigenvalue(k) * dt).exp();
            assert!((out.amp(k) - u.amp(k) * factor).norm() < 1e-16);
        }
    }

    #[test]
    fn exp_euler_small_step_is_near_identity() {
        let g = TorusGrid::with_modes(8);
        let b = ModelSpec::burgers(CovarianceSpec::zero(g)).unwrap();
        let u = sin(g);
        let d1 = exp_euler_step(&b, &u, &NoiseIncrement::zero(g, 1e-6, 0)).unwrap().sub(&u).unwrap().l2_norm();
        let d2 = exp_euler_step(&b, &u, &NoiseIncrement::zero(g, 5e-7, 0)).unwrap().sub(&u).unwrap().l2_norm();
        assert!((d1 / d2 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn deterministic_burgers_self_convergence() {
        let g = TorusGrid::with_modes(32);
        let b = ModelSpec::burgers(CovarianceSpec::zero(g)).unwrap();
        let u0 = sin(g).scale(2.0);
        let t = 0.1;
        let dt = 1e-4;
        let run = |dt: f64| {
            let mut s = b.noise_sampler(g, 0, 0).unwrap();
            let scheme = SchemeSpec::new(SchemeKind::ExponentialEuler, dt).unwrap();
            simulate(&b, &scheme, &u0, t, &mut s).unwrap().final_state().clone()
        };
        let coarse = run(dt);
        let fine = run(dt / 64.0);
        let rel = coarse.sub(&fine).unwrap().l2_norm() / fine.l2_norm();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn exact_ou_limits() {
        let g = TorusGrid::with_modes(2);
        let q = CovarianceSpec::list(g, &[1.0, 1.0, 0.5]).unwrap();
        let mu1 = laplacian_eigenvalue(1);
        let n = 10_000;
        // long step: stationary variance λ/(2μ)
        let dt = 10.0;
        let mut sampler = NoiseSampler::new(q.clone(), 8, 0);
        let v0 = SpectralField::zeros(g);
        let xs: Vec<f64> = (0..n)
            .map(|_| exact_ou_step(&q, &v0, dt, &mut sampler).unwrap().amp(1).norm_sqr())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((mean - 1.0 / (2.0 * mu1)).abs() < 3.0 * se);

        let zero = CovarianceSpec::zero(g);
        let mut s = NoiseSampler::new(zero.clone(), 1, 0);
        assert_eq!(exact_ou_step(&zero, &v0, 0.1, &mut s).unwrap(), v0);
        assert!(exact_ou_step(&zero, &v0, 0.0, &mut s).is_err());
    }

    #[test]
    fn simulate_examples() {
        let g = TorusGrid::with_modes(8);
        let heat = ModelSpec::transport_heat(vec![0.0]).unwrap();
        let mut s = heat.noise_sampler(g, 1, 0).unwrap();
        let scheme = SchemeSpec::new(SchemeKind::ExponentialEuler, 0.01).unwrap();
        let p = simulate(&heat, &scheme, &cos(g), 0.0, &mut s).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.steps(), 0);

        let t = 0.05;
        let p = simulate(&heat, &scheme, &cos(g), t, &mut s).unwrap();
        assert_eq!(p.len(), 6);
        let expected = cos(g).scale((-(2.0 * PI).powi(2) * t).exp());
        assert!(p.final_state().max_abs_diff(&expected) < 1e-15);
        assert_eq!(p.horizon(), t);

        assert!(matches!(
            simulate(&heat, &scheme, &cos(g), 0.015, &mut s),
            Err(Error::InvalidTimeGrid(_))
        ));
        let ou = SchemeSpec::new(SchemeKind::ExactOU, 0.01).unwrap();
        assert!(matches!(
            simulate(&heat, &ou, &cos(g), 0.05, &mut s),
            Err(Error::WrongModel { .. })
        ));
    }

    #[test]
    fn focusing_reaction_blows_up() {
        let g = TorusGrid::with_modes(8);
        let rd = ModelSpec::reaction_diffusion(1.0, 4, CovarianceSpec::zero(g)).unwrap();
        let mut s = rd.noise_sampler(g, 1, 0).unwrap();
        let scheme = SchemeSpec::new(SchemeKind::ExponentialEuler, 1e-4).unwrap();
        let u0 = cos(g).scale(100.0);
        match simulate(&rd, &scheme, &u0, 1.0, &mut s) {
            Err(Error::BlowUp { time }) => assert!(time < 1.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_and_mean_preserving() {
        let g = TorusGrid::with_modes(16);
        let th = ModelSpec::transport_heat(vec![0.6, 0.4]).unwrap();
        let u0 = cos(g).add(&SpectralField::constant(g, 0.3)).unwrap();
        for kind in [
            SchemeKind::EulerMaruyama,
            SchemeKind::HeunStratonovich,
            SchemeKind::ExponentialEuler,
        ] {
            let scheme = SchemeSpec::new(kind, 1e-4).unwrap();
            let mut s1 = th.noise_sampler(g, 5, 2).unwrap();
            let mut s2 = th.noise_sampler(g, 5, 2).unwrap();
            let a = simulate(&th, &scheme, &u0, 0.01, &mut s1).unwrap();
            let b = simulate(&th, &scheme, &u0, 0.01, &mut s2).unwrap();
            assert_eq!(a, b);
            assert!(a.states.iter().all(|u| u.amp(0) == u0.amp(0)));
        }
    }

    #[test]
    fn integrate_matches_simulate() {
        let g = TorusGrid::with_modes(8);
        let ah = ModelSpec::additive_heat(CovarianceSpec::power(g, 1.0).unwrap()).unwrap();
        let scheme = SchemeSpec::new(SchemeKind::ExponentialEuler, 1e-3).unwrap();
        let mut s = ah.noise_sampler(g, 4, 1).unwrap();
        let a = simulate(&ah, &scheme, &cos(g), 0.02, &mut s).unwrap();
        let b = integrate(&ah, SchemeKind::ExponentialEuler, &cos(g), &a.increments).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn coarsened_exact_ou_matches_fine_path() {
        let g = TorusGrid::with_modes(8);
        let q = CovarianceSpec::white(g);
        let ah = ModelSpec::additive_heat(q).unwrap();
        let s = ah.noise_sampler(g, 2, 0).unwrap();
        let fine = draw_increments(&s, 16, 1e-3).unwrap();
        let u0 = cos(g);
        let a = integrate(&ah, SchemeKind::ExactOU, &u0, &fine).unwrap();
        let b = integrate(&ah, SchemeKind::ExactOU, &u0, &coarsen(&fine, 4).unwrap()).unwrap();
        assert!(a.final_state().max_abs_diff(b.final_state()) < 1e-12);
        assert!(coarsen(&fine, 3).is_err());
    }
}
