//! Pathwise solution of stochastic Burgers by splitting `u = v + w`.
//!
//! `v` solves the linear stochastic heat equation and is sampled exactly; the
//! remainder `w` solves `∂ₜw = Δw + ∂ₓ((w + v)²)` and is found by Picard
//! iteration of its Duhamel map on consecutive time windows.

use crate::error::{Error, Result};
use crate::integrators::{
    draw_increments, integrate, step_count, SamplePath, SchemeKind,
};
use crate::models::ModelSpec;
use crate::noise::{CovarianceSpec, NoiseIncrement, NoiseSampler};
use crate::spectral::{laplacian_eigenvalue, SpectralField, TorusGrid};
use crate::verify::{Criterion, StatReport};

#[derive(Debug, Clone, PartialEq)]
pub struct BurgersProblem {
    pub grid: TorusGrid,
    pub t_end: f64,
    pub dt: f64,
    pub w0: SpectralField,
    /// Integrability exponent of the working norm.
    pub p: f64,
    pub picard_tol: f64,
    pub picard_maxit: usize,
    /// Length of each Picard window.
    pub window: f64,
    /// Regularity index of the `H^α` norm reported for `v`.
    pub alpha: f64,
    pub noise: CovarianceSpec,
}

impl BurgersProblem {
    /// Problem with white noise and the default working parameters
    /// (`p = 4`, tolerance `1e-10`, 25 iterations, window `0.05`, `α = 0.25`).
    pub fn new(w0: SpectralField, t_end: f64, dt: f64) -> Result<Self> {
        let grid = *w0.grid();
        let problem = Self {
            grid,
            t_end,
            dt,
            w0,
            p: 4.0,
            picard_tol: 1e-10,
            picard_maxit: 25,
            window: 0.05,
            alpha: 0.25,
            noise: CovarianceSpec::white(grid),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0) {
            return Err(Error::InvalidExponent(self.p));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.picard_maxit == 0 {
            return Err(Error::InvalidParameter("picard_maxit must be at least 1".into()));
        }
        if !(self.window > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        if *self.w0.grid() != self.grid || *self.noise.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        step_count(self.t_end, self.dt)?;
        Ok(())
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec::Burgers {
            q: self.noise.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        step_count(self.t_end, self.dt).expect("validated")
    }

    pub fn steps_per_window(&self) -> usize {
        ((self.window / self.dt).round() as usize).max(1)
    }

    fn lp_points(&self) -> usize {
        self.grid
            .n_points()
            .max(self.p.ceil() as usize * self.grid.n_modes() + 1)
    }

    pub fn lp_norm(&self, f: &SpectralField) -> f64 {
        f.lp_norm(self.p, self.lp_points()).expect("p >= 2")
    }

    pub fn sampler(&self, seed: u64, stream_id: u64) -> NoiseSampler {
        NoiseSampler::new(self.noise.clone(), seed, stream_id)
    }
}

/// The remainder path together with its Picard diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderSolution {
    pub path: SamplePath,
    /// Picard iterations used in each window.
    pub iterations: Vec<usize>,
    /// Successive-iterate distances in each window.
    pub distances: Vec<Vec<f64>>,
    /// `‖Ψw_t - w_t‖_{L^p}` at every time.
    pub residuals: Vec<f64>,
}

impl RemainderSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSolution {
    pub v_path: SamplePath,
    pub w_path: SamplePath,
    pub u_path: SamplePath,
    pub picard_iters: Vec<usize>,
    pub distances: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Exact sample of `dv = Δv dt + dW`, `v(0) = 0`, on the problem's time grid.
pub fn sample_linear_part(problem: &BurgersProblem, sampler: &NoiseSampler) -> Result<SamplePath> {
    let incs = draw_increments(sampler, problem.steps(), problem.dt)?;
    sample_linear_part_from(problem, &incs)
}

/// Exact linear part along prescribed increments.
pub fn sample_linear_part_from(
    problem: &BurgersProblem,
    increments: &[NoiseIncrement],
) -> Result<SamplePath> {
    let model = ModelSpec::additive_heat(problem.noise.clone())?;
    integrate(
        &model,
        SchemeKind::ExactOU,
        &SpectralField::zeros(problem.grid),
        increments,
    )
}

/// `(1 - e^{-μ dt}) / μ`, the exact weight of a constant forcing over one step.
fn phi1(k: i64, dt: f64) -> f64 {
    let mu = laplacian_eigenvalue(k);
    if mu == 0.0 {
        dt
    } else {
        -(-mu * dt).exp_m1() / mu
    }
}

struct Duhamel<'a> {
    model: ModelSpec,
    dt: f64,
    v: &'a [SpectralField],
}

impl Duhamel<'_> {
    /// One step of `Ψ`: `e^{dtΔ}ψ + φ₁(dtΔ) N(w + v)`.
    fn step(&self, psi: &SpectralField, w: &SpectralField, i: usize) -> Result<SpectralField> {
        let forcing = self.model.nonlinear_part(&w.add(&self.v[i])?)?;
        let dt = self.dt;
        let mut out = psi.heat_semigroup(dt)?;
        out.axpy(1.0, &forcing.apply_real_multiplier(|k| phi1(k, dt)));
        Ok(out)
    }

    /// `Ψ` applied to `w[start..=end]` starting from `w[start]`.
    fn apply(&self, w: &[SpectralField], start: usize, end: usize) -> Result<Vec<SpectralField>> {
        let mut out = Vec::with_capacity(end - start + 1);
        out.push(w[start].clone());
        for i in start..end {
            let next = self.step(&out[i - start], &w[i], i)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Solves the remainder equation along `v_path` by windowed Picard iteration.
pub fn solve_remainder(problem: &BurgersProblem, v_path: &SamplePath) -> Result<RemainderSolution> {
    problem.validate()?;
    if v_path.initial().grid() != &problem.grid {
        return Err(Error::GridMismatch);
    }
    let n = v_path.steps();
    let duhamel = Duhamel {
        model: problem.model(),
        dt: problem.dt,
        v: &v_path.states,
    };
    let mut w: Vec<SpectralField> = vec![problem.w0.clone(); n + 1];
    let mut iterations = Vec::new();
    let mut distances = Vec::new();
    let per_window = problem.steps_per_window();
    let mut start = 0;
    while start < n {
        let end = (start + per_window).min(n);
        let window_index = iterations.len();
        let initial = w[start].clone();
        for item in &mut w[start + 1..=end] {
            item.clone_from(&initial);
        }
        let mut log = Vec::new();
        let mut converged = false;
        for _ in 0..problem.picard_maxit {
            let next = duhamel.apply(&w, start, end)?;
            let mut dist: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for (j, psi) in next.iter().enumerate() {
                if !psi.is_finite() {
                    return Err(Error::PicardDiverged {
                        window: window_index,
                        iterations: log.len() + 1,
                        distance: f64::INFINITY,
                    });
                }
                dist = dist.max(problem.lp_norm(&psi.sub(&w[start + j])?));
                scale = scale.max(problem.lp_norm(psi));
            }
            for (j, psi) in next.into_iter().enumerate() {
                w[start + j] = psi;
            }
            log.push(dist);
            if dist <= problem.picard_tol * scale.max(f64::MIN_POSITIVE) || dist == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged {
                window: window_index,
                iterations: log.len(),
                distance: *log.last().unwrap(),
            });
        }
        iterations.push(log.len());
        distances.push(log);
        start = end;
    }

    let psi = duhamel.apply(&w, 0, n)?;
    let residuals = psi
        .iter()
        .zip(&w)
        .map(|(a, b)| Ok(problem.lp_norm(&a.sub(b)?)))
        .collect::<Result<Vec<f64>>>()?;

    let mut path = SamplePath::new("BurgersRemainder", w[0].clone());
    for (i, state) in w.into_iter().enumerate().skip(1) {
        path.push(
            v_path.times[i],
            state,
            NoiseIncrement::zero(problem.grid, problem.dt, 0),
        );
    }
    Ok(RemainderSolution {
        path,
        iterations,
        distances,
        residuals,
    })
}

/// `u = v + w` snapshot by snapshot; the increments of `v` are kept.
pub fn compose(v_path: &SamplePath, w_path: &SamplePath) -> Result<SamplePath> {
    if v_path.times != w_path.times {
        return Err(Error::InvalidTimeGrid("v and w paths have different times".into()));
    }
    let states = v_path
        .states
        .iter()
        .zip(&w_path.states)
        .map(|(v, w)| v.add(w))
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplePath {
        model: "Burgers",
        times: v_path.times.clone(),
        states,
        increments: v_path.increments.clone(),
    })
}

/// `R = sup_t‖w_t‖_{L^p} / (‖w₀‖_{L^p} + sup_t‖v_t‖_{H^α})`, an empirical constant.
pub fn apriori_report(
    problem: &BurgersProblem,
    w_path: &SamplePath,
    v_path: &SamplePath,
) -> StatReport {
    let sup_w = w_path
        .states
        .iter()
        .map(|w| problem.lp_norm(w))
        .fold(0.0, f64::max);
    let w0 = problem.lp_norm(w_path.initial());
    let sup_v = v_path
        .states
        .iter()
        .map(|v| v.sobolev_norm(problem.alpha))
        .fold(0.0, f64::max);
    let ratio = if sup_w == 0.0 { 0.0 } else { sup_w / (w0 + sup_v) };
    StatReport::new("apriori_ratio", ratio, f64::NAN, Criterion::Informational)
        .with_se(0.0, w_path.len())
        .with_meta("sup_w_lp", format!("{sup_w:.16e}"))
        .with_meta("w0_lp", format!("{w0:.16e}"))
        .with_meta("sup_v_h_alpha", format!("{sup_v:.16e}"))
        .with_meta("p", problem.p)
        .with_meta("alpha", problem.alpha)
}

/// Full pipeline along prescribed increments.
pub fn solve_from(problem: &BurgersProblem, increments: &[NoiseIncrement]) -> Result<SplitSolution> {
    let v_path = sample_linear_part_from(problem, increments)?;
    let rem = solve_remainder(problem, &v_path)?;
    let u_path = compose(&v_path, &rem.path)?;
    Ok(SplitSolution {
        v_path,
        w_path: rem.path,
        u_path,
        picard_iters: rem.iterations,
        distances: rem.distances,
        residuals: rem.residuals,
    })
}

/// Sample `v`, solve for `w` and compose.
pub fn solve(problem: &BurgersProblem, sampler: &NoiseSampler) -> Result<SplitSolution> {
    let incs = draw_increments(sampler, problem.steps(), problem.dt)?;
    solve_from(problem, &incs)
}
