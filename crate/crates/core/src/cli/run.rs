//! The four subcommands. Work fans out over rayon; every file is written afterwards
//! from a single thread, in a fixed order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use super::config::{ConfigError, ModelKind, RunConfig};
use super::{EXIT_CONFIG, EXIT_NUMERICAL};
use crate::burgers::{self, BurgersProblem, SplitSolution};
use crate::error::Error;
use crate::integrators::{simulate, SamplePath};
use crate::models::ModelSpec;
use crate::noise::CovarianceKind;
use crate::spectral::{RandomFieldSpec, SpectralField};
use crate::verify::{self, Criterion, McConfig, StatReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("{0}")]
    Invalid(Error),
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. } | Error::PicardDiverged { .. } => Self::Numerical(e),
            other => Self::Invalid(other),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

type RResult<T> = std::result::Result<T, RunError>;

/// Files written by a command and whether all its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub all_passed: bool,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> RResult<Self> {
        let dir = &cfg.output.dir;
        std::fs::create_dir_all(dir).map_err(|e| RunError::Io {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            cfg,
            files: Vec::new(),
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.cfg
            .output
            .dir
            .join(format!("{}_{suffix}", self.cfg.output.prefix))
    }

    fn write(&mut self, suffix: &str, body: &str) -> RResult<()> {
        let path = self.path(suffix);
        std::fs::write(&path, body).map_err(|e| RunError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, command: &str, all_passed: bool) -> RResult<CommandOutput> {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let names: Vec<String> = self
            .files
            .iter()
            .filter_map(|p| file_name(p))
            .collect();
        let manifest = json!({
            "command": command,
            "config_hash": self.cfg.hash,
            "seed": self.cfg.experiment.base_seed,
            "files": names,
            "all_passed": all_passed,
            "timestamp": timestamp,
        });
        let body = serde_json::to_string_pretty(&manifest).expect("json value") + "\n";
        self.write("manifest.json", &body)?;
        Ok(CommandOutput {
            files: self.files,
            all_passed,
        })
    }
}

fn file_name(p: &Path) -> Option<String> {
    p.file_name().map(|n| n.to_string_lossy().into_owned())
}

fn e(v: f64) -> String {
    format!("{v:.16e}")
}

fn report_csv(reports: &[StatReport]) -> String {
    let mut body = String::from(StatReport::CSV_HEADER);
    body.push('\n');
    for r in reports {
        body.push_str(&r.csv_row());
        body.push('\n');
    }
    body
}

fn simulate_paths(cfg: &RunConfig) -> RResult<Vec<SamplePath>> {
    let scheme = cfg.require_scheme()?;
    let u0 = cfg.initial_state();
    let seed = cfg.experiment.base_seed;
    let paths: crate::Result<Vec<SamplePath>> = (0..cfg.experiment.n_paths as u64)
        .into_par_iter()
        .map(|stream| {
            let mut sampler = cfg.model.noise_sampler(cfg.grid, seed, stream)?;
            simulate(&cfg.model, &scheme, &u0, cfg.experiment.t_end, &mut sampler)
        })
        .collect();
    Ok(paths?)
}

/// Writes `t, l2, h1, mode0` for every snapshot of every path, plus optional spectra.
pub fn run_simulate(cfg: &RunConfig) -> RResult<CommandOutput> {
    let paths = simulate_paths(cfg)?;
    let mut out = Writer::new(cfg)?;
    for (i, path) in paths.iter().enumerate() {
        let mut body = String::from("t,l2,h1,mode0\n");
        for (t, u) in path.times.iter().zip(&path.states) {
            let _ = writeln!(
                body,
                "{},{},{},{}",
                e(*t),
                e(u.l2_norm()),
                e(u.sobolev_norm(1.0)),
                e(u.mean())
            );
        }
        out.write(&format!("path{i:03}_norms.csv"), &body)?;
        if cfg.experiment.spectra {
            out.write(&format!("path{i:03}_spectra.csv"), &spectra_csv(path))?;
        }
    }
    out.finish("simulate", true)
}

fn spectra_csv(path: &SamplePath) -> String {
    let k_max = path.initial().grid().n_modes();
    let mut body = String::from("t");
    for k in 0..=k_max {
        let _ = write!(body, ",re{k},im{k}");
    }
    body.push('\n');
    for (t, u) in path.times.iter().zip(&path.states) {
        body.push_str(&e(*t));
        for c in u.coefficients() {
            let _ = write!(body, ",{},{}", e(c.re), e(c.im));
        }
        body.push('\n');
    }
    body
}

fn mc_config(cfg: &RunConfig) -> RResult<McConfig> {
    McConfig::new(cfg.experiment.n_paths, cfg.experiment.base_seed)
        .map(|c| c.with_tolerance(cfg.experiment.tolerance))
        .map_err(|e| ConfigError::new("experiment.n_paths", e.to_string()).into())
}

/// Worst of a family of per-path reports: the first failing one, else the largest estimate.
fn worst_of(name: &str, reports: Vec<StatReport>) -> StatReport {
    let n = reports.len();
    if n == 0 {
        return StatReport::skipped(name, "no paths");
    }
    let pick = reports.iter().position(|r| !r.passed()).unwrap_or_else(|| {
        (0..n)
            .max_by(|&a, &b| reports[a].estimate.total_cmp(&reports[b].estimate))
            .expect("non-empty")
    });
    let mut r = reports.into_iter().nth(pick).expect("non-empty");
    r.name = name.to_string();
    r.n = n;
    r.with_meta("worst_path", pick)
}

fn needs_additive(cfg: &RunConfig, name: &str) -> Option<StatReport> {
    if cfg.model_kind == ModelKind::TransportHeat {
        Some(StatReport::skipped(name, "model has no additive noise"))
    } else {
        None
    }
}

fn needs_trace_class(cfg: &RunConfig, name: &str) -> Option<StatReport> {
    needs_additive(cfg, name).or_else(|| {
        (cfg.noise.kind() == CovarianceKind::White)
            .then(|| StatReport::skipped(name, "white noise is not trace class"))
    })
}

fn field_ensemble(cfg: &RunConfig, n: usize) -> Vec<SpectralField> {
    let spec = RandomFieldSpec {
        max_mode: cfg.grid.n_modes().min(8),
        ..RandomFieldSpec::default()
    };
    verify::random_field_ensemble(cfg.grid, n, cfg.experiment.base_seed, &spec)
}

fn cos_mode(cfg: &RunConfig, k: i64, a: f64) -> RResult<SpectralField> {
    Ok(SpectralField::from_modes(
        cfg.grid,
        &[(k.min(cfg.grid.n_modes() as i64), Complex64::new(0.5 * a, 0.0))],
    )?)
}

fn run_check(cfg: &RunConfig, name: &str, paths: &mut Option<Vec<SamplePath>>) -> RResult<Vec<StatReport>> {
    let exp = &cfg.experiment;
    let seed = exp.base_seed;
    let with_paths = |paths: &mut Option<Vec<SamplePath>>| -> RResult<Vec<SamplePath>> {
        if paths.is_none() {
            *paths = Some(simulate_paths(cfg)?);
        }
        Ok(paths.clone().expect("just filled"))
    };
    let seeded = |r: StatReport| r.with_meta("seed", seed);
    let one = |r: StatReport| vec![r];
    Ok(match name {
        "mass_conservation" => {
            if !matches!(cfg.model_kind, ModelKind::TransportHeat | ModelKind::Burgers) {
                one(StatReport::skipped(name, "mean is not conserved by this model"))
            } else {
                let reports = with_paths(paths)?
                    .iter()
                    .map(verify::mass_conservation_check)
                    .collect();
                one(seeded(worst_of(name, reports)))
            }
        }
        "energy_identity" => match cfg.sigma() {
            None => one(StatReport::skipped(name, "requires transport_heat")),
            Some(sigma) => {
                let reports = with_paths(paths)?
                    .iter()
                    .map(|p| verify::energy_identity_residual(p, sigma))
                    .collect::<crate::Result<Vec<_>>>()?;
                one(seeded(worst_of(name, reports)))
            }
        },
        "gronwall" => match cfg.sigma() {
            None => one(StatReport::skipped(name, "requires transport_heat")),
            Some(sigma) if sigma >= 2.0 => one(seeded(StatReport::skipped(name, "sigma >= 2"))),
            Some(sigma) => {
                let reports = with_paths(paths)?
                    .iter()
                    .map(|p| verify::gronwall_check(p, sigma))
                    .collect::<crate::Result<Vec<_>>>()?;
                one(seeded(worst_of(name, reports)))
            }
        },
        "ito_isometry" => match needs_additive(cfg, name) {
            Some(r) => one(r),
            None => {
                let phi: Vec<f64> = (0..=cfg.grid.n_modes())
                    .map(|k| 1.0 / k.max(1) as f64)
                    .collect();
                one(verify::ito_isometry_mc(&cfg.noise, &phi, exp.t_end, &mc_config(cfg)?)?)
            }
        },
        "wiener_covariance" => match needs_additive(cfg, name) {
            Some(r) => one(r),
            None => {
                let h = cos_mode(cfg, 1, 1.0)?;
                let g = h.add(&cos_mode(cfg, 2, 0.5)?)?;
                one(verify::wiener_covariance_mc(
                    &cfg.noise,
                    &h,
                    &g,
                    exp.s,
                    exp.t,
                    &mc_config(cfg)?,
                )?)
            }
        },
        "trace_identity" => match needs_trace_class(cfg, name) {
            Some(r) => one(r),
            None => one(verify::trace_identity_mc(&cfg.noise, exp.t_end, &mc_config(cfg)?)?),
        },
        "gaussian_moment" => match needs_trace_class(cfg, name) {
            Some(r) => one(r),
            None => one(verify::gaussian_moment_ratio(&cfg.noise, &mc_config(cfg)?)?),
        },
        "ou_variance" => match needs_additive(cfg, name) {
            Some(r) => one(r),
            None => {
                let dt = cfg.require_scheme()?.dt;
                let modes: Vec<usize> = [0, 1, 8]
                    .into_iter()
                    .filter(|&k| k <= cfg.grid.n_modes())
                    .collect();
                verify::ou_variance_mc(&cfg.noise, &modes, dt, &mc_config(cfg)?)?
            }
        },
        "quadratic_variation" => {
            let n = 1usize << 14;
            let levels: Vec<usize> = (10..=14).map(|j| 1usize << j).collect();
            let t = if exp.t_end > 0.0 { exp.t_end } else { 1.0 };
            let reports = (0..exp.n_paths as u64)
                .into_par_iter()
                .map(|stream| {
                    let b = verify::brownian_samples(seed, stream, n, t)?;
                    verify::quadratic_variation_partition(&b, &levels, t, 0.05)
                })
                .collect::<crate::Result<Vec<_>>>()?;
            let ok = reports.iter().filter(|r| r.passed()).count();
            one(StatReport::new(
                name,
                ok as f64,
                exp.n_paths as f64,
                Criterion::AtLeast {
                    threshold: (0.9 * exp.n_paths as f64).ceil(),
                },
            )
            .with_se(0.0, exp.n_paths)
            .with_meta("seed", seed)
            .with_meta("horizon", t))
        }
        "she_increment" => {
            let alpha = exp.alphas.first().copied().unwrap_or(0.0);
            one(verify::she_increment_mc(
                alpha,
                cfg.grid.n_modes(),
                exp.s,
                exp.t,
                &mc_config(cfg)?,
            )?)
        }
        "holder_exponent" => holder_reports(cfg)?,
        "ito_strat" => match cfg.sigma() {
            None => one(StatReport::skipped(name, "requires transport_heat")),
            Some(sigma) => {
                let dt = cfg.require_scheme()?.dt;
                let dts = [4.0 * dt, 2.0 * dt, dt];
                one(verify::ito_strat_ensemble(
                    sigma,
                    &cfg.initial_state(),
                    &dts,
                    exp.t_end,
                    &mc_config(cfg)?,
                )?)
            }
        },
        "coercivity" => {
            let fields = field_ensemble(cfg, exp.ensemble);
            let expect_hold = cfg.sigma().is_none_or(|s| s < 2.0);
            one(seeded(verify::coercivity_sweep(
                &cfg.model,
                exp.alpha,
                &fields,
                expect_hold,
            )?))
        }
        "monotonicity" => {
            let fields = field_ensemble(cfg, 2 * exp.ensemble);
            one(seeded(verify::monotonicity_sweep(&cfg.model, &fields)?))
        }
        "growth" => {
            let fields = field_ensemble(cfg, exp.ensemble);
            let mut worst: f64 = 0.0;
            for u in &fields {
                worst = worst.max(cfg.model.growth_check(u)?.lhs);
            }
            one(seeded(
                StatReport::new(name, worst, f64::NAN, Criterion::Informational)
                    .with_se(0.0, fields.len()),
            ))
        }
        "porous_duality" => match &cfg.model {
            ModelSpec::PorousMedium { m, .. } => {
                let fields = field_ensemble(cfg, exp.ensemble);
                one(seeded(verify::porous_duality_sweep(*m, &fields)?))
            }
            _ => one(StatReport::skipped(name, "requires porous_medium")),
        },
        other => {
            return Err(ConfigError::new("experiment.checks", format!("unknown check '{other}'")).into())
        }
    })
}

/// One report row per requested check, in the order listed.
pub fn run_verify(cfg: &RunConfig) -> RResult<CommandOutput> {
    let mut paths = None;
    let mut reports = Vec::new();
    for name in &cfg.experiment.checks {
        reports.extend(run_check(cfg, name, &mut paths)?);
    }
    let all_passed = reports.iter().all(|r| r.outcome() != verify::Outcome::Fail);
    let mut out = Writer::new(cfg)?;
    out.write("report.csv", &report_csv(&reports))?;
    out.finish("verify", all_passed)
}

fn burgers_problem(cfg: &RunConfig) -> RResult<BurgersProblem> {
    if cfg.model_kind != ModelKind::Burgers {
        return Err(ConfigError::new("model.kind", "the burgers command requires kind = \"burgers\"").into());
    }
    let dt = cfg.require_scheme()?.dt;
    let exp = &cfg.experiment;
    let mut problem = BurgersProblem::new(cfg.initial_state(), exp.t_end, dt)?;
    problem.p = exp.p;
    problem.picard_tol = exp.picard_tol;
    problem.picard_maxit = exp.picard_maxit;
    problem.window = exp.window;
    problem.alpha = exp.v_alpha;
    problem.noise = cfg.noise.clone();
    problem.validate()?;
    Ok(problem)
}

fn burgers_csv(problem: &BurgersProblem, sol: &SplitSolution) -> String {
    let per_window = problem.steps_per_window();
    let mut body = String::from("t,v_h_alpha,w_lp,u_l2,picard_iters,residual\n");
    for (n, t) in sol.w_path.times.iter().enumerate() {
        let iters = if n == 0 {
            0
        } else {
            sol.picard_iters[((n - 1) / per_window).min(sol.picard_iters.len() - 1)]
        };
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            e(*t),
            e(sol.v_path.states[n].sobolev_norm(problem.alpha)),
            e(problem.lp_norm(&sol.w_path.states[n])),
            e(sol.u_path.states[n].l2_norm()),
            iters,
            e(sol.residuals[n])
        );
    }
    body
}

/// Per-seed split solutions and an ensemble summary of the a priori ratio.
pub fn run_burgers(cfg: &RunConfig) -> RResult<CommandOutput> {
    let problem = burgers_problem(cfg)?;
    let seed = cfg.experiment.base_seed;
    let solutions = (0..cfg.experiment.n_paths as u64)
        .into_par_iter()
        .map(|stream| burgers::solve(&problem, &problem.sampler(seed, stream)))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut out = Writer::new(cfg)?;
    let mut rows = Vec::new();
    for (i, sol) in solutions.iter().enumerate() {
        out.write(&format!("seed{i:03}.csv"), &burgers_csv(&problem, sol))?;
        rows.push(burgers::apriori_report(&problem, &sol.w_path, &sol.v_path));
    }
    let mut summary = worst_of("apriori_ratio", rows).with_meta("seed", seed);
    let max_iters = solutions
        .iter()
        .flat_map(|s| s.picard_iters.iter().copied())
        .max()
        .unwrap_or(0);
    summary.metadata.insert("max_picard_iters".into(), max_iters.to_string());
    out.write("summary.csv", &report_csv(&[summary]))?;
    out.finish("burgers", true)
}

fn holder_reports(cfg: &RunConfig) -> RResult<Vec<StatReport>> {
    let exp = &cfg.experiment;
    let lags = verify::dyadic_lags(exp.lag_min_exp, exp.lag_max_exp);
    exp.alphas
        .iter()
        .map(|&a| {
            verify::holder_exponent_fit(a, cfg.grid.n_modes(), &lags, exp.base_time)
                .map_err(|e| ConfigError::new("experiment.alphas", e.to_string()).into())
        })
        .collect()
}

/// Hölder fits for every `experiment.alphas` entry plus the underlying structure function.
pub fn run_regularity(cfg: &RunConfig) -> RResult<CommandOutput> {
    let exp = &cfg.experiment;
    let reports = holder_reports(cfg)?;
    let lags = verify::dyadic_lags(exp.lag_min_exp, exp.lag_max_exp);
    let mut structure = String::from("alpha,lag,value\n");
    for &a in &exp.alphas {
        for &h in &lags {
            let v = verify::she_increment_structure(a, cfg.grid.n_modes(), exp.base_time, exp.base_time + h)?;
            let _ = writeln!(structure, "{},{},{}", e(a), e(h), e(v));
        }
    }
    let all_passed = reports.iter().all(|r| r.outcome() != verify::Outcome::Fail);
    let mut out = Writer::new(cfg)?;
    out.write("report.csv", &report_csv(&reports))?;
    out.write("structure.csv", &structure)?;
    out.finish("regularity", all_passed)
}
