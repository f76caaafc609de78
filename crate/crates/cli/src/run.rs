//! Orchestration of the three subcommands over the core library.

use std::path::{Path, PathBuf};

use bompc_core::bo::{run_bo, BoSettings, BoTrace, ParamDomain};
use bompc_core::ecm::{CellParams, EcmState};
use bompc_core::harness::{
    backoff_domain, case_backoff, case_model, make_mismatch, model_domain, model_theta0,
    run_episode, EpisodeResult, MismatchSpec, CASE_KNOT_COUNT,
};
use bompc_core::ocp::OcpConfig;

use crate::config::{Case, RunConfig};
use crate::io::{
    render_bo_trace, render_trajectory, write_atomic, Summary, ThetaFile,
};
use crate::{log_debug, log_info, CliError};

/// Everything a run needs once the configuration is resolved.
pub struct Setup {
    pub cfg: RunConfig,
    pub plant: CellParams,
    pub prediction: CellParams,
    pub base: OcpConfig,
    pub x_init: EcmState,
}

impl Setup {
    pub fn build(cfg: RunConfig) -> Result<Self, CliError> {
        let constants = cfg.cell_constants();
        let plant = if cfg.cell_table == "builtin" {
            CellParams::builtin_with(constants)
        } else {
            CellParams::from_csv_path(Path::new(&cfg.cell_table), constants)
        }
        .map_err(|e| CliError::Config(format!("cell table: {e}")))?;
        for warning in plant.validation_warnings() {
            log_info(&format!("cell table warning: {warning}"));
        }

        let prediction = if cfg.mismatch {
            let mut spec = MismatchSpec::new(cfg.mismatch_seed, cfg.mismatch_delta)
                .map_err(|e| CliError::Config(e.to_string()))?;
            spec.curves = cfg.mismatch_params;
            spec.mode = cfg.mismatch_mode;
            make_mismatch(&plant, &spec).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            plant.clone()
        };

        let base = OcpConfig::new(prediction.clone(), cfg.horizon, cfg.ts_s)
            .and_then(|c| c.with_penalty_weight(cfg.lambda))
            .and_then(|c| c.with_input_reg(cfg.epsilon))
            .and_then(|c| c.with_input_bounds(0.0, cfg.i_max_a))
            .map_err(|e| CliError::Config(e.to_string()))?;

        let x_init = EcmState::new(cfg.soc_init, cfg.u1_init);
        Ok(Self { cfg, plant, prediction, base, x_init })
    }

    /// Tuning domain of the configured case.
    pub fn domain(&self) -> Result<ParamDomain, CliError> {
        match self.cfg.case {
            Case::Nominal => Err(CliError::Config(
                "case `nominal` has no tuning parameters".into(),
            )),
            Case::Backoff => backoff_domain(self.cfg.backoff_max_v)
                .map_err(|e| CliError::Config(e.to_string())),
            Case::Model => model_domain(&self.plant, self.cfg.r1_mult_lo, self.cfg.r1_mult_hi)
                .map_err(|e| CliError::Config(e.to_string())),
        }
    }

    /// Default parameter vector of the configured case.
    pub fn theta0(&self) -> Vec<f64> {
        match self.cfg.case {
            Case::Nominal => Vec::new(),
            Case::Backoff => vec![0.0; CASE_KNOT_COUNT],
            Case::Model => model_theta0(&self.prediction),
        }
    }

    /// Controller configuration for a parameter vector of the configured
    /// case. Dimension errors are configuration errors.
    pub fn controller_for(&self, theta: &[f64]) -> Result<OcpConfig, CliError> {
        match self.cfg.case {
            Case::Nominal => {
                if theta.is_empty() {
                    Ok(self.base.clone())
                } else {
                    Err(CliError::Config(format!(
                        "case `nominal` takes no parameters, got {}",
                        theta.len()
                    )))
                }
            }
            Case::Backoff | Case::Model => {
                let domain = self.domain()?;
                let build = match self.cfg.case {
                    Case::Backoff => case_backoff(theta, &self.base, &domain),
                    Case::Model => case_model(theta, &self.base, &domain),
                    Case::Nominal => unreachable!(),
                }
                .map_err(|e| CliError::Config(e.to_string()))?;
                if build.clipped {
                    log_info("parameter vector was clipped into the tuning domain");
                }
                Ok(build.cfg)
            }
        }
    }

    pub fn episode(&self, controller: &OcpConfig) -> Result<EpisodeResult, CliError> {
        run_episode(&self.plant, controller, self.x_init, self.cfg.steps, self.cfg.c1)
            .map_err(|e| CliError::Runtime(format!("episode failed: {e}")))
    }

    /// Run the tuning loop for the configured case.
    pub fn tune(&self, seed: u64) -> Result<BoTrace, CliError> {
        let domain = self.domain()?;
        let settings = BoSettings::new(
            self.cfg.bo_n_init + self.cfg.bo_budget,
            self.cfg.bo_n_init,
            seed,
        )
        .with_theta0(self.theta0());
        let objective = |theta: &[f64]| -> Option<f64> {
            let controller = self.controller_for(theta).ok()?;
            let episode = self.episode(&controller).ok()?;
            if episode.failed {
                return None;
            }
            log_debug(&format!(
                "episode G {:.6}, max violation {:.4} V",
                episode.objective, episode.max_violation_v
            ));
            Some(episode.objective)
        };
        run_bo(objective, &domain, &settings).map_err(|e| CliError::Runtime(e.to_string()))
    }
}

/// Refuse to overwrite existing outputs unless forced.
pub fn ensure_writable(out_dir: &Path, files: &[&str], force: bool) -> Result<(), CliError> {
    for file in files {
        let path = out_dir.join(file);
        if path.exists() && !force {
            return Err(CliError::Config(format!(
                "output {} exists; pass --force to overwrite",
                path.display()
            )));
        }
    }
    Ok(())
}

fn write_episode_files(
    out_dir: &Path,
    trajectory_name: &str,
    summary_name: Option<&str>,
    case: &str,
    episode: &EpisodeResult,
) -> Result<(), CliError> {
    write_atomic(&out_dir.join(trajectory_name), &render_trajectory(episode))?;
    if let Some(name) = summary_name {
        let summary = Summary::from_episode(case, episode);
        write_atomic(&out_dir.join(name), &summary.render()?)?;
    }
    Ok(())
}

/// `simulate`: one closed-loop episode at the case's default parameters.
pub fn cmd_simulate(cfg: RunConfig, out_dir: PathBuf, force: bool) -> Result<(), CliError> {
    ensure_writable(&out_dir, &["trajectory.csv", "summary.json"], force)?;
    let setup = Setup::build(cfg)?;
    let controller = setup.controller_for(&setup.theta0())?;
    let episode = setup.episode(&controller)?;
    write_episode_files(
        &out_dir,
        "trajectory.csv",
        Some("summary.json"),
        setup.cfg.case.as_str(),
        &episode,
    )?;
    log_info(&format!(
        "simulate: G {:.6}, max violation {:.4} V, final soc {:.4}",
        episode.objective,
        episode.max_violation_v,
        episode.states.last().map(|s| s.soc).unwrap_or(f64::NAN)
    ));
    if episode.failed {
        return Err(CliError::Runtime("episode failed mid-run; partial trajectory written".into()));
    }
    Ok(())
}

/// `tune`: Bayesian optimization over the case's parameter domain.
pub fn cmd_tune(
    cfg: RunConfig,
    out_dir: PathBuf,
    seed_override: Option<u64>,
    force: bool,
) -> Result<(), CliError> {
    if cfg.case == Case::Nominal {
        return Err(CliError::Config("tune requires case = backoff or model".into()));
    }
    ensure_writable(
        &out_dir,
        &["bo_trace.jsonl", "best_theta.json", "trajectory_best.csv"],
        force,
    )?;
    let seed = seed_override.unwrap_or(cfg.bo_seed);
    let setup = Setup::build(cfg)?;
    log_info(&format!(
        "tune: case {}, {} episodes ({} initial), seed {seed}",
        setup.cfg.case.as_str(),
        setup.cfg.bo_n_init + setup.cfg.bo_budget,
        setup.cfg.bo_n_init
    ));
    let trace = setup.tune(seed)?;
    let best = trace
        .best()
        .ok_or_else(|| CliError::Runtime("every tuning episode failed".into()))?
        .clone();

    write_atomic(&out_dir.join("bo_trace.jsonl"), &render_bo_trace(&trace))?;
    let theta_file = ThetaFile {
        case: setup.cfg.case.as_str().to_string(),
        theta: best.theta.clone(),
        g: best.objective,
    };
    write_atomic(&out_dir.join("best_theta.json"), &theta_file.render()?)?;

    let controller = setup.controller_for(&best.theta)?;
    let episode = setup.episode(&controller)?;
    write_episode_files(&out_dir, "trajectory_best.csv", None, setup.cfg.case.as_str(), &episode)?;
    log_info(&format!(
        "tune: best G {:.6} at evaluation {}, re-run max violation {:.4} V",
        best.objective, best.n, episode.max_violation_v
    ));
    Ok(())
}

/// `eval`: one episode at a saved parameter vector; prints a one-line JSON
/// summary on stdout.
pub fn cmd_eval(
    cfg: RunConfig,
    out_dir: PathBuf,
    theta: Vec<f64>,
    force: bool,
) -> Result<(), CliError> {
    ensure_writable(&out_dir, &["trajectory.csv", "summary.json"], force)?;
    let setup = Setup::build(cfg)?;
    let controller = setup.controller_for(&theta)?;
    let episode = setup.episode(&controller)?;
    write_episode_files(
        &out_dir,
        "trajectory.csv",
        Some("summary.json"),
        setup.cfg.case.as_str(),
        &episode,
    )?;
    let t95 = episode.time_to_soc_s[2]
        .map(|t| t.to_string())
        .unwrap_or_else(|| "null".into());
    println!(
        "{{\"g\":{},\"max_violation_v\":{},\"time_to_soc95_s\":{}}}",
        episode.objective, episode.max_violation_v, t95
    );
    if episode.failed {
        return Err(CliError::Runtime("episode failed mid-run; partial trajectory written".into()));
    }
    Ok(())
}
