//! On-disk formats: the trajectory CSV, run summary JSON, the tuning trace
//! JSONL, and the saved parameter vector. All writes go through a
//! temp-file-plus-rename so an interrupted run leaves no partial files.

use std::fmt::Write as _;
use std::path::Path;

use bompc_core::bo::BoTrace;
use bompc_core::ecm::EcmState;
use bompc_core::harness::EpisodeResult;

use crate::CliError;

/// Exact header of a trajectory file.
pub const TRAJECTORY_HEADER: &str = "k,t_s,i_a,z,u1_v,vt_v,vt_limit_v";

/// Write `content` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("invalid output path {}", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(&tmp, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Render a trajectory CSV. The final row carries the last state; its
/// input column is written as zero (no input was applied) and its voltage
/// column holds the last step voltage, matching the objective convention.
pub fn render_trajectory(episode: &EpisodeResult) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for (k, state) in episode.states.iter().enumerate() {
        let i_a = episode.inputs.get(k).copied().unwrap_or(0.0);
        let v_t = episode
            .voltages
            .get(k)
            .or(episode.voltages.last())
            .copied()
            .unwrap_or(f64::NAN);
        let limit = episode.upper_limits.get(k).copied().unwrap_or(f64::NAN);
        let t_s = k as f64 * episode.ts_s;
        let _ = writeln!(
            out,
            "{k},{t_s},{i_a},{z},{u1},{v_t},{limit}",
            z = state.soc,
            u1 = state.u1,
        );
    }
    out
}

/// A trajectory file read back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub states: Vec<EcmState>,
    /// Applied currents, one per step (the padded final row is dropped).
    pub inputs: Vec<f64>,
    /// Realized step voltages (the held final row is dropped).
    pub voltages: Vec<f64>,
    pub upper_limits: Vec<f64>,
    pub ts_s: f64,
}

/// Parse a trajectory CSV produced by [`render_trajectory`].
pub fn parse_trajectory(text: &str) -> Result<TrajectoryFile, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != TRAJECTORY_HEADER {
        return Err(CliError::Runtime(format!(
            "trajectory header mismatch: expected `{TRAJECTORY_HEADER}`, got `{header}`"
        )));
    }
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut voltages = Vec::new();
    let mut upper_limits = Vec::new();
    let mut times = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Runtime(format!(
                "trajectory row {}: expected 7 columns, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64, CliError> {
            fields[i].parse::<f64>().map_err(|_| {
                CliError::Runtime(format!(
                    "trajectory row {}: cannot parse `{}`",
                    lineno + 2,
                    fields[i]
                ))
            })
        };
        let k: usize = fields[0].parse().map_err(|_| {
            CliError::Runtime(format!("trajectory row {}: bad step index", lineno + 2))
        })?;
        if k != states.len() {
            return Err(CliError::Runtime(format!(
                "trajectory row {}: step index {k} out of order",
                lineno + 2
            )));
        }
        times.push(num(1)?);
        inputs.push(num(2)?);
        states.push(EcmState::new(num(3)?, num(4)?));
        voltages.push(num(5)?);
        upper_limits.push(num(6)?);
    }
    if states.len() < 2 {
        return Err(CliError::Runtime("trajectory has fewer than 2 rows".into()));
    }
    let ts_s = times[1] - times[0];
    // drop the padded final input/voltage row
    inputs.pop();
    voltages.pop();
    Ok(TrajectoryFile { states, inputs, voltages, upper_limits, ts_s })
}

/// Run summary serialized to `summary.json`.
#[derive(Debug, serde::Serialize)]
pub struct Summary<'a> {
    pub case: &'a str,
    pub g: f64,
    pub max_violation_v: f64,
    pub time_to_soc80_s: Option<f64>,
    pub time_to_soc90_s: Option<f64>,
    pub time_to_soc95_s: Option<f64>,
    pub final_soc: f64,
    pub steps: usize,
    pub failed: bool,
}

impl<'a> Summary<'a> {
    pub fn from_episode(case: &'a str, episode: &EpisodeResult) -> Self {
        Self {
            case,
            g: episode.objective,
            max_violation_v: episode.max_violation_v,
            time_to_soc80_s: episode.time_to_soc_s[0],
            time_to_soc90_s: episode.time_to_soc_s[1],
            time_to_soc95_s: episode.time_to_soc_s[2],
            final_soc: episode.states.last().map(|s| s.soc).unwrap_or(f64::NAN),
            steps: episode.inputs.len(),
            failed: episode.failed,
        }
    }

    pub fn render(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Runtime(format!("cannot serialize summary: {e}")))
    }
}

/// Format a float with 17 significant digits, enough for a bit-exact
/// round-trip through text.
pub fn fmt_f64_exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render the tuning trace as JSON lines, one record per evaluation.
pub fn render_bo_trace(trace: &BoTrace) -> String {
    let mut out = String::new();
    for record in &trace.records {
        let theta: Vec<String> = record.theta.iter().map(|t| fmt_f64_exact(*t)).collect();
        let _ = writeln!(
            out,
            "{{\"n\":{},\"theta\":[{}],\"g\":{},\"best_g\":{}}}",
            record.n,
            theta.join(","),
            fmt_f64_exact(record.objective),
            fmt_f64_exact(record.best_so_far),
        );
    }
    out
}

/// Saved parameter vector, written as `best_theta.json`.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct ThetaFile {
    pub case: String,
    pub theta: Vec<f64>,
    pub g: f64,
}

impl ThetaFile {
    pub fn render(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Runtime(format!("cannot serialize theta: {e}")))
    }
}

/// Read a parameter vector: either a `ThetaFile` object or a bare array.
pub fn parse_theta(text: &str) -> Result<Vec<f64>, CliError> {
    if let Ok(file) = serde_json::from_str::<ThetaFile>(text) {
        return Ok(file.theta);
    }
    if let Ok(obj) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(theta) = obj.get("theta").and_then(|t| t.as_array()) {
            let values: Option<Vec<f64>> = theta.iter().map(|v| v.as_f64()).collect();
            if let Some(values) = values {
                return Ok(values);
            }
        }
        if let Some(arr) = obj.as_array() {
            let values: Option<Vec<f64>> = arr.iter().map(|v| v.as_f64()).collect();
            if let Some(values) = values {
                return Ok(values);
            }
        }
    }
    Err(CliError::Config("theta file must be a JSON array or an object with a `theta` array".into()))
}
