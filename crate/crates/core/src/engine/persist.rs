//! On-disk layout of a run directory:
//!
//! - `manifest.json`: schema version, config, status, current particles,
//!   the pending iteration and the list of iteration files
//! - `iteration_<k>.json`: one committed iteration
//! - `bo_trace_<k>.csv`, `gp_grid_<k>.csv`, `surface_<k>.csv`: plotting side files

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EngineError, IterationRecord, RunConfig, RunState, RunStatus, SCHEMA_VERSION};
use crate::belief::ParticleSet;
use crate::optimizer::BoResult;
use crate::utilities::surface_csv;

pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: RunConfig,
    status: RunStatus,
    particles: ParticleSet,
    pending: Option<IterationRecord>,
    iterations: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io { path: path.display().to_string(), source }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), EngineError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn bo_trace_csv(bo: &BoResult) -> String {
    let mut s = String::from("step,design,value,gp_mean,gp_var,ei,attempts\n");
    for t in &bo.trace {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", t.step, t.design, opt(t.value), opt(t.gp_mean), opt(t.gp_var), opt(t.ei), t.attempts);
    }
    s
}

pub fn gp_grid_csv(bo: &BoResult) -> String {
    let mut s = String::from("design,mean,var\n");
    for g in &bo.grid {
        let _ = writeln!(s, "{},{},{}", g.design, g.mean, g.var);
    }
    s
}

fn iteration_file(k: usize) -> String {
    format!("iteration_{k}.json")
}

/// Writes the run into `dir`, creating it if needed.
pub fn save(state: &RunState, dir: &Path) -> Result<(), EngineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for r in &state.history {
        let path = dir.join(iteration_file(r.iteration));
        let k = r.iteration;
        write_atomic(&dir.join(format!("bo_trace_{k}.csv")), &bo_trace_csv(&r.bo))?;
        write_atomic(&dir.join(format!("gp_grid_{k}.csv")), &gp_grid_csv(&r.bo))?;
        write_atomic(&dir.join(format!("surface_{k}.csv")), &surface_csv(&r.surface))?;
        write_atomic(&path, &serde_json::to_string(r).expect("iteration serializes"))?;
    }
    let manifest = Manifest {
        schema_version: state.schema_version,
        config: state.config.clone(),
        status: state.status,
        particles: state.particles.clone(),
        pending: state.pending.clone(),
        iterations: state.history.iter().map(|r| iteration_file(r.iteration)).collect(),
    };
    write_atomic(&dir.join(MANIFEST), &serde_json::to_string(&manifest).expect("manifest serializes"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EngineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| EngineError::Json { path: path.display().to_string(), source })
}

pub fn load(dir: &Path) -> Result<RunState, EngineError> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(EngineError::Schema(manifest.schema_version));
    }
    manifest.config.validate()?;
    let history = manifest.iterations.iter().map(|f| read_json(&dir.join(f))).collect::<Result<Vec<IterationRecord>, _>>()?;
    Ok(RunState {
        schema_version: manifest.schema_version,
        config: manifest.config,
        status: manifest.status,
        particles: manifest.particles,
        history,
        pending: manifest.pending,
    })
}
