pub mod api;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use seqbed::engine::{load, save, RunConfig, RunState, MANIFEST};
use seqbed::models::DesignDomain;

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a saved run, or starts a new one from `config` when `dir` holds none.
pub fn open_state(dir: &Path, config: Option<&Path>) -> Result<RunState> {
    if dir.join(MANIFEST).exists() {
        return Ok(load(dir)?);
    }
    let Some(cfg) = config else {
        bail!("{} has no saved run; pass --config to start one", dir.display());
    };
    let state = RunState::new(read_config(cfg)?)?;
    save(&state, dir)?;
    Ok(state)
}

/// Runs a campaign to completion (or until it needs an observation),
/// saving after every iteration.
pub fn run_campaign(config: RunConfig, out: &Path) -> Result<RunState> {
    let mut state = RunState::new(config)?;
    save(&state, out)?;
    while state.status == seqbed::engine::RunStatus::Running {
        state.step()?;
        save(&state, out)?;
        log::info!("completed iteration {}", state.completed());
    }
    Ok(state)
}

/// Parses a design grid: `lo:hi:n` for `n` evenly spaced points, `all` for
/// every member of a discrete domain, or a comma-separated list.
pub fn parse_design_grid(spec: &str, domain: &DesignDomain) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let designs = if spec == "all" {
        if !domain.is_discrete() {
            bail!("`all` needs a discrete design domain, this one is {domain}");
        }
        domain.members()
    } else if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            bail!("expected lo:hi:n, got `{spec}`");
        };
        let lo: f64 = lo.trim().parse().with_context(|| format!("bad lower bound `{lo}`"))?;
        let hi: f64 = hi.trim().parse().with_context(|| format!("bad upper bound `{hi}`"))?;
        let n: usize = n.trim().parse().with_context(|| format!("bad point count `{n}`"))?;
        if n == 0 || hi < lo {
            bail!("grid `{spec}` is empty");
        }
        let mut pts: Vec<f64> = (0..n).map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect();
        if domain.is_discrete() {
            pts.iter_mut().for_each(|d| *d = d.round());
            pts.dedup();
        }
        pts
    } else {
        spec.split(',').map(|s| s.trim().parse::<f64>().with_context(|| format!("bad design `{s}`"))).collect::<Result<_>>()?
    };
    if let Some(d) = designs.iter().find(|d| !domain.contains(**d)) {
        bail!("design {d} is outside {domain}");
    }
    Ok(designs)
}
