//! Monte Carlo, market-impact and deletion-scale drivers.

use serde::{Deserialize, Serialize};

use super::engine::{run, ForcedOrder, Simulator};
use super::generator::{BaselineGenerator, OrderGenerator, OrderKind};
use super::{SimConfig, SimError, SimPath};
use crate::chiarella::Direction;
use crate::deletion::{calibrate_scale, cumulative_deletion_rate};
use crate::par::{map_indexed, Execution};
use crate::seed::derive_seed;

pub fn path_seed(master: u64, path: usize) -> u64 {
    derive_seed(master, &format!("path/{path}"))
}

/// Independent paths with per-path derived seeds, in path order.
pub fn monte_carlo(config: &SimConfig, generator: &dyn OrderGenerator, n_paths: usize, n_events: usize, seed: u64, exec: Execution) -> Result<Vec<SimPath>, SimError> {
    if n_paths == 0 {
        return Err(SimError::Config("n_paths must be at least 1".into()));
    }
    map_indexed(n_paths, exec, |i| run(config, generator, n_events, path_seed(seed, i))).into_iter().collect()
}

/// Buy market order of 20 times the generator's mean market-order size.
pub fn default_injection(generator: &dyn OrderGenerator) -> ForcedOrder {
    ForcedOrder {
        kind: OrderKind::Market,
        direction: Direction::Buy,
        size: (20.0 * generator.mean_market_size()).round().max(1.0) as u64,
        offset: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactResult {
    pub t_inject: usize,
    pub baseline: Vec<SimPath>,
    pub impact: Vec<SimPath>,
}

impl ImpactResult {
    /// Mean over pairs of `impact mid - baseline mid` at `t_inject + lag`.
    pub fn mean_gap(&self, lag: usize) -> f64 {
        let i = self.t_inject + lag;
        let gaps: Vec<f64> = self.baseline.iter().zip(&self.impact).map(|(b, m)| m.events[i].mid - b.events[i].mid).filter(|g| g.is_finite()).collect();
        gaps.iter().sum::<f64>() / gaps.len() as f64
    }
}

/// Paired runs sharing every random stream. The impact twin is cloned from
/// the baseline state at `t_inject`, where `injected` replaces the generated
/// order; the generator and agent still draw so both twins stay aligned.
pub fn market_impact(
    config: &SimConfig,
    generator: &dyn OrderGenerator,
    injected: ForcedOrder,
    t_inject: usize,
    n_events: usize,
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<ImpactResult, SimError> {
    if t_inject >= n_events {
        return Err(SimError::Config("t_inject must be before the last event".into()));
    }
    if n_paths == 0 {
        return Err(SimError::Config("n_paths must be at least 1".into()));
    }
    let pairs = map_indexed(n_paths, exec, |i| -> Result<(SimPath, SimPath), SimError> {
        let mut base = Simulator::new(config.clone(), generator, path_seed(seed, i))?;
        if let Some(w) = generator.context_window() {
            base.burn_in(&BaselineGenerator::synthetic_default(), w)?;
        }
        let mut prefix = base.run_events(t_inject)?;
        let mut twin = base.clone();
        let mut tail = base.run_events(n_events - t_inject)?;
        let mut twin_events = prefix.clone();
        twin_events.push(twin.step_with(generator, Some(injected))?);
        twin_events.extend(twin.run_events(n_events - t_inject - 1)?);
        prefix.append(&mut tail);
        Ok((base.into_path(prefix), twin.into_path(twin_events)))
    });
    let mut baseline = Vec::with_capacity(n_paths);
    let mut impact = Vec::with_capacity(n_paths);
    for p in pairs {
        let (b, m) = p?;
        baseline.push(b);
        impact.push(m);
    }
    Ok(ImpactResult { t_inject, baseline, impact })
}

/// Overall deletion share of one run.
pub fn deletion_rate(path: &SimPath) -> f64 {
    cumulative_deletion_rate(&path.deletion_flags()).last().copied().unwrap_or(0.0)
}

/// Bisects the hazard scale so that one `n_events` run has deletion share
/// `target`. The bracket starts at `[0, 1]` and doubles until it contains
/// the target.
pub fn calibrate_deletion_scale(config: &SimConfig, generator: &dyn OrderGenerator, target: f64, n_events: usize, seed: u64, iterations: usize) -> Result<f64, SimError> {
    let rate = |scale: f64| -> Result<f64, SimError> {
        let mut cfg = config.clone();
        cfg.deletion.scale = scale;
        Ok(deletion_rate(&run(&cfg, generator, n_events, seed)?))
    };
    let mut hi = 1.0;
    while rate(hi)? < target {
        hi *= 2.0;
        if hi > 1024.0 {
            return Err(SimError::Config(format!("deletion share {target} is not reachable")));
        }
    }
    let mut failure = None;
    let scale = calibrate_scale(target, 0.0, hi, iterations, |s| match rate(s) {
        Ok(r) => r,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(scale),
    }
}
