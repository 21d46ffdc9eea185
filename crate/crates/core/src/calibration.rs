//! Grid-search calibration of the agent parameters against stylized facts.

use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chiarella::{momentum_series, ChiarellaParams, GbmParams};
use crate::facts::{calibration_loss, log_returns, mean, std_dev, summarize_prices, HillConvention, StylizedSummary, SummaryConfig};
use crate::par::{map_indexed, Execution};
use crate::seed::derive_seed;

/// Shortest history accepted by [`derive_fixed_params`].
pub const MIN_HISTORY: usize = 100;

/// Fixed momentum decay.
pub const ALPHA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("history needs at least {needed} prices, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("history is degenerate: {0}")]
    Degenerate(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("every grid point failed; first error: {0}")]
    AllFailed(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Parameters fixed from the history rather than searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub alpha: f64,
    /// `1 / (2 std(M))` with `M` the momentum signal of the history.
    pub gamma_center: f64,
    pub sigma_momentum: f64,
    pub gbm: GbmParams,
}

/// Fixed parameters from a mid-price history measured in ticks.
pub fn derive_fixed_params(history: &[f64]) -> Result<FixedParams, CalibrationError> {
    if history.len() < MIN_HISTORY {
        return Err(CalibrationError::TooShort { needed: MIN_HISTORY, got: history.len() });
    }
    let returns = log_returns(history).map_err(|e| CalibrationError::Degenerate(e.to_string()))?;
    let sigma_momentum = std_dev(&momentum_series(history, ALPHA));
    if !(sigma_momentum > 0.0) {
        return Err(CalibrationError::Degenerate("momentum signal has zero variance".into()));
    }
    let sigma = std_dev(&returns);
    Ok(FixedParams {
        alpha: ALPHA,
        gamma_center: 1.0 / (2.0 * sigma_momentum),
        sigma_momentum,
        gbm: GbmParams {
            mu: mean(&returns) + 0.5 * sigma * sigma,
            sigma,
        },
    })
}

/// `n` values spaced evenly in log between `center / factor` and
/// `center * factor`.
pub fn log_spaced_grid(center: f64, factor: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![center];
    }
    let (lo, hi) = ((center / factor).ln(), (center * factor).ln());
    (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn default_replications() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub sigma_noise: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub events: usize,
    pub seed: u64,
    /// Values shared by every point (alpha, delta_t).
    #[serde(default)]
    pub base: ChiarellaParams,
    #[serde(default)]
    pub summary: SummaryConfig,
    #[serde(default)]
    pub hill: HillConvention,
}

impl GridSpec {
    /// Five log-spaced values per parameter: `gamma` around the derived
    /// centre, the others around `around`.
    pub fn around(around: &ChiarellaParams, fixed: &FixedParams, factor: f64, events: usize, seed: u64) -> Self {
        Self {
            beta: log_spaced_grid(around.beta, factor, 5),
            kappa: log_spaced_grid(around.kappa, factor, 5),
            sigma_noise: log_spaced_grid(around.sigma_noise, factor, 5),
            gamma: log_spaced_grid(fixed.gamma_center, factor, 5),
            replications: default_replications(),
            events,
            seed,
            base: ChiarellaParams { alpha: fixed.alpha, ..*around },
            summary: SummaryConfig::default(),
            hill: HillConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (name, values) in [("beta", &self.beta), ("kappa", &self.kappa), ("sigma_noise", &self.sigma_noise), ("gamma", &self.gamma)] {
            if values.is_empty() {
                return Err(CalibrationError::Grid(format!("{name} list is empty")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CalibrationError::Grid(format!("{name} has a non-finite value")));
            }
        }
        if self.replications == 0 {
            return Err(CalibrationError::Grid("replications must be at least 1".into()));
        }
        if self.events < 2 {
            return Err(CalibrationError::Grid("events must be at least 2".into()));
        }
        Ok(())
    }

    /// Every point in (beta, kappa, sigma_noise, gamma) lexicographic order.
    pub fn points(&self) -> Vec<ChiarellaParams> {
        let mut out = Vec::with_capacity(self.beta.len() * self.kappa.len() * self.sigma_noise.len() * self.gamma.len());
        for &beta in &self.beta {
            for &kappa in &self.kappa {
                for &sigma_noise in &self.sigma_noise {
                    for &gamma in &self.gamma {
                        out.push(ChiarellaParams { beta, kappa, sigma_noise, gamma, ..self.base });
                    }
                }
            }
        }
        out
    }
}

/// Seed of one replication, derived from the point's values so that adding
/// points leaves existing rows unchanged.
pub fn replication_seed(master: u64, params: &ChiarellaParams, replication: usize) -> u64 {
    let label = format!(
        "calib/{:016x}/{:016x}/{:016x}/{:016x}/{replication}",
        params.beta.to_bits(),
        params.kappa.to_bits(),
        params.sigma_noise.to_bits(),
        params.gamma.to_bits()
    );
    derive_seed(master, &label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: ChiarellaParams,
    /// Mean loss over successful replications; `NaN` if all failed.
    pub mean_loss: f64,
    pub loss_std: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best_params: ChiarellaParams,
    pub best_loss: f64,
    pub table: Vec<GridRow>,
}

impl CalibrationResult {
    /// Columns: beta, kappa, sigma_noise, gamma, mean_loss, loss_std, failures.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CalibrationError> {
        let err = |e: csv::Error| CalibrationError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "kappa", "sigma_noise", "gamma", "mean_loss", "loss_std", "failures"]).map_err(err)?;
        for r in &self.table {
            let p = &r.params;
            w.write_record([
                p.beta.to_string(),
                p.kappa.to_string(),
                p.sigma_noise.to_string(),
                p.gamma.to_string(),
                r.mean_loss.to_string(),
                r.loss_std.to_string(),
                r.failures.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| CalibrationError::Csv(e.to_string()))
    }
}

/// Evaluates every grid point, averaging the loss over replications.
/// `simulate(params, seed)` returns a per-event mid-price path. The first
/// point (in lexicographic order) with the smallest mean loss wins.
pub fn grid_search<F, E>(spec: &GridSpec, hist: &StylizedSummary, exec: Execution, simulate: F) -> Result<CalibrationResult, CalibrationError>
where
    F: Fn(&ChiarellaParams, u64) -> Result<Vec<f64>, E> + Sync + Send,
    E: Display,
{
    spec.validate()?;
    let points = spec.points();
    let evaluated = map_indexed(points.len(), exec, |i| {
        let params = points[i];
        let mut losses = Vec::with_capacity(spec.replications);
        let mut first_error = None;
        for r in 0..spec.replications {
            let outcome = simulate(&params, replication_seed(spec.seed, &params, r))
                .map_err(|e| e.to_string())
                .and_then(|mids| summarize_prices(&mids, None, &spec.summary).map_err(|e| e.to_string()))
                .and_then(|s| calibration_loss(&s, hist, spec.hill).map_err(|e| e.to_string()));
            match outcome {
                Ok(l) if l.is_finite() => losses.push(l),
                Ok(l) => {
                    first_error.get_or_insert(format!("non-finite loss {l}"));
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        let row = GridRow {
            params,
            mean_loss: if losses.is_empty() { f64::NAN } else { mean(&losses) },
            loss_std: if losses.is_empty() { f64::NAN } else { std_dev(&losses) },
            failures: spec.replications - losses.len(),
        };
        (row, first_error)
    });
    let mut table = Vec::with_capacity(evaluated.len());
    let mut first_error = None;
    for (row, e) in evaluated {
        if let Some(e) = e {
            first_error.get_or_insert(e);
        }
        table.push(row);
    }
    let best = table
        .iter()
        .filter(|r| r.failures < spec.replications)
        .fold(None::<&GridRow>, |best, r| match best {
            Some(b) if b.mean_loss <= r.mean_loss => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| CalibrationError::AllFailed(first_error.unwrap_or_default()))?;
    Ok(CalibrationResult {
        best_params: best.params,
        best_loss: best.mean_loss,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn history(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_for(seed, "hist");
        let mut p = 10_000.0;
        (0..n)
            .map(|_| {
                p += rng.random_range(-2..=2) as f64;
                p
            })
            .collect()
    }

    fn spec(points: usize) -> GridSpec {
        GridSpec {
            beta: log_spaced_grid(0.1, 4.0, points),
            kappa: vec![0.01],
            sigma_noise: vec![1.0],
            gamma: vec![1.0, 2.0],
            replications: 2,
            events: 500,
            seed: 11,
            base: ChiarellaParams::default(),
            summary: SummaryConfig { lags: 9, tail_count: Some(20) },
            hill: HillConvention::Gamma,
        }
    }

    /// Random walk whose step size grows with beta.
    fn toy(params: &ChiarellaParams, seed: u64) -> Result<Vec<f64>, String> {
        let mut rng = rng_for(seed, "toy");
        let mut p = 10_000.0;
        Ok((0..500)
            .map(|_| {
                p += rng.random_range(-1.0..1.0) * (1.0 + 10.0 * params.beta);
                p
            })
            .collect())
    }

    fn hist_summary() -> StylizedSummary {
        summarize_prices(&toy(&ChiarellaParams { beta: 0.1, ..ChiarellaParams::default() }, 999).unwrap(), None, &spec(1).summary).unwrap()
    }

    #[test]
    fn fixed_params_from_history() {
        let h = history(2000, 1);
        let f = derive_fixed_params(&h).unwrap();
        assert_eq!(f.alpha, 0.5);
        assert!((f.gamma_center - 1.0 / (2.0 * std_dev(&momentum_series(&h, 0.5)))).abs() < 1e-12);
        let r = log_returns(&h).unwrap();
        assert!((f.gbm.sigma - std_dev(&r)).abs() < 1e-15);
    }

    #[test]
    fn gamma_center_from_momentum_std() {
        // Steps of +-0.75 settle into M = +-0.25.
        let mut h = vec![1000.0];
        for i in 0..200_000 {
            h.push(h[i] + if i % 2 == 0 { 0.75 } else { -0.75 });
        }
        let f = derive_fixed_params(&h).unwrap();
        assert!((f.sigma_momentum - 0.25).abs() < 1e-3, "{}", f.sigma_momentum);
        assert!((f.gamma_center - 2.0).abs() < 1e-2);
    }

    #[test]
    fn degenerate_histories_rejected() {
        assert!(matches!(derive_fixed_params(&[100.0; 500]), Err(CalibrationError::Degenerate(_))));
        assert!(matches!(derive_fixed_params(&history(50, 2)), Err(CalibrationError::TooShort { .. })));
    }

    #[test]
    fn log_grid_is_centered() {
        let g = log_spaced_grid(2.0, 4.0, 5);
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[2] - 2.0).abs() < 1e-12 && (g[4] - 8.0).abs() < 1e-12);
        assert!((g[1] / g[0] - g[4] / g[3]).abs() < 1e-12);
        assert_eq!(log_spaced_grid(3.0, 10.0, 1), vec![3.0]);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let mut s = spec(1);
        s.gamma = vec![1.0];
        let res = grid_search(&s, &hist_summary(), Execution::Serial, toy).unwrap();
        assert_eq!(res.table.len(), 1);
        assert_eq!(res.best_params, res.table[0].params);
        assert_eq!(res.best_loss, res.table[0].mean_loss);
    }

    #[test]
    fn table_is_exhaustive_and_best_is_minimal() {
        let s = spec(5);
        let res = grid_search(&s, &hist_summary(), Execution::Serial, toy).unwrap();
        assert_eq!(res.table.len(), 10);
        assert!(res.table.iter().all(|r| res.best_loss <= r.mean_loss));
        assert!((res.best_params.beta - 0.1).abs() < 0.1);
    }

    #[test]
    fn ties_go_to_first_point() {
        let s = spec(3);
        let same = |_: &ChiarellaParams, _: u64| toy(&ChiarellaParams::default(), 5);
        let res = grid_search(&s, &hist_summary(), Execution::Serial, same).unwrap();
        assert_eq!(res.best_params, res.table[0].params);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let s = spec(4);
        let a = grid_search(&s, &hist_summary(), Execution::Serial, toy).unwrap();
        let b = grid_search(&s, &hist_summary(), Execution::Parallel, toy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_reported() {
        let s = spec(2);
        let fail = |_: &ChiarellaParams, _: u64| -> Result<Vec<f64>, String> { Err("boom".into()) };
        assert!(matches!(grid_search(&s, &hist_summary(), Execution::Serial, fail), Err(CalibrationError::AllFailed(m)) if m == "boom"));
        let partial = |p: &ChiarellaParams, seed: u64| if p.gamma > 1.5 { Err("boom".into()) } else { toy(p, seed) };
        let res = grid_search(&s, &hist_summary(), Execution::Serial, partial).unwrap();
        assert!(res.best_params.gamma < 1.5);
        assert_eq!(res.table.iter().filter(|r| r.failures == 2).count(), 2);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(2);
        s.kappa.clear();
        assert!(matches!(s.validate(), Err(CalibrationError::Grid(_))));
        let mut s = spec(2);
        s.replications = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let res = grid_search(&spec(2), &hist_summary(), Execution::Serial, toy).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + res.table.len());
        assert!(text.starts_with("beta,kappa,sigma_noise,gamma,mean_loss"));
    }
}
