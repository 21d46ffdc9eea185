//! Stylized-fact estimators and the calibration loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FactsError {
    #[error("price {index} is not positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("lag {lag} out of range for length {len}")]
    BadLag { lag: usize, len: usize },
    #[error("hill estimator needs {needed} non-zero observations, got {got}")]
    InsufficientTail { needed: usize, got: usize },
    #[error("summary is missing lag {0}")]
    MissingLag(usize),
}

/// Number of ACF lags entering the calibration loss.
pub const LOSS_LAGS: usize = 9;

pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>, FactsError> {
    if prices.len() < 2 {
        return Err(FactsError::TooShort { needed: 2, got: prices.len() });
    }
    if let Some((index, &value)) = prices.iter().enumerate().find(|(_, &p)| !(p > 0.0)) {
        return Err(FactsError::NonPositivePrice { index, value });
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Pearson correlation between `x[..n-lag]` and `x[lag..]`.
pub fn acf(series: &[f64], lag: usize) -> Result<f64, FactsError> {
    let n = series.len();
    if lag == 0 || lag >= n {
        return Err(FactsError::BadLag { lag, len: n });
    }
    let a = &series[..n - lag];
    let b = &series[lag..];
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(FactsError::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn acf_lags(series: &[f64], lags: usize) -> Result<Vec<f64>, FactsError> {
    (1..=lags).map(|l| acf(series, l)).collect()
}

/// Hill estimate from the `k` largest absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    /// `gamma = (1/k) sum ln(|r|_(i) / |r|_(k+1))`, the reciprocal tail index.
    pub gamma: f64,
    /// Tail exponent `1 / gamma` (infinite for a degenerate tail).
    pub alpha: f64,
    pub k: usize,
}

/// Which Hill quantity enters the calibration loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HillConvention {
    #[default]
    Gamma,
    TailIndex,
}

impl HillEstimate {
    pub fn value(&self, convention: HillConvention) -> f64 {
        match convention {
            HillConvention::Gamma => self.gamma,
            HillConvention::TailIndex => self.alpha,
        }
    }
}

/// Default tail size: 5% of the sample, kept within `[10, 1000]`.
pub fn default_tail_count(n: usize) -> usize {
    ((n as f64 * 0.05).floor() as usize).clamp(10, 1000)
}

pub fn hill_index(returns: &[f64], k: usize) -> Result<HillEstimate, FactsError> {
    if k < 2 {
        return Err(FactsError::InsufficientTail { needed: 3, got: k });
    }
    let mut abs: Vec<f64> = returns.iter().map(|r| r.abs()).filter(|a| *a > 0.0).collect();
    if abs.len() < k + 1 {
        return Err(FactsError::InsufficientTail { needed: k + 1, got: abs.len() });
    }
    abs.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = abs[k].ln();
    let gamma = abs[..k].iter().map(|a| a.ln() - threshold).sum::<f64>() / k as f64;
    Ok(HillEstimate {
        gamma,
        alpha: if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY },
        k,
    })
}

/// Excess kurtosis `m4 / m2^2 - 3` with population moments.
pub fn kurtosis(xs: &[f64]) -> Result<f64, FactsError> {
    if xs.len() < 4 {
        return Err(FactsError::TooShort { needed: 4, got: xs.len() });
    }
    let m = mean(xs);
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d2 = (x - m) * (x - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = xs.len() as f64;
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(FactsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedSummary {
    pub hill: HillEstimate,
    pub sigma: f64,
    pub kurt: f64,
    /// Lags 1..=lags.
    pub acf_returns: Vec<f64>,
    pub acf_sq_returns: Vec<f64>,
    pub acf_abs_returns: Vec<f64>,
    /// Order-sign (+1 buy / -1 sell) autocorrelation when directions are known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acf_direction: Option<Vec<f64>>,
    pub observations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub lags: usize,
    /// Tail count for the Hill estimator; `None` uses [`default_tail_count`]
    /// on the number of non-zero returns.
    pub tail_count: Option<usize>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            lags: LOSS_LAGS,
            tail_count: None,
        }
    }
}

pub fn summarize_returns(returns: &[f64], directions: Option<&[f64]>, cfg: &SummaryConfig) -> Result<StylizedSummary, FactsError> {
    let nonzero = returns.iter().filter(|r| **r != 0.0).count();
    let k = cfg.tail_count.unwrap_or_else(|| default_tail_count(nonzero));
    let sq: Vec<f64> = returns.iter().map(|r| r * r).collect();
    let abs: Vec<f64> = returns.iter().map(|r| r.abs()).collect();
    Ok(StylizedSummary {
        hill: hill_index(returns, k)?,
        sigma: std_dev(returns),
        kurt: kurtosis(returns)?,
        acf_returns: acf_lags(returns, cfg.lags)?,
        acf_sq_returns: acf_lags(&sq, cfg.lags)?,
        acf_abs_returns: acf_lags(&abs, cfg.lags)?,
        acf_direction: directions.map(|d| acf_lags(d, cfg.lags)).transpose()?,
        observations: returns.len(),
    })
}

/// Summary of a per-event mid-price series.
pub fn summarize_prices(prices: &[f64], directions: Option<&[f64]>, cfg: &SummaryConfig) -> Result<StylizedSummary, FactsError> {
    summarize_returns(&log_returns(prices)?, directions, cfg)
}

/// Sum of absolute differences in Hill index, return volatility, kurtosis and
/// the first nine return and squared-return autocorrelations.
pub fn calibration_loss(sim: &StylizedSummary, hist: &StylizedSummary, convention: HillConvention) -> Result<f64, FactsError> {
    for s in [sim, hist] {
        let have = s.acf_returns.len().min(s.acf_sq_returns.len());
        if have < LOSS_LAGS {
            return Err(FactsError::MissingLag(have + 1));
        }
    }
    let acf_term = |a: &[f64], b: &[f64]| -> f64 { a[..LOSS_LAGS].iter().zip(&b[..LOSS_LAGS]).map(|(x, y)| (x - y).abs()).sum() };
    Ok((sim.hill.value(convention) - hist.hill.value(convention)).abs()
        + (sim.sigma - hist.sigma).abs()
        + (sim.kurt - hist.kurt).abs()
        + acf_term(&sim.acf_returns, &hist.acf_returns)
        + acf_term(&sim.acf_sq_returns, &hist.acf_sq_returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_return_cases() {
        assert_eq!(log_returns(&[100.0, 100.0, 100.0]).unwrap(), vec![0.0, 0.0]);
        assert!((log_returns(&[100.0, 200.0]).unwrap()[0] - 2f64.ln()).abs() < 1e-15);
        let p = [3.0, 7.0, 2.0, 9.0, 4.5];
        let total: f64 = log_returns(&p).unwrap().iter().sum();
        assert!((total - (4.5f64 / 3.0).ln()).abs() < 1e-12);
        assert!(matches!(log_returns(&[1.0, 0.0]), Err(FactsError::NonPositivePrice { index: 1, .. })));
        assert!(log_returns(&[1.0]).is_err());
    }

    #[test]
    fn acf_cases() {
        let trend: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!((acf(&trend, 1).unwrap() - 1.0).abs() < 1e-12);
        let alt: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((acf(&alt, 1).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(acf(&[1.0; 10], 1), Err(FactsError::ZeroVariance));
        assert!(matches!(acf(&trend, 0), Err(FactsError::BadLag { .. })));
        assert!(matches!(acf(&trend, 50), Err(FactsError::BadLag { .. })));
    }

    #[test]
    fn hill_degenerate_and_errors() {
        let flat = vec![0.01; 100];
        assert_eq!(hill_index(&flat, 10).unwrap().gamma, 0.0);
        assert!(hill_index(&flat, 10).unwrap().alpha.is_infinite());
        assert!(hill_index(&[0.1, 0.2], 5).is_err());
        assert!(hill_index(&flat, 1).is_err());
    }

    #[test]
    fn kurtosis_two_point() {
        let xs: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((kurtosis(&xs).unwrap() + 2.0).abs() < 1e-12);
        assert_eq!(kurtosis(&[2.0; 8]), Err(FactsError::ZeroVariance));
    }

    fn summary(sigma: f64) -> StylizedSummary {
        StylizedSummary {
            hill: HillEstimate { gamma: 0.3, alpha: 1.0 / 0.3, k: 10 },
            sigma,
            kurt: 4.0,
            acf_returns: vec![0.01; 9],
            acf_sq_returns: vec![0.2; 9],
            acf_abs_returns: vec![0.3; 9],
            acf_direction: None,
            observations: 100,
        }
    }

    #[test]
    fn loss_cases() {
        let a = summary(0.5);
        assert_eq!(calibration_loss(&a, &a, HillConvention::Gamma).unwrap(), 0.0);
        let b = summary(0.6);
        assert!((calibration_loss(&a, &b, HillConvention::Gamma).unwrap() - 0.1).abs() < 1e-12);
        let mut short = summary(0.5);
        short.acf_returns.truncate(5);
        assert_eq!(calibration_loss(&short, &a, HillConvention::Gamma), Err(FactsError::MissingLag(6)));
    }
}
