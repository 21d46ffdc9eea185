use lobgen::calibration::{grid_search, GridSpec};
use lobgen::facts::{summarize_prices, HillConvention, SummaryConfig};
use lobgen::par::Execution;
use lobgen::sim::{run, BaselineGenerator, SimConfig, SimError};
use lobgen::ChiarellaParams;
use proptest::prelude::*;

fn spec(beta: Vec<f64>, gamma: Vec<f64>) -> GridSpec {
    GridSpec {
        beta,
        kappa: vec![0.01],
        sigma_noise: vec![1.0],
        gamma,
        replications: 2,
        events: 600,
        seed: 3,
        base: ChiarellaParams::default(),
        summary: SummaryConfig { lags: 9, tail_count: Some(20) },
        hill: HillConvention::Gamma,
    }
}

fn simulate(p: &ChiarellaParams, seed: u64) -> Result<Vec<f64>, SimError> {
    let mut cfg = SimConfig::default();
    cfg.chiarella = *p;
    Ok(run(&cfg, &BaselineGenerator::synthetic_default(), 600, seed)?.mids())
}

fn history() -> lobgen::StylizedSummary {
    let mids = simulate(&ChiarellaParams::default(), 99).unwrap();
    summarize_prices(&mids, None, &SummaryConfig { lags: 9, tail_count: Some(20) }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn best_is_minimal_and_refinement_never_hurts(betas in prop::collection::vec(0.01f64..1.0, 1..4), extra in 0.01f64..1.0) {
        let hist = history();
        let gamma = vec![0.5, 1.0];
        let coarse = grid_search(&spec(betas.clone(), gamma.clone()), &hist, Execution::Parallel, simulate).unwrap();
        prop_assert_eq!(coarse.table.len(), betas.len() * 2);
        prop_assert!(coarse.table.iter().all(|r| coarse.best_loss <= r.mean_loss));
        let mut finer = betas.clone();
        finer.push(extra);
        let fine = grid_search(&spec(finer, gamma), &hist, Execution::Parallel, simulate).unwrap();
        prop_assert!(fine.best_loss <= coarse.best_loss);
    }
}

#[test]
fn same_spec_same_table() {
    let hist = history();
    let s = spec(vec![0.05, 0.2], vec![1.0]);
    let a = grid_search(&s, &hist, Execution::Serial, simulate).unwrap();
    let b = grid_search(&s, &hist, Execution::Parallel, simulate).unwrap();
    assert_eq!(a, b);
}
