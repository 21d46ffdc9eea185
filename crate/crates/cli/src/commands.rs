//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use lobgen::calibration::{derive_fixed_params, grid_search, GridSpec};
use lobgen::deletion::DeletionStats;
use lobgen::facts::{summarize_prices, StylizedSummary, SummaryConfig};
use lobgen::ingest::dataset::build_events;
use lobgen::ingest::{infer_market_orders, parse_messages, parse_orderbook, placements, window_and_split, Dataset, Split};
use lobgen::nn::{io as nn_io, train, Head, ModelConfig, TablModel, TrainSchedule};
use lobgen::seed::derive_seed;
use lobgen::sim::experiments::default_injection;
use lobgen::sim::{market_impact, monte_carlo, run, BaselineGenerator, OrderGenerator, SimConfig, SimPath, TablGenerator};
use serde::Serialize;

use crate::config::{data, runtime, CliError, GeneratorChoice, RunConfig};

const HEADS: [(Head, &str); 3] = [(Head::OrderType, "order_type"), (Head::Limit, "limit"), (Head::Market, "market")];

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    write_text(path, &serde_json::to_string_pretty(value).map_err(runtime)?)
}

fn write_path_csv(path: &Path, sim: &SimPath) -> Result<PathBuf, CliError> {
    let file = fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    sim.write_csv(std::io::BufWriter::new(file)).map_err(runtime)?;
    Ok(path.to_path_buf())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Finite values of the `mid` column, or of the first column when there is
/// no `mid` header.
pub fn read_mids(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| data(format!("{}: {e}", path.display())))?.clone();
    let col = headers.iter().position(|h| h.trim() == "mid").unwrap_or(0);
    let mut mids = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data(format!("{}: {e}", path.display())))?;
        let field = rec.get(col).ok_or_else(|| data(format!("{}: row {} has no column {col}", path.display(), i + 2)))?;
        let v: f64 = field.trim().parse().map_err(|_| data(format!("{}: row {}: bad number {field:?}", path.display(), i + 2)))?;
        if v.is_finite() {
            mids.push(v);
        }
    }
    Ok(mids)
}

fn engine_config(cfg: &RunConfig) -> Result<SimConfig, CliError> {
    let mut engine = cfg.engine.clone();
    if let Some(p) = &cfg.deletion_stats {
        let scale = engine.deletion.scale;
        engine.deletion = read_json(p)?;
        engine.deletion.scale = scale;
    }
    if let Some(s) = cfg.deletion_scale {
        engine.deletion.scale = s;
    }
    engine.validate().map_err(data)?;
    Ok(engine)
}

fn baseline(cfg: &RunConfig) -> Result<BaselineGenerator, CliError> {
    match &cfg.baseline {
        Some(p) => read_json(p),
        None => Ok(BaselineGenerator::synthetic_default()),
    }
}

fn generator(cfg: &RunConfig) -> Result<Box<dyn OrderGenerator>, CliError> {
    let base = baseline(cfg)?;
    match cfg.generator {
        GeneratorChoice::Baseline => Ok(Box::new(base)),
        GeneratorChoice::Tabl => {
            let models = cfg.models_dir.as_ref().ok_or_else(|| data("generator tabl needs models_dir"))?;
            let dataset = cfg.dataset_dir.as_ref().ok_or_else(|| data("generator tabl needs dataset_dir"))?;
            let meta = Dataset::load(dataset).map_err(data)?.meta;
            let load = |name: &str| nn_io::load(&models.join(name)).map_err(data);
            let g = TablGenerator::new(load("order_type")?, load("limit")?, load("market")?, &meta, base.mean_market_size()).map_err(data)?;
            Ok(Box::new(g))
        }
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let messages_path = cfg.messages.as_ref().ok_or_else(|| data("ingest needs messages"))?;
    let orderbook_path = cfg.orderbook.as_ref().ok_or_else(|| data("ingest needs orderbook"))?;
    let messages = parse_messages(messages_path).map_err(data)?;
    let books = parse_orderbook(orderbook_path).map_err(data)?;
    let stream = build_events(&messages, &books, &cfg.dataset).map_err(data)?;
    let dataset = window_and_split(&stream, &cfg.dataset).map_err(data)?;
    create_dir(&cfg.out)?;
    let dataset_dir = cfg.out.join("dataset");
    dataset.save(&dataset_dir).map_err(runtime)?;

    let flow = infer_market_orders(&messages, &cfg.dataset.infer);
    let stats = DeletionStats::fit(&placements(&messages, &books, &flow).map_err(data)?).map_err(data)?;
    let base = BaselineGenerator::from_stream(&stream, cfg.dataset.size_classes, cfg.dataset.distance_classes).map_err(data)?;
    let mids: Vec<String> = books.iter().filter_map(|b| b.mid()).map(|m| m.to_string()).collect();
    let mut history = String::from("mid\n");
    for m in mids {
        history.push_str(&m);
        history.push('\n');
    }
    Ok(vec![
        dataset_dir,
        write_json(&cfg.out.join("deletion_stats.json"), &stats)?,
        write_json(&cfg.out.join("baseline.json"), &base)?,
        write_text(&cfg.out.join("history.csv"), &history)?,
    ])
}

/// History mids in ticks, from `history` or the LOBSTER orderbook.
fn history_ticks(cfg: &RunConfig, tick: f64) -> Result<Vec<f64>, CliError> {
    let mids = match (&cfg.history, &cfg.orderbook) {
        (Some(h), _) => read_mids(h)?,
        (None, Some(ob)) => parse_orderbook(ob).map_err(data)?.iter().filter_map(|b| b.mid()).collect(),
        (None, None) => return Err(data("calibrate needs history or orderbook")),
    };
    Ok(mids.into_iter().map(|m| m / tick).collect())
}

pub fn calibrate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut engine = engine_config(cfg)?;
    let history = history_ticks(cfg, engine.tick as f64)?;
    let fixed = derive_fixed_params(&history).map_err(data)?;
    let hist = summarize_prices(&history, None, &SummaryConfig::default()).map_err(data)?;
    engine.gbm = fixed.gbm;
    let spec = match &cfg.grid {
        Some(g) => g.clone(),
        None => GridSpec::around(&engine.chiarella, &fixed, cfg.grid_factor, cfg.events, derive_seed(cfg.seed, "calibrate")),
    };
    let g = baseline(cfg)?;
    let result = grid_search(&spec, &hist, cfg.execution, |p, seed| {
        let mut c = engine.clone();
        c.chiarella = *p;
        run(&c, &g, spec.events, seed).map(|path| path.mids().into_iter().filter(|m| m.is_finite()).collect::<Vec<_>>())
    })
    .map_err(runtime)?;
    create_dir(&cfg.out)?;
    let csv_path = cfg.out.join("calibration.csv");
    let file = fs::File::create(&csv_path).map_err(|e| runtime(format!("{}: {e}", csv_path.display())))?;
    result.write_csv(file).map_err(runtime)?;
    #[derive(Serialize)]
    struct Report<'a> {
        fixed: &'a lobgen::calibration::FixedParams,
        best_params: &'a lobgen::ChiarellaParams,
        best_loss: f64,
        history: &'a StylizedSummary,
    }
    let report = Report { fixed: &fixed, best_params: &result.best_params, best_loss: result.best_loss, history: &hist };
    Ok(vec![csv_path, write_json(&cfg.out.join("calibration.json"), &report)?])
}

pub fn train_heads(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = cfg.dataset_dir.as_ref().ok_or_else(|| data("train needs dataset_dir"))?;
    let dataset = Dataset::load(dir).map_err(data)?;
    let models = cfg.out.join("models");
    create_dir(&models)?;
    let mut outputs = Vec::new();
    for (head, name) in HEADS {
        let mut config = cfg.model.clone().unwrap_or_else(|| ModelConfig::new(head));
        config.head = head;
        config.window = dataset.meta.config.window;
        config.size_classes = dataset.meta.config.size_classes;
        config.distance_classes = dataset.meta.config.distance_classes;
        config.init_seed = derive_seed(cfg.seed, &format!("init/{name}"));
        let model = TablModel::new(config).map_err(data)?;
        let schedule = TrainSchedule { seed: derive_seed(cfg.seed, &format!("train/{name}")), ..cfg.schedule.clone() };
        let outcome = train(model, &dataset.view(head, Split::Train), &dataset.view(head, Split::Val), &schedule).map_err(runtime)?;
        let (bin, json) = nn_io::save(&outcome.model, &models.join(name)).map_err(runtime)?;
        let history = lobgen::nn::train::history_csv(&outcome.history).map_err(runtime)?;
        outputs.extend([bin, json, write_text(&models.join(format!("{name}_history.csv")), &history)?]);
    }
    Ok(outputs)
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let engine = engine_config(cfg)?;
    let g = generator(cfg)?;
    let paths = monte_carlo(&engine, g.as_ref(), cfg.paths, cfg.events, derive_seed(cfg.seed, "simulate"), cfg.execution).map_err(runtime)?;
    let dir = cfg.out.join("paths");
    create_dir(&dir)?;
    paths.iter().enumerate().map(|(i, p)| write_path_csv(&dir.join(format!("path_{i:03}.csv")), p)).collect()
}

const GAP_LAGS: [usize; 13] = [0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000];

pub fn impact(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let engine = engine_config(cfg)?;
    let g = generator(cfg)?;
    let r = market_impact(&engine, g.as_ref(), default_injection(g.as_ref()), cfg.t_inject, cfg.events, cfg.paths, derive_seed(cfg.seed, "impact"), cfg.execution)
        .map_err(runtime)?;
    let dir = cfg.out.join("impact");
    create_dir(&dir)?;
    let mut outputs = Vec::new();
    for (i, (b, m)) in r.baseline.iter().zip(&r.impact).enumerate() {
        outputs.push(write_path_csv(&dir.join(format!("baseline_{i:03}.csv")), b)?);
        outputs.push(write_path_csv(&dir.join(format!("impact_{i:03}.csv")), m)?);
    }
    let mut gaps = String::from("lag,mean_gap_ticks\n");
    for lag in GAP_LAGS.into_iter().filter(|l| cfg.t_inject + l < cfg.events) {
        gaps.push_str(&format!("{lag},{}\n", r.mean_gap(lag) / engine.tick as f64));
    }
    outputs.push(write_text(&dir.join("gaps.csv"), &gaps)?);
    Ok(outputs)
}

#[derive(Debug, Serialize)]
pub struct FactsReport {
    pub a: StylizedSummary,
    pub b: StylizedSummary,
}

pub fn facts(a: &Path, b: &Path) -> Result<FactsReport, CliError> {
    let summarize = |p: &Path| -> Result<StylizedSummary, CliError> { summarize_prices(&read_mids(p)?, None, &SummaryConfig::default()).map_err(|e| data(format!("{}: {e}", p.display()))) };
    Ok(FactsReport { a: summarize(a)?, b: summarize(b)? })
}

pub fn write_facts(report: &FactsReport, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let mut outputs = vec![write_json(&out.join("facts.json"), report)?];
    let series: [(&str, &[f64], &[f64]); 3] = [
        ("acf_returns.csv", &report.a.acf_returns, &report.b.acf_returns),
        ("acf_sq_returns.csv", &report.a.acf_sq_returns, &report.b.acf_sq_returns),
        ("acf_abs_returns.csv", &report.a.acf_abs_returns, &report.b.acf_abs_returns),
    ];
    for (name, hist, sim) in series {
        let mut text = String::from("lag,historical,simulated\n");
        for (i, (h, s)) in hist.iter().zip(sim).enumerate() {
            text.push_str(&format!("{},{h},{s}\n", i + 1));
        }
        outputs.push(write_text(&out.join(name), &text)?);
    }
    Ok(outputs)
}
