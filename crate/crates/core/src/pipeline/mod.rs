//! End-to-end batch runs: load a city, compute indicators for every CBG and
//! mode in parallel, run the equity statistics and write the reports.
//!
//! Every output except `run_report.json` is a pure function of the inputs
//! and the config; worker count and scheduling never change a byte.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catchment::{
    load_network, CatchmentProvider, CatchmentSpec, FixedSpeedProvider, IsolineSet, NetworkProvider, PolygonProvider,
};
use crate::dataset::{
    load_city, synth_city, validate_city, write_canonical, CityPaths, Issue, LoadStats, QualityConfig, SynthSpec,
};
use crate::equity::{city_summary, correlation_matrix};
use crate::indicators::{compute_all, ItemFailure};

pub use config::{InputConfig, ProviderConfig, ProviderKind, RunConfig};
pub use output::{fmt_decimal, OUTPUT_FILES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
}

impl RunError {
    /// 1 for usage and configuration problems, 2 for input data and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Input(_) | RunError::Output(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Input(_) => "input",
            RunError::Output(_) => "output",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunCounts {
    pub cbgs_total: usize,
    pub cbgs_processed: usize,
    pub cbgs_excluded: usize,
    pub work_items: usize,
    pub indicator_rows: usize,
    pub failures: usize,
    pub capacity_violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub load_ms: f64,
    pub compute_ms: f64,
    pub equity_ms: f64,
    pub write_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub workers: usize,
    pub counts: RunCounts,
    pub load: LoadStats,
    pub excluded_cbgs: Vec<String>,
    pub warnings: Vec<String>,
    pub failures: Vec<ItemFailure>,
    pub diagnostics: Vec<String>,
    pub timing: Timing,
    /// SHA-256 (hex) of every deterministic output file.
    pub digests: BTreeMap<String, String>,
}

fn ms(since: Instant) -> f64 {
    (since.elapsed().as_secs_f64() * 1e6).round() / 1e3
}

fn input_err(e: impl std::fmt::Display) -> RunError {
    RunError::Input(e.to_string())
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn build_provider(cfg: &RunConfig, ds: &crate::dataset::CityDataset) -> Result<Box<dyn CatchmentProvider>, RunError> {
    let p = &cfg.provider;
    let cfg_err = |e: crate::catchment::CatchmentError| RunError::Config(e.to_string());
    Ok(match p.kind {
        ProviderKind::Fixed => Box::new(FixedSpeedProvider::new(ds, cfg.speeds, p.cell_deg).map_err(cfg_err)?),
        ProviderKind::Network => {
            let (nodes, edges) = (p.nodes.as_ref().unwrap(), p.edges.as_ref().unwrap());
            let net = load_network(nodes, edges).map_err(input_err)?;
            Box::new(NetworkProvider::new(net, ds, cfg.speeds, p.max_snap_m).map_err(cfg_err)?)
        }
        ProviderKind::Polygons => {
            let set = IsolineSet::load(p.isolines.as_ref().unwrap()).map_err(input_err)?;
            Box::new(PolygonProvider::new(set, ds, p.cell_deg).map_err(cfg_err)?)
        }
    })
}

/// Runs the whole pipeline and writes the five output files into
/// `config.out`.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    config.validate()?;
    let t0 = Instant::now();
    let workers = config.workers.unwrap_or_else(default_workers);

    let paths = config.input.paths()?;
    let quality = QualityConfig {
        min_visits: config.min_visits,
    };
    let (ds, load) = load_city(&config.city_id, &paths, &quality).map_err(input_err)?;
    let provider = build_provider(config, &ds)?;
    let load_ms = ms(t0);

    let t1 = Instant::now();
    let specs: Vec<CatchmentSpec> = config
        .modes
        .iter()
        .map(|m| CatchmentSpec::new(*m, config.budget_min))
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Config(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(format!("cannot start {workers} workers: {e}")))?;
    let computed = pool.install(|| compute_all(&ds, provider.as_ref(), &specs, &config.emission_factors));
    drop(provider);
    let compute_ms = ms(t1);

    let t2 = Instant::now();
    let mut warnings = computed.warnings;
    let excluded_cbgs: Vec<String> = (0..ds.cbgs().len())
        .filter(|&c| ds.act_city(c) == 0)
        .map(|c| ds.cbg(c).cbg_id.clone())
        .collect();
    if excluded_cbgs.len() == ds.cbgs().len() {
        warnings.push("no CBG has recorded activities; indicators.csv has no rows".into());
    } else if !excluded_cbgs.is_empty() {
        warnings.push(format!(
            "{} CBG(s) without recorded activities excluded from indicators",
            excluded_cbgs.len()
        ));
    }
    for f in &computed.failures {
        warnings.push(format!("CBG '{}' {}: {}", f.cbg_id, f.mode, f.message));
    }
    let rows: Vec<_> = computed.rows.into_iter().filter(|r| r.act_city > 0).collect();
    let correlations = correlation_matrix(&ds, &rows);
    let summary = city_summary(&ds, &rows, config.weighting);
    let equity_ms = ms(t2);

    let t3 = Instant::now();
    let files = [
        output::indicators_csv(&ds, &rows),
        output::gini_csv(&summary),
        output::correlations_csv(&summary.city, &correlations),
        output::summary_json(&ds, config, &rows, &summary, &correlations),
    ];
    fs::create_dir_all(&config.out)
        .map_err(|e| RunError::Output(format!("cannot create {}: {e}", config.out.display())))?;
    let mut digests = BTreeMap::new();
    for (name, body) in OUTPUT_FILES.iter().zip(&files) {
        write_file(&config.out.join(name), body.as_bytes())?;
        digests.insert(name.to_string(), hex::encode(Sha256::digest(body.as_bytes())));
    }
    let mut diagnostics = summary.diagnostics.clone();
    diagnostics.extend(correlations.diagnostics.iter().cloned());

    let cbgs_processed = {
        let mut ids: Vec<usize> = rows.iter().map(|r| r.cbg).collect();
        ids.dedup();
        ids.len()
    };
    let mut report = RunReport {
        tool: "proximity-audit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        workers,
        counts: RunCounts {
            cbgs_total: ds.cbgs().len(),
            cbgs_processed,
            cbgs_excluded: excluded_cbgs.len(),
            work_items: ds.cbgs().len() * specs.len(),
            indicator_rows: rows.len(),
            failures: computed.failures.len(),
            capacity_violations: computed.capacity_violations,
        },
        load,
        excluded_cbgs,
        warnings,
        failures: computed.failures,
        diagnostics,
        timing: Timing {
            load_ms,
            compute_ms,
            equity_ms,
            write_ms: 0.0,
            total_ms: 0.0,
        },
        digests,
    };
    report.timing.write_ms = ms(t3);
    report.timing.total_ms = ms(t0);
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    write_file(&config.out.join(output::REPORT_FILE), body.as_bytes())?;
    Ok(report)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|e| RunError::Output(format!("cannot write {}: {e}", path.display())))
}

/// Reads a synthetic-city spec (TOML, or JSON by extension).
pub fn load_synth_spec(path: &Path) -> Result<SynthSpec, RunError> {
    let text =
        fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read spec {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}

/// Generates a synthetic city and writes its three input tables into `dir`.
pub fn synth_to_dir(spec: &SynthSpec, seed: u64, dir: &Path) -> Result<CityPaths, RunError> {
    let ds = synth_city(spec, seed).map_err(|e| RunError::Config(e.to_string()))?;
    write_canonical(&ds, dir).map_err(|e| RunError::Output(e.to_string()))
}

/// Every data-quality diagnostic for a file set.
pub fn validate_inputs(paths: &CityPaths, min_visits: u64) -> Result<Vec<Issue>, RunError> {
    validate_city(paths, &QualityConfig { min_visits }).map_err(input_err)
}
