use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use proximity_core::catchment::Mode;
use proximity_core::dataset::{CityPaths, PlantSpec, SynthSpec};
use proximity_core::equity::Weighting;
use proximity_core::pipeline::{self, InputConfig, ProviderKind, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "proximity-audit", version, about = "15-minute city accessibility audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute indicators, Gini and correlations for one city.
    Run(RunArgs),
    /// Generate a synthetic city (pois.csv, cbgs.csv, flows.csv).
    Synth(SynthArgs),
    /// Check input tables and list every data-quality issue.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding pois.csv, cbgs.csv and flows.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    /// City label written to every output (default "city").
    #[arg(long)]
    city_id: Option<String>,
    /// Catchment provider: fixed, network or polygons (default fixed).
    #[arg(long, value_parser = parse_provider)]
    provider: Option<ProviderKind>,
    /// Network nodes (node_id,lat,lon).
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Network edges (from,to,length_m,modes,speed_walk,...).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// GeoJSON isolines for the polygons provider.
    #[arg(long)]
    isolines: Option<PathBuf>,
    /// Travel-time budget in minutes (default 15).
    #[arg(long)]
    budget_min: Option<f64>,
    /// Comma-separated modes (walk,cycle,transit,car) or letters such as "wbtc".
    #[arg(long, value_parser = parse_modes)]
    modes: Option<Modes>,
    /// Drop flow records with fewer visits (default 5).
    #[arg(long)]
    min_visits: Option<u64>,
    /// Gini weighting: population or unweighted (default population).
    #[arg(long, value_parser = parse_weighting)]
    weighting: Option<Weighting>,
    /// Worker threads (default: available cores).
    #[arg(long, env = "PROXIMITY_AUDIT_WORKERS")]
    workers: Option<usize>,
    /// Recorded in the run report.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default "out").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML or JSON synthetic-city spec; defaults are used without one.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cbgs: Option<usize>,
    #[arg(long)]
    pois: Option<usize>,
    /// Plant a known share of in-reach activities (0..=1).
    #[arg(long)]
    near_fraction: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Directory holding pois.csv, cbgs.csv and flows.csv.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Read input paths and min_visits from a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_visits: Option<u64>,
}

#[derive(Clone)]
struct Modes(Vec<Mode>);

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    s.parse()
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    match s {
        "population" => Ok(Weighting::Population),
        "unweighted" => Ok(Weighting::Unweighted),
        _ => Err(format!("unknown weighting '{s}' (expected population or unweighted)")),
    }
}

fn parse_modes(s: &str) -> Result<Modes, String> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.parse::<Mode>() {
            Ok(m) => out.push(m),
            Err(e) => {
                let letters: Option<Vec<Mode>> = tok.chars().map(Mode::from_code).collect();
                out.extend(letters.ok_or(e)?);
            }
        }
    }
    if out.is_empty() {
        return Err("no modes given".into());
    }
    Ok(Modes(out))
}

fn run_config(a: RunArgs) -> Result<RunConfig, RunError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = a.input {
        cfg.input = InputConfig {
            dir: Some(dir),
            ..InputConfig::default()
        };
    }
    if let Some(v) = a.city_id {
        cfg.city_id = v;
    }
    if let Some(v) = a.provider {
        cfg.provider.kind = v;
    }
    if a.nodes.is_some() {
        cfg.provider.nodes = a.nodes;
    }
    if a.edges.is_some() {
        cfg.provider.edges = a.edges;
    }
    if a.isolines.is_some() {
        cfg.provider.isolines = a.isolines;
    }
    if let Some(v) = a.budget_min {
        cfg.budget_min = v;
    }
    if let Some(Modes(v)) = a.modes {
        cfg.modes = v;
    }
    if let Some(v) = a.min_visits {
        cfg.min_visits = v;
    }
    if let Some(v) = a.weighting {
        cfg.weighting = v;
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<(), RunError> {
    let cfg = run_config(a)?;
    let report = pipeline::run(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let c = &report.counts;
    println!(
        "{}: {} indicator rows for {} CBGs ({} excluded, {} failed items) in {:.0} ms",
        cfg.out.display(),
        c.indicator_rows,
        c.cbgs_processed,
        c.cbgs_excluded,
        c.failures,
        report.timing.total_ms
    );
    for (name, digest) in &report.digests {
        println!("  {digest}  {name}");
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), RunError> {
    let mut spec = match &a.spec {
        Some(p) => pipeline::load_synth_spec(p)?,
        None => SynthSpec::default(),
    };
    if let Some(n) = a.cbgs {
        spec.n_cbgs = n;
    }
    if let Some(n) = a.pois {
        spec.n_pois = n;
    }
    if let Some(f) = a.near_fraction {
        spec.plant.get_or_insert_with(PlantSpec::default).near_fraction = f;
    }
    let paths = pipeline::synth_to_dir(&spec, a.seed, &a.out)?;
    for p in [&paths.pois, &paths.cbgs, &paths.flows] {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), RunError> {
    let (paths, mut min_visits) = match (&a.input, &a.config) {
        (Some(dir), _) => (CityPaths::in_dir(dir), RunConfig::default().min_visits),
        (None, Some(cfg)) => {
            let cfg = RunConfig::from_path(cfg)?;
            (cfg.input.paths()?, cfg.min_visits)
        }
        (None, None) => return Err(RunError::Config("validate needs --input or --config".into())),
    };
    if let Some(v) = a.min_visits {
        min_visits = v;
    }
    let issues = pipeline::validate_inputs(&paths, min_visits)?;
    for issue in &issues {
        println!("{issue}");
    }
    println!("{} issues", issues.len());
    if issues.is_empty() {
        Ok(())
    } else {
        Err(RunError::Input(format!("{} data-quality issue(s) found", issues.len())))
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 1),
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
