//! `sttc` argument parsing and command dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sttc_core::backbone::Forecaster;
use sttc_core::seed::{sub_seed, SeedComponent};
use sttc_core::snapshot::write_atomically;
use sttc_core::synth::synth_generate;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{fit_backbone, load_data, run_report, validation_metrics};
use crate::report::{compare, render_table, RunReport};
use crate::synthspec::load_synth_spec;
use crate::verify::{run_battery, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "sttc", version, about = "Streaming spectral test-time calibration bench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit scaler and backbone on the training split.
    Train(TrainArgs),
    /// Stream the test split with or without calibration.
    Run(RunArgs),
    /// Compare a baseline report with a calibrated one.
    Compare(CompareArgs),
    /// Run the property battery.
    Verify(VerifyArgs),
    /// Generate a synthetic dataset from a spec file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "strict|listing")]
    pub queue_rule: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_parser = ["on", "off"])]
    pub ttc: Option<String>,
    /// Number of consecutive seeds starting at the configured one.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub baseline: PathBuf,
    pub calibrated: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, hide = true)]
    pub break_bound: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub spec: PathBuf,
    /// Output prefix. Binary, CSV and provenance files get their own extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn build_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for pair in &args.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rule) = &args.queue_rule {
        cfg.set("queue_rule", rule)?;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    write_atomically(path, text.as_bytes()).map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = build_config(&args.cfg)?;
    cfg.validate()?;
    let data = load_data(&cfg, cfg.seed)?;
    let fitted = fit_backbone(&cfg, &data, cfg.seed)?;
    let path = match (&args.cfg.out, &cfg.backbone_file) {
        (Some(out), _) => out.clone(),
        (None, Some(file)) => cfg.resolve(file),
        (None, None) => PathBuf::from("backbone.sttcbk"),
    };
    fitted.save(&path).map_err(|e| CliError::Data(e.to_string()))?;
    let val = validation_metrics(&cfg, &data, &fitted)?;
    println!(
        "backbone {} ({}→{}) written to {}",
        fitted.backbone.kind(),
        fitted.backbone.lookback(),
        fitted.backbone.horizon(),
        path.display()
    );
    match val.mae {
        Some(mae) => println!("val MAE: {mae:.6}"),
        None => println!("val MAE: n/a (no observed labels)"),
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut cfg = build_config(&args.cfg)?;
    if let Some(ttc) = &args.ttc {
        cfg.set("ttc", ttc)?;
    }
    let report = run_report(&cfg, args.seeds)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.cfg.out {
        Some(path) => {
            write_text(path, &text)?;
            let mae = report.aggregate.mae.map_or("n/a".to_string(), |s| format!("{:.6} ± {:.6}", s.mean, s.std));
            println!("ttc {}: test MAE {mae}; report written to {}", if cfg.ttc { "on" } else { "off" }, path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn read_report(path: &Path) -> CliResult<RunReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let base = read_report(&args.baseline)?;
    let cal = read_report(&args.calibrated)?;
    let cmp = compare(&base, &cal)?;
    if let Some(out) = &args.out {
        write_text(out, &(serde_json::to_string_pretty(&cmp)? + "\n"))?;
    }
    print!("{}", render_table(&cmp));
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let cfg = build_config(&args.cfg)?;
    let opts = VerifyOptions {
        seed: cfg.seed,
        break_bound: args.break_bound,
        descent_etas: cfg.descent_etas.clone(),
    };
    let report = run_battery(&opts);
    for c in &report.checks {
        println!("{} {:<28} {:>9.1} ms", if c.passed { "PASS" } else { "FAIL" }, c.name, c.elapsed_ms);
    }
    if let Some(out) = &args.cfg.out {
        write_text(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    match report.first_failure() {
        Some(c) => Err(CliError::Property(format!("{}: {}", c.name, c.detail))),
        None => Ok(()),
    }
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = load_synth_spec(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let seed = spec.seed;
    let mut realized = spec.clone();
    realized.seed = sub_seed(seed, SeedComponent::DataGen);
    let series = synth_generate(&realized)?;

    let base = args.out.with_extension("");
    let name = base
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::Config(format!("bad output prefix {}", args.out.display())))?;
    let sibling = |ext: &str| base.with_file_name(format!("{name}.{ext}"));
    let (bin, csv, prov) = (sibling("bin"), sibling("csv"), sibling("provenance.json"));
    if let Some(dir) = bin.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    let mut bin_bytes = Vec::new();
    series.write_binary(&mut bin_bytes)?;
    let mut csv_bytes = Vec::new();
    series.write_csv(&mut csv_bytes)?;
    write_atomically(&bin, &bin_bytes)?;
    write_atomically(&csv, &csv_bytes)?;

    use sha2::{Digest, Sha256};
    let provenance = json!({
        "spec_file": args.spec.to_string_lossy(),
        "spec": spec,
        "seed": seed,
        "generator_seed": realized.seed,
        "nodes": series.n_nodes(),
        "length": series.len(),
        "files": {
            "binary": { "path": bin.file_name().map(|n| n.to_string_lossy()), "sha256": hex::encode(Sha256::digest(&bin_bytes)) },
            "csv": { "path": csv.file_name().map(|n| n.to_string_lossy()), "sha256": hex::encode(Sha256::digest(&csv_bytes)) },
        },
    });
    write_text(&prov, &(serde_json::to_string_pretty(&provenance)? + "\n"))?;
    println!("wrote {} , {} and {}", bin.display(), csv.display(), prov.display());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Runs the command given by `args`; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sttc: {e}");
            e.exit_code()
        }
    }
}
