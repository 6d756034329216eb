//! Command-line driver: `generate`, `simulate`, `theory`, `compare`, `sweep` and
//! `reproduce figN`, all configured by one JSON file.
//!
//! Every command writes into `--out` (or `$RERCEFED_OUT`). A `.failed` marker is created
//! before the first artifact and removed only after the manifest is written, so an
//! interrupted or failed run never looks complete.

pub mod config;
pub mod figures;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::algorithms::Variant;
use crate::channel::{ChannelConfig, SchedulerConfig};
use crate::dataset::{generate_problem, PerClient, Prepared};
use crate::error::Error;
use crate::harness::{
    bias_curves, compare_theory_sim, run_monte_carlo_prepared, write_bias_csv, write_comparison_csv, write_curves_csv,
    ComparisonRow, LearningCurve,
};
use crate::theory::{SteadyStateAnalysis, TheoryReport};

pub use config::{merge_patch, validate_str, validate_value, Config, SweepParameter, Validated};
pub use figures::{preset, FigureId, FigurePlan, Panel, PanelKind};

pub const OUT_ENV: &str = "RERCEFED_OUT";
pub const FAILED_MARKER: &str = ".failed";

#[derive(Debug, Parser)]
#[command(name = "rercefed", version, about = "Federated WLS over noisy links: simulation, theory and figure protocols")]
pub struct Cli {
    /// Experiment file (JSON). For `reproduce` it is a merge patch applied to every panel.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV, default_value = "rercefed-out")]
    pub out: PathBuf,
    /// Overrides dataset.seed and harness.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides algorithm.variants (repeatable or comma separated).
    #[arg(long = "variant", global = true, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the problem instance and save it as JSON.
    Generate,
    /// Monte Carlo learning curves for the configured variants.
    Simulate,
    /// Steady-state theory for the configured channel and cardinality.
    Theory,
    /// Theory against simulation at the configured point.
    Compare,
    /// Theory against simulation over the `sweep` section.
    Sweep,
    /// Run the protocol behind one figure.
    Reproduce {
        #[arg(value_name = "FIGURE", required_unless_present = "figure")]
        target: Option<String>,
        #[arg(long, conflicts_with = "target")]
        figure: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Simulate => "simulate",
            Command::Theory => "theory",
            Command::Compare => "compare",
            Command::Sweep => "sweep",
            Command::Reproduce { .. } => "reproduce",
        }
    }
}

/// Failure of a command: either a list of configuration problems or a runtime error.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(vec![m]),
            other => CliError::Run(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }

    /// The single machine-readable line printed on failure.
    pub fn to_line(&self) -> String {
        let v = match self {
            CliError::Config(errs) => json!({"status": "error", "kind": "config", "errors": errs}),
            CliError::Run(e) => json!({"status": "error", "kind": "runtime", "errors": [e.to_string()]}),
        };
        v.to_string()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Output directory guarded by a `.failed` marker.
pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        fs::write(root.join(FAILED_MARKER), "incomplete: run in progress\n")?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn file(&mut self, name: &str) -> PathBuf {
        if let Some(parent) = Path::new(name).parent() {
            let _ = fs::create_dir_all(self.root.join(parent));
        }
        self.outputs.push(name.to_string());
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn finish(mut self, mut manifest: Value) -> CliResult<()> {
        self.outputs.push("manifest.json".into());
        manifest["outputs"] = json!(self.outputs);
        let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        fs::write(self.root.join("manifest.json"), text + "\n")?;
        fs::remove_file(self.root.join(FAILED_MARKER))?;
        Ok(())
    }

    fn fail(&self, err: &CliError) {
        let _ = fs::write(self.root.join(FAILED_MARKER), err.to_line() + "\n");
    }
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn manifest(command: &str, body: Value) -> Value {
    let mut m = json!({
        "tool": "rercefed",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created_unix": unix_time(),
    });
    if let (Some(m), Some(b)) = (m.as_object_mut(), body.as_object()) {
        for (k, v) in b {
            m.insert(k.clone(), v.clone());
        }
    }
    m
}

fn seeds(cfg: &Config) -> Value {
    json!({
        "dataset": cfg.dataset.seed,
        "master": cfg.harness.seed,
        "channel": cfg.channel.seed,
        "scheduler": cfg.scheduler().seed,
    })
}

fn apply_flags(cfg: &mut Config, cli: &Cli) {
    if let Some(s) = cli.seed {
        cfg.dataset.seed = s;
        cfg.harness.seed = s;
    }
    if !cli.variants.is_empty() {
        cfg.algorithm.variants = cli.variants.clone();
    }
}

/// Reads, validates and applies command-line overrides.
fn load_config(cli: &Cli) -> CliResult<Validated> {
    let Some(path) = &cli.config else {
        return Err(CliError::Config(vec!["--config is required for this command".into()]));
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    let mut v = validate_str(&text).map_err(CliError::Config)?;
    apply_flags(&mut v.config, cli);
    let errs = v.config.violations();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    Ok(v)
}

fn prepare(cfg: &Config) -> CliResult<Prepared> {
    let problem = generate_problem(&cfg.dataset)?;
    Ok(Prepared::new(&problem, cfg.algorithm.rho)?)
}

fn cardinality(cfg: &Config) -> CliResult<usize> {
    cfg.cardinality()
        .ok_or_else(|| CliError::Config(vec!["scheduler: theory needs FixedCardinality scheduling".into()]))
}

fn write_steady_csv(curves: &[LearningCurve], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["variant", "steady_nmse_db", "steady_stderr_db", "trials", "diverged"])
        .map_err(Error::from)?;
    for c in curves {
        w.write_record([
            c.variant.name().to_string(),
            format!("{:.6}", c.steady.nmse_db),
            format!("{:.6}", c.steady.stderr_db),
            c.steady.trials.to_string(),
            c.steady.diverged.to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn write_theory_csv(rep: &TheoryReport, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["quantity", "value", "nmse_db"]).map_err(Error::from)?;
    for (name, v, db) in [
        ("steady_state_mse", rep.steady_state_mse, rep.nmse_db),
        ("noise_floor", rep.noise_floor, rep.noise_floor_db),
        ("link_noise", rep.link_noise, rep.link_noise_db),
        ("link_noise_uplink", rep.link_noise_uplink, rep.uplink_db),
        ("link_noise_downlink", rep.link_noise_downlink, rep.downlink_db),
    ] {
        w.write_record([name.to_string(), format!("{v:e}"), format!("{db:.6}")])
            .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn curve_summary(curves: &[LearningCurve]) -> String {
    curves
        .iter()
        .map(|c| {
            format!(
                "{} steady_nmse_db={:.3} (±{:.3}, {} diverged)",
                c.variant, c.steady.nmse_db, c.steady.stderr_db, c.steady.diverged
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn simulate(cfg: &Config, out: &mut OutputDir, prefix: &str) -> CliResult<(Vec<LearningCurve>, Value)> {
    let prep = prepare(cfg)?;
    let curves = run_monte_carlo_prepared(&prep, &cfg.experiment())?;
    write_curves_csv(&curves, cfg.harness.csv_stride, out.file(&format!("{prefix}curves.csv")))?;
    write_steady_csv(&curves, &out.file(&format!("{prefix}steady.csv")))?;
    if cfg.harness.track_bias {
        let mut w = csv::Writer::from_path(out.file(&format!("{prefix}bias.csv"))).map_err(Error::from)?;
        w.write_record(["round", "variant", "bias"]).map_err(Error::from)?;
        for c in &curves {
            for (n, b) in c.bias.iter().flatten().enumerate() {
                w.write_record([n.to_string(), c.variant.name().to_string(), format!("{b:e}")])
                    .map_err(Error::from)?;
            }
        }
        w.flush()?;
    }
    let steady: Vec<Value> = curves
        .iter()
        .map(|c| json!({"variant": c.variant, "steady": c.steady, "rounds_run": c.nmse_db.len() - 1}))
        .collect();
    Ok((curves, json!(steady)))
}

fn sweep_rows(cfg: &Config) -> CliResult<Vec<ComparisonRow>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["sweep: section required for this command".into()]))?;
    let prep = prepare(cfg)?;
    let exp = cfg.experiment();
    match sweep.parameter {
        SweepParameter::Cardinality => {
            let mut rows = Vec::new();
            for &c in &sweep.values {
                let mut e = exp.clone();
                e.scheduler = Some(SchedulerConfig::fixed(c as usize).with_seed(cfg.scheduler().seed));
                let mut r = compare_theory_sim(&prep, &e, &[(c, cfg.channel.clone())], cfg.theory.clone())?;
                rows.append(&mut r.rows);
            }
            Ok(rows)
        }
        p => {
            cardinality(cfg)?;
            let points: Vec<(f64, ChannelConfig)> = sweep
                .values
                .iter()
                .map(|&v| {
                    let mut ch = cfg.channel.clone();
                    if matches!(p, SweepParameter::UplinkVariance | SweepParameter::LinkVariance) {
                        ch.uplink_variances = PerClient::Uniform(v);
                    }
                    if matches!(p, SweepParameter::DownlinkVariance | SweepParameter::LinkVariance) {
                        ch.downlink_variances = PerClient::Uniform(v);
                    }
                    (v, ch)
                })
                .collect();
            Ok(compare_theory_sim(&prep, &exp, &points, cfg.theory.clone())?.rows)
        }
    }
}

fn write_sweep(rows: Vec<ComparisonRow>, cfg: &Config, out: &mut OutputDir, prefix: &str) -> CliResult<Value> {
    let prep_norm = rows.first().map_or(f64::NAN, |r| r.theory.normalization);
    let report = crate::harness::ComparisonReport {
        rows,
        normalization: prep_norm,
        normalization_note: crate::harness::NORMALIZATION_NOTE,
        config: cfg.experiment(),
    };
    write_comparison_csv(&report, out.file(&format!("{prefix}sweep.csv")))?;
    let curves: Vec<LearningCurve> = report.rows.iter().map(|r| r.curve.clone()).collect();
    {
        let mut w = csv::Writer::from_path(out.file(&format!("{prefix}sweep_curves.csv"))).map_err(Error::from)?;
        w.write_record(["sweep_param", "round", "nmse_db_mean", "nmse_db_stderr", "diverged_count"])
            .map_err(Error::from)?;
        let stride = cfg.harness.csv_stride.max(1) as usize;
        for (r, c) in report.rows.iter().zip(&curves) {
            let last = c.nmse_db.len() - 1;
            for n in (0..=last).filter(|n| n % stride == 0 || *n == last) {
                w.write_record([
                    format!("{:e}", r.sweep_param),
                    n.to_string(),
                    format!("{:.6}", c.nmse_db[n]),
                    format!("{:.6}", c.stderr_db[n]),
                    c.diverged[n].to_string(),
                ])
                .map_err(Error::from)?;
            }
        }
        w.flush()?;
    }
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "sweep_param": r.sweep_param,
                "theory_db": r.theory_db,
                "sim_db": r.sim_db,
                "sim_stderr_db": r.sim_stderr_db,
                "gap_db": r.gap_db,
                "theory_horizon_db": r.theory_horizon_db,
                "diverged": r.diverged,
                "uplink_db": r.theory.uplink_db,
                "downlink_db": r.theory.downlink_db,
                "noise_floor_db": r.theory.noise_floor_db,
                "unit_residual_max": r.theory.unit_residual_max,
            })
        })
        .collect();
    Ok(json!({
        "normalization": report.normalization,
        "normalization_note": report.normalization_note,
        "rows": rows,
    }))
}

fn max_gap(v: &Value) -> f64 {
    v["rows"]
        .as_array()
        .map(|rows| rows.iter().filter_map(|r| r["gap_db"].as_f64()).map(f64::abs).fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

fn run_reproduce(cli: &Cli, id: FigureId, out: &mut OutputDir) -> CliResult<(Value, String)> {
    let mut plan = preset(id);
    let patch = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?;
            if text.trim().is_empty() {
                None
            } else {
                Some(serde_json::from_str::<Value>(&text).map_err(|e| CliError::Config(vec![format!("not valid JSON: {e}")]))?)
            }
        }
        None => None,
    };
    let mut errors = Vec::new();
    for panel in &mut plan.panels {
        let mut v = panel.config.to_value();
        if let Some(p) = &patch {
            merge_patch(&mut v, p);
        }
        match validate_value(&v) {
            Ok(val) => {
                panel.config = val.config;
                apply_flags(&mut panel.config, cli);
                errors.extend(panel.config.violations().into_iter().map(|e| format!("{}: {e}", panel.label)));
            }
            Err(es) => errors.extend(es.into_iter().map(|e| format!("{}: {e}", panel.label))),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let mut results = Vec::new();
    let mut summary = Vec::new();
    for panel in &plan.panels {
        let prefix = format!("{}/", panel.label);
        let res = match &panel.kind {
            PanelKind::Curves => {
                let (curves, v) = simulate(&panel.config, out, &prefix)?;
                summary.push(format!("{}: {}", panel.label, curve_summary(&curves)));
                v
            }
            PanelKind::Sweep => {
                let rows = sweep_rows(&panel.config)?;
                let v = write_sweep(rows, &panel.config, out, &prefix)?;
                summary.push(format!("{}: max |gap| {:.2} dB", panel.label, max_gap(&v)));
                v
            }
            PanelKind::Bias { trial_counts, stride } => {
                let prep = prepare(&panel.config)?;
                let b = bias_curves(&prep, &panel.config.experiment(), trial_counts, *stride)?;
                write_bias_csv(&b, out.file(&format!("{prefix}bias.csv")))?;
                let finals: Vec<Value> = b
                    .curves
                    .iter()
                    .map(|(m, c)| json!({"num_trials": m, "final_bias": c.last()}))
                    .collect();
                summary.push(format!(
                    "{}: final bias {}",
                    panel.label,
                    b.curves
                        .iter()
                        .map(|(m, c)| format!("M={m}:{:.3e}", c.last().copied().unwrap_or(f64::NAN)))
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
                json!(finals)
            }
        };
        results.push(json!({"label": panel.label, "kind": panel.kind, "resolved_config": panel.config, "seeds": seeds(&panel.config), "results": res}));
    }
    let body = json!({
        "figure": id,
        "description": plan.description,
        "assumed": plan.assumed,
        "panels": results,
    });
    Ok((body, format!("reproduce {id}: {}", summary.join(" | "))))
}

fn execute(cli: &Cli, out: &mut OutputDir) -> CliResult<(Value, String)> {
    match &cli.command {
        Command::Reproduce { target, figure } => {
            let name = target.as_deref().or(figure.as_deref()).unwrap_or_default();
            let id: FigureId = name.parse().map_err(|e: Error| CliError::Config(vec![e.to_string()]))?;
            run_reproduce(cli, id, out)
        }
        cmd => {
            let v = load_config(cli)?;
            let cfg = &v.config;
            let base = json!({
                "resolved_config": cfg,
                "defaulted": v.defaulted,
                "seeds": seeds(cfg),
            });
            let mut body = base;
            let summary = match cmd {
                Command::Generate => {
                    let problem = generate_problem(&cfg.dataset)?;
                    problem.save_json(out.file("problem.json"))?;
                    let prep = Prepared::new(&problem, cfg.algorithm.rho)?;
                    body["w_star_norm"] = json!(prep.w_star.norm());
                    format!(
                        "generate: K={} L={} rows={} -> {}",
                        problem.num_clients(),
                        problem.dim(),
                        problem.clients.iter().map(|c| c.rows()).sum::<usize>(),
                        out.root().display()
                    )
                }
                Command::Simulate => {
                    let (curves, v) = simulate(cfg, out, "")?;
                    body["results"] = v;
                    format!("simulate: {}", curve_summary(&curves))
                }
                Command::Theory => {
                    let prep = prepare(cfg)?;
                    let an = SteadyStateAnalysis::new(&prep, cardinality(cfg)?, cfg.theory.clone())?;
                    let rep = an.report(&prep, &cfg.channel)?;
                    let text = serde_json::to_string_pretty(&rep.to_json()?).map_err(Error::from)?;
                    fs::write(out.file("theory.json"), text + "\n")?;
                    write_theory_csv(&rep, &out.file("theory.csv"))?;
                    format!(
                        "theory: nmse_db={:.3} (floor {:.3}, link {:.3})",
                        rep.nmse_db, rep.noise_floor_db, rep.link_noise_db
                    )
                }
                Command::Compare => {
                    let prep = prepare(cfg)?;
                    let rep = compare_theory_sim(
                        &prep,
                        &cfg.experiment(),
                        &[(0.0, cfg.channel.clone())],
                        cfg.theory.clone(),
                    )?;
                    let r = &rep.rows[0];
                    let line = format!(
                        "compare: theory_db={:.3} sim_db={:.3} gap_db={:.3}",
                        r.theory_db, r.sim_db, r.gap_db
                    );
                    write_comparison_csv(&rep, out.file("comparison.csv"))?;
                    let text = serde_json::to_string_pretty(&r.theory.to_json()?).map_err(Error::from)?;
                    fs::write(out.file("theory.json"), text + "\n")?;
                    body["results"] = json!({
                        "normalization": rep.normalization,
                        "normalization_note": rep.normalization_note,
                        "theory_db": r.theory_db,
                        "sim_db": r.sim_db,
                        "sim_stderr_db": r.sim_stderr_db,
                        "gap_db": r.gap_db,
                        "theory_horizon_db": r.theory_horizon_db,
                    });
                    line
                }
                Command::Sweep => {
                    let rows = sweep_rows(cfg)?;
                    let v = write_sweep(rows, cfg, out, "")?;
                    let line = format!("sweep: {} points, max |gap| {:.2} dB", v["rows"].as_array().map_or(0, |r| r.len()), max_gap(&v));
                    body["results"] = v;
                    line
                }
                Command::Reproduce { .. } => unreachable!(),
            };
            Ok((body, summary))
        }
    }
}

/// Runs one parsed invocation. Returns the summary line on success.
pub fn run(cli: &Cli) -> std::result::Result<String, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config(vec!["--threads must be at least 1".into()]));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut out = OutputDir::create(&cli.out)?;
    match execute(cli, &mut out) {
        Ok((body, summary)) => {
            let mut m = manifest(cli.command.name(), body);
            m["summary"] = json!(summary);
            out.finish(m)?;
            Ok(summary)
        }
        Err(e) => {
            out.fail(&e);
            Err(e)
        }
    }
}

/// Entry point used by the binary: parses `std::env::args`, prints the summary or the
/// error line, and returns the process exit code.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", json!({"status": "error", "kind": "usage", "errors": [e.to_string()]}));
            return 2;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}
