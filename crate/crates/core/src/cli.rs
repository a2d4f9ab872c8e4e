//! `scentgen` command line: ingest, train, generate, validate, select-sensors,
//! metrics-plot. Machine-readable output goes to stdout or files, human
//! summaries to stderr.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chemrules;
use crate::dataio::{self, DataError};
use crate::diffusion::{self, Checkpoint, DiffusionError, EpochMetrics, ModelDims, TrainConfig, TrainingExample};
use crate::generator::{self, BondSource, Corpus, GenerationConfig, GenerationError, Generator, Mode};
use crate::sensorselect::{self, Scenario, SensorError};
use crate::smiles;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_VALIDATION_FAILED: i32 = 4;

pub const MIN_STEPS: usize = 800;
pub const MAX_STEPS: usize = 1200;

#[derive(Debug, Parser)]
#[command(name = "scentgen", version, about = "Descriptor-conditioned molecule generation and sensor selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a dataset and report its vocabulary and split sizes.
    Ingest {
        /// CSV with header `smiles,descriptors`
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train {
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Training config JSON; flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the checkpoint path with a `.metrics.csv` extension.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Sample molecules for a descriptor query.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON `{"descriptors": [...], "count": n}`
        #[arg(long)]
        query: PathBuf,
        /// Overrides the query's count.
        #[arg(short)]
        n: Option<usize>,
        /// JSONL output, one report per line.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        n_atoms: Option<usize>,
        /// Type bonds from atomic numbers instead of the classifier.
        #[arg(long)]
        heuristic_bonds: bool,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Validate one SMILES per line.
    Validate { smiles_file: PathBuf },
    /// Choose sensors for a scenario.
    SelectSensors {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = SelectMode::Add)]
        mode: SelectMode,
        /// Exhaustive search (at most 20 sensors) instead of greedy.
        #[arg(long)]
        exact: bool,
        /// Expand targets with generated molecules from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        descriptors: Vec<String>,
        #[arg(long, default_value_t = 0)]
        count: usize,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Render a metrics CSV as an SVG line chart.
    MetricsPlot {
        metrics: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub constrained: bool,
    #[arg(long, value_delimiter = ',')]
    pub allowlist: Option<Vec<String>>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMode {
    Add,
    Subtract,
}

#[derive(Debug)]
pub enum CliError {
    BadInput(String),
    Diverged(String),
    Internal(String),
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadInput(_) => EXIT_BAD_INPUT,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::ValidationFailed(_) => EXIT_VALIDATION_FAILED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::BadInput(m) => write!(f, "bad input: {m}"),
            CliError::Diverged(m) => write!(f, "training diverged: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
            CliError::ValidationFailed(n) => write!(f, "{n} molecule(s) failed validation"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::BadInput(e.to_string())
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::DivergedLoss { .. } => CliError::Diverged(e.to_string()),
            DiffusionError::Egnn(_) | DiffusionError::Num(_) => CliError::Internal(e.to_string()),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Diffusion(d) => d.into(),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

impl From<SensorError> for CliError {
    fn from(e: SensorError) -> Self {
        match e {
            SensorError::Generation(g) => g.into(),
            other => CliError::BadInput(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_INPUT } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { data, seed } => cmd_ingest(&data, seed),
        Command::Train {
            data,
            out,
            config,
            metrics,
            epochs,
            common,
        } => {
            let metrics = metrics.unwrap_or_else(|| out.with_extension("metrics.csv"));
            cmd_train(&data, config.as_deref(), epochs, &common, &out, &metrics)
        }
        Command::Generate {
            checkpoint,
            query,
            n,
            out,
            n_atoms,
            heuristic_bonds,
            common,
        } => cmd_generate(&checkpoint, &query, n, &out, n_atoms, heuristic_bonds, &common),
        Command::Validate { smiles_file } => cmd_validate(&smiles_file),
        Command::SelectSensors {
            scenario,
            mode,
            exact,
            checkpoint,
            descriptors,
            count,
            common,
        } => cmd_select_sensors(&scenario, mode, exact, checkpoint.as_deref(), &descriptors, count, &common),
        Command::MetricsPlot { metrics, out } => cmd_metrics_plot(&metrics, &out),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))
}

fn print_stdout(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn check_steps(steps: usize) -> Result<usize, CliError> {
    if (MIN_STEPS..=MAX_STEPS).contains(&steps) {
        Ok(steps)
    } else {
        Err(CliError::BadInput(format!(
            "--steps must be within {MIN_STEPS}..={MAX_STEPS}, got {steps}"
        )))
    }
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    molecules: usize,
    skipped: usize,
    vocabulary: Vec<String>,
    train: usize,
    test: usize,
    seed: u64,
}

pub fn cmd_ingest(data: &Path, seed: u64) -> Result<(), CliError> {
    let ds = dataio::load_csv(data)?;
    let split = dataio::split_80_20(&ds.molecules, seed)?;
    let summary = IngestSummary {
        molecules: ds.molecules.len(),
        skipped: ds.skipped,
        vocabulary: ds.vocabulary.terms().to_vec(),
        train: split.train.len(),
        test: split.test.len(),
        seed,
    };
    eprintln!(
        "{} molecules ({} skipped), {} descriptors, split {}/{}",
        summary.molecules,
        summary.skipped,
        summary.vocabulary.len(),
        summary.train,
        summary.test
    );
    print_stdout(&(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))
}

pub fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    epochs: Option<usize>,
    common: &CommonFlags,
    out: &Path,
    metrics_path: &Path,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::BadInput(format!("{}: {e}", p.display())))?;
            TrainConfig::from_json(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = common.steps {
        cfg.steps = check_steps(s)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.tau {
        cfg.sample_tau = t;
    }
    if common.constrained {
        cfg.constrained = true;
    }
    if let Some(a) = &common.allowlist {
        cfg.allowlist = a.clone();
    }
    cfg.validate()?;

    let every = (cfg.epochs / 10).max(1);
    let (ckpt, metrics) = train_checkpoint(data, cfg, |m: &EpochMetrics| {
        if m.epoch.is_multiple_of(every) {
            eprintln!("epoch {:>5}  mse {:.4}  ce {:.4}  total {:.4}", m.epoch, m.mse_loss, m.ce_loss, m.total_loss);
        }
    })?;
    diffusion::write_metrics_csv(metrics_path, &metrics)?;
    ckpt.save(out)?;
    eprintln!("wrote {} and {}", out.display(), metrics_path.display());
    Ok(())
}

/// Loads `data`, trains on its 80% split and packages the result.
pub fn train_checkpoint(
    data: &Path,
    cfg: TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Checkpoint, Vec<EpochMetrics>), CliError> {
    cfg.validate()?;
    let ds = dataio::load_csv(data)?;
    let split = dataio::split_80_20(&ds.molecules, cfg.seed)?;
    let examples: Vec<TrainingExample> = split
        .train
        .iter()
        .map(|m| TrainingExample::from_graph(&m.graph, dataio::multi_hot(&m.descriptors, &ds.vocabulary).y))
        .collect();
    let atom_counts = split.train.iter().map(|m| m.graph.num_atoms()).collect();
    let init = diffusion::init_params(
        &ModelDims::new(ds.vocabulary.len()),
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    );
    let trained = diffusion::train(&examples, &cfg, init, on_epoch)?;
    let ckpt = Checkpoint::new(
        cfg,
        ds.vocabulary.terms().to_vec(),
        atom_counts,
        trained.params,
        trained.optimizer,
    );
    Ok((ckpt, trained.metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub descriptors: Vec<String>,
    #[serde(default = "default_count")]
    pub count: usize,
}

fn default_count() -> usize {
    10
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if !path.exists() {
        return Err(CliError::BadInput(format!("checkpoint not found: {}", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

fn generation_config(ckpt: &Checkpoint, common: &CommonFlags) -> Result<GenerationConfig, CliError> {
    let steps = match common.steps {
        Some(s) => check_steps(s)?,
        None => ckpt.config.steps,
    };
    let constrained = common.constrained || ckpt.config.constrained;
    let cfg = GenerationConfig {
        mode: if constrained { Mode::Constrained } else { Mode::Unconstrained },
        allowlist: common.allowlist.clone().unwrap_or_else(|| ckpt.config.allowlist.clone()),
        n_atoms: None,
        steps,
        tau: common.tau.unwrap_or(ckpt.config.sample_tau),
        seed: common.seed.unwrap_or(ckpt.config.seed),
        bond_source: BondSource::Classifier,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_generate(
    checkpoint: &Path,
    query: &Path,
    n: Option<usize>,
    out: &Path,
    n_atoms: Option<usize>,
    heuristic_bonds: bool,
    common: &CommonFlags,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let text = std::fs::read_to_string(query).map_err(|e| CliError::BadInput(format!("{}: {e}", query.display())))?;
    let q: Query = serde_json::from_str(&text).map_err(|e| CliError::BadInput(format!("query: {e}")))?;
    let mut cfg = generation_config(&ckpt, common)?;
    cfg.n_atoms = n_atoms;
    if heuristic_bonds {
        cfg.bond_source = BondSource::Heuristic;
    }
    cfg.validate()?;
    let count = n.unwrap_or(q.count);
    let gen = Generator::from_checkpoint(&ckpt, Corpus::bundled())?;
    let y = gen.encode(&q.descriptors);
    if y.iter().all(|&v| v == 0.0) && !q.descriptors.is_empty() {
        log::warn!("no query descriptor is in the vocabulary; conditioning on all zeros");
    }
    let reports = gen.sample_many(&y, &cfg, count)?;
    write_file(out, generator::reports_to_jsonl(&reports).as_bytes())?;
    if reports.is_empty() {
        eprintln!("0 samples requested; wrote empty {}", out.display());
        return print_stdout("{\"samples\":0}\n");
    }
    let summary = generator::summarize(&reports, &cfg)?;
    let label = match cfg.mode {
        Mode::Constrained => format!("constrained ({})", cfg.allowlist.join(", ")),
        Mode::Unconstrained => "unconstrained".to_owned(),
    };
    eprint!("{}", generator::validity_table(&[(&label, &summary)]));
    print_stdout(&(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))
}

#[derive(Debug, Serialize)]
struct LineVerdict<'a> {
    line: usize,
    smiles: &'a str,
    pass: bool,
    canonical: Option<String>,
    failed_stage: Option<&'static str>,
    detail: String,
}

pub fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let (mut total, mut failed) = (0, 0);
    for (k, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        total += 1;
        let verdict = match smiles::parse(s) {
            Err(e) => LineVerdict {
                line: k + 1,
                smiles: s,
                pass: false,
                canonical: None,
                failed_stage: Some("parse"),
                detail: e.to_string(),
            },
            Ok(g) => {
                let (clean, report) = chemrules::sanitize_graph(&g);
                let stage = report.first_failure();
                LineVerdict {
                    line: k + 1,
                    smiles: s,
                    pass: report.final_verdict,
                    canonical: report.final_verdict.then(|| smiles::canonicalize(&clean).ok()).flatten(),
                    failed_stage: stage.map(|st| st.name()),
                    detail: stage
                        .and_then(|st| report.stage(st))
                        .map(|r| r.detail.clone())
                        .unwrap_or_default(),
                }
            }
        };
        if !verdict.pass {
            failed += 1;
        }
        out.push_str(&serde_json::to_string(&verdict).expect("serializable"));
        out.push('\n');
    }
    print_stdout(&out)?;
    eprintln!("{total} molecule(s), {failed} failed");
    if failed > 0 {
        Err(CliError::ValidationFailed(failed))
    } else {
        Ok(())
    }
}

pub fn cmd_select_sensors(
    scenario: &Path,
    mode: SelectMode,
    exact: bool,
    checkpoint: Option<&Path>,
    descriptors: &[String],
    count: usize,
    common: &CommonFlags,
) -> Result<(), CliError> {
    let mut sc = Scenario::load(scenario)?;
    if let Some(ck) = checkpoint {
        let ckpt = load_checkpoint(ck)?;
        let cfg = generation_config(&ckpt, common)?;
        let gen = Generator::from_checkpoint(&ckpt, Corpus::bundled())?;
        let expanded = sensorselect::expand_targets(descriptors, &sc.targets, &gen, &cfg, count)?;
        sc.targets = expanded.into_iter().collect();
    }
    let problem = sc.problem()?;
    let result = match mode {
        SelectMode::Add if exact => sensorselect::exact_cover(&problem)?,
        SelectMode::Add => sensorselect::greedy_cover(&problem),
        SelectMode::Subtract => {
            let current = if sc.current.is_empty() {
                sc.sensors.iter().map(|s| s.id.clone()).collect()
            } else {
                sc.current.clone()
            };
            sensorselect::subtractive_prune(&current, &problem)?
        }
    };
    eprintln!(
        "{} of {} sensors chosen, {} target(s) covered, {} uncovered, cost {}",
        result.chosen.len(),
        sc.sensors.len(),
        result.covered.len(),
        result.uncovered.len(),
        result.total_cost
    );
    print_stdout(&(serde_json::to_string_pretty(&result).expect("serializable") + "\n"))
}

pub fn cmd_metrics_plot(metrics: &Path, out: &Path) -> Result<(), CliError> {
    if !metrics.exists() {
        return Err(CliError::BadInput(format!("not found: {}", metrics.display())));
    }
    let rows = diffusion::read_metrics_csv(metrics)?;
    write_file(out, metrics_svg(&rows).as_bytes())
}

/// Line chart of the three loss series against epoch.
pub fn metrics_svg(rows: &[EpochMetrics]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;
    type Series = (&'static str, &'static str, fn(&EpochMetrics) -> f64);
    let series: [Series; 3] = [
        ("mse_loss", "#1f77b4", |m| m.mse_loss),
        ("ce_loss", "#ff7f0e", |m| m.ce_loss),
        ("total_loss", "#2ca02c", |m| m.total_loss),
    ];
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let (e0, e1) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.epoch as f64, b.epoch as f64),
        _ => (0.0, 1.0),
    };
    let ymax = rows
        .iter()
        .flat_map(|m| series.iter().map(move |s| finite((s.2)(m))))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let x = |e: f64| if e1 > e0 { PAD + (e - e0) / (e1 - e0) * (W - 2.0 * PAD) } else { W / 2.0 };
    let y = |v: f64| H - PAD - finite(v) / ymax * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12">epoch</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(svg, r#"<text x="4" y="{}" font-size="12">{ymax:.3}</text>"#, PAD);
    for (k, (name, color, f)) in series.iter().enumerate() {
        let points: Vec<String> = rows
            .iter()
            .map(|m| format!("{:.2},{:.2}", x(m.epoch as f64), y(f(m))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{name}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            W - PAD - 90.0,
            PAD + 16.0 * k as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(epoch: usize, v: f64) -> EpochMetrics {
        EpochMetrics {
            epoch,
            mse_loss: v,
            ce_loss: v / 2.0,
            total_loss: 1.5 * v,
        }
    }

    #[test]
    fn svg_has_three_polylines() {
        let rows: Vec<EpochMetrics> = (1..=1000).map(|e| m(e, 1.0 / e as f64)).collect();
        let svg = metrics_svg(&rows);
        assert_eq!(svg.matches("<polyline").count(), 3);
        let one = metrics_svg(&[m(1, 2.0)]);
        assert_eq!(one.matches("<polyline").count(), 3);
        assert!(!one.contains("NaN"));
    }

    #[test]
    fn steps_range() {
        assert!(check_steps(799).is_err());
        assert!(check_steps(800).is_ok());
        assert!(check_steps(1200).is_ok());
        assert!(check_steps(1201).is_err());
    }

    #[test]
    fn error_mapping() {
        let d = DiffusionError::DivergedLoss {
            epoch: 1,
            loss: 1e9,
            initial: 1.0,
        };
        assert_eq!(CliError::from(d).exit_code(), EXIT_DIVERGED);
        assert_eq!(CliError::from(DataError::EmptyDataset).exit_code(), EXIT_BAD_INPUT);
        assert_eq!(CliError::ValidationFailed(2).exit_code(), EXIT_VALIDATION_FAILED);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["scentgen", "no-such-command"]), EXIT_BAD_INPUT);
        assert_eq!(run(["scentgen", "train"]), EXIT_BAD_INPUT);
    }
}
