//! `segtriage` command line: generate synthetic corpora, validate and score
//! bundles, then correlate, fit and simulate on score files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use segtriage_core::bundle::{decode_bundle, validate_bytes, ValidationReport};
use segtriage_core::score::{score_bundle, ScoreFile, ScoreFormat};
use segtriage_core::sim::{export_curves, run_simulation, Policy, RandomBaseline, SimulationConfig};
use segtriage_core::stats::{correlation_report, correlation_table, fit_quality_model, regression_table};
use segtriage_core::synth::{bundle_files, generate_corpus, write_corpus, GeneratorConfig, Layout};
use serde::Serialize;

/// Share of a corpus used for fitting when `--fit-count` is not given.
pub const DEFAULT_FIT_SHARE: f64 = 0.6;

#[derive(Debug)]
pub struct CliError {
    pub exit_code: u8,
    pub message: String,
}

impl CliError {
    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 1,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::failure(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn fail<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::failure(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "segtriage", version, about = "Uncertainty-based triage of segmentation predictions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of bundles plus manifest.json
    Gen(GenArgs),
    /// Check bundles against the format and its invariants
    Validate(ValidateArgs),
    /// Score bundles: Dice, class uncertainties, mean entropy
    Score(ScoreArgs),
    /// Correlate class uncertainties with per-class Dice
    Correlate(CorrelateArgs),
    /// Fit the quality regression with backward elimination
    Fit(FitArgs),
    /// Simulate forwarding the worst-predicted images to a reviewer
    Simulate(SimulateArgs),
    /// Run the HTTP review queue
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Stripes,
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Directory to write bundles into
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub num_images: usize,
    /// Monte-Carlo passes per image
    #[arg(long, default_value_t = 5)]
    pub passes: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, value_enum, default_value_t = LayoutArg::Stripes)]
    pub layout: LayoutArg,
    #[arg(long, default_value_t = 0.3)]
    pub quality_min: f64,
    #[arg(long, default_value_t = 0.95)]
    pub quality_max: f64,
    /// 1 = uncertainty tracks error exactly, 0 = independent
    #[arg(long, default_value_t = 0.9)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Let background uncertainty track error like the other classes
    #[arg(long)]
    pub coupled_background: bool,
    #[arg(long)]
    pub no_source_image: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Bundle files or directories of .ubnd files
    #[arg(short, long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Bundle files or directories of .ubnd files
    #[arg(short, long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Score file to write; CSV also writes `<stem>.meta.json`
    #[arg(short, long)]
    pub output: PathBuf,
    /// Defaults to json for a .json output, csv otherwise
    #[arg(long, value_enum)]
    pub format: Option<TableFormat>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Score file
    #[arg(short, long)]
    pub input: PathBuf,
    /// Also write the report as JSON
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Score file
    #[arg(short, long)]
    pub input: PathBuf,
    /// Model JSON to write
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Score file
    #[arg(short, long)]
    pub input: PathBuf,
    /// Curves (csv) or full report (json)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Images used to fit the model; default 60% of the labeled corpus
    #[arg(long)]
    pub fit_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Average the random baseline over this many shuffles instead of using
    /// its exact expectation
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SEGTRIAGE_DATA_DIR")]
    pub data_dir: PathBuf,
    #[arg(long, env = "SEGTRIAGE_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// JSON array of [r, g, b] class colours
    #[arg(long, env = "SEGTRIAGE_PALETTE")]
    pub palette: Option<PathBuf>,
}

/// Expands directories into their sorted `.ubnd` files.
pub fn collect_bundles(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            files.extend(bundle_files(input).map_err(fail(input.display()))?);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(CliError::usage(format!("{}: no such file or directory", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::failure("no .ubnd files found"));
    }
    Ok(files)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(fail(path.display()))?;
    fs::write(path, text + "\n").map_err(fail(path.display()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--alpha {alpha} must lie in (0, 1)")))
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Correlate(a) => cmd_correlate(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Serve(a) => cmd_serve(a),
    }
}

pub fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<()> {
    let config = GeneratorConfig {
        num_images: a.num_images,
        passes: a.passes,
        classes: a.classes,
        height: a.height,
        width: a.width,
        layout: match a.layout {
            LayoutArg::Stripes => Layout::Stripes,
            LayoutArg::Blobs => Layout::Blobs,
        },
        quality_range: (a.quality_min, a.quality_max),
        coupling: a.coupling,
        noise_scale: a.noise,
        seed: a.seed,
        background_decoupled: !a.coupled_background,
        with_source_image: !a.no_source_image,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let images = generate_corpus(&config).map_err(fail("generate"))?;
    let manifest = write_corpus(&a.output, &config, &images).map_err(fail(a.output.display()))?;
    writeln!(out, "wrote {} bundles to {}", manifest.images.len(), a.output.display())?;
    Ok(())
}

#[derive(Serialize)]
struct FileReport {
    file: String,
    valid: bool,
    report: ValidationReport,
}

pub fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<()> {
    let files = collect_bundles(&a.input)?;
    let mut reports = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = fs::read(path).map_err(fail(path.display()))?;
        let report = validate_bytes(&bytes);
        reports.push(FileReport {
            file: path.display().to_string(),
            valid: report.is_valid(),
            report,
        });
    }
    let invalid = reports.iter().filter(|r| !r.valid).count();
    match a.format {
        ReportFormat::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&reports).expect("reports serialize"))?;
        }
        ReportFormat::Text => {
            for r in &reports {
                if r.valid {
                    writeln!(out, "ok       {}", r.file)?;
                    continue;
                }
                writeln!(out, "INVALID  {}", r.file)?;
                for v in &r.report.violations {
                    writeln!(out, "         {}", serde_json::to_string(v).expect("violation serializes"))?;
                }
                if r.report.omitted > 0 {
                    writeln!(out, "         ... {} more", r.report.omitted)?;
                }
            }
            writeln!(out, "{} of {} bundles valid", reports.len() - invalid, reports.len())?;
        }
    }
    if invalid > 0 {
        return Err(CliError::failure(format!("{invalid} invalid bundle(s)")));
    }
    Ok(())
}

pub fn cmd_score(a: ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let files = collect_bundles(&a.input)?;
    let mut spec = None;
    let mut records = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = fs::read(path).map_err(fail(path.display()))?;
        let bundle = decode_bundle(&bytes).map_err(fail(path.display()))?;
        match &spec {
            None => spec = Some(bundle.class_spec.clone()),
            Some(s) if s != &bundle.class_spec => {
                return Err(CliError::failure(format!(
                    "{}: classes {:?} differ from {:?} in the rest of the corpus",
                    path.display(),
                    bundle.class_spec.class_names(),
                    s.class_names()
                )))
            }
            Some(_) => {}
        }
        records.push(score_bundle(&bundle).map_err(fail(path.display()))?);
    }
    let labeled = records.iter().filter(|r| r.dice.is_some()).count();
    let file = ScoreFile::new(&spec.expect("at least one bundle"), records);
    let format = match a.format {
        Some(TableFormat::Csv) => ScoreFormat::Csv,
        Some(TableFormat::Json) => ScoreFormat::Json,
        None => ScoreFormat::from_path(&a.output),
    };
    file.save(&a.output, format).map_err(fail(a.output.display()))?;
    writeln!(
        out,
        "scored {} bundles ({labeled} labeled) into {}",
        file.records.len(),
        a.output.display()
    )?;
    Ok(())
}

fn load_scores(path: &Path) -> Result<ScoreFile> {
    ScoreFile::load(path).map_err(fail(path.display()))
}

#[derive(Serialize)]
struct CorrelationOutput<'a> {
    class_names: &'a [String],
    report: segtriage_core::CorrelationReport,
}

pub fn cmd_correlate(a: CorrelateArgs, out: &mut dyn Write) -> Result<()> {
    let scores = load_scores(&a.input)?;
    let report = correlation_report(&scores.correlation_samples()).map_err(fail("correlate"))?;
    let output = CorrelationOutput {
        class_names: &scores.class_names,
        report,
    };
    if let Some(path) = &a.output {
        write_json(path, &output)?;
    }
    match a.format {
        ReportFormat::Text => write!(out, "{}", correlation_table(&output.report, &scores.class_names))?,
        ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&output).expect("serializes"))?,
    }
    Ok(())
}

pub fn cmd_fit(a: FitArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.alpha)?;
    let scores = load_scores(&a.input)?;
    let spec = scores.class_spec().map_err(fail(a.input.display()))?;
    let model = fit_quality_model(&scores.quality_observations(), &spec, a.alpha).map_err(fail("fit"))?;
    if let Some(path) = &a.output {
        fs::write(path, model.to_json() + "\n").map_err(fail(path.display()))?;
    }
    match a.format {
        ReportFormat::Text => write!(out, "{}", regression_table(&model))?,
        ReportFormat::Json => writeln!(out, "{}", model.to_json())?,
    }
    Ok(())
}

/// `round(0.6 n)`, kept within `[C + 2, n - 1]` where possible.
pub fn default_fit_count(n: usize, classes: usize) -> usize {
    let share = (DEFAULT_FIT_SHARE * n as f64).round() as usize;
    share.max(classes + 2).min(n.saturating_sub(1))
}

pub fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    check_alpha(a.alpha)?;
    let scores = load_scores(&a.input)?;
    let spec = scores.class_spec().map_err(fail(a.input.display()))?;
    let corpus = scores.quality_observations();
    let skipped = scores.records.len() - corpus.len();
    let fit_count = a
        .fit_count
        .unwrap_or_else(|| default_fit_count(corpus.len(), spec.num_classes()));
    let mut config = SimulationConfig::new(fit_count, a.seed);
    config.alpha = a.alpha;
    if let Some(trials) = a.trials {
        if trials == 0 {
            return Err(CliError::usage("--trials must be at least 1"));
        }
        config.random_baseline = RandomBaseline::MonteCarlo { trials };
    }
    let report = run_simulation(&corpus, &spec, &config).map_err(fail("simulate"))?;

    if let Some(path) = &a.output {
        match a.format {
            TableFormat::Csv => {
                let file = fs::File::create(path).map_err(fail(path.display()))?;
                export_curves(&report.curves, io::BufWriter::new(file)).map_err(fail(path.display()))?;
            }
            TableFormat::Json => write_json(path, &report)?,
        }
    }

    let n = report.simulation_indices.len();
    if skipped > 0 {
        writeln!(out, "skipped {skipped} unlabeled records")?;
    }
    writeln!(
        out,
        "fit on {} images (R2 {:.3}), simulated on {n}",
        report.fit_indices.len(),
        report.model.r_squared
    )?;
    writeln!(out, "{:>8} {:>12} {:>12} {:>12}", "budget", "uncertainty", "random", "oracle")?;
    let mut budgets: Vec<usize> = (0..=4).map(|q| q * n / 4).collect();
    budgets.dedup();
    let curve = |p: Policy| report.curve(p).expect("all policies simulated");
    for k in budgets {
        writeln!(
            out,
            "{k:>8} {:>12.4} {:>12.4} {:>12.4}",
            curve(Policy::Uncertainty).at(k),
            curve(Policy::Random).at(k),
            curve(Policy::Oracle).at(k)
        )?;
    }
    Ok(())
}

pub fn cmd_serve(a: ServeArgs) -> Result<()> {
    let config = segtriage_service::ServiceConfig {
        data_dir: a.data_dir,
        bind: a.bind,
        palette: a.palette,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(fail("runtime"))?;
    runtime.block_on(segtriage_service::serve(config)).map_err(CliError::failure)
}
