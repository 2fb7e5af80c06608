//! Command-line driver. Every subcommand reads its inputs from files, writes
//! its artifacts into `--out`, and records the resolved arguments in
//! `<command>.manifest.json`. Passing that file back with `--manifest` reruns
//! the command with exactly those arguments.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clustent_core::dataset::class_histogram;
use clustent_core::entropy::{group_entropies, histograms_by_group, rank_groups, GroupEntropy};
use clustent_core::eval::{Condition, ExperimentConfig, ExperimentSummary, TrainConfig};
use clustent_core::pca::{fit_pca, transform};
use clustent_core::simbench::{generate, SimConfig};
use clustent_core::{Assignment, Domain, FeatureTable, KMeansModel, KMeansParams, PcaModel};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self as art, Selection};
use crate::error::{CliError, Result, StageExt};
use crate::io::{load_table, write_table, TableFormat};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "clustent", version, about = "Cluster-entropy selection of the most diverse WSI")]
pub struct Cli {
    /// Seed for every random stage [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Class count of CSV tables
    #[arg(long, global = true)]
    pub classes: Option<usize>,

    /// Rerun from a manifest written by an earlier run of the same subcommand
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check a table and summarize its groups and labels
    Validate(ValidateArgs),
    /// Fit PCA and project the table
    Reduce(ReduceArgs),
    /// k-means++ with Lloyd refinement on a (reduced) table
    Cluster(ClusterArgs),
    /// Per-group cluster entropy from an assignment
    Entropy(EntropyArgs),
    /// Rank groups by entropy and cut high/med/low slices
    Rank(RankArgs),
    /// Pick the highest-entropy group from a ranking
    Select(SelectArgs),
    /// Generate a synthetic source/target benchmark
    Simulate(SimulateArgs),
    /// Retrain with each slice and score on held-out target groups
    Evaluate(EvaluateArgs),
    /// Markdown and CSV tables from an experiment summary
    Report(ReportArgs),
    /// Projection and histogram CSVs for chosen groups
    ExportPlotData(ExportArgs),
    /// Reduce, cluster, score, rank and select in one run
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Reduce(_) => "reduce",
            Command::Cluster(_) => "cluster",
            Command::Entropy(_) => "entropy",
            Command::Rank(_) => "rank",
            Command::Select(_) => "select",
            Command::Simulate(_) => "simulate",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
            Command::ExportPlotData(_) => "export-plot-data",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DomainArg {
    Source,
    Target,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Source => Domain::Source,
            DomainArg::Target => Domain::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PcaFitArg {
    Target,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    pub table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DomainArg::Target)]
    pub domain: DomainArg,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PcaArgs {
    /// Number of principal components
    #[arg(long, default_value_t = 30)]
    pub dim: usize,
    /// Tables the PCA is fit on
    #[arg(long, value_enum, default_value_t = PcaFitArg::Target)]
    pub pca_fit: PcaFitArg,
    /// Source table, used with --pca-fit both
    #[arg(long)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReduceArgs {
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub pca: PcaArgs,
    /// Format of the reduced table
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KMeansArgs {
    /// Number of clusters
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seeded runs; the lowest inertia wins
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Relative inertia improvement below which Lloyd stops
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
}

impl KMeansArgs {
    fn params(&self, seed: u64) -> KMeansParams {
        KMeansParams { k: self.k, seed, restarts: self.restarts, tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ClusterArgs {
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EntropyArgs {
    pub assignment: Option<PathBuf>,
    /// k-means model giving K
    #[arg(long)]
    pub kmeans: Option<PathBuf>,
    /// K when no model is given [default: 10]
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RankArgs {
    pub entropy: Option<PathBuf>,
    /// Groups per slice
    #[arg(long, default_value_t = 5)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    pub ranking: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// JSON simulator config; missing fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Ranking of the target groups
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Training seeds: seed, seed + 1, ...
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Keep the epoch with the best validation mIoU
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub early_stop: Switch,
    /// Share of target groups held out for validation
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    /// Seed of the validation/test split
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExportArgs {
    /// Pipeline output directory; supplies any of the three inputs not given
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub reduced: Option<PathBuf>,
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Groups to export [default: highest, median and lowest entropy]
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    pub target: Option<PathBuf>,
    #[command(flatten)]
    pub pca: PcaArgs,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// Groups per slice
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Format of the reduced table
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub classes: Option<usize>,
    pub run: Command,
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

struct Ctx {
    seed: u64,
    classes: Option<usize>,
    out: PathBuf,
    jobs: usize,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn load(&self, path: &Path, domain: Domain) -> Result<FeatureTable> {
        load_table(path, self.classes, domain)
    }
}

fn need<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn note(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

/// Parses `args` (program name first), runs the command and maps errors to an
/// exit status, printing diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clustent {name}: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let (seed, classes, command) = match &cli.manifest {
        Some(path) => {
            let m: RunManifest = art::read_json(path)?;
            if m.run.name() != cli.command.name() {
                return Err(CliError::Usage(format!(
                    "{} is a `{}` manifest, not `{}`",
                    path.display(),
                    m.run.name(),
                    cli.command.name()
                )));
            }
            if cli.seed.is_some() || cli.classes.is_some() {
                note("note: --seed and --classes are taken from the manifest");
            }
            (Some(m.seed), m.classes, m.run)
        }
        None => (cli.seed, cli.classes, cli.command),
    };
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let ctx = Ctx { seed: seed.unwrap_or(0), classes, out: cli.out, jobs: cli.jobs };
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;

    let seed = match &command {
        Command::Validate(a) => validate(&ctx, a).map(|_| ctx.seed)?,
        Command::Reduce(a) => reduce(&ctx, a).map(|_| ctx.seed)?,
        Command::Cluster(a) => cluster(&ctx, a).map(|_| ctx.seed)?,
        Command::Entropy(a) => entropy(&ctx, a).map(|_| ctx.seed)?,
        Command::Rank(a) => rank(&ctx, a).map(|_| ctx.seed)?,
        Command::Select(a) => select(&ctx, a).map(|_| ctx.seed)?,
        Command::Simulate(a) => simulate(&ctx, a, seed)?,
        Command::Evaluate(a) => evaluate(&ctx, a).map(|_| ctx.seed)?,
        Command::Report(a) => report(&ctx, a).map(|_| ctx.seed)?,
        Command::ExportPlotData(a) => export_plot_data(&ctx, a).map(|_| ctx.seed)?,
        Command::Pipeline(a) => pipeline(&ctx, a).map(|_| ctx.seed)?,
    };
    let manifest = RunManifest { version: env!("CARGO_PKG_VERSION").into(), seed, classes, run: command };
    art::write_json(&ctx.out(&manifest_name(manifest.run.name())), &manifest)
}

#[derive(Debug, Serialize)]
struct GroupSize<'a> {
    group_id: &'a str,
    n: usize,
}

#[derive(Debug, Serialize)]
struct Validation<'a> {
    n: usize,
    d: usize,
    classes: usize,
    domain: Domain,
    labeled: usize,
    class_counts: Option<Vec<usize>>,
    groups: Vec<GroupSize<'a>>,
}

fn validate(ctx: &Ctx, a: &ValidateArgs) -> Result<()> {
    let path = need(&a.table, "table")?;
    let t = ctx.load(path, a.domain.into())?;
    let labeled = t.records().iter().filter(|r| r.label.is_some()).count();
    let report = Validation {
        n: t.len(),
        d: t.dim(),
        classes: t.num_classes(),
        domain: t.domain(),
        labeled,
        class_counts: class_histogram(&t).ok().map(|h| h.counts),
        groups: t.groups().iter().map(|g| GroupSize { group_id: &g.id, n: g.len() }).collect(),
    };
    art::write_json(&ctx.out("validation.json"), &report)?;
    note(format!(
        "{}: {} records, D = {}, {} groups, {labeled} labeled",
        path.display(),
        t.len(),
        t.dim(),
        t.groups().len()
    ));
    Ok(())
}

fn fit_reduce(ctx: &Ctx, target: &FeatureTable, pca: &PcaArgs) -> Result<(PcaModel, FeatureTable)> {
    let model = match (pca.pca_fit, &pca.source) {
        (PcaFitArg::Target, _) => fit_pca(target, pca.dim).stage("reduce")?,
        (PcaFitArg::Both, Some(path)) => {
            let source = ctx.load(path, Domain::Source)?;
            fit_pca(&target.concat(&source).stage("reduce")?, pca.dim).stage("reduce")?
        }
        (PcaFitArg::Both, None) => return Err(CliError::Usage("--pca-fit both needs --source".into())),
    };
    let reduced = transform(&model, target).stage("reduce")?;
    Ok((model, reduced))
}

fn write_reduced(ctx: &Ctx, model: &PcaModel, reduced: &FeatureTable, format: TableFormat) -> Result<()> {
    art::write_json(&ctx.out(art::PCA), model)?;
    let name = format!("{}.{}", art::REDUCED_STEM, format.extension());
    write_table(reduced, &ctx.out(&name), format)
}

fn reduce(ctx: &Ctx, a: &ReduceArgs) -> Result<()> {
    let target = ctx.load(need(&a.table, "table")?, Domain::Target)?;
    let (model, reduced) = fit_reduce(ctx, &target, &a.pca)?;
    write_reduced(ctx, &model, &reduced, a.format)?;
    note(format!("reduced {} -> {} dimensions", model.input_dim, model.d));
    Ok(())
}

fn write_clusters(ctx: &Ctx, table: &FeatureTable, model: &KMeansModel, assignment: &Assignment) -> Result<()> {
    art::write_json(&ctx.out(art::KMEANS), model)?;
    art::write_assignment(&ctx.out(art::ASSIGNMENT), table, assignment)
}

fn cluster(ctx: &Ctx, a: &ClusterArgs) -> Result<()> {
    let table = ctx.load(need(&a.table, "table")?, Domain::Target)?;
    let (model, assignment) = parallel::kmeans(&table, &a.kmeans.params(ctx.seed), ctx.jobs)?;
    write_clusters(ctx, &table, &model, &assignment)?;
    note(format!("K = {}, inertia {}, best seed {}", model.k, model.inertia, model.seed));
    Ok(())
}

fn entropy(ctx: &Ctx, a: &EntropyArgs) -> Result<()> {
    let path = need(&a.assignment, "assignment")?;
    let rows = art::read_assignment(path)?;
    let k = match &a.kmeans {
        Some(p) => art::read_json::<KMeansModel>(p)?.k,
        None => a.k.unwrap_or(10),
    };
    let labels: Vec<usize> = rows.iter().map(|r| r.cluster).collect();
    let hist = histograms_by_group(rows.iter().map(|r| r.wsi_id.as_str()), &labels, k).stage("entropy")?;
    let entropies = hist
        .into_iter()
        .map(|h| GroupEntropy::from_counts(h.group_id, h.counts))
        .collect::<clustent_core::Result<Vec<_>>>()
        .stage("entropy")?;
    art::write_entropy(&ctx.out(art::ENTROPY), &entropies)?;
    note(format!("{} groups scored", entropies.len()));
    Ok(())
}

fn rank(ctx: &Ctx, a: &RankArgs) -> Result<()> {
    let entropies = art::read_entropy(need(&a.entropy, "entropy file")?)?;
    let ranking = rank_groups(&entropies, a.n).stage("rank")?;
    art::write_ranking(&ctx.out(art::RANKING), &ranking)
}

fn write_selection(ctx: &Ctx, ranking: &clustent_core::RankedSelection) -> Result<()> {
    let sel = Selection::from_ranking(ranking)
        .ok_or_else(|| CliError::Stage { stage: "select", source: clustent_core::Error::InvalidArgument("ranking is empty".into()) })?;
    art::write_json(&ctx.out(art::SELECTION), &sel)?;
    note(format!("selected {} (entropy {})", sel.selected, sel.entropy));
    Ok(())
}

fn select(ctx: &Ctx, a: &SelectArgs) -> Result<()> {
    let ranking = art::read_ranking(need(&a.ranking, "ranking")?)?;
    write_selection(ctx, &ranking)
}

/// Returns the seed the simulator actually used.
fn simulate(ctx: &Ctx, a: &SimulateArgs, seed: Option<u64>) -> Result<u64> {
    let mut config: SimConfig = match &a.config {
        Some(p) => art::read_json(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let out = generate(&config).stage("simulate")?;
    let ext = a.format.extension();
    write_table(&out.source, &ctx.out(&format!("source.{ext}")), a.format)?;
    write_table(&out.target, &ctx.out(&format!("target.{ext}")), a.format)?;
    art::write_json(&ctx.out("truth.json"), &out.truth)?;
    art::write_json(&ctx.out("sim_config.json"), &config)?;
    note(format!(
        "source {} records in {} groups, target {} records in {} groups",
        out.source.len(),
        out.source.groups().len(),
        out.target.len(),
        out.target.groups().len()
    ));
    Ok(config.seed)
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let source = ctx.load(need(&a.source, "--source")?, Domain::Source)?;
    let target = ctx.load(need(&a.target, "--target")?, Domain::Target)?;
    let ranking = art::read_ranking(need(&a.ranking, "--ranking")?)?;
    let config = ExperimentConfig {
        train: TrainConfig { lr: a.lr, epochs: a.epochs, batch: a.batch, early_stop: a.early_stop == Switch::On },
        validation_fraction: a.validation_fraction,
        split_seed: a.split_seed,
    };
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| ctx.seed.wrapping_add(i)).collect();
    let summary = parallel::experiment(&source, &target, &ranking, &seeds, &config, ctx.jobs)?;
    art::write_json(&ctx.out(art::SUMMARY), &summary)?;
    for c in &summary.conditions {
        note(format!("{:>7}: mIoU {:.4} mDice {:.4}", c.condition.as_str(), c.mean_m_iou, c.mean_m_dice));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_p(v: Option<f64>) -> String {
    match v {
        Some(p) if p != 0.0 && p < 1e-3 => format!("{p:.2e}"),
        _ => fmt_opt(v),
    }
}

pub fn render_markdown(s: &ExperimentSummary) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Experiment summary\n");
    let _ = writeln!(
        md,
        "{} seeds, {} validation groups, {} test groups.\n",
        s.seeds.len(),
        s.validation_groups.len(),
        s.test_groups.len()
    );
    let _ = writeln!(md, "| condition | mPrecision | mRecall | mDice | mIoU |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for c in &s.conditions {
        let _ = writeln!(
            md,
            "| {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} |",
            c.condition.as_str(),
            c.mean_m_precision,
            c.std_m_precision,
            c.mean_m_recall,
            c.std_m_recall,
            c.mean_m_dice,
            c.std_m_dice,
            c.mean_m_iou,
            c.std_m_iou
        );
    }
    let _ = writeln!(md, "\n## Pairwise tests (Welch, Bonferroni x3)\n");
    let _ = writeln!(md, "| a | b | metric | t | df | p | p adjusted |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for t in &s.significance {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            t.a.as_str(),
            t.b.as_str(),
            t.metric,
            fmt_opt(t.welch.map(|w| w.t)),
            fmt_opt(t.welch.map(|w| w.df)),
            fmt_p(t.welch.map(|w| w.p)),
            fmt_p(t.p_bonferroni)
        );
    }
    md
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let summary: ExperimentSummary = art::read_json(need(&a.summary, "summary")?)?;
    let md_path = ctx.out("report.md");
    std::fs::write(&md_path, render_markdown(&summary)).map_err(|e| CliError::io(&md_path, e))?;

    let path = ctx.out("report.csv");
    let mut w = crate::io::csv_writer(&path)?;
    crate::io::write_row(&mut w, &path, ["condition", "metric", "mean", "std", "seeds"])?;
    for c in &summary.conditions {
        let rows = [
            ("m_precision", c.mean_m_precision, c.std_m_precision),
            ("m_recall", c.mean_m_recall, c.std_m_recall),
            ("m_dice", c.mean_m_dice, c.std_m_dice),
            ("m_iou", c.mean_m_iou, c.std_m_iou),
        ];
        for (metric, mean, std) in rows {
            let fields = [
                c.condition.as_str().to_string(),
                metric.to_string(),
                crate::io::fmt_f64(mean),
                crate::io::fmt_f64(std),
                c.m_iou.len().to_string(),
            ];
            crate::io::write_row(&mut w, &path, &fields)?;
        }
    }
    crate::io::finish(w, &path)?;
    if let Some(hl) = summary.test(Condition::High, Condition::Low, "m_iou") {
        note(format!("high vs low mIoU: adjusted p = {}", fmt_p(hl.p_bonferroni)));
    }
    Ok(())
}

fn from_run(explicit: &Option<PathBuf>, run: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match (explicit, run) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(name)),
        (None, None) => Err(CliError::Usage(format!("give --{} or --run", name.split('.').next().unwrap_or(name)))),
    }
}

fn find_reduced(run: &Path) -> PathBuf {
    let csv = run.join(format!("{}.csv", art::REDUCED_STEM));
    if csv.is_file() {
        csv
    } else {
        run.join(format!("{}.json", art::REDUCED_STEM))
    }
}

fn export_plot_data(ctx: &Ctx, a: &ExportArgs) -> Result<()> {
    let reduced_path = match (&a.reduced, &a.run) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => find_reduced(dir),
        (None, None) => return Err(CliError::Usage("give --reduced or --run".into())),
    };
    let reduced = ctx.load(&reduced_path, Domain::Target)?;
    let assignment_path = from_run(&a.assignment, &a.run, art::ASSIGNMENT)?;
    let rows = art::read_assignment(&assignment_path)?;
    let ranking = art::read_ranking(&from_run(&a.ranking, &a.run, art::RANKING)?)?;
    let k = ranking.ordered.first().map_or(0, |g| g.counts.len());

    if rows.len() != reduced.len()
        || rows.iter().zip(reduced.records()).any(|(r, rec)| r.patch_id != rec.patch_id)
    {
        return Err(CliError::format(&assignment_path, "assignment rows do not match the reduced table"));
    }
    if let Some(r) = rows.iter().find(|r| r.cluster >= k) {
        return Err(CliError::format(&assignment_path, format!("cluster {} out of range for K = {k}", r.cluster)));
    }
    let assignment = Assignment { labels: rows.iter().map(|r| r.cluster).collect() };

    let groups: Vec<String> = if a.groups.is_empty() {
        let o = &ranking.ordered;
        let mut g = vec![o[0].group_id.clone(), o[(o.len() - 1) / 2].group_id.clone(), o[o.len() - 1].group_id.clone()];
        g.dedup();
        g
    } else {
        a.groups.clone()
    };
    for g in &groups {
        art::write_plot_data(&ctx.out, &reduced, &assignment, k, g)?;
    }
    note(format!("exported {}", groups.join(", ")));
    Ok(())
}

fn pipeline(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    let target = ctx.load(need(&a.target, "target table")?, Domain::Target)?;
    let (pca, reduced) = fit_reduce(ctx, &target, &a.pca)?;
    write_reduced(ctx, &pca, &reduced, a.format)?;
    let (model, assignment) = parallel::kmeans(&reduced, &a.kmeans.params(ctx.seed), ctx.jobs)?;
    write_clusters(ctx, &reduced, &model, &assignment)?;
    let entropies = group_entropies(&assignment, &reduced, model.k).stage("entropy")?;
    art::write_entropy(&ctx.out(art::ENTROPY), &entropies)?;
    let ranking = rank_groups(&entropies, a.n).stage("rank")?;
    art::write_ranking(&ctx.out(art::RANKING), &ranking)?;
    write_selection(ctx, &ranking)
}
