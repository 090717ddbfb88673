//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cohort::{load_cohort, standardize, write_cohort, Cohort, Individual, PreprocessReport, Schema};
use crate::estimators::{
    allocation_quality, assign_cohort, best_label_map, kaplan_meier, summarize_associations, uniform_grid,
    write_posteriors, CurveOptions, CurveSet, Quartiles, ZPreset,
};
use crate::hazard::{CensoringChoice, Variant};
use crate::inference::{model_grid, select_model, FitConfig, FitResult};
use crate::synthgen::{generate_cohort, preset, read_truth_classes, write_truth, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "hetsurv", version, about = "Latent-class competing-risk survival analysis")]
pub struct Cli {
    /// Increase diagnostic verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and its truth sidecar.
    Simulate(SimulateArgs),
    /// Fit every model of a grid and keep the one with the largest evidence.
    Fit(FitArgs),
    /// Survival, hazard and incidence curves from a fit.
    Curves(CurvesArgs),
    /// Retrospective class probabilities for each individual.
    Assign(AssignArgs),
    /// Covariate-conditioned cause-specific Kaplan-Meier estimate.
    Km(KmArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named configuration: A, B or C.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// Generator specification file (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Cohort file to write; the truth sidecar goes next to it as `<stem>.truth.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Delimited cohort file (comma or tab).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "id")]
    pub id_column: String,
    #[arg(long, default_value = "time")]
    pub time_column: String,
    #[arg(long, default_value = "event")]
    pub event_column: String,
    /// Comma-separated covariate columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Number of true risks; default is the largest event label.
    #[arg(long)]
    pub risks: Option<usize>,
    /// End of the observation window.
    #[arg(long)]
    pub trial_end: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Cohort> {
        let schema = Schema {
            id: self.id_column.clone(),
            time: self.time_column.clone(),
            event: self.event_column.clone(),
            covariates: self.covariates.clone(),
            risks: self.risks,
            trial_end: self.trial_end,
        };
        let file = File::open(&self.data).with_context(|| format!("cannot open {}", self.data.display()))?;
        load_cohort(BufReader::new(file), &schema).with_context(|| format!("reading {}", self.data.display()))
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Spline anchor counts, `A..B` or a single value.
    #[arg(long, default_value = "1..8")]
    pub grid_k: String,
    /// Latent class counts, `A..B` or a single value.
    #[arg(long, default_value = "1..4")]
    pub grid_l: String,
    /// Hazard variants, comma-separated from {1, 2, 3}.
    #[arg(long, default_value = "1,2,3")]
    pub grid_m: String,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long)]
    pub seed: u64,
    /// auto, parametric or administrative.
    #[arg(long, default_value = "auto")]
    pub censoring: String,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Fit artifact written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Covariate presets: zero, lq, median, uq, NAME:LEVEL or vector:v1,v2,...
    #[arg(long, default_value = "median")]
    pub z: Vec<String>,
    /// Points on the output time grid.
    #[arg(long, default_value_t = 201)]
    pub curve_points: usize,
    /// Simpson sub-intervals across the time axis.
    #[arg(long, default_value_t = crate::estimators::quadrature::DEFAULT_INTERVALS)]
    pub quadrature: usize,
    /// Output directory; one file per preset.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Truth sidecar; report allocation quality against it.
    #[arg(long)]
    pub score: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub risk: usize,
    /// Filters on raw covariates, combined with AND: NAME:lq, NAME:uq,
    /// NAME:iq (quartile bands of that column) or NAME:LO..HI.
    #[arg(long)]
    pub condition: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Self-contained result of `fit`: the selected model plus everything
/// needed to map raw covariates onto its scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub covariate_names: Vec<String>,
    pub risks: usize,
    pub trial_end: Option<f64>,
    pub preprocess: PreprocessReport,
    /// Quartiles of the standardized covariates.
    pub quartiles: Quartiles,
    pub fit: FitResult,
}

impl FitArtifact {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let artifact: Self = toml::from_str(&text).with_context(|| format!("{} is not a fit artifact", path.display()))?;
        artifact.fit.theta_star.validate()?;
        Ok(artifact)
    }

    /// Standardize a raw cohort with the stored scaling; missing entries
    /// take the fit-time mean.
    pub fn rescale(&self, raw: &Cohort) -> anyhow::Result<Cohort> {
        if raw.covariate_names() != self.covariate_names.as_slice() {
            bail!(
                "data covariates {:?} do not match the fit's {:?}",
                raw.covariate_names(),
                self.covariate_names
            );
        }
        if raw.risks() > self.risks {
            bail!("data has {} risks but the fit has {}", raw.risks(), self.risks);
        }
        let individuals = raw
            .individuals()
            .iter()
            .map(|ind| Individual {
                covariates: ind
                    .covariates
                    .iter()
                    .zip(&self.preprocess.columns)
                    .map(|(v, col)| Some(col.forward(v.unwrap_or(col.mean))))
                    .collect(),
                ..ind.clone()
            })
            .collect();
        Ok(Cohort::new(individuals, self.risks, self.covariate_names.clone(), raw.trial_end())?)
    }
}

/// `A..B` (inclusive) or a single integer.
pub fn parse_range(text: &str) -> anyhow::Result<Vec<usize>> {
    let parse = |s: &str| s.trim().parse::<usize>().with_context(|| format!("`{s}` is not a non-negative integer"));
    let values: Vec<usize> = match text.split_once("..") {
        Some((a, b)) => (parse(a)?..=parse(b)?).collect(),
        None => vec![parse(text)?],
    };
    if values.is_empty() {
        bail!("range `{text}` is empty");
    }
    Ok(values)
}

pub fn parse_variants(text: &str) -> anyhow::Result<Vec<Variant>> {
    let out = text
        .split(',')
        .map(|s| {
            let v: u8 = s.trim().parse().with_context(|| format!("`{s}` is not a variant"))?;
            Ok(Variant::try_from(v)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if out.is_empty() {
        bail!("variant list is empty");
    }
    Ok(out)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut spec = match (&args.preset, &args.spec) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => SynthSpec::from_toml(&fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?)?,
        (None, None) => bail!("either --preset or --spec is required"),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    spec.seed = args.seed;
    let synth = generate_cohort(&spec)?;
    write_cohort(&synth.cohort, create(&args.out)?)?;
    let sidecar = truth_path(&args.out);
    write_truth(&synth.truth, create(&sidecar)?)?;
    log::info!(
        "wrote {} individuals to {} and labels to {}",
        synth.cohort.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn fit(args: &FitArgs) -> anyhow::Result<()> {
    let raw = args.data.load()?;
    let (cohort, report) = standardize(&raw)?;
    for col in report.warnings() {
        log::warn!("covariate `{}` is constant and was only centred", col.name);
    }
    let grid = model_grid(
        &parse_range(&args.grid_k)?,
        &parse_range(&args.grid_l)?,
        &parse_variants(&args.grid_m)?,
    )?;
    let censoring: CensoringChoice = args.censoring.parse()?;
    let config = FitConfig {
        restarts: args.restarts,
        seed: args.seed,
        censoring,
        ..FitConfig::default()
    };
    log::info!("fitting {} models with {} restarts each", grid.len(), config.restarts);
    let selection = select_model(&cohort, &grid, &config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    fs::write(args.out.join("selection.toml"), selection.to_toml()?)?;
    let winner = selection.winner_fit().clone();
    let rows = summarize_associations(&winner, cohort.covariate_names())?;
    let mut w = csv::Writer::from_writer(create(&args.out.join("associations.csv"))?);
    w.write_record(["risk", "class", "covariate", "beta", "sigma", "hr", "ci95_lower", "ci95_upper", "p"])?;
    for row in &rows {
        let a = &row.summary;
        w.write_record([
            row.risk.to_string(),
            row.class.to_string(),
            row.covariate.clone(),
            a.beta.to_string(),
            a.sigma.to_string(),
            a.hr.to_string(),
            a.ci95[0].to_string(),
            a.ci95[1].to_string(),
            a.p.to_string(),
        ])?;
    }
    w.flush()?;
    let artifact = FitArtifact {
        covariate_names: cohort.covariate_names().to_vec(),
        risks: cohort.risks(),
        trial_end: cohort.trial_end(),
        preprocess: report,
        quartiles: Quartiles::of(&cohort)?,
        fit: winner,
    };
    fs::write(args.out.join("fit.toml"), toml::to_string(&artifact)?)?;
    log::info!("selected {}", selection.winner);
    Ok(())
}

fn curves(args: &CurvesArgs) -> anyhow::Result<()> {
    let artifact = FitArtifact::read(&args.fit)?;
    let params = &artifact.fit.theta_star;
    let times = uniform_grid(params.horizon, args.curve_points)?;
    let options = CurveOptions {
        intervals: args.quadrature,
        per_class: true,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    for text in &args.z {
        let preset: ZPreset = text.parse()?;
        let z = preset.resolve(&artifact.quartiles)?;
        let set = CurveSet::compute(params, &z, &times, options)?;
        let path = args.out.join(format!("curves_{preset}.csv"));
        set.write_csv(create(&path)?)?;
        log::info!("wrote {} (z = {z:?})", path.display());
    }
    Ok(())
}

fn assign(args: &AssignArgs) -> anyhow::Result<()> {
    let artifact = FitArtifact::read(&args.fit)?;
    let cohort = artifact.rescale(&args.data.load()?)?;
    let params = &artifact.fit.theta_star;
    let posteriors = assign_cohort(params, &cohort)?;
    write_posteriors(&cohort, &posteriors, create(&args.out)?)?;
    if let Some(path) = &args.score {
        let truth = read_truth_classes(File::open(path).with_context(|| format!("cannot open {}", path.display()))?)?;
        let by_id: std::collections::HashMap<&str, usize> = truth.iter().map(|(id, c)| (id.as_str(), *c)).collect();
        let true_labels = cohort
            .individuals()
            .iter()
            .map(|i| by_id.get(i.id.as_str()).copied().with_context(|| format!("no truth label for `{}`", i.id)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let l = params.model.l.max(true_labels.iter().max().map_or(0, |m| m + 1));
        let assigned: Vec<usize> = posteriors.iter().map(|p| p.argmax()).collect();
        let map = best_label_map(&assigned, &true_labels, l)?;
        let aligned: Vec<usize> = assigned.iter().map(|a| map[*a]).collect();
        let q = allocation_quality(&aligned, &true_labels, l)?;
        let mut report = format!("q = {:.4}\n", q.overall);
        for (c, v) in q.per_class.iter().enumerate() {
            let fitted = map.iter().position(|&t| t == c).map_or(0, |f| f + 1);
            match v {
                Some(v) => report.push_str(&format!("q_{} = {v:.4} (fitted class {fitted})\n", c + 1)),
                None => report.push_str(&format!("q_{} = n/a (no individuals assigned)\n", c + 1)),
            }
        }
        eprint!("{report}");
        fs::write(args.out.with_extension("score.txt"), report)?;
    }
    Ok(())
}

/// A filter on one raw covariate column.
fn parse_condition(text: &str, cohort: &Cohort) -> anyhow::Result<(usize, f64, f64)> {
    let (name, band) = text.split_once(':').with_context(|| format!("condition `{text}` must be NAME:BAND"))?;
    let mu = cohort
        .covariate_names()
        .iter()
        .position(|n| n == name)
        .with_context(|| format!("unknown covariate `{name}`"))?;
    let q = |p| cohort.covariate_quantile(mu, p);
    let (lo, hi) = match band {
        "lq" => (f64::NEG_INFINITY, q(0.25)?),
        "uq" => (q(0.75)?, f64::INFINITY),
        "iq" => (q(0.25)?, q(0.75)?),
        other => {
            let (a, b) = other.split_once("..").with_context(|| format!("band `{other}` must be lq, uq, iq or LO..HI"))?;
            let bound = |s: &str, default: f64| -> anyhow::Result<f64> {
                if s.is_empty() {
                    Ok(default)
                } else {
                    s.parse().with_context(|| format!("`{s}` is not a number"))
                }
            };
            (bound(a, f64::NEG_INFINITY)?, bound(b, f64::INFINITY)?)
        }
    };
    Ok((mu, lo, hi))
}

fn km(args: &KmArgs) -> anyhow::Result<()> {
    let cohort = args.data.load()?;
    let filters = args
        .condition
        .iter()
        .map(|c| parse_condition(c, &cohort))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let curve = kaplan_meier(&cohort, args.risk, |ind| {
        filters
            .iter()
            .all(|&(mu, lo, hi)| ind.covariates[mu].is_some_and(|v| v >= lo && v <= hi))
    })?;
    curve.write_csv(create(&args.out)?)?;
    log::info!("{} individuals, {} event times", curve.subjects, curve.steps.len());
    Ok(())
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Curves(a) => curves(a),
        Command::Assign(a) => assign(a),
        Command::Km(a) => km(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_variants() {
        assert_eq!(parse_range("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_range("4").unwrap(), vec![4]);
        assert!(parse_range("3..1").is_err());
        assert!(parse_range("x").is_err());
        assert_eq!(parse_variants("1,3").unwrap(), vec![Variant::Frailty, Variant::BaseHazard]);
        assert!(parse_variants("4").is_err());
    }

    #[test]
    fn seed_is_required() {
        assert!(Cli::try_parse_from(["hetsurv", "simulate", "--preset", "A", "--out", "x.csv"]).is_err());
        assert!(Cli::try_parse_from(["hetsurv", "simulate", "--preset", "A", "--out", "x.csv", "--seed", "7"]).is_ok());
        assert!(Cli::try_parse_from(["hetsurv", "fit", "--data", "d.csv", "--out", "o"]).is_err());
    }

    #[test]
    fn truth_sidecar_name() {
        assert_eq!(truth_path(Path::new("out/cohort.csv")), PathBuf::from("out/cohort.truth.csv"));
    }
}
