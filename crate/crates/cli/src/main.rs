use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chronomap_core::data_model::{
    synth_generate, write_dataset, write_labels, DatasetPaths, GeneratorConfig,
};
use chronomap_core::pipeline::{
    read_assignment_csv, run_pipeline, run_profiling, Cut, Input, ProfileSettings, RunConfig,
};
use chronomap_core::plot;
use chronomap_core::profiling::{Membership, Probe};
use chronomap_core::som::{Init, SomConfig};
use chronomap_core::superclass::{Linkage, SuperclassPartition, VarianceBasis};

/// Kohonen-string classification and profiling of weekly work diaries.
#[derive(Parser)]
#[command(name = "chronomap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted archetypes.
    Synth {
        /// Generator spec (TOML) or `builtin`.
        #[arg(long, default_value = "builtin")]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline.
    Run(RunArgs),
    /// Re-run the questionnaire profiling from a previous run's assignment.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        /// Directory holding `assignment.csv` and `partition.csv`.
        #[arg(long)]
        from: PathBuf,
        #[command(flatten)]
        profile: ProfileArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Redraw the figures from a previous run's artifacts.
    Plot {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, requires_all = ["individual", "schema"])]
    weekly: Option<PathBuf>,
    #[arg(long, requires = "weekly")]
    individual: Option<PathBuf>,
    #[arg(long, requires = "weekly")]
    schema: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Option<DatasetPaths> {
        Some(DatasetPaths {
            weekly: self.weekly.clone()?,
            individual: self.individual.clone()?,
            schema: self.schema.clone()?,
        })
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// Significance level of the chi-square question filter.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Test values above this are highlighted.
    #[arg(long, default_value_t = 1.0)]
    tv_threshold: f64,
    /// Comma-separated probes such as `Sat_10h,Wed_16:30`.
    #[arg(long)]
    probes: Option<String>,
    /// Largest declared-versus-observed gap, in points, before a flag.
    #[arg(long, default_value_t = 20.0)]
    coherence_gap: f64,
}

impl ProfileArgs {
    fn settings(&self) -> Result<ProfileSettings> {
        let probes = match &self.probes {
            Some(list) => Probe::parse_list(list)?,
            None => Probe::default_set(),
        };
        Ok(ProfileSettings {
            alpha: self.alpha,
            tv_threshold: self.tv_threshold,
            probes,
            coherence_gap: self.coherence_gap,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Generator spec (TOML) or `builtin`, instead of input files.
    #[arg(long, conflicts_with = "weekly")]
    synth: Option<String>,
    #[arg(long, default_value_t = 10)]
    units: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Learning rate schedule `start:end`.
    #[arg(long, default_value = "0.5:0.01")]
    lr: String,
    /// Neighbourhood radius schedule `start:end`.
    #[arg(long, default_value = "5:0.5")]
    radius: String,
    #[arg(long, default_value = "sample")]
    init: Init,
    #[arg(long, conflicts_with = "variance")]
    superclasses: Option<usize>,
    /// Cut at the smallest k explaining at least this share of variance.
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long, default_value = "code-vectors")]
    variance_basis: VarianceBasis,
    #[arg(long, default_value = "ward")]
    linkage: Linkage,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn schedule(text: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = text
        .split_once(':')
        .with_context(|| format!("--{what} expects `start:end`, got `{text}`"))?;
    let a = a
        .trim()
        .parse()
        .with_context(|| format!("--{what} start `{a}`"))?;
    let b = b
        .trim()
        .parse()
        .with_context(|| format!("--{what} end `{b}`"))?;
    Ok((a, b))
}

fn load_spec(spec: &str) -> Result<GeneratorConfig> {
    if spec == "builtin" {
        return Ok(GeneratorConfig::builtin());
    }
    let text =
        fs::read_to_string(spec).with_context(|| format!("reading generator spec {spec}"))?;
    Ok(GeneratorConfig::from_toml(&text)?)
}

fn run(args: &RunArgs) -> Result<()> {
    let input = match (&args.synth, args.data.paths()) {
        (Some(spec), None) => Input::Synth(load_spec(spec)?),
        (None, Some(paths)) => Input::Files(paths),
        _ => bail!("give either --weekly/--individual/--schema or --synth"),
    };
    let cut = match (args.superclasses, args.variance) {
        (Some(k), None) => Cut::K(k),
        (None, Some(t)) => Cut::Variance(t),
        _ => bail!("give either --superclasses or --variance"),
    };
    let (lr_start, lr_end) = schedule(&args.lr, "lr")?;
    let (radius_start, radius_end) = schedule(&args.radius, "radius")?;
    let config = RunConfig {
        input,
        som: SomConfig {
            units: args.units,
            epochs: args.epochs,
            lr_start,
            lr_end,
            radius_start,
            radius_end,
            seed: args.seed,
            init: args.init,
        },
        cut,
        linkage: args.linkage,
        variance_basis: args.variance_basis,
        profile: args.profile.settings()?,
        out_dir: args.out.clone(),
        seed: args.seed,
    };
    let report = run_pipeline(&config)?;
    print!("{}", report.to_text());
    Ok(())
}

fn synth(spec: &str, seed: u64, out: &Path) -> Result<()> {
    let config = load_spec(spec)?;
    let generated = synth_generate(&config, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_dataset(&generated.dataset, &DatasetPaths::in_dir(out))?;
    let labels = out.join("labels.csv");
    let file =
        fs::File::create(&labels).with_context(|| format!("creating {}", labels.display()))?;
    write_labels(file, &generated.labels)?;
    fs::write(out.join("generator.toml"), config.to_toml())?;
    println!("persons = {}", generated.dataset.len());
    Ok(())
}

fn profile(data: &DataArgs, from: &Path, args: &ProfileArgs, out: &Path) -> Result<()> {
    let paths = data.paths().unwrap_or_else(|| DatasetPaths::in_dir(from));
    let (dataset, _) = paths.load()?;
    let partition_path = from.join("partition.csv");
    if !partition_path.is_file() {
        return Err(chronomap_core::Error::MissingArtifact(partition_path).into());
    }
    let partition = SuperclassPartition::read_csv(fs::File::open(&partition_path)?)?;
    let assignment = read_assignment_csv(&from.join("assignment.csv"), &dataset, partition.units)?;
    let membership = Membership::from_assignment(&partition, &assignment)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (summary, _) = run_profiling(&dataset, &membership, &args.settings()?, out)?;
    println!("kept_questions = {}", summary.kept.join(","));
    println!("dropped_questions = {}", summary.dropped.join(","));
    println!("coherence_flags = {}", summary.coherence_flags.join(","));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { spec, seed, out } => synth(spec, *seed, out),
        Command::Run(args) => run(args),
        Command::Profile {
            data,
            from,
            profile: args,
            out,
        } => profile(data, from, args, out),
        Command::Plot { from, out } => Ok(plot::plot_from_dir(from, out)?),
    }
}
