//! `xmart`: run conformal exchangeability martingales over USPS or synthetic streams.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xmart::betting::StrategyTag;
use xmart::conformity::NnVariant;
use xmart::experiment::{run_experiment_full, run_sweep, DataSource, ExperimentConfig, RunOutput, TrajectoryTable};
use xmart::synth::{paired_uniformity_report, uniformity_report, Scenario, ScenarioConfig};
use xmart::Error;

#[derive(Parser)]
#[command(
    name = "xmart",
    version,
    about = "Concept-shift and label-shift exchangeability martingales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or a sweep) and write the trajectory CSV.
    Run(Box<RunArgs>),
    /// Uniformity report (KS and paired chi-square) for the p-values in a trajectory CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON array of experiment configs, each with its own `output`; run in parallel.
    #[arg(long, conflicts_with = "config")]
    sweep: Option<PathBuf>,
    #[arg(long, requires = "sweep")]
    workers: Option<usize>,
    #[arg(long, requires = "usps_test")]
    usps_train: Option<PathBuf>,
    #[arg(long, requires = "usps_train")]
    usps_test: Option<PathBuf>,
    /// Synthetic scenario: iid, concept-shift, label-shift or markov-labels.
    #[arg(long, conflicts_with = "usps_train")]
    scenario: Option<Scenario>,
    #[arg(long, default_value_t = 1000)]
    n_steps: usize,
    #[arg(long)]
    changepoint: Option<usize>,
    #[arg(long)]
    shift_magnitude: Option<f64>,
    #[arg(long)]
    concept_measure: Option<NnVariant>,
    /// Label-leg measure, or `none` to drop the label leg.
    #[arg(long)]
    label_measure: Option<String>,
    #[arg(long)]
    strategy: Option<StrategyTag>,
    /// Jumping rate J.
    #[arg(long)]
    jump: Option<f64>,
    /// Reluctance R.
    #[arg(long)]
    reluctance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reuse one tie-breaking stream for both legs.
    #[arg(long)]
    shared_randomization: bool,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trajectory CSV produced by `xmart run`.
    input: PathBuf,
    /// Bins per axis for the paired chi-square test.
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::Json(_) => 2,
        Error::Parse { .. }
        | Error::NoObservations
        | Error::Io { .. }
        | Error::Csv(_)
        | Error::DimensionMismatch { .. }
        | Error::EmptyStream => 3,
        Error::Invariant(_)
        | Error::SharedRandomization(_)
        | Error::LengthMismatch { .. }
        | Error::InvalidPValue(_) => 4,
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let config: ExperimentConfig = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            config
        }
        None => {
            let data = match (&args.usps_train, &args.usps_test, args.scenario) {
                (Some(train), Some(test), _) => DataSource::Usps {
                    train: train.clone(),
                    test: test.clone(),
                },
                (_, _, Some(scenario)) => DataSource::Scenario(ScenarioConfig::new(scenario, args.n_steps)),
                _ => {
                    return Err(Error::InvalidConfig(
                        "give --config, --usps-train/--usps-test or --scenario".into(),
                    ))
                }
            };
            let mut c = ExperimentConfig::scenario(ScenarioConfig::new(Scenario::Iid, 1));
            c.data = data;
            c
        }
    };

    if args.config.is_some() {
        if let (Some(train), Some(test)) = (&args.usps_train, &args.usps_test) {
            config.data = DataSource::Usps {
                train: train.clone(),
                test: test.clone(),
            };
        } else if let Some(scenario) = args.scenario {
            config.data = DataSource::Scenario(ScenarioConfig::new(scenario, args.n_steps));
        }
    }
    if let DataSource::Scenario(s) = &mut config.data {
        if let Some(t) = args.changepoint {
            s.changepoint = Some(t);
        }
        if let Some(m) = args.shift_magnitude {
            s.shift_magnitude = m;
        }
        if s.changepoint.is_none() && matches!(s.scenario, Scenario::ConceptShift | Scenario::LabelShift) {
            s.changepoint = Some(s.n_steps / 2);
        }
    }
    if let Some(m) = args.concept_measure {
        config.concept_measure = m;
    }
    if let Some(m) = &args.label_measure {
        config.label_measure = if m == "none" { None } else { Some(m.parse()?) };
    }
    if let Some(tag) = args.strategy {
        config.strategy.tag = tag;
    }
    if let Some(j) = args.jump {
        config.strategy.j = j;
    }
    if let Some(r) = args.reluctance {
        config.strategy.r = r;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.shared_randomization {
        config.shared_randomization = true;
    }
    if let Some(out) = &args.output {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn write_output(output: &RunOutput, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(path) => {
            output.table.write_csv_file(path)?;
            let meta_path = path.with_extension("meta.json");
            let meta = serde_json::to_string_pretty(&output.metadata)?;
            fs::write(&meta_path, meta + "\n").map_err(|e| Error::Io {
                path: meta_path,
                source: e,
            })
        }
        None => output.table.write_csv(io::stdout().lock()),
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    if let Some(sweep) = &args.sweep {
        let configs: Vec<ExperimentConfig> = serde_json::from_str(&read_text(sweep)?)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", sweep.display())))?;
        for (i, c) in configs.iter().enumerate() {
            if c.output.is_none() {
                return Err(Error::InvalidConfig(format!("sweep entry {i} has no output path")));
            }
            c.validate()?;
        }
        let workers = args
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let mut first_err = None;
        for (config, result) in configs.iter().zip(run_sweep(&configs, workers)) {
            let written = result.and_then(|out| write_output(&out, config.output.as_deref()));
            if let Err(e) = written {
                eprintln!("xmart: {}: {e}", config.output.as_ref().unwrap().display());
                first_err.get_or_insert(e);
            }
        }
        return first_err.map_or(Ok(()), Err);
    }

    let config = build_config(&args)?;
    let output = run_experiment_full(&config)?;
    write_output(&output, config.output.as_deref())?;
    if let Some(last) = output.table.last() {
        eprintln!(
            "n={} log10: black {:.3} red {:.3} green {:.3} blue {:.3}",
            last.n, last.log10_black, last.log10_red, last.log10_green, last.log10_blue
        );
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Error> {
    let file = fs::File::open(&args.input).map_err(|e| Error::Io {
        path: args.input.clone(),
        source: e,
    })?;
    let table = TrajectoryTable::read_csv(file)?;
    let concept = table.concept_p_values();
    let label = table.label_p_values();
    let mut out = serde_json::Map::new();
    if concept.is_empty() {
        return Err(Error::EmptyStream);
    }
    let concept_report = if label.len() == concept.len() {
        paired_uniformity_report(&concept, &label, args.bins)?
    } else {
        uniformity_report(&concept)?
    };
    out.insert("p_concept".into(), serde_json::to_value(concept_report)?);
    if !label.is_empty() {
        out.insert("p_label".into(), serde_json::to_value(uniformity_report(&label)?)?);
    }
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &out)?;
    writeln!(stdout).map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xmart: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
