//! End-to-end runs: one pass over a stream producing the four martingales.
//!
//! | column  | transducer                                   | scores                    |
//! |---------|----------------------------------------------|---------------------------|
//! | black   | conformal                                    | concept measure           |
//! | red     | label-conditional                            | concept measure           |
//! | green   | conformal                                    | class-averaged label measure |
//! | blue    | product of red and green                     |                           |
//!
//! All four use the same betting strategy. Red and green draw their
//! tie-breaking numbers from disjoint substreams unless shared randomization
//! is requested, in which case every leg reuses the same draw.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::betting::{product_martingale, BettingState, MartingaleTrajectory, Strategy};
use crate::conformity::NnVariant;
use crate::error::{Error, Result};
use crate::random::{RandomSource, StreamId};
use crate::synth::{generate, ScenarioConfig};
use crate::transducer::{p_conformal, Interleaver, LegRandomness};
use crate::types::{common_dim, Observation};
use crate::usps::load_usps;

pub const CSV_HEADER: [&str; 7] = [
    "n",
    "p_concept",
    "p_label",
    "log10_black",
    "log10_red",
    "log10_green",
    "log10_blue",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Usps { train: PathBuf, test: PathBuf },
    Scenario(ScenarioConfig),
}

fn default_measure() -> NnVariant {
    NnVariant::Ratio
}

fn default_label_measure() -> Option<NnVariant> {
    Some(NnVariant::Ratio)
}

fn default_seed() -> u64 {
    1
}

/// A single run. `label_measure: null` drops the label leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default = "default_measure")]
    pub concept_measure: NnVariant,
    #[serde(default = "default_label_measure")]
    pub label_measure: Option<NnVariant>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub shared_randomization: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn scenario(scenario: ScenarioConfig) -> Self {
        ExperimentConfig {
            data: DataSource::Scenario(scenario),
            concept_measure: default_measure(),
            label_measure: default_label_measure(),
            strategy: Strategy::default(),
            seed: default_seed(),
            shared_randomization: false,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        match &self.data {
            DataSource::Scenario(s) => s.validate(),
            DataSource::Usps { train, test } => {
                for path in [train, test] {
                    if !path.is_file() {
                        return Err(Error::InvalidConfig(format!("{} does not exist", path.display())));
                    }
                }
                Ok(())
            }
        }
    }

    /// Loads or generates the observation stream.
    pub fn load_stream(&self) -> Result<Vec<Observation>> {
        match &self.data {
            DataSource::Usps { train, test } => load_usps(train, test),
            DataSource::Scenario(s) => {
                let mut source = RandomSource::new(s.seed.unwrap_or(self.seed), "scenario");
                generate(s, &mut source)
            }
        }
    }
}

/// Provenance of a run; the CSV carries only the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub observations: usize,
    pub concept_measure: NnVariant,
    pub label_measure: Option<NnVariant>,
    pub strategy: Strategy,
    pub seed: u64,
    pub shared_randomization: bool,
    pub concept_stream: StreamId,
    pub label_stream: Option<StreamId>,
    pub black_stream: StreamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub n: usize,
    pub p_concept: Option<f64>,
    pub p_label: Option<f64>,
    pub log10_black: f64,
    pub log10_red: f64,
    pub log10_green: f64,
    pub log10_blue: f64,
}

impl TrajectoryRow {
    fn initial() -> Self {
        TrajectoryRow {
            n: 0,
            p_concept: None,
            p_label: None,
            log10_black: 0.0,
            log10_red: 0.0,
            log10_green: 0.0,
            log10_blue: 0.0,
        }
    }
}

/// Row `n` holds the p-values of observation `n` and each capital after it;
/// row 0 is the initial capital with no p-values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryTable {
    pub rows: Vec<TrajectoryRow>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl TrajectoryTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }

    pub fn column(&self, pick: impl Fn(&TrajectoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(pick).collect()
    }

    pub fn concept_p_values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.p_concept).collect()
    }

    pub fn label_p_values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.p_label).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                fmt_opt(r.p_concept),
                fmt_opt(r.p_label),
                fmt_f64(r.log10_black),
                fmt_f64(r.log10_red),
                fmt_f64(r.log10_green),
                fmt_f64(r.log10_blue),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::InvalidConfig(format!("unexpected trajectory header {header:?}")));
        }
        let mut rows = Vec::new();
        for (idx, record) in r.records().enumerate() {
            let record = record?;
            let bad = |field: &str| Error::InvalidConfig(format!("row {}: bad {field}", idx + 1));
            let num = |i: usize| -> Result<f64> { record[i].parse().map_err(|_| bad(CSV_HEADER[i])) };
            let opt = |i: usize| -> Result<Option<f64>> {
                if record[i].is_empty() {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            rows.push(TrajectoryRow {
                n: record[0].parse().map_err(|_| bad("n"))?,
                p_concept: opt(1)?,
                p_label: opt(2)?,
                log10_black: num(3)?,
                log10_red: num(4)?,
                log10_green: num(5)?,
                log10_blue: num(6)?,
            });
        }
        Ok(TrajectoryTable { rows })
    }

    /// Writes via a temporary sibling file so a failed write leaves nothing behind.
    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.partial");
        let result = fs::File::create(&tmp)
            .map_err(|e| Error::io(&tmp, e))
            .and_then(|f| self.write_csv(std::io::BufWriter::new(f)))
            .and_then(|_| fs::rename(&tmp, path).map_err(|e| Error::io(path, e)));
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }

    /// Largest `|blue − (red + green)|` over all rows.
    pub fn decomposition_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.log10_blue - (r.log10_red + r.log10_green)).abs())
            .fold(0.0, f64::max)
    }
}

/// A finished run: the table plus the individual trajectories with provenance.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: TrajectoryTable,
    pub black: MartingaleTrajectory,
    pub red: MartingaleTrajectory,
    pub green: MartingaleTrajectory,
    pub blue: MartingaleTrajectory,
    pub metadata: RunMetadata,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<TrajectoryTable> {
    Ok(run_experiment_full(config)?.table)
}

pub fn run_experiment_full(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let stream = config.load_stream()?;
    run_on_stream(config, &stream)
}

/// Runs `config`'s pipeline over an already materialized stream.
pub fn run_on_stream(config: &ExperimentConfig, stream: &[Observation]) -> Result<RunOutput> {
    config.strategy.validate()?;
    common_dim(stream)?;
    let randomness = if config.shared_randomization {
        LegRandomness::shared(config.seed)
    } else {
        LegRandomness::independent(config.seed)
    };
    let mut black_tau = (!config.shared_randomization).then(|| RandomSource::new(config.seed, "tau-conformal"));
    let mut engine = Interleaver::new(config.concept_measure, config.label_measure, randomness);

    let mut black = BettingState::new(config.strategy)?;
    let mut red = BettingState::new(config.strategy)?;
    let mut green = BettingState::new(config.strategy)?;

    let n = stream.len();
    let mut p_concept = Vec::with_capacity(n);
    let mut p_label = Vec::with_capacity(n);
    let mut log_black = Vec::with_capacity(n + 1);
    let mut log_red = Vec::with_capacity(n + 1);
    let mut log_green = Vec::with_capacity(n + 1);
    log_black.push(0.0);
    log_red.push(0.0);
    log_green.push(0.0);

    for z in stream {
        let step = engine.push(z)?;
        let tau_black = black_tau.as_mut().map_or(step.tau, RandomSource::uniform);
        let p_black = p_conformal(engine.concept_scores(), tau_black)?;

        black.bet(p_black);
        red.bet(step.concept);
        if let Some(p) = step.label {
            green.bet(p);
        }
        p_concept.push(step.concept.value());
        p_label.push(step.label.map(|p| p.value()));
        log_black.push(black.log10_capital());
        log_red.push(red.log10_capital());
        log_green.push(green.log10_capital());
    }

    let black_stream = black_tau
        .as_ref()
        .map_or_else(|| engine.concept_stream(), |s| s.id().clone());
    let label_stream = config.label_measure.map(|_| engine.label_stream());
    let black_traj = MartingaleTrajectory {
        log10_values: log_black,
        randomization: Some(black_stream.clone()),
    };
    let red_traj = MartingaleTrajectory {
        log10_values: log_red,
        randomization: Some(engine.concept_stream()),
    };
    let green_traj = MartingaleTrajectory {
        log10_values: log_green,
        randomization: label_stream.clone(),
    };
    let blue_traj = product_martingale(&red_traj, &green_traj, config.shared_randomization)?;

    let mut rows = Vec::with_capacity(n + 1);
    rows.push(TrajectoryRow::initial());
    for i in 1..=n {
        rows.push(TrajectoryRow {
            n: i,
            p_concept: Some(p_concept[i - 1]),
            p_label: p_label[i - 1],
            log10_black: black_traj.log10_values[i],
            log10_red: red_traj.log10_values[i],
            log10_green: green_traj.log10_values[i],
            log10_blue: blue_traj.log10_values[i],
        });
    }
    let table = TrajectoryTable { rows };
    if table.decomposition_error() != 0.0 {
        return Err(Error::Invariant("blue column differs from red + green".into()));
    }

    Ok(RunOutput {
        table,
        metadata: RunMetadata {
            observations: n,
            concept_measure: config.concept_measure,
            label_measure: config.label_measure,
            strategy: config.strategy,
            seed: config.seed,
            shared_randomization: config.shared_randomization,
            concept_stream: engine.concept_stream(),
            label_stream,
            black_stream,
        },
        black: black_traj,
        red: red_traj,
        green: green_traj,
        blue: blue_traj,
    })
}

/// Runs independent configs on up to `workers` threads; results keep input order.
pub fn run_sweep(configs: &[ExperimentConfig], workers: usize) -> Vec<Result<RunOutput>> {
    let workers = workers.max(1).min(configs.len().max(1));
    let mut results: Vec<Option<Result<RunOutput>>> = (0..configs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    configs
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, c)| (i, run_experiment_full(c)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every config ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Scenario;

    fn small(seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::scenario(ScenarioConfig::new(Scenario::Iid, 60));
        c.seed = seed;
        c
    }

    #[test]
    fn table_shape_and_initial_row() {
        let t = run_experiment(&small(3)).unwrap();
        assert_eq!(t.len(), 61);
        assert_eq!(t.rows[0], TrajectoryRow::initial());
        assert!(t.rows[1..].iter().all(|r| r.p_concept.is_some() && r.p_label.is_some()));
        assert_eq!(t.decomposition_error(), 0.0);
        let csv = t.to_csv_string();
        assert!(
            csv.starts_with("n,p_concept,p_label,log10_black,log10_red,log10_green,log10_blue\n0,,,0.0,0.0,0.0,0.0\n")
        );
    }

    #[test]
    fn deterministic_csv() {
        assert_eq!(
            run_experiment(&small(5)).unwrap().to_csv_string(),
            run_experiment(&small(5)).unwrap().to_csv_string()
        );
        assert_ne!(run_experiment(&small(5)).unwrap(), run_experiment(&small(6)).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let t = run_experiment(&small(7)).unwrap();
        let back = TrajectoryTable::read_csv(t.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dropping_label_leg_keeps_red() {
        let full = run_experiment(&small(8)).unwrap();
        let mut cfg = small(8);
        cfg.label_measure = None;
        let red_only = run_experiment(&cfg).unwrap();
        assert_eq!(full.column(|r| r.log10_red), red_only.column(|r| r.log10_red));
        assert!(red_only
            .rows
            .iter()
            .all(|r| r.p_label.is_none() && r.log10_green == 0.0));
        assert_eq!(red_only.column(|r| r.log10_blue), red_only.column(|r| r.log10_red));
    }

    #[test]
    fn shared_mode_runs_and_records_shared_streams() {
        let mut cfg = small(9);
        cfg.shared_randomization = true;
        let out = run_experiment_full(&cfg).unwrap();
        assert_eq!(Some(out.metadata.concept_stream.clone()), out.metadata.label_stream);
        assert_eq!(out.table.decomposition_error(), 0.0);
    }

    #[test]
    fn config_json_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"data":{"scenario":{"scenario":"iid","n_steps":10}}}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::scenario(ScenarioConfig::new(Scenario::Iid, 10)));
        let no_label = ExperimentConfig::from_json(
            r#"{"data":{"scenario":{"scenario":"iid","n_steps":10}},"label_measure":null,"concept_measure":"same-class"}"#,
        )
        .unwrap();
        assert_eq!(no_label.label_measure, None);
        assert_eq!(no_label.concept_measure, NnVariant::SameClass);
        assert!(ExperimentConfig::from_json(r#"{"data":{"usps":{"train":"/nope","test":"/nope"}}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"data":{"scenario":{"scenario":"iid","n_steps":10}},"bogus":1}"#).is_err()
        );
    }

    #[test]
    fn csv_file_write_is_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let t = run_experiment(&small(1)).unwrap();
        t.write_csv_file(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), t.to_csv_string());
        let bad = dir.path().join("missing").join("out.csv");
        assert!(t.write_csv_file(&bad).is_err());
        assert!(!bad.with_extension("csv.partial").exists());
    }

    #[test]
    fn sweep_matches_sequential() {
        let configs: Vec<_> = (0..4).map(small).collect();
        let swept = run_sweep(&configs, 3);
        for (c, r) in configs.iter().zip(swept) {
            assert_eq!(r.unwrap().table, run_experiment(c).unwrap());
        }
    }
}
