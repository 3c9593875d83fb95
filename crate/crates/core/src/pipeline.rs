//! End-to-end evaluation: load or synthesize, distances, optional re-ranking, scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::distance::{feature_distances, write_dump, DistanceMatrix};
use crate::embedding::EvalSplit;
use crate::error::{Error, ErrorKind};
use crate::format::load_split;
use crate::kreciprocal::{kreciprocal_rerank, RerankConfig};
use crate::metrics::{evaluate, ConfigEcho, EvalReport, RerankMode};
use crate::report::{ascii_table, to_stable_json};
use crate::synth::{generate, SynthConfig};
use crate::temporal::temporal_rerank;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Synth,
    Distance,
    Rerank,
    Evaluate,
    Write,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Synth => "synth",
            Stage::Distance => "distance",
            Stage::Rerank => "rerank",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        }
    }
}

/// An [`Error`] tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl StageError {
    /// Process exit code: 2 config, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.source)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Internal => 4,
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Path(PathBuf),
    Synth(SynthConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub mode: RerankMode,
    pub rerank: RerankConfig,
    pub exclude_same_camera: bool,
    /// Also evaluate the reversed retrieval direction.
    pub both_directions: bool,
    pub record_timing: bool,
    pub output_dir: Option<PathBuf>,
    pub dump_distances: bool,
}

impl PipelineConfig {
    pub fn new(input: InputSource) -> Self {
        Self {
            input,
            mode: RerankMode::TemporalKReciprocal,
            rerank: RerankConfig::default(),
            exclude_same_camera: false,
            both_directions: true,
            record_timing: false,
            output_dir: None,
            dump_distances: false,
        }
    }
}

/// What actually runs: temporal re-ranking with `lambda2 = 0` is instance-level re-ranking.
pub fn effective_echo(mode: RerankMode, config: &RerankConfig) -> ConfigEcho {
    match mode {
        RerankMode::None => ConfigEcho { mode, rerank: None },
        RerankMode::KReciprocal => ConfigEcho {
            mode,
            rerank: Some(RerankConfig {
                lambda2: 0.0,
                ..*config
            }),
        },
        RerankMode::TemporalKReciprocal if config.lambda2 == 0.0 => ConfigEcho {
            mode: RerankMode::KReciprocal,
            rerank: Some(*config),
        },
        RerankMode::TemporalKReciprocal => ConfigEcho {
            mode,
            rerank: Some(*config),
        },
    }
}

/// Final query-gallery distances for `mode`, with per-stage wall-clock milliseconds.
pub fn compute_distances(
    split: &EvalSplit,
    mode: RerankMode,
    config: &RerankConfig,
    timing: &mut BTreeMap<String, f64>,
) -> Result<DistanceMatrix, StageError> {
    config.validate().at(Stage::Config)?;
    let t = Instant::now();
    let out = match mode {
        RerankMode::None => {
            let d = feature_distances(split).at(Stage::Distance)?;
            timing.insert("distance".into(), ms(t));
            return Ok(d);
        }
        RerankMode::KReciprocal => kreciprocal_rerank(split, config).at(Stage::Rerank)?.fused,
        RerankMode::TemporalKReciprocal => temporal_rerank(split, config).at(Stage::Rerank)?.fused,
    };
    timing.insert("rerank".into(), ms(t));
    Ok(out)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reports: Vec<EvalReport>,
    pub distances: Vec<DistanceMatrix>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    reports: &'a [EvalReport],
}

pub fn reports_json(reports: &[EvalReport]) -> Result<String, Error> {
    to_stable_json(&ReportFile { reports })
}

pub fn load_input(input: &InputSource) -> Result<EvalSplit, StageError> {
    match input {
        InputSource::Path(p) => load_split(p).at(Stage::Load),
        InputSource::Synth(c) => generate(c).at(Stage::Synth),
    }
}

pub fn evaluate_split(
    split: &EvalSplit,
    config: &PipelineConfig,
) -> Result<(EvalReport, DistanceMatrix), StageError> {
    let mut timing = BTreeMap::new();
    let dist = compute_distances(split, config.mode, &config.rerank, &mut timing)?;
    let t = Instant::now();
    let mut report = evaluate(&dist, split, config.exclude_same_camera).at(Stage::Evaluate)?;
    timing.insert("evaluate".into(), ms(t));
    report.config_echo = Some(effective_echo(config.mode, &config.rerank));
    if config.record_timing {
        report.timing_ms = Some(timing);
    }
    Ok((report, dist))
}

fn dump_name(split: &EvalSplit) -> &'static str {
    match split.direction() {
        crate::embedding::Direction::VisibleToInfrared => "dist_v2i",
        crate::embedding::Direction::InfraredToVisible => "dist_i2v",
    }
}

/// Writes `report.json`, `report.txt` and, if requested, distance dumps.
pub fn write_outputs(
    dir: &Path,
    output: &PipelineOutput,
    splits: &[EvalSplit],
    dump_distances: bool,
) -> Result<(), StageError> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .at(Stage::Write)?;
    let json = reports_json(&output.reports).at(Stage::Write)?;
    let path = dir.join("report.json");
    fs::write(&path, json)
        .map_err(|e| Error::io(&path, e))
        .at(Stage::Write)?;
    let path = dir.join("report.txt");
    fs::write(&path, ascii_table(&output.reports))
        .map_err(|e| Error::io(&path, e))
        .at(Stage::Write)?;
    if dump_distances {
        for (split, dist) in splits.iter().zip(&output.distances) {
            write_dump(dist, &dir.join(dump_name(split))).at(Stage::Write)?;
        }
    }
    Ok(())
}

pub fn run_eval(config: &PipelineConfig) -> Result<PipelineOutput, StageError> {
    let split = load_input(&config.input)?;
    let mut splits = vec![split];
    if config.both_directions {
        let reversed = splits[0].reversed();
        splits.push(reversed);
    }
    let mut output = PipelineOutput {
        reports: Vec::new(),
        distances: Vec::new(),
    };
    for split in &splits {
        let (report, dist) = evaluate_split(split, config)?;
        output.reports.push(report);
        output.distances.push(dist);
    }
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &output, &splits, config.dump_distances)?;
    }
    Ok(output)
}

/// Runs `f` on a dedicated rayon pool with `threads` workers (global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Error> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("thread count must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("building thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
