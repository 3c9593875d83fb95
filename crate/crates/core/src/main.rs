use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use reid_rerank::curriculum::{schedule_table, ScheduleConfig};
use reid_rerank::distance::{read_dump, write_dump};
use reid_rerank::pipeline::{
    compute_distances, effective_echo, reports_json, run_eval, with_threads, AtStage, InputSource,
    PipelineConfig, Stage, StageError,
};
use reid_rerank::report::ascii_table;
use reid_rerank::{evaluate, feature_distances, generate, load_split, save_split, Error};
use reid_rerank::{Direction, RerankConfig, RerankMode, SynthConfig};

#[derive(Parser, Debug)]
#[command(
    name = "reid-rerank",
    version,
    about = "Temporal k-reciprocal re-ranking and CMC/mAP evaluation"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "REID_RERANK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic split in the embedding exchange format.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump raw squared-Euclidean query-gallery distances.
    Dist {
        #[arg(long)]
        input: PathBuf,
        /// Output prefix; writes `<prefix>.bin` and `<prefix>.json`.
        #[arg(long)]
        out: PathBuf,
        /// Write plain (square-rooted) Euclidean distances.
        #[arg(long)]
        unsquared: bool,
    },
    /// Re-rank a split and dump the final distances.
    Rerank {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        rerank: RerankArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a distance dump (raw distances if none is given).
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dist: Option<PathBuf>,
        #[arg(long)]
        exclude_same_camera: bool,
        /// JSON report path; printed to stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the ASCII summary table to stdout.
        #[arg(long)]
        table: bool,
    },
    /// Print the curriculum factor over epochs.
    Schedule {
        #[arg(long, value_enum, default_value_t = Strategy::Cosine)]
        strategy: Strategy,
        /// alpha (fixed), tau (exponential) or phi (cosine); defaults 0.3, 1, 3.
        #[arg(long)]
        param: Option<f64>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
    },
    /// Load or synthesize, re-rank, evaluate and write reports.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, conflicts_with = "synth")]
    input: Option<PathBuf>,
    /// Use a generated split instead of `--input`.
    #[arg(long)]
    synth: bool,
    #[command(flatten)]
    synth_args: SynthArgs,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[command(flatten)]
    rerank: RerankArgs,
    #[arg(long)]
    exclude_same_camera: bool,
    /// Only evaluate the split's own direction.
    #[arg(long)]
    single_direction: bool,
    /// Include per-stage wall-clock times in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    dump_distances: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_ids: Option<usize>,
    #[arg(long)]
    cams_per_id: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    identity_spread: Option<f64>,
    #[arg(long)]
    modality_offset: Option<f64>,
    #[arg(long)]
    camera_offset: Option<f64>,
    #[arg(long)]
    frame_noise: Option<f64>,
    #[arg(long)]
    latent_rank: Option<usize>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
}

#[derive(Args, Debug, Default)]
struct RerankArgs {
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Temporal groups per tracklet (L).
    #[arg(long)]
    groups: Option<usize>,
    /// Encode plain closed reciprocal sets instead of expanded ones.
    #[arg(long)]
    no_expansion: bool,
    /// Use raw distances for the kernel and fusion.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Kreciprocal,
    Temporal,
}

impl From<Mode> for RerankMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => RerankMode::None,
            Mode::Kreciprocal => RerankMode::KReciprocal,
            Mode::Temporal => RerankMode::TemporalKReciprocal,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    V2i,
    I2v,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    Fixed,
    Exponential,
    Cosine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Table,
}

/// Optional JSON config file; command-line flags override its values.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    synth: Option<SynthConfig>,
    rerank: Option<RerankConfig>,
    mode: Option<RerankMode>,
    exclude_same_camera: Option<bool>,
    both_directions: Option<bool>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig, StageError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())));
    let text = text.at(Stage::Config)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        .at(Stage::Config)
}

impl SynthArgs {
    fn apply(&self, mut c: SynthConfig) -> SynthConfig {
        macro_rules! set {
            ($field:ident, $arg:ident) => {
                if let Some(v) = self.$arg {
                    c.$field = v;
                }
            };
        }
        set!(seed, seed);
        set!(num_ids, num_ids);
        set!(cams_per_id, cams_per_id);
        set!(frames_per_tracklet, frames);
        set!(dim, dim);
        set!(identity_spread, identity_spread);
        set!(modality_offset_scale, modality_offset);
        set!(camera_offset_scale, camera_offset);
        set!(frame_noise, frame_noise);
        set!(latent_rank, latent_rank);
        if let Some(d) = self.direction {
            c.direction = match d {
                DirectionArg::V2i => Direction::VisibleToInfrared,
                DirectionArg::I2v => Direction::InfraredToVisible,
            };
        }
        c
    }
}

impl RerankArgs {
    fn apply(&self, mut c: RerankConfig) -> RerankConfig {
        if let Some(v) = self.k1 {
            c.k1 = v;
        }
        if let Some(v) = self.k2 {
            c.k2 = v;
        }
        if let Some(v) = self.lambda1 {
            c.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            c.lambda2 = v;
        }
        if let Some(v) = self.groups {
            c.groups = v;
        }
        if self.no_expansion {
            c.expanded_sets = false;
        }
        if self.no_normalize {
            c.normalize_base = false;
        }
        c
    }
}

fn write_file(path: &Path, contents: String) -> Result<(), StageError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Error::Io {
                path: parent.into(),
                source: e,
            })
            .at(Stage::Write)?;
    }
    fs::write(path, contents)
        .map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
        .at(Stage::Write)
}

fn schedule_config(strategy: Strategy, param: Option<f64>) -> ScheduleConfig {
    match strategy {
        Strategy::Fixed => ScheduleConfig::Fixed {
            alpha: param.unwrap_or(0.3),
        },
        Strategy::Exponential => ScheduleConfig::Exponential {
            tau: param.unwrap_or(1.0),
        },
        Strategy::Cosine => ScheduleConfig::Cosine {
            phi: param.unwrap_or(3.0),
        },
    }
}

fn run(command: Command) -> Result<(), StageError> {
    match command {
        Command::Synth { synth, config, out } => {
            let file = read_config(config.as_deref())?;
            let cfg = synth.apply(file.synth.unwrap_or_default());
            cfg.validate().at(Stage::Config)?;
            let split = generate(&cfg).at(Stage::Synth)?;
            save_split(&split, &out).at(Stage::Write)?;
        }
        Command::Dist {
            input,
            out,
            unsquared,
        } => {
            let split = load_split(&input).at(Stage::Load)?;
            let mut d = feature_distances(&split).at(Stage::Distance)?;
            if unsquared {
                d = d.unsquared();
            }
            write_dump(&d, &out).at(Stage::Write)?;
        }
        Command::Rerank {
            input,
            mode,
            rerank,
            config,
            out,
        } => {
            let file = read_config(config.as_deref())?;
            let cfg = rerank.apply(file.rerank.unwrap_or_default());
            let mode = mode
                .map(Into::into)
                .or(file.mode)
                .unwrap_or(RerankMode::TemporalKReciprocal);
            let split = load_split(&input).at(Stage::Load)?;
            let d = compute_distances(&split, mode, &cfg, &mut BTreeMap::new())?;
            write_dump(&d, &out).at(Stage::Write)?;
        }
        Command::Eval {
            input,
            dist,
            exclude_same_camera,
            out,
            table,
        } => {
            let split = load_split(&input).at(Stage::Load)?;
            let d = match &dist {
                Some(prefix) => read_dump(prefix).at(Stage::Load)?,
                None => feature_distances(&split).at(Stage::Distance)?,
            };
            let mut report = evaluate(&d, &split, exclude_same_camera).at(Stage::Evaluate)?;
            if dist.is_none() {
                report.config_echo = Some(effective_echo(RerankMode::None, &RerankConfig::default()));
            }
            let reports = [report];
            let json = reports_json(&reports).at(Stage::Write)?;
            match out {
                Some(path) => write_file(&path, json)?,
                None if !table => print!("{json}"),
                None => {}
            }
            if table {
                print!("{}", ascii_table(&reports));
            }
        }
        Command::Schedule {
            strategy,
            param,
            epochs,
            format,
        } => {
            let cfg = schedule_config(strategy, param);
            let rows = schedule_table(&cfg, epochs).at(Stage::Config)?;
            match format {
                TableFormat::Csv => {
                    println!("epoch,progress,alpha");
                    for r in rows {
                        println!("{},{:.6},{:.6}", r.epoch, r.progress, r.alpha);
                    }
                }
                TableFormat::Table => {
                    println!("{:>6} | {:>8} | {:>8}", "epoch", "E", "alpha");
                    println!("{:->6}-+-{:->8}-+-{:->8}", "", "", "");
                    for r in rows {
                        println!("{:>6} | {:>8.4} | {:>8.6}", r.epoch, r.progress, r.alpha);
                    }
                }
            }
        }
        Command::Pipeline(args) => {
            let file = read_config(args.config.as_deref())?;
            let input = match (&args.input, args.synth || file.synth.is_some()) {
                (Some(path), _) => InputSource::Path(path.clone()),
                (None, true) => InputSource::Synth(args.synth_args.apply(file.synth.unwrap_or_default())),
                (None, false) => {
                    return Err(Error::InvalidConfig("pipeline needs --input or --synth".into()))
                        .at(Stage::Config)
                }
            };
            let mut cfg = PipelineConfig::new(input);
            cfg.mode = args.mode.map(Into::into).or(file.mode).unwrap_or(cfg.mode);
            cfg.rerank = args.rerank.apply(file.rerank.unwrap_or_default());
            cfg.exclude_same_camera = args.exclude_same_camera || file.exclude_same_camera.unwrap_or(false);
            cfg.both_directions = !args.single_direction && file.both_directions.unwrap_or(true);
            cfg.record_timing = args.timing;
            cfg.dump_distances = args.dump_distances;
            cfg.output_dir = Some(args.out.clone());
            let output = run_eval(&cfg)?;
            print!("{}", ascii_table(&output.reports));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = with_threads(cli.threads, || run(cli.command));
    let result = match result {
        Ok(r) => r,
        Err(e) => Err(StageError {
            stage: Stage::Config,
            source: e,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
