//! Command-line interface. `main` only parses arguments and maps the
//! result of [`run`] to an exit code.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use facepipe_core::io::{load_image, read_json, write_json};
use facepipe_core::metrics::{
    euler_distance, fec_distance, frechet_distance, id_against_random_sources, identity_similarity, l1_distance,
    landmark_distance, EmbeddingSet, FrameMetrics, MetricReport, Summary,
};
use facepipe_core::render::renderer_by_name;
use facepipe_core::synth::{rotation_corpus, sweep_poses, FaceInstance};
use facepipe_core::transformer::{
    evaluate, identity_baseline_mse, save_checkpoint, train, write_loss_csv, OutputOffset, TrainConfig, TrainingSample,
};
use facepipe_core::{Landmarks, Point2, Pose, Sequence};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::curate::curate_sequence;
use crate::dataset::{frame_annotation_path, frame_image_path, list_frames, load_dataset, write_dataset, Annotation};
use crate::error::{PipelineError, Result};
use crate::pipeline::{build_appearance_map, parse_pose_path, run_expression, run_pose_path, run_swap};
use crate::service::{serve, ServiceState};

#[derive(Debug, Parser)]
#[command(
    name = "facepipe",
    version,
    about = "Face swapping and reenactment from a single source video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub renderer: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub transformer: Option<PathBuf>,
    #[arg(long)]
    pub crop_size: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.source {
            cfg.source = v.clone();
        }
        if let Some(v) = &self.target {
            cfg.target = Some(v.clone());
        }
        if let Some(v) = &self.output {
            cfg.output = v.clone();
        }
        if let Some(v) = &self.renderer {
            cfg.renderer = v.clone();
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = &self.transformer {
            cfg.transformer = Some(v.clone());
        }
        if let Some(v) = self.crop_size {
            cfg.crop_size = v;
        }
        if cfg.source.as_os_str().is_empty() {
            return Err(PipelineError::config(
                "a source directory is required (--source or config)",
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the appearance map of a source and write it as JSON.
    BuildMap {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output>/map.json`.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Keep the most varied frames of a dataset.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_frames: usize,
    },
    /// Swap the source face into every target frame.
    Swap {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render the source at each pose of `yaw,pitch[,roll];...`.
    ReenactPath {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, allow_hyphen_values = true)]
        poses: String,
    },
    /// Transfer the source mouth onto the target frames.
    ReenactExpression {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare output frames against reference frames.
    Metrics(MetricsArgs),
    /// Serve /health, /map and /view for the pose explorer.
    Serve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Fit the landmark transformer and write a checkpoint.
    TrainTransformer(TrainArgs),
    /// Write a synthetic annotated dataset.
    SynthData {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Also write a rotation corpus of this many samples to `corpus.json`.
        #[arg(long)]
        corpus: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of generated `NNNNN.png` frames, optionally with annotations.
    #[arg(long)]
    pub output: PathBuf,
    /// Directory of reference frames with annotations.
    #[arg(long)]
    pub reference: PathBuf,
    /// Embedding CSVs (one row per frame, no header) for the Fréchet distance.
    #[arg(long, requires = "fake_embeddings")]
    pub real_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub fake_embeddings: Option<PathBuf>,
    /// Identity embeddings of the outputs, row-aligned with frames.
    #[arg(long)]
    pub id_output: Option<PathBuf>,
    /// Identity embeddings of the source.
    #[arg(long)]
    pub id_source: Option<PathBuf>,
    /// Random (output, source) pairs for the identity score; 0 pairs rows.
    #[arg(long, default_value_t = 0)]
    pub id_pairs: usize,
    /// Expression embeddings of outputs and references, row-aligned.
    #[arg(long, requires = "fec_reference")]
    pub fec_output: Option<PathBuf>,
    #[arg(long)]
    pub fec_reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `metrics.json` and `metrics.csv` here; defaults to `output`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON list of samples; without it a synthetic corpus is used.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    pub synthetic: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub hidden: Option<usize>,
}

/// One sample of a corpus file, landmarks normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub source: Vec<[f64; 2]>,
    pub pose: [f64; 3],
    pub target: Vec<[f64; 2]>,
}

impl CorpusSample {
    fn from_sample(s: &TrainingSample<f64>) -> Self {
        let pts = |l: &Landmarks| l.points().iter().map(|&p| p.into()).collect();
        CorpusSample {
            source: pts(&s.source),
            pose: s.pose.to_array(),
            target: pts(&s.target),
        }
    }

    fn into_sample(self) -> Result<TrainingSample<f64>> {
        let lm = |v: Vec<[f64; 2]>| Landmarks::new(v.into_iter().map(Point2::from).collect());
        let [yaw, pitch, roll] = self.pose;
        Ok(TrainingSample {
            source: lm(self.source)?,
            pose: Pose::new(yaw, pitch, roll),
            target: lm(self.target)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOutput {
    #[serde(flatten)]
    pub report: MetricReport,
    /// Identity similarity over random (output, source) pairs.
    pub id_random: Option<Summary>,
}

/// Executes a parsed command. The returned code is 0 on success and 1
/// when some frames failed; hard errors come back as `Err`.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::BuildMap { cfg, map } => {
            let cfg = cfg.resolve()?;
            let data = load_dataset(&cfg.source)?;
            let m = build_appearance_map(&data.sequence, &cfg)?;
            let path = map.unwrap_or_else(|| cfg.output.join("map.json"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            write_json(&m.to_json(), &path)?;
            Ok(0)
        }
        Command::Curate {
            input,
            output,
            max_frames,
        } => {
            if input == output {
                return Err(PipelineError::config("curate output must differ from its input"));
            }
            let data = load_dataset(&input)?;
            write_dataset(&curate_sequence(&data.sequence, max_frames), &output)?;
            Ok(0)
        }
        Command::Swap { cfg } => Ok(report_run(run_swap(&cfg.resolve()?)?)),
        Command::ReenactPath { cfg, poses } => {
            let cfg = cfg.resolve()?;
            run_pose_path(&cfg, &parse_pose_path(&poses)?)?;
            Ok(0)
        }
        Command::ReenactExpression { cfg } => Ok(report_run(run_expression(&cfg.resolve()?)?)),
        Command::Metrics(args) => {
            let out = compute_metrics(&args)?;
            let dir = args.report.clone().unwrap_or_else(|| args.output.clone());
            std::fs::create_dir_all(&dir)?;
            write_json(&out, dir.join("metrics.json"))?;
            std::fs::write(dir.join("metrics.csv"), out.report.to_csv())?;
            Ok(0)
        }
        Command::Serve { cfg, addr } => {
            let cfg = cfg.resolve()?;
            let data = load_dataset(&cfg.source)?;
            let map = if data.sequence.is_empty() {
                None
            } else {
                Some(build_appearance_map(&data.sequence, &cfg)?)
            };
            let renderer = renderer_by_name(&cfg.renderer).map_err(|e| PipelineError::config(e.to_string()))?;
            let state = ServiceState {
                map,
                renderer,
                size: cfg.crop_size,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, &addr))?;
            Ok(0)
        }
        Command::TrainTransformer(args) => {
            train_transformer(&args)?;
            Ok(0)
        }
        Command::SynthData {
            output,
            frames,
            size,
            corpus,
            seed,
        } => {
            synth_data(&output, frames, size, corpus, seed)?;
            Ok(0)
        }
    }
}

fn report_run(run: crate::pipeline::RunSummary) -> i32 {
    for f in run.frames.iter().filter(|f| f.error.is_some()) {
        eprintln!("frame {}: {}", f.frame, f.error.as_deref().unwrap_or(""));
    }
    run.exit_code()
}

/// Reads a headerless CSV of numbers, one embedding per row.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::config(format!("{} row {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    Ok(EmbeddingSet::new(rows)?)
}

fn row_aligned<'a>(set: &'a Option<EmbeddingSet<f64>>, i: usize) -> Option<&'a [f64]> {
    set.as_ref().filter(|s| i < s.len()).map(|s| s.row(i))
}

pub fn compute_metrics(args: &MetricsArgs) -> Result<MetricsOutput> {
    let reference = load_dataset(&args.reference)?;
    let outputs = list_frames(&args.output)?;
    let id_out = args.id_output.as_deref().map(read_embeddings).transpose()?;
    let id_src = args.id_source.as_deref().map(read_embeddings).transpose()?;
    let fec_out = args.fec_output.as_deref().map(read_embeddings).transpose()?;
    let fec_ref = args.fec_reference.as_deref().map(read_embeddings).transpose()?;

    let mut frames = Vec::new();
    for (i, r) in reference.sequence.iter().enumerate() {
        let Some(path) = outputs.get(&r.frame) else { continue };
        let mut m = FrameMetrics {
            frame: r.frame,
            ..Default::default()
        };
        m.l1 = Some(l1_distance(&load_image::<f64>(path)?, &r.load_image()?)?);
        let ann_path = frame_annotation_path(&args.output, r.frame);
        if ann_path.exists() {
            let ann: Annotation = read_json(&ann_path)?;
            let lm = Landmarks::new(ann.landmarks.iter().map(|&p| Point2::from(p)).collect())?;
            m.landmarks = Some(landmark_distance(&lm, &r.landmarks));
            m.euler = Some(euler_distance(&Pose::from(ann.pose), &r.pose));
        }
        if args.id_pairs == 0 {
            if let (Some(a), Some(b)) = (row_aligned(&id_out, i), row_aligned(&id_src, i)) {
                m.id = Some(identity_similarity(a, b)?);
            }
        }
        if let (Some(a), Some(b)) = (row_aligned(&fec_out, i), row_aligned(&fec_ref, i)) {
            m.fec = Some(fec_distance(a, b)?);
        }
        frames.push(m);
    }
    let fid = match (&args.real_embeddings, &args.fake_embeddings) {
        (Some(r), Some(f)) => Some(frechet_distance(&read_embeddings(r)?, &read_embeddings(f)?)?),
        _ => None,
    };
    let id_random = match (&id_out, &id_src) {
        (Some(o), Some(s)) if args.id_pairs > 0 => {
            Summary::of(&id_against_random_sources(o, s, args.id_pairs, args.seed)?)
        }
        _ => None,
    };
    Ok(MetricsOutput {
        report: MetricReport::new(frames, fid),
        id_random,
    })
}

pub fn train_transformer(args: &TrainArgs) -> Result<()> {
    let samples: Vec<TrainingSample<f64>> = match &args.corpus {
        Some(p) => {
            let raw: Vec<CorpusSample> = read_json(p)?;
            raw.into_iter().map(CorpusSample::into_sample).collect::<Result<_>>()?
        }
        None => rotation_corpus(args.synthetic, args.seed, args.noise),
    };
    if samples.is_empty() {
        return Err(PipelineError::config("training corpus is empty"));
    }
    let mut cfg = TrainConfig {
        iterations: args.iterations,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
        output_offset: OutputOffset::TrainingMean,
        ..TrainConfig::default()
    };
    if let Some(h) = args.hidden {
        cfg.hidden = h;
    }
    cfg.validate().map_err(|e| PipelineError::config(e.to_string()))?;
    let trained = train(&samples, &cfg)?;
    std::fs::create_dir_all(&args.output)?;
    save_checkpoint(&args.output.join("transformer.bin"), &trained.model)?;
    write_loss_csv(&args.output.join("loss.csv"), &trained.losses)?;
    eprintln!(
        "training mse {:.6}, identity baseline {:.6}",
        evaluate(&trained.model, &samples)?,
        identity_baseline_mse(&samples)
    );
    Ok(())
}

pub fn synth_data(output: &Path, frames: usize, size: usize, corpus: Option<usize>, seed: u64) -> Result<Sequence> {
    if size < 8 {
        return Err(PipelineError::config("frame size must be at least 8"));
    }
    let seq: Sequence = FaceInstance::default().sequence(&sweep_poses(frames), size, size);
    write_dataset(&seq, output)?;
    if let Some(n) = corpus {
        let samples: Vec<CorpusSample> = rotation_corpus::<f64>(n, seed, 0.5)
            .iter()
            .map(CorpusSample::from_sample)
            .collect();
        write_json(&samples, output.join("corpus.json"))?;
    }
    debug_assert!(seq.iter().all(|f| frame_image_path(output, f.frame).exists()));
    Ok(seq)
}
