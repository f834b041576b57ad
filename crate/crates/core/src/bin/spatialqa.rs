use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use spatialqa::eval::{parse_predictions_jsonl, score_run, EvalError, Weighting};
use spatialqa::fusion::{build_unified_3d, cross_attention, fuse_forward, grad_check, FusionDims, FusionInstance, Projector, TokenMatrix};
use spatialqa::metadata::{save_frame_metadata, save_scene_metadata, BoxOrientation};
use spatialqa::pipeline::{
    discover_scenes, generate, ingest, load_records, load_scene_input, load_trajectories, records_to_jsonl, stats_table, task_counts_path,
    Header, IngestArgs, PipelineConfig, PipelineError, CLOUD_FILE, FRAME_METADATA_FILE, SCENE_METADATA_FILE,
};
use spatialqa::ply::{write_ply, PlyFormat};
use spatialqa::qa::{stream_rng, Task};
use spatialqa::synth::{random_scene, synth_cloud, SynthOptions};

#[derive(Parser)]
#[command(name = "spatialqa", version, about = "Scene-graph QA generation, scoring, and fusion checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Orientation {
    AxisAligned,
    PcaYaw,
}

#[derive(Subcommand)]
enum Command {
    /// Fit instance boxes from a labeled PLY and write scene metadata.
    Ingest {
        #[arg(long)]
        ply: PathBuf,
        /// JSON object from semantic label id to category name.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        scene_id: String,
        /// Output scene directory.
        #[arg(long)]
        out: PathBuf,
        /// Frame metadata to validate against the scene and copy alongside.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        min_points: usize,
        #[arg(long, value_enum, default_value = "axis-aligned")]
        orientation: Orientation,
    },
    /// Generate QA records for one scene directory or a root of scene directories.
    Gen {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML pipeline config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated task names.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<Task>>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_per_task: Option<usize>,
        /// Route trajectories JSONL; scenes without any use the grid planner.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Also emit the second route template for sharp turns.
        #[arg(long)]
        alternative_routes: bool,
    },
    /// Score predictions against generated records.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Write the JSON report here (otherwise only the table is printed).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Average over questions instead of over tasks.
        #[arg(long)]
        per_question: bool,
    },
    /// Count records per task in a file or a directory of per-task files.
    Stats {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the fusion kernel checks on a random or fixture instance.
    FusionCheck {
        /// Directory of TMX1 matrices (hv, f, z, wq, wk, wv, w1, b1, w2, b2).
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run a forward pass at full model dimensions.
        #[arg(long)]
        paper_shapes: bool,
    },
    /// Write seeded synthetic scene directories.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a labeled cloud.ply and label_map.json.
        #[arg(long)]
        cloud: bool,
    },
    /// Print the scene graph of a scene directory as JSON.
    Graph {
        scene: PathBuf,
        #[arg(long, default_value_t = spatialqa::graph::DEFAULT_MIN_BBOX_AREA_PX)]
        min_bbox_area_px: f64,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PipelineError::Input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { ply, labels, scene_id, out, frames, min_points, orientation } => {
            let orientation = match orientation {
                Orientation::AxisAligned => BoxOrientation::AxisAligned,
                Orientation::PcaYaw => BoxOrientation::PcaYaw,
            };
            let report = ingest(&IngestArgs {
                ply: &ply,
                label_map: &labels,
                scene_id: &scene_id,
                out_dir: &out,
                frames: frames.as_deref(),
                min_points,
                orientation,
            })?;
            println!("{}: {} points, {} instances, {} dropped", report.scene_id, report.points, report.instances, report.dropped.len());
            for (id, why) in &report.dropped {
                println!("  dropped instance {id}: {}", serde_json::to_value(why).expect("serializable").as_str().unwrap_or("?"));
            }
        }
        Command::Gen { input, out, config, tasks, workers, seed, max_per_task, trajectories, alternative_routes } => {
            let mut cfg = match &config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(t) = tasks {
                cfg.tasks = t;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(s) = seed {
                cfg.generator.seed = s;
            }
            if let Some(m) = max_per_task {
                cfg.generator.max_per_task = m;
            }
            cfg.generator.route_alternative_mode |= alternative_routes;
            cfg.validate()?;
            let scenes = discover_scenes(&input)?
                .iter()
                .map(|d| load_scene_input(d, cfg.min_bbox_area_px))
                .collect::<Result<Vec<_>, _>>()?;
            let trajs = match &trajectories {
                Some(p) => load_trajectories(p)?,
                None => BTreeMap::new(),
            };
            let records = generate(&scenes, &trajs, &cfg)?;
            write(&out, records_to_jsonl(&records, Some(&Header::new(&cfg))))?;
            let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
            for r in &records {
                *counts.entry(r.task).or_default() += 1;
            }
            println!("{} records from {} scenes", records.len(), scenes.len());
            for (t, c) in counts {
                println!("  {:<20} {c}", t.name());
            }
        }
        Command::Eval { records, predictions, report, per_question } => {
            let recs = load_records(&records)?;
            let preds = parse_predictions_jsonl(&read(&predictions)?)
                .map_err(|e| PipelineError::Input(format!("{}: {e}", predictions.display())))?;
            let weighting = if per_question { Weighting::QuestionMean } else { Weighting::TaskMean };
            let rep = score_run(&recs, &preds, weighting).map_err(|e| match e {
                EvalError::DuplicateQid(_) => PipelineError::Evaluation(format!("{}: {e}", predictions.display())),
                other => PipelineError::Input(other.to_string()),
            })?;
            if let Some(p) = report {
                write(&p, rep.to_json())?;
            }
            print!("{}", rep.table());
        }
        Command::Stats { file, json } => {
            let counts = task_counts_path(&file)?;
            if json {
                let total: usize = counts.values().sum();
                println!("{}", serde_json::to_string_pretty(&json!({ "per_task": counts, "total": total })).expect("serializable"));
            } else {
                print!("{}", stats_table(&counts));
            }
        }
        Command::FusionCheck { fixtures, seed, paper_shapes } => {
            let inst = match &fixtures {
                Some(dir) => FusionInstance::load_dir(dir).map_err(|e| PipelineError::Input(e.to_string()))?,
                None => {
                    let dims = FusionDims { dim_v: 16, dim_3d: 12, d_k: 8, d_p1: 16, d_p2: 12 };
                    FusionInstance::random(12, 10, dims, &mut ChaCha8Rng::seed_from_u64(seed))
                }
            };
            let summary = fusion_summary(&inst, paper_shapes, seed).map_err(|e| PipelineError::Input(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
        }
        Command::Synth { out, scenes, seed, cloud } => {
            for i in 0..scenes {
                let id = format!("synth{i:03}");
                let s = random_scene(&id, seed, &SynthOptions::default());
                let dir = out.join(&id);
                fs::create_dir_all(&dir).map_err(|e| PipelineError::Input(format!("{}: {e}", dir.display())))?;
                let io = |e: spatialqa::metadata::MetadataError| PipelineError::Input(e.to_string());
                save_scene_metadata(&s.scene, dir.join(SCENE_METADATA_FILE)).map_err(io)?;
                save_frame_metadata(&s.frames, dir.join(FRAME_METADATA_FILE)).map_err(io)?;
                if cloud {
                    let mut rng = stream_rng(seed, &id, "cloud", 0);
                    let (pc, labels) = synth_cloud(&s.scene, 400, &mut rng).map_err(io)?;
                    let mut bytes = Vec::new();
                    write_ply(&mut bytes, pc.points(), PlyFormat::BinaryLittleEndian).expect("in-memory write");
                    write(&dir.join(CLOUD_FILE), bytes)?;
                    let map: BTreeMap<String, String> = labels.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                    write(&dir.join("label_map.json"), serde_json::to_string_pretty(&map).expect("serializable") + "\n")?;
                }
                println!("{}: {} objects, {} frames", dir.display(), s.scene.objects.len(), s.frames.frames.len());
            }
        }
        Command::Graph { scene, min_bbox_area_px } => {
            let input = load_scene_input(&scene, min_bbox_area_px)?;
            print!("{}", input.graph.to_json());
        }
    }
    Ok(())
}

fn fusion_summary(inst: &FusionInstance, paper_shapes: bool, seed: u64) -> Result<serde_json::Value, spatialqa::fusion::FusionError> {
    let z3d = build_unified_3d(&inst.f, &inst.z)?;
    let att = cross_attention(&inst.hv, &z3d, &inst.weights)?;
    let row_dev = (0..att.weights.rows()).map(|i| (att.weights.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);

    let mut zero_v = inst.weights.clone();
    zero_v.wv = TokenMatrix::zeros(zero_v.wv.rows(), zero_v.wv.cols());
    zero_v.projector = Projector::identity(inst.hv.cols());
    let identity_exact = fuse_forward(&inst.hv, &inst.f, &inst.z, &zero_v)? == inst.hv;

    let mut sweep = Vec::new();
    for step in [1e-3, 1e-4, 1e-5] {
        sweep.push(grad_check(&inst.weights, &inst.hv, &z3d, step)?);
    }
    let mut out = json!({
        "shapes": { "hv": inst.hv.shape(), "unified_3d": z3d.shape(), "output": fuse_forward(&inst.hv, &inst.f, &inst.z, &inst.weights)?.shape() },
        "softmax_max_row_deviation": row_dev,
        "residual_identity_exact": identity_exact,
        "grad_check": sweep,
    });
    if paper_shapes {
        let dims = FusionDims { dim_v: 1152, dim_3d: 768, d_k: spatialqa::fusion::DEFAULT_D_K, d_p1: 3584, d_p2: 3584 };
        let big = FusionInstance::random(729, 729, dims, &mut ChaCha8Rng::seed_from_u64(seed));
        let y = fuse_forward(&big.hv, &big.f, &big.z, &big.weights)?;
        out["paper_shapes"] = json!({ "output": y.shape(), "finite": y.data().iter().all(|v| v.is_finite()) });
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
