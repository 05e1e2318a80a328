use anyhow::{bail, Context, Result};
use artwin::coarse::{estimate_coarse, CoarseEstimate};
use artwin::config::Config;
use artwin::eval::{variance_harness, RunReport, VarianceReport};
use artwin::geometry::JointType;
use artwin::io::pipeline::{evaluate, run_refine, run_segment, PartitionArtifact, RefineArtifact};
use artwin::io::{self, read_dataset, read_json, run_pipeline, write_bytes, write_dataset, write_json, Dataset, Failure, PlyVertices};
use artwin::refine::RefineResult;
use artwin::synth::{generate_scene, SpecFile};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

const COARSE_FILE: &str = "coarse.json";
const REFINE_FILE: &str = "refine.json";
const HISTORY_FILE: &str = "loss_history.csv";
const PARTITION_FILE: &str = "partition.ply.json";
const FAILURE_FILE: &str = "failure.json";
const REPORT_FILE: &str = "report.json";

/// Recover joint, camera trajectory and movable part of a single-joint
/// articulated object from a depth video dataset.
#[derive(Parser)]
#[command(name = "artwin", version)]
struct Cli {
    /// Seed of every random stream (RANSAC, subsampling, evaluation).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding any subset of the default constants.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file (JSON or TOML).
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coarse cameras and joint hypotheses.
    Coarse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = COARSE_FILE)]
        out: PathBuf,
    },
    /// Gradient refinement of both hypotheses and the type choice. Writes
    /// loss_history.csv next to the output.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long, default_value = REFINE_FILE)]
        out: PathBuf,
    },
    /// Movable/static split of the surface cloud. Also writes a labeled PLY
    /// (label 1 = movable) next to the output.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        refine: PathBuf,
        #[arg(long, default_value = PARTITION_FILE)]
        out: PathBuf,
    },
    /// Score pipeline outputs against ground truth.
    Eval(EvalArgs),
    /// Every stage on one dataset; a failing stage writes failure.json.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct EvalArgs {
    #[command(subcommand)]
    command: Option<EvalCommand>,
    /// Directory with pipeline outputs.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Dataset directory with ground truth.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value = REPORT_FILE)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Full pipeline on every spec in a directory for seeds 0..N.
    Variance {
        #[arg(long)]
        specs: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = "variance.json")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Config::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Config::default(),
    };
    let seed = cli.seed;
    match cli.command {
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Coarse { input, out } => {
            let ds = load(&input)?;
            let coarse = estimate_coarse(&ds.observation, &config.coarse, seed)?;
            write_json(&out, "coarse", &coarse)?;
            println!("{}: {} joint", out.display(), coarse.joint_type);
            Ok(())
        }
        Command::Refine { input, coarse, out } => {
            let ds = load(&input)?;
            let coarse: CoarseEstimate = read_json(&coarse, "coarse")?;
            let (results, artifact) = run_refine(&ds.observation, &coarse, &config, seed).map_err(failure_error)?;
            write_refine(&out, &results, &artifact)?;
            println!("{}: selected {}", out.display(), artifact.selected);
            Ok(())
        }
        Command::Segment { input, refine, out } => {
            let ds = load(&input)?;
            let refine: RefineArtifact = read_json(&refine, "refine")?;
            let partition = run_segment(&ds.observation, &refine, &config).map_err(failure_error)?;
            write_partition(&out, &ds, &partition)?;
            println!(
                "{}: {} movable, {} static points",
                out.display(),
                partition.partition.movable.len(),
                partition.partition.fixed.len()
            );
            Ok(())
        }
        Command::Eval(args) => match args.command {
            Some(EvalCommand::Variance { specs, seeds, out }) => variance(&specs, seeds, &out, &config),
            None => {
                let (Some(pred), Some(gt)) = (args.pred, args.gt) else {
                    bail!("eval needs --pred and --gt, or the variance subcommand");
                };
                eval(&pred, &gt, &args.out, &config, seed)
            }
        },
        Command::Pipeline { input, out } => pipeline(&input, &out, &config, seed),
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn failure_error(f: Failure) -> anyhow::Error {
    anyhow::anyhow!("{} stage failed: {}", f.stage, f.message)
}

fn load(dir: &Path) -> Result<Dataset> {
    read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn read_spec(path: &Path) -> Result<SpecFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(spec)
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let spec = read_spec(spec_path)?.into_spec();
    let (observation, gt) = generate_scene(&spec)?;
    let name = spec_path
        .file_stem()
        .map_or_else(|| "scene".to_string(), |s| s.to_string_lossy().into_owned());
    let ds = Dataset {
        name,
        observation,
        ground_truth: Some(gt),
    };
    write_dataset(out, &ds)?;
    write_json(&out.join("scene_spec.json"), "scene_spec", &spec)?;
    println!("{}: {} frames, {} surface points", out.display(), ds.observation.frame_count(), ds.observation.surface.len());
    Ok(())
}

fn write_refine(out: &Path, results: &[Option<RefineResult>; 2], artifact: &RefineArtifact) -> Result<()> {
    write_json(out, "refine", artifact)?;
    let mut csv = String::from("hypothesis,iteration,L_static,L_dynamic,L\n");
    for (r, name) in results.iter().zip([JointType::Revolute, JointType::Prismatic]) {
        for rec in r.iter().flat_map(|r| &r.history) {
            csv.push_str(&format!(
                "{name},{},{},{},{}\n",
                rec.iteration, rec.terms.static_term, rec.terms.dynamic_term, rec.terms.total
            ));
        }
    }
    let dir = out.parent().unwrap_or(Path::new(""));
    write_bytes(&dir.join(HISTORY_FILE), csv.as_bytes())?;
    Ok(())
}

/// `x.ply.json` pairs with `x.ply`; any other name gets `.ply` appended.
fn ply_path(out: &Path) -> PathBuf {
    let s = out.to_string_lossy();
    match s.strip_suffix(".json") {
        Some(stem) if stem.ends_with(".ply") => PathBuf::from(stem),
        _ => PathBuf::from(format!("{s}.ply")),
    }
}

fn write_partition(out: &Path, ds: &Dataset, partition: &PartitionArtifact) -> Result<()> {
    write_json(out, "partition", partition)?;
    let flags = partition.partition.is_movable();
    let ply = PlyVertices {
        points: ds.observation.surface.points.clone(),
        labels: Some(flags.iter().map(|m| u16::from(*m)).collect()),
        pixels: None,
    };
    write_bytes(&ply_path(out), &io::encode_ply(&ply))?;
    Ok(())
}

fn pipeline(input: &Path, out: &Path, config: &Config, seed: u64) -> Result<()> {
    let ds = load(input)?;
    let run = run_pipeline(&ds.name, &ds.observation, ds.ground_truth.as_ref(), config, seed);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if let Some(c) = &run.coarse {
        write_json(&out.join(COARSE_FILE), "coarse", c)?;
    }
    if let (Some(results), Some(r)) = (&run.refine_results, &run.refine) {
        write_refine(&out.join(REFINE_FILE), results, r)?;
    }
    if let Some(p) = &run.partition {
        write_partition(&out.join(PARTITION_FILE), &ds, p)?;
    }
    if let Some(f) = &run.failure {
        write_json(&out.join(FAILURE_FILE), "failure", f)?;
        eprintln!("{} stage failed: {}", f.stage, f.message);
    }
    if let Some(report) = run.report {
        let r = RunReport::new(seed, vec![report]);
        write_json(&out.join(REPORT_FILE), "report", &r)?;
        print_summary(&r);
    }
    Ok(())
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path, kind: &str) -> Result<Option<T>> {
    if path.exists() {
        Ok(Some(read_json(path, kind)?))
    } else {
        Ok(None)
    }
}

fn eval(pred: &Path, gt_dir: &Path, out: &Path, config: &Config, seed: u64) -> Result<()> {
    let ds = load(gt_dir)?;
    let Some(gt) = &ds.ground_truth else {
        bail!("{} has no ground truth", gt_dir.display());
    };
    let coarse: Option<CoarseEstimate> = read_optional(&pred.join(COARSE_FILE), "coarse")?;
    let refine: Option<RefineArtifact> = read_optional(&pred.join(REFINE_FILE), "refine")?;
    let partition: Option<PartitionArtifact> = read_optional(&pred.join(PARTITION_FILE), "partition")?;
    let failure: Option<Failure> = read_optional(&pred.join(FAILURE_FILE), "failure")?;
    if failure.is_none() && (coarse.is_none() || refine.is_none() || partition.is_none()) {
        bail!("{} lacks pipeline outputs and has no {FAILURE_FILE}", pred.display());
    }
    let report = evaluate(
        &ds.name,
        &ds.observation,
        gt,
        coarse.as_ref(),
        refine.as_ref(),
        partition.as_ref(),
        failure.as_ref(),
        config,
        seed,
    );
    let r = RunReport::new(seed, vec![report]);
    write_json(out, "report", &r)?;
    print_summary(&r);
    Ok(())
}

fn variance(specs_dir: &Path, seeds: u64, out: &Path, config: &Config) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(specs_dir)
        .with_context(|| format!("listing {}", specs_dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json" || e == "toml"));
    files.sort();
    if files.is_empty() {
        bail!("no .json or .toml specs in {}", specs_dir.display());
    }
    let scenes = files
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((name, read_spec(p)?.into_spec()))
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let report: VarianceReport = variance_harness(&scenes, &seeds, config)?;
    write_json(out, "variance", &report)?;
    for key in ["coarse_axis_error", "refined_axis_error", "miou"] {
        if let Some(s) = report.cross_seed.get(key) {
            println!("{key}: {:.6} +- {:.6}", s.mean, s.std);
        }
    }
    Ok(())
}

fn print_summary(r: &RunReport) {
    for s in &r.scenes {
        let fail = s.failure.as_deref().map_or(String::new(), |f| format!(" FAILED ({f})"));
        println!(
            "{}: axis {:.3e} rad (coarse {:.3e}), state {:.3e}, type error {}{fail}",
            s.scene, s.refined.axis_error, s.coarse.axis_error, s.refined.state_error, s.refined.type_error
        );
    }
}
