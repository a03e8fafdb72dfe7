use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poselab::augmentation::{augment_epoch, DEFAULT_RANGE};
use poselab::dataset_io::{parse_cambridge, parse_seven_scenes, DatasetManifest, SevenScenesOptions, SourceFormat, Split};
use poselab::harness::{
    emit_table, evaluate_manifest, load_manifest_samples, load_runs, output_root, run_experiment, table_grid,
    ExperimentConfig, Layout, MetreStyle, RoundingMode, TableFormat, OUTPUT_ROOT_ENV,
};
use poselab::imaging::{write_png, Preprocessing};
use poselab::keyvalue::{self, Pairs};
use poselab::model::load_checkpoint;
use poselab::synthetic::{write_dataset, SceneConfig, TrajectoryConfig};
use poselab::{Error, Result};

#[derive(Parser)]
#[command(name = "poselab", version, about = "Camera pose regression experiments at desk scale")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a 7-Scenes or Cambridge Landmarks scene into a manifest.
    Ingest {
        /// seven_scenes or cambridge
        format: String,
        /// Scene directory.
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        /// 7-Scenes sequence list overriding TrainSplit.txt / TestSplit.txt.
        #[arg(long)]
        split_file: Option<PathBuf>,
        /// 7-Scenes copies storing world-to-camera matrices.
        #[arg(long)]
        invert_poses: bool,
    },
    /// Render a synthetic dataset: PNG frames plus train and test manifests.
    Synth {
        /// Scene config (key = value; keys with or without a `scene.` prefix).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Trajectory config (keys with or without a `trajectory.` prefix).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write one epoch of rotation augmentation: originals plus rolled copies.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// Angle range in degrees.
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["LO", "HI"])]
        range: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train and evaluate one experiment config, or the 20-run table grid built from it.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output root; defaults to $POSELAB_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the crop/view × augmentation × head grid instead.
        #[arg(long)]
        grid: bool,
    },
    /// Median errors of a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to the pipeline recorded in the checkpoint.
        #[arg(long)]
        preprocessing: Option<String>,
        #[arg(long)]
        force_windows: bool,
        /// Per-frame CSV destination.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate finished runs in one of the table layouts.
    Report {
        /// table1 to table5
        #[arg(long)]
        layout: String,
        /// Directory holding run directories; defaults to the output root.
        #[arg(long)]
        runs: Option<PathBuf>,
        /// truncate or nearest
        #[arg(long, default_value = "truncate")]
        rounding: String,
        /// Two decimals for meters at every magnitude.
        #[arg(long)]
        two_decimals: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            format,
            root,
            output,
            split,
            split_file,
            invert_poses,
        } => ingest(&format, &root, &output, Split::parse(&split)?, split_file, invert_poses),
        Command::Synth {
            scene,
            trajectory,
            seed,
            output,
        } => synth(scene.as_deref(), trajectory.as_deref(), seed, &output),
        Command::Augment {
            manifest,
            range,
            seed,
            epoch,
            output,
        } => {
            let range = match range.as_deref() {
                Some([lo, hi]) => (*lo, *hi),
                _ => DEFAULT_RANGE,
            };
            augment(&manifest, range, seed, epoch, &output)
        }
        Command::Train { config, out, grid } => train(&config, out, grid),
        Command::Eval {
            checkpoint,
            manifest,
            preprocessing,
            force_windows,
            output,
        } => eval(&checkpoint, &manifest, preprocessing.as_deref(), force_windows, output.as_deref()),
        Command::Report {
            layout,
            runs,
            rounding,
            two_decimals,
        } => report(&layout, runs, &rounding, two_decimals),
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()?.join(p)
    })
}

fn ingest(
    format: &str,
    root: &Path,
    output: &Path,
    split: Split,
    split_file: Option<PathBuf>,
    invert_poses: bool,
) -> Result<()> {
    let (mut manifest, skipped) = match SourceFormat::parse(format)? {
        SourceFormat::SevenScenes => parse_seven_scenes(
            root,
            &SevenScenesOptions {
                split,
                split_file,
                invert_poses,
            },
        )?,
        SourceFormat::Cambridge => parse_cambridge(root, split)?,
        SourceFormat::Synthetic => {
            return Err(Error::Config("synthetic datasets come from `synth`, not `ingest`".into()))
        }
    };
    // image paths are stored absolute so the manifest can live anywhere
    let root = absolute(root)?;
    for e in &mut manifest.entries {
        e.path = manifest_path(&root, &e.path);
    }
    manifest.provenance.insert("root".into(), root.display().to_string());
    manifest.save(output)?;
    println!(
        "{}: {} frames ({} skipped) -> {}",
        manifest.name,
        manifest.len(),
        skipped.len(),
        output.display()
    );
    Ok(())
}

fn manifest_path(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn section_file(path: Option<&Path>, prefix: &str) -> Result<BTreeMap<String, String>> {
    let Some(path) = path else { return Ok(BTreeMap::new()) };
    Ok(keyvalue::read_key_values(path)?
        .into_iter()
        .map(|(k, v)| (k.strip_prefix(prefix).map(str::to_string).unwrap_or(k), v))
        .collect())
}

fn synth(scene: Option<&Path>, trajectory: Option<&Path>, seed: u64, output: &Path) -> Result<()> {
    let scene = SceneConfig::from_pairs(&SceneConfig::default(), &section_file(scene, "scene.")?)?;
    let traj = TrajectoryConfig::from_pairs(&TrajectoryConfig::default(), &section_file(trajectory, "trajectory.")?)?;
    let (train, test) = write_dataset(output, &scene, &traj, seed)?;
    let mut echo: Pairs = scene.to_pairs().into_iter().map(|(k, v)| (format!("scene.{k}"), v)).collect();
    echo.extend(traj.to_pairs().into_iter().map(|(k, v)| (format!("trajectory.{k}"), v)));
    echo.push(("seed".into(), seed.to_string()));
    fs::write(output.join("synth.txt"), keyvalue::format_key_values(&echo))?;
    println!("{}\n{}", train.display(), test.display());
    Ok(())
}

fn augment(manifest_path: &Path, range: (f64, f64), seed: u64, epoch: u64, output: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = absolute(manifest_path.parent().unwrap_or(Path::new(".")))?;
    let samples = load_manifest_samples(&manifest, &base)?;
    let augmented = augment_epoch(&samples, range, seed, epoch)?;
    fs::create_dir_all(output.join("augmented"))?;
    let mut out = DatasetManifest::new(manifest.name.clone(), manifest.split, manifest.source_format);
    out.provenance = manifest.provenance.clone();
    out.provenance.insert("augment.source".into(), manifest_path.display().to_string());
    out.provenance.insert("augment.range".into(), format!("{} {}", range.0, range.1));
    out.provenance.insert("augment.seed".into(), seed.to_string());
    out.provenance.insert("augment.epoch".into(), epoch.to_string());
    for (k, s) in augmented.iter().enumerate() {
        let original = &manifest.entries[k / 2];
        let path = if s.synthetic {
            let rel = PathBuf::from(format!("augmented/{:06}-{}-{:06}.png", k / 2, s.sequence_id, s.frame_index));
            write_png(&s.image, &output.join(&rel))?;
            rel
        } else {
            manifest.resolve(&base, original)
        };
        out.entries.push(poselab::dataset_io::ManifestEntry {
            sequence_id: s.sequence_id.clone(),
            frame_index: s.frame_index,
            path,
            pose: s.label,
            synthetic: s.synthetic,
        });
    }
    let path = output.join(format!("{}.manifest", manifest.split.name()));
    out.save(&path)?;
    println!("{} frames -> {}", out.len(), path.display());
    Ok(())
}

fn train(config_path: &Path, out: Option<PathBuf>, grid: bool) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    config.resolve_paths(&absolute(config_path.parent().unwrap_or(Path::new(".")))?);
    let root = out.unwrap_or_else(output_root);
    let configs = if grid { table_grid(&config) } else { vec![config] };
    for c in &configs {
        log::info!("training {} ({OUTPUT_ROOT_ENV} root {})", c.name, root.display());
        let outcome = run_experiment(c, Some(&root))?;
        println!(
            "{}: train {} m / {} deg, test {} m / {} deg, {} steps -> {}",
            c.name,
            outcome.train.median_position_m,
            outcome.train.median_orientation_deg,
            outcome.test.median_position_m,
            outcome.test.median_orientation_deg,
            outcome.steps,
            root.join(&c.name).display()
        );
    }
    Ok(())
}

fn eval(
    checkpoint: &Path,
    manifest_path: &Path,
    preprocessing: Option<&str>,
    force_windows: bool,
    output: Option<&Path>,
) -> Result<()> {
    let (model, echo) = load_checkpoint(checkpoint)?;
    let pre = match preprocessing.or(echo.get("preprocessing").map(String::as_str)) {
        Some(p) => Preprocessing::parse(p)?,
        None => Preprocessing::WholeFov,
    };
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = absolute(manifest_path.parent().unwrap_or(Path::new(".")))?;
    let report = evaluate_manifest(&model, &manifest, &base, pre, force_windows)?;
    let mut text = String::new();
    for (k, v) in &echo {
        writeln!(text, "# {k} = {v}").unwrap();
    }
    writeln!(text, "# eval.checkpoint = {}", checkpoint.display()).unwrap();
    writeln!(text, "# eval.manifest = {}", manifest_path.display()).unwrap();
    writeln!(text, "# eval.preprocessing = {}", pre.name()).unwrap();
    writeln!(text, "# median_position_m = {}", report.median_position_m).unwrap();
    writeln!(text, "# median_orientation_deg = {}", report.median_orientation_deg).unwrap();
    writeln!(text, "sequence_id,frame_index,position_error_m,orientation_error_deg").unwrap();
    for f in &report.frames {
        writeln!(text, "{},{},{},{}", f.sequence_id, f.frame_index, f.position_m, f.orientation_deg).unwrap();
    }
    if let Some(o) = output {
        fs::write(o, &text)?;
    }
    println!(
        "{} frames: median {} m, {} deg",
        report.frames.len(),
        report.median_position_m,
        report.median_orientation_deg
    );
    Ok(())
}

fn report(layout: &str, runs: Option<PathBuf>, rounding: &str, two_decimals: bool) -> Result<()> {
    let layout = Layout::parse(layout)?;
    let fmt = TableFormat {
        rounding: RoundingMode::parse(rounding)?,
        metres: if two_decimals {
            MetreStyle::TwoDecimals
        } else {
            MetreStyle::Adaptive
        },
    };
    let dir = runs.unwrap_or_else(output_root);
    let records = load_runs(&dir)?;
    let table = emit_table(&records, layout, &fmt)?;
    let mut echo = format!(
        "layout = {}\nrounding = {}\nmetres = {}\nruns = {}\n",
        layout.name(),
        fmt.rounding.name(),
        if two_decimals { "two_decimals" } else { "adaptive" },
        records.iter().map(|r| r.config.name.as_str()).collect::<Vec<_>>().join(" ")
    );
    let md = format!(
        "{}\n{}",
        echo.lines().map(|l| format!("<!-- {l} -->\n")).collect::<String>(),
        table.markdown
    );
    echo = echo.lines().map(|l| format!("# {l}\n")).collect();
    fs::write(dir.join(format!("{}.md", layout.name())), &md)?;
    fs::write(dir.join(format!("{}.csv", layout.name())), format!("{echo}{}", table.csv))?;
    print!("{}", table.markdown);
    Ok(())
}
