use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augmentation::{augment_epoch, augment_sample, draw_theta, mix_seed, sample_seed, Sample};
use crate::autodiff::{Tape, Tensor};
use crate::dataset_io::{sequence_windows, DatasetManifest};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::imaging::{Image, Preprocessing};
use crate::keyvalue::{self, Pairs};
use crate::loss_optim::{training_step, AdamState, LossKind, StepLog};
use crate::model::{save_checkpoint, HeadKind, Model};

use super::config::ExperimentConfig;
use super::data::{load_dataset, load_manifest_samples, LoadedData};
use super::metrics::{mean, median, pose_errors};
use super::table::TableFormat;

/// Environment variable naming the directory runs are written under.
pub const OUTPUT_ROOT_ENV: &str = "POSELAB_OUT";

/// `$POSELAB_OUT`, or `runs` when unset.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Errors of one evaluated frame (or of the last frame of one window).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameError {
    pub sequence_id: String,
    pub frame_index: u64,
    pub position_m: f64,
    pub orientation_deg: f64,
}

/// One learning-curve sample. Epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    /// Mean training-step loss over the epoch; absent at epoch 0.
    pub mean_loss: Option<f64>,
    pub train_position_m: f64,
    pub train_orientation_deg: f64,
    pub test_position_m: f64,
    pub test_orientation_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub median_position_m: f64,
    pub median_orientation_deg: f64,
    pub frames: Vec<FrameError>,
    /// Filled on the test report of a run.
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameError>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Data("nothing to evaluate".into()));
        }
        let pos: Vec<f64> = frames.iter().map(|f| f.position_m).collect();
        let ori: Vec<f64> = frames.iter().map(|f| f.orientation_deg).collect();
        Ok(Self {
            median_position_m: median(&pos)?,
            median_orientation_deg: median(&ori)?,
            frames,
            curve: Vec::new(),
        })
    }

    pub fn position_errors(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.position_m).collect()
    }

    pub fn orientation_errors(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.orientation_deg).collect()
    }

    /// Whether the stored medians are exactly those of the stored frames.
    pub fn is_consistent(&self) -> bool {
        median(&self.position_errors()).ok() == Some(self.median_position_m)
            && median(&self.orientation_errors()).ok() == Some(self.median_orientation_deg)
    }
}

/// Random crops are a training-time pipeline; evaluation uses the centered crop.
pub fn eval_preprocessing(p: Preprocessing) -> Preprocessing {
    match p {
        Preprocessing::RandomCrop => Preprocessing::CenteredCrop,
        other => other,
    }
}

fn network_input(model: &Model, pre: Preprocessing, image: &Image, crop_seed: u64) -> Result<Tensor> {
    model.pool_input(&pre.apply(image, crop_seed)?.to_network_tensor())
}

/// Pooled network inputs of `samples` under the evaluation pipeline.
pub fn prepare_inputs(model: &Model, pre: Preprocessing, samples: &[Sample]) -> Result<Vec<Tensor>> {
    let pre = eval_preprocessing(pre);
    samples.iter().map(|s| network_input(model, pre, &s.image, 0)).collect()
}

/// Frames the model is scored on: every frame for the FC head, every
/// length-L window (stride 1) for the LSTM head. Augmented samples are skipped.
pub fn eval_windows(model: &Model, samples: &[Sample]) -> Result<Vec<Vec<usize>>> {
    let head = &model.config.head;
    Ok(match head.kind {
        HeadKind::Fc => (0..samples.len()).filter(|&i| !samples[i].synthetic).map(|i| vec![i]).collect(),
        HeadKind::Lstm => sequence_windows(samples, head.sequence_length, 1)?
            .into_iter()
            .map(|w| w.indices)
            .collect(),
    })
}

const EVAL_CHUNK: usize = 32;

/// Scores prepared inputs. Each window's label is that of its last frame.
pub fn evaluate_prepared(
    model: &Model,
    inputs: &[Tensor],
    samples: &[Sample],
    windows: &[Vec<usize>],
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "no frame can be evaluated ({} samples, sequence length {})",
            samples.len(),
            model.config.head.sequence_length
        )));
    }
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let mut frames = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let bound = model.params.bind_frozen(&mut tape);
        let (x, q) = model.forward_windows(&mut tape, &bound, &refs, chunk)?;
        let (xv, qv) = (tape.value(x).data(), tape.value(q).data());
        if xv.iter().chain(qv).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite prediction".into()));
        }
        let b = chunk.len();
        for (j, w) in chunk.iter().enumerate() {
            let s = &samples[*w.last().expect("windows are never empty")];
            let (dx, dq) = pose_errors(
                &s.label,
                [xv[j], xv[b + j], xv[2 * b + j]],
                [qv[j], qv[b + j], qv[2 * b + j], qv[3 * b + j]],
            );
            frames.push(FrameError {
                sequence_id: s.sequence_id.clone(),
                frame_index: s.frame_index,
                position_m: dx,
                orientation_deg: dq,
            });
        }
    }
    EvalReport::from_frames(frames)
}

/// Median position and orientation errors of `model` on `samples`.
pub fn evaluate(model: &Model, samples: &[Sample], preprocessing: Preprocessing) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let inputs = prepare_inputs(model, preprocessing, samples)?;
    evaluate_prepared(model, &inputs, samples, &eval_windows(model, samples)?)
}

/// [`evaluate`] on a manifest's frames. LSTM heads refuse unordered sources
/// unless `force_windows` is set.
pub fn evaluate_manifest(
    model: &Model,
    manifest: &DatasetManifest,
    base: &Path,
    preprocessing: Preprocessing,
    force_windows: bool,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Data("empty manifest".into()));
    }
    if model.config.head.kind == HeadKind::Lstm {
        manifest.windows(model.config.head.sequence_length, 1, force_windows)?;
    }
    evaluate(model, &load_manifest_samples(manifest, base)?, preprocessing)
}

/// Files one run writes under `<output root>/<name>/`.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    /// The echoed config, loadable as a config file.
    pub config: PathBuf,
    /// Per-step CSV: `step,epoch,loss,s_x,s_q,grad_norm`.
    pub log: PathBuf,
    pub curves_csv: PathBuf,
    pub curves_svg: PathBuf,
    /// Per-frame errors of both splits.
    pub frames: PathBuf,
    pub report: PathBuf,
    pub row: PathBuf,
    pub checkpoint: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            config: dir.join("config.txt"),
            log: dir.join("log.csv"),
            curves_csv: dir.join("curves.csv"),
            curves_svg: dir.join("curves.svg"),
            frames: dir.join("frames.csv"),
            report: dir.join("report.txt"),
            row: dir.join("row.md"),
            checkpoint: dir.join("model.ckpt"),
        }
    }
}

pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub model: Model,
    pub train: EvalReport,
    /// Carries the learning curve.
    pub test: EvalReport,
    /// Training steps taken.
    pub steps: u64,
    pub artifacts: Option<Artifacts>,
}

/// Loads the configured dataset and runs the experiment. With `out` set,
/// artifacts go to `out/<name>/`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let data = load_dataset(&config.dataset)?;
    run_with_data(config, &data, out)
}

/// One training epoch's inputs, windows and window labels.
struct EpochData {
    inputs: Vec<Tensor>,
    windows: Vec<Vec<usize>>,
    targets: Vec<Pose>,
}

/// Trains and evaluates `config` on already loaded data.
///
/// The untrained model is scored first (epoch 0), then after every
/// `eval_every` epochs and after the last one. With augmentation, the FC
/// head trains on [`augment_epoch`] output; the LSTM head trains on every
/// original window plus one copy of it with all frames rolled by a single
/// angle. Any failure returns early; rows already in the step log stay on
/// disk.
pub fn run_with_data(config: &ExperimentConfig, data: &LoadedData, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let head = &config.model.head;
    if head.kind == HeadKind::Lstm && !data.source_format().has_temporal_order() && !config.force_windows {
        return Err(Error::Config(format!(
            "{} frames carry no precise temporal order; set force_windows = true to train an LSTM head on them",
            data.source_format().name()
        )));
    }
    let echo = config.to_pairs();
    let artifacts = match out {
        Some(root) => {
            let a = Artifacts::in_dir(&root.join(&config.name));
            fs::create_dir_all(&a.dir)?;
            fs::write(&a.config, keyvalue::format_key_values(&echo))?;
            Some(a)
        }
        None => None,
    };
    let mut log = artifacts.as_ref().map(|a| StepLog::create(&a.log, &echo)).transpose()?;

    let mut model = Model::new(config.model.clone(), config.seed)?;
    if config.loss == LossKind::Adaptive {
        config.loss_init.attach(&mut model.params)?;
    }
    let mut optimizer = AdamState::new(config.optimizer, model.params.tensors());

    let train_inputs = prepare_inputs(&model, config.preprocessing, &data.train)?;
    let test_inputs = prepare_inputs(&model, config.preprocessing, &data.test)?;
    let train_eval = eval_windows(&model, &data.train)?;
    let test_eval = eval_windows(&model, &data.test)?;
    let base_windows: Vec<Vec<usize>> = match head.kind {
        HeadKind::Fc => (0..data.train.len()).map(|i| vec![i]).collect(),
        HeadKind::Lstm => sequence_windows(&data.train, head.sequence_length, config.window_stride)?
            .into_iter()
            .map(|w| w.indices)
            .collect(),
    };
    if base_windows.is_empty() {
        return Err(Error::Data(format!(
            "no training window of length {} fits the training sequences",
            head.sequence_length
        )));
    }
    let static_inputs = !config.augment && config.preprocessing != Preprocessing::RandomCrop;
    let shuffle_seed = mix_seed(config.seed ^ 0x5348_5546_464c_4531);
    let augment_seed = mix_seed(config.seed ^ 0x4155_474d_454e_5431);
    let crop_seed = mix_seed(config.seed ^ 0x4352_4f50_5345_4544);

    let score = |model: &Model| -> Result<(EvalReport, EvalReport)> {
        Ok((
            evaluate_prepared(model, &train_inputs, &data.train, &train_eval)?,
            evaluate_prepared(model, &test_inputs, &data.test, &test_eval)?,
        ))
    };
    let (mut train_report, mut test_report) = score(&model)?;
    let point = |epoch, mean_loss, tr: &EvalReport, te: &EvalReport| CurvePoint {
        epoch,
        mean_loss,
        train_position_m: tr.median_position_m,
        train_orientation_deg: tr.median_orientation_deg,
        test_position_m: te.median_position_m,
        test_orientation_deg: te.median_orientation_deg,
    };
    let mut curve = vec![point(0, None, &train_report, &test_report)];

    let mut step = 0u64;
    for epoch in 1..=config.epochs {
        let e = epoch as u64;
        let owned = if static_inputs {
            None
        } else {
            Some(epoch_data(config, &model, data, &base_windows, augment_seed, crop_seed, e)?)
        };
        let (inputs, windows, targets): (&[Tensor], Vec<Vec<usize>>, Vec<Pose>) = match &owned {
            Some(d) => (&d.inputs, d.windows.clone(), d.targets.clone()),
            None => (
                &train_inputs,
                base_windows.clone(),
                base_windows.iter().map(|w| data.train[*w.last().unwrap()].label).collect(),
            ),
        };
        let refs: Vec<&Tensor> = inputs.iter().collect();
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sample_seed(shuffle_seed, e, 0)));
        let mut losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let w: Vec<Vec<usize>> = batch.iter().map(|&k| windows[k].clone()).collect();
            let t: Vec<Pose> = batch.iter().map(|&k| targets[k]).collect();
            let m = training_step(&mut model, &refs, &w, &t, config.loss, &mut optimizer)?;
            step += 1;
            if let Some(log) = log.as_mut() {
                log.append(step, e, &m)?;
            }
            losses.push(m.loss);
        }
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            (train_report, test_report) = score(&model)?;
            curve.push(point(epoch, mean(&losses), &train_report, &test_report));
        }
    }
    test_report.curve = curve;

    if let Some(a) = &artifacts {
        write_artifacts(a, config, &echo, &model, &train_report, &test_report)?;
    }
    Ok(RunOutcome {
        config: config.clone(),
        model,
        train: train_report,
        test: test_report,
        steps: step,
        artifacts,
    })
}

fn epoch_data(
    config: &ExperimentConfig,
    model: &Model,
    data: &LoadedData,
    base_windows: &[Vec<usize>],
    augment_seed: u64,
    crop_seed: u64,
    epoch: u64,
) -> Result<EpochData> {
    let prep = |s: &Sample, i: usize| network_input(model, config.preprocessing, &s.image, sample_seed(crop_seed, epoch, i as u64));
    match config.model.head.kind {
        HeadKind::Fc => {
            let samples = if config.augment {
                augment_epoch(&data.train, config.augment_range, augment_seed, epoch)?
            } else {
                data.train.clone()
            };
            Ok(EpochData {
                inputs: samples.iter().enumerate().map(|(i, s)| prep(s, i)).collect::<Result<_>>()?,
                windows: (0..samples.len()).map(|i| vec![i]).collect(),
                targets: samples.iter().map(|s| s.label).collect(),
            })
        }
        HeadKind::Lstm => {
            let mut inputs: Vec<Tensor> = data.train.iter().enumerate().map(|(i, s)| prep(s, i)).collect::<Result<_>>()?;
            let mut windows = base_windows.to_vec();
            let mut targets: Vec<Pose> = base_windows.iter().map(|w| data.train[*w.last().unwrap()].label).collect();
            if config.augment {
                for (k, w) in base_windows.iter().enumerate() {
                    let theta = draw_theta(config.augment_range, augment_seed, epoch, k as u64);
                    let mut rolled = Vec::with_capacity(w.len());
                    let mut label = None;
                    for &i in w {
                        let s = augment_sample(&data.train[i], theta)?;
                        rolled.push(inputs.len());
                        inputs.push(prep(&s, inputs.len())?);
                        label = Some(s.label);
                    }
                    windows.push(rolled);
                    targets.push(label.expect("windows are never empty"));
                }
            }
            Ok(EpochData { inputs, windows, targets })
        }
    }
}

fn echo_block(echo: &Pairs) -> String {
    keyvalue::echo_lines(echo, "#")
}

pub(crate) const FRAMES_HEADER: &str = "split,sequence_id,frame_index,position_error_m,orientation_error_deg";
pub(crate) const CURVES_HEADER: &str =
    "epoch,mean_loss,train_position_m,train_orientation_deg,test_position_m,test_orientation_deg";

fn write_artifacts(
    a: &Artifacts,
    config: &ExperimentConfig,
    echo: &Pairs,
    model: &Model,
    train: &EvalReport,
    test: &EvalReport,
) -> Result<()> {
    let mut frames = echo_block(echo);
    frames.push_str(FRAMES_HEADER);
    frames.push('\n');
    for (split, r) in [("train", train), ("test", test)] {
        for f in &r.frames {
            writeln!(
                frames,
                "{split},{},{},{},{}",
                f.sequence_id, f.frame_index, f.position_m, f.orientation_deg
            )
            .expect("write to string");
        }
    }
    fs::write(&a.frames, frames)?;

    let mut curves = echo_block(echo);
    curves.push_str(CURVES_HEADER);
    curves.push('\n');
    for p in &test.curve {
        writeln!(
            curves,
            "{},{},{},{},{},{}",
            p.epoch,
            p.mean_loss.map(|l| l.to_string()).unwrap_or_default(),
            p.train_position_m,
            p.train_orientation_deg,
            p.test_position_m,
            p.test_orientation_deg
        )
        .expect("write to string");
    }
    fs::write(&a.curves_csv, curves)?;
    fs::write(&a.curves_svg, curves_svg(&test.curve, echo))?;

    let mut report = echo_block(echo);
    for (k, v) in [
        ("train.median_position_m", train.median_position_m),
        ("train.median_orientation_deg", train.median_orientation_deg),
        ("test.median_position_m", test.median_position_m),
        ("test.median_orientation_deg", test.median_orientation_deg),
    ] {
        writeln!(report, "{k} = {v}").expect("write to string");
    }
    writeln!(report, "train.frames = {}", train.frames.len()).expect("write to string");
    writeln!(report, "test.frames = {}", test.frames.len()).expect("write to string");
    fs::write(&a.report, report)?;

    let fmt = TableFormat::default();
    let mut row = keyvalue::echo_lines(echo, "<!--").replace('\n', " -->\n");
    row.push_str("| Run | Dataset | Preprocessing | Augment | Head | Loss | Train | Test |\n");
    row.push_str("|---|---|---|---|---|---|---|---|\n");
    writeln!(
        row,
        "| {} | {} | {} | {} | {} | {} | {} | {} |",
        config.name,
        config.dataset_label,
        config.preprocessing.name(),
        config.augment,
        config.head_label(),
        config.loss.name(),
        fmt.cell(train.median_position_m, train.median_orientation_deg),
        fmt.cell(test.median_position_m, test.median_orientation_deg),
    )
    .expect("write to string");
    fs::write(&a.row, row)?;

    save_checkpoint(&a.checkpoint, model, echo)
}

/// Two-panel SVG of the learning curves: position left, orientation right,
/// training blue, test red.
pub fn curves_svg(curve: &[CurvePoint], echo: &Pairs) -> String {
    const W: f64 = 320.0;
    const H: f64 = 240.0;
    const PAD: f64 = 36.0;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{H}">"#, 2.0 * W).unwrap();
    for (k, v) in echo {
        writeln!(s, "<!-- {k} = {} -->", v.replace("--", "- -")).unwrap();
    }
    let max_epoch = curve.iter().map(|p| p.epoch).max().unwrap_or(0).max(1) as f64;
    type Series = fn(&CurvePoint) -> (f64, f64);
    let panels: [(&str, Series); 2] = [
        ("median position error (m)", |p| (p.train_position_m, p.test_position_m)),
        ("median orientation error (deg)", |p| (p.train_orientation_deg, p.test_orientation_deg)),
    ];
    for (n, (title, get)) in panels.iter().enumerate() {
        let x0 = n as f64 * W;
        let top = curve
            .iter()
            .map(|p| {
                let (a, b) = get(p);
                a.max(b)
            })
            .fold(0.0, f64::max)
            .max(1e-12);
        writeln!(
            s,
            r#"<rect x="{}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x0 + PAD,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="20" font-size="12">{title}, max {top:.3}</text>"#, x0 + PAD).unwrap();
        for (series, colour) in [(0, "blue"), (1, "red")] {
            let pts: Vec<String> = curve
                .iter()
                .map(|p| {
                    let (a, b) = get(p);
                    let v = if series == 0 { a } else { b };
                    let x = x0 + PAD + (W - 2.0 * PAD) * p.epoch as f64 / max_epoch;
                    let y = H - PAD - (H - 2.0 * PAD) * v / top;
                    format!("{x:.1},{y:.1}")
                })
                .collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" points="{}"/>"#,
                pts.join(" ")
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// A finished run read back from its directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub train: EvalReport,
    pub test: EvalReport,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Reads `config.txt`, `frames.csv` and `curves.csv` of a run directory.
/// Medians are recomputed from the per-frame errors.
pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let a = Artifacts::in_dir(dir);
    let config = ExperimentConfig::load(&a.config)?;
    let text = fs::read_to_string(&a.frames)?;
    let bad = |line: usize, reason: String| Error::Parse {
        path: a.frames.clone(),
        line: line + 1,
        reason,
    };
    let mut lines = data_lines(&text);
    match lines.next() {
        Some((_, h)) if h == FRAMES_HEADER => {}
        other => return Err(bad(other.map_or(0, |o| o.0), "missing frames header".into())),
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(n, format!("expected 5 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n, format!("'{s}': {e}")));
        let frame = FrameError {
            sequence_id: f[1].to_string(),
            frame_index: f[2].parse().map_err(|e| bad(n, format!("'{}': {e}", f[2])))?,
            position_m: num(f[3])?,
            orientation_deg: num(f[4])?,
        };
        match f[0] {
            "train" => train.push(frame),
            "test" => test.push(frame),
            other => return Err(bad(n, format!("unknown split '{other}'"))),
        }
    }
    let train = EvalReport::from_frames(train)?;
    let mut test = EvalReport::from_frames(test)?;
    if a.curves_csv.is_file() {
        test.curve = read_curves(&a.curves_csv)?;
    }
    Ok(RunRecord { config, train, test })
}

fn read_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        reason,
    };
    let mut out = Vec::new();
    for (n, line) in data_lines(&text).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n, format!("'{s}': {e}")));
        out.push(CurvePoint {
            epoch: f[0].parse().map_err(|e| bad(n, format!("'{}': {e}", f[0])))?,
            mean_loss: if f[1].is_empty() { None } else { Some(num(f[1])?) },
            train_position_m: num(f[2])?,
            train_orientation_deg: num(f[3])?,
            test_position_m: num(f[4])?,
            test_orientation_deg: num(f[5])?,
        });
    }
    Ok(out)
}

/// Every run directory (one holding `config.txt`) directly under `root`,
/// in name order.
pub fn load_runs(root: &Path) -> Result<Vec<RunRecord>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("config.txt").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| load_run(d)).collect()
}
