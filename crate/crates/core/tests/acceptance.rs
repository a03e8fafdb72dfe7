//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the verdicts print even when everything passes.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poselab::augmentation::{augment_epoch, Sample, DEFAULT_RANGE};
use poselab::autodiff::{grad_check, Tape, Tensor, Var};
use poselab::geometry::{angular_distance_deg, apply_roll_augmentation, Pose, UnitQuaternion};
use poselab::harness::{cell_improvement, run_experiment, ExperimentConfig, RunOutcome, Table, TableFormat, TableRow};
use poselab::imaging::{
    centered_crop_pipeline, interior_mean_abs_diff, random_crop_pipeline, rotate_image, whole_fov_resize, CropPlan,
    Image,
};
use poselab::loss_optim::{adaptive_loss, fixed_beta_loss, pose_loss, target_tensors, AdaptiveLossState, LossKind};
use poselab::model::{
    inception_block_forward, lstm_cell_step, BackboneConfig, ConvStage, HeadConfig, InceptionConfig, Model, ModelConfig,
};
use poselab::synthetic::{generate_dataset, render, render_samples, trajectory_extent, SceneConfig, TrajectoryConfig};

type Verdict = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        if raw.iter().map(|v| v * v).sum::<f64>() > 1e-6 {
            return UnitQuaternion::normalize(raw).unwrap();
        }
    }
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new("acceptance.conf")).unwrap()
}

fn run(text: &str) -> RunOutcome {
    run_experiment(&config(text), None).unwrap()
}

// ---------------------------------------------------------------- 1

type Graph = Box<dyn Fn(&mut Tape, &[Var]) -> poselab::Result<Var>>;

fn op_graphs() -> Vec<(&'static str, Vec<Vec<usize>>, Graph)> {
    vec![
        ("add", vec![vec![5], vec![5]], Box::new(|t, v| { let y = t.add(v[0], v[1])?; let y = t.mul(y, y)?; t.sum(y) })),
        ("sub", vec![vec![5], vec![5]], Box::new(|t, v| { let y = t.sub(v[0], v[1])?; let y = t.mul(y, y)?; t.sum(y) })),
        ("mul", vec![vec![2, 3], vec![2, 3]], Box::new(|t, v| { let y = t.mul(v[0], v[1])?; t.sum(y) })),
        ("relu", vec![vec![7]], Box::new(|t, v| { let y = t.relu(v[0])?; let y = t.mul(y, y)?; t.sum(y) })),
        ("sigmoid", vec![vec![7]], Box::new(|t, v| { let y = t.sigmoid(v[0])?; t.sum(y) })),
        ("tanh", vec![vec![7]], Box::new(|t, v| { let y = t.tanh(v[0])?; t.sum(y) })),
        ("exp", vec![vec![7]], Box::new(|t, v| { let y = t.exp(v[0])?; t.sum(y) })),
        ("scale", vec![vec![7]], Box::new(|t, v| { let y = t.scale(v[0], -2.5)?; let y = t.mul(y, v[0])?; t.sum(y) })),
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|t, v| { let y = t.matmul(v[0], v[1])?; let y = t.tanh(y)?; t.sum(y) })),
        ("linear", vec![vec![4, 3], vec![5, 4], vec![5]], Box::new(|t, v| { let y = t.linear(v[0], v[1], v[2])?; let y = t.tanh(y)?; t.sum(y) })),
        ("conv2d", vec![vec![2, 6, 6], vec![3, 2, 3, 3], vec![3]], Box::new(|t, v| { let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?; let y = t.tanh(y)?; t.sum(y) })),
        ("conv2d strided", vec![vec![2, 7, 7], vec![2, 2, 3, 3]], Box::new(|t, v| { let y = t.conv2d(v[0], v[1], None, 2, 0)?; let y = t.tanh(y)?; t.sum(y) })),
        ("sum", vec![vec![2, 3]], Box::new(|t, v| { let y = t.mul(v[0], v[0])?; t.sum(y) })),
        ("mean", vec![vec![2, 3]], Box::new(|t, v| { let y = t.exp(v[0])?; t.mean(y) })),
        ("l2norm", vec![vec![4]], Box::new(|t, v| t.l2norm(v[0]))),
        ("concat", vec![vec![2, 2], vec![2, 3]], Box::new(|t, v| { let y = t.concat(&[v[0], v[1]], 1)?; let y = t.tanh(y)?; let w = t.scale(y, 0.5)?; let y = t.mul(y, w)?; t.sum(y) })),
        ("slice", vec![vec![3, 4]], Box::new(|t, v| { let y = t.slice(v[0], 1, 1, 2)?; let y = t.exp(y)?; t.sum(y) })),
        ("reshape", vec![vec![2, 6]], Box::new(|t, v| { let y = t.reshape(v[0], &[3, 4])?; let y = t.slice(y, 0, 1, 1)?; let y = t.exp(y)?; t.sum(y) })),
        ("max_pool2d", vec![vec![2, 6, 6]], Box::new(|t, v| { let y = t.max_pool2d(v[0], 3, 2, 1)?; let y = t.mul(y, y)?; t.sum(y) })),
        ("avg_pool2d", vec![vec![2, 6, 6]], Box::new(|t, v| { let y = t.avg_pool2d(v[0], 2, 2)?; let y = t.mul(y, y)?; t.sum(y) })),
    ]
}

fn small_model(head: HeadConfig, inception: bool) -> ModelConfig {
    ModelConfig {
        backbone: BackboneConfig {
            input_channels: 3,
            input_size: 12,
            input_pool: 1,
            stages: vec![ConvStage::new(3, 3, 1, 2)],
            inception: inception.then(|| InceptionConfig::uniform(2)),
        },
        head: HeadConfig {
            fc_hidden: 5,
            lstm_units: 3,
            ..head
        },
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = (0.0f64, String::new());
    let mut note = |name: &str, err: f64| {
        if err > worst.0 || err.is_nan() {
            worst = (err, name.to_string());
        }
    };
    for (name, shapes, f) in op_graphs() {
        let params: Vec<Tensor> = shapes.iter().map(|s| tensor(s, &mut rng)).collect();
        note(name, grad_check(f, &params, 1e-6).map_err(|e| format!("{name}: {e}"))?);
    }

    // LSTM cell over a batch of 2: weights [4H × (I+H)], bias [4H]
    let (i, h) = (3, 2);
    let params = vec![tensor(&[4 * h, i + h], &mut rng), tensor(&[4 * h], &mut rng), tensor(&[i, 2], &mut rng), tensor(&[h, 2], &mut rng), tensor(&[h, 2], &mut rng)];
    let err = grad_check(
        |t, v| {
            let (h1, c1) = lstm_cell_step(t, v[0], v[1], v[2], v[3], v[4])?;
            let (h2, _) = lstm_cell_step(t, v[0], v[1], v[2], h1, c1)?;
            t.sum(h2)
        },
        &params,
        1e-6,
    )
    .map_err(|e| format!("lstm cell: {e}"))?;
    note("lstm cell", err);

    let inc = Model::new(small_model(HeadConfig::fc(), true), 2).unwrap();
    let x = tensor(&[3, 6, 6], &mut rng);
    let params = inc.params.tensors().to_vec();
    let err = grad_check(
        |t, v| {
            let bound = inc.params.bind_vars(v.to_vec())?;
            let input = t.constant(x.clone());
            let y = inception_block_forward(t, &bound, input)?;
            let y = t.tanh(y)?;
            t.sum(y)
        },
        &params,
        1e-6,
    )
    .map_err(|e| format!("inception: {e}"))?;
    note("inception", err);

    // whole graph: backbone (with inception) + each head + each loss
    let frames: Vec<Tensor> = (0..3).map(|_| tensor(&[3, 12, 12], &mut rng)).collect();
    for (hname, head) in [("fc", HeadConfig::fc()), ("lstm", HeadConfig::lstm(2))] {
        for (lname, loss) in [("fixed", LossKind::FixedBeta(5.0)), ("adaptive", LossKind::Adaptive)] {
            let mut model = Model::new(small_model(head.clone(), true), 4).unwrap();
            if loss == LossKind::Adaptive {
                AdaptiveLossState { s_x: 0.2, s_q: -0.5 }.attach(&mut model.params).unwrap();
            }
            let len = model.config.head.sequence_length;
            let windows: Vec<Vec<usize>> = (0..=3 - len).map(|s| (s..s + len).collect()).collect();
            let targets: Vec<Pose> = (0..windows.len())
                .map(|k| Pose::new([k as f64, 0.5, -1.0], quat(&mut rng)).unwrap())
                .collect();
            let (tx, tq) = target_tensors(&targets).unwrap();
            let params = model.params.tensors().to_vec();
            let refs: Vec<&Tensor> = frames.iter().collect();
            let err = grad_check(
                |t, v| {
                    let bound = model.params.bind_vars(v.to_vec())?;
                    let preds = model.forward_windows(t, &bound, &refs, &windows)?;
                    let targets = (t.constant(tx.clone()), t.constant(tq.clone()));
                    pose_loss(t, &model, loss, v, targets, preds)
                },
                &params,
                1e-6,
            )
            .map_err(|e| format!("{hname}+{lname}: {e}"))?;
            note(&format!("{hname}+{lname}"), err);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(120),
        format!("max relative error {:.1e} ({}), {:.1}s", worst.0, worst.1, elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut reduction, mut slope) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..14).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s_x0: f64 = rng.gen_range(-4.0..4.0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(v[0..3].to_vec()));
        let xp = tape.constant(Tensor::vector(v[3..6].to_vec()));
        let q = tape.constant(Tensor::vector(v[6..10].to_vec()));
        let qp = tape.constant(Tensor::vector(v[10..14].to_vec()));
        let fixed = fixed_beta_loss(&mut tape, x, xp, q, qp, 1.0).unwrap();
        let zero = tape.param(Tensor::scalar(0.0));
        let zero_q = tape.param(Tensor::scalar(0.0));
        let adaptive = adaptive_loss(&mut tape, x, xp, q, qp, zero, zero_q).unwrap();
        reduction = reduction.max((tape.value(fixed).data()[0] - tape.value(adaptive).data()[0]).abs());

        let s_x = tape.param(Tensor::scalar(s_x0));
        let s_q = tape.param(Tensor::scalar(rng.gen_range(-4.0..4.0)));
        let l = adaptive_loss(&mut tape, x, xp, q, qp, s_x, s_q).unwrap();
        tape.backward(l).unwrap();
        let dist = (0..3).map(|k| (v[k] - v[k + 3]).powi(2)).sum::<f64>().sqrt();
        let want = -dist * (-s_x0).exp() + 1.0;
        slope = slope.max((tape.grad(s_x).unwrap()[0] - want).abs());
    }
    check(
        reduction < 1e-12 && slope < 1e-9,
        format!("|adaptive(0,0) − fixed(1)| ≤ {reduction:.1e}, |∂L/∂s_x − formula| ≤ {slope:.1e} over 1000 inputs"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut norm, mut cover, mut roll, mut matrix) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let a = quat(&mut rng);
        let b = quat(&mut rng);
        for q in [a, a.mul(&b), a.conjugate(), poselab::geometry::hamilton_product(&a, &b)] {
            norm = norm.max((q.norm() - 1.0).abs());
        }
        cover = cover.max(angular_distance_deg(&a, &a.negated()));
        let theta = rng.gen_range(-180.0..180.0);
        let pose = Pose::new([1.0, -2.0, 0.5], a).unwrap();
        let back = apply_roll_augmentation(&apply_roll_augmentation(&pose, theta), -theta);
        let d = back.orientation.to_array().iter().zip(a.to_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        roll = roll.max(d);
        let r = UnitQuaternion::from_matrix(&a.to_matrix()).unwrap();
        matrix = matrix.max(angular_distance_deg(&r, &a));
    }
    let elapsed = start.elapsed();
    check(
        norm < 1e-9 && cover < 1e-9 && roll < 1e-9 && matrix < 1e-7 && elapsed < Duration::from_secs(30),
        format!(
            "norm drift {norm:.1e}, q vs −q {cover:.1e}°, roll round trip {roll:.1e}, matrix round trip {matrix:.1e}°, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let scene = SceneConfig::default();
    let traj = TrajectoryConfig {
        length: 12,
        test_length: 2,
        ..TrajectoryConfig::default()
    };
    let (train, _) = generate_dataset(&scene, &traj, 4).unwrap();
    let mut worst = 0.0f64;
    for entry in train.entries.iter().step_by(4) {
        let base = render(&entry.pose, &scene).unwrap();
        for theta in [-20.0, -10.0, 5.0, 10.0, 20.0] {
            let rolled = render(&apply_roll_augmentation(&entry.pose, theta), &scene).unwrap();
            let rotated = rotate_image(&base, theta).unwrap();
            worst = worst.max(interior_mean_abs_diff(&rolled, &rotated, 0.9).unwrap());
        }
    }
    let samples = render_samples(&train, &scene, 4).unwrap();
    let epoch = augment_epoch(&samples, DEFAULT_RANGE, 9, 0).unwrap();
    let doubled = epoch.len() == 2 * samples.len();
    let originals: Vec<&Sample> = epoch.iter().filter(|s| !s.synthetic).collect();
    let copies: Vec<&Sample> = epoch.iter().filter(|s| s.synthetic).collect();
    let positions = copies.len() == samples.len()
        && originals.len() == samples.len()
        && samples.iter().zip(&copies).all(|(s, c)| {
            s.label.position.iter().zip(c.label.position).all(|(a, b)| a.to_bits() == b.to_bits())
        });
    check(
        worst < 0.02 && doubled && positions,
        format!(
            "render/rotate interior difference ≤ {worst:.4}; {} → {} samples; positions bit-identical: {positions}",
            samples.len(),
            epoch.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Verdict {
    let plan = CropPlan::centered(1080, 1920);
    let plan_ok = (plan.resized_h, plan.resized_w, plan.left, plan.top) == (256, 455, 115, 16);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let square = Image::from_fn(224, 224, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
    let identity = whole_fov_resize(&square).unwrap() == square;

    let wide = Image::from_fn(1080, 1920, |r, c| [r as f64 / 1079.0, c as f64 / 1919.0, ((r + c) % 7) as f64 / 6.0]);
    let outputs = [
        centered_crop_pipeline(&wide).unwrap(),
        whole_fov_resize(&wide).unwrap(),
        random_crop_pipeline(&wide, 11).unwrap(),
        centered_crop_pipeline(&square).unwrap(),
    ];
    let shapes = outputs.iter().all(|o| {
        o.height() == 224 && o.width() == 224 && o.data().len() == 224 * 224 * 3 && o.data().iter().all(|v| (0.0..=1.0).contains(v))
    });
    check(
        plan_ok && identity && shapes,
        format!(
            "1920×1080 → {}×{} at ({}, {}); whole_fov identity on 224×224: {identity}; outputs 224×224×3 in [0,1]: {shapes}",
            plan.resized_w, plan.resized_h, plan.left, plan.top
        ),
    )
}

// ---------------------------------------------------------------- 6

/// `(dataset, [crop m, crop °, whole m, whole °], [impr m, impr °])` as
/// printed, split at the Average rows.
type PrintedRow = (String, [String; 4], [String; 2]);

fn printed_table1() -> Vec<Vec<PrintedRow>> {
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../paper.md")).expect("table source");
    let start = source.find("Dataset & Centered Crop & Whole Field of View").expect("table header");
    let body = &source[start..start + source[start..].find("\\end{tabular}").unwrap()];
    let mut groups = vec![Vec::new()];
    for line in body.lines().skip(1) {
        let clean = line
            .replace("{\\bf", "")
            .replace("$^{\\circ}$", "")
            .replace("\\%", "")
            .replace("\\\\", "")
            .replace(['{', '}'], "");
        let fields: Vec<String> = clean
            .split(['&', ','])
            .map(|f| f.trim().trim_end_matches('m').trim().to_string())
            .collect();
        if fields.len() != 7 {
            continue;
        }
        let row = (
            fields[0].clone(),
            [fields[1].clone(), fields[2].clone(), fields[3].clone(), fields[4].clone()],
            [fields[5].clone(), fields[6].clone()],
        );
        groups.last_mut().unwrap().push(row);
        if fields[0] == "Average" {
            groups.push(Vec::new());
        }
    }
    groups.retain(|g| !g.is_empty());
    groups
}

fn criterion_6() -> Verdict {
    let groups = printed_table1();
    if groups.len() != 2 || groups.iter().map(Vec::len).sum::<usize>() != 14 {
        return Err(format!("could not read Table 1 ({} groups)", groups.len()));
    }
    let fmt = TableFormat::two_decimals();
    let mut table = Table {
        title: "Table 1".into(),
        columns: vec!["Centered Crop".into(), "Whole Field of View".into()],
        improvement: Some((0, 1)),
        rows: Vec::new(),
    };
    let num = |s: &str| s.parse::<f64>().unwrap();
    let mut mismatches = Vec::new();
    let mut named = Vec::new();
    for (g, rows) in groups.iter().enumerate() {
        for (name, v, imp) in rows.iter().filter(|r| r.0 != "Average") {
            let row = TableRow {
                group: format!("group{g}"),
                dataset: name.clone(),
                cells: vec![Some((num(&v[0]), num(&v[1]))), Some((num(&v[2]), num(&v[3])))],
            };
            let (pm, pd) = cell_improvement(row.cells[0], row.cells[1]).unwrap();
            let ours = [fmt.percent(pm), fmt.percent(pd)];
            for (o, p) in ours.iter().zip(imp) {
                if *o != format!("{p}%") {
                    mismatches.push(format!("{name}: {o} vs {p}%"));
                }
            }
            if name == "King's College" || name == "Stairs" {
                named.push(format!("{name} {}", ours[0]));
            }
            table.rows.push(row);
        }
        let printed = &rows.last().unwrap().1;
        let avg = table.average(&format!("group{g}"));
        for (k, cell) in avg.iter().enumerate() {
            let (m, d) = cell.unwrap();
            let want = format!("{}m, {}°", printed[2 * k], printed[2 * k + 1]);
            if fmt.cell(m, d) != want {
                mismatches.push(format!("average {g}: {} vs {want}", fmt.cell(m, d)));
            }
        }
    }
    let md = table.render(&fmt).map_err(|e| e.to_string())?.markdown;
    let spec_cells = md.contains("| **Average** | 5.88m, 10.28° |")
        && md.contains("| King's College | 1.24m, 1.84° | 0.97m, 1.27° | 21.7%, 30.9% |")
        && md.contains("| Stairs | 0.35m, 13.11° | 0.43m, 12.86° | -22.8%, 1.9% |");
    check(
        mismatches.is_empty() && spec_cells,
        if mismatches.is_empty() {
            format!("24 improvement cells and both average rows match the printed table; {}", named.join(", "))
        } else {
            format!("mismatches: {}", mismatches.join("; "))
        },
    )
}

// ---------------------------------------------------------------- 7

const END_TO_END: &str = "
name = end-to-end
epochs = 100
eval_every = 10
seed = 7
dataset.seed = 1
trajectory.length = 200
trajectory.test_length = 100
trajectory.overlap = 0.5
";

fn criterion_7() -> Verdict {
    let c = config(END_TO_END);
    let poselab::harness::DatasetRef::Synthetic { scene, trajectory, seed } = &c.dataset else {
        unreachable!()
    };
    let (train, _) = generate_dataset(scene, trajectory, *seed).unwrap();
    let extent = trajectory_extent(&train);
    let start = Instant::now();
    let out = run_experiment(&c, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let untrained = out.test.curve[0].test_position_m;
    let (train_m, test_m) = (out.train.median_position_m, out.test.median_position_m);
    let (train_deg, test_deg) = (out.train.median_orientation_deg, out.test.median_orientation_deg);
    check(
        elapsed < Duration::from_secs(600)
            && test_m < 0.25 * extent
            && test_m < 0.2 * untrained
            && train_m < 0.5 * test_m
            && train_deg < 0.5 * test_deg,
        format!(
            "{:.0}s; test {test_m:.3} m vs extent {extent:.2} m and untrained {untrained:.2} m; train {train_m:.3} m / {train_deg:.2}° vs test {test_m:.3} m / {test_deg:.2}°",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 8, 9, 10

const SMALL: &str = "
epochs = 40
eval_every = 40
optimizer.lr = 0.001
head.fc_hidden = 256
scene.sensor_noise = 0.02
trajectory.length = 100
trajectory.test_length = 50
trajectory.step = 0.04
trajectory.drift_deg = 0.4
";

/// The small base config with `extra` lines replacing or adding keys.
fn seeded(name: &str, seed: u64, extra: &str) -> String {
    let key = |l: &str| l.split('=').next().unwrap_or("").trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let base: String = SMALL
        .lines()
        .filter(|l| !overridden.contains(&key(l)))
        .map(|l| format!("{l}\n"))
        .collect();
    format!("name = {name}-{seed}\nseed = {seed}\ndataset.seed = {seed}\n{base}{extra}")
}

fn criterion_8() -> Verdict {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=5 {
        let knob = "scene.border_knob = 0.8\n";
        let crop = run(&seeded("fov-crop", seed, &format!("{knob}preprocessing = centered_crop\n")));
        let whole = run(&seeded("fov-whole", seed, &format!("{knob}preprocessing = whole_fov\n")));
        let (c, w) = (crop.test.median_position_m, whole.test.median_position_m);
        wins += usize::from(w < c);
        pairs.push(format!("{w:.3}/{c:.3}"));
    }
    check(wins >= 4, format!("whole view beats crop in {wins}/5 seeds (test m, whole/crop: {})", pairs.join(" ")))
}

fn criterion_9() -> Verdict {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=5 {
        let overlap = "trajectory.overlap = 0.2\n";
        let plain = run(&seeded("aug-off", seed, overlap));
        let aug = run(&seeded("aug-on", seed, &format!("{overlap}augment = true\n")));
        let (p, a) = (plain.test.median_orientation_deg, aug.test.median_orientation_deg);
        wins += usize::from(a < p);
        pairs.push(format!("{a:.1}/{p:.1}"));
    }
    check(wins >= 4, format!("augmentation lowers test orientation error in {wins}/5 seeds (°, aug/plain: {})", pairs.join(" ")))
}

fn criterion_10() -> Verdict {
    let fc = run(&seeded("parity-fc", 1, ""));
    let l1 = run(&seeded("parity-lstm1", 1, "head.kind = lstm\nhead.sequence_length = 1\n"));
    let (fm, fd) = (fc.test.median_position_m, fc.test.median_orientation_deg);
    let (lm, ld) = (l1.test.median_position_m, l1.test.median_orientation_deg);
    let parity = lm <= 1.5 * fm && ld <= 1.5 * fd;
    let mut detail = vec![format!("L=1 {lm:.3} m / {ld:.2}° vs FC {fm:.3} m / {fd:.2}°")];
    let mut all_train = true;
    for len in [1, 5, 10, 20] {
        let out = run(&seeded(
            &format!("length-{len}"),
            1,
            &format!("head.kind = lstm\nhead.sequence_length = {len}\nepochs = 8\neval_every = 8\n"),
        ));
        let before = out.test.curve[0].test_position_m;
        let after = out.test.median_position_m;
        let trained = after.is_finite() && out.test.median_orientation_deg.is_finite() && after < 0.5 * before;
        all_train &= trained;
        detail.push(format!("L={len} {before:.2}→{after:.2} m"));
    }
    check(parity && all_train, detail.join("; "))
}

// ---------------------------------------------------------------- 11

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in std::fs::read_dir(a).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap();
        let (x, y) = (std::fs::read(&path).unwrap(), std::fs::read(b.join(name)).map_err(|e| e.to_string())?);
        if x != y {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
        n += 1;
    }
    Ok(n)
}

fn criterion_11() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let configs = [
        seeded("rerun-fc", 3, "epochs = 6\neval_every = 2\naugment = true\npreprocessing = random_crop\n"),
        seeded("rerun-lstm", 3, "epochs = 3\nhead.kind = lstm\nhead.sequence_length = 3\naugment = true\nloss = fixed_beta(500)\n"),
    ];
    let mut files = 0;
    for text in &configs {
        let c = config(text);
        let outs: Vec<RunOutcome> = dirs.iter().map(|d| run_experiment(&c, Some(d.path())).unwrap()).collect();
        if outs[0].model != outs[1].model {
            return Err(format!("{}: parameters differ", c.name));
        }
        files += same_files(&dirs[0].path().join(&c.name), &dirs[1].path().join(&c.name)).map_err(|e| format!("{}: {e}", c.name))?;
    }
    check(files >= 16, format!("{files} artifact files byte-identical across reruns of 2 configs"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", criterion_1),
        (2, "adaptive loss reduction", criterion_2),
        (3, "quaternion suite", criterion_3),
        (4, "augmentation oracle", criterion_4),
        (5, "pipeline arithmetic", criterion_5),
        (6, "table fixtures", criterion_6),
        (7, "end-to-end synthetic training", criterion_7),
        (8, "field of view effect", criterion_8),
        (9, "augmentation effect", criterion_9),
        (10, "lstm parity", criterion_10),
        (11, "determinism", criterion_11),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name} [{:.1}s]: {detail}", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
