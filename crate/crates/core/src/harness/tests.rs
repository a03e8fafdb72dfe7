use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset_io::SourceFormat;
use crate::imaging::Preprocessing;
use crate::keyvalue;
use crate::loss_optim::{AdamConfig, LossKind, LOG_HEADER};
use crate::model::{BackboneConfig, ConvStage, HeadConfig, HeadKind, ModelConfig};
use crate::synthetic::{SceneConfig, TrajectoryConfig};

#[test]
fn median_examples() {
    assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
    assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
    assert!(median(&[]).is_err());
    assert!(median(&[1.0, f64::NAN]).is_err());
}

#[test]
fn median_matches_sort_oracle_on_10001_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v: Vec<f64> = (0..10_001).map(|_| rng.gen_range(-1e3..1e3)).collect();
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(median(&v).unwrap(), sorted[5000]);
}

#[test]
fn improvement_examples() {
    let t = RoundingMode::Truncate;
    assert_eq!(improvement_percent(1.24, 0.97, t).unwrap(), 21.7);
    assert_eq!(improvement_percent(0.35, 0.43, t).unwrap(), -22.8);
    assert_eq!(improvement_percent(2.0, 2.0, t).unwrap(), 0.0);
    let n = RoundingMode::Nearest;
    assert_eq!(improvement_percent(1.24, 0.97, n).unwrap(), 21.8);
    assert_eq!(improvement_percent(0.35, 0.43, n).unwrap(), -22.9);
    assert!(improvement_percent(0.0, 1.0, t).is_err());
    assert!(improvement_percent(-1.0, 1.0, t).is_err());
}

#[test]
fn rounding_text() {
    let t = RoundingMode::Truncate;
    assert_eq!(t.format(5.884, 2), "5.88");
    assert_eq!(t.format(10.286, 2), "10.28");
    assert_eq!(t.format(0.27999999999999997, 2), "0.28");
    assert_eq!(t.format(-0.04, 1), "0.0");
    assert_eq!(RoundingMode::Nearest.format(10.286, 2), "10.29");
    let f = TableFormat::default();
    assert_eq!(f.metres(5.884), "5.8m");
    assert_eq!(f.metres(0.345), "0.34m");
    assert_eq!(TableFormat::two_decimals().metres(5.884), "5.88m");
}

/// Crop vs. whole-view medians of the Table 1 fixture: (dataset, crop m, crop °, whole m,
/// whole °, improvement m %, improvement ° %).
#[allow(clippy::type_complexity)]
const TABLE1: [(&str, &str, f64, f64, f64, f64, f64, f64); 12] = [
    ("outdoor", "King's College", 1.24, 1.84, 0.97, 1.27, 21.7, 30.9),
    ("outdoor", "Old Hospital", 3.07, 5.13, 3.10, 4.94, -0.9, 3.7),
    ("outdoor", "Shop Facade", 1.23, 5.74, 0.93, 4.25, 24.3, 25.9),
    ("outdoor", "St Mary's Church", 2.21, 5.92, 1.66, 4.24, 24.8, 28.3),
    ("outdoor", "Street", 21.67, 32.8, 14.88, 24.35, 31.3, 25.7),
    ("indoor", "Chess", 0.18, 5.92, 0.16, 4.84, 11.1, 18.2),
    ("indoor", "Fire", 0.40, 12.21, 0.35, 12.10, 12.5, 0.9),
    ("indoor", "Heads", 0.24, 14.20, 0.20, 13.17, 16.6, 7.2),
    ("indoor", "Office", 0.30, 7.59, 0.25, 6.39, 16.6, 15.8),
    ("indoor", "Pumpkin", 0.34, 6.04, 0.27, 5.53, 20.5, 8.4),
    ("indoor", "Red Kitchen", 0.36, 7.32, 0.30, 6.21, 16.6, 15.1),
    ("indoor", "Stairs", 0.35, 13.11, 0.43, 12.86, -22.8, 1.9),
];

fn table1() -> Table {
    Table {
        title: "t".into(),
        columns: vec!["Centered Crop".into(), "Whole Field of View".into()],
        improvement: Some((0, 1)),
        rows: TABLE1
            .iter()
            .map(|r| TableRow {
                group: r.0.into(),
                dataset: r.1.into(),
                cells: vec![Some((r.2, r.3)), Some((r.4, r.5))],
            })
            .collect(),
    }
}

#[test]
fn table1_arithmetic_reproduces() {
    let t = table1();
    let avg = t.average("outdoor");
    let fmt = TableFormat::two_decimals();
    assert_eq!(fmt.cell(avg[0].unwrap().0, avg[0].unwrap().1), "5.88m, 10.28°");
    assert_eq!(fmt.cell(avg[1].unwrap().0, avg[1].unwrap().1), "4.30m, 7.81°");
    let avg = t.average("indoor");
    assert_eq!(fmt.cell(avg[0].unwrap().0, avg[0].unwrap().1), "0.31m, 9.48°");
    assert_eq!(fmt.cell(avg[1].unwrap().0, avg[1].unwrap().1), "0.28m, 8.72°");
    for r in TABLE1 {
        let (p, o) = cell_improvement(Some((r.2, r.3)), Some((r.4, r.5))).unwrap();
        assert_eq!(RoundingMode::Truncate.apply(p, 1), r.6, "{}", r.1);
        assert_eq!(RoundingMode::Truncate.apply(o, 1), r.7, "{}", r.1);
    }
    let out = t.render(&fmt).unwrap();
    assert!(out.markdown.contains("| King's College | 1.24m, 1.84° | 0.97m, 1.27° | 21.7%, 30.9% |"));
    assert!(out.markdown.contains("| Stairs | 0.35m, 13.11° | 0.43m, 12.86° | -22.8%, 1.9% |"));
    assert!(out.markdown.contains("| **Average** | 5.88m, 10.28° | 4.30m, 7.81° |"));
    assert!(out.markdown.contains("truncated"));
}

#[test]
fn emitted_improvements_recompute_from_csv() {
    let out = table1().render(&TableFormat::default()).unwrap();
    let mut lines = out.csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "group,dataset,centered_crop_position_m,centered_crop_orientation_deg,whole_field_of_view_position_m,\
         whole_field_of_view_orientation_deg,improvement_position_pct,improvement_orientation_pct"
    );
    let mut n = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(improvement_raw(f[0], f[2]).unwrap(), f[4]);
        assert_eq!(improvement_raw(f[1], f[3]).unwrap(), f[5]);
        n += 1;
    }
    assert_eq!(n, 14);
}

#[test]
fn missing_cells_print_as_dashes() {
    let mut t = table1();
    t.rows[4].cells[0] = None;
    let out = t.render(&TableFormat::two_decimals()).unwrap();
    assert!(out.markdown.contains("| Street | -, - | 14.88m, 24.35° | -, - |"));
    assert!(out.markdown.contains("| **Average** | -, - | 4.30m, 7.81° | -, - |"));
    assert!(out.csv.contains("outdoor,Street,-,-,14.88,24.35,-,-"));
}

fn record(label: &str, pre: Preprocessing, augment: bool, head: HeadConfig, loss: LossKind, m: f64, d: f64) -> RunRecord {
    let frame = |v: f64, w: f64| FrameError {
        sequence_id: "s".into(),
        frame_index: 0,
        position_m: v,
        orientation_deg: w,
    };
    let config = ExperimentConfig {
        name: format!("{label}-{}-{augment}-{}", pre.name(), head.sequence_length),
        dataset_label: label.into(),
        preprocessing: pre,
        augment,
        model: ModelConfig {
            head,
            ..ExperimentConfig::default().model
        },
        loss,
        ..ExperimentConfig::default()
    };
    RunRecord {
        config,
        train: EvalReport::from_frames(vec![frame(m / 2.0, d / 2.0)]).unwrap(),
        test: EvalReport::from_frames(vec![frame(m, d)]).unwrap(),
    }
}

#[test]
fn single_run_gives_one_row() {
    let r = record("a", Preprocessing::CenteredCrop, false, HeadConfig::fc(), LossKind::Adaptive, 1.5, 3.0);
    let out = emit_table(&[r], Layout::Table1, &TableFormat::default()).unwrap();
    let rows: Vec<&str> = out.markdown.lines().filter(|l| l.starts_with("| a ")).collect();
    assert_eq!(rows, ["| a | 1.5m, 3.00° | -, - | -, - |"]);
    assert!(!out.markdown.contains("Average"));
    assert!(emit_table(&[], Layout::Table1, &TableFormat::default()).is_err());
}

#[test]
fn layouts_pick_matching_runs() {
    use Preprocessing::{CenteredCrop as Cc, WholeFov as Wf};
    let ad = LossKind::Adaptive;
    let runs = vec![
        record("a", Cc, false, HeadConfig::fc(), LossKind::FixedBeta(500.0), 2.0, 4.0),
        record("a", Cc, false, HeadConfig::fc(), ad, 1.0, 2.0),
        record("a", Wf, false, HeadConfig::fc(), ad, 0.5, 1.0),
        record("a", Cc, true, HeadConfig::fc(), ad, 0.8, 1.6),
        record("a", Wf, true, HeadConfig::fc(), ad, 0.4, 0.8),
        record("a", Cc, false, HeadConfig::lstm(5), ad, 0.9, 1.8),
        record("a", Wf, false, HeadConfig::lstm(20), ad, 0.3, 0.6),
        record("a", Wf, true, HeadConfig::lstm(1), ad, 0.25, 0.5),
    ];
    let t = table_from_runs(&runs, Layout::Table1).unwrap();
    assert_eq!(t.rows[0].cells, vec![Some((2.0, 4.0)), Some((0.5, 1.0))]);
    let t = table_from_runs(&runs, Layout::Table2).unwrap();
    assert_eq!(t.rows[0].cells, vec![Some((2.0, 4.0)), Some((0.8, 1.6)), Some((0.4, 0.8))]);
    let t = table_from_runs(&runs, Layout::Table3).unwrap();
    assert_eq!(t.rows[0].cells, vec![Some((2.0, 4.0)), None, Some((0.9, 1.8)), None, None]);
    let t = table_from_runs(&runs, Layout::Table4).unwrap();
    assert_eq!(t.rows[0].cells[4], Some((0.3, 0.6)));
    let t = table_from_runs(&runs, Layout::Table5).unwrap();
    assert_eq!(t.rows[0].cells, vec![Some((2.0, 4.0)), Some((1.0, 2.0)), Some((0.25, 0.5))]);
    for l in Layout::ALL {
        assert_eq!(Layout::parse(l.name()).unwrap(), l);
    }
}

#[test]
fn grid_enumerates_twenty_distinct_runs() {
    let grid = table_grid(&ExperimentConfig::default());
    assert_eq!(grid.len(), 20);
    let names: BTreeSet<&str> = grid.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names.len(), 20);
    let combos: BTreeSet<(&str, bool, usize, bool)> = grid
        .iter()
        .map(|c| {
            (
                c.preprocessing.name(),
                c.augment,
                c.model.head.sequence_length,
                c.model.head.kind == HeadKind::Fc,
            )
        })
        .collect();
    assert_eq!(combos.len(), 20);
    assert!(grid.iter().all(|c| c.validate().is_ok()));
}

#[test]
fn config_echo_round_trips() {
    let mut c = ExperimentConfig {
        name: "x".into(),
        augment: true,
        augment_range: (-10.0, 15.0),
        loss: LossKind::FixedBeta(250.0),
        optimizer: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        seed: 42,
        model: ModelConfig {
            backbone: BackboneConfig::desk(),
            head: HeadConfig::lstm(5),
        },
        ..ExperimentConfig::default()
    };
    if let DatasetRef::Synthetic { scene, trajectory, .. } = &mut c.dataset {
        scene.border_knob = 0.75;
        trajectory.overlap = 0.2;
    }
    let text = keyvalue::format_key_values(&c.to_pairs());
    assert_eq!(ExperimentConfig::parse(&text, Path::new("x")).unwrap(), c);

    let m = ExperimentConfig {
        dataset: DatasetRef::Manifests {
            train: "d/train.manifest".into(),
            test: "d/test.manifest".into(),
        },
        dataset_label: "d".into(),
        ..ExperimentConfig::default()
    };
    let text = keyvalue::format_key_values(&m.to_pairs());
    assert_eq!(ExperimentConfig::parse(&text, Path::new("x")).unwrap(), m);
}

#[test]
fn config_rejections() {
    let bad = |t: &str| ExperimentConfig::parse(t, Path::new("x")).unwrap_err();
    assert!(matches!(bad("colour = red\n"), crate::Error::Config(_)));
    assert!(matches!(bad("head.colour = red\n"), crate::Error::Config(_)));
    bad("augment.range = -30 20\n");
    bad("batch_size = 0\n");
    bad("dataset = manifest\n");
    bad("dataset = manifest\ndataset.train = a\ndataset.test = b\nscene.focal = 3\n");
    bad("head.kind = fc\nhead.sequence_length = 5\n");
    bad("name = a/b\n");
    let c = ExperimentConfig::parse("head.kind = lstm\nhead.sequence_length = 10\nseed = 3\n", Path::new("x")).unwrap();
    assert_eq!(c.model.head.sequence_length, 10);
    assert_eq!(c.seed, 3);
}

#[test]
fn degenerate_prediction_scores_180() {
    let p = crate::geometry::Pose::new([0.0; 3], crate::geometry::UnitQuaternion::IDENTITY).unwrap();
    assert_eq!(pose_errors(&p, [3.0, 4.0, 0.0], [0.0; 4]), (5.0, 180.0));
    let (_, d) = pose_errors(&p, [0.0; 3], [-2.0, 0.0, 0.0, 0.0]);
    assert!(d.abs() < 1e-6);
}

/// A run small enough for unit tests.
fn tiny(name: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        dataset: DatasetRef::Synthetic {
            scene: SceneConfig {
                height: 64,
                width: 96,
                ..SceneConfig::default()
            },
            trajectory: TrajectoryConfig {
                length: 8,
                test_length: 4,
                step: 0.2,
                drift_deg: 2.0,
                ..TrajectoryConfig::default()
            },
            seed: 3,
        },
        model: ModelConfig {
            backbone: BackboneConfig {
                input_pool: 8,
                stages: vec![ConvStage::new(4, 3, 1, 2), ConvStage::new(4, 3, 1, 2)],
                ..BackboneConfig::default()
            },
            head: HeadConfig {
                fc_hidden: 16,
                lstm_units: 8,
                ..HeadConfig::fc()
            },
        },
        optimizer: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        epochs: 3,
        batch_size: 4,
        seed: 9,
        ..ExperimentConfig::default()
    }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn runs_are_deterministic_and_artifacts_reload() {
    let dir = tmp();
    let a = run_experiment(&tiny("a"), Some(dir.path())).unwrap();
    let b = run_experiment(&tiny("a"), None).unwrap();
    assert_eq!(a.test, b.test);
    assert_eq!(a.train, b.train);
    assert_eq!(a.model.params.tensors(), b.model.params.tensors());
    assert_eq!(a.steps, 6);
    assert!(a.test.is_consistent() && a.train.is_consistent());
    assert_eq!(a.test.curve.iter().map(|p| p.epoch).collect::<Vec<_>>(), [0, 1, 2, 3]);
    assert!(a.test.curve[0].mean_loss.is_none() && a.test.curve[3].mean_loss.is_some());

    let art = a.artifacts.unwrap();
    let rec = load_run(&art.dir).unwrap();
    assert_eq!(rec.config, tiny("a"));
    assert_eq!(rec.test, a.test);
    assert_eq!(rec.train, a.train);
    let log = std::fs::read_to_string(&art.log).unwrap();
    let body: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], LOG_HEADER);
    assert_eq!(body.len(), 7);
    for p in [&art.log, &art.frames, &art.curves_csv, &art.report, &art.row, &art.curves_svg, &art.checkpoint] {
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("seed = 9"), "{} lacks the config echo", p.display());
    }
    let (model, echo) = crate::model::load_checkpoint(&art.checkpoint).unwrap();
    assert_eq!(model.params.tensors(), a.model.params.tensors());
    assert_eq!(echo["preprocessing"], "whole_fov");
    let runs = load_runs(dir.path()).unwrap();
    assert_eq!(runs.len(), 1);
}

#[test]
fn zero_epochs_is_the_untrained_model() {
    let mut c = tiny("z");
    c.epochs = 0;
    let out = run_experiment(&c, None).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.test.curve.len(), 1);
    let data = load_dataset(&c.dataset).unwrap();
    let mut model = crate::model::Model::new(c.model.clone(), c.seed).unwrap();
    c.loss_init.attach(&mut model.params).unwrap();
    let direct = evaluate(&model, &data.test, c.preprocessing).unwrap();
    assert_eq!(direct.frames, out.test.frames);
}

#[test]
fn lstm_augmented_and_random_crop_runs_train() {
    let mut c = tiny("l");
    c.model.head = HeadConfig {
        lstm_units: 8,
        ..HeadConfig::lstm(3)
    };
    c.augment = true;
    c.epochs = 2;
    let out = run_experiment(&c, None).unwrap();
    // 6 windows of 3 in 8 frames, doubled, batches of 4
    assert_eq!(out.steps, 2 * 3);
    assert_eq!(out.test.frames.len(), 2);
    assert_eq!(out.train.frames.len(), 6);

    let mut c = tiny("r");
    c.preprocessing = Preprocessing::RandomCrop;
    c.augment = true;
    let a = run_experiment(&c, None).unwrap();
    let b = run_experiment(&c, None).unwrap();
    assert_eq!(a.test, b.test);
    assert_eq!(a.steps, 3 * 4);
}

#[test]
fn unordered_sources_refuse_lstm_windows() {
    let mut c = tiny("u");
    c.model.head = HeadConfig {
        lstm_units: 8,
        ..HeadConfig::lstm(2)
    };
    let mut data = load_dataset(&c.dataset).unwrap();
    data.train_manifest.source_format = SourceFormat::Cambridge;
    assert!(matches!(run_with_data(&c, &data, None), Err(crate::Error::Config(_))));
    c.force_windows = true;
    c.epochs = 1;
    assert!(run_with_data(&c, &data, None).is_ok());
}

#[test]
fn failed_runs_keep_the_partial_log() {
    let dir = tmp();
    let mut c = tiny("nan");
    c.optimizer.lr = 1e300;
    let err = run_experiment(&c, Some(dir.path())).err().expect("diverges");
    assert_eq!(err.exit_code(), 3);
    let log = std::fs::read_to_string(dir.path().join("nan/log.csv")).unwrap();
    assert!(log.lines().any(|l| l == LOG_HEADER));
    assert!(log.lines().any(|l| l.starts_with("1,1,")));
}

#[test]
fn output_root_env() {
    // only this test touches the variable
    std::env::set_var(OUTPUT_ROOT_ENV, "/tmp/x");
    assert_eq!(output_root(), PathBuf::from("/tmp/x"));
    std::env::remove_var(OUTPUT_ROOT_ENV);
    assert_eq!(output_root(), PathBuf::from("runs"));
}

proptest! {
    #[test]
    fn median_is_the_middle_of_the_sort(v in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let mut s = v.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        let want = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        prop_assert_eq!(median(&v).unwrap(), want);
    }

    #[test]
    fn improvement_sign_and_identity(b in 0.01f64..100.0, n in 0.0f64..100.0) {
        let p = improvement_raw(b, n).unwrap();
        prop_assert_eq!(p > 0.0, n < b);
        prop_assert!((b * (1.0 - p / 100.0) - n).abs() < 1e-9 * b.max(1.0));
        let t = RoundingMode::Truncate.apply(p, 1);
        prop_assert!(t.abs() <= p.abs() + 1e-9 && (p - t).abs() < 0.1 + 1e-9);
    }
}
