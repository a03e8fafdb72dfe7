use super::*;
use std::io::Cursor;

fn entry(seq: &str, frame: u64, synthetic: bool) -> ManifestEntry {
    ManifestEntry {
        sequence_id: seq.into(),
        frame_index: frame,
        path: PathBuf::from(format!("{seq}/frame-{frame:06}.color.png")),
        pose: Pose::new(
            [frame as f64 * 0.1, -1.0 / 3.0, 2.0],
            UnitQuaternion::normalize([1.0, 0.1 * frame as f64, -0.2, 0.3]).unwrap(),
        )
        .unwrap(),
        synthetic,
    }
}

fn touch(path: &Path) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, b"").unwrap();
}

const IDENTITY_POSE: &str = "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";

#[test]
fn seven_scenes_identity_and_flip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("chess");
    touch(&root.join("seq-01/frame-000000.color.png"));
    fs::write(root.join("seq-01/frame-000000.pose.txt"), IDENTITY_POSE).unwrap();
    touch(&root.join("seq-01/frame-000001.color.png"));
    fs::write(
        root.join("seq-01/frame-000001.pose.txt"),
        "-1 0 0 1\n0 -1 0 2\n0 0 1 3\n0 0 0 1\n",
    )
    .unwrap();

    let (m, skipped) = parse_seven_scenes(&root, &SevenScenesOptions::default()).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(m.name, "chess");
    assert_eq!(m.len(), 2);
    assert_eq!(m.entries[0].pose.position, [0.0; 3]);
    assert_eq!(m.entries[0].pose.orientation.to_array(), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(m.entries[1].pose.position, [1.0, 2.0, 3.0]);
    assert_eq!(m.entries[1].pose.orientation.to_array(), [0.0, 0.0, 0.0, 1.0]);
    m.check_paths(&root).unwrap();
}

#[test]
fn seven_scenes_keeps_every_frame_and_skips_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("fire");
    for seq in ["seq-01", "seq-02", "seq-03"] {
        for f in 0..12 {
            touch(&root.join(format!("{seq}/frame-{f:06}.color.png")));
            fs::write(root.join(format!("{seq}/frame-{f:06}.pose.txt")), IDENTITY_POSE).unwrap();
        }
    }
    // reflection, wrong count, missing pose
    fs::write(root.join("seq-01/frame-000003.pose.txt"), "1 0 0 0\n0 1 0 0\n0 0 -1 0\n0 0 0 1\n").unwrap();
    fs::write(root.join("seq-01/frame-000004.pose.txt"), "1 0 0\n").unwrap();
    fs::remove_file(root.join("seq-02/frame-000005.pose.txt")).unwrap();
    fs::write(root.join("TrainSplit.txt"), "sequence1\nsequence2\n").unwrap();
    fs::write(root.join("TestSplit.txt"), "sequence3\n").unwrap();

    let (train, skipped) = parse_seven_scenes(&root, &SevenScenesOptions::default()).unwrap();
    assert_eq!(skipped.len(), 3);
    assert_eq!(train.len(), 24 - 3);
    assert_eq!(train.provenance["skipped"], "3");
    train.validate().unwrap();

    let opts = SevenScenesOptions {
        split: Split::Test,
        ..Default::default()
    };
    let (test, skipped) = parse_seven_scenes(&root, &opts).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(test.len(), 12);
    assert!(test.entries.iter().all(|e| e.sequence_id == "seq-03"));

    // parsing is idempotent
    let (again, _) = parse_seven_scenes(&root, &SevenScenesOptions::default()).unwrap();
    assert_eq!(again, train);
}

#[test]
fn seven_scenes_inversion_flag() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("heads");
    touch(&root.join("seq-01/frame-000000.color.png"));
    fs::write(root.join("seq-01/frame-000000.pose.txt"), "1 0 0 1\n0 1 0 2\n0 0 1 3\n0 0 0 1\n").unwrap();
    let opts = SevenScenesOptions {
        invert_poses: true,
        ..Default::default()
    };
    let (m, _) = parse_seven_scenes(&root, &opts).unwrap();
    assert_eq!(m.entries[0].pose.position, [-1.0, -2.0, -3.0]);
}

#[test]
fn cambridge_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("KingsCollege");
    for f in ["seq1/frame001.png", "seq1/frame002.png", "seq1/frame003.png", "seq2/frame001.png"] {
        touch(&root.join(f));
    }
    let text = "Visual Landmark Dataset V1\nImageFile, Camera Position [X Y Z W P Q R]\n\n\
        seq1/frame001.png 1.0 2.0 3.0 1 0 0 0\n\
        seq1/frame002.png 0 0 0 2 0 0 0\n\
        seq1/frame003.png 0 0 0 -1 0 0 0\n\
        seq2/frame001.png 0 0 0 0 0 0 0\n\
        seq2/frame009.png 0 0 0 1 0 0 0\n\
        seq1/frame004.png 1 2 3\n";
    fs::write(root.join("dataset_train.txt"), text).unwrap();
    let (m, skipped) = parse_cambridge(&root, Split::Train).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m.entries[0].pose.position, [1.0, 2.0, 3.0]);
    assert_eq!(m.entries[0].pose.orientation.to_array(), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(m.entries[1].pose.orientation.to_array(), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(m.entries[2].pose.orientation.to_array(), [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(skipped.len(), 3);
    assert_eq!(skipped[0].location, "dataset_train.txt:7");
    assert_eq!(skipped[2].location, "dataset_train.txt:9");
    assert!(skipped[2].reason.contains("8 fields"));

    assert!(m.windows(2, 1, false).is_err());
    assert_eq!(m.windows(2, 1, true).unwrap().len(), 2);
}

#[test]
fn window_counts() {
    let ten: Vec<_> = (0..10).map(|f| entry("a", f, false)).collect();
    assert_eq!(sequence_windows(&ten, 5, 1).unwrap().len(), 6);
    assert_eq!(sequence_windows(&ten, 1, 1).unwrap().len(), 10);
    assert!(sequence_windows(&ten, 0, 1).is_err());

    let mut two = ten.clone();
    two.extend((0..10).map(|f| entry("b", f, false)));
    let w = sequence_windows(&two, 5, 1).unwrap();
    assert_eq!(w.len(), 12);
    for win in &w {
        let seq = &two[win.indices[0]].sequence_id;
        assert!(win.indices.iter().all(|&i| &two[i].sequence_id == seq));
    }
    assert_eq!(two[w[0].target()].frame_index, 4);
}

#[test]
fn synthetic_frames_stay_out_of_windows() {
    let mut items: Vec<_> = (0..6).map(|f| entry("a", f, false)).collect();
    items.insert(3, entry("a", 100, true));
    let w = sequence_windows(&items, 3, 1).unwrap();
    assert_eq!(w.len(), 4);
    assert!(w.iter().all(|win| win.indices.iter().all(|&i| !items[i].synthetic)));
}

#[test]
fn manifest_round_trip() {
    let mut m = DatasetManifest::new("scene", Split::Test, SourceFormat::Synthetic);
    m.provenance.insert("preprocessing".into(), "whole_fov".into());
    m.entries = (0..1000).map(|f| entry(if f % 2 == 0 { "a" } else { "b" }, f, f % 7 == 0)).collect();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    let back = DatasetManifest::read_from(Cursor::new(buf), Path::new("mem")).unwrap();
    assert_eq!(back.name, m.name);
    assert_eq!(back.split, m.split);
    assert_eq!(back.provenance, m.provenance);
    assert_eq!(back.len(), 1000);
    for (a, b) in back.entries.iter().zip(&m.entries) {
        assert_eq!((&a.sequence_id, a.frame_index, &a.path, a.synthetic), (&b.sequence_id, b.frame_index, &b.path, b.synthetic));
        for k in 0..3 {
            assert!((a.pose.position[k] - b.pose.position[k]).abs() <= 1e-15);
        }
        for (x, y) in a.pose.orientation.to_array().iter().zip(b.pose.orientation.to_array()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }
}

#[test]
fn empty_manifest_round_trip_and_file_io() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/empty.manifest");
    let m = DatasetManifest::new("nothing", Split::Train, SourceFormat::SevenScenes);
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}

#[test]
fn manifest_version_mismatch_names_both() {
    let text = "POSELAB-MANIFEST 7\n# name = x\n";
    match DatasetManifest::read_from(Cursor::new(text), Path::new("mem")) {
        Err(Error::Version { expected, found }) => {
            assert_eq!(expected, "1");
            assert_eq!(found, "7");
        }
        other => panic!("{other:?}"),
    }
    let bad_row = "POSELAB-MANIFEST 1\n# name = x\n# split = train\n# source_format = synthetic\na\t1\tp\n";
    assert!(matches!(
        DatasetManifest::read_from(Cursor::new(bad_row), Path::new("mem")),
        Err(Error::Parse { line: 5, .. })
    ));
}

#[test]
fn validate_detects_disorder() {
    let mut m = DatasetManifest::new("x", Split::Train, SourceFormat::Synthetic);
    m.entries = vec![entry("a", 2, false), entry("a", 1, false)];
    assert!(m.validate().is_err());
    m.sort();
    m.validate().unwrap();
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn window_count_matches_enumeration(n in 0usize..40, len in 1usize..12, stride in 1usize..6) {
            let items: Vec<_> = (0..n as u64).map(|f| entry("s", f, false)).collect();
            let windows = sequence_windows(&items, len, stride).unwrap();
            // brute force: every start that fits and is a multiple of stride
            let brute = (0..n).filter(|s| s % stride == 0 && s + len <= n).count();
            prop_assert_eq!(windows.len(), brute);
            let formula = if n >= len { (n - len) / stride + 1 } else { 0 };
            prop_assert_eq!(windows.len(), formula);
        }
    }
}
