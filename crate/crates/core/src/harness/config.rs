use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::augmentation::{DEFAULT_RANGE, MAX_AUGMENT_DEG};
use crate::error::{Error, Result};
use crate::imaging::Preprocessing;
use crate::keyvalue::{self, Pairs};
use crate::loss_optim::{AdamConfig, AdaptiveLossState, LossKind, DEFAULT_BATCH};
use crate::model::{BackboneConfig, HeadConfig, HeadKind, ModelConfig, MODEL_KEYS};
use crate::synthetic::{SceneConfig, TrajectoryConfig};

/// Where a run's frames come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetRef {
    /// Rendered in memory from a scene and trajectory.
    Synthetic {
        scene: SceneConfig,
        trajectory: TrajectoryConfig,
        seed: u64,
    },
    /// Manifests on disk; image paths resolve against each manifest's directory.
    Manifests { train: PathBuf, test: PathBuf },
}

/// One experiment. Every field is echoed into every artifact the run writes.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetRef,
    /// Row label in tables.
    pub dataset_label: String,
    /// Tables average rows within a group.
    pub dataset_group: String,
    pub preprocessing: Preprocessing,
    pub augment: bool,
    pub augment_range: (f64, f64),
    pub model: ModelConfig,
    pub loss: LossKind,
    pub loss_init: AdaptiveLossState,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Learning-curve cadence in epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    pub window_stride: usize,
    /// Window sources without a reliable frame order anyway.
    pub force_windows: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            dataset: DatasetRef::Synthetic {
                scene: SceneConfig::default(),
                trajectory: TrajectoryConfig::default(),
                seed: 1,
            },
            dataset_label: "synthetic".into(),
            dataset_group: "synthetic".into(),
            preprocessing: Preprocessing::WholeFov,
            augment: false,
            augment_range: DEFAULT_RANGE,
            model: ModelConfig {
                backbone: BackboneConfig::desk(),
                head: HeadConfig::fc(),
            },
            loss: LossKind::Adaptive,
            loss_init: AdaptiveLossState::default(),
            optimizer: AdamConfig::default(),
            epochs: 10,
            batch_size: DEFAULT_BATCH,
            seed: 0,
            eval_every: 1,
            window_stride: 1,
            force_windows: false,
        }
    }
}

const KEYS: [&str; 23] = [
    "name",
    "dataset",
    "dataset.label",
    "dataset.group",
    "dataset.seed",
    "dataset.train",
    "dataset.test",
    "preprocessing",
    "augment",
    "augment.range",
    "loss",
    "loss.s_x_init",
    "loss.s_q_init",
    "optimizer.lr",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.eps",
    "epochs",
    "batch_size",
    "seed",
    "eval_every",
    "window_stride",
    "force_windows",
];

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.trim() != self.name {
            return Err(Error::Config(format!("run name '{}' must be a plain directory name", self.name)));
        }
        self.model.validate()?;
        let (lo, hi) = self.augment_range;
        if !(lo <= hi && lo.abs() <= MAX_AUGMENT_DEG && hi.abs() <= MAX_AUGMENT_DEG) {
            return Err(Error::Config(format!(
                "augment.range [{lo}, {hi}] must lie within ±{MAX_AUGMENT_DEG}°"
            )));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.window_stride == 0 {
            return Err(Error::Config("batch_size, eval_every and window_stride must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(Error::Config(format!("bad optimizer settings {o:?}")));
        }
        if let DatasetRef::Synthetic { scene, trajectory, .. } = &self.dataset {
            scene.validate()?;
            trajectory.validate()?;
        }
        Ok(())
    }

    /// Full echo in a fixed key order.
    pub fn to_pairs(&self) -> Pairs {
        let mut p: Pairs = Vec::new();
        let mut put = |k: &str, v: String| p.push((k.to_string(), v));
        put("name", self.name.clone());
        match &self.dataset {
            DatasetRef::Synthetic { seed, .. } => {
                put("dataset", "synthetic".into());
                put("dataset.seed", seed.to_string());
            }
            DatasetRef::Manifests { train, test } => {
                put("dataset", "manifest".into());
                put("dataset.train", train.display().to_string());
                put("dataset.test", test.display().to_string());
            }
        }
        put("dataset.label", self.dataset_label.clone());
        put("dataset.group", self.dataset_group.clone());
        put("preprocessing", self.preprocessing.name().into());
        put("augment", self.augment.to_string());
        put("augment.range", format!("{} {}", self.augment_range.0, self.augment_range.1));
        put("loss", self.loss.name());
        put("loss.s_x_init", self.loss_init.s_x.to_string());
        put("loss.s_q_init", self.loss_init.s_q.to_string());
        put("optimizer.lr", self.optimizer.lr.to_string());
        put("optimizer.beta1", self.optimizer.beta1.to_string());
        put("optimizer.beta2", self.optimizer.beta2.to_string());
        put("optimizer.eps", self.optimizer.eps.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("eval_every", self.eval_every.to_string());
        put("window_stride", self.window_stride.to_string());
        put("force_windows", self.force_windows.to_string());
        p.extend(self.model.to_pairs());
        if let DatasetRef::Synthetic { scene, trajectory, .. } = &self.dataset {
            p.extend(scene.to_pairs().into_iter().map(|(k, v)| (format!("scene.{k}"), v)));
            p.extend(trajectory.to_pairs().into_iter().map(|(k, v)| (format!("trajectory.{k}"), v)));
        }
        p
    }

    /// Builds a config from parsed `key = value` pairs on top of the
    /// defaults. Unknown keys are rejected.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        keyvalue::reject_unknown(map, &KEYS, &["scene.", "trajectory.", "backbone.", "head."])?;
        for k in map.keys().filter(|k| k.starts_with("backbone.") || k.starts_with("head.")) {
            if !MODEL_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let mut c = Self::default();
        keyvalue::set(map, "name", &mut c.name)?;
        let kind = map.get("dataset").map(String::as_str).unwrap_or("synthetic");
        let scene_keys = keyvalue::section(map, "scene.");
        let traj_keys = keyvalue::section(map, "trajectory.");
        c.dataset = match kind {
            "synthetic" => {
                if map.contains_key("dataset.train") || map.contains_key("dataset.test") {
                    return Err(Error::Config("dataset.train/test need dataset = manifest".into()));
                }
                DatasetRef::Synthetic {
                    scene: SceneConfig::from_pairs(&SceneConfig::default(), &scene_keys)?,
                    trajectory: TrajectoryConfig::from_pairs(&TrajectoryConfig::default(), &traj_keys)?,
                    seed: keyvalue::get(map, "dataset.seed")?.unwrap_or(1),
                }
            }
            "manifest" => {
                if !scene_keys.is_empty() || !traj_keys.is_empty() || map.contains_key("dataset.seed") {
                    return Err(Error::Config("scene, trajectory and dataset.seed keys need dataset = synthetic".into()));
                }
                let path = |k: &str| {
                    map.get(k)
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Config(format!("dataset = manifest needs {k}")))
                };
                DatasetRef::Manifests {
                    train: path("dataset.train")?,
                    test: path("dataset.test")?,
                }
            }
            other => return Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        };
        c.dataset_label = map.get("dataset.label").cloned().unwrap_or_else(|| match &c.dataset {
            DatasetRef::Synthetic { .. } => "synthetic".into(),
            DatasetRef::Manifests { train, .. } => train
                .parent()
                .and_then(Path::file_name)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
        });
        keyvalue::set(map, "dataset.group", &mut c.dataset_group)?;
        if let Some(p) = map.get("preprocessing") {
            c.preprocessing = Preprocessing::parse(p)?;
        }
        if let Some(a) = map.get("augment") {
            c.augment = parse_bool("augment", a)?;
        }
        if let Some([lo, hi]) = keyvalue::get_array::<2>(map, "augment.range")? {
            c.augment_range = (lo, hi);
        }
        if let Some(l) = map.get("loss") {
            c.loss = LossKind::parse(l)?;
        }
        keyvalue::set(map, "loss.s_x_init", &mut c.loss_init.s_x)?;
        keyvalue::set(map, "loss.s_q_init", &mut c.loss_init.s_q)?;
        keyvalue::set(map, "optimizer.lr", &mut c.optimizer.lr)?;
        keyvalue::set(map, "optimizer.beta1", &mut c.optimizer.beta1)?;
        keyvalue::set(map, "optimizer.beta2", &mut c.optimizer.beta2)?;
        keyvalue::set(map, "optimizer.eps", &mut c.optimizer.eps)?;
        keyvalue::set(map, "epochs", &mut c.epochs)?;
        keyvalue::set(map, "batch_size", &mut c.batch_size)?;
        keyvalue::set(map, "seed", &mut c.seed)?;
        keyvalue::set(map, "eval_every", &mut c.eval_every)?;
        keyvalue::set(map, "window_stride", &mut c.window_stride)?;
        if let Some(f) = map.get("force_windows") {
            c.force_windows = parse_bool("force_windows", f)?;
        }
        c.model = ModelConfig::from_pairs(&c.model, map)?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        Self::from_map(&keyvalue::parse_key_values(text, origin)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_map(&keyvalue::read_key_values(path)?)
    }

    /// Relative manifest paths are taken relative to `base` (the config
    /// file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetRef::Manifests { train, test } = &mut self.dataset {
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    /// Short description of the head, e.g. `fc` or `lstm(L=5)`.
    pub fn head_label(&self) -> String {
        match self.model.head.kind {
            HeadKind::Fc => "fc".into(),
            HeadKind::Lstm => format!("lstm(L={})", self.model.head.sequence_length),
        }
    }
}

/// The 20 runs behind the crop/whole-view, augmentation and head tables:
/// {centered_crop, whole_fov} × {no augmentation, augmentation} × {FC, LSTM
/// with L ∈ {1, 5, 10, 20}}. Names extend `base.name`.
pub fn table_grid(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for pre in [Preprocessing::CenteredCrop, Preprocessing::WholeFov] {
        for augment in [false, true] {
            let heads = std::iter::once(None).chain([1, 5, 10, 20].into_iter().map(Some));
            for len in heads {
                let mut c = base.clone();
                c.preprocessing = pre;
                c.augment = augment;
                let head = match len {
                    None => HeadConfig::fc(),
                    Some(l) => HeadConfig::lstm(l),
                };
                c.model.head = HeadConfig {
                    fc_hidden: base.model.head.fc_hidden,
                    lstm_units: base.model.head.lstm_units,
                    lstm_layers: base.model.head.lstm_layers,
                    shared_lstm: base.model.head.shared_lstm,
                    ..head
                };
                let short = if pre == Preprocessing::CenteredCrop { "cc" } else { "wf" };
                let aug = if augment { "aug" } else { "noaug" };
                let h = len.map(|l| format!("lstm{l}")).unwrap_or_else(|| "fc".into());
                c.name = format!("{}-{short}-{aug}-{h}", base.name);
                out.push(c);
            }
        }
    }
    out
}
