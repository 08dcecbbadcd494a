//! Run configuration: a `key = value` file plus per-flag overrides.
//!
//! Unknown keys are rejected outright so a typo cannot silently fall back
//! to a default. Stage seeds default to fixed offsets from the master
//! seed; setting them explicitly pins a single stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hgd_core::apm::{IsolatedPolicy, TypeCombine};
use hgd_core::models::ModelKind;

#[derive(Debug, Clone)]
pub struct RunConfig {
    // Paths; may also arrive as subcommand flags, which win.
    pub dump: Option<PathBuf>,
    pub screen: Option<PathBuf>,

    // Embedding and model dimensions.
    pub dim: usize,
    pub hidden: usize,
    pub k: usize,
    pub classes: u32,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub model: ModelKind,
    pub threshold: f64,

    // Propagation policies.
    pub isolated_policy: IsolatedPolicy,
    pub type_combine: TypeCombine,
    pub add_reverse: bool,
    pub block_size: usize,

    // Pipeline knobs.
    pub instance_of: String,
    pub kmeans_max_iters: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub sample_target_n: Option<u64>,
    pub high_degree_fraction: f64,
    pub walk_seeds: usize,
    pub restart_prob: f64,

    // Seeds.
    pub seed: u64,
    embed_seed: Option<u64>,
    cluster_seed: Option<u64>,
    sample_seed: Option<u64>,
    split_seed: Option<u64>,
    train_seed: Option<u64>,

    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dump: None,
            screen: None,
            dim: 128,
            hidden: 256,
            k: 3,
            classes: 2000,
            epochs: 300,
            lr: 0.01,
            dropout: 0.0,
            batch_size: 1024,
            model: ModelKind::RMlp,
            threshold: 0.5,
            isolated_policy: IsolatedPolicy::Zero,
            type_combine: TypeCombine::Mean,
            add_reverse: false,
            block_size: 0,
            instance_of: "P31".to_string(),
            kmeans_max_iters: 100,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            sample_target_n: None,
            high_degree_fraction: 0.5,
            walk_seeds: 16,
            restart_prob: 0.15,
            seed: 0,
            embed_seed: None,
            cluster_seed: None,
            sample_seed: None,
            split_seed: None,
            train_seed: None,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn embed_seed(&self) -> u64 {
        self.embed_seed.unwrap_or(self.seed.wrapping_add(1))
    }
    pub fn cluster_seed(&self) -> u64 {
        self.cluster_seed.unwrap_or(self.seed.wrapping_add(2))
    }
    pub fn sample_seed(&self) -> u64 {
        self.sample_seed.unwrap_or(self.seed.wrapping_add(3))
    }
    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed.wrapping_add(4))
    }
    pub fn train_seed(&self) -> u64 {
        self.train_seed.unwrap_or(self.seed.wrapping_add(5))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((before, _)) => before.trim(),
                None => raw.trim(),
            };
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected key = value, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            self.set(key.trim(), value.trim()).with_context(|| {
                format!("{}:{}", path.display(), lineno + 1)
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad value for {key}: {e}"))
        }
        match key {
            "dump" => self.dump = Some(PathBuf::from(value)),
            "screen" => self.screen = Some(PathBuf::from(value)),
            "dim" => self.dim = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "model" => self.model = value.parse().map_err(|e| anyhow::anyhow!("{e}"))?,
            "threshold" => self.threshold = parse(key, value)?,
            "isolated_policy" => {
                self.isolated_policy = value.parse().map_err(|e| anyhow::anyhow!("{e}"))?
            }
            "type_combine" => {
                self.type_combine = value.parse().map_err(|e| anyhow::anyhow!("{e}"))?
            }
            "add_reverse" => self.add_reverse = parse(key, value)?,
            "block_size" => self.block_size = parse(key, value)?,
            "instance_of" => self.instance_of = value.to_string(),
            "kmeans_max_iters" => self.kmeans_max_iters = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "sample_target_n" => self.sample_target_n = Some(parse(key, value)?),
            "high_degree_fraction" => self.high_degree_fraction = parse(key, value)?,
            "walk_seeds" => self.walk_seeds = parse(key, value)?,
            "restart_prob" => self.restart_prob = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "embed_seed" => self.embed_seed = Some(parse(key, value)?),
            "cluster_seed" => self.cluster_seed = Some(parse(key, value)?),
            "sample_seed" => self.sample_seed = Some(parse(key, value)?),
            "split_seed" => self.split_seed = Some(parse(key, value)?),
            "train_seed" => self.train_seed = Some(parse(key, value)?),
            "threads" => self.threads = parse(key, value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Values that feed stage manifests, so a config change invalidates
    /// cached outputs built under different settings.
    pub fn fingerprint(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("dim".into(), self.dim.to_string());
        map.insert("hidden".into(), self.hidden.to_string());
        map.insert("k".into(), self.k.to_string());
        map.insert("classes".into(), self.classes.to_string());
        map.insert("epochs".into(), self.epochs.to_string());
        map.insert("lr".into(), self.lr.to_string());
        map.insert("dropout".into(), self.dropout.to_string());
        map.insert("batch_size".into(), self.batch_size.to_string());
        map.insert("model".into(), self.model.to_string());
        map.insert("threshold".into(), self.threshold.to_string());
        map.insert("isolated_policy".into(), self.isolated_policy.to_string());
        map.insert("type_combine".into(), self.type_combine.to_string());
        map.insert("add_reverse".into(), self.add_reverse.to_string());
        map.insert("instance_of".into(), self.instance_of.clone());
        map.insert("kmeans_max_iters".into(), self.kmeans_max_iters.to_string());
        map.insert(
            "ratios".into(),
            format!("{}:{}:{}", self.train_ratio, self.val_ratio, self.test_ratio),
        );
        map.insert(
            "sample".into(),
            format!(
                "{:?}:{}:{}:{}",
                self.sample_target_n, self.high_degree_fraction, self.walk_seeds, self.restart_prob
            ),
        );
        map.insert(
            "seeds".into(),
            format!(
                "{}:{}:{}:{}:{}:{}",
                self.seed,
                self.embed_seed(),
                self.cluster_seed(),
                self.sample_seed(),
                self.split_seed(),
                self.train_seed()
            ),
        );
        map
    }
}
