//! Experiment configuration: a flat TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use argpet_core::corpus::SplitRatios;
use argpet_core::encoding::{PvpPreset, DEFAULT_MAX_LEN};
use argpet_core::model::DEFAULT_REDUCTION_FACTOR;
use argpet_core::preprocess::{SamplingMode, STANDARD_PROPORTIONS};
use argpet_core::training::{TrainConfig, Variant};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Persons {
    Original,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    Original,
    Onion,
}

impl Persons {
    pub fn as_str(self) -> &'static str {
        match self {
            Persons::Original => "original",
            Persons::Shuffled => "shuffled",
        }
    }
}

impl Labels {
    pub fn as_str(self) -> &'static str {
        match self {
            Labels::Original => "original",
            Labels::Onion => "onion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub persons: Persons,
    /// One person name per line; required when persons = shuffled.
    pub person_list: Option<PathBuf>,
    pub labels: Labels,
    pub variant: Variant,
    pub pvp: String,
    pub mode: SamplingMode,
    pub proportions: Vec<f64>,
    /// Empty means `0..repetitions` for the sampling mode.
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// UKP-style TSV for near-domain variants.
    pub sam_dataset: Option<PathBuf>,
    /// Keep just enough no_stance units for this share; absent keeps all.
    pub no_stance_share: Option<f64>,
    pub split_seed: u64,
    pub split_train: f64,
    pub split_dev: f64,
    pub split_test: f64,

    pub backbone_seed: u64,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_size: usize,
    pub init_std: f64,
    pub max_len: usize,
    pub reduction_factor: usize,

    /// Absent values fall back to the variant's defaults.
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub lm_loss_weight: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub best_epoch_selection: bool,
    pub sam_learning_rate: Option<f64>,
    pub sam_epochs: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let base = TrainConfig::defaults_for(Variant::Adapter, 0);
        ExperimentSpec {
            dataset: PathBuf::from("data/corpus.jsonl"),
            persons: Persons::Original,
            person_list: None,
            labels: Labels::Original,
            variant: Variant::Adapter,
            pvp: "naive".into(),
            mode: SamplingMode::Stratified,
            proportions: vec![1.0],
            seeds: Vec::new(),
            out: PathBuf::from("runs/default"),
            sam_dataset: None,
            no_stance_share: None,
            split_seed: 0,
            split_train: SplitRatios::STANDARD.train,
            split_dev: SplitRatios::STANDARD.dev,
            split_test: SplitRatios::STANDARD.test,
            backbone_seed: 0,
            hidden_size: 32,
            layers: 2,
            heads: 2,
            ffn_size: 64,
            init_std: 0.02,
            max_len: DEFAULT_MAX_LEN,
            reduction_factor: DEFAULT_REDUCTION_FACTOR,
            learning_rate: None,
            epochs: None,
            batch_size: base.batch_size,
            warmup_fraction: base.warmup_fraction,
            lm_loss_weight: base.lm_loss_weight,
            weight_decay: base.weight_decay,
            max_grad_norm: base.max_grad_norm,
            best_epoch_selection: false,
            sam_learning_rate: None,
            sam_epochs: None,
        }
    }
}

/// Command-line values that replace those of the configuration file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub persons: Option<Persons>,
    #[arg(long, value_enum)]
    pub labels: Option<Labels>,
    /// ft, ft_sam, adapter, adapter_sam, pet_full, adapter_pet, adapter_sam_pet
    #[arg(long)]
    pub variant: Option<Variant>,
    /// naive or elaborate
    #[arg(long)]
    pub pvp: Option<String>,
    /// Comma-separated, or `standard` for the eight-point grid.
    #[arg(long)]
    pub proportions: Option<String>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SamplingMode>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

fn parse_mode(s: &str) -> std::result::Result<SamplingMode, String> {
    match s {
        "stratified" => Ok(SamplingMode::Stratified),
        "tfs" => Ok(SamplingMode::Tfs),
        _ => Err(format!("unknown mode `{s}` (stratified|tfs)")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| anyhow::anyhow!("`{x}`: {e}")))
        .collect()
}

impl ExperimentSpec {
    /// TOML, or the JSON spec written by `prepare`. Relative paths in a TOML
    /// file are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let mut spec: ExperimentSpec = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut spec.dataset);
        rebase(&mut spec.out);
        spec.person_list.as_mut().map(rebase);
        spec.sam_dataset.as_mut().map(rebase);
        Ok(spec)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.persons {
            self.persons = v;
        }
        if let Some(v) = o.labels {
            self.labels = v;
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(v) = &o.pvp {
            self.pvp = v.clone();
        }
        if let Some(v) = &o.proportions {
            self.proportions = if v == "standard" {
                STANDARD_PROPORTIONS.to_vec()
            } else {
                parse_list(v)?
            };
        }
        if let Some(v) = o.mode {
            self.mode = v;
        }
        if let Some(v) = &o.seeds {
            self.seeds = parse_list(v)?;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.dataset {
            self.dataset = v.clone();
        }
        if o.epochs.is_some() {
            self.epochs = o.epochs;
        }
        if o.learning_rate.is_some() {
            self.learning_rate = o.learning_rate;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.proportions.is_empty() {
            bail!("no proportions given");
        }
        if let Some(p) = self.proportions.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            bail!("proportion {p} outside (0, 1]");
        }
        self.preset()?;
        self.split_ratios()?;
        if self.persons == Persons::Shuffled && self.person_list.is_none() {
            bail!("persons = shuffled needs a person_list");
        }
        if self.variant.near_domain() && self.sam_dataset.is_none() {
            bail!("variant {} needs a sam_dataset", self.variant);
        }
        self.train_config(0).validate()?;
        self.near_domain_config(0).validate()?;
        Ok(())
    }

    pub fn preset(&self) -> Result<PvpPreset> {
        Ok(PvpPreset::parse(&self.pvp)?)
    }

    pub fn split_ratios(&self) -> Result<SplitRatios> {
        Ok(SplitRatios::new(self.split_train, self.split_dev, self.split_test)?)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.mode.default_repetitions() as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::defaults_for(self.variant, seed);
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size,
            warmup_fraction: self.warmup_fraction,
            best_epoch_selection: self.best_epoch_selection,
            lm_loss_weight: self.lm_loss_weight,
            weight_decay: self.weight_decay,
            max_grad_norm: self.max_grad_norm,
            ..d
        }
    }

    pub fn near_domain_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::near_domain_defaults(self.variant, seed);
        TrainConfig {
            learning_rate: self.sam_learning_rate.unwrap_or(d.learning_rate),
            epochs: self.sam_epochs.unwrap_or(d.epochs),
            ..self.train_config(seed)
        }
    }

    pub fn prepared_dir(&self) -> PathBuf {
        self.out.join("prepared")
    }

    pub fn cell_dir(&self, proportion: f64, seed: u64) -> PathBuf {
        self.out
            .join("cells")
            .join(self.variant.as_str())
            .join(self.mode.as_str())
            .join(format!("p{proportion}"))
            .join(format!("s{seed}"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
