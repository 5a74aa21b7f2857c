use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ft,
    FtSam,
    Adapter,
    AdapterSam,
    PetFull,
    AdapterPet,
    AdapterSamPet,
}

/// How a unit becomes model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Standard,
    Sam,
    Pet,
    SamPet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Standard,
    Pet,
    LanguageModel,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Ft,
        Variant::FtSam,
        Variant::Adapter,
        Variant::AdapterSam,
        Variant::PetFull,
        Variant::AdapterPet,
        Variant::AdapterSamPet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ft => "ft",
            Variant::FtSam => "ft_sam",
            Variant::Adapter => "adapter",
            Variant::AdapterSam => "adapter_sam",
            Variant::PetFull => "pet_full",
            Variant::AdapterPet => "adapter_pet",
            Variant::AdapterSamPet => "adapter_sam_pet",
        }
    }

    pub fn uses_adapter(self) -> bool {
        matches!(
            self,
            Variant::Adapter | Variant::AdapterSam | Variant::AdapterPet | Variant::AdapterSamPet
        )
    }

    pub fn near_domain(self) -> bool {
        matches!(self, Variant::FtSam | Variant::AdapterSam | Variant::AdapterSamPet)
    }

    pub fn input_kind(self) -> InputKind {
        match self {
            Variant::Ft | Variant::Adapter => InputKind::Standard,
            Variant::FtSam | Variant::AdapterSam => InputKind::Sam,
            Variant::PetFull | Variant::AdapterPet => InputKind::Pet,
            Variant::AdapterSamPet => InputKind::SamPet,
        }
    }

    pub fn head_kind(self) -> HeadKind {
        match self {
            Variant::PetFull => HeadKind::LanguageModel,
            Variant::AdapterPet | Variant::AdapterSamPet => HeadKind::Pet,
            _ => HeadKind::Standard,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub best_epoch_selection: bool,
    /// Weight of the masked-LM term; used by `pet_full` only.
    pub lm_loss_weight: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    /// Share of maskable tokens hidden in each masked-LM example.
    pub mlm_probability: f64,
}

impl TrainConfig {
    pub fn defaults_for(variant: Variant, seed: u64) -> Self {
        let (learning_rate, epochs) = match variant {
            Variant::Ft | Variant::FtSam => (5e-6, 30),
            Variant::PetFull => (1e-5, 10),
            _ => (5e-5, 30),
        };
        TrainConfig {
            variant,
            learning_rate,
            epochs,
            batch_size: 16,
            warmup_fraction: 0.1,
            seed,
            best_epoch_selection: false,
            lm_loss_weight: 1e-4,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
            mlm_probability: 0.15,
        }
    }

    /// Near-domain pretraining on topic-prefixed stance data.
    pub fn near_domain_defaults(variant: Variant, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 5e-6,
            epochs: 2,
            ..TrainConfig::defaults_for(variant, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.lm_loss_weight) {
            return bad("lm_loss_weight must lie in [0, 1]");
        }
        if !(self.mlm_probability > 0.0 && self.mlm_probability <= 1.0) {
            return bad("mlm_probability must lie in (0, 1]");
        }
        if !(self.max_grad_norm > 0.0) || self.weight_decay < 0.0 {
            return bad("max_grad_norm must be positive and weight_decay non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        assert_eq!(TrainConfig::defaults_for(Variant::Ft, 0).learning_rate, 5e-6);
        assert_eq!(TrainConfig::defaults_for(Variant::AdapterPet, 0).learning_rate, 5e-5);
        let pet = TrainConfig::defaults_for(Variant::PetFull, 0);
        assert_eq!((pet.learning_rate, pet.epochs), (1e-5, 10));
        let nd = TrainConfig::near_domain_defaults(Variant::FtSam, 0);
        assert_eq!((nd.learning_rate, nd.epochs), (5e-6, 2));
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            TrainConfig::defaults_for(v, 1).validate().unwrap();
        }
    }
}
