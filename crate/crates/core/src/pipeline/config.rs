use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{KmfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Every seen class trains; no validation classes.
    I,
    /// Seen classes are divided into training and validation classes.
    II,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub train: usize,
    pub val: usize,
    pub unseen: usize,
    /// Fraction of unseen-class nodes held out as validation nodes (mode I).
    pub unseen_val_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::I,
            train: 4,
            val: 0,
            unseen: 2,
            unseen_val_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricConfig {
    pub d_tau: f64,
    pub r_tau: f64,
    /// Use `max(|m_p − m_l| − τ, 0)` instead of `| |m_p − m_l| − τ |`.
    pub hinge: bool,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            d_tau: 0.3,
            r_tau: 0.3,
            hinge: false,
        }
    }
}

/// Component switches; turning one off yields the matching ablation variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Off: a class is described by its label embedding alone (KMF-K).
    pub use_kg_csd: bool,
    /// Off: initial node states are mean content embeddings (KMF-T).
    pub use_facets: bool,
    /// Off: λ₁ = 0 (KMF-C).
    pub use_contrastive: bool,
    /// Off: λ₂ = 0 (KMF-G).
    pub use_geometric: bool,
    /// Off: every attenuation weight is 1 (KMF-a).
    pub use_attenuation: bool,
    /// Off: size-ratio facet coefficients (KMF-t).
    pub use_temperature: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_kg_csd: true,
            use_facets: true,
            use_contrastive: true,
            use_geometric: true,
            use_attenuation: true,
            use_temperature: true,
        }
    }
}

impl Ablation {
    /// Configuration for a named variant: `KMF`, `KMF-K`, `KMF-T`, `KMF-C`,
    /// `KMF-G`, `KMF-a` or `KMF-t`.
    pub fn variant(name: &str) -> Result<Self> {
        let mut a = Self::default();
        match name {
            "KMF" => {}
            "KMF-K" => a.use_kg_csd = false,
            "KMF-T" => a.use_facets = false,
            "KMF-C" => a.use_contrastive = false,
            "KMF-G" => a.use_geometric = false,
            "KMF-a" => a.use_attenuation = false,
            "KMF-t" => a.use_temperature = false,
            other => return Err(KmfError::Config(format!("unknown variant '{other}'"))),
        }
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Topic neighborhood radius R.
    pub radius: usize,
    /// Percentage P kept per hop ring.
    pub percent: f64,
    /// Attenuation α.
    pub alpha: f64,
    /// Composition temperature τ.
    pub temperature: f64,
    pub layers: usize,
    /// Expected embedding dimension; `None` accepts the table's.
    pub dim: Option<usize>,
    pub neighbor_cap: usize,
    /// Negatives per training node, Q.
    pub negatives: usize,
    pub p_m: f64,
    pub p_tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Tokens must occur more than this many times in the corpus.
    pub min_count: usize,
    /// Stopword file; the built-in list when absent.
    pub stopwords: Option<String>,
    pub geometric: GeometricConfig,
    pub ablation: Ablation,
    pub split: SplitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            percent: 25.0,
            alpha: 0.8,
            temperature: 10.0,
            layers: 2,
            dim: None,
            neighbor_cap: 10,
            negatives: 5,
            p_m: 0.3,
            p_tau: 0.5,
            lambda1: 0.3,
            lambda2: 0.3,
            learning_rate: 0.001,
            epochs: 200,
            seed: 0,
            min_count: 20,
            stopwords: None,
            geometric: GeometricConfig::default(),
            ablation: Ablation::default(),
            split: SplitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| KmfError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KmfError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// λ₁ after the contrastive switch.
    pub fn effective_lambda1(&self) -> f64 {
        if self.ablation.use_contrastive {
            self.lambda1
        } else {
            0.0
        }
    }

    /// λ₂ after the geometric switch.
    pub fn effective_lambda2(&self) -> f64 {
        if self.ablation.use_geometric {
            self.lambda2
        } else {
            0.0
        }
    }

    /// α after the attenuation switch.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablation.use_attenuation {
            self.alpha
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(KmfError::Config(m));
        if !(self.percent > 0.0 && self.percent <= 100.0) {
            return fail(format!("percent {} outside (0, 100]", self.percent));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return fail(format!("temperature {} must be positive", self.temperature));
        }
        if self.neighbor_cap == 0 {
            return fail("neighbor_cap must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_m) || !(0.0..=1.0).contains(&self.p_tau) {
            return fail("mask probabilities must lie in [0, 1]".into());
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return fail("trade-off weights must be non-negative".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.dim == Some(0) {
            return fail("dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.split.unseen_val_fraction) {
            return fail("unseen_val_fraction outside [0, 1)".into());
        }
        if self.split.mode == SplitMode::I && self.split.val != 0 {
            return fail("split mode I takes no validation classes".into());
        }
        if self.split.mode == SplitMode::II && self.split.val == 0 {
            return fail("split mode II needs at least one validation class".into());
        }
        Ok(())
    }
}
