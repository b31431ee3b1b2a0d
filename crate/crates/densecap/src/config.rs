//! Flat TOML run configuration.
//!
//! Every key is optional and falls back to the chosen profile's defaults,
//! except the seed, which must come from the file or the command line. The
//! nested run configuration is flattened: loss weights become `lambda_*`,
//! optimizer fields keep their names (`adam_eps` for the epsilon), the
//! sharpness schedule becomes `sharpness_initial`/`sharpness_increment` and
//! the center initialization `center_init_from`/`center_init_to`.

use std::path::Path;

use densecap_core::generation::HardPromptPool;
use densecap_core::optimizer::{CenterInit, DatasetProfile, RunConfig};
use densecap_core::temporal::SharpnessSchedule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_io::read_text;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub seed: Option<u64>,
    pub num_moments: Option<usize>,
    pub outer_iterations: Option<usize>,
    pub lambda_vision: Option<f64>,
    pub lambda_language: Option<f64>,
    pub lambda_pt_iou: Option<f64>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub weight_decay: Option<f64>,
    pub adam_eps: Option<f64>,
    pub sharpness_initial: Option<f64>,
    pub sharpness_increment: Option<f64>,
    pub temperature: Option<f64>,
    pub candidate_count: Option<usize>,
    pub soft_prompt_length: Option<usize>,
    pub projected_tokens: Option<usize>,
    pub max_caption_tokens: Option<usize>,
    pub center_init_from: Option<f64>,
    pub center_init_to: Option<f64>,
    pub width_logit: Option<f64>,
    pub max_width_logit: Option<f64>,
    pub prefix_init_std: Option<f64>,
    pub hard_prompts: Option<Vec<String>>,
    /// Scorer id; defaults to the scorer recorded in each feature cache.
    pub scorer: Option<String>,
    /// Language-model id; defaults to the mock model paired with the scorer.
    pub language_model: Option<String>,
}

/// A run configuration plus the backend ids chosen in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub scorer: Option<String>,
    pub language_model: Option<String>,
}

impl FileConfig {
    pub fn parse(origin: &Path, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    /// Applies the file over the profile defaults. `seed` from the command
    /// line wins over the file.
    pub fn resolve(&self, seed: Option<u64>) -> Result<ResolvedConfig> {
        let profile_name = self.profile.as_deref().unwrap_or("activitynet");
        let mut profile = DatasetProfile::by_name(profile_name)
            .ok_or_else(|| Error::Config(format!("unknown profile {profile_name:?}")))?;
        let seed = seed
            .or(self.seed)
            .ok_or_else(|| Error::Config("a seed is required (config key `seed` or --seed)".into()))?;
        if self.center_init_from.is_some() || self.center_init_to.is_some() {
            let (from, to) = match profile.center_init {
                CenterInit::Uniform { from, to } => (from, to),
                CenterInit::Constant(c) => (c, c),
            };
            profile.center_init = CenterInit::Uniform {
                from: self.center_init_from.unwrap_or(from),
                to: self.center_init_to.unwrap_or(to),
            };
        }
        if let Some(w) = self.width_logit {
            profile.width_logit = w;
        }
        if self.max_width_logit.is_some() {
            profile.max_width_logit = self.max_width_logit;
        }
        let mut run = RunConfig::for_profile(profile, seed);
        macro_rules! set {
            ($($key:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$key.clone() { run.$($field).+ = v; })*
            };
        }
        set! {
            num_moments => num_moments,
            outer_iterations => outer_iterations,
            lambda_vision => weights.vision,
            lambda_language => weights.language,
            lambda_pt_iou => weights.pt_iou,
            learning_rate => optimizer.learning_rate,
            beta1 => optimizer.beta1,
            beta2 => optimizer.beta2,
            weight_decay => optimizer.weight_decay,
            adam_eps => optimizer.eps,
            temperature => temperature,
            candidate_count => candidate_count,
            soft_prompt_length => soft_prompt_length,
            projected_tokens => projected_tokens,
            max_caption_tokens => max_caption_tokens,
            prefix_init_std => prefix_init_std,
        }
        run.sharpness = SharpnessSchedule::new(
            self.sharpness_initial.unwrap_or(run.sharpness.initial),
            self.sharpness_increment.unwrap_or(run.sharpness.increment),
        )?;
        if let Some(p) = &self.hard_prompts {
            run.hard_prompts = HardPromptPool::new(p.clone())?;
        }
        run.validate()?;
        Ok(ResolvedConfig {
            run,
            scorer: self.scorer.clone(),
            language_model: self.language_model.clone(),
        })
    }

    /// Every field of `run`, in file form.
    pub fn from_run(run: &RunConfig, scorer: Option<&str>, language_model: Option<&str>) -> Self {
        let (from, to) = match run.profile.center_init {
            CenterInit::Uniform { from, to } => (from, to),
            CenterInit::Constant(c) => (c, c),
        };
        FileConfig {
            profile: Some(run.profile.name.clone()),
            seed: Some(run.seed),
            num_moments: Some(run.num_moments),
            outer_iterations: Some(run.outer_iterations),
            lambda_vision: Some(run.weights.vision),
            lambda_language: Some(run.weights.language),
            lambda_pt_iou: Some(run.weights.pt_iou),
            learning_rate: Some(run.optimizer.learning_rate),
            beta1: Some(run.optimizer.beta1),
            beta2: Some(run.optimizer.beta2),
            weight_decay: Some(run.optimizer.weight_decay),
            adam_eps: Some(run.optimizer.eps),
            sharpness_initial: Some(run.sharpness.initial),
            sharpness_increment: Some(run.sharpness.increment),
            temperature: Some(run.temperature),
            candidate_count: Some(run.candidate_count),
            soft_prompt_length: Some(run.soft_prompt_length),
            projected_tokens: Some(run.projected_tokens),
            max_caption_tokens: Some(run.max_caption_tokens),
            center_init_from: Some(from),
            center_init_to: Some(to),
            width_logit: Some(run.profile.width_logit),
            max_width_logit: run.profile.max_width_logit,
            prefix_init_std: Some(run.prefix_init_std),
            hard_prompts: Some(run.hard_prompts.prompts.clone()),
            scorer: scorer.map(str::to_string),
            language_model: language_model.map(str::to_string),
        }
    }
}

/// Full TOML dump of a run configuration.
pub fn dump_config(run: &RunConfig, scorer: Option<&str>, language_model: Option<&str>) -> String {
    toml::to_string(&FileConfig::from_run(run, scorer, language_model)).expect("flat config serializes")
}

/// Hex SHA-256 of [`dump_config`].
pub fn config_hash(run: &RunConfig, scorer: Option<&str>, language_model: Option<&str>) -> String {
    let digest = Sha256::digest(dump_config(run, scorer, language_model).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
