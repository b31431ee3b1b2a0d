//! Interfaces to the two pretrained models the method relies on: a
//! vision-text similarity scorer and a causal language model that accepts a
//! tunable prefix. Real checkpoints plug in behind these traits; the
//! [`mock`] module provides small deterministic stand-ins.

pub mod mock;
mod vocab;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{softmax, Matrix};

pub use vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub model_id: String,
    /// Embedding dimension shared by text and frame embeddings.
    pub dim: usize,
    /// Text inputs longer than this many tokens are truncated.
    pub max_text_tokens: usize,
    /// Multiplier applied to cosine similarities before the temperature, as
    /// in CLIP's similarity head (`exp(logit_scale)`, 100 for released CLIP).
    pub logit_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub model_id: String,
    pub vocab_size: usize,
    /// Token-embedding width.
    pub dim: usize,
    /// Number of transformer layers that receive soft-prompt key/values.
    pub layers: usize,
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::InvalidParameter {
                name: "vocab_size",
                value: self.vocab_size as f64,
            });
        }
        if self.dim == 0 || self.layers == 0 {
            return Err(Error::invalid_arg("language model dim and layers must be positive"));
        }
        Ok(())
    }
}

/// Vision-text alignment model (CLIP-like).
pub trait TextImageScorer {
    fn config(&self) -> &ScorerConfig;

    /// Unit-norm text embedding. Fails on text with no tokens.
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;

    /// Per-frame embeddings with unit rows.
    fn embed_frames(&self, raw: &Matrix) -> Result<Matrix>;
}

/// Frozen causal language model conditioned on an optional prefix.
pub trait LanguageModel {
    fn config(&self) -> &LmConfig;

    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, tokens: &[TokenId]) -> String;

    /// Sentence terminator.
    fn period(&self) -> TokenId;

    /// Input embedding of a vocabulary token (used for hard-prompt slots).
    fn token_embedding(&self, id: TokenId) -> Result<Vec<f64>>;

    /// Next-token logits given the prefix and the visible token context.
    fn next_token_logits(&self, prefix: Option<&PrefixEmbeddings>, tokens: &[TokenId]) -> Result<Vec<f64>>;

    /// Vector-Jacobian product of the logits with respect to the trainable
    /// prefix parts (soft prompt and projected video tokens).
    fn logits_backward(
        &self,
        prefix: &PrefixEmbeddings,
        tokens: &[TokenId],
        d_logits: &[f64],
    ) -> Result<PrefixGrad>;

    fn next_token_distribution(
        &self,
        prefix: Option<&PrefixEmbeddings>,
        tokens: &[TokenId],
    ) -> Result<TokenDistribution> {
        let logits = self.next_token_logits(prefix, tokens)?;
        Ok(TokenDistribution(softmax(&logits)))
    }
}

pub(crate) fn check_tokens(tokens: &[TokenId], vocab_size: usize) -> Result<()> {
    match tokens.iter().find(|&&t| t >= vocab_size) {
        Some(t) => Err(Error::invalid_arg(alloc::format!(
            "token id {t} out of range for vocabulary of {vocab_size}"
        ))),
        None => Ok(()),
    }
}

/// Probability distribution over the language-model vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid_arg("empty distribution"));
        }
        if let Some(&p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidParameter {
                name: "probability",
                value: p,
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter {
                name: "probability mass",
                value: total,
            });
        }
        Ok(TokenDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Ids of the `k` most probable tokens, ties broken by ascending id.
pub fn top_k_candidates(dist: &TokenDistribution, k: usize) -> Result<Vec<TokenId>> {
    if k == 0 || k > dist.len() {
        return Err(Error::invalid_arg(alloc::format!(
            "k = {k} outside 1..={}",
            dist.len()
        )));
    }
    let p = dist.probs();
    let mut ids: Vec<TokenId> = (0..p.len()).collect();
    ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    ids.truncate(k);
    Ok(ids)
}

/// Soft-prompt key/value tensors, laid out `[layer][slot][key|value][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPrompt {
    pub layers: usize,
    pub slots: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SoftPrompt {
    pub fn zeros(layers: usize, slots: usize, dim: usize) -> Self {
        SoftPrompt {
            layers,
            slots,
            dim,
            data: vec![0.0; layers * slots * 2 * dim],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Offset of `[layer][slot][kv][0]`.
    pub fn offset(&self, layer: usize, slot: usize, kv: usize) -> usize {
        ((layer * self.slots + slot) * 2 + kv) * self.dim
    }

    pub fn key(&self, layer: usize, slot: usize) -> &[f64] {
        let o = self.offset(layer, slot, 0);
        &self.data[o..o + self.dim]
    }

    pub fn value(&self, layer: usize, slot: usize) -> &[f64] {
        let o = self.offset(layer, slot, 1);
        &self.data[o..o + self.dim]
    }
}

/// The assembled prefix: `[soft prompt] ++ [projected video tokens] ++ [hard prompt]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixEmbeddings {
    pub soft: SoftPrompt,
    /// One row per projected video token.
    pub projected: Matrix,
    pub hard_tokens: Vec<TokenId>,
    /// One row per hard-prompt token.
    pub hard: Matrix,
}

impl PrefixEmbeddings {
    /// Total number of prefix positions.
    pub fn len(&self) -> usize {
        self.soft.slots + self.projected.rows() + self.hard.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradient with respect to the trainable parts of a [`PrefixEmbeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixGrad {
    pub soft: Vec<f64>,
    pub projected: Matrix,
}
