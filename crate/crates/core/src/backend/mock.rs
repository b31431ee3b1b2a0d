//! Deterministic mock backends.
//!
//! A [`MockWorld`] fixes a 64-word vocabulary split into syntactic roles and
//! four visual clusters. From it come:
//!
//! - [`MockScorer`]: each word owns a direction in a 16-dim space. Cluster
//!   words sit near their cluster's basis axis `e_c`; all other words live in
//!   the orthogonal complement. A sentence embeds as the normalized sum of its
//!   word directions.
//! - [`MockLm`]: a bigram table shaped by word roles plus seeded noise, with
//!   an additive prefix bias `U · mean(trainable prefix slots)`. The first 16
//!   columns of `U` are scaled word directions, so the prefix can lift whole
//!   visual clusters at once the way a real model's embedding geometry would.
//!
//! Both are pure functions of the world seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    check_tokens, LanguageModel, LmConfig, PrefixEmbeddings, PrefixGrad, ScorerConfig, TextImageScorer,
    TokenId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::math::{dot, normalized, Matrix};

/// Embedding width of the mock scorer.
pub const SCORER_DIM: usize = 16;
/// Number of planted visual clusters.
pub const CLUSTERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordRole {
    Special,
    PromptNoun,
    PromptVerb,
    Determiner,
    Connective,
    Cluster(usize),
    Filler,
    Period,
}

const SPECIALS: [&str; 2] = ["<bos>", "<unk>"];
const PROMPT_NOUNS: [&str; 4] = ["video", "photo", "picture", "image"];
const PROMPT_VERBS: [&str; 3] = ["showing", "shows", "of"];
const DETERMINERS: [&str; 5] = ["a", "the", "an", "some", "two"];
const CONNECTIVES: [&str; 8] = ["and", "with", "in", "on", "at", "near", "while", "then"];
const CLUSTER_WORDS: [[&str; 6]; CLUSTERS] = [
    ["red", "square", "box", "block", "crimson", "cube"],
    ["blue", "circle", "ball", "sphere", "ring", "disc"],
    ["green", "triangle", "tree", "leaf", "grass", "pyramid"],
    ["gray", "wall", "floor", "room", "shadow", "stone"],
];
const FILLERS: [&str; 17] = [
    "person", "man", "woman", "people", "hand", "table", "thing", "scene", "object", "moving", "standing",
    "playing", "holding", "large", "small", "bright", "dark",
];

/// Vocabulary, word roles and seed shared by the mock scorer and mock LM.
#[derive(Debug, Clone)]
pub struct MockWorld {
    vocab: Vocabulary,
    roles: Vec<WordRole>,
    seed: u64,
}

impl MockWorld {
    pub fn new(seed: u64) -> Self {
        let mut words: Vec<&str> = Vec::new();
        let mut roles = Vec::new();
        let mut push = |ws: &[&'static str], role: WordRole| {
            for w in ws {
                words.push(w);
                roles.push(role);
            }
        };
        push(&SPECIALS, WordRole::Special);
        push(&["."], WordRole::Period);
        push(&PROMPT_NOUNS, WordRole::PromptNoun);
        push(&PROMPT_VERBS, WordRole::PromptVerb);
        push(&DETERMINERS, WordRole::Determiner);
        push(&CONNECTIVES, WordRole::Connective);
        for (c, ws) in CLUSTER_WORDS.iter().enumerate() {
            push(ws, WordRole::Cluster(c));
        }
        push(&FILLERS, WordRole::Filler);
        let vocab = Vocabulary::new(&words, "<unk>").expect("static vocabulary is valid");
        MockWorld { vocab, roles, seed }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn role(&self, id: TokenId) -> WordRole {
        self.roles[id]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Words that belong to visual cluster `c`.
    pub fn cluster_words(&self, c: usize) -> Vec<&'static str> {
        CLUSTER_WORDS.get(c).map(|ws| ws.to_vec()).unwrap_or_default()
    }

    /// Unit axis of cluster `c` in scorer space.
    pub fn cluster_direction(&self, c: usize) -> Vec<f64> {
        let mut d = vec![0.0; SCORER_DIM];
        d[c] = 1.0;
        d
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Word directions, one unit row per vocabulary entry.
    fn word_directions(&self) -> Matrix {
        let mut rng = self.rng(1);
        let mut m = Matrix::zeros(self.vocab.len(), SCORER_DIM);
        for id in 0..self.vocab.len() {
            let mut d = vec![0.0; SCORER_DIM];
            let noise_scale = match self.roles[id] {
                WordRole::Cluster(c) => {
                    d[c] = 1.0;
                    0.3
                }
                _ => 1.0,
            };
            let mut g: Vec<f64> = (CLUSTERS..SCORER_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
            let gn = normalized(&g).unwrap_or_else(|| {
                g.iter_mut().for_each(|x| *x = 1.0);
                normalized(&g).unwrap()
            });
            for (slot, v) in d[CLUSTERS..].iter_mut().zip(&gn) {
                *slot += noise_scale * v;
            }
            m.row_mut(id).copy_from_slice(&normalized(&d).unwrap());
        }
        m
    }

    pub fn scorer(&self) -> MockScorer {
        MockScorer {
            config: ScorerConfig {
                model_id: format!("mock-scorer:{}", self.seed),
                dim: SCORER_DIM,
                max_text_tokens: 77,
                logit_scale: 100.0,
            },
            vocab: self.vocab.clone(),
            directions: self.word_directions(),
        }
    }

    pub fn language_model(&self) -> MockLm {
        MockLm::build(self, MockLmShape::default())
    }

    /// Frame embedding near cluster `c`: `normalize(e_c + σ·noise)`.
    pub fn sample_frame<R: Rng>(&self, cluster: usize, noise: f64, rng: &mut R) -> Vec<f64> {
        let mut v = self.cluster_direction(cluster);
        for x in v.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *x += noise * n;
        }
        normalized(&v).expect("non-degenerate frame")
    }
}

/// Mock vision-text scorer.
#[derive(Debug, Clone)]
pub struct MockScorer {
    config: ScorerConfig,
    vocab: Vocabulary,
    directions: Matrix,
}

impl MockScorer {
    pub fn word_direction(&self, word: &str) -> Option<&[f64]> {
        self.vocab.id(word).map(|id| self.directions.row(id))
    }
}

impl TextImageScorer for MockScorer {
    fn config(&self) -> &ScorerConfig {
        &self.config
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let mut tokens = self.vocab.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid_arg("cannot embed empty text"));
        }
        tokens.truncate(self.config.max_text_tokens);
        let mut sum = vec![0.0; SCORER_DIM];
        for t in tokens {
            for (s, d) in sum.iter_mut().zip(self.directions.row(t)) {
                *s += d;
            }
        }
        // Opposing directions can cancel exactly; fall back to the first word.
        Ok(normalized(&sum).unwrap_or_else(|| self.directions.row(self.vocab.tokenize(text)[0]).to_vec()))
    }

    fn embed_frames(&self, raw: &Matrix) -> Result<Matrix> {
        if raw.cols() != self.config.dim {
            return Err(Error::Shape {
                what: "frame feature dimension",
                expected: self.config.dim,
                actual: raw.cols(),
            });
        }
        let mut out = raw.clone();
        for i in 0..out.rows() {
            let row = normalized(out.row(i)).ok_or_else(|| Error::invalid_arg(alloc::format!("frame {i} has zero norm")))?;
            out.row_mut(i).copy_from_slice(&row);
        }
        Ok(out)
    }
}

/// Size knobs of the mock language model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockLmShape {
    pub dim: usize,
    pub layers: usize,
    /// Scale of the word-direction block of the output map `U`.
    pub semantic_gain: f64,
    /// Standard deviation of the remaining columns of `U`.
    pub noise_gain: f64,
    /// Standard deviation of the bigram noise.
    pub bigram_noise: f64,
}

impl Default for MockLmShape {
    fn default() -> Self {
        MockLmShape {
            dim: 32,
            layers: 1,
            semantic_gain: 3.0,
            noise_gain: 0.0,
            bigram_noise: 0.5,
        }
    }
}

/// Bigram language model with an additive prefix bias.
///
/// `logits = B[last] + U · m`, where `B[last]` is the bigram row of the last
/// context token (`<bos>` for an empty context) and `m` is the mean of the
/// trainable prefix slots. A soft-prompt slot contributes the average of its
/// key and value vectors over all layers; hard-prompt slots are not part of
/// `m` since the hard prompt already reaches the model through the token
/// context.
#[derive(Debug, Clone)]
pub struct MockLm {
    config: LmConfig,
    vocab: Vocabulary,
    bigram: Matrix,
    output: Matrix,
    embeddings: Matrix,
    bos: TokenId,
    period: TokenId,
}

impl MockLm {
    pub fn build(world: &MockWorld, shape: MockLmShape) -> Self {
        let v = world.vocab.len();
        let mut rng = world.rng(2);

        let mut bigram = Matrix::zeros(v, v);
        for from in 0..v {
            for to in 0..v {
                let base = bigram_prior(world.roles[from], world.roles[to]);
                let n: f64 = StandardNormal.sample(&mut rng);
                bigram.row_mut(from)[to] = base + shape.bigram_noise * n;
            }
        }

        let dirs = world.word_directions();
        let mut output = Matrix::zeros(v, shape.dim);
        for id in 0..v {
            let row = output.row_mut(id);
            for (j, x) in row.iter_mut().enumerate() {
                *x = if j < SCORER_DIM {
                    shape.semantic_gain * dirs.get(id, j)
                } else {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    shape.noise_gain * n
                };
            }
        }

        let mut embeddings = Matrix::zeros(v, shape.dim);
        let scale = 1.0 / libm::sqrt(shape.dim as f64);
        for x in embeddings.as_mut_slice() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x = scale * n;
        }

        MockLm {
            config: LmConfig {
                model_id: format!("mock-lm:{}", world.seed),
                vocab_size: v,
                dim: shape.dim,
                layers: shape.layers,
            },
            bos: world.vocab.id("<bos>").unwrap(),
            period: world.vocab.id(".").unwrap(),
            vocab: world.vocab.clone(),
            bigram,
            output,
            embeddings,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Raw bigram logits following `token`.
    pub fn bigram_row(&self, token: TokenId) -> &[f64] {
        self.bigram.row(token)
    }

    /// The output map `U` (vocabulary × dim).
    pub fn output_map(&self) -> &Matrix {
        &self.output
    }

    /// Mean of the trainable prefix slots.
    pub fn prefix_mean(&self, prefix: &PrefixEmbeddings) -> Result<Vec<f64>> {
        let d = self.config.dim;
        if prefix.soft.dim != d || (prefix.projected.rows() > 0 && prefix.projected.cols() != d) {
            return Err(Error::Shape {
                what: "prefix embedding width",
                expected: d,
                actual: if prefix.soft.dim != d { prefix.soft.dim } else { prefix.projected.cols() },
            });
        }
        let count = prefix.soft.slots + prefix.projected.rows();
        let mut mean = vec![0.0; d];
        if count == 0 {
            return Ok(mean);
        }
        let kv_scale = 1.0 / (2.0 * prefix.soft.layers as f64);
        for layer in 0..prefix.soft.layers {
            for slot in 0..prefix.soft.slots {
                for (m, (k, v)) in mean
                    .iter_mut()
                    .zip(prefix.soft.key(layer, slot).iter().zip(prefix.soft.value(layer, slot)))
                {
                    *m += kv_scale * (k + v);
                }
            }
        }
        for row in prefix.projected.iter_rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        Ok(mean)
    }

    fn last(&self, tokens: &[TokenId]) -> TokenId {
        tokens.last().copied().unwrap_or(self.bos)
    }
}

fn bigram_prior(from: WordRole, to: WordRole) -> f64 {
    use WordRole::*;
    if to == Special {
        return -8.0;
    }
    match (from, to) {
        (Special | Period, PromptNoun) => 2.0,
        (Special | Period, _) => -3.0,
        (PromptNoun, PromptVerb) => 3.0,
        (PromptNoun, _) => -2.0,
        (PromptVerb, Determiner) => 3.0,
        (PromptVerb, Cluster(_)) => 1.0,
        (PromptVerb, Filler) => 0.5,
        (PromptVerb, _) => -2.0,
        (Determiner, Cluster(_) | Filler) => 2.0,
        (Determiner, _) => -3.0,
        (Cluster(_), Period) => 1.5,
        (Cluster(_), Cluster(_) | Connective) => 1.0,
        (Cluster(_), Filler) => 0.0,
        (Cluster(_), _) => -1.5,
        (Connective, Determiner) => 2.0,
        (Connective, Cluster(_) | Filler) => 1.0,
        (Connective, _) => -2.0,
        (Filler, Period) => 1.5,
        (Filler, Connective) => 1.0,
        (Filler, Cluster(_)) => 0.5,
        (Filler, Filler) => 0.0,
        (Filler, _) => -2.0,
    }
}

impl LanguageModel for MockLm {
    fn config(&self) -> &LmConfig {
        &self.config
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.vocab.tokenize(text)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        self.vocab.detokenize(tokens)
    }

    fn period(&self) -> TokenId {
        self.period
    }

    fn token_embedding(&self, id: TokenId) -> Result<Vec<f64>> {
        check_tokens(&[id], self.config.vocab_size)?;
        Ok(self.embeddings.row(id).to_vec())
    }

    fn next_token_logits(&self, prefix: Option<&PrefixEmbeddings>, tokens: &[TokenId]) -> Result<Vec<f64>> {
        check_tokens(tokens, self.config.vocab_size)?;
        let mut logits = self.bigram.row(self.last(tokens)).to_vec();
        if let Some(prefix) = prefix {
            let mean = self.prefix_mean(prefix)?;
            for (l, u) in logits.iter_mut().zip(self.output.iter_rows()) {
                *l += dot(u, &mean);
            }
        }
        Ok(logits)
    }

    fn logits_backward(&self, prefix: &PrefixEmbeddings, tokens: &[TokenId], d_logits: &[f64]) -> Result<PrefixGrad> {
        check_tokens(tokens, self.config.vocab_size)?;
        if d_logits.len() != self.config.vocab_size {
            return Err(Error::Shape {
                what: "logit gradient",
                expected: self.config.vocab_size,
                actual: d_logits.len(),
            });
        }
        let count = prefix.soft.slots + prefix.projected.rows();
        let mut soft = vec![0.0; prefix.soft.len()];
        let mut projected = Matrix::zeros(prefix.projected.rows(), prefix.projected.cols());
        if count == 0 {
            return Ok(PrefixGrad { soft, projected });
        }
        let d_mean: Vec<f64> = self.output.tr_mul_vec(d_logits).iter().map(|g| g / count as f64).collect();
        let kv_scale = 1.0 / (2.0 * prefix.soft.layers as f64);
        for chunk in soft.chunks_exact_mut(prefix.soft.dim.max(1)) {
            for (s, g) in chunk.iter_mut().zip(&d_mean) {
                *s = kv_scale * g;
            }
        }
        for r in 0..projected.rows() {
            projected.row_mut(r).copy_from_slice(&d_mean);
        }
        Ok(PrefixGrad { soft, projected })
    }
}
