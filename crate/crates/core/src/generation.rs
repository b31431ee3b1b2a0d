//! Caption generation for one moment: prefix assembly, the alignment score
//! over candidate continuations, the vision and language losses, and the
//! token-by-token decoding state.
//!
//! At every generation step the language model proposes its top candidate
//! tokens. Each candidate extends the caption so far into a candidate
//! sentence, which the vision-text scorer compares with the moment's pooled
//! embedding. The softmax of those cosines (the alignment distribution) is
//! the target the model's candidate distribution is pulled toward.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{
    top_k_candidates, LanguageModel, PrefixEmbeddings, SoftPrompt, TextImageScorer, TokenDistribution, TokenId,
};
use crate::error::{Error, Result};
use crate::math::{dot, norm, softmax, Matrix};
use crate::temporal::{
    aggregate_features, aggregate_features_backward, soft_mask_with_jacobian, FramePositions, MomentParams,
};

/// Probabilities below this are clamped before taking logarithms.
pub const LOG_EPS: f64 = 1e-12;

/// Default hard prompts; one is drawn for every new sentence.
pub const DEFAULT_HARD_PROMPTS: [&str; 12] = [
    "Video showing",
    "Video shows",
    "Video of",
    "Photo showing",
    "Photo shows",
    "Photo of",
    "Picture showing",
    "Picture shows",
    "Picture of",
    "Image showing",
    "Image shows",
    "Image of",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardPromptPool {
    pub prompts: Vec<String>,
}

impl Default for HardPromptPool {
    fn default() -> Self {
        HardPromptPool {
            prompts: DEFAULT_HARD_PROMPTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl HardPromptPool {
    pub fn new(prompts: Vec<String>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::invalid_arg("hard prompt pool is empty"));
        }
        Ok(HardPromptPool { prompts })
    }

    /// Uniform draw for sentence `moment` of outer iteration `iteration`.
    /// Each (seed, iteration, moment) triple has its own ChaCha stream, so the
    /// draw does not depend on how many draws happened before it.
    pub fn select(&self, seed: u64, iteration: usize, moment: usize) -> &str {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6861_7264);
        rng.set_stream(((iteration as u64) << 32) | moment as u64);
        &self.prompts[rng.random_range(0..self.prompts.len())]
    }
}

/// Trainable prefix parameters of one moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixParams {
    pub soft: SoftPrompt,
    /// Projection `W` from the pooled visual feature to `tokens · lm_dim`
    /// values, reshaped to `tokens` embeddings.
    pub projection: Matrix,
    pub projected_tokens: usize,
}

impl PrefixParams {
    pub fn zeros(layers: usize, soft_slots: usize, projected_tokens: usize, lm_dim: usize, visual_dim: usize) -> Self {
        PrefixParams {
            soft: SoftPrompt::zeros(layers, soft_slots, lm_dim),
            projection: Matrix::zeros(projected_tokens * lm_dim, visual_dim),
            projected_tokens,
        }
    }

    pub fn param_count(&self) -> usize {
        self.soft.len() + self.projection.as_slice().len()
    }
}

/// Concatenates soft prompt, projected video tokens and hard prompt.
pub fn build_prefix<L: LanguageModel + ?Sized>(
    params: &PrefixParams,
    pooled: &[f64],
    hard_tokens: &[TokenId],
    lm: &L,
) -> Result<PrefixEmbeddings> {
    let d = lm.config().dim;
    if params.projection.cols() != pooled.len() {
        return Err(Error::Shape {
            what: "pooled feature vs projection input",
            expected: params.projection.cols(),
            actual: pooled.len(),
        });
    }
    if params.projection.rows() != params.projected_tokens * d || params.soft.dim != d {
        return Err(Error::Shape {
            what: "prefix width vs language model",
            expected: params.projected_tokens * d,
            actual: params.projection.rows(),
        });
    }
    if let Some(x) = pooled.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "pooled feature",
            value: *x,
        });
    }
    let projected = Matrix::from_vec(params.projected_tokens, d, params.projection.mul_vec(pooled))?;
    let mut hard = Matrix::zeros(hard_tokens.len(), d);
    for (i, &t) in hard_tokens.iter().enumerate() {
        hard.row_mut(i).copy_from_slice(&lm.token_embedding(t)?);
    }
    Ok(PrefixEmbeddings {
        soft: params.soft.clone(),
        projected,
        hard_tokens: hard_tokens.to_vec(),
        hard,
    })
}

/// Softmax of `cos / τ`.
pub fn alignment_from_cosines(cosines: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if cosines.is_empty() {
        return Err(Error::invalid_arg("no candidates to align"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "temperature",
            value: temperature,
        });
    }
    let scaled: Vec<f64> = cosines.iter().map(|c| c / temperature).collect();
    Ok(softmax(&scaled))
}

/// Alignment distribution of candidate sentences against a unit moment
/// embedding. Cosines are multiplied by the scorer's logit scale first.
pub fn alignment_distribution<S: TextImageScorer + ?Sized>(
    candidates: &[String],
    moment_embedding: &[f64],
    scorer: &S,
    temperature: f64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::invalid_arg("no candidates to align"));
    }
    let cos = candidates
        .iter()
        .map(|s| scorer.embed_text(s).map(|t| dot(&t, moment_embedding)))
        .collect::<Result<Vec<_>>>()?;
    alignment_from_cosines(&cos, temperature / scorer.config().logit_scale)
}

fn clamped_ln(p: f64) -> f64 {
    libm::log(p.max(LOG_EPS))
}

/// `CE(a, q) = −Σ a_i log q_i` over a shared candidate support.
pub fn vision_loss(alignment: &[f64], candidate_probs: &[f64]) -> Result<f64> {
    if alignment.len() != candidate_probs.len() {
        return Err(Error::Shape {
            what: "alignment vs candidate distribution",
            expected: alignment.len(),
            actual: candidate_probs.len(),
        });
    }
    Ok(-alignment
        .iter()
        .zip(candidate_probs)
        .map(|(a, q)| a * clamped_ln(*q))
        .sum::<f64>())
}

/// `CE(q, q′) = −Σ q_v log q′_v`, with `q′` the unconditioned distribution.
pub fn language_loss(with_prefix: &TokenDistribution, without_prefix: &TokenDistribution) -> Result<f64> {
    if with_prefix.len() != without_prefix.len() {
        return Err(Error::Shape {
            what: "vocabulary of prefixed vs unprefixed distribution",
            expected: with_prefix.len(),
            actual: without_prefix.len(),
        });
    }
    Ok(-with_prefix
        .probs()
        .iter()
        .zip(without_prefix.probs())
        .map(|(q, r)| q * clamped_ln(*r))
        .sum::<f64>())
}

/// `q` restricted to `candidates` and renormalized.
pub fn restrict(q: &TokenDistribution, candidates: &[TokenId]) -> Vec<f64> {
    let picked: Vec<f64> = candidates.iter().map(|&t| q.probs()[t]).collect();
    let total: f64 = picked.iter().sum();
    picked.iter().map(|p| p / total).collect()
}

/// Everything about a generation step that stays fixed while the parameters
/// are updated: token context, candidate set and candidate embeddings, and
/// the unconditioned reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    /// Hard prompt followed by the tokens generated so far.
    pub context: Vec<TokenId>,
    pub candidates: Vec<TokenId>,
    pub candidate_sentences: Vec<String>,
    /// Unit text embedding of each candidate sentence, one row each.
    pub candidate_embeddings: Matrix,
    /// Distribution without prefix (`q′`).
    pub reference: TokenDistribution,
}

/// Decoding state of one caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationState {
    pub moment: usize,
    pub hard_prompt: String,
    pub hard_tokens: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    pub max_tokens: usize,
    pub finished: bool,
}

impl GenerationState {
    pub fn new<L: LanguageModel + ?Sized>(moment: usize, hard_prompt: &str, lm: &L, max_tokens: usize) -> Self {
        GenerationState {
            moment,
            hard_prompt: hard_prompt.to_string(),
            hard_tokens: lm.tokenize(hard_prompt),
            tokens: Vec::new(),
            max_tokens,
            finished: max_tokens == 0,
        }
    }

    pub fn step(&self) -> usize {
        self.tokens.len()
    }

    pub fn context(&self) -> Vec<TokenId> {
        let mut c = self.hard_tokens.clone();
        c.extend_from_slice(&self.tokens);
        c
    }

    /// Collects the frozen inputs of the next step from the current prefix.
    pub fn prepare<L, S>(
        &self,
        lm: &L,
        scorer: &S,
        prefix: &PrefixEmbeddings,
        candidate_count: usize,
    ) -> Result<StepInputs>
    where
        L: LanguageModel + ?Sized,
        S: TextImageScorer + ?Sized,
    {
        let context = self.context();
        let q = lm.next_token_distribution(Some(prefix), &context)?;
        let reference = lm.next_token_distribution(None, &context)?;
        let candidates = top_k_candidates(&q, candidate_count.min(q.len()))?;
        let mut sentences = Vec::with_capacity(candidates.len());
        let mut rows = Vec::with_capacity(candidates.len());
        let mut tokens = self.tokens.clone();
        for &c in &candidates {
            tokens.push(c);
            let s = lm.detokenize(&tokens);
            rows.push(scorer.embed_text(&s)?);
            sentences.push(s);
            tokens.pop();
        }
        Ok(StepInputs {
            context,
            candidates,
            candidate_sentences: sentences,
            candidate_embeddings: Matrix::from_rows(&rows)?,
            reference,
        })
    }

    /// Appends the candidate with the highest updated probability; ties go to
    /// the earlier candidate. Returns `true` once the caption is finished.
    pub fn emit(&mut self, updated: &TokenDistribution, inputs: &StepInputs, period: TokenId) -> bool {
        let p = updated.probs();
        let mut best = inputs.candidates[0];
        for &c in &inputs.candidates[1..] {
            if p[c] > p[best] {
                best = c;
            }
        }
        self.tokens.push(best);
        if best == period || self.tokens.len() >= self.max_tokens {
            self.finished = true;
        }
        self.finished
    }
}

/// Loss values of one moment at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CaptionLosses {
    pub vision: f64,
    pub language: f64,
}

/// Gradients of a weighted sum of [`CaptionLosses`] with respect to one
/// moment's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionGrad {
    pub center: f64,
    pub width: f64,
    pub soft: Vec<f64>,
    pub projection: Vec<f64>,
}

/// Fixed per-moment data needed to evaluate the caption losses.
pub struct CaptionProblem<'a, L: ?Sized, S: ?Sized> {
    pub lm: &'a L,
    pub scorer: &'a S,
    /// Unit-row frame embeddings.
    pub frames: &'a Matrix,
    pub positions: &'a FramePositions,
    pub sharpness: f64,
    pub temperature: f64,
    pub hard_tokens: &'a [TokenId],
    pub inputs: &'a StepInputs,
}

/// Forward pass of one moment: mask → pooled feature → prefix → `q`, and
/// pooled feature → moment embedding → alignment. Returns the losses and the
/// gradient of `vision_weight · vision + language_weight · language`.
pub fn caption_losses_with_grad<L, S>(
    problem: &CaptionProblem<'_, L, S>,
    moment: &MomentParams,
    prefix_params: &PrefixParams,
    vision_weight: f64,
    language_weight: f64,
) -> Result<(CaptionLosses, CaptionGrad)>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
{
    let inputs = problem.inputs;
    let (mask, jac) = soft_mask_with_jacobian(moment, problem.positions, problem.sharpness)?;
    let pooled = aggregate_features(problem.frames, &mask)?;
    let pooled_norm = norm(&pooled);
    if pooled_norm.is_nan() || pooled_norm <= 0.0 {
        return Err(Error::NonFinite {
            what: "pooled feature norm",
            value: pooled_norm,
        });
    }
    let embedding: Vec<f64> = pooled.iter().map(|x| x / pooled_norm).collect();

    let prefix = build_prefix(prefix_params, &pooled, problem.hard_tokens, problem.lm)?;
    let logits = problem.lm.next_token_logits(Some(&prefix), &inputs.context)?;
    let q = softmax(&logits);
    let q_dist = TokenDistribution::new(q.clone())?;

    let cosines = problem.candidate_cosines(&embedding);
    let temperature = problem.temperature / problem.scorer.config().logit_scale;
    let alignment = alignment_from_cosines(&cosines, temperature)?;
    let restricted = restrict(&q_dist, &inputs.candidates);
    let vision = vision_loss(&alignment, &restricted)?;
    let language = language_loss(&q_dist, &inputs.reference)?;

    // Gradient on the logits.
    let mut d_logits = vec![0.0; q.len()];
    for ((&tok, &a), &qr) in inputs.candidates.iter().zip(&alignment).zip(&restricted) {
        d_logits[tok] += vision_weight * (qr - a);
    }
    let neg_log_ref: Vec<f64> = inputs.reference.probs().iter().map(|r| -clamped_ln(*r)).collect();
    let expected = dot(&q, &neg_log_ref);
    for ((d, &qv), &g) in d_logits.iter_mut().zip(&q).zip(&neg_log_ref) {
        *d += language_weight * qv * (g - expected);
    }

    let prefix_grad = problem.lm.logits_backward(&prefix, &inputs.context, &d_logits)?;
    let d_projected = prefix_grad.projected.as_slice();
    let mut d_projection = vec![0.0; prefix_params.projection.as_slice().len()];
    let cols = pooled.len();
    for (r, &g) in d_projected.iter().enumerate() {
        if g != 0.0 {
            for (dst, &x) in d_projection[r * cols..(r + 1) * cols].iter_mut().zip(&pooled) {
                *dst = g * x;
            }
        }
    }
    let mut d_pooled = prefix_params.projection.tr_mul_vec(d_projected);

    // Alignment path: d CE / d cos_i = a_i (h_i − Σ a h) / τ with h = −log q̂.
    let h: Vec<f64> = restricted.iter().map(|p| -clamped_ln(*p)).collect();
    let mean_h = dot(&alignment, &h);
    let mut d_embedding = vec![0.0; cols];
    for (i, row) in inputs.candidate_embeddings.iter_rows().enumerate() {
        let d_cos = vision_weight * alignment[i] * (h[i] - mean_h) / temperature;
        for (de, &t) in d_embedding.iter_mut().zip(row) {
            *de += d_cos * t;
        }
    }
    let radial = dot(&embedding, &d_embedding);
    for ((dp, &de), &e) in d_pooled.iter_mut().zip(&d_embedding).zip(&embedding) {
        *dp += (de - e * radial) / pooled_norm;
    }

    let d_mask = aggregate_features_backward(problem.frames, &mask, &pooled, &d_pooled);
    let center = dot(&d_mask, &jac.d_center);
    let width = dot(&d_mask, &jac.d_width);

    Ok((
        CaptionLosses { vision, language },
        CaptionGrad {
            center,
            width,
            soft: prefix_grad.soft,
            projection: d_projection,
        },
    ))
}

impl<L: ?Sized, S: ?Sized> CaptionProblem<'_, L, S> {
    fn candidate_cosines(&self, embedding: &[f64]) -> Vec<f64> {
        self.inputs
            .candidate_embeddings
            .iter_rows()
            .map(|row| dot(row, embedding))
            .collect()
    }
}

/// Pooled feature and unit moment embedding under the current mask.
pub fn moment_embedding(
    frames: &Matrix,
    positions: &FramePositions,
    moment: &MomentParams,
    sharpness: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mask = crate::temporal::soft_mask(moment, positions, sharpness)?;
    let pooled = aggregate_features(frames, &mask)?;
    let n = norm(&pooled);
    if n.is_nan() || n <= 0.0 {
        return Err(Error::NonFinite {
            what: "pooled feature norm",
            value: n,
        });
    }
    let unit = pooled.iter().map(|x| x / n).collect();
    Ok((pooled, unit))
}

/// Receives each step's frozen inputs and updates the trainable state.
pub trait StepUpdate {
    /// Prefix built from the current parameters.
    fn prefix(&self, hard_tokens: &[TokenId]) -> Result<PrefixEmbeddings>;

    /// Applies the update(s) for one generation step.
    fn update(&mut self, state: &GenerationState, inputs: &StepInputs) -> Result<()>;
}

/// Decodes one caption, handing each step to `updater` before choosing the
/// next token from the updated distribution.
pub fn generate_caption<L, S, U>(
    state: &mut GenerationState,
    lm: &L,
    scorer: &S,
    candidate_count: usize,
    updater: &mut U,
) -> Result<Vec<TokenId>>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
    U: StepUpdate + ?Sized,
{
    while !state.finished {
        let step = state.step();
        let prefix = updater.prefix(&state.hard_tokens).map_err(|e| e.at(0, step))?;
        let inputs = state
            .prepare(lm, scorer, &prefix, candidate_count)
            .map_err(|e| e.at(0, step))?;
        updater.update(state, &inputs).map_err(|e| e.at(0, step))?;
        let prefix = updater.prefix(&state.hard_tokens).map_err(|e| e.at(0, step))?;
        let updated = lm
            .next_token_distribution(Some(&prefix), &inputs.context)
            .map_err(|e| e.at(0, step))?;
        state.emit(&updated, &inputs, lm.period());
    }
    Ok(state.tokens.clone())
}
