//! Joint test-time optimization for one video.
//!
//! All trainable parameters (per-moment center/width logits, soft prompts and
//! projections) are updated together with AdamW, one update per generation
//! step. Each outer iteration regenerates every caption from scratch while the
//! parameters and optimizer moments carry over; mask sharpness grows by a
//! fixed increment per outer iteration.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backend::{LanguageModel, PrefixEmbeddings, TextImageScorer, TokenId};
use crate::error::{Error, Result};
use crate::generation::{
    build_prefix, caption_losses_with_grad, moment_embedding, CaptionProblem, GenerationState, HardPromptPool,
    PrefixParams, StepInputs, StepUpdate,
};
use crate::math::{logit, Matrix};
use crate::temporal::{frame_positions, pt_iou_loss, pt_iou_loss_with_grad, FramePositions, Interval, MomentParams, SharpnessSchedule};

/// Version tag of [`RunState`].
pub const STATE_VERSION: u32 = 1;

/// Sigmoid-space margin keeping initial center logits finite.
pub const CENTER_INIT_CLIP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub vision: f64,
    pub language: f64,
    pub pt_iou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            vision: 1.0,
            language: 0.8,
            pt_iou: 10.0,
        }
    }
}

/// Loss components of one update and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub vision: f64,
    pub language: f64,
    pub pt_iou: f64,
    pub total: f64,
}

/// `λ1·Lv + λ2·Ll + λ3·LptIoU`; any NaN component aborts.
pub fn total_loss(vision: f64, language: f64, pt_iou: f64, weights: &LossWeights) -> Result<f64> {
    for (what, v) in [("vision loss", vision), ("language loss", language), ("pairwise tIoU loss", pt_iou)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what, value: v });
        }
    }
    Ok(weights.vision * vision + weights.language * language + weights.pt_iou * pt_iou)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 6e-3,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0018,
            eps: 1e-8,
        }
    }
}

/// Cosine annealing from `base` at step 0 to 0 at step `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total)) as f64 / total as f64;
    base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}

/// AdamW with decoupled weight decay over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, len: usize) -> Self {
        AdamW {
            config,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape {
                what: "optimizer parameter vector",
                expected: self.first.len(),
                actual: grads.len(),
            });
        }
        let c = self.config;
        self.steps += 1;
        let bc1 = 1.0 - libm::pow(c.beta1, self.steps as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.steps as f64);
        for i in 0..params.len() {
            params[i] *= 1.0 - lr * c.weight_decay;
            self.first[i] = c.beta1 * self.first[i] + (1.0 - c.beta1) * grads[i];
            self.second[i] = c.beta2 * self.second[i] + (1.0 - c.beta2) * grads[i] * grads[i];
            let m = self.first[i] / bc1;
            let v = self.second[i] / bc2;
            params[i] -= lr * m / (libm::sqrt(v) + c.eps);
        }
        Ok(())
    }
}

/// How initial centers are placed in sigmoid space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CenterInit {
    /// Uniform grid from `from` to `to` (inclusive).
    Uniform { from: f64, to: f64 },
    /// Every moment starts at the same normalized center.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub num_moments: usize,
    pub center_init: CenterInit,
    pub width_logit: f64,
    pub max_width_logit: Option<f64>,
}

impl DatasetProfile {
    pub fn activitynet() -> Self {
        DatasetProfile {
            name: "activitynet".into(),
            num_moments: 4,
            center_init: CenterInit::Uniform { from: 0.0, to: 1.0 },
            width_logit: -0.8472,
            max_width_logit: None,
        }
    }

    pub fn youcook2() -> Self {
        DatasetProfile {
            name: "youcook2".into(),
            num_moments: 8,
            center_init: CenterInit::Uniform { from: 0.1, to: 0.9 },
            width_logit: -2.1972,
            max_width_logit: Some(-0.8472),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "activitynet" => Some(Self::activitynet()),
            "youcook2" => Some(Self::youcook2()),
            _ => None,
        }
    }
}

/// Initial moments for `count` captions under `profile`.
pub fn init_moments(profile: &DatasetProfile, count: usize) -> Result<Vec<MomentParams>> {
    if count == 0 {
        return Err(Error::InvalidParameter {
            name: "num_moments",
            value: 0.0,
        });
    }
    let clip = |p: f64| p.clamp(CENTER_INIT_CLIP, 1.0 - CENTER_INIT_CLIP);
    (0..count)
        .map(|k| {
            let c = match profile.center_init {
                CenterInit::Uniform { from, to } if count > 1 => from + (to - from) * k as f64 / (count - 1) as f64,
                CenterInit::Uniform { from, to } => 0.5 * (from + to),
                CenterInit::Constant(c) => c,
            };
            MomentParams::new(logit(clip(c)), profile.width_logit)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub num_moments: usize,
    pub outer_iterations: usize,
    pub weights: LossWeights,
    pub optimizer: AdamWConfig,
    pub sharpness: SharpnessSchedule,
    pub temperature: f64,
    pub candidate_count: usize,
    pub soft_prompt_length: usize,
    pub projected_tokens: usize,
    pub max_caption_tokens: usize,
    pub profile: DatasetProfile,
    pub hard_prompts: HardPromptPool,
    /// Standard deviation of the Gaussian init of soft prompts and projections.
    pub prefix_init_std: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_profile(profile: DatasetProfile, seed: u64) -> Self {
        RunConfig {
            num_moments: profile.num_moments,
            outer_iterations: 12,
            weights: LossWeights::default(),
            optimizer: AdamWConfig::default(),
            sharpness: SharpnessSchedule::default(),
            temperature: 1.0,
            candidate_count: 512,
            soft_prompt_length: 5,
            projected_tokens: 20,
            max_caption_tokens: 20,
            profile,
            hard_prompts: HardPromptPool::default(),
            prefix_init_std: 0.02,
            seed,
        }
    }

    pub fn activitynet(seed: u64) -> Self {
        Self::for_profile(DatasetProfile::activitynet(), seed)
    }

    pub fn youcook2(seed: u64) -> Self {
        Self::for_profile(DatasetProfile::youcook2(), seed)
    }

    /// Updates planned for the learning-rate schedule horizon.
    pub fn planned_updates(&self) -> usize {
        self.outer_iterations * self.max_caption_tokens
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_moments", self.num_moments),
            ("candidate_count", self.candidate_count),
            ("max_caption_tokens", self.max_caption_tokens),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter { name, value: 0.0 });
            }
        }
        for (name, v) in [
            ("lambda_vision", self.weights.vision),
            ("lambda_language", self.weights.language),
            ("lambda_pt_iou", self.weights.pt_iou),
            ("weight_decay", self.optimizer.weight_decay),
            ("prefix_init_std", self.prefix_init_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        for (name, v) in [
            ("learning_rate", self.optimizer.learning_rate),
            ("temperature", self.temperature),
            ("adam_eps", self.optimizer.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        for (name, v) in [("beta1", self.optimizer.beta1), ("beta2", self.optimizer.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        SharpnessSchedule::new(self.sharpness.initial, self.sharpness.increment)?;
        HardPromptPool::new(self.hard_prompts.prompts.clone())?;
        Ok(())
    }
}

/// Trainable parameters of one moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub params: MomentParams,
    pub prefix: PrefixParams,
}

impl MomentState {
    fn param_count(&self) -> usize {
        2 + self.prefix.param_count()
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.push(self.params.center);
        out.push(self.params.width);
        out.extend_from_slice(&self.prefix.soft.data);
        out.extend_from_slice(self.prefix.projection.as_slice());
    }

    fn read_flat(&mut self, src: &[f64]) -> usize {
        self.params.center = src[0];
        self.params.width = src[1];
        let s = self.prefix.soft.data.len();
        self.prefix.soft.data.copy_from_slice(&src[2..2 + s]);
        let w = self.prefix.projection.as_slice().len();
        self.prefix.projection.as_mut_slice().copy_from_slice(&src[2 + s..2 + s + w]);
        2 + s + w
    }
}

/// Gradient of the joint objective for one moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrad {
    pub center: f64,
    pub width: f64,
    pub soft: Vec<f64>,
    pub projection: Vec<f64>,
}

impl MomentGrad {
    fn zeros(state: &MomentState) -> Self {
        MomentGrad {
            center: 0.0,
            width: 0.0,
            soft: vec![0.0; state.prefix.soft.len()],
            projection: vec![0.0; state.prefix.projection.as_slice().len()],
        }
    }

    fn write_flat(&self, out: &mut Vec<f64>) {
        out.push(self.center);
        out.push(self.width);
        out.extend_from_slice(&self.soft);
        out.extend_from_slice(&self.projection);
    }
}

/// One moment's contribution to a joint step.
pub struct ActiveCaption<'a> {
    pub moment: usize,
    pub hard_tokens: &'a [TokenId],
    pub inputs: &'a StepInputs,
}

/// Fixed data of one joint update.
pub struct JointProblem<'a, L: ?Sized, S: ?Sized> {
    pub lm: &'a L,
    pub scorer: &'a S,
    pub frames: &'a Matrix,
    pub positions: &'a FramePositions,
    pub sharpness: f64,
    pub temperature: f64,
    pub weights: LossWeights,
    pub active: Vec<ActiveCaption<'a>>,
}

/// Total loss and gradient for all moments. Vision and language losses are
/// averaged over the captions still being generated; the pairwise tIoU term
/// covers every moment.
pub fn joint_objective<L, S>(
    problem: &JointProblem<'_, L, S>,
    moments: &[MomentState],
) -> Result<(LossBreakdown, Vec<MomentGrad>)>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
{
    let mut grads: Vec<MomentGrad> = moments.iter().map(MomentGrad::zeros).collect();
    let n_active = problem.active.len();
    let (mut vision, mut language) = (0.0, 0.0);
    if n_active > 0 {
        let scale = 1.0 / n_active as f64;
        for act in &problem.active {
            let m = moments.get(act.moment).ok_or_else(|| Error::invalid_arg("moment index out of range"))?;
            let cp = CaptionProblem {
                lm: problem.lm,
                scorer: problem.scorer,
                frames: problem.frames,
                positions: problem.positions,
                sharpness: problem.sharpness,
                temperature: problem.temperature,
                hard_tokens: act.hard_tokens,
                inputs: act.inputs,
            };
            let (losses, g) = caption_losses_with_grad(
                &cp,
                &m.params,
                &m.prefix,
                problem.weights.vision * scale,
                problem.weights.language * scale,
            )?;
            vision += losses.vision * scale;
            language += losses.language * scale;
            let dst = &mut grads[act.moment];
            dst.center += g.center;
            dst.width += g.width;
            for (d, s) in dst.soft.iter_mut().zip(&g.soft) {
                *d += s;
            }
            for (d, s) in dst.projection.iter_mut().zip(&g.projection) {
                *d += s;
            }
        }
    }
    let params: Vec<MomentParams> = moments.iter().map(|m| m.params).collect();
    let (pt_iou, pt_grads) = pt_iou_loss_with_grad(&params);
    for (g, (dc, dw)) in grads.iter_mut().zip(pt_grads) {
        g.center += problem.weights.pt_iou * dc;
        g.width += problem.weights.pt_iou * dw;
    }
    let total = total_loss(vision, language, pt_iou, &problem.weights)?;
    Ok((
        LossBreakdown {
            vision,
            language,
            pt_iou,
            total,
        },
        grads,
    ))
}

/// One logged update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub step: usize,
    pub learning_rate: f64,
    pub sharpness: f64,
    pub losses: LossBreakdown,
}

/// A finished caption of the latest outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub hard_prompt: String,
    pub tokens: Vec<TokenId>,
}

/// Everything needed to continue an interrupted run bit-identically.
/// Snapshots are taken between outer iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub version: u32,
    pub moments: Vec<MomentState>,
    pub optimizer: AdamW,
    pub next_iteration: usize,
    pub updates: usize,
    pub captions: Vec<CaptionRecord>,
    pub history: Vec<StepRecord>,
}

impl RunState {
    /// A state with no moments; restoring it starts a fresh run.
    pub fn empty() -> Self {
        RunState {
            version: STATE_VERSION,
            moments: Vec::new(),
            optimizer: AdamW::new(AdamWConfig::default(), 0),
            next_iteration: 0,
            updates: 0,
            captions: Vec::new(),
            history: Vec::new(),
        }
    }
}

/// One entry of the final output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEntry {
    /// Interval in seconds.
    pub timestamp: Interval,
    /// Interval in normalized video time.
    pub normalized: Interval,
    pub sentence: String,
    pub hard_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseCaptionResult {
    pub duration: f64,
    pub entries: Vec<CaptionEntry>,
    pub final_losses: LossBreakdown,
    /// Pairwise tIoU of the initial moments.
    pub initial_pt_iou: f64,
    pub moments: Vec<MomentParams>,
}

/// Optimization context for one video.
pub struct DenseCaptioner<'a, L: ?Sized, S: ?Sized> {
    lm: &'a L,
    scorer: &'a S,
    config: RunConfig,
    frames: Matrix,
    positions: FramePositions,
    duration: f64,
    initial_pt_iou: f64,
    state: RunState,
}

impl<'a, L, S> DenseCaptioner<'a, L, S>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
{
    /// Embeds `features` (L × D_v) with the scorer and initializes parameters.
    pub fn new(features: &Matrix, duration: f64, config: RunConfig, lm: &'a L, scorer: &'a S) -> Result<Self> {
        config.validate()?;
        lm.config().validate()?;
        if features.rows() == 0 {
            return Err(Error::InvalidParameter {
                name: "frame count",
                value: 0.0,
            });
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "duration",
                value: duration,
            });
        }
        let frames = scorer.embed_frames(features)?;
        let positions = frame_positions(frames.rows())?;
        let moments = Self::fresh_moments(&config, lm.config().dim, lm.config().layers, frames.cols())?;
        let initial_pt_iou = pt_iou_loss(&moments.iter().map(|m| m.params).collect::<Vec<_>>());
        let n_params = moments.iter().map(MomentState::param_count).sum();
        let state = RunState {
            version: STATE_VERSION,
            moments,
            optimizer: AdamW::new(config.optimizer, n_params),
            next_iteration: 0,
            updates: 0,
            captions: Vec::new(),
            history: Vec::new(),
        };
        Ok(DenseCaptioner {
            lm,
            scorer,
            config,
            frames,
            positions,
            duration,
            initial_pt_iou,
            state,
        })
    }

    fn fresh_moments(config: &RunConfig, lm_dim: usize, layers: usize, visual_dim: usize) -> Result<Vec<MomentState>> {
        let params = init_moments(&config.profile, config.num_moments)?;
        let std = config.prefix_init_std;
        params
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                let mut prefix =
                    PrefixParams::zeros(layers, config.soft_prompt_length, config.projected_tokens, lm_dim, visual_dim);
                if std > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(k as u64 + 1);
                    let normal = Normal::new(0.0, std).map_err(|_| Error::InvalidParameter {
                        name: "prefix_init_std",
                        value: std,
                    })?;
                    for x in prefix.soft.data.iter_mut().chain(prefix.projection.as_mut_slice()) {
                        *x = normal.sample(&mut rng);
                    }
                }
                Ok(MomentState { params: p, prefix })
            })
            .collect()
    }

    /// Continues from a snapshot. An empty snapshot keeps the fresh state.
    pub fn restore(&mut self, state: RunState) -> Result<()> {
        if state.version != STATE_VERSION {
            return Err(Error::Version {
                expected: STATE_VERSION,
                found: state.version,
            });
        }
        if state.moments.is_empty() {
            return Ok(());
        }
        if state.moments.len() != self.state.moments.len()
            || state
                .moments
                .iter()
                .zip(&self.state.moments)
                .any(|(a, b)| a.param_count() != b.param_count())
            || state.optimizer.first.len() != self.state.optimizer.first.len()
        {
            return Err(Error::invalid_arg("snapshot does not match the run configuration"));
        }
        self.state = state;
        Ok(())
    }

    pub fn snapshot(&self) -> RunState {
        self.state.clone()
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn moments(&self) -> &[MomentState] {
        &self.state.moments
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.state.history
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn is_done(&self) -> bool {
        self.state.next_iteration >= self.config.outer_iterations
    }

    fn prefix_for(&self, moment: usize, hard_tokens: &[TokenId], sharpness: f64) -> Result<PrefixEmbeddings> {
        let m = &self.state.moments[moment];
        let (pooled, _) = moment_embedding(&self.frames, &self.positions, &m.params, sharpness)?;
        build_prefix(&m.prefix, &pooled, hard_tokens, self.lm)
    }

    /// Computes the joint loss for `active`, applies one AdamW update and
    /// projects widths under the profile's ceiling.
    fn apply_update(&mut self, active: Vec<ActiveCaption<'_>>, iteration: usize, step: usize, sharpness: f64) -> Result<()> {
        let problem = JointProblem {
            lm: self.lm,
            scorer: self.scorer,
            frames: &self.frames,
            positions: &self.positions,
            sharpness,
            temperature: self.config.temperature,
            weights: self.config.weights,
            active,
        };
        let (losses, grads) = joint_objective(&problem, &self.state.moments)?;
        let mut flat_grad = Vec::with_capacity(self.state.optimizer.first.len());
        for g in &grads {
            g.write_flat(&mut flat_grad);
        }
        if let Some(g) = flat_grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: "gradient", value: *g });
        }
        let mut flat = Vec::with_capacity(flat_grad.len());
        for m in &self.state.moments {
            m.write_flat(&mut flat);
        }
        let lr = cosine_lr(self.config.optimizer.learning_rate, self.state.updates, self.config.planned_updates());
        self.state.optimizer.step(&mut flat, &flat_grad, lr)?;
        let mut offset = 0;
        for m in self.state.moments.iter_mut() {
            offset += m.read_flat(&flat[offset..]);
            if let Some(max) = self.config.profile.max_width_logit {
                m.params.width = m.params.width.min(max);
            }
        }
        self.state.updates += 1;
        self.state.history.push(StepRecord {
            iteration,
            step,
            learning_rate: lr,
            sharpness,
            losses,
        });
        Ok(())
    }

    /// Runs one joint generation step for all unfinished captions.
    fn joint_step(&mut self, gens: &mut [GenerationState], iteration: usize, sharpness: f64) -> Result<()> {
        let step = gens.iter().map(GenerationState::step).max().unwrap_or(0);
        let mut inputs = Vec::new();
        for g in gens.iter().filter(|g| !g.finished) {
            let prefix = self.prefix_for(g.moment, &g.hard_tokens, sharpness)?;
            inputs.push((g.moment, g.prepare(self.lm, self.scorer, &prefix, self.config.candidate_count)?));
        }
        let active = inputs
            .iter()
            .map(|(k, inp)| ActiveCaption {
                moment: *k,
                hard_tokens: &gens[*k].hard_tokens,
                inputs: inp,
            })
            .collect();
        self.apply_update(active, iteration, step, sharpness)?;
        for (k, inp) in &inputs {
            let g = &mut gens[*k];
            let prefix = self.prefix_for(*k, &g.hard_tokens, sharpness)?;
            let updated = self.lm.next_token_distribution(Some(&prefix), &inp.context)?;
            g.emit(&updated, inp, self.lm.period());
        }
        Ok(())
    }

    /// Runs the next outer iteration: every caption is regenerated while the
    /// parameters keep being optimized.
    pub fn run_iteration(&mut self) -> Result<()> {
        let iteration = self.state.next_iteration;
        if iteration >= self.config.outer_iterations {
            return Ok(());
        }
        let sharpness = self.config.sharpness.at(iteration);
        let mut gens: Vec<GenerationState> = (0..self.config.num_moments)
            .map(|k| {
                let prompt = self.config.hard_prompts.select(self.config.seed, iteration, k);
                GenerationState::new(k, prompt, self.lm, self.config.max_caption_tokens)
            })
            .collect();
        while gens.iter().any(|g| !g.finished) {
            let step = gens.iter().map(GenerationState::step).max().unwrap_or(0);
            self.joint_step(&mut gens, iteration, sharpness)
                .map_err(|e| e.at(iteration, step))?;
        }
        self.state.captions = gens
            .into_iter()
            .map(|g| CaptionRecord {
                hard_prompt: g.hard_prompt,
                tokens: g.tokens,
            })
            .collect();
        self.state.next_iteration += 1;
        Ok(())
    }

    /// Runs the remaining outer iterations and assembles the result.
    pub fn run(&mut self) -> Result<DenseCaptionResult> {
        while !self.is_done() {
            self.run_iteration()?;
        }
        Ok(self.result())
    }

    /// Current output: latest captions with current intervals.
    pub fn result(&self) -> DenseCaptionResult {
        let entries = self
            .state
            .moments
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let normalized = m.params.interval();
                let (sentence, hard_prompt) = match self.state.captions.get(k) {
                    Some(c) => (self.lm.detokenize(&c.tokens), c.hard_prompt.clone()),
                    None => (String::new(), String::new()),
                };
                CaptionEntry {
                    timestamp: normalized.scaled(self.duration),
                    normalized,
                    sentence,
                    hard_prompt,
                }
            })
            .collect();
        DenseCaptionResult {
            duration: self.duration,
            entries,
            final_losses: self.state.history.last().map(|r| r.losses).unwrap_or_default(),
            initial_pt_iou: self.initial_pt_iou,
            moments: self.state.moments.iter().map(|m| m.params).collect(),
        }
    }

    /// Single-moment driver for [`crate::generation::generate_caption`].
    pub fn moment_session(&mut self, moment: usize, iteration: usize) -> MomentSession<'_, 'a, L, S> {
        let sharpness = self.config.sharpness.at(iteration);
        MomentSession {
            captioner: self,
            moment,
            iteration,
            sharpness,
        }
    }
}

/// Optimizes a single moment's caption while the other moments only take
/// part through the pairwise tIoU term.
pub struct MomentSession<'c, 'a, L: ?Sized, S: ?Sized> {
    captioner: &'c mut DenseCaptioner<'a, L, S>,
    moment: usize,
    iteration: usize,
    sharpness: f64,
}

impl<L, S> StepUpdate for MomentSession<'_, '_, L, S>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
{
    fn prefix(&self, hard_tokens: &[TokenId]) -> Result<PrefixEmbeddings> {
        self.captioner.prefix_for(self.moment, hard_tokens, self.sharpness)
    }

    fn update(&mut self, state: &GenerationState, inputs: &StepInputs) -> Result<()> {
        let active = vec![ActiveCaption {
            moment: self.moment,
            hard_tokens: &state.hard_tokens,
            inputs,
        }];
        self.captioner
            .apply_update(active, self.iteration, state.step(), self.sharpness)
    }
}

/// Runs the full optimization for one video.
pub fn run_dense_captioning<L, S>(
    features: &Matrix,
    duration: f64,
    config: RunConfig,
    lm: &L,
    scorer: &S,
) -> Result<DenseCaptionResult>
where
    L: LanguageModel + ?Sized,
    S: TextImageScorer + ?Sized,
{
    DenseCaptioner::new(features, duration, config, lm, scorer)?.run()
}
