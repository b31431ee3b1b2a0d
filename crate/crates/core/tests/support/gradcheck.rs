//! Central finite-difference checks of the analytic gradients.
//!
//! Shared with the acceptance suite of the `densecap` crate.
#![allow(dead_code)]

use densecap_core::backend::mock::{MockLm, MockScorer, MockWorld};
use densecap_core::backend::{LanguageModel, TextImageScorer};
use densecap_core::generation::{build_prefix, moment_embedding, GenerationState, PrefixParams, DEFAULT_HARD_PROMPTS};
use densecap_core::math::{sigmoid, Matrix};
use densecap_core::optimizer::{joint_objective, ActiveCaption, JointProblem, LossWeights, MomentState};
use densecap_core::temporal::{
    aggregate_features, aggregate_features_backward, frame_positions, pt_iou_loss, pt_iou_loss_with_grad, soft_mask,
    soft_mask_with_jacobian, FramePositions, MomentParams, SoftMask,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Below this absolute difference a component passes regardless of the
/// relative error; central differences cannot resolve smaller gradients.
pub const ABS_FLOOR: f64 = 1e-9;
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Default, Clone)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel: f64,
    pub failures: Vec<String>,
}

impl GradReport {
    fn record(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.checked += 1;
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if diff > ABS_FLOOR {
            self.max_rel = self.max_rel.max(rel);
            if rel > REL_TOL {
                self.failures.push(format!("{what}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}"));
            }
        }
    }

    fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.max_rel = self.max_rel.max(other.max_rel);
        self.failures.extend(other.failures);
    }
}

fn central<F: FnMut(f64) -> f64>(x: f64, mut f: F) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

/// A random configuration with every mask and interval endpoint kept away
/// from the non-differentiable points.
pub struct GradConfig {
    pub world: MockWorld,
    pub lm: MockLm,
    pub scorer: MockScorer,
    pub frames: Matrix,
    pub positions: FramePositions,
    pub moments: Vec<MomentState>,
    pub gamma: f64,
    pub weights: LossWeights,
    pub candidate_count: usize,
    pub rng: ChaCha8Rng,
}

fn clear_of_kinks(params: &[MomentParams], positions: &FramePositions) -> bool {
    let mut ends = Vec::new();
    for p in params {
        let (c, w) = (sigmoid(p.center), sigmoid(p.width));
        if positions.as_slice().iter().any(|x| (x - c).abs() < KINK_MARGIN) {
            return false;
        }
        ends.push(c - w / 2.0);
        ends.push(c + w / 2.0);
    }
    if ends.iter().any(|e| e.abs() < KINK_MARGIN || (e - 1.0).abs() < KINK_MARGIN) {
        return false;
    }
    for (i, a) in ends.iter().enumerate() {
        for b in &ends[i + 1..] {
            if (a - b).abs() < KINK_MARGIN {
                return false;
            }
        }
    }
    true
}

impl GradConfig {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164 ^ seed);
        let world = MockWorld::new(seed);
        let lm = world.language_model();
        let scorer = world.scorer();
        let len = rng.random_range(4..40);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..len * 16).map(|_| normal.sample(&mut rng)).collect();
        let frames = scorer.embed_frames(&Matrix::from_vec(len, 16, raw).unwrap()).unwrap();
        let positions = frame_positions(len).unwrap();
        let n = rng.random_range(1..=4);
        let params = loop {
            let ps: Vec<MomentParams> = (0..n)
                .map(|_| MomentParams::new(rng.random_range(-2.0..2.0), rng.random_range(-2.5..0.5)).unwrap())
                .collect();
            if clear_of_kinks(&ps, &positions) {
                break ps;
            }
        };
        let prefix_normal = Normal::new(0.0, 0.3).unwrap();
        let lm_dim = lm.config().dim;
        let layers = lm.config().layers;
        let moments = params
            .into_iter()
            .map(|p| {
                let mut prefix = PrefixParams::zeros(layers, 5, 20, lm_dim, 16);
                for x in prefix.soft.data.iter_mut().chain(prefix.projection.as_mut_slice()) {
                    *x = prefix_normal.sample(&mut rng);
                }
                MomentState { params: p, prefix }
            })
            .collect();
        let gamma = 10.0 + rng.random_range(0..12) as f64;
        let weights = if seed.is_multiple_of(2) {
            LossWeights::default()
        } else {
            LossWeights {
                vision: rng.random_range(0.1..2.0),
                language: rng.random_range(0.1..2.0),
                pt_iou: rng.random_range(0.1..20.0),
            }
        };
        let candidate_count = [5, 16, 512][rng.random_range(0..3)];
        GradConfig {
            world,
            lm,
            scorer,
            frames,
            positions,
            moments,
            gamma,
            weights,
            candidate_count,
            rng,
        }
    }
}

pub fn check_soft_mask(cfg: &GradConfig) -> GradReport {
    let mut rep = GradReport::default();
    for m in &cfg.moments {
        let (_, jac) = soft_mask_with_jacobian(&m.params, &cfg.positions, cfg.gamma).unwrap();
        for j in 0..cfg.positions.len() {
            let at = |c: f64, w: f64| {
                soft_mask(&MomentParams::new(c, w).unwrap(), &cfg.positions, cfg.gamma).unwrap().values()[j]
            };
            let nc = central(m.params.center, |c| at(c, m.params.width));
            let nw = central(m.params.width, |w| at(m.params.center, w));
            rep.record("soft_mask d/dc", jac.d_center[j], nc);
            rep.record("soft_mask d/dw", jac.d_width[j], nw);
        }
    }
    rep
}

pub fn check_aggregate(cfg: &mut GradConfig) -> GradReport {
    let mut rep = GradReport::default();
    let len = cfg.frames.rows();
    let values: Vec<f64> = (0..len).map(|_| cfg.rng.random_range(0.05..0.95)).collect();
    let probe: Vec<f64> = (0..cfg.frames.cols()).map(|_| cfg.rng.random_range(-1.0..1.0)).collect();
    let mask = SoftMask::from_values(values.clone()).unwrap();
    let pooled = aggregate_features(&cfg.frames, &mask).unwrap();
    let analytic = aggregate_features_backward(&cfg.frames, &mask, &pooled, &probe);
    for j in 0..len {
        let numeric = central(values[j], |v| {
            let mut vs = values.clone();
            vs[j] = v;
            let p = aggregate_features(&cfg.frames, &SoftMask::from_values(vs).unwrap()).unwrap();
            p.iter().zip(&probe).map(|(a, b)| a * b).sum()
        });
        rep.record("aggregate d/dm", analytic[j], numeric);
    }
    rep
}

pub fn check_pt_iou(cfg: &GradConfig) -> GradReport {
    let mut rep = GradReport::default();
    let params: Vec<MomentParams> = cfg.moments.iter().map(|m| m.params).collect();
    let (_, grads) = pt_iou_loss_with_grad(&params);
    for k in 0..params.len() {
        let nc = central(params[k].center, |c| {
            let mut ps = params.clone();
            ps[k].center = c;
            pt_iou_loss(&ps)
        });
        let nw = central(params[k].width, |w| {
            let mut ps = params.clone();
            ps[k].width = w;
            pt_iou_loss(&ps)
        });
        rep.record("pt_iou d/dc", grads[k].0, nc);
        rep.record("pt_iou d/dw", grads[k].1, nw);
    }
    rep
}

/// Joint objective of the mock pipeline with frozen step inputs, checked on
/// every moment logit and on a seeded sample of prefix coordinates.
pub fn check_joint(cfg: &mut GradConfig, samples_per_group: usize) -> GradReport {
    let mut rep = GradReport::default();
    let vocab_len = cfg.lm.config().vocab_size;
    let mut gens = Vec::new();
    for (k, m) in cfg.moments.iter().enumerate() {
        let prompt = DEFAULT_HARD_PROMPTS[cfg.rng.random_range(0..DEFAULT_HARD_PROMPTS.len())];
        let mut g = GenerationState::new(k, prompt, &cfg.lm, 20);
        for _ in 0..cfg.rng.random_range(0..4) {
            g.tokens.push(cfg.rng.random_range(2..vocab_len));
        }
        let (pooled, _) = moment_embedding(&cfg.frames, &cfg.positions, &m.params, cfg.gamma).unwrap();
        let prefix = build_prefix(&m.prefix, &pooled, &g.hard_tokens, &cfg.lm).unwrap();
        let inputs = g.prepare(&cfg.lm, &cfg.scorer, &prefix, cfg.candidate_count).unwrap();
        gens.push((g, inputs));
    }
    // Leave one caption out now and then to cover finished moments.
    let skip = if cfg.moments.len() > 1 && cfg.rng.random_bool(0.5) {
        Some(cfg.rng.random_range(0..cfg.moments.len()))
    } else {
        None
    };
    let problem = JointProblem {
        lm: &cfg.lm,
        scorer: &cfg.scorer,
        frames: &cfg.frames,
        positions: &cfg.positions,
        sharpness: cfg.gamma,
        temperature: 1.0,
        weights: cfg.weights,
        active: gens
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != skip)
            .map(|(k, (g, inp))| ActiveCaption {
                moment: k,
                hard_tokens: &g.hard_tokens,
                inputs: inp,
            })
            .collect(),
    };
    let total = |ms: &[MomentState]| joint_objective(&problem, ms).unwrap().0.total;
    let (_, grads) = joint_objective(&problem, &cfg.moments).unwrap();
    let base = cfg.moments.clone();
    for k in 0..base.len() {
        let nc = central(base[k].params.center, |c| {
            let mut ms = base.clone();
            ms[k].params.center = c;
            total(&ms)
        });
        let nw = central(base[k].params.width, |w| {
            let mut ms = base.clone();
            ms[k].params.width = w;
            total(&ms)
        });
        rep.record("joint d/dc", grads[k].center, nc);
        rep.record("joint d/dw", grads[k].width, nw);
        for _ in 0..samples_per_group {
            let i = cfg.rng.random_range(0..base[k].prefix.soft.data.len());
            let n = central(base[k].prefix.soft.data[i], |v| {
                let mut ms = base.clone();
                ms[k].prefix.soft.data[i] = v;
                total(&ms)
            });
            rep.record("joint d/dsoft", grads[k].soft[i], n);
            let i = cfg.rng.random_range(0..base[k].prefix.projection.as_slice().len());
            let n = central(base[k].prefix.projection.as_slice()[i], |v| {
                let mut ms = base.clone();
                ms[k].prefix.projection.as_mut_slice()[i] = v;
                total(&ms)
            });
            rep.record("joint d/dW", grads[k].projection[i], n);
        }
    }
    rep
}

/// All four checks over `configs` seeded configurations.
pub fn run_suite(configs: u64) -> GradReport {
    let mut rep = GradReport::default();
    for seed in 0..configs {
        let mut cfg = GradConfig::new(seed);
        rep.merge(check_soft_mask(&cfg));
        rep.merge(check_aggregate(&mut cfg));
        rep.merge(check_pt_iou(&cfg));
        rep.merge(check_joint(&mut cfg, 16));
    }
    rep
}
