//! Differentiable temporal moments.
//!
//! A moment is two unconstrained logits: center `c` and width `w`. Their
//! sigmoids `c̃`, `w̃` give a center and width in normalized video time, and
//! the soft mask over frame positions `p_j` is
//!
//! ```text
//! mask_j = sigmoid(γ · (w̃/2 − |p_j − c̃|))
//! ```
//!
//! which is close to 1 near the center, exactly 0.5 on the boundary
//! `|p_j − c̃| = w̃/2` and decays toward 0 outside. Larger sharpness `γ`
//! widens the contrast between inside and outside.
//!
//! Every forward function that takes part in optimization has an analytic
//! derivative next to it.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sigmoid, Matrix};

/// Center/width logits of one temporal moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    pub center: f64,
    pub width: f64,
}

impl MomentParams {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        let p = MomentParams { center, width };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::InvalidParameter {
                name: "center",
                value: self.center,
            });
        }
        if !self.width.is_finite() {
            return Err(Error::InvalidParameter {
                name: "width",
                value: self.width,
            });
        }
        Ok(())
    }

    /// Sigmoid-normalized `(c̃, w̃)`.
    pub fn normalized(&self) -> Result<(f64, f64)> {
        normalize_params(self)
    }

    /// Hard interval readout; see [`interval_of`].
    pub fn interval(&self) -> Interval {
        interval_of(self)
    }
}

pub fn normalize_params(params: &MomentParams) -> Result<(f64, f64)> {
    params.check()?;
    Ok((sigmoid(params.center), sigmoid(params.width)))
}

/// Normalized frame positions `p_1..p_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePositions(Vec<f64>);

impl FramePositions {
    /// Arbitrary finite positions, e.g. to probe a mask between frames.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_arg("no frame positions"));
        }
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "frame position",
                value: v,
            });
        }
        Ok(FramePositions(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Endpoint-inclusive uniform grid `(j−1)/(L−1)`; a single frame sits at 0.5.
pub fn frame_positions(len: usize) -> Result<FramePositions> {
    match len {
        0 => Err(Error::InvalidParameter {
            name: "frame count",
            value: 0.0,
        }),
        1 => Ok(FramePositions(vec![0.5])),
        n => {
            let denom = (n - 1) as f64;
            Ok(FramePositions((0..n).map(|j| j as f64 / denom).collect()))
        }
    }
}

/// Per-frame weights in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask(Vec<f64>);

impl SoftMask {
    /// Wraps raw weights; every entry must lie in the open interval (0,1).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_arg("soft mask must cover at least one frame"));
        }
        if let Some(&v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidParameter {
                name: "mask value",
                value: v,
            });
        }
        Ok(SoftMask(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Derivatives of every mask entry with respect to the center and width logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskJacobian {
    pub d_center: Vec<f64>,
    pub d_width: Vec<f64>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "sharpness",
            value: gamma,
        })
    }
}

pub fn soft_mask(params: &MomentParams, positions: &FramePositions, gamma: f64) -> Result<SoftMask> {
    check_gamma(gamma)?;
    let (c, w) = normalize_params(params)?;
    let half = w / 2.0;
    // Saturation at extreme γ can round to exactly 0 or 1; keep the open interval.
    let values = positions
        .as_slice()
        .iter()
        .map(|&p| sigmoid(gamma * (half - (p - c).abs())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
        .collect();
    Ok(SoftMask(values))
}

/// Soft mask together with its Jacobian with respect to `(c, w)`.
pub fn soft_mask_with_jacobian(
    params: &MomentParams,
    positions: &FramePositions,
    gamma: f64,
) -> Result<(SoftMask, MaskJacobian)> {
    check_gamma(gamma)?;
    let (c, w) = normalize_params(params)?;
    let dc_dlogit = c * (1.0 - c);
    let dw_dlogit = w * (1.0 - w);
    let n = positions.len();
    let mut values = Vec::with_capacity(n);
    let mut d_center = Vec::with_capacity(n);
    let mut d_width = Vec::with_capacity(n);
    for &p in positions.as_slice() {
        let diff = p - c;
        let m = sigmoid(gamma * (w / 2.0 - diff.abs()));
        let slope = m * (1.0 - m) * gamma;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        // d|p − c̃|/dc̃ = −sign(p − c̃)
        d_center.push(slope * sign * dc_dlogit);
        d_width.push(slope * 0.5 * dw_dlogit);
        values.push(m.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
    }
    Ok((SoftMask(values), MaskJacobian { d_center, d_width }))
}

/// Mask-weighted mean of feature rows: `Σ m_j f_j / Σ m_j`.
pub fn aggregate_features(features: &Matrix, mask: &SoftMask) -> Result<Vec<f64>> {
    if features.rows() != mask.len() {
        return Err(Error::Shape {
            what: "mask length vs frame count",
            expected: features.rows(),
            actual: mask.len(),
        });
    }
    let total: f64 = mask.values().iter().sum();
    let mut out = vec![0.0; features.cols()];
    for (row, &m) in features.iter_rows().zip(mask.values()) {
        for (o, &f) in out.iter_mut().zip(row) {
            *o += m * f;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(out)
}

/// Pulls a gradient on the pooled vector back onto the mask entries.
///
/// `pooled` must be the output of [`aggregate_features`] for the same inputs.
pub fn aggregate_features_backward(
    features: &Matrix,
    mask: &SoftMask,
    pooled: &[f64],
    d_pooled: &[f64],
) -> Vec<f64> {
    let total: f64 = mask.values().iter().sum();
    features
        .iter_rows()
        .map(|row| {
            row.iter()
                .zip(pooled)
                .zip(d_pooled)
                .map(|((f, p), g)| g * (f - p))
                .sum::<f64>()
                / total
        })
        .collect()
}

/// A closed time interval. Normalized intervals live in [0,1]; the same type
/// carries second-valued intervals in evaluation code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::InvalidParameter { name: "start", value: start });
        }
        if !end.is_finite() || end < start {
            return Err(Error::InvalidParameter { name: "end", value: end });
        }
        Ok(Interval { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn scaled(&self, factor: f64) -> Interval {
        Interval {
            start: self.start * factor,
            end: self.end * factor,
        }
    }
}

/// `[c̃ − w̃/2, c̃ + w̃/2]` clipped to [0,1].
pub fn interval_of(params: &MomentParams) -> Interval {
    let c = sigmoid(params.center);
    let w = sigmoid(params.width);
    Interval {
        start: (c - w / 2.0).max(0.0),
        end: (c + w / 2.0).min(1.0),
    }
}

/// Derivatives of the interval endpoints with respect to the moment logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalJacobian {
    pub start_d_center: f64,
    pub start_d_width: f64,
    pub end_d_center: f64,
    pub end_d_width: f64,
}

pub fn interval_with_jacobian(params: &MomentParams) -> (Interval, IntervalJacobian) {
    let c = sigmoid(params.center);
    let w = sigmoid(params.width);
    let dc = c * (1.0 - c);
    let dw = w * (1.0 - w);
    let raw_start = c - w / 2.0;
    let raw_end = c + w / 2.0;
    let (start, sc, sw) = if raw_start > 0.0 {
        (raw_start, dc, -0.5 * dw)
    } else {
        (0.0, 0.0, 0.0)
    };
    let (end, ec, ew) = if raw_end < 1.0 {
        (raw_end, dc, 0.5 * dw)
    } else {
        (1.0, 0.0, 0.0)
    };
    (
        Interval { start, end },
        IntervalJacobian {
            start_d_center: sc,
            start_d_width: sw,
            end_d_center: ec,
            end_d_width: ew,
        },
    )
}

/// Temporal intersection over union. Two zero-length intervals score 1 when
/// identical and 0 otherwise.
pub fn temporal_iou(a: &Interval, b: &Interval) -> f64 {
    temporal_iou_with_grad(a, b).0
}

/// IoU plus its partial derivatives `[∂/∂start, ∂/∂end]` for each argument.
pub fn temporal_iou_with_grad(a: &Interval, b: &Interval) -> (f64, [f64; 2], [f64; 2]) {
    let la = a.length();
    let lb = b.length();
    if la <= 0.0 && lb <= 0.0 {
        let same = a.start == b.start && a.end == b.end;
        return (if same { 1.0 } else { 0.0 }, [0.0; 2], [0.0; 2]);
    }
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = hi - lo;
    if inter <= 0.0 {
        return (0.0, [0.0; 2], [0.0; 2]);
    }
    let union = la + lb - inter;
    let iou = inter / union;

    // Which endpoint is active in the intersection; ties go to `a`.
    let (di_sa, di_sb) = if a.start >= b.start { (-1.0, 0.0) } else { (0.0, -1.0) };
    let (di_ea, di_eb) = if a.end <= b.end { (1.0, 0.0) } else { (0.0, 1.0) };
    let g = |di: f64, dlen: f64| {
        let du = dlen - di;
        (di * union - inter * du) / (union * union)
    };
    (
        iou,
        [g(di_sa, -1.0), g(di_ea, 1.0)],
        [g(di_sb, -1.0), g(di_eb, 1.0)],
    )
}

/// Mean tIoU over all unordered pairs of moment intervals; 0 when fewer than
/// two moments are given.
pub fn pt_iou_loss(moments: &[MomentParams]) -> f64 {
    let n = moments.len();
    if n < 2 {
        return 0.0;
    }
    let intervals: Vec<Interval> = moments.iter().map(interval_of).collect();
    let mut sum = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            sum += temporal_iou(&intervals[k], &intervals[l]);
        }
    }
    sum / pairs(n)
}

fn pairs(n: usize) -> f64 {
    (n * (n - 1) / 2) as f64
}

/// [`pt_iou_loss`] with its gradient: one `(∂/∂c, ∂/∂w)` per moment.
pub fn pt_iou_loss_with_grad(moments: &[MomentParams]) -> (f64, Vec<(f64, f64)>) {
    let n = moments.len();
    let mut grads = vec![(0.0, 0.0); n];
    if n < 2 {
        return (0.0, grads);
    }
    let read: Vec<(Interval, IntervalJacobian)> = moments.iter().map(interval_with_jacobian).collect();
    let scale = 1.0 / pairs(n);
    let mut sum = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            let (iou, ga, gb) = temporal_iou_with_grad(&read[k].0, &read[l].0);
            sum += iou;
            for (idx, g) in [(k, ga), (l, gb)] {
                let j = &read[idx].1;
                grads[idx].0 += scale * (g[0] * j.start_d_center + g[1] * j.end_d_center);
                grads[idx].1 += scale * (g[0] * j.start_d_width + g[1] * j.end_d_width);
            }
        }
    }
    (sum * scale, grads)
}

/// Linear sharpness annealing `γ(i) = initial + i · increment`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessSchedule {
    pub initial: f64,
    pub increment: f64,
}

impl SharpnessSchedule {
    pub fn new(initial: f64, increment: f64) -> Result<Self> {
        check_gamma(initial)?;
        if !(increment >= 0.0 && increment.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sharpness increment",
                value: increment,
            });
        }
        Ok(SharpnessSchedule { initial, increment })
    }

    pub fn at(&self, iteration: usize) -> f64 {
        self.initial + iteration as f64 * self.increment
    }
}

impl Default for SharpnessSchedule {
    fn default() -> Self {
        SharpnessSchedule {
            initial: 10.0,
            increment: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;

    fn params(c: f64, w: f64) -> MomentParams {
        MomentParams::new(logit(c), logit(w)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalization_examples() {
        let (c, _) = normalize_params(&MomentParams::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(c, 0.5);
        let (_, w) = normalize_params(&MomentParams::new(0.0, -0.8472).unwrap()).unwrap();
        assert!(close(w, 0.3, 1e-4), "{w}");
        let (_, w) = normalize_params(&MomentParams::new(0.0, -2.1972).unwrap()).unwrap();
        assert!(close(w, 0.1, 1e-4), "{w}");
    }

    #[test]
    fn non_finite_params_rejected() {
        assert!(MomentParams::new(f64::NAN, 0.0).is_err());
        let p = MomentParams {
            center: 0.0,
            width: f64::INFINITY,
        };
        assert!(matches!(normalize_params(&p), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn frame_grid() {
        assert_eq!(frame_positions(2).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(frame_positions(5).unwrap().as_slice(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(frame_positions(1).unwrap().as_slice(), &[0.5]);
        assert!(frame_positions(0).is_err());
    }

    #[test]
    fn mask_values() {
        // p = c̃ ± w̃/2 on a 5-point grid: c̃ = 0.5, w̃ = 0.5 → boundaries at 0.25 and 0.75.
        let pos = frame_positions(5).unwrap();
        for gamma in [0.5, 10.0, 40.0] {
            let m = soft_mask(&params(0.5, 0.5), &pos, gamma).unwrap();
            assert!(close(m.values()[1], 0.5, 1e-12));
            assert!(close(m.values()[3], 0.5, 1e-12));
        }
        let center = FramePositions(vec![0.5, 0.0]);
        let m = soft_mask(&params(0.5, 0.3), &center, 10.0).unwrap();
        assert!(close(m.values()[0], 0.817_574_476, 1e-6), "{}", m.values()[0]);
        let m = soft_mask(&params(0.5, 0.3), &center, 40.0).unwrap();
        assert!(close(m.values()[1], 8.315e-7, 1e-9), "{}", m.values()[1]);
        assert!(soft_mask(&params(0.5, 0.3), &center, 0.0).is_err());
        assert!(soft_mask(&params(0.5, 0.3), &center, -1.0).is_err());
    }

    #[test]
    fn pooling_examples() {
        let f = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let pooled = aggregate_features(&f, &SoftMask::from_values(vec![0.75, 0.25]).unwrap()).unwrap();
        assert!(close(pooled[0], 0.75, 1e-15) && close(pooled[1], 0.25, 1e-15));

        let f = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 9.0]]).unwrap();
        for m in [0.01, 0.5, 0.97] {
            let pooled = aggregate_features(&f, &SoftMask::from_values(vec![m; 3]).unwrap()).unwrap();
            assert!(close(pooled[0], 3.0, 1e-12) && close(pooled[1], 5.0, 1e-12));
        }

        let eps = 1e-12;
        let pooled =
            aggregate_features(&f, &SoftMask::from_values(vec![1.0 - 1e-9, eps, eps]).unwrap()).unwrap();
        assert!(close(pooled[0], 1.0, 1e-9) && close(pooled[1], 2.0, 1e-9));

        let short = SoftMask::from_values(vec![0.5; 2]).unwrap();
        assert!(matches!(aggregate_features(&f, &short), Err(Error::Shape { .. })));
    }

    #[test]
    fn interval_readout() {
        let i = interval_of(&params(0.5, 0.3));
        assert!(close(i.start, 0.35, 1e-12) && close(i.end, 0.65, 1e-12));
        let i = interval_of(&params(0.05, 0.3));
        assert!(close(i.start, 0.0, 0.0) && close(i.end, 0.20, 1e-12));
        let i = interval_of(&params(0.95, 0.3));
        assert!(close(i.start, 0.80, 1e-12) && close(i.end, 1.0, 0.0));
    }

    #[test]
    fn iou_examples() {
        let a = Interval::new(0.0, 0.4).unwrap();
        let b = Interval::new(0.2, 0.6).unwrap();
        let c = Interval::new(0.7, 1.0).unwrap();
        assert_eq!(temporal_iou(&a, &a), 1.0);
        assert_eq!(temporal_iou(&a, &c), 0.0);
        assert!(close(temporal_iou(&a, &b), 1.0 / 3.0, 1e-12));
        let z = Interval::new(0.3, 0.3).unwrap();
        assert_eq!(temporal_iou(&z, &z), 1.0);
        assert_eq!(temporal_iou(&z, &Interval::new(0.4, 0.4).unwrap()), 0.0);
    }

    #[test]
    fn pt_iou_examples() {
        let m = params(0.5, 0.3);
        assert_eq!(pt_iou_loss(&[m]), 0.0);
        assert_eq!(pt_iou_loss(&[m, m]), 1.0);
        let disjoint = [params(0.1, 0.1), params(0.5, 0.1), params(0.9, 0.1)];
        assert_eq!(pt_iou_loss(&disjoint), 0.0);
        // [0,0.4], [0.2,0.6], [0.7,1.0]
        let set = [params(0.2, 0.4), params(0.4, 0.4), params(0.85, 0.3)];
        assert!(close(pt_iou_loss(&set), 1.0 / 9.0, 1e-12));
        let (v, g) = pt_iou_loss_with_grad(&set);
        assert!(close(v, 1.0 / 9.0, 1e-12));
        assert_eq!(g[2], (0.0, 0.0));
    }

    #[test]
    fn sharpness_schedule() {
        let s = SharpnessSchedule::default();
        assert_eq!((0..12).map(|i| s.at(i)).collect::<Vec<_>>()[11], 21.0);
        assert!(SharpnessSchedule::new(0.0, 1.0).is_err());
        assert!(SharpnessSchedule::new(1.0, -1.0).is_err());
    }
}
