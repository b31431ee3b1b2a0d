//! Dense-captioning metrics: threshold matching, CIDEr, a SODA-style
//! order-preserving alignment score and corpus reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::{temporal_iou, Interval};

/// tIoU thresholds used by the reports.
pub const THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

/// A captioned interval in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub timestamp: Interval,
    pub sentence: String,
}

/// Ground-truth annotations of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotations {
    pub duration: f64,
    pub segments: Vec<Segment>,
}

impl VideoAnnotations {
    /// Checks `0 ≤ start ≤ end ≤ duration` for every segment.
    pub fn validate(&self, video_id: &str) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "video {video_id}: invalid duration {}",
                self.duration
            )));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            let Interval { start, end } = seg.timestamp;
            if !(start.is_finite() && end.is_finite()) || start < 0.0 || start > end || end > self.duration {
                return Err(Error::InvalidArgument(format!(
                    "video {video_id}: segment {k} [{start}, {end}] outside [0, {}] or reversed",
                    self.duration
                )));
            }
        }
        Ok(())
    }
}

pub type GroundTruth = BTreeMap<String, VideoAnnotations>;
pub type Predictions = BTreeMap<String, Vec<Segment>>;

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "threshold",
            value: threshold,
        })
    }
}

/// Greedy one-to-one matching: candidate pairs with tIoU ≥ `threshold` are
/// visited by descending tIoU, ties by (pred index, gt index), and accepted
/// when both sides are still free. Pairs come back in acceptance order.
pub fn match_at_threshold(preds: &[Interval], gts: &[Interval], threshold: f64) -> Result<Vec<(usize, usize)>> {
    check_threshold(threshold)?;
    let mut edges = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = temporal_iou(p, g);
            if iou >= threshold {
                edges.push((iou, i, j));
            }
        }
    }
    edges.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut out = Vec::new();
    for (_, i, j) in edges {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            out.push((i, j));
        }
    }
    Ok(out)
}

/// Lowercased alphanumeric tokens; everything else separates words.
pub fn caption_tokens(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

type NgramCounts = BTreeMap<Vec<String>, f64>;

fn ngram_counts(tokens: &[String], n: usize) -> NgramCounts {
    let mut counts = NgramCounts::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn tf_idf<'a>(counts: &'a NgramCounts, df: &BTreeMap<&[String], f64>, corpus: f64) -> BTreeMap<&'a [String], f64> {
    counts
        .iter()
        .map(|(g, tf)| {
            let idf = libm::log(corpus / df.get(g.as_slice()).copied().unwrap_or(0.0).max(1.0));
            (g.as_slice(), tf * idf)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderScore {
    /// Per-pair scores, in input order.
    pub pairs: Vec<f64>,
    pub mean: f64,
    /// Pairs whose candidate or reference had no tokens; they score 0.
    pub empty_sentences: usize,
}

/// CIDEr over (candidate, reference) pairs with one reference each:
/// n = 1..4, term frequency × `ln(M / max(1, df))` with `M` the pair count
/// and `df` the number of references containing the n-gram, cosine per n,
/// uniform average over n. No ×10 scaling.
pub fn cider(pairs: &[(String, String)]) -> Result<CiderScore> {
    if pairs.is_empty() {
        return Err(Error::invalid_arg("CIDEr needs at least one pair"));
    }
    const MAX_N: usize = 4;
    let tokenized: Vec<(Vec<String>, Vec<String>)> =
        pairs.iter().map(|(c, r)| (caption_tokens(c), caption_tokens(r))).collect();
    let corpus = pairs.len() as f64;
    let mut scores = vec![0.0; pairs.len()];
    for n in 1..=MAX_N {
        let refs: Vec<NgramCounts> = tokenized.iter().map(|(_, r)| ngram_counts(r, n)).collect();
        let cands: Vec<NgramCounts> = tokenized.iter().map(|(c, _)| ngram_counts(c, n)).collect();
        let mut df: BTreeMap<&[String], f64> = BTreeMap::new();
        for r in &refs {
            for g in r.keys() {
                *df.entry(g.as_slice()).or_insert(0.0) += 1.0;
            }
        }
        for (k, (c, r)) in cands.iter().zip(&refs).enumerate() {
            let (vc, vr) = (tf_idf(c, &df, corpus), tf_idf(r, &df, corpus));
            let nc = libm::sqrt(vc.values().map(|x| x * x).sum::<f64>());
            let nr = libm::sqrt(vr.values().map(|x| x * x).sum::<f64>());
            if nc > 0.0 && nr > 0.0 {
                let d: f64 = vc.iter().filter_map(|(g, x)| vr.get(g).map(|y| x * y)).sum();
                scores[k] += d / (nc * nr) / MAX_N as f64;
            }
        }
    }
    let empty_sentences = tokenized.iter().filter(|(c, r)| c.is_empty() || r.is_empty()).count();
    let mean = scores.iter().sum::<f64>() / corpus;
    Ok(CiderScore {
        pairs: scores,
        mean,
        empty_sentences,
    })
}

/// Sentence similarity used to weight SODA-style alignments. Implementations
/// should return values in [0, 1].
pub trait SentenceScorer {
    fn score(&self, candidate: &str, reference: &str) -> f64;
}

/// Unigram F1 between token multisets.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnigramF1;

impl SentenceScorer for UnigramF1 {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        let c = ngram_counts(&caption_tokens(candidate), 1);
        let r = ngram_counts(&caption_tokens(reference), 1);
        let nc: f64 = c.values().sum();
        let nr: f64 = r.values().sum();
        let overlap: f64 = c.iter().filter_map(|(g, x)| r.get(g).map(|y| x.min(*y))).sum();
        if overlap == 0.0 {
            return 0.0;
        }
        2.0 * overlap / (nc + nr)
    }
}

/// Scores every sentence pair with the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl SentenceScorer for ConstantScorer {
    fn score(&self, _: &str, _: &str) -> f64 {
        self.0
    }
}

fn time_order(segments: &[Segment]) -> Vec<&Segment> {
    let mut v: Vec<&Segment> = segments.iter().collect();
    v.sort_by(|a, b| {
        a.timestamp
            .start
            .partial_cmp(&b.timestamp.start)
            .unwrap_or(Ordering::Equal)
            .then(a.timestamp.end.partial_cmp(&b.timestamp.end).unwrap_or(Ordering::Equal))
    });
    v
}

/// Maximum total weight of an order-preserving alignment between predictions
/// and ground truth, pair weight `tIoU × sentence score`, turned into an
/// F-measure with precision `V / #pred` and recall `V / #gt`, which is
/// `2V / (#pred + #gt)`. Both lists are put in time order first (stable).
pub fn soda_style<S: SentenceScorer + ?Sized>(preds: &[Segment], gts: &[Segment], scorer: &S) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let p = time_order(preds);
    let g = time_order(gts);
    let cols = g.len() + 1;
    let mut table = vec![0.0f64; (p.len() + 1) * cols];
    for i in 1..=p.len() {
        for j in 1..=g.len() {
            let iou = temporal_iou(&p[i - 1].timestamp, &g[j - 1].timestamp);
            let w = if iou > 0.0 {
                iou * scorer.score(&p[i - 1].sentence, &g[j - 1].sentence)
            } else {
                0.0
            };
            let diag = table[(i - 1) * cols + j - 1] + w;
            table[i * cols + j] = diag.max(table[(i - 1) * cols + j]).max(table[i * cols + j - 1]);
        }
    }
    let value = table[p.len() * cols + g.len()];
    2.0 * value / (p.len() + g.len()) as f64
}

/// Optional corpus-level caption metric computed outside this crate (e.g.
/// METEOR, which needs external linguistic resources).
pub trait ExternalMetric {
    fn name(&self) -> &str;
    /// Mean score over (candidate, reference) pairs.
    fn score(&self, pairs: &[(String, String)]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub matched: usize,
    /// Per-video `matched / #pred`, averaged over videos.
    pub precision: f64,
    /// Per-video `matched / #gt`, averaged over videos.
    pub recall: f64,
    /// Sum of matched-pair CIDEr divided by the total prediction count.
    pub cider: f64,
    pub external: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub video_id: String,
    pub predictions: usize,
    pub ground_truth: usize,
    /// Matched-pair counts, one per threshold.
    pub matched: Vec<usize>,
    pub soda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<ThresholdReport>,
    /// Mean of the per-threshold CIDEr values.
    pub cider: f64,
    /// Mean of the per-video SODA-style scores.
    pub soda: f64,
    pub precision: f64,
    pub recall: f64,
    /// Name and threshold-averaged value of the external metric, if any.
    pub external: Option<(String, f64)>,
    pub videos: Vec<VideoReport>,
    pub warnings: Vec<String>,
}

/// Evaluates `predictions` against every ground-truth video. Videos without
/// predictions count as zero matches; predictions for unknown videos are
/// ignored with a warning.
pub fn evaluate_corpus(
    ground_truth: &GroundTruth,
    predictions: &Predictions,
    sentence_scorer: &dyn SentenceScorer,
    external: Option<&dyn ExternalMetric>,
) -> Result<EvalReport> {
    let mut warnings = Vec::new();
    for id in predictions.keys() {
        if !ground_truth.contains_key(id) {
            warnings.push(format!("predictions for unknown video {id} ignored"));
        }
    }
    let empty = Vec::new();
    let n_videos = ground_truth.len();
    let total_preds: usize = ground_truth
        .keys()
        .map(|id| predictions.get(id).map_or(0, Vec::len))
        .sum();

    let mut videos: Vec<VideoReport> = Vec::with_capacity(n_videos);
    for (id, gt) in ground_truth {
        let preds = predictions.get(id).unwrap_or(&empty);
        videos.push(VideoReport {
            video_id: id.clone(),
            predictions: preds.len(),
            ground_truth: gt.segments.len(),
            matched: Vec::with_capacity(THRESHOLDS.len()),
            soda: soda_style(preds, &gt.segments, sentence_scorer),
        });
    }

    let mut thresholds = Vec::with_capacity(THRESHOLDS.len());
    for &t in &THRESHOLDS {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let (mut precision, mut recall, mut matched_total) = (0.0, 0.0, 0);
        for ((id, gt), report) in ground_truth.iter().zip(videos.iter_mut()) {
            let preds = predictions.get(id).unwrap_or(&empty);
            let pi: Vec<Interval> = preds.iter().map(|s| s.timestamp).collect();
            let gi: Vec<Interval> = gt.segments.iter().map(|s| s.timestamp).collect();
            let matches = match_at_threshold(&pi, &gi, t)?;
            for &(i, j) in &matches {
                pairs.push((preds[i].sentence.clone(), gt.segments[j].sentence.clone()));
            }
            if !preds.is_empty() {
                precision += matches.len() as f64 / preds.len() as f64;
            }
            if !gi.is_empty() {
                recall += matches.len() as f64 / gi.len() as f64;
            }
            matched_total += matches.len();
            report.matched.push(matches.len());
        }
        let (cider_value, external_value) = if pairs.is_empty() {
            (0.0, external.map(|_| 0.0))
        } else {
            let c = cider(&pairs)?;
            if c.empty_sentences > 0 {
                warnings.push(format!("threshold {t}: {} empty sentences scored 0", c.empty_sentences));
            }
            let sum: f64 = c.pairs.iter().sum();
            let ext = match external {
                Some(m) => Some(m.score(&pairs)? * pairs.len() as f64 / total_preds as f64),
                None => None,
            };
            (sum / total_preds as f64, ext)
        };
        let denom = n_videos.max(1) as f64;
        thresholds.push(ThresholdReport {
            threshold: t,
            matched: matched_total,
            precision: precision / denom,
            recall: recall / denom,
            cider: cider_value,
            external: external_value,
        });
    }

    let k = thresholds.len() as f64;
    let mean = |f: fn(&ThresholdReport) -> f64| thresholds.iter().map(f).sum::<f64>() / k;
    let external = external.map(|m| {
        let v = thresholds.iter().map(|t| t.external.unwrap_or(0.0)).sum::<f64>() / k;
        (String::from(m.name()), v)
    });
    let soda = if videos.is_empty() {
        0.0
    } else {
        videos.iter().map(|v| v.soda).sum::<f64>() / videos.len() as f64
    };
    Ok(EvalReport {
        cider: mean(|t| t.cider),
        precision: mean(|t| t.precision),
        recall: mean(|t| t.recall),
        thresholds,
        soda,
        external,
        videos,
        warnings,
    })
}
