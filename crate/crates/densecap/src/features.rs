//! Frame-feature extraction into the cache format.
//!
//! Decoding happens outside this crate: an external decoder writes a
//! `.frames.json` file with per-frame scorer inputs at arbitrary timestamps,
//! `{"video_id", "duration", "timestamps": [...], "frames": [[...], ...]}`.
//! Extraction resamples those frames at the sampling timestamps (nearest
//! decoded frame, earlier on ties), embeds them with the scorer and caches
//! the unit embeddings.

use std::path::Path;

use densecap_core::backend::TextImageScorer;
use densecap_core::eval::{GroundTruth, Segment, VideoAnnotations};
use densecap_core::fixture::PlantedFixture;
use densecap_core::math::Matrix;
use densecap_core::sampling::SamplingSpec;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheMeta, FeatureCache, FeatureMatrix};
use crate::data_io::{parse_json, read_text, to_json_bytes, write_atomic};
use crate::error::{Error, Result};

pub const FRAMES_SUFFIX: &str = ".frames.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedFrames {
    pub video_id: String,
    pub duration: f64,
    pub timestamps: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

pub fn load_frames(path: &Path) -> Result<DecodedFrames> {
    let value = parse_json(path, &read_text(path)?)?;
    let frames: DecodedFrames =
        serde_json::from_value(value).map_err(|e| Error::field(path, "<root>", e.to_string()))?;
    if frames.timestamps.len() != frames.frames.len() {
        return Err(Error::field(
            path,
            "frames",
            format!("{} frames for {} timestamps", frames.frames.len(), frames.timestamps.len()),
        ));
    }
    Ok(frames)
}

pub fn write_frames(path: &Path, frames: &DecodedFrames) -> Result<()> {
    write_atomic(path, &to_json_bytes(frames))
}

/// Index of the decoded frame nearest to `t`; the earlier frame wins ties.
fn nearest(timestamps: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, &s) in timestamps.iter().enumerate() {
        if (s - t).abs() < (timestamps[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// Resamples, embeds and packages decoded frames; `origin` labels errors.
pub fn extract_features<S: TextImageScorer + ?Sized>(
    origin: &Path,
    decoded: &DecodedFrames,
    scorer: &S,
    sampling: &SamplingSpec,
) -> Result<FeatureCache> {
    if decoded.frames.is_empty() {
        return Err(Error::field(origin, "frames", "no decodable frames"));
    }
    if !(decoded.duration > 0.0 && decoded.duration.is_finite()) {
        return Err(Error::field(origin, "duration", format!("invalid duration {}", decoded.duration)));
    }
    let times = sampling.timestamps(decoded.duration)?;
    let rows: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| decoded.frames[nearest(&decoded.timestamps, t)].clone())
        .collect();
    let raw = Matrix::from_rows(&rows).map_err(|e| Error::field(origin, "frames", e.to_string()))?;
    let embedded = scorer.embed_frames(&raw)?;
    Ok(FeatureCache {
        features: FeatureMatrix::from_matrix(&embedded),
        meta: CacheMeta {
            video_id: decoded.video_id.clone(),
            duration: decoded.duration,
            sampling_rate: sampling.rate,
            scorer_id: scorer.config().model_id.clone(),
        },
    })
}

pub fn fixture_video_id(seed: u64) -> String {
    format!("fixture_{seed}")
}

/// Planted fixture as decoded frames at the one-per-second sampling times.
pub fn fixture_frames(seed: u64) -> DecodedFrames {
    let fx = PlantedFixture::standard(seed);
    let timestamps = SamplingSpec::default()
        .timestamps(fx.duration)
        .expect("positive duration");
    DecodedFrames {
        video_id: fixture_video_id(seed),
        duration: fx.duration,
        timestamps,
        frames: fx.features.iter_rows().map(<[f64]>::to_vec).collect(),
    }
}

/// Planted segments in seconds, each described by three words of its cluster.
pub fn fixture_ground_truth(seed: u64) -> GroundTruth {
    let fx = PlantedFixture::standard(seed);
    let segments = fx
        .segments
        .iter()
        .zip(&fx.clusters)
        .map(|(s, &c)| {
            let w = fx.world.cluster_words(c);
            Segment {
                timestamp: s.scaled(fx.duration),
                sentence: format!("a {} {} {}.", w[0], w[1], w[2]),
            }
        })
        .collect();
    let mut gt = GroundTruth::new();
    gt.insert(
        fixture_video_id(seed),
        VideoAnnotations {
            duration: fx.duration,
            segments,
        },
    );
    gt
}

#[cfg(test)]
mod tests {
    use super::*;
    use densecap_core::backend::mock::MockWorld;

    fn decoded(duration: f64, times: Vec<f64>) -> DecodedFrames {
        let frames = times.iter().map(|&t| vec![1.0, t, 0.0]).collect();
        DecodedFrames {
            video_id: "v".into(),
            duration,
            timestamps: times,
            frames,
        }
    }

    struct Identity(densecap_core::backend::ScorerConfig);

    impl TextImageScorer for Identity {
        fn config(&self) -> &densecap_core::backend::ScorerConfig {
            &self.0
        }
        fn embed_text(&self, _: &str) -> densecap_core::Result<Vec<f64>> {
            Ok(vec![1.0, 0.0, 0.0])
        }
        fn embed_frames(&self, frames: &Matrix) -> densecap_core::Result<Matrix> {
            Ok(frames.clone())
        }
    }

    fn identity() -> Identity {
        Identity(densecap_core::backend::ScorerConfig {
            model_id: "identity".into(),
            dim: 3,
            max_text_tokens: 77,
            logit_scale: 1.0,
        })
    }

    #[test]
    fn sixty_point_four_seconds() {
        let times: Vec<f64> = (0..1812).map(|k| k as f64 / 30.0).collect();
        let cache = extract_features(Path::new("v"), &decoded(60.4, times), &identity(), &SamplingSpec::default()).unwrap();
        assert_eq!(cache.features.rows(), 60);
        let m = cache.features.to_matrix();
        // The second coordinate carries the decoded frame time.
        assert!((m.get(0, 1) - 0.5).abs() < 1e-6 && (m.get(59, 1) - 59.5).abs() < 1e-4);
    }

    #[test]
    fn short_clip_single_frame() {
        let cache = extract_features(
            Path::new("v"),
            &decoded(0.6, vec![0.0, 0.2, 0.4]),
            &identity(),
            &SamplingSpec::default(),
        )
        .unwrap();
        assert_eq!(cache.features.rows(), 1);
        // Sampled at 0.3 s: equidistant from 0.2 and 0.4, the earlier wins.
        assert!((cache.features.to_matrix().get(0, 1) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let s = identity();
        assert!(extract_features(Path::new("v"), &decoded(0.0, vec![0.0]), &s, &SamplingSpec::default()).is_err());
        assert!(extract_features(Path::new("v"), &decoded(5.0, vec![]), &s, &SamplingSpec::default()).is_err());
    }

    #[test]
    fn fixture_frames_reproduce_the_planted_features() {
        let world = MockWorld::new(7);
        let frames = fixture_frames(7);
        let cache = extract_features(Path::new("f"), &frames, &world.scorer(), &SamplingSpec::default()).unwrap();
        let fx = PlantedFixture::standard(7);
        assert_eq!(cache.features, FeatureMatrix::from_matrix(&fx.features));
        assert_eq!(cache.meta.scorer_id, "mock-scorer:7");
        let gt = fixture_ground_truth(7);
        gt["fixture_7"].validate("fixture_7").unwrap();
        assert_eq!(gt["fixture_7"].segments[2].timestamp.end, 60.0);
    }
}
