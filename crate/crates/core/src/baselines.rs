//! Zero-shot comparison baselines that need no optimization.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::TextImageScorer;
use crate::error::{Error, Result};
use crate::eval::Segment;
use crate::math::{dot, Matrix};
use crate::temporal::Interval;

/// Default interval width as a fraction of the video duration.
pub const DEFAULT_WIDTH_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub name: String,
    pub width_fraction: f64,
    /// Beam size the external captioner used; carried as metadata only.
    pub beam_size: Option<usize>,
}

impl BaselineConfig {
    pub fn new(name: impl Into<String>) -> Self {
        BaselineConfig {
            name: name.into(),
            width_fraction: DEFAULT_WIDTH_FRACTION,
            beam_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_fraction > 0.0 && self.width_fraction <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "width_fraction",
                value: self.width_fraction,
            })
        }
    }
}

/// `n` equal contiguous intervals covering `[0, duration]`.
pub fn uniform_segments(duration: f64, n: usize) -> Result<Vec<Interval>> {
    if n == 0 {
        return Err(Error::invalid_arg("uniform_segments needs n >= 1"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "duration",
            value: duration,
        });
    }
    let step = duration / n as f64;
    Ok((0..n)
        .map(|k| Interval {
            start: step * k as f64,
            end: if k + 1 == n { duration } else { step * (k + 1) as f64 },
        })
        .collect())
}

/// Places each caption at the frame it scores highest against (earliest frame
/// on ties) and gives it a fixed width of `width_fraction · duration`,
/// clipped to the video. `timestamps` are the frame times in seconds.
pub fn caption_then_match<S: TextImageScorer + ?Sized>(
    captions: &[String],
    frame_features: &Matrix,
    timestamps: &[f64],
    duration: f64,
    scorer: &S,
    width_fraction: f64,
) -> Result<Vec<Segment>> {
    if captions.is_empty() {
        return Err(Error::invalid_arg("caption_then_match needs at least one caption"));
    }
    if frame_features.rows() == 0 {
        return Err(Error::invalid_arg("no frame features"));
    }
    if timestamps.len() != frame_features.rows() {
        return Err(Error::Shape {
            what: "frame timestamps",
            expected: frame_features.rows(),
            actual: timestamps.len(),
        });
    }
    if !(width_fraction > 0.0 && width_fraction <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "width_fraction",
            value: width_fraction,
        });
    }
    let frames = scorer.embed_frames(frame_features)?;
    let half = width_fraction * duration / 2.0;
    captions
        .iter()
        .map(|caption| {
            let text = scorer.embed_text(caption)?;
            let mut best = (0, f64::NEG_INFINITY);
            for (j, row) in frames.iter_rows().enumerate() {
                let s = dot(&text, row);
                if s > best.1 {
                    best = (j, s);
                }
            }
            let center = timestamps[best.0];
            Ok(Segment {
                timestamp: Interval {
                    start: (center - half).max(0.0),
                    end: (center + half).min(duration),
                },
                sentence: caption.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockWorld;
    use crate::fixture::PlantedFixture;
    use crate::sampling::SamplingSpec;
    use alloc::vec;

    #[test]
    fn uniform_examples() {
        let s = uniform_segments(100.0, 4).unwrap();
        let ends: Vec<(f64, f64)> = s.iter().map(|i| (i.start, i.end)).collect();
        assert_eq!(ends, vec![(0.0, 25.0), (25.0, 50.0), (50.0, 75.0), (75.0, 100.0)]);
        assert_eq!(uniform_segments(7.5, 1).unwrap(), vec![Interval { start: 0.0, end: 7.5 }]);
        let z = uniform_segments(0.0, 3).unwrap();
        assert!(z.iter().all(|i| i.start == 0.0 && i.end == 0.0) && z.len() == 3);
        assert!(uniform_segments(10.0, 0).is_err());
    }

    #[test]
    fn clipped_width() {
        // A single caption on a one-frame "video" sampled at 95 s.
        let world = MockWorld::new(0);
        let scorer = world.scorer();
        let f = Matrix::from_rows(&[world.cluster_direction(0)]).unwrap();
        let out = caption_then_match(&["red square".into()], &f, &[95.0], 100.0, &scorer, 0.3).unwrap();
        assert_eq!(out[0].timestamp, Interval { start: 80.0, end: 100.0 });
    }

    #[test]
    fn ties_pick_earliest_frame() {
        let world = MockWorld::new(0);
        let scorer = world.scorer();
        let d = world.cluster_direction(1);
        let f = Matrix::from_rows(&[d.clone(), d.clone(), d]).unwrap();
        let out = caption_then_match(&["red square".into()], &f, &[0.5, 1.5, 2.5], 3.0, &scorer, 0.3).unwrap();
        assert!((out[0].timestamp.start - 0.05).abs() < 1e-12);
        assert!(caption_then_match(&[], &f, &[0.5, 1.5, 2.5], 3.0, &scorer, 0.3).is_err());
    }

    #[test]
    fn planted_frame_match() {
        // Frame 30 of the fixture is replaced by the caption's own embedding.
        let fx = PlantedFixture::standard(3);
        let scorer = fx.world.scorer();
        let ts = SamplingSpec::default().timestamps(fx.duration).unwrap();
        let caption = String::from("blue circle");
        let mut features = fx.features.clone();
        features.row_mut(30).copy_from_slice(&scorer.embed_text(&caption).unwrap());
        let out = caption_then_match(&[caption], &features, &ts, fx.duration, &scorer, 0.3).unwrap();
        assert_eq!(out[0].timestamp, Interval { start: 21.5, end: 39.5 });
    }
}
