//! Planted synthetic video for end-to-end tests.
//!
//! Sixty unit frame embeddings over a 60 s video. Three segments in
//! normalized time, `[0, 0.3]`, `[0.35, 0.6]` and `[0.7, 1.0]`, hold frames
//! near visual clusters 0, 1 and 2 of a [`MockWorld`]; frames in the gaps sit
//! near the background cluster 3.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::mock::MockWorld;
use crate::math::Matrix;
use crate::optimizer::DenseCaptionResult;
use crate::temporal::{frame_positions, temporal_iou, Interval};

pub const FRAME_COUNT: usize = 60;
pub const DURATION_SECONDS: f64 = 60.0;
pub const BACKGROUND_CLUSTER: usize = 3;
pub const FRAME_NOISE: f64 = 0.04;

#[derive(Debug, Clone)]
pub struct PlantedFixture {
    pub world: MockWorld,
    /// Frame embeddings, one unit row per frame.
    pub features: Matrix,
    pub duration: f64,
    /// Planted segments in normalized time.
    pub segments: Vec<Interval>,
    /// Visual cluster of each planted segment.
    pub clusters: Vec<usize>,
    /// Cluster of each frame.
    pub frame_clusters: Vec<usize>,
}

impl PlantedFixture {
    pub fn standard(seed: u64) -> Self {
        let world = MockWorld::new(seed);
        let segments = alloc::vec![
            Interval { start: 0.0, end: 0.3 },
            Interval { start: 0.35, end: 0.6 },
            Interval { start: 0.7, end: 1.0 },
        ];
        let clusters = alloc::vec![0, 1, 2];
        let positions = frame_positions(FRAME_COUNT).expect("non-empty");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(100);
        let mut rows = Vec::with_capacity(FRAME_COUNT);
        let mut frame_clusters = Vec::with_capacity(FRAME_COUNT);
        for &p in positions.as_slice() {
            let c = segments
                .iter()
                .zip(&clusters)
                .find(|(s, _)| p >= s.start && p <= s.end)
                .map_or(BACKGROUND_CLUSTER, |(_, &c)| c);
            frame_clusters.push(c);
            rows.push(world.sample_frame(c, FRAME_NOISE, &mut rng));
        }
        PlantedFixture {
            world,
            features: Matrix::from_rows(&rows).expect("equal rows"),
            duration: DURATION_SECONDS,
            segments,
            clusters,
            frame_clusters,
        }
    }
}

/// How well a run recovered the planted segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// tIoU of each planted segment with its paired output interval.
    pub ious: Vec<f64>,
    /// Whether each paired caption uses a word of the segment's cluster.
    pub caption_hits: Vec<bool>,
}

impl Recovery {
    pub fn mean_iou(&self) -> f64 {
        if self.ious.is_empty() {
            return 0.0;
        }
        self.ious.iter().sum::<f64>() / self.ious.len() as f64
    }

    pub fn hits(&self) -> usize {
        self.caption_hits.iter().filter(|h| **h).count()
    }
}

impl PlantedFixture {
    /// Pairs output entries with planted segments in order of interval
    /// center and scores each pair.
    pub fn recovery(&self, result: &DenseCaptionResult) -> Recovery {
        let mut entries: Vec<_> = result.entries.iter().collect();
        entries.sort_by(|a, b| {
            let ca = a.normalized.start + a.normalized.end;
            let cb = b.normalized.start + b.normalized.end;
            ca.partial_cmp(&cb).unwrap_or(core::cmp::Ordering::Equal)
        });
        let mut ious = Vec::new();
        let mut caption_hits = Vec::new();
        for ((entry, seg), &cluster) in entries.iter().zip(&self.segments).zip(&self.clusters) {
            ious.push(temporal_iou(&entry.normalized, seg));
            let words = self.world.cluster_words(cluster);
            let hit = entry
                .sentence
                .split(|c: char| !c.is_alphanumeric())
                .any(|w| words.contains(&w));
            caption_hits.push(hit);
        }
        Recovery { ious, caption_hits }
    }
}
