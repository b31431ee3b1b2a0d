//! One-frame-per-second sampling at second centers.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Frames per second.
    pub rate: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { rate: 1.0 }
    }
}

impl SamplingSpec {
    fn check(&self, duration: f64) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sampling rate",
                value: self.rate,
            });
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "duration",
                value: duration,
            });
        }
        Ok(())
    }

    /// `max(1, round(duration · rate))`.
    pub fn frame_count(&self, duration: f64) -> Result<usize> {
        self.check(duration)?;
        Ok((libm::round(duration * self.rate) as usize).max(1))
    }

    /// Timestamps `(j − 0.5) / rate` for `j = 1..=L`. When rounding up would
    /// push the last center to or past the end of the video, the centers of
    /// `L` equal slices of the video are used instead. A single frame lands at
    /// `min(0.5 / rate, duration / 2)`.
    pub fn timestamps(&self, duration: f64) -> Result<Vec<f64>> {
        let n = self.frame_count(duration)?;
        let last = (n as f64 - 0.5) / self.rate;
        Ok(if n == 1 {
            alloc::vec![(0.5 / self.rate).min(duration / 2.0)]
        } else if last < duration {
            (1..=n).map(|j| (j as f64 - 0.5) / self.rate).collect()
        } else {
            (1..=n).map(|j| duration * (j as f64 - 0.5) / n as f64).collect()
        })
    }
}
