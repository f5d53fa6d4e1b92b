use alloc::vec::Vec;

use super::flow::{Mask, Tracks2D};
use crate::{Error, Result};

/// A track is movable when its mean per-step displacement reaches this many
/// pixels (inclusive).
pub const DEFAULT_MOVABLE_THRESHOLD_PX: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MovableReport {
    pub movable: Vec<usize>,
    pub stationary: Vec<usize>,
    /// Tracks never visible on two consecutive frames.
    pub unclassified: Vec<usize>,
    /// Mean displacement per track in pixels, `None` when unclassified.
    pub mean_displacement: Vec<Option<f64>>,
    /// Visibility after applying the part masks, timestep-major `T×n`.
    pub visibility: Vec<bool>,
}

/// Splits tracks into movable and stationary by mean 2D displacement over
/// consecutive frame pairs where the track is visible in both frames.
///
/// With `part_masks`, a visible point outside the part mask at frame `t` is
/// marked invisible at `t` in the returned visibility.
pub fn filter_movable(tracks: &Tracks2D, part_masks: Option<&[Mask]>, threshold_px: f64) -> Result<MovableReport> {
    let (t_count, n) = (tracks.timesteps(), tracks.points());
    if t_count < 2 {
        return Err(Error::InvalidInput("movability needs at least two timesteps".into()));
    }
    if let Some(masks) = part_masks {
        if masks.len() != t_count {
            return Err(Error::InvalidInput("one part mask per timestep is required".into()));
        }
    }
    let mut report = MovableReport {
        movable: Vec::new(),
        stationary: Vec::new(),
        unclassified: Vec::new(),
        mean_displacement: Vec::with_capacity(n),
        visibility: tracks.visibility().to_vec(),
    };
    for i in 0..n {
        let (mut total, mut pairs) = (0.0, 0usize);
        for t in 1..t_count {
            if tracks.visible(t - 1, i) && tracks.visible(t, i) {
                total += (tracks.pixel(t, i) - tracks.pixel(t - 1, i)).norm();
                pairs += 1;
            }
        }
        if pairs == 0 {
            report.unclassified.push(i);
            report.mean_displacement.push(None);
            continue;
        }
        let mean = total / pairs as f64;
        report.mean_displacement.push(Some(mean));
        if mean >= threshold_px {
            report.movable.push(i);
        } else {
            report.stationary.push(i);
        }
    }
    if let Some(masks) = part_masks {
        for (t, mask) in masks.iter().enumerate() {
            for i in 0..n {
                let k = t * n + i;
                if report.visibility[k] && !mask.sample(&tracks.pixel(t, i)) {
                    report.visibility[k] = false;
                }
            }
        }
    }
    Ok(report)
}
