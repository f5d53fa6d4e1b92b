use alloc::vec::Vec;

use super::flow::{DepthMap, Mask};
use crate::{Error, Result};

/// Affine depth correction `Z = s·Z̃ + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleShift {
    pub scale: f64,
    /// Meters.
    pub shift: f64,
}

impl ScaleShift {
    pub const IDENTITY: ScaleShift = ScaleShift { scale: 1.0, shift: 0.0 };

    pub fn apply(&self, depth: f64) -> f64 {
        self.scale * depth + self.shift
    }
}

/// Closed-form least squares `argmin Σ (s·pred + b − ref)²` over the valid
/// pixels. Pixels where either depth is non-finite or non-positive are
/// skipped even when marked valid.
pub fn calibrate_scale_shift(pred: &DepthMap, reference: &DepthMap, valid: &Mask) -> Result<ScaleShift> {
    if !pred.same_shape(reference) || valid.width != pred.width || valid.height != pred.height {
        return Err(Error::InvalidInput("calibration inputs differ in resolution".into()));
    }
    let pairs = || {
        pred.data
            .iter()
            .zip(&reference.data)
            .zip(&valid.data)
            .filter(|(_, m)| **m)
            .map(|((p, r), _)| (*p as f64, *r as f64))
            .filter(|(p, r)| usable(*p) && usable(*r))
    };
    let count = pairs().count();
    if count < 2 {
        return Err(Error::RankDeficient("fewer than two valid pixels"));
    }
    let n = count as f64;
    let (sum_p, sum_r) = pairs().fold((0.0, 0.0), |(a, b), (p, r)| (a + p, b + r));
    let (mean_p, mean_r) = (sum_p / n, sum_r / n);
    let (mut spp, mut spr) = (0.0, 0.0);
    for (p, r) in pairs() {
        let dp = p - mean_p;
        spp += dp * dp;
        spr += dp * (r - mean_r);
    }
    if spp <= f64::EPSILON * f64::EPSILON * n * mean_p * mean_p || spp == 0.0 {
        return Err(Error::RankDeficient("predicted depth is constant over valid pixels"));
    }
    let scale = spr / spp;
    if !(scale > 0.0) {
        return Err(Error::CalibrationFailure(scale));
    }
    Ok(ScaleShift {
        scale,
        shift: mean_r - scale * mean_p,
    })
}

fn usable(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Pixels used for calibration: both depths finite and positive, and the
/// predicted depth within its own [1st, 99th] percentile range. An optional
/// region further restricts the set.
pub fn calibration_mask(pred: &DepthMap, reference: &DepthMap, region: Option<&Mask>) -> Mask {
    let mut values: Vec<f32> = pred.data.iter().copied().filter(|d| usable(*d as f64)).collect();
    let mut mask = Mask::filled(pred.width, pred.height, false);
    if values.is_empty() || !pred.same_shape(reference) {
        return mask;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = |q: f64| values[((values.len() - 1) as f64 * q + 0.5) as usize];
    let (lo, hi) = (rank(0.01), rank(0.99));
    for (k, m) in mask.data.iter_mut().enumerate() {
        let (p, r) = (pred.data[k], reference.data[k]);
        let inside = region.is_none_or(|reg| reg.data.get(k).copied().unwrap_or(false));
        *m = inside && usable(p as f64) && usable(r as f64) && p >= lo && p <= hi;
    }
    mask
}
