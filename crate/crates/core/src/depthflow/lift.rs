use alloc::vec::Vec;

use super::calibrate::ScaleShift;
use super::flow::{FlowBundle, ObjectFlow3D};
use crate::Result;

/// What [`lift_flow`] dropped along the way.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LiftReport {
    /// Visible `(t, i)` entries whose calibrated depth was not positive.
    pub demoted: Vec<(usize, usize)>,
    pub empty_timesteps: Vec<usize>,
}

/// Lifts every visible track into the robot frame using the calibrated
/// depth at its (nearest) pixel.
pub fn lift_flow(bundle: &FlowBundle, calib: &ScaleShift) -> Result<(ObjectFlow3D, LiftReport)> {
    bundle.validate()?;
    let tracks = &bundle.tracks;
    let mut flow = ObjectFlow3D::empty(tracks.timesteps(), tracks.points());
    let mut report = LiftReport::default();
    for t in 0..tracks.timesteps() {
        let depth = &bundle.depths[t];
        for i in 0..tracks.points() {
            if !tracks.visible(t, i) {
                continue;
            }
            let pixel = tracks.pixel(t, i);
            let lifted = depth
                .sample(&pixel)
                .map(|z| calib.apply(z))
                .and_then(|z| bundle.camera.backproject(&pixel, z).ok());
            match lifted {
                Some(p) => flow.set(t, i, Some(p)),
                None => report.demoted.push((t, i)),
            }
        }
    }
    report.empty_timesteps = flow.empty_timesteps();
    Ok((flow, report))
}
