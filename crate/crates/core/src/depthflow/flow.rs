use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector2;
use num_traits::Float;

use crate::se3::{CameraModel, Vec3};
use crate::{Error, Result};

/// Row-major depth image in meters (or unscaled units before calibration).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "depth map {}x{} needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize] as f64
    }

    /// Nearest-pixel lookup at a continuous pixel coordinate.
    pub fn sample(&self, pixel: &Vector2<f64>) -> Option<f64> {
        let (x, y) = nearest_pixel(pixel, self.width, self.height)?;
        Some(self.get(x, y))
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Row-major binary image.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "mask {}x{} needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn sample(&self, pixel: &Vector2<f64>) -> bool {
        nearest_pixel(pixel, self.width, self.height)
            .map(|(x, y)| self.get(x, y))
            .unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

pub(crate) fn nearest_pixel(pixel: &Vector2<f64>, width: u32, height: u32) -> Option<(u32, u32)> {
    if !(pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < width as f64 && pixel.y < height as f64) {
        return None;
    }
    let x = Float::min(Float::round(pixel.x), (width - 1) as f64) as u32;
    let y = Float::min(Float::round(pixel.y), (height - 1) as f64) as u32;
    Some((x, y))
}

/// 2D point tracks `c_i^t` with visibility `v_i^t`, stored timestep-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracks2D {
    timesteps: usize,
    points: usize,
    pixels: Vec<Vector2<f64>>,
    visibility: Vec<bool>,
}

impl Tracks2D {
    pub fn new(timesteps: usize, points: usize, pixels: Vec<Vector2<f64>>, visibility: Vec<bool>) -> Result<Self> {
        let len = timesteps * points;
        if pixels.len() != len || visibility.len() != len {
            return Err(Error::InvalidInput(format!(
                "tracks need {len} entries for {timesteps}x{points}, got {} pixels and {} flags",
                pixels.len(),
                visibility.len()
            )));
        }
        Ok(Self { timesteps, points, pixels, visibility })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn pixel(&self, t: usize, i: usize) -> Vector2<f64> {
        self.pixels[t * self.points + i]
    }

    pub fn visible(&self, t: usize, i: usize) -> bool {
        self.visibility[t * self.points + i]
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    pub fn with_visibility(&self, visibility: Vec<bool>) -> Result<Self> {
        Self::new(self.timesteps, self.points, self.pixels.clone(), visibility)
    }

    /// Reorders the tracks so that new track `k` is old track `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        let mut visibility = Vec::with_capacity(self.visibility.len());
        for t in 0..self.timesteps {
            for &i in perm {
                pixels.push(self.pixel(t, i));
                visibility.push(self.visible(t, i));
            }
        }
        Self {
            timesteps: self.timesteps,
            points: perm.len(),
            pixels,
            visibility,
        }
    }
}

/// Every input needed to lift a video into 3D object flow.
#[derive(Clone, Debug)]
pub struct FlowBundle {
    pub tracks: Tracks2D,
    /// Predicted depth `Z̃_t`, one map per timestep.
    pub depths: Vec<DepthMap>,
    /// Metric reference depth `D_0` from the robot camera.
    pub ref_depth: DepthMap,
    pub object_mask: Mask,
    pub part_masks: Option<Vec<Mask>>,
    pub camera: CameraModel,
}

impl FlowBundle {
    /// Checks the structural invariants; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let t_count = self.tracks.timesteps();
        if t_count == 0 || self.tracks.points() == 0 {
            return Err(Error::InvalidInput("bundle has no timesteps or no points".into()));
        }
        if self.depths.len() != t_count {
            return Err(Error::InvalidInput(format!(
                "bundle has {} depth maps for {} timesteps",
                self.depths.len(),
                t_count
            )));
        }
        if self.depths.iter().any(|d| !d.same_shape(&self.ref_depth)) {
            return Err(Error::InvalidInput("depth maps and reference depth differ in resolution".into()));
        }
        if self.ref_depth.width != self.camera.width || self.ref_depth.height != self.camera.height {
            return Err(Error::InvalidInput("depth resolution differs from camera image size".into()));
        }
        if self.object_mask.width != self.ref_depth.width || self.object_mask.height != self.ref_depth.height {
            return Err(Error::InvalidInput("object mask resolution differs from depth".into()));
        }
        if let Some(parts) = &self.part_masks {
            if parts.len() != t_count {
                return Err(Error::InvalidInput(format!(
                    "bundle has {} part masks for {} timesteps",
                    parts.len(),
                    t_count
                )));
            }
        }
        for t in 0..t_count {
            for i in 0..self.tracks.points() {
                if self.tracks.visible(t, i) && !self.camera.contains(&self.tracks.pixel(t, i)) {
                    let p = self.tracks.pixel(t, i);
                    return Err(Error::InvalidInput(format!(
                        "visible track ({t}, {i}) at ({}, {}) lies outside the image",
                        p.x, p.y
                    )));
                }
            }
        }
        if !(0..self.tracks.points()).any(|i| self.tracks.visible(0, i)) {
            return Err(Error::InvalidInput("no visible point in the first frame".into()));
        }
        Ok(())
    }
}

/// Robot-frame positions `P_{1:T}` of `n` tracked points with visibility.
///
/// Invisible entries hold NaN positions. Timesteps with no visible point are
/// kept so that timestep indices stay aligned with the source video.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectFlow3D {
    timesteps: usize,
    points: usize,
    positions: Vec<Vec3>,
    visibility: Vec<bool>,
}

impl ObjectFlow3D {
    /// All entries invisible.
    pub fn empty(timesteps: usize, points: usize) -> Self {
        Self {
            timesteps,
            points,
            positions: vec![Vec3::repeat(f64::NAN); timesteps * points],
            visibility: vec![false; timesteps * points],
        }
    }

    pub fn new(timesteps: usize, points: usize, positions: Vec<Vec3>, visibility: Vec<bool>) -> Result<Self> {
        let len = timesteps * points;
        if positions.len() != len || visibility.len() != len {
            return Err(Error::InvalidInput(format!(
                "flow needs {len} entries for {timesteps}x{points}, got {} positions and {} flags",
                positions.len(),
                visibility.len()
            )));
        }
        let mut flow = Self { timesteps, points, positions, visibility };
        for k in 0..len {
            if flow.visibility[k] {
                if !flow.positions[k].iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "visible flow entry ({}, {}) is not finite",
                        k / points,
                        k % points
                    )));
                }
            } else {
                flow.positions[k] = Vec3::repeat(f64::NAN);
            }
        }
        Ok(flow)
    }

    /// Fully visible flow from per-timestep point lists.
    pub fn from_frames(frames: &[Vec<Vec3>]) -> Result<Self> {
        let points = frames.first().map_or(0, |f| f.len());
        if frames.iter().any(|f| f.len() != points) {
            return Err(Error::InvalidInput("frames differ in point count".into()));
        }
        let positions: Vec<Vec3> = frames.iter().flatten().copied().collect();
        let visibility = vec![true; positions.len()];
        Self::new(frames.len(), points, positions, visibility)
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn position(&self, t: usize, i: usize) -> Option<Vec3> {
        let k = t * self.points + i;
        self.visibility[k].then(|| self.positions[k])
    }

    pub fn visible(&self, t: usize, i: usize) -> bool {
        self.visibility[t * self.points + i]
    }

    pub fn set(&mut self, t: usize, i: usize, position: Option<Vec3>) {
        let k = t * self.points + i;
        match position {
            Some(p) => {
                self.positions[k] = p;
                self.visibility[k] = true;
            }
            None => {
                self.positions[k] = Vec3::repeat(f64::NAN);
                self.visibility[k] = false;
            }
        }
    }

    /// Positions at timestep `t`; invisible entries are NaN.
    pub fn frame_positions(&self, t: usize) -> &[Vec3] {
        &self.positions[t * self.points..(t + 1) * self.points]
    }

    pub fn frame_visibility(&self, t: usize) -> &[bool] {
        &self.visibility[t * self.points..(t + 1) * self.points]
    }

    pub fn is_empty_timestep(&self, t: usize) -> bool {
        !self.frame_visibility(t).iter().any(|v| *v)
    }

    pub fn empty_timesteps(&self) -> Vec<usize> {
        (0..self.timesteps).filter(|t| self.is_empty_timestep(*t)).collect()
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|v| **v).count()
    }

    /// Keeps only the listed point indices, in the given order.
    pub fn select_points(&self, indices: &[usize]) -> Self {
        let mut positions = Vec::with_capacity(self.timesteps * indices.len());
        let mut visibility = Vec::with_capacity(self.timesteps * indices.len());
        for t in 0..self.timesteps {
            for &i in indices {
                positions.push(self.positions[t * self.points + i]);
                visibility.push(self.visibility[t * self.points + i]);
            }
        }
        Self {
            timesteps: self.timesteps,
            points: indices.len(),
            positions,
            visibility,
        }
    }

    /// Copy with every visible position mapped through `f`.
    pub fn map_positions(&self, mut f: impl FnMut(&Vec3) -> Vec3) -> Self {
        let mut out = self.clone();
        for (p, v) in out.positions.iter_mut().zip(&out.visibility) {
            if *v {
                *p = f(p);
            }
        }
        out
    }

    /// Copy with the visibility of entry `(t, i)` forced to false where
    /// `hide(t, i)` holds.
    pub fn masked(&self, mut hide: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for t in 0..self.timesteps {
            for i in 0..self.points {
                if hide(t, i) {
                    out.set(t, i, None);
                }
            }
        }
        out
    }
}
