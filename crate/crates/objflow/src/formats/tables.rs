//! CSV tables: 2D tracks (`t,i,u,v,visible`), 3D flow (`t,i,x,y,z,visible`
//! with a JSON sidecar) and thumb detections (`t,x,y,z,detected`).

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use objflow_core::depthflow::{ObjectFlow3D, Tracks2D};
use objflow_core::trajopt::ThumbTrajectory;
use objflow_core::Vec3;
use serde::{Deserialize, Deserializer, Serialize};

use super::{read_bytes, read_json_file, write_atomic, write_json, FormatError};

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected 0/1/true/false, got {other:?}"))),
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv { path: path.to_path_buf(), source }
}

fn parse_rows<T: serde::de::DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>, FormatError> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != columns {
        return Err(FormatError::invalid(path, format!("header must be {}, got {}", columns.join(","), got.join(","))));
    }
    reader.deserialize().map(|r| r.map_err(csv_err(path))).collect()
}

/// Places every `(t, i)` row of a dense table, rejecting gaps and repeats.
fn dense_slots(path: &Path, keys: impl Iterator<Item = (usize, usize)> + Clone) -> Result<(usize, usize, Vec<usize>), FormatError> {
    let (mut t_max, mut i_max, mut rows) = (0usize, 0usize, 0usize);
    for (t, i) in keys.clone() {
        t_max = t_max.max(t + 1);
        i_max = i_max.max(i + 1);
        rows += 1;
    }
    if rows == 0 {
        return Err(FormatError::invalid(path, "table has no rows"));
    }
    let mut slot = vec![usize::MAX; t_max * i_max];
    for (row, (t, i)) in keys.enumerate() {
        let k = t * i_max + i;
        if slot[k] != usize::MAX {
            return Err(FormatError::invalid(path, format!("duplicate row for (t={t}, i={i})")));
        }
        slot[k] = row;
    }
    if let Some(k) = slot.iter().position(|&r| r == usize::MAX) {
        return Err(FormatError::invalid(path, format!("missing row for (t={}, i={})", k / i_max, k % i_max)));
    }
    Ok((t_max, i_max, slot))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::invalid(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn opt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

#[derive(Deserialize)]
struct TrackRow {
    t: usize,
    i: usize,
    u: Option<f64>,
    v: Option<f64>,
    #[serde(deserialize_with = "flag")]
    visible: bool,
}

/// Dense track table as stored on disk; pixels of invisible entries may be
/// NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackTable {
    pub timesteps: usize,
    pub points: usize,
    pub pixels: Vec<Vector2<f64>>,
    pub visibility: Vec<bool>,
}

impl TrackTable {
    pub fn into_tracks(self) -> Tracks2D {
        Tracks2D::new(self.timesteps, self.points, self.pixels, self.visibility).expect("dense table")
    }
}

pub fn read_track_table(path: &Path) -> Result<TrackTable, FormatError> {
    let rows: Vec<TrackRow> = parse_rows(path, &["t", "i", "u", "v", "visible"])?;
    let (timesteps, points, slot) = dense_slots(path, rows.iter().map(|r| (r.t, r.i)))?;
    let mut pixels = Vec::with_capacity(slot.len());
    let mut visibility = Vec::with_capacity(slot.len());
    for &k in &slot {
        let r = &rows[k];
        let px = Vector2::new(r.u.unwrap_or(f64::NAN), r.v.unwrap_or(f64::NAN));
        if r.visible && !(px.x.is_finite() && px.y.is_finite()) {
            return Err(FormatError::invalid(path, format!("visible track (t={}, i={}) has no pixel", r.t, r.i)));
        }
        pixels.push(px);
        visibility.push(r.visible);
    }
    Ok(TrackTable { timesteps, points, pixels, visibility })
}

pub fn write_tracks(path: &Path, tracks: &Tracks2D) -> Result<(), FormatError> {
    let rows = (0..tracks.timesteps()).flat_map(|t| {
        (0..tracks.points()).map(move |i| {
            let p = tracks.pixel(t, i);
            vec![t.to_string(), i.to_string(), opt(p.x), opt(p.y), (tracks.visible(t, i) as u8).to_string()]
        })
    });
    write_csv(path, &["t", "i", "u", "v", "visible"], rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationJson {
    pub s: f64,
    pub b: f64,
}

/// Metadata written next to a flow CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSidecar {
    #[serde(rename = "T")]
    pub timesteps: usize,
    pub n: usize,
    pub units: String,
    pub calibration: Option<CalibrationJson>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Deserialize)]
struct FlowRow {
    t: usize,
    i: usize,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    #[serde(deserialize_with = "flag")]
    visible: bool,
}

/// Reads a flow CSV and its sidecar (same stem, `.json`).
pub fn read_flow(path: &Path) -> Result<(ObjectFlow3D, FlowSidecar), FormatError> {
    let side_path = sidecar_path(path);
    let side: FlowSidecar = read_json_file(&side_path)?;
    if side.units != "m" {
        return Err(FormatError::invalid(&side_path, format!("units must be \"m\", got {:?}", side.units)));
    }
    let rows: Vec<FlowRow> = parse_rows(path, &["t", "i", "x", "y", "z", "visible"])?;
    let (timesteps, points, slot) = dense_slots(path, rows.iter().map(|r| (r.t, r.i)))?;
    if (timesteps, points) != (side.timesteps, side.n) {
        return Err(FormatError::invalid(
            path,
            format!("table is {timesteps}x{points}, sidecar says {}x{}", side.timesteps, side.n),
        ));
    }
    let mut positions = Vec::with_capacity(slot.len());
    let mut visibility = Vec::with_capacity(slot.len());
    for &k in &slot {
        let r = &rows[k];
        let nan = f64::NAN;
        positions.push(Vec3::new(r.x.unwrap_or(nan), r.y.unwrap_or(nan), r.z.unwrap_or(nan)));
        visibility.push(r.visible);
    }
    let flow = ObjectFlow3D::new(timesteps, points, positions, visibility)
        .map_err(|e| FormatError::invalid(path, e.to_string()))?;
    Ok((flow, side))
}

pub fn write_flow(path: &Path, flow: &ObjectFlow3D, calibration: Option<CalibrationJson>) -> Result<(), FormatError> {
    let rows = (0..flow.timesteps()).flat_map(|t| {
        (0..flow.points()).map(move |i| {
            let p = flow.frame_positions(t)[i];
            let vis = flow.visible(t, i);
            let c = |v: f64| if vis { opt(v) } else { String::new() };
            vec![t.to_string(), i.to_string(), c(p.x), c(p.y), c(p.z), (vis as u8).to_string()]
        })
    });
    write_csv(path, &["t", "i", "x", "y", "z", "visible"], rows)?;
    let side = FlowSidecar {
        timesteps: flow.timesteps(),
        n: flow.points(),
        units: "m".into(),
        calibration,
    };
    write_json(&sidecar_path(path), &side)
}

#[derive(Deserialize)]
struct ThumbRow {
    t: usize,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    #[serde(deserialize_with = "flag")]
    detected: bool,
}

/// Rows must list timesteps 0, 1, 2, ... in order.
pub fn read_thumb(path: &Path) -> Result<ThumbTrajectory, FormatError> {
    let rows: Vec<ThumbRow> = parse_rows(path, &["t", "x", "y", "z", "detected"])?;
    let mut out = ThumbTrajectory { positions: Vec::new(), detected: Vec::new() };
    for (k, r) in rows.iter().enumerate() {
        if r.t != k {
            return Err(FormatError::invalid(path, format!("row {k} has t={}, expected {k}", r.t)));
        }
        let p = Vec3::new(r.x.unwrap_or(f64::NAN), r.y.unwrap_or(f64::NAN), r.z.unwrap_or(f64::NAN));
        if r.detected && !p.iter().all(|v| v.is_finite()) {
            return Err(FormatError::invalid(path, format!("detected thumb at t={} has no position", r.t)));
        }
        out.positions.push(p);
        out.detected.push(r.detected);
    }
    Ok(out)
}

pub fn write_thumb(path: &Path, thumb: &ThumbTrajectory) -> Result<(), FormatError> {
    let rows = thumb.positions.iter().zip(&thumb.detected).enumerate().map(|(t, (p, d))| {
        vec![t.to_string(), opt(p.x), opt(p.y), opt(p.z), (*d as u8).to_string()]
    });
    write_csv(path, &["t", "x", "y", "z", "detected"], rows)
}
