//! Flow bundles on disk: a JSON manifest naming the tracks, depth maps,
//! reference depth, masks and camera, with paths relative to the manifest.

use std::path::{Path, PathBuf};

use objflow_core::depthflow::{DepthMap, FlowBundle, Mask};
use objflow_core::CameraModel;
use serde::{Deserialize, Serialize};

use crate::formats::{self, FormatError, TrackTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    /// CSV `t,i,u,v,visible`.
    pub tracks: PathBuf,
    /// Optional CSV with the same header whose `visible` column replaces the
    /// one in `tracks`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<PathBuf>,
    /// Directory of `*.d2fd` files, one per timestep in file-name order.
    pub depth_dir: PathBuf,
    pub ref_depth: PathBuf,
    pub object_mask: PathBuf,
    /// Directory of `*.d2fm` part masks, one per timestep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_masks_dir: Option<PathBuf>,
    pub camera: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A bundle that passed validation, with every file it was read from.
#[derive(Clone, Debug)]
pub struct LoadedBundle {
    pub bundle: FlowBundle,
    pub files: Vec<PathBuf>,
}

pub fn validate_bundle(path: &Path) -> ValidationReport {
    inspect(path).1
}

/// Loads a bundle, failing with the full violation list if anything is off.
pub fn load_bundle(path: &Path) -> Result<LoadedBundle, ValidationReport> {
    match inspect(path) {
        (Some(loaded), report) if report.is_ok() => Ok(loaded),
        (_, report) => Err(report),
    }
}

fn sorted_files(dir: &Path, ext: &str, report: &mut Vec<String>) -> Vec<PathBuf> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            report.push(format!("cannot read directory {}: {e}", dir.display()));
            return Vec::new();
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    if files.is_empty() {
        report.push(format!("no *.{ext} files in {}", dir.display()));
    }
    files
}

fn keep<T>(r: Result<T, FormatError>, report: &mut Vec<String>) -> Option<T> {
    r.map_err(|e| report.push(e.to_string())).ok()
}

fn shape_of(w: u32, h: u32) -> String {
    format!("{w}x{h}")
}

fn inspect(path: &Path) -> (Option<LoadedBundle>, ValidationReport) {
    let mut v = Vec::new();
    let manifest: BundleManifest = match formats::read_json_file(path) {
        Ok(m) => m,
        Err(e) => return (None, ValidationReport { violations: vec![e.to_string()] }),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let at = |p: &Path| base.join(p);
    let mut files = vec![path.to_path_buf()];

    let camera_path = at(&manifest.camera);
    let camera = keep(formats::read_camera(&camera_path), &mut v);
    files.push(camera_path);

    let ref_path = at(&manifest.ref_depth);
    let ref_depth = keep(formats::read_depth(&ref_path), &mut v);
    if let Some(r) = &ref_depth {
        if !r.data.iter().any(|d| d.is_finite() && *d > 0.0) {
            v.push(format!("{}: no finite positive depth", ref_path.display()));
        }
        if let Some(c) = &camera {
            if (r.width, r.height) != (c.width, c.height) {
                v.push(format!(
                    "{}: reference depth is {}, camera image is {}",
                    ref_path.display(),
                    shape_of(r.width, r.height),
                    shape_of(c.width, c.height)
                ));
            }
        }
    }
    files.push(ref_path);

    let mask_path = at(&manifest.object_mask);
    let object_mask = keep(formats::read_mask(&mask_path), &mut v);
    check_shape(object_mask.as_ref().map(|m| (m.width, m.height)), ref_depth.as_ref(), &mask_path, &mut v);
    files.push(mask_path);

    let mut depths = Vec::new();
    let depth_files = sorted_files(&at(&manifest.depth_dir), "d2fd", &mut v);
    for f in &depth_files {
        if let Some(d) = keep(formats::read_depth(f), &mut v) {
            check_shape(Some((d.width, d.height)), ref_depth.as_ref(), f, &mut v);
            depths.push(d);
        }
    }
    files.extend(depth_files.iter().cloned());

    let part_masks = manifest.part_masks_dir.as_ref().map(|dir| {
        let mask_files = sorted_files(&at(dir), "d2fm", &mut v);
        let masks: Vec<Mask> = mask_files
            .iter()
            .filter_map(|f| {
                let m = keep(formats::read_mask(f), &mut v)?;
                check_shape(Some((m.width, m.height)), ref_depth.as_ref(), f, &mut v);
                Some(m)
            })
            .collect();
        files.extend(mask_files.iter().cloned());
        (mask_files.len(), masks)
    });

    let tracks_path = at(&manifest.tracks);
    let mut table = keep(formats::read_track_table(&tracks_path), &mut v);
    files.push(tracks_path.clone());
    if let Some(vis_rel) = &manifest.visibility {
        let vis_path = at(vis_rel);
        let vis = keep(formats::read_track_table(&vis_path), &mut v);
        if let (Some(t), Some(vis)) = (table.as_mut(), vis) {
            if (vis.timesteps, vis.points) != (t.timesteps, t.points) {
                v.push(format!(
                    "{}: visibility is {}x{}, tracks are {}x{}",
                    vis_path.display(),
                    vis.timesteps,
                    vis.points,
                    t.timesteps,
                    t.points
                ));
            } else {
                for k in 0..t.visibility.len() {
                    if vis.visibility[k] && !(t.pixels[k].x.is_finite() && t.pixels[k].y.is_finite()) {
                        v.push(format!(
                            "{}: visible entry (t={}, i={}) has no pixel in the tracks file",
                            vis_path.display(),
                            k / t.points,
                            k % t.points
                        ));
                    }
                }
                t.visibility = vis.visibility;
            }
        }
        files.push(vis_path);
    }
    if let Some(t) = &table {
        check_tracks(t, camera.as_ref(), &tracks_path, &mut v);
        if !depth_files.is_empty() && depth_files.len() != t.timesteps {
            v.push(format!(
                "{} depth maps for {} track timesteps",
                depth_files.len(),
                t.timesteps
            ));
        }
        if let Some((count, _)) = &part_masks {
            if *count != t.timesteps {
                v.push(format!("{count} part masks for {} track timesteps", t.timesteps));
            }
        }
    }

    let report = ValidationReport { violations: v };
    if !report.is_ok() {
        return (None, report);
    }
    let bundle = FlowBundle {
        tracks: table.expect("validated").into_tracks(),
        depths,
        ref_depth: ref_depth.expect("validated"),
        object_mask: object_mask.expect("validated"),
        part_masks: part_masks.map(|(_, m)| m),
        camera: camera.expect("validated"),
    };
    // Structural checks above should cover everything the core checks.
    if let Err(e) = bundle.validate() {
        return (None, ValidationReport { violations: vec![e.to_string()] });
    }
    (Some(LoadedBundle { bundle, files }), report)
}

fn check_shape(shape: Option<(u32, u32)>, reference: Option<&DepthMap>, path: &Path, v: &mut Vec<String>) {
    if let (Some((w, h)), Some(r)) = (shape, reference) {
        if (w, h) != (r.width, r.height) {
            v.push(format!(
                "{}: raster is {}, reference depth is {}",
                path.display(),
                shape_of(w, h),
                shape_of(r.width, r.height)
            ));
        }
    }
}

fn check_tracks(t: &TrackTable, camera: Option<&CameraModel>, path: &Path, v: &mut Vec<String>) {
    if let Some(cam) = camera {
        for k in 0..t.visibility.len() {
            let p = t.pixels[k];
            if t.visibility[k] && !cam.contains(&p) {
                v.push(format!(
                    "{}: visible track (t={}, i={}) at pixel ({}, {}) is outside the {}x{} image",
                    path.display(),
                    k / t.points,
                    k % t.points,
                    p.x,
                    p.y,
                    cam.width,
                    cam.height
                ));
            }
        }
    }
    if !t.visibility[..t.points].iter().any(|&b| b) {
        v.push(format!("{}: no visible point at the first timestep", path.display()));
    }
}

/// Writes a bundle with the conventional layout under `dir` and returns the
/// manifest path.
pub fn write_bundle(dir: &Path, bundle: &FlowBundle) -> Result<PathBuf, FormatError> {
    let manifest = BundleManifest {
        tracks: "tracks.csv".into(),
        visibility: None,
        depth_dir: "depth".into(),
        ref_depth: "ref_depth.d2fd".into(),
        object_mask: "object_mask.d2fm".into(),
        part_masks_dir: bundle.part_masks.as_ref().map(|_| "part_masks".into()),
        camera: "camera.json".into(),
    };
    formats::write_tracks(&dir.join(&manifest.tracks), &bundle.tracks)?;
    for (t, d) in bundle.depths.iter().enumerate() {
        formats::write_depth(&dir.join("depth").join(format!("{t:04}.d2fd")), d)?;
    }
    formats::write_depth(&dir.join(&manifest.ref_depth), &bundle.ref_depth)?;
    formats::write_mask(&dir.join(&manifest.object_mask), &bundle.object_mask)?;
    if let Some(parts) = &bundle.part_masks {
        for (t, m) in parts.iter().enumerate() {
            formats::write_mask(&dir.join("part_masks").join(format!("{t:04}.d2fm")), m)?;
        }
    }
    formats::write_camera(&dir.join(&manifest.camera), &bundle.camera)?;
    let path = dir.join("bundle.json");
    formats::write_json(&path, &manifest)?;
    Ok(path)
}
