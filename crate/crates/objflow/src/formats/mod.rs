//! On-disk formats: D2FD depth maps, D2FM masks, track and flow CSVs, and
//! the JSON scene descriptions (camera, robot, grasps).

mod raster;
mod scene;
mod tables;

use std::path::{Path, PathBuf};

pub use raster::{decode_depth, decode_mask, encode_depth, encode_mask, read_depth, read_mask, write_depth, write_mask};
pub use raster::{DEPTH_MAGIC, MASK_MAGIC};
pub use scene::{
    read_camera, read_grasps, read_robot, write_camera, write_grasps, write_robot, CameraJson, GraspJson, GraspsJson,
    JointJson, PoseJson, RobotJson,
};
pub use tables::{
    read_flow, read_thumb, read_track_table, sidecar_path, write_flow, write_thumb, write_tracks, CalibrationJson,
    FlowSidecar, TrackTable,
};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at {}", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid { path: path.to_path_buf(), message: message.into() }
    }

    pub fn path(&self) -> &Path {
        match self {
            Self::Io { path, .. }
            | Self::BadMagic { path }
            | Self::Invalid { path, .. }
            | Self::Csv { path, .. }
            | Self::Json { path, .. } => path,
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| FormatError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| FormatError::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|source| FormatError::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
