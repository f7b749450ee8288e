use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::CameraFrame;

use super::{read_file, write_file, FormatError};

/// One entry of the cameras JSON array. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub frame: usize,
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl From<&CameraFrame> for CameraRecord {
    fn from(c: &CameraFrame) -> Self {
        let row_major = |m: &Matrix3<f64>| {
            let mut a = [0.0; 9];
            for (i, v) in a.iter_mut().enumerate() {
                *v = m[(i / 3, i % 3)];
            }
            a
        };
        Self {
            frame: c.frame_index,
            k: row_major(&c.k),
            r: row_major(&c.r),
            t: [c.t.x, c.t.y, c.t.z],
            width: c.width,
            height: c.height,
        }
    }
}

impl TryFrom<&CameraRecord> for CameraFrame {
    type Error = FormatError;

    fn try_from(c: &CameraRecord) -> Result<Self, FormatError> {
        CameraFrame::new(
            c.frame,
            Matrix3::from_row_slice(&c.k),
            Matrix3::from_row_slice(&c.r),
            Vector3::from(c.t),
            c.width,
            c.height,
        )
        .map_err(|e| FormatError::InvalidValue(e.to_string()))
    }
}

/// Reads the cameras array, sorted by frame index. Frames must be
/// `0, 1, …, T − 1` with no gaps.
pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraFrame>, FormatError> {
    let records: Vec<CameraRecord> = serde_json::from_slice(&read_file(path.as_ref())?)?;
    let mut cams = records
        .iter()
        .map(CameraFrame::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    cams.sort_by_key(|c| c.frame_index);
    for (i, c) in cams.iter().enumerate() {
        if c.frame_index != i {
            return Err(FormatError::InvalidValue(format!(
                "camera frames must be contiguous from 0; found frame {} at position {i}",
                c.frame_index
            )));
        }
    }
    Ok(cams)
}

pub fn write_cameras(path: impl AsRef<Path>, cams: &[CameraFrame]) -> Result<(), FormatError> {
    let records: Vec<CameraRecord> = cams.iter().map(CameraRecord::from).collect();
    write_file(path.as_ref(), &serde_json::to_vec_pretty(&records)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn round_trip_and_schema_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        let cams: Vec<_> = (0..3)
            .map(|i| {
                CameraFrame::new(
                    i,
                    CameraFrame::intrinsics(100.0, 101.0, 32.0, 30.5),
                    *Rotation3::from_euler_angles(0.1 * i as f64, 0.2, -0.3).matrix(),
                    Vector3::new(0.1, i as f64, 1.0 / 3.0),
                    64,
                    60,
                )
                .unwrap()
            })
            .collect();
        write_cameras(&p, &cams).unwrap();
        assert_eq!(read_cameras(&p).unwrap(), cams);
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        let keys: Vec<_> = v[0].as_object().unwrap().keys().cloned().collect();
        for k in ["frame", "K", "R", "t", "width", "height"] {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
    }

    #[test]
    fn gap_in_frames_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        let c = CameraFrame::new(
            1,
            CameraFrame::intrinsics(1.0, 1.0, 0.0, 0.0),
            Matrix3::identity(),
            Vector3::zeros(),
            1,
            1,
        )
        .unwrap();
        write_cameras(&p, &[c]).unwrap();
        assert!(read_cameras(&p).is_err());
    }
}
