//! Stage-boundary tables that only the pipeline produces.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::detection::BoundingBox;
use crate::encoding::{BasisSpec, PolyFourierCurve};
use crate::io::{FormatError, TrackTable};
use crate::scene_flow::{Provenance, QueryPoint, Trajectory3D};

pub const TRAJECTORIES_HEADER: &str = "track_id,frame,x,y,visible,X,Y,Z,provenance,instance_id";

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, FormatError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &str) -> Result<(), FormatError> {
    let got = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if got != expected {
        return Err(FormatError::MalformedHeader(format!("expected {expected:?}, found {got:?}")));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, what: &str) -> Result<T, FormatError> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FormatError::InvalidValue(format!("bad {what} in row {:?}", row.position().map(|p| p.line()))))
}

/// One row per trajectory and frame. Pixel columns are filled on observed
/// rows only.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory3D], tracks: &TrackTable) -> Result<(), FormatError> {
    let observed: BTreeMap<(u32, usize), (f64, f64)> = tracks
        .observations
        .iter()
        .filter(|o| o.visible)
        .map(|o| ((o.track_id, o.frame), (o.x, o.y)))
        .collect();
    let mut w = writer(path)?;
    w.write_record(TRAJECTORIES_HEADER.split(','))?;
    for tr in trajectories {
        for t in 0..tr.frame_count() {
            let prov = tr.provenance[t];
            let pixel = match prov {
                Some(Provenance::Observed) => observed.get(&(tr.track_id, t)).copied(),
                _ => None,
            };
            let (x, y) = pixel.map_or((String::new(), String::new()), |(x, y)| (x.to_string(), y.to_string()));
            let p = tr.positions[t];
            let coord = |k: usize| p.map_or(String::new(), |v| v[k].to_string());
            w.write_record([
                tr.track_id.to_string(),
                t.to_string(),
                x,
                y,
                if pixel.is_some() { "1" } else { "0" }.to_string(),
                coord(0),
                coord(1),
                coord(2),
                prov.map_or("", |p| p.as_str()).to_string(),
                tr.instance_id.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_trajectories(path: &Path, frame_count: usize) -> Result<Vec<Trajectory3D>, FormatError> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(&mut reader, TRAJECTORIES_HEADER)?;
    let mut out: BTreeMap<u32, Trajectory3D> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let id: u32 = parse(&row, 0, "track id")?;
        let frame: usize = parse(&row, 1, "frame")?;
        if frame >= frame_count {
            return Err(FormatError::InvalidValue(format!("frame {frame} beyond sequence length {frame_count}")));
        }
        let tr = out.entry(id).or_insert_with(|| Trajectory3D::new(id, frame_count));
        tr.instance_id = parse(&row, 9, "instance id")?;
        let prov = row.get(8).unwrap_or("");
        if prov.is_empty() {
            continue;
        }
        let prov = Provenance::parse(prov).ok_or_else(|| FormatError::InvalidValue(format!("provenance {prov:?}")))?;
        let p = Vector3::new(parse(&row, 5, "X")?, parse(&row, 6, "Y")?, parse(&row, 7, "Z")?);
        tr.set(frame, p, prov);
        if prov == Provenance::Observed && tr.query.is_none_or(|q| frame < q.frame) {
            if let (Ok(x), Ok(y)) = (parse::<f64>(&row, 2, "x"), parse::<f64>(&row, 3, "y")) {
                tr.query = Some(QueryPoint { frame, x, y });
            }
        }
    }
    Ok(out.into_values().collect())
}

pub const COEFFICIENTS_PREFIX: &str = "track_id,instance_id,axis,residual_rms";

/// Fitted position curve of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTrack {
    pub track_id: u32,
    pub instance_id: u16,
    pub curve: PolyFourierCurve,
    pub residual_rms: [f64; 3],
}

/// Three rows per track (x, y, z), one column per basis function.
pub fn write_coefficients(path: &Path, spec: &BasisSpec, tracks: &[EncodedTrack]) -> Result<(), FormatError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = COEFFICIENTS_PREFIX.split(',').map(String::from).collect();
    header.extend(spec.column_names());
    w.write_record(&header)?;
    for t in tracks {
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            let mut row = vec![
                t.track_id.to_string(),
                t.instance_id.to_string(),
                name.to_string(),
                t.residual_rms[axis].to_string(),
            ];
            row.extend(t.curve.coefficients.row(axis).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_coefficients(path: &Path, spec: &BasisSpec) -> Result<Vec<EncodedTrack>, FormatError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut expected: Vec<String> = COEFFICIENTS_PREFIX.split(',').map(String::from).collect();
    expected.extend(spec.column_names());
    check_header(&mut reader, &expected.join(","))?;
    let dim = spec.dim();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if rows.len() % 3 != 0 {
        return Err(FormatError::InvalidValue("coefficient rows must come in x, y, z triples".into()));
    }
    rows.chunks(3)
        .map(|chunk| {
            let track_id: u32 = parse(&chunk[0], 0, "track id")?;
            let instance_id: u16 = parse(&chunk[0], 1, "instance id")?;
            let mut coefficients = DMatrix::zeros(3, dim);
            let mut residual_rms = [0.0; 3];
            for (axis, row) in chunk.iter().enumerate() {
                let same = parse::<u32>(row, 0, "track id")? == track_id;
                if !same || row.get(2) != Some(["x", "y", "z"][axis]) {
                    return Err(FormatError::InvalidValue(format!("track {track_id}: rows out of order")));
                }
                residual_rms[axis] = parse(row, 3, "residual")?;
                for c in 0..dim {
                    coefficients[(axis, c)] = parse(row, 4 + c, "coefficient")?;
                }
            }
            Ok(EncodedTrack {
                track_id,
                instance_id,
                curve: PolyFourierCurve { spec: *spec, coefficients },
                residual_rms,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRegions {
    pub frame: usize,
    /// Frame pair without epipolar constraint (cameras share a centre).
    pub degenerate: bool,
    pub dynamic_pixels: usize,
    pub boxes: Vec<BoundingBox>,
}
