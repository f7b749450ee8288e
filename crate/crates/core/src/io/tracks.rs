use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::raster::in_bounds;

use super::{read_file, write_file, FormatError};

pub const TRACKS_HEADER: &str = "track_id,frame,x,y,visible";

/// One 2D observation of a tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackObservation {
    pub track_id: u32,
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// 2D point tracks; at most one observation per `(track_id, frame)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackTable {
    pub width: usize,
    pub height: usize,
    pub observations: Vec<TrackObservation>,
}

impl TrackTable {
    pub fn new(
        width: usize,
        height: usize,
        observations: Vec<TrackObservation>,
    ) -> Result<Self, FormatError> {
        let t = Self {
            width,
            height,
            observations,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let mut seen = BTreeSet::new();
        for o in &self.observations {
            if !seen.insert((o.track_id, o.frame)) {
                return Err(FormatError::DuplicateObservation {
                    track_id: o.track_id,
                    frame: o.frame,
                });
            }
            if o.visible && !in_bounds(o.x, o.y, self.width, self.height) {
                return Err(FormatError::OutOfBoundsPixel {
                    track_id: o.track_id,
                    frame: o.frame,
                    x: o.x,
                    y: o.y,
                });
            }
            if !o.x.is_finite() || !o.y.is_finite() {
                return Err(FormatError::InvalidValue(format!(
                    "non-finite coordinates for track {} at frame {}",
                    o.track_id, o.frame
                )));
            }
        }
        Ok(())
    }

    /// Observations grouped by track, each group sorted by frame.
    pub fn by_track(&self) -> BTreeMap<u32, Vec<TrackObservation>> {
        let mut out: BTreeMap<u32, Vec<TrackObservation>> = BTreeMap::new();
        for o in &self.observations {
            out.entry(o.track_id).or_default().push(*o);
        }
        for v in out.values_mut() {
            v.sort_by_key(|o| o.frame);
        }
        out
    }
}

/// Writes the CSV. Coordinates use the shortest representation that parses
/// back to the same `f64`.
pub fn write_tracks(path: impl AsRef<Path>, table: &TrackTable) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRACKS_HEADER.split(','))?;
    for o in &table.observations {
        w.write_record([
            o.track_id.to_string(),
            o.frame.to_string(),
            o.x.to_string(),
            o.y.to_string(),
            u8::from(o.visible).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::InvalidValue(e.to_string()))?;
    write_file(path.as_ref(), &bytes)
}

/// Reads a tracks CSV and validates it against an image of `width × height`.
pub fn read_tracks(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
) -> Result<TrackTable, FormatError> {
    let bytes = read_file(path.as_ref())?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes.as_slice());
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| FormatError::MalformedHeader("empty tracks file".into()))??;
    if header.iter().collect::<Vec<_>>().join(",") != TRACKS_HEADER || header.len() != 5 {
        return Err(FormatError::MalformedHeader(format!(
            "expected \"{TRACKS_HEADER}\""
        )));
    }
    let mut observations = Vec::new();
    for rec in records {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| FormatError::InvalidValue(format!("bad {what} in row {rec:?}"));
        let track_id = field(0).parse().map_err(|_| bad("track_id"))?;
        let frame = field(1).parse().map_err(|_| bad("frame"))?;
        let x = field(2).parse().map_err(|_| bad("x"))?;
        let y = field(3).parse().map_err(|_| bad("y"))?;
        let visible = match field(4) {
            "0" => false,
            "1" => true,
            _ => return Err(bad("visible")),
        };
        observations.push(TrackObservation {
            track_id,
            frame,
            x,
            y,
            visible,
        });
    }
    TrackTable::new(width, height, observations)
}
