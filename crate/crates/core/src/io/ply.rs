use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use sha2::{Digest, Sha256};

use crate::encoding::{BasisSpec, DeformationParams, PolyFourierCurve};
use crate::geometry::Quaternion;
use crate::init::{DynamicMotion, GaussianRecord};

use super::{parse_canonical_usize, read_file, write_file, FormatError};

const BASE_PROPERTIES: [&str; 14] = [
    "x", "y", "z", "qw", "qx", "qy", "qz", "sx", "sy", "sz", "opacity", "r", "g", "b",
];
const CHECKSUM_KEY: &str = "comment header_sha256 ";
const END: &str = "end_header\n";

/// Coefficient property names of a dynamic vertex: position columns
/// `1..dim` per axis, then rotation columns `1..dim` per quaternion component.
fn coefficient_names(spec: &BasisSpec) -> Vec<String> {
    let cols = spec.dim() - 1;
    let mut names = Vec::with_capacity(7 * cols);
    for axis in ["x", "y", "z"] {
        names.extend((1..=cols).map(|c| format!("pos_{axis}_{c}")));
    }
    for comp in ["w", "x", "y", "z"] {
        names.extend((1..=cols).map(|c| format!("rot_{comp}_{c}")));
    }
    names
}

fn header_body(n_static: usize, n_dynamic: usize, spec: Option<&BasisSpec>) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h.push_str("comment scale is stored as natural log, opacity and color as plain values\n");
    if let Some(s) = spec {
        h.push_str("comment time tau = frame / (frame_count - 1)\n");
        h.push_str("comment basis 1, tau^1..tau^d_pol, then cos(k omega tau), sin(k omega tau) for k = 1..d_fourier\n");
        h.push_str(&format!("comment d_pol {}\n", s.d_pol));
        h.push_str(&format!("comment d_fourier {}\n", s.d_fourier));
        h.push_str(&format!("comment omega {}\n", s.omega));
        h.push_str(&format!("comment frame_count {}\n", s.frame_count));
    }
    h.push_str(&format!("element vertex {n_static}\n"));
    for p in BASE_PROPERTIES {
        h.push_str(&format!("property float {p}\n"));
    }
    h.push_str(&format!("element dynamic_vertex {n_dynamic}\n"));
    for p in BASE_PROPERTIES {
        h.push_str(&format!("property float {p}\n"));
    }
    h.push_str("property uint instance_id\nproperty uint track_id\n");
    if let Some(s) = spec {
        for name in coefficient_names(s) {
            h.push_str(&format!("property float {name}\n"));
        }
    }
    h
}

fn full_header(n_static: usize, n_dynamic: usize, spec: Option<&BasisSpec>) -> String {
    let body = header_body(n_static, n_dynamic, spec);
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{body}{CHECKSUM_KEY}{digest}\n{END}")
}

fn shared_spec(records: &[GaussianRecord]) -> Result<Option<BasisSpec>, FormatError> {
    let mut spec: Option<BasisSpec> = None;
    for m in records.iter().filter_map(|r| r.motion.as_ref()) {
        let s = *m.deformation.spec();
        match spec {
            None => spec = Some(s),
            Some(prev) if prev != s => {
                return Err(FormatError::InvalidValue(
                    "dynamic records use different basis specs".into(),
                ))
            }
            _ => {}
        }
    }
    Ok(spec)
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn push_base(out: &mut Vec<u8>, r: &GaussianRecord) {
    for v in r.position.iter() {
        push_f32(out, *v);
    }
    for v in [r.rotation.w, r.rotation.x, r.rotation.y, r.rotation.z] {
        push_f32(out, v);
    }
    for v in r.scale.iter() {
        push_f32(out, v.ln());
    }
    push_f32(out, r.opacity);
    for v in r.color {
        push_f32(out, v);
    }
}

fn validate(r: &GaussianRecord) -> Result<(), FormatError> {
    let finite = r.position.iter().all(|v| v.is_finite())
        && r.scale.iter().all(|v| v.is_finite() && *v > 0.0)
        && r.opacity.is_finite()
        && r.color.iter().all(|v| v.is_finite());
    if !finite {
        return Err(FormatError::InvalidValue(
            "Gaussian with non-finite values or non-positive scale".into(),
        ));
    }
    if let Some(m) = &r.motion {
        if m.instance_id == 0 {
            return Err(FormatError::InvalidValue(
                "dynamic Gaussian with instance id 0".into(),
            ));
        }
    }
    Ok(())
}

/// Serializes static records into `vertex` and dynamic ones into
/// `dynamic_vertex`, preserving relative order within each kind.
pub fn encode_gaussians_ply(records: &[GaussianRecord]) -> Result<Vec<u8>, FormatError> {
    let spec = shared_spec(records)?;
    records.iter().try_for_each(validate)?;
    let statics: Vec<_> = records.iter().filter(|r| r.motion.is_none()).collect();
    let dynamics: Vec<_> = records.iter().filter(|r| r.motion.is_some()).collect();
    let mut out = full_header(statics.len(), dynamics.len(), spec.as_ref()).into_bytes();
    for r in statics {
        push_base(&mut out, r);
    }
    for r in dynamics {
        push_base(&mut out, r);
        let m = r.motion.as_ref().expect("dynamic");
        out.extend_from_slice(&(m.instance_id as u32).to_le_bytes());
        out.extend_from_slice(&m.track_id.to_le_bytes());
        let pos = &m.deformation.position.coefficients;
        for row in 0..3 {
            for c in 1..pos.ncols() {
                push_f32(&mut out, pos[(row, c)]);
            }
        }
        let rot = &m.deformation.rotation;
        for row in 0..4 {
            for c in 0..rot.ncols() {
                push_f32(&mut out, rot[(row, c)]);
            }
        }
    }
    Ok(out)
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::MalformedHeader(msg.into())
}

/// Reads counts and the basis spec from the header lines. Everything else
/// is checked by regenerating the canonical header and comparing bytes.
fn scan_header(header: &str) -> Result<(usize, usize, Option<BasisSpec>), FormatError> {
    let mut counts = [None, None];
    let (mut d_pol, mut d_fourier, mut omega, mut frames) = (None, None, None, None);
    for line in header.lines() {
        let words: Vec<&str> = line.split(' ').collect();
        match words.as_slice() {
            ["element", "vertex", n] => counts[0] = parse_canonical_usize(n),
            ["element", "dynamic_vertex", n] => counts[1] = parse_canonical_usize(n),
            ["comment", "d_pol", v] => d_pol = parse_canonical_usize(v),
            ["comment", "d_fourier", v] => d_fourier = parse_canonical_usize(v),
            ["comment", "frame_count", v] => frames = parse_canonical_usize(v),
            ["comment", "omega", v] => omega = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    let [Some(n_static), Some(n_dynamic)] = counts else {
        return Err(malformed("missing or invalid element counts"));
    };
    let spec = match (d_pol, d_fourier, omega, frames) {
        (Some(p), Some(f), Some(w), Some(t)) => Some(
            BasisSpec::new(p, f, w, t).map_err(|e| malformed(format!("basis comments: {e}")))?,
        ),
        (None, None, None, None) => None,
        _ => return Err(malformed("incomplete basis comments")),
    };
    Ok((n_static, n_dynamic, spec))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn f32(&mut self) -> f64 {
        let v = f32::from_le_bytes(self.bytes[self.at..self.at + 4].try_into().unwrap());
        self.at += 4;
        v as f64
    }

    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.at..self.at + 4].try_into().unwrap());
        self.at += 4;
        v
    }

    fn base(&mut self) -> GaussianRecord {
        let position = Vector3::new(self.f32(), self.f32(), self.f32());
        let rotation = Quaternion::new(self.f32(), self.f32(), self.f32(), self.f32());
        let scale = Vector3::new(self.f32().exp(), self.f32().exp(), self.f32().exp());
        let opacity = self.f32();
        let color = [self.f32(), self.f32(), self.f32()];
        GaussianRecord {
            position,
            rotation,
            scale,
            opacity,
            color,
            motion: None,
        }
    }
}

/// Inverse of [`encode_gaussians_ply`]; static records come first.
pub fn decode_gaussians_ply(bytes: &[u8]) -> Result<Vec<GaussianRecord>, FormatError> {
    let end = bytes
        .windows(END.len())
        .position(|w| w == END.as_bytes())
        .ok_or_else(|| malformed("no end_header line"))?
        + END.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed("header is not ASCII"))?;
    let (n_static, n_dynamic, spec) = scan_header(header)?;
    if header != full_header(n_static, n_dynamic, spec.as_ref()) {
        return Err(malformed("header does not match the expected layout or checksum"));
    }
    if n_dynamic > 0 && spec.is_none() {
        return Err(malformed("dynamic vertices without basis comments"));
    }
    let cols = spec.map_or(0, |s| s.dim() - 1);
    let base = 4 * BASE_PROPERTIES.len();
    let expected = n_static * base + n_dynamic * (base + 8 + 4 * 7 * cols);
    super::expect_payload(bytes.len() - end, expected)?;

    let mut cur = Cursor { bytes, at: end };
    let mut records = Vec::with_capacity(n_static + n_dynamic);
    for _ in 0..n_static {
        records.push(cur.base());
    }
    for _ in 0..n_dynamic {
        let mut r = cur.base();
        let spec = spec.expect("checked above");
        let instance = cur.u32();
        let track_id = cur.u32();
        let instance_id = u16::try_from(instance)
            .ok()
            .filter(|&id| id != 0)
            .ok_or_else(|| FormatError::InvalidValue(format!("instance id {instance}")))?;
        let mut pos = DMatrix::zeros(3, cols + 1);
        for row in 0..3 {
            pos[(row, 0)] = r.position[row];
            for c in 1..=cols {
                pos[(row, c)] = cur.f32();
            }
        }
        let mut rot = DMatrix::zeros(4, cols);
        for row in 0..4 {
            for c in 0..cols {
                rot[(row, c)] = cur.f32();
            }
        }
        r.motion = Some(DynamicMotion {
            instance_id,
            track_id,
            deformation: DeformationParams {
                position: PolyFourierCurve {
                    spec,
                    coefficients: pos,
                },
                rotation: rot,
                q0: r.rotation,
            },
        });
        records.push(r);
    }
    Ok(records)
}

pub fn write_gaussians_ply(path: impl AsRef<Path>, records: &[GaussianRecord]) -> Result<(), FormatError> {
    write_file(path.as_ref(), &encode_gaussians_ply(records)?)
}

pub fn read_gaussians_ply(path: impl AsRef<Path>) -> Result<Vec<GaussianRecord>, FormatError> {
    decode_gaussians_ply(&read_file(path.as_ref())?)
}
