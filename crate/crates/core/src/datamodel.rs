//! Domain types, CSV ingestion/emission, and configuration parsing shared by
//! the rest of the pipeline.
//!
//! File formats:
//! - detections CSV: header `frame,camera,keypoint,u,v,confidence`
//! - sequence CSV: header `frame,keypoint,x,y,z,z_source,n_side_cams`
//! - calibration samples CSV: header `camera,v,distance,z`
//! - config: one JSON document with top-level keys `rig`, `run`, `calibration`
//!
//! All floats are written with Rust's shortest round-trip formatting ('.'
//! decimal separator), so emit/parse is lossless and reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::PolySurface;
use crate::error::{Error, Result};

/// Reserved camera id of the bottom view in detections files.
pub const BOTTOM_CAMERA_ID: &str = "bottom";

/// One camera's observation of one keypoint in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection2D {
    pub frame_index: u64,
    pub camera_id: String,
    pub keypoint: String,
    pub u_px: f64,
    pub v_px: f64,
    /// Detector confidence in [0, 1].
    pub confidence: f64,
}

/// A side camera: where it sits in the arena plane and which fitted
/// calibration surface converts its pixel heights to mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideCamera {
    pub camera_id: String,
    /// (x, y) of the camera in arena-plane mm.
    pub plane_position: (f64, f64),
    pub calibration_id: String,
}

fn default_fps() -> f64 {
    50.0
}

/// Default keypoint set: nose, tailbase, four paws, two ears.
pub fn default_keypoints() -> Vec<String> {
    [
        "nose",
        "ear_left",
        "ear_right",
        "paw_front_left",
        "paw_front_right",
        "paw_hind_left",
        "paw_hind_right",
        "tailbase",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Camera rig geometry and the tracked keypoint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    /// mm per pixel of the bottom camera.
    pub bottom_scale: f64,
    pub side_cameras: Vec<SideCamera>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_keypoints")]
    pub keypoints: Vec<String>,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.side_cameras.is_empty() {
            return Err(Error::validation("rig needs at least one side camera"));
        }
        if self.fps <= 0.0 {
            return Err(Error::validation(format!("fps must be > 0 (got {})", self.fps)));
        }
        if self.bottom_scale <= 0.0 {
            return Err(Error::validation(format!(
                "bottom_scale must be > 0 (got {})",
                self.bottom_scale
            )));
        }
        if self.keypoints.is_empty() {
            return Err(Error::validation("rig keypoint set is empty"));
        }
        let mut ids: Vec<&str> = self.side_cameras.iter().map(|c| c.camera_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.side_cameras.len() {
            return Err(Error::validation("duplicate side camera ids"));
        }
        if self.side_cameras.iter().any(|c| c.camera_id == BOTTOM_CAMERA_ID) {
            return Err(Error::validation(format!(
                "'{}' is reserved for the bottom camera",
                BOTTOM_CAMERA_ID
            )));
        }
        Ok(())
    }

    pub fn side_camera(&self, camera_id: &str) -> Option<&SideCamera> {
        self.side_cameras.iter().find(|c| c.camera_id == camera_id)
    }
}

/// Where a z value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZProvenance {
    /// Averaged over this many confidence-qualifying side cameras.
    Measured { n_cameras: u32 },
    /// Filled by the zero-phase EWMA interpolator.
    Interpolated,
}

/// Per-frame pose: every keypoint's (x, y, z) in mm plus z provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3DFrame {
    pub frame_index: u64,
    pub coords: BTreeMap<String, [f64; 3]>,
    pub z_provenance: BTreeMap<String, ZProvenance>,
}

impl Pose3DFrame {
    pub fn validate(&self) -> Result<()> {
        if !self
            .coords
            .keys()
            .eq(self.z_provenance.keys())
        {
            return Err(Error::validation(format!(
                "frame {}: coords and z_provenance key sets differ",
                self.frame_index
            )));
        }
        Ok(())
    }
}

/// An ordered sequence of poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence3D {
    pub frames: Vec<Pose3DFrame>,
    pub keypoint_names: Vec<String>,
    pub fps: f64,
}

impl Sequence3D {
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<u64> = None;
        for frame in &self.frames {
            if let Some(p) = prev {
                if frame.frame_index <= p {
                    return Err(Error::validation(format!(
                        "frame indices must be strictly increasing ({} after {})",
                        frame.frame_index, p
                    )));
                }
            }
            prev = Some(frame.frame_index);
            frame.validate()?;
            for name in &self.keypoint_names {
                if !frame.coords.contains_key(name) {
                    return Err(Error::validation(format!(
                        "frame {} is missing keypoint '{}'",
                        frame.frame_index, name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_keypoints(&self) -> usize {
        self.keypoint_names.len()
    }
}

fn default_epochs() -> usize {
    150
}
fn default_lr0() -> f64 {
    0.001
}
fn default_lr_decay() -> f64 {
    0.95
}
fn default_dropout() -> f64 {
    0.25
}
fn default_runs() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_channels() -> usize {
    1024
}
fn default_seed() -> u64 {
    1
}
fn default_confidence_threshold() -> f64 {
    0.95
}
fn default_ewma_alpha() -> f64 {
    0.5
}
fn default_bn_momentum_start() -> f64 {
    0.1
}
fn default_bn_momentum_end() -> f64 {
    0.001
}
fn default_batch_size_linear() -> usize {
    256
}
fn default_batch_size_temporal() -> usize {
    64
}

/// Training/evaluation protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    /// Learning-rate decay per epoch.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Repetitions per reported mean +/- std.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Side detections qualify only with confidence strictly above this.
    #[serde(default = "default_confidence_threshold")]
    pub confidence_threshold: f64,
    #[serde(default = "default_ewma_alpha")]
    pub ewma_alpha: f64,
    #[serde(default = "default_bn_momentum_start")]
    pub bn_momentum_start: f64,
    #[serde(default = "default_bn_momentum_end")]
    pub bn_momentum_end: f64,
    #[serde(default = "default_batch_size_linear")]
    pub batch_size_linear: usize,
    #[serde(default = "default_batch_size_temporal")]
    pub batch_size_temporal: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::validation(format!(
                "test_fraction must be in (0, 1) (got {})",
                self.test_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation(format!(
                "dropout must be in [0, 1) (got {})",
                self.dropout
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::validation(format!(
                "lr_decay must be in (0, 1] (got {})",
                self.lr_decay
            )));
        }
        if self.epochs < 1 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.runs < 1 {
            return Err(Error::validation("runs must be >= 1"));
        }
        if self.channels < 1 || self.batch_size_linear < 1 || self.batch_size_temporal < 1 {
            return Err(Error::validation("channels and batch sizes must be >= 1"));
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(Error::validation(format!(
                "ewma_alpha must be in (0, 1] (got {})",
                self.ewma_alpha
            )));
        }
        Ok(())
    }
}

/// The whole config document: rig geometry, run protocol, fitted surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub rig: CameraRig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub calibration: Vec<PolySurface>,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        self.run.validate()?;
        for surface in &self.calibration {
            surface.validate()?;
        }
        Ok(())
    }

    /// Check that every side camera has its surface (required before
    /// triangulation; a freshly synthesized config may not be calibrated yet).
    pub fn surfaces(&self) -> Result<BTreeMap<String, PolySurface>> {
        let mut map = BTreeMap::new();
        for surface in &self.calibration {
            map.insert(surface.calibration_id.clone(), surface.clone());
        }
        for cam in &self.rig.side_cameras {
            if !map.contains_key(&cam.calibration_id) {
                return Err(Error::config(format!(
                    "side camera '{}' references calibration_id '{}' but no such surface is present",
                    cam.camera_id, cam.calibration_id
                )));
            }
        }
        Ok(map)
    }
}

/// Parse the JSON config document, filling defaults for absent run fields.
pub fn parse_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let config: Config = serde_json::from_str(&text).map_err(|e| {
        Error::config(format!("{}: {}", path.as_ref().display(), e))
    })?;
    config.validate()?;
    Ok(config)
}

pub fn emit_config(path: impl AsRef<Path>, config: &Config) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)
        .map_err(|e| Error::config(format!("serialize config: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

// ── detections CSV ──────────────────────────────────────────────────────────

const DETECTION_HEADER: [&str; 6] = ["frame", "camera", "keypoint", "u", "v", "confidence"];

fn parse_field<T: std::str::FromStr>(raw: &str, field: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("field '{field}': cannot parse '{raw}'"),
    })
}

fn check_header(record: &csv::StringRecord, expect: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = record.iter().map(str::trim).collect();
    if got != expect {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "{what} header mismatch: got '{}', expected '{}'",
                got.join(","),
                expect.join(",")
            ),
        });
    }
    Ok(())
}

/// Parse a detections CSV; rows come back sorted by (frame, camera, keypoint).
pub fn parse_detections(path: impl AsRef<Path>) -> Result<Vec<Detection2D>> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_detections_from(file)
}

pub fn parse_detections_from(reader: impl Read) -> Result<Vec<Detection2D>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers().map_err(csv_err)?, &DETECTION_HEADER, "detections")?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != DETECTION_HEADER.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", DETECTION_HEADER.len(), record.len()),
            });
        }
        let det = Detection2D {
            frame_index: parse_field(&record[0], "frame", line)?,
            camera_id: record[1].trim().to_string(),
            keypoint: record[2].trim().to_string(),
            u_px: parse_field(&record[3], "u", line)?,
            v_px: parse_field(&record[4], "v", line)?,
            confidence: parse_field(&record[5], "confidence", line)?,
        };
        if !(0.0..=1.0).contains(&det.confidence) {
            return Err(Error::validation(format!(
                "line {line}: confidence {} outside [0, 1]",
                det.confidence
            )));
        }
        out.push(det);
    }
    out.sort_by(|a, b| {
        (a.frame_index, &a.camera_id, &a.keypoint).cmp(&(b.frame_index, &b.camera_id, &b.keypoint))
    });
    for pair in out.windows(2) {
        if pair[0].frame_index == pair[1].frame_index
            && pair[0].camera_id == pair[1].camera_id
            && pair[0].keypoint == pair[1].keypoint
        {
            return Err(Error::validation(format!(
                "duplicate detection key (frame {}, camera '{}', keypoint '{}')",
                pair[0].frame_index, pair[0].camera_id, pair[0].keypoint
            )));
        }
    }
    Ok(out)
}

pub fn emit_detections(path: impl AsRef<Path>, detections: &[Detection2D]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    emit_detections_to(file, detections)
}

pub fn emit_detections_to(writer: impl Write, detections: &[Detection2D]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DETECTION_HEADER).map_err(csv_err)?;
    for d in detections {
        wtr.write_record(&[
            d.frame_index.to_string(),
            d.camera_id.clone(),
            d.keypoint.clone(),
            d.u_px.to_string(),
            d.v_px.to_string(),
            d.confidence.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
        _ => Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        },
    }
}

// ── sequence CSV ────────────────────────────────────────────────────────────

const SEQUENCE_HEADER: [&str; 7] = ["frame", "keypoint", "x", "y", "z", "z_source", "n_side_cams"];

pub fn emit_sequence(path: impl AsRef<Path>, seq: &Sequence3D) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    emit_sequence_to(file, seq)
}

pub fn emit_sequence_to(writer: impl Write, seq: &Sequence3D) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SEQUENCE_HEADER).map_err(csv_err)?;
    for frame in &seq.frames {
        for name in &seq.keypoint_names {
            let xyz = frame.coords[name];
            let (source, n) = match frame.z_provenance[name] {
                ZProvenance::Measured { n_cameras } => ("measured", n_cameras),
                ZProvenance::Interpolated => ("interpolated", 0),
            };
            wtr.write_record(&[
                frame.frame_index.to_string(),
                name.clone(),
                xyz[0].to_string(),
                xyz[1].to_string(),
                xyz[2].to_string(),
                source.to_string(),
                n.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a sequence CSV. The file does not carry the frame rate, so the
/// caller supplies it (normally from the rig).
pub fn parse_sequence(path: impl AsRef<Path>, fps: f64) -> Result<Sequence3D> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_sequence_from(file, fps)
}

pub fn parse_sequence_from(reader: impl Read, fps: f64) -> Result<Sequence3D> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers().map_err(csv_err)?, &SEQUENCE_HEADER, "sequence")?;
    let mut frames: Vec<Pose3DFrame> = Vec::new();
    let mut keypoint_names: Vec<String> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let frame_index: u64 = parse_field(&record[0], "frame", line)?;
        let keypoint = record[1].trim().to_string();
        let x: f64 = parse_field(&record[2], "x", line)?;
        let y: f64 = parse_field(&record[3], "y", line)?;
        let z: f64 = parse_field(&record[4], "z", line)?;
        let n_cams: u32 = parse_field(&record[6], "n_side_cams", line)?;
        let provenance = match record[5].trim() {
            "measured" => {
                if n_cams < 1 {
                    return Err(Error::validation(format!(
                        "line {line}: measured z requires n_side_cams >= 1"
                    )));
                }
                ZProvenance::Measured { n_cameras: n_cams }
            }
            "interpolated" => ZProvenance::Interpolated,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("field 'z_source': unknown value '{other}'"),
                })
            }
        };
        if frames.last().map(|f| f.frame_index) != Some(frame_index) {
            frames.push(Pose3DFrame {
                frame_index,
                coords: BTreeMap::new(),
                z_provenance: BTreeMap::new(),
            });
        }
        let frame = frames.last_mut().unwrap();
        if frame.coords.insert(keypoint.clone(), [x, y, z]).is_some() {
            return Err(Error::validation(format!(
                "line {line}: duplicate keypoint '{keypoint}' in frame {frame_index}"
            )));
        }
        frame.z_provenance.insert(keypoint.clone(), provenance);
        if !keypoint_names.contains(&keypoint) {
            keypoint_names.push(keypoint);
        }
    }
    let seq = Sequence3D {
        frames,
        keypoint_names,
        fps,
    };
    seq.validate()?;
    Ok(seq)
}

// ── calibration samples CSV ─────────────────────────────────────────────────

const CALIBRATION_HEADER: [&str; 4] = ["camera", "v", "distance", "z"];

/// Parse calibration samples grouped by camera id.
pub fn parse_calibration_samples(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, Vec<crate::calib::CalibrationSample>>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    check_header(rdr.headers().map_err(csv_err)?, &CALIBRATION_HEADER, "calibration samples")?;
    let mut out: BTreeMap<String, Vec<crate::calib::CalibrationSample>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let camera = record[0].trim().to_string();
        let v: f64 = parse_field(&record[1], "v", line)?;
        let d: f64 = parse_field(&record[2], "distance", line)?;
        let z: f64 = parse_field(&record[3], "z", line)?;
        out.entry(camera)
            .or_default()
            .push(crate::calib::CalibrationSample::new(v, d, z)?);
    }
    Ok(out)
}

pub fn emit_calibration_samples(
    path: impl AsRef<Path>,
    samples: &BTreeMap<String, Vec<crate::calib::CalibrationSample>>,
) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(CALIBRATION_HEADER).map_err(csv_err)?;
    for (camera, rows) in samples {
        for s in rows {
            wtr.write_record(&[
                camera.clone(),
                s.v_px.to_string(),
                s.distance_mm.to_string(),
                s.z_mm.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_row() {
        let csv = "frame,camera,keypoint,u,v,confidence\n0,bottom,nose,10,20,0.99\n";
        let dets = parse_detections_from(csv.as_bytes()).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.frame_index, 0);
        assert_eq!(d.camera_id, "bottom");
        assert_eq!(d.keypoint, "nose");
        assert_eq!((d.u_px, d.v_px, d.confidence), (10.0, 20.0, 0.99));
    }

    #[test]
    fn confidence_out_of_range_names_line() {
        let csv = "frame,camera,keypoint,u,v,confidence\n0,bottom,nose,10,20,0.5\n1,bottom,nose,10,20,1.3\n";
        let err = parse_detections_from(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn malformed_row_names_line_and_field() {
        let csv = "frame,camera,keypoint,u,v,confidence\n0,bottom,nose,ten,20,0.9\n";
        let err = parse_detections_from(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("'u'"), "{msg}");
    }

    #[test]
    fn wrong_arity_rejected() {
        let csv = "frame,camera,keypoint,u,v,confidence\n0,bottom,nose,10,20\n";
        assert!(parse_detections_from(csv.as_bytes()).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = "frame,camera,keypoint,u,v,confidence\n0,bottom,nose,1,2,0.9\n0,bottom,nose,3,4,0.8\n";
        let err = parse_detections_from(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn header_mismatch_rejected() {
        let csv = "frame,cam,keypoint,u,v,confidence\n";
        assert!(parse_detections_from(csv.as_bytes()).is_err());
    }

    #[test]
    fn detections_round_trip() {
        let dets = vec![
            Detection2D {
                frame_index: 0,
                camera_id: "bottom".into(),
                keypoint: "nose".into(),
                u_px: 10.25,
                v_px: -3.5e-7,
                confidence: 0.99,
            },
            Detection2D {
                frame_index: 1,
                camera_id: "side_east".into(),
                keypoint: "tailbase".into(),
                u_px: 0.1 + 0.2,
                v_px: 123.456789012345,
                confidence: 0.0,
            },
        ];
        let mut buf = Vec::new();
        emit_detections_to(&mut buf, &dets).unwrap();
        let back = parse_detections_from(buf.as_slice()).unwrap();
        assert_eq!(back, dets);
    }

    fn demo_config_json() -> String {
        r#"{
            "rig": {
                "bottom_scale": 0.5,
                "side_cameras": [
                    {"camera_id": "side_east", "plane_position": [350.0, 0.0], "calibration_id": "side_east"}
                ]
            },
            "run": {"seed": 9}
        }"#
        .to_string()
    }

    #[test]
    fn config_defaults_fill_in() {
        let dir = std::env::temp_dir().join("poselift_test_config");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.json");
        std::fs::write(&path, demo_config_json()).unwrap();
        let config = parse_config(&path).unwrap();
        assert_eq!(config.run.epochs, 150);
        assert_eq!(config.run.confidence_threshold, 0.95);
        assert_eq!(config.run.lr0, 0.001);
        assert_eq!(config.run.seed, 9);
        assert_eq!(config.rig.fps, 50.0);
        assert_eq!(config.rig.keypoints.len(), 8);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn config_missing_required_field_is_config_error() {
        let dir = std::env::temp_dir().join("poselift_test_config2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.json");
        std::fs::write(&path, r#"{"rig": {"side_cameras": []}}"#).unwrap();
        let err = parse_config(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("bottom_scale"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn config_invariant_violation_is_validation_error() {
        let dir = std::env::temp_dir().join("poselift_test_config3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.json");
        let json = demo_config_json().replace("\"seed\": 9", "\"seed\": 9, \"test_fraction\": 1.5");
        std::fs::write(&path, json).unwrap();
        let err = parse_config(&path).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn sequence_round_trip_with_provenance() {
        let mut coords = BTreeMap::new();
        coords.insert("nose".to_string(), [1.5, -2.0, 30.0]);
        coords.insert("tailbase".to_string(), [0.25, 8.0, 12.5]);
        let mut prov = BTreeMap::new();
        prov.insert("nose".to_string(), ZProvenance::Measured { n_cameras: 2 });
        prov.insert("tailbase".to_string(), ZProvenance::Interpolated);
        let seq = Sequence3D {
            frames: vec![Pose3DFrame {
                frame_index: 4,
                coords,
                z_provenance: prov,
            }],
            keypoint_names: vec!["nose".into(), "tailbase".into()],
            fps: 50.0,
        };
        let mut buf = Vec::new();
        emit_sequence_to(&mut buf, &seq).unwrap();
        let back = parse_sequence_from(buf.as_slice(), 50.0).unwrap();
        assert_eq!(back, seq);
    }
}
