//! Deterministic synthetic data: smooth band-limited skeleton motion with a
//! controllable temporal depth cue, camera projection with confidence
//! dropouts, and calibration-target sampling.
//!
//! The depth cue: z mixes an independent band-limited signal with the
//! keypoint's planar speed averaged over a centred 1-second window, weighted
//! by `z_coupling`. At full coupling z is predictable from the (x, y)
//! history but not from any single frame, which is what separates the
//! temporal model from the per-frame one.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::calib::{CalibrationSample, PolySurface};
use crate::datamodel::{
    CameraRig, Detection2D, Pose3DFrame, Sequence3D, SideCamera, ZProvenance, BOTTOM_CAMERA_ID,
};
use crate::error::{Error, Result};
use crate::nncore::{derive_seed, rng_from_seed};

/// Mean and spread of generated physical heights, mm.
pub const Z_MEAN_MM: f64 = 30.0;
pub const Z_STD_MM: f64 = 6.0;
/// Marker heights of the synthetic calibration target, mm.
pub const MARKER_HEIGHTS_MM: [f64; 3] = [10.0, 30.0, 50.0];
/// Confidence emitted for good and dropped detections.
pub const CONFIDENCE_HIGH: f64 = 0.99;
pub const CONFIDENCE_LOW: f64 = 0.5;

const SINUSOIDS_PER_AXIS: usize = 8;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub keypoints: Vec<String>,
    /// Maximum motion frequency, Hz; must stay below fps/2.
    pub bandwidth_hz: f64,
    /// Strength of the temporal depth cue in [0, 1].
    pub z_coupling: f64,
    pub noise_px: f64,
    pub dropout_prob: f64,
    /// Ground-truth pixel->height map shared by every side camera.
    pub planted_surface: PolySurface,
}

/// Mildly distance-dependent, strictly increasing in v over the working
/// range; z(v=0) = 0.
pub fn default_planted_surface() -> PolySurface {
    PolySurface {
        calibration_id: "planted".into(),
        degree_v: 1,
        degree_d: 1,
        coefficients: vec![0.0, 0.0, 0.2, -0.0001],
        fit_rms_mm: 0.0,
        v_hull: Some((0.0, 600.0)),
        d_hull: Some((50.0, 600.0)),
    }
}

/// Four side cameras at 90-degree spacing around a circular arena, bottom
/// camera at 0.5 mm/px.
pub fn default_rig() -> CameraRig {
    let r = 350.0;
    CameraRig {
        bottom_scale: 0.5,
        side_cameras: vec![
            SideCamera {
                camera_id: "side_east".into(),
                plane_position: (r, 0.0),
                calibration_id: "side_east".into(),
            },
            SideCamera {
                camera_id: "side_north".into(),
                plane_position: (0.0, r),
                calibration_id: "side_north".into(),
            },
            SideCamera {
                camera_id: "side_west".into(),
                plane_position: (-r, 0.0),
                calibration_id: "side_west".into(),
            },
            SideCamera {
                camera_id: "side_south".into(),
                plane_position: (0.0, -r),
                calibration_id: "side_south".into(),
            },
        ],
        fps: 50.0,
        keypoints: crate::datamodel::default_keypoints(),
    }
}

impl SynthSpec {
    pub fn new(seed: u64, frames: usize) -> SynthSpec {
        SynthSpec {
            seed,
            frames,
            fps: 50.0,
            keypoints: crate::datamodel::default_keypoints(),
            bandwidth_hz: 1.0,
            z_coupling: 0.8,
            noise_px: 0.0,
            dropout_prob: 0.0,
            planted_surface: default_planted_surface(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 1 {
            return Err(Error::validation("synth spec: frames must be >= 1"));
        }
        if self.fps <= 0.0 || self.bandwidth_hz >= self.fps / 2.0 {
            return Err(Error::validation(format!(
                "synth spec: need 0 < bandwidth ({}) < fps/2 ({})",
                self.bandwidth_hz,
                self.fps / 2.0
            )));
        }
        if !(0.0..=1.0).contains(&self.z_coupling) {
            return Err(Error::validation("synth spec: z_coupling must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::validation("synth spec: dropout_prob must be in [0, 1)"));
        }
        if self.noise_px < 0.0 {
            return Err(Error::validation("synth spec: noise_px must be >= 0"));
        }
        if self.keypoints.is_empty() {
            return Err(Error::validation("synth spec: keypoint set is empty"));
        }
        Ok(())
    }
}

/// Sum of sinusoids on exact DFT bins of the sequence length, standardized
/// to zero mean and unit sample variance.
fn band_limited_signal(rng: &mut impl Rng, frames: usize, fps: f64, bandwidth: f64) -> Result<Vec<f64>> {
    let k_max = (bandwidth * frames as f64 / fps).floor() as usize;
    if k_max < 1 {
        return Err(Error::Generation(format!(
            "sequence too short for bandwidth {bandwidth} Hz at {fps} fps ({frames} frames)"
        )));
    }
    let mut signal = vec![0.0f64; frames];
    for _ in 0..SINUSOIDS_PER_AXIS {
        let k = rng.gen_range(1..=k_max) as f64;
        let amp = rng.gen_range(0.5..1.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let omega = std::f64::consts::TAU * k / frames as f64;
        for (t, s) in signal.iter_mut().enumerate() {
            *s += amp * (omega * t as f64 + phase).sin();
        }
    }
    Ok(standardize_in_place(signal))
}

fn standardize_in_place(mut signal: Vec<f64>) -> Vec<f64> {
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = if signal.len() > 1 {
        signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    for v in signal.iter_mut() {
        *v = if std > 1e-300 { (*v - mean) / std } else { 0.0 };
    }
    signal
}

/// Planar speed averaged over a centred window of ~1 second.
fn windowed_planar_speed(xs: &[f64], ys: &[f64], fps: f64) -> Vec<f64> {
    let n = xs.len();
    let mut speed = vec![0.0f64; n];
    for t in 0..n {
        let (a, b, dt) = if n == 1 {
            (0, 0, 1.0)
        } else if t == 0 {
            (1, 0, 1.0 / fps)
        } else if t == n - 1 {
            (n - 1, n - 2, 1.0 / fps)
        } else {
            (t + 1, t - 1, 2.0 / fps)
        };
        speed[t] = (xs[a] - xs[b]).hypot(ys[a] - ys[b]) / dt;
    }
    let h = (fps / 2.0).round() as usize;
    let mut out = vec![0.0f64; n];
    for (t, o) in out.iter_mut().enumerate() {
        let lo = t.saturating_sub(h);
        let hi = (t + h).min(n - 1);
        *o = speed[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
    }
    out
}

/// Generate ground-truth motion. x and y are band-limited sinusoid sums per
/// keypoint (plus a per-keypoint offset); z blends an independent signal with
/// the windowed-speed cue according to `z_coupling`.
pub fn gen_sequence(spec: &SynthSpec) -> Result<Sequence3D> {
    spec.validate()?;
    let n = spec.frames;
    let mut per_keypoint: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for (ki, _) in spec.keypoints.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(spec.seed, 10_000 + ki as u64));
        let x_sig = band_limited_signal(&mut rng, n, spec.fps, spec.bandwidth_hz)?;
        let y_sig = band_limited_signal(&mut rng, n, spec.fps, spec.bandwidth_hz)?;
        let z_sig = band_limited_signal(&mut rng, n, spec.fps, spec.bandwidth_hz)?;
        let x_off = rng.gen_range(-40.0..40.0);
        let y_off = rng.gen_range(-40.0..40.0);
        let x_amp = rng.gen_range(25.0..45.0);
        let y_amp = rng.gen_range(25.0..45.0);
        let xs: Vec<f64> = x_sig.iter().map(|v| x_off + x_amp * v).collect();
        let ys: Vec<f64> = y_sig.iter().map(|v| y_off + y_amp * v).collect();
        let cue = standardize_in_place(windowed_planar_speed(&xs, &ys, spec.fps));
        let c = spec.z_coupling;
        let zs: Vec<f64> = z_sig
            .iter()
            .zip(cue.iter())
            .map(|(u, g)| Z_MEAN_MM + Z_STD_MM * ((1.0 - c) * u + c * g))
            .collect();
        per_keypoint.push((xs, ys, zs));
    }
    let frames = (0..n)
        .map(|t| {
            let mut coords = BTreeMap::new();
            let mut prov = BTreeMap::new();
            for (ki, name) in spec.keypoints.iter().enumerate() {
                let (xs, ys, zs) = &per_keypoint[ki];
                coords.insert(name.clone(), [xs[t], ys[t], zs[t]]);
                prov.insert(name.clone(), ZProvenance::Measured { n_cameras: 1 });
            }
            Pose3DFrame {
                frame_index: t as u64,
                coords,
                z_provenance: prov,
            }
        })
        .collect();
    Ok(Sequence3D {
        frames,
        keypoint_names: spec.keypoints.clone(),
        fps: spec.fps,
    })
}

/// Numerically invert the planted surface in v for a given (z, d): bisection
/// with adaptive bracket growth. The surface must be strictly monotone in v.
fn invert_surface_v(surface: &PolySurface, z: f64, d: f64) -> Result<f64> {
    let (mut lo, mut hi) = surface.v_hull.unwrap_or((0.0, 600.0));
    let increasing = surface.eval(hi, d) > surface.eval(lo, d);
    let value = |v: f64| {
        if increasing {
            surface.eval(v, d)
        } else {
            -surface.eval(v, d)
        }
    };
    let target = if increasing { z } else { -z };
    let mut grow = hi - lo;
    let mut tries = 0;
    while value(lo) > target {
        lo -= grow;
        grow *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Generation(format!(
                "planted surface not invertible for z={z} at d={d}"
            )));
        }
    }
    grow = hi - lo;
    while value(hi) < target {
        hi += grow;
        grow *= 2.0;
        tries += 1;
        if tries > 120 {
            return Err(Error::Generation(format!(
                "planted surface not invertible for z={z} at d={d}"
            )));
        }
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if value(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Strict monotonicity scan of the planted surface over the v hull for a few
/// representative distances.
fn check_monotone(surface: &PolySurface, distances: &[f64]) -> Result<()> {
    let (lo, hi) = surface.v_hull.unwrap_or((0.0, 600.0));
    let steps = 400;
    for &d in distances {
        let mut direction = 0.0f64;
        let mut prev = surface.eval(lo, d);
        for i in 1..=steps {
            let v = lo + (hi - lo) * i as f64 / steps as f64;
            let cur = surface.eval(v, d);
            let delta = cur - prev;
            if delta == 0.0 || (direction != 0.0 && delta.signum() != direction) {
                return Err(Error::Generation(format!(
                    "planted surface is not strictly monotone in v at d={d}"
                )));
            }
            direction = delta.signum();
            prev = cur;
        }
    }
    Ok(())
}

/// Project a ground-truth sequence through the rig: bottom (u, v) from
/// (x, y) / bottom_scale, side pixel heights from the inverted planted
/// surface, Gaussian pixel noise, and seeded confidence dropouts.
pub fn project(seq: &Sequence3D, rig: &CameraRig, spec: &SynthSpec) -> Result<Vec<Detection2D>> {
    spec.validate()?;
    rig.validate()?;
    let surface = &spec.planted_surface;
    let mut all_d: Vec<f64> = Vec::new();
    for frame in seq.frames.iter().take(50) {
        for p in frame.coords.values() {
            for cam in &rig.side_cameras {
                all_d.push((p[0] - cam.plane_position.0).hypot(p[1] - cam.plane_position.1));
            }
        }
    }
    let d_lo = all_d.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_hi = all_d.iter().cloned().fold(0.0f64, f64::max);
    check_monotone(surface, &[d_lo, 0.5 * (d_lo + d_hi), d_hi])?;

    let mut noise_rng = rng_from_seed(derive_seed(spec.seed, 20_000));
    let mut drop_rng = rng_from_seed(derive_seed(spec.seed, 20_001));
    let mut noise = |sigma: f64| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            let z: f64 = noise_rng.sample(StandardNormal);
            sigma * z
        }
    };
    let mut confidence = || -> f64 {
        let u: f64 = drop_rng.gen();
        if u < spec.dropout_prob {
            CONFIDENCE_LOW
        } else {
            CONFIDENCE_HIGH
        }
    };

    let mut detections = Vec::new();
    for frame in &seq.frames {
        for name in &seq.keypoint_names {
            let p = frame.coords[name];
            detections.push(Detection2D {
                frame_index: frame.frame_index,
                camera_id: BOTTOM_CAMERA_ID.into(),
                keypoint: name.clone(),
                u_px: p[0] / rig.bottom_scale + noise(spec.noise_px),
                v_px: p[1] / rig.bottom_scale + noise(spec.noise_px),
                confidence: confidence(),
            });
            for cam in &rig.side_cameras {
                let d = (p[0] - cam.plane_position.0).hypot(p[1] - cam.plane_position.1);
                let v = invert_surface_v(surface, p[2], d)? + noise(spec.noise_px);
                // horizontal pixel: component perpendicular to the view axis
                let axis_norm = cam.plane_position.0.hypot(cam.plane_position.1).max(1e-9);
                let perp = (-cam.plane_position.1 / axis_norm, cam.plane_position.0 / axis_norm);
                let u = (p[0] * perp.0 + p[1] * perp.1) / rig.bottom_scale + noise(spec.noise_px);
                detections.push(Detection2D {
                    frame_index: frame.frame_index,
                    camera_id: cam.camera_id.clone(),
                    keypoint: name.clone(),
                    u_px: u,
                    v_px: v,
                    confidence: confidence(),
                });
            }
        }
    }
    detections.sort_by(|a, b| {
        (a.frame_index, &a.camera_id, &a.keypoint).cmp(&(b.frame_index, &b.camera_id, &b.keypoint))
    });
    Ok(detections)
}

/// Sample the planted surface as a physical calibration pass: the marker
/// heights observed from >= 20 seeded planar positions.
pub fn gen_calibration(spec: &SynthSpec, camera: &SideCamera) -> Result<Vec<CalibrationSample>> {
    spec.validate()?;
    let mut tag = 0xcbf2_9ce4_8422_2325u64; // FNV-1a over the camera id
    for b in camera.camera_id.as_bytes() {
        tag ^= *b as u64;
        tag = tag.wrapping_mul(0x1000_0000_01b3);
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, tag));
    let n_positions = 24;
    let mut samples = Vec::with_capacity(n_positions * MARKER_HEIGHTS_MM.len());
    for _ in 0..n_positions {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let radius = rng.gen_range(20.0..180.0);
        let (x, y) = (radius * angle.cos(), radius * angle.sin());
        let d = (x - camera.plane_position.0).hypot(y - camera.plane_position.1);
        for z in MARKER_HEIGHTS_MM {
            let mut v = invert_surface_v(&spec.planted_surface, z, d)?;
            if spec.noise_px > 0.0 {
                let e: f64 = rng.sample(StandardNormal);
                v += spec.noise_px * e;
            }
            samples.push(CalibrationSample::new(v, d, z)?);
        }
    }
    Ok(samples)
}
