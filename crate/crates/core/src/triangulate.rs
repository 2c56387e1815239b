//! Geometric fusion of bottom-view (x, y) with side-view heights into 3D
//! sequences: confidence gating, multi-camera averaging, zero-phase EWMA gap
//! filling.

use std::collections::BTreeMap;

use crate::calib::PolySurface;
use crate::datamodel::{
    CameraRig, Detection2D, Pose3DFrame, RunConfig, Sequence3D, ZProvenance, BOTTOM_CAMERA_ID,
};
use crate::error::{Error, Result};

/// Height estimate for one (frame, keypoint) slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZEstimate {
    pub value_mm: Option<f64>,
    /// Number of confidence-qualifying side cameras averaged.
    pub n_cameras: u32,
}

/// Average the heights of all side detections whose confidence is strictly
/// above `threshold`. Each camera's height comes from its calibration
/// surface evaluated at (pixel height, planar distance to the camera).
pub fn estimate_z(
    _frame: u64,
    keypoint: &str,
    xy_mm: (f64, f64),
    side_detections: &[&Detection2D],
    rig: &CameraRig,
    surfaces: &BTreeMap<String, PolySurface>,
    threshold: f64,
) -> Result<ZEstimate> {
    // Sorting by camera id makes the mean independent of input order.
    let mut qualifying: Vec<(&str, f64)> = Vec::new();
    for det in side_detections {
        let cam = rig.side_camera(&det.camera_id).ok_or_else(|| {
            Error::validation(format!(
                "detection of '{keypoint}' references unknown camera '{}'",
                det.camera_id
            ))
        })?;
        if det.confidence <= threshold {
            continue;
        }
        let surface = surfaces.get(&cam.calibration_id).ok_or_else(|| {
            Error::validation(format!(
                "camera '{}' has no fitted surface '{}'",
                cam.camera_id, cam.calibration_id
            ))
        })?;
        let dx = xy_mm.0 - cam.plane_position.0;
        let dy = xy_mm.1 - cam.plane_position.1;
        let distance = dx.hypot(dy);
        qualifying.push((&det.camera_id, surface.eval(det.v_px, distance)));
    }
    qualifying.sort_by(|a, b| a.0.cmp(b.0));
    let n = qualifying.len() as u32;
    let value_mm = if n == 0 {
        None
    } else {
        Some(qualifying.iter().map(|(_, z)| z).sum::<f64>() / n as f64)
    };
    Ok(ZEstimate { value_mm, n_cameras: n })
}

/// Zero-phase gap fill: forward and backward EWMA passes (state updated only
/// on present values), averaged at missing slots. Present slots are returned
/// unchanged.
pub fn ewma_fill(series: &[Option<f64>], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::validation(format!(
            "ewma alpha must be in (0, 1] (got {alpha})"
        )));
    }
    if series.iter().all(Option::is_none) {
        return Err(Error::validation("ewma_fill: series has no present values"));
    }
    let pass = |iter: &mut dyn Iterator<Item = &Option<f64>>| -> Vec<Option<f64>> {
        let mut state: Option<f64> = None;
        iter.map(|slot| {
            if let Some(x) = slot {
                state = Some(match state {
                    None => *x,
                    Some(s) => alpha * x + (1.0 - alpha) * s,
                });
            }
            state
        })
        .collect()
    };
    let fwd = pass(&mut series.iter());
    let mut bwd = pass(&mut series.iter().rev());
    bwd.reverse();
    Ok(series
        .iter()
        .enumerate()
        .map(|(i, slot)| match slot {
            Some(x) => *x,
            None => match (fwd[i], bwd[i]) {
                (Some(a), Some(b)) => (a + b) / 2.0,
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("at least one present value exists"),
            },
        })
        .collect())
}

/// Full triangulation: scale bottom (u, v) to arena mm, gate by confidence,
/// average side-camera heights, EWMA-fill every gap, and report coverage
/// (fraction of frames where every keypoint had at least one qualifying side
/// camera before interpolation).
pub fn triangulate_sequence(
    detections: &[Detection2D],
    rig: &CameraRig,
    surfaces: &BTreeMap<String, PolySurface>,
    config: &RunConfig,
) -> Result<(Sequence3D, f64)> {
    if detections.is_empty() {
        return Err(Error::EmptyInput("no detections to triangulate".into()));
    }
    for det in detections {
        if det.camera_id != BOTTOM_CAMERA_ID && rig.side_camera(&det.camera_id).is_none() {
            return Err(Error::validation(format!(
                "detection references unknown camera '{}'",
                det.camera_id
            )));
        }
    }
    let threshold = config.confidence_threshold;
    let alpha = config.ewma_alpha;
    let keypoints = &rig.keypoints;

    let mut frames: Vec<u64> = detections.iter().map(|d| d.frame_index).collect();
    frames.sort_unstable();
    frames.dedup();
    let n_frames = frames.len();
    let frame_slot: BTreeMap<u64, usize> =
        frames.iter().enumerate().map(|(i, f)| (*f, i)).collect();

    let mut bottom: BTreeMap<&str, Vec<Option<(f64, f64)>>> = keypoints
        .iter()
        .map(|k| (k.as_str(), vec![None; n_frames]))
        .collect();
    let mut sides: BTreeMap<(u64, &str), Vec<&Detection2D>> = BTreeMap::new();
    let mut bottom_seen: BTreeMap<&str, bool> =
        keypoints.iter().map(|k| (k.as_str(), false)).collect();
    for det in detections {
        let Some(slot) = bottom.get_mut(det.keypoint.as_str()) else {
            continue; // keypoint not in the rig set
        };
        let fi = frame_slot[&det.frame_index];
        if det.camera_id == BOTTOM_CAMERA_ID {
            *bottom_seen.get_mut(det.keypoint.as_str()).unwrap() = true;
            if det.confidence > threshold {
                slot[fi] = Some((det.u_px * rig.bottom_scale, det.v_px * rig.bottom_scale));
            }
        } else {
            sides
                .entry((det.frame_index, det.keypoint.as_str()))
                .or_default()
                .push(det);
        }
    }
    for (kp, seen) in &bottom_seen {
        if !*seen {
            return Err(Error::validation(format!(
                "keypoint '{kp}' missing from the bottom camera stream"
            )));
        }
    }

    // Fill bottom-view gaps per keypoint-coordinate series.
    let mut xy_filled: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for kp in keypoints {
        let series = &bottom[kp.as_str()];
        let xs: Vec<Option<f64>> = series.iter().map(|s| s.map(|(x, _)| x)).collect();
        let ys: Vec<Option<f64>> = series.iter().map(|s| s.map(|(_, y)| y)).collect();
        xy_filled.insert(kp.as_str(), (ewma_fill(&xs, alpha)?, ewma_fill(&ys, alpha)?));
    }

    let mut z_series: BTreeMap<&str, Vec<Option<f64>>> = keypoints
        .iter()
        .map(|k| (k.as_str(), vec![None; n_frames]))
        .collect();
    let mut n_cams: BTreeMap<&str, Vec<u32>> = keypoints
        .iter()
        .map(|k| (k.as_str(), vec![0u32; n_frames]))
        .collect();
    let mut covered_frames = 0usize;
    for (fi, frame) in frames.iter().enumerate() {
        let mut all_covered = true;
        for kp in keypoints {
            let (xs, ys) = &xy_filled[kp.as_str()];
            let dets = sides
                .get(&(*frame, kp.as_str()))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let est = estimate_z(*frame, kp, (xs[fi], ys[fi]), dets, rig, surfaces, threshold)?;
            z_series.get_mut(kp.as_str()).unwrap()[fi] = est.value_mm;
            n_cams.get_mut(kp.as_str()).unwrap()[fi] = est.n_cameras;
            if est.n_cameras == 0 {
                all_covered = false;
            }
        }
        if all_covered {
            covered_frames += 1;
        }
    }
    let coverage = covered_frames as f64 / n_frames as f64;

    let mut z_filled: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for kp in keypoints {
        z_filled.insert(kp.as_str(), ewma_fill(&z_series[kp.as_str()], alpha)?);
    }

    let out_frames: Vec<Pose3DFrame> = frames
        .iter()
        .enumerate()
        .map(|(fi, frame)| {
            let mut coords = BTreeMap::new();
            let mut provenance = BTreeMap::new();
            for kp in keypoints {
                let (xs, ys) = &xy_filled[kp.as_str()];
                coords.insert(kp.clone(), [xs[fi], ys[fi], z_filled[kp.as_str()][fi]]);
                let n = n_cams[kp.as_str()][fi];
                provenance.insert(
                    kp.clone(),
                    if n >= 1 {
                        ZProvenance::Measured { n_cameras: n }
                    } else {
                        ZProvenance::Interpolated
                    },
                );
            }
            Pose3DFrame {
                frame_index: *frame,
                coords,
                z_provenance: provenance,
            }
        })
        .collect();
    let seq = Sequence3D {
        frames: out_frames,
        keypoint_names: keypoints.clone(),
        fps: rig.fps,
    };
    seq.validate()?;
    Ok((seq, coverage))
}
