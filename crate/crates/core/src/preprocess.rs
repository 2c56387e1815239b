//! Egocentric alignment, scenario construction, standardization, and
//! train/test splitting.
//!
//! Pipeline order: align -> (scenario rotation) -> axis selection -> split ->
//! standardize, with standardization statistics taken from the training
//! partition only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Pose3DFrame, Sequence3D};
use crate::error::{Error, Result};
use crate::nncore::{rng_from_seed, Tensor};

/// A coordinate axis of the triangulated space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    fn from_char(c: char) -> Option<Axis> {
        match c {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        }
    }
}

/// Optional rigid rotation applied to the whole sequence before axis
/// selection (e.g. the 45-degree x-axis tilt scenario).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub axis: Axis,
    pub degrees: f64,
}

/// Which two axes feed the model and which one it predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub input_axes: [Axis; 2],
    pub output_axis: Axis,
    pub pre_rotation: Option<Rotation>,
}

impl Scenario {
    pub fn new(input_axes: [Axis; 2], output_axis: Axis, pre_rotation: Option<Rotation>) -> Result<Self> {
        let mut seen = [false; 3];
        seen[input_axes[0].index()] = true;
        seen[input_axes[1].index()] = true;
        seen[output_axis.index()] = true;
        if seen != [true; 3] {
            return Err(Error::validation(format!(
                "scenario axes must partition {{x,y,z}} (got {}{} -> {})",
                input_axes[0].name(),
                input_axes[1].name(),
                output_axis.name()
            )));
        }
        Ok(Scenario {
            input_axes,
            output_axis,
            pre_rotation,
        })
    }

    /// Parse the CLI form `xy-z`, `xz-y`, `zy-x`.
    pub fn parse(name: &str) -> Result<Self> {
        let chars: Vec<char> = name.chars().collect();
        if chars.len() == 4 && chars[2] == '-' {
            if let (Some(a), Some(b), Some(out)) = (
                Axis::from_char(chars[0]),
                Axis::from_char(chars[1]),
                Axis::from_char(chars[3]),
            ) {
                return Scenario::new([a, b], out, None);
            }
        }
        Err(Error::validation(format!(
            "unknown scenario '{name}' (expected one of xy-z, xz-y, zy-x)"
        )))
    }

    /// CLI name without the rotation suffix.
    pub fn name(&self) -> String {
        format!(
            "{}{}-{}",
            self.input_axes[0].name(),
            self.input_axes[1].name(),
            self.output_axis.name()
        )
    }

    /// Unique label for file names and report rows.
    pub fn label(&self) -> String {
        match &self.pre_rotation {
            None => self.name(),
            Some(r) => format!("{}_rot{}{}", self.name(), r.degrees, r.axis.name()),
        }
    }
}

/// Right-handed rotation of every coordinate about the given axis.
pub fn rotate_sequence(seq: &Sequence3D, axis: Axis, degrees: f64) -> Sequence3D {
    let theta = degrees.to_radians();
    let (s, c) = theta.sin_cos();
    let rotate = |p: [f64; 3]| -> [f64; 3] {
        let [x, y, z] = p;
        match axis {
            Axis::X => [x, y * c - z * s, y * s + z * c],
            Axis::Y => [x * c + z * s, y, -x * s + z * c],
            Axis::Z => [x * c - y * s, x * s + y * c, z],
        }
    };
    let frames = seq
        .frames
        .iter()
        .map(|f| Pose3DFrame {
            frame_index: f.frame_index,
            coords: f.coords.iter().map(|(k, p)| (k.clone(), rotate(*p))).collect(),
            z_provenance: f.z_provenance.clone(),
        })
        .collect();
    Sequence3D {
        frames,
        keypoint_names: seq.keypoint_names.clone(),
        fps: seq.fps,
    }
}

/// Translate the pose so the (x, y) centroid over keypoints is the origin,
/// then rotate about z so the tailbase->nose vector points along +x.
/// z values are untouched.
pub fn egocentric_align(frame: &Pose3DFrame, nose: &str, tailbase: &str) -> Result<Pose3DFrame> {
    let nose_p = frame
        .coords
        .get(nose)
        .ok_or_else(|| Error::validation(format!("frame {} has no '{nose}'", frame.frame_index)))?;
    let tail_p = frame.coords.get(tailbase).ok_or_else(|| {
        Error::validation(format!("frame {} has no '{tailbase}'", frame.frame_index))
    })?;
    let dir = (nose_p[0] - tail_p[0], nose_p[1] - tail_p[1]);
    let norm = dir.0.hypot(dir.1);
    if norm < 1e-12 {
        return Err(Error::validation(format!(
            "degenerate pose in frame {}: '{nose}' and '{tailbase}' coincide in (x, y)",
            frame.frame_index
        )));
    }
    let n = frame.coords.len() as f64;
    let cx = frame.coords.values().map(|p| p[0]).sum::<f64>() / n;
    let cy = frame.coords.values().map(|p| p[1]).sum::<f64>() / n;
    // rotate by -atan2(dir) so dir lands on (+norm, 0)
    let (s, c) = (dir.1 / norm, dir.0 / norm);
    let coords = frame
        .coords
        .iter()
        .map(|(k, p)| {
            let (x, y) = (p[0] - cx, p[1] - cy);
            (k.clone(), [x * c + y * s, -x * s + y * c, p[2]])
        })
        .collect();
    Ok(Pose3DFrame {
        frame_index: frame.frame_index,
        coords,
        z_provenance: frame.z_provenance.clone(),
    })
}

/// Align every frame of a sequence.
pub fn align_sequence(seq: &Sequence3D, nose: &str, tailbase: &str) -> Result<Sequence3D> {
    let frames = seq
        .frames
        .iter()
        .map(|f| egocentric_align(f, nose, tailbase))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence3D {
        frames,
        keypoint_names: seq.keypoint_names.clone(),
        fps: seq.fps,
    })
}

/// Apply the scenario's rotation and select axes: per frame, inputs are the
/// two input axes interleaved per keypoint (width 2K) and targets the output
/// axis (width K).
pub fn make_scenario(seq: &Sequence3D, scenario: &Scenario) -> Result<(Tensor, Tensor)> {
    if seq.frames.is_empty() {
        return Err(Error::EmptyInput("make_scenario: empty sequence".into()));
    }
    let rotated;
    let seq = match &scenario.pre_rotation {
        Some(r) => {
            rotated = rotate_sequence(seq, r.axis, r.degrees);
            &rotated
        }
        None => seq,
    };
    let (n, k) = (seq.n_frames(), seq.n_keypoints());
    let (a0, a1) = (scenario.input_axes[0].index(), scenario.input_axes[1].index());
    let out = scenario.output_axis.index();
    let mut inputs = Vec::with_capacity(n * 2 * k);
    let mut targets = Vec::with_capacity(n * k);
    for frame in &seq.frames {
        for name in &seq.keypoint_names {
            let p = frame.coords[name];
            inputs.push(p[a0]);
            inputs.push(p[a1]);
            targets.push(p[out]);
        }
    }
    Ok((
        Tensor::from_vec(&[n, 2 * k], inputs)?,
        Tensor::from_vec(&[n, k], targets)?,
    ))
}

// ── standardization ─────────────────────────────────────────────────────────

/// Per-column mean and sample standard deviation of the training data;
/// column c of the inputs is (keypoint c/2, input axis c%2), column c of the
/// targets is (keypoint c, output axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_stats(t: &Tensor) -> Result<Vec<(f64, f64)>> {
    let dims = t.dims();
    let width = *dims.last().unwrap();
    let rows = t.len() / width;
    if rows < 2 {
        return Err(Error::validation("standardizer needs at least 2 samples"));
    }
    let data = t.data();
    let mut stats = Vec::with_capacity(width);
    for c in 0..width {
        let mut mean = 0.0;
        for r in 0..rows {
            mean += data[r * width + c];
        }
        mean /= rows as f64;
        let mut ss = 0.0;
        for r in 0..rows {
            let d = data[r * width + c] - mean;
            ss += d * d;
        }
        let var = ss / (rows as f64 - 1.0);
        stats.push((mean, var.sqrt()));
    }
    Ok(stats)
}

/// Fit per-(keypoint, axis) statistics on training inputs and targets.
/// Inputs may be per-frame `(n, 2K)` or windowed `(n, window, 2K)`.
pub fn fit_standardizer(
    train_inputs: &Tensor,
    train_targets: &Tensor,
    keypoints: &[String],
    scenario: &Scenario,
) -> Result<Standardizer> {
    let input_stats = column_stats(train_inputs)?;
    let target_stats = column_stats(train_targets)?;
    if input_stats.len() != 2 * keypoints.len() || target_stats.len() != keypoints.len() {
        return Err(Error::shape(format!(
            "standardizer: {} input / {} target columns for {} keypoints",
            input_stats.len(),
            target_stats.len(),
            keypoints.len()
        )));
    }
    for (c, (_, std)) in input_stats.iter().enumerate() {
        if *std == 0.0 {
            return Err(Error::validation(format!(
                "zero variance in input series (keypoint '{}', axis {})",
                keypoints[c / 2],
                scenario.input_axes[c % 2].name()
            )));
        }
    }
    for (c, (_, std)) in target_stats.iter().enumerate() {
        if *std == 0.0 {
            return Err(Error::validation(format!(
                "zero variance in target series (keypoint '{}', axis {})",
                keypoints[c],
                scenario.output_axis.name()
            )));
        }
    }
    Ok(Standardizer {
        input_mean: input_stats.iter().map(|s| s.0).collect(),
        input_std: input_stats.iter().map(|s| s.1).collect(),
        target_mean: target_stats.iter().map(|s| s.0).collect(),
        target_std: target_stats.iter().map(|s| s.1).collect(),
    })
}

fn map_columns(t: &Tensor, mean: &[f64], std: &[f64], invert: bool) -> Tensor {
    let width = *t.dims().last().unwrap();
    debug_assert_eq!(width, mean.len());
    let mut out = t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % width;
        *v = if invert {
            *v * std[c] + mean[c]
        } else {
            (*v - mean[c]) / std[c]
        };
    }
    out
}

impl Standardizer {
    pub fn apply_inputs(&self, t: &Tensor) -> Tensor {
        map_columns(t, &self.input_mean, &self.input_std, false)
    }

    pub fn apply_targets(&self, t: &Tensor) -> Tensor {
        map_columns(t, &self.target_mean, &self.target_std, false)
    }

    pub fn invert_inputs(&self, t: &Tensor) -> Tensor {
        map_columns(t, &self.input_mean, &self.input_std, true)
    }

    pub fn invert_targets(&self, t: &Tensor) -> Tensor {
        map_columns(t, &self.target_mean, &self.target_std, true)
    }
}

// ── splitting ───────────────────────────────────────────────────────────────

/// Disjoint train/test arrays; temporal data is `(samples, window, 2K)`,
/// per-frame data `(samples, 2K)`; targets are `(samples, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_inputs: Tensor,
    pub train_targets: Tensor,
    pub test_inputs: Tensor,
    pub test_targets: Tensor,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn n_train(&self) -> usize {
        self.train_targets.dims()[0]
    }

    pub fn n_test(&self) -> usize {
        self.test_targets.dims()[0]
    }
}

/// Partition frames into consecutive non-overlapping chunks of length
/// `window` (dropping the tail remainder), shuffle chunk order with a seeded
/// generator, and assign the first `ceil(test_fraction * n_chunks)` chunks to
/// test. Each chunk is one sample: the input is the full window, the target
/// the centre frame's target vector.
pub fn chunk_split_shuffle(
    inputs: &Tensor,
    targets: &Tensor,
    window: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::validation(format!(
            "window must be odd and >= 1 (got {window}); symmetric convolutions need an odd receptive field"
        )));
    }
    let n_frames = inputs.dims()[0];
    if n_frames < window {
        return Err(Error::validation(format!(
            "{n_frames} frames is fewer than window {window}"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::validation(format!(
            "test_fraction must be in (0, 1) (got {test_fraction})"
        )));
    }
    let in_width = inputs.dims()[1];
    let k = targets.dims()[1];
    let n_chunks = n_frames / window;
    let mut order: Vec<usize> = (0..n_chunks).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_test = ((test_fraction * n_chunks as f64).ceil() as usize).min(n_chunks);
    if n_test == n_chunks {
        return Err(Error::validation(format!(
            "split leaves no training chunks ({n_chunks} chunks, {n_test} test)"
        )));
    }
    let centre = (window - 1) / 2;
    let gather = |chunks: &[usize]| -> Result<(Tensor, Tensor)> {
        let mut xin = Vec::with_capacity(chunks.len() * window * in_width);
        let mut tgt = Vec::with_capacity(chunks.len() * k);
        for &c in chunks {
            let start = c * window;
            xin.extend_from_slice(
                &inputs.data()[start * in_width..(start + window) * in_width],
            );
            let row = start + centre;
            tgt.extend_from_slice(&targets.data()[row * k..(row + 1) * k]);
        }
        let xin = if window == 1 {
            Tensor::from_vec(&[chunks.len(), in_width], xin)?
        } else {
            Tensor::from_vec(&[chunks.len(), window, in_width], xin)?
        };
        Ok((xin, Tensor::from_vec(&[chunks.len(), k], tgt)?))
    };
    let (test_inputs, test_targets) = gather(&order[..n_test])?;
    let (train_inputs, train_targets) = gather(&order[n_test..])?;
    Ok(DatasetSplit {
        train_inputs,
        train_targets,
        test_inputs,
        test_targets,
        seed,
    })
}

/// Per-frame shuffle/split: chunk length 1.
pub fn frame_split_shuffle(
    inputs: &Tensor,
    targets: &Tensor,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    chunk_split_shuffle(inputs, targets, 1, test_fraction, seed)
}
