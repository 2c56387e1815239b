//! Multi-camera geometric triangulation and single-view 3D pose lifting.
//!
//! The pipeline: 2D keypoint detections from a bottom camera plus orthogonal
//! side cameras are fused into 3D sequences via a polynomial height
//! calibration ([`calib`], [`triangulate`]); the sequences are aligned,
//! standardized, and split ([`preprocess`]); and two lifting models — a
//! per-frame linear residual network and a temporal convolutional residual
//! network ([`models`], built on the reverse-mode core in [`nncore`]) — are
//! trained and evaluated under a deterministic protocol ([`harness`]).
//! [`synth`] generates seeded synthetic recordings for verification.

pub mod calib;
pub mod datamodel;
pub mod error;
pub mod harness;
pub mod models;
pub mod nncore;
pub mod preprocess;
pub mod synth;
pub mod triangulate;

pub use calib::{fit_poly_surface, CalibrationSample, PolySurface};
pub use datamodel::{
    parse_config, parse_detections, parse_sequence, CameraRig, Config, Detection2D, Pose3DFrame,
    RunConfig, Sequence3D, SideCamera, ZProvenance,
};
pub use error::{Error, Result};
pub use harness::{ModelKind, RunReport, TrainHistory};
pub use models::{Model, ModelSpec};
pub use nncore::Tensor;
pub use preprocess::{Axis, DatasetSplit, Scenario, Standardizer};
pub use synth::SynthSpec;
pub use triangulate::{estimate_z, ewma_fill, triangulate_sequence, ZEstimate};
