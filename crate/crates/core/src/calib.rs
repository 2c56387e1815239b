//! Side-camera height calibration: fit and evaluate the bivariate polynomial
//! mapping (pixel height, planar distance to camera) -> physical height.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition estimates above this (after unit-column scaling of the design
/// matrix) are rejected as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e12;

/// One observation of a physical marker in a side view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    /// Pixel height of the marker in the side view.
    pub v_px: f64,
    /// Planar distance from the marker to the camera's plane position, mm.
    pub distance_mm: f64,
    /// Known physical marker height, mm.
    pub z_mm: f64,
}

impl CalibrationSample {
    pub fn new(v_px: f64, distance_mm: f64, z_mm: f64) -> Result<Self> {
        if distance_mm <= 0.0 {
            return Err(Error::validation(format!(
                "calibration sample distance must be > 0 (got {distance_mm})"
            )));
        }
        Ok(CalibrationSample {
            v_px,
            distance_mm,
            z_mm,
        })
    }
}

/// Fitted bivariate polynomial `z(v, d) = sum c[i][j] v^i d^j`.
///
/// Coefficients are stored row-major over `(i, j)` with shape
/// `(degree_v + 1) x (degree_d + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySurface {
    pub calibration_id: String,
    pub degree_v: usize,
    pub degree_d: usize,
    pub coefficients: Vec<f64>,
    pub fit_rms_mm: f64,
    /// (min, max) of the fitted v values; evaluations outside are flagged as
    /// extrapolation. Not part of the stored config format.
    #[serde(skip)]
    pub v_hull: Option<(f64, f64)>,
    #[serde(skip)]
    pub d_hull: Option<(f64, f64)>,
}

/// Result of evaluating a surface at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyEval {
    pub z_mm: f64,
    /// True when (v, d) lies outside the fitted hull (only known for
    /// surfaces fitted in this process).
    pub extrapolated: bool,
}

impl PolySurface {
    pub fn n_coefficients(&self) -> usize {
        (self.degree_v + 1) * (self.degree_d + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.n_coefficients() {
            return Err(Error::validation(format!(
                "surface '{}': {} coefficients but degrees ({}, {}) require {}",
                self.calibration_id,
                self.coefficients.len(),
                self.degree_v,
                self.degree_d,
                self.n_coefficients()
            )));
        }
        if self.fit_rms_mm < 0.0 || !self.fit_rms_mm.is_finite() {
            return Err(Error::validation(format!(
                "surface '{}': fit_rms_mm must be finite and >= 0",
                self.calibration_id
            )));
        }
        Ok(())
    }

    /// Horner evaluation: outer in v over inner Horner polynomials in d.
    pub fn eval(&self, v_px: f64, distance_mm: f64) -> f64 {
        let nd = self.degree_d + 1;
        let mut acc = 0.0;
        for i in (0..=self.degree_v).rev() {
            let row = &self.coefficients[i * nd..(i + 1) * nd];
            let mut inner = 0.0;
            for c in row.iter().rev() {
                inner = inner * distance_mm + c;
            }
            acc = acc * v_px + inner;
        }
        acc
    }

    /// Evaluate with an extrapolation indicator.
    pub fn eval_flagged(&self, v_px: f64, distance_mm: f64) -> PolyEval {
        let outside = |hull: Option<(f64, f64)>, x: f64| match hull {
            Some((lo, hi)) => x < lo || x > hi,
            None => false,
        };
        PolyEval {
            z_mm: self.eval(v_px, distance_mm),
            extrapolated: outside(self.v_hull, v_px) || outside(self.d_hull, distance_mm),
        }
    }
}

fn monomial_columns(degree_v: usize, degree_d: usize, v: f64, d: f64) -> Vec<f64> {
    let mut cols = Vec::with_capacity((degree_v + 1) * (degree_d + 1));
    let mut vp = 1.0;
    for _ in 0..=degree_v {
        let mut dp = 1.0;
        for _ in 0..=degree_d {
            cols.push(vp * dp);
            dp *= d;
        }
        vp *= v;
    }
    cols
}

fn distinct_count(values: impl Iterator<Item = f64>) -> usize {
    let mut seen: Vec<f64> = Vec::new();
    for v in values {
        if !seen.iter().any(|s| *s == v) {
            seen.push(v);
        }
    }
    seen.len()
}

/// Least-squares fit of the surface over the samples.
///
/// The design matrix is scaled to unit columns, decomposed by SVD (condition
/// estimated from the singular values), solved, and the coefficients mapped
/// back to the raw monomial basis.
pub fn fit_poly_surface(
    samples: &[CalibrationSample],
    calibration_id: &str,
    degree_v: usize,
    degree_d: usize,
) -> Result<PolySurface> {
    let n_coef = (degree_v + 1) * (degree_d + 1);
    if samples.len() < n_coef {
        return Err(Error::Fit(format!(
            "underdetermined system: {} samples for {} coefficients (degrees ({}, {}))",
            samples.len(),
            n_coef,
            degree_v,
            degree_d
        )));
    }
    if degree_v > 0 && distinct_count(samples.iter().map(|s| s.v_px)) < 2 {
        return Err(Error::Fit(
            "samples must span >= 2 distinct v values when degree_v > 0".into(),
        ));
    }
    if degree_d > 0 && distinct_count(samples.iter().map(|s| s.distance_mm)) < 2 {
        return Err(Error::Fit(
            "samples must span >= 2 distinct distance values when degree_d > 0".into(),
        ));
    }

    let n = samples.len();
    let mut design = DMatrix::<f64>::zeros(n, n_coef);
    for (r, s) in samples.iter().enumerate() {
        for (c, m) in monomial_columns(degree_v, degree_d, s.v_px, s.distance_mm)
            .into_iter()
            .enumerate()
        {
            design[(r, c)] = m;
        }
    }
    // Unit-column scaling keeps the condition estimate about collinearity,
    // not about the raw pixel/mm units.
    let mut col_scale = vec![1.0f64; n_coef];
    for c in 0..n_coef {
        let norm = design.column(c).norm();
        if norm > 0.0 {
            col_scale[c] = norm;
            for r in 0..n {
                design[(r, c)] /= norm;
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n, samples.iter().map(|s| s.z_mm));
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let s_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    let scaled_coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Fit(format!("svd solve failed: {e}")))?;
    let coefficients: Vec<f64> = scaled_coef
        .iter()
        .zip(col_scale.iter())
        .map(|(c, s)| c / s)
        .collect();

    let mut ss = 0.0;
    let surface = PolySurface {
        calibration_id: calibration_id.to_string(),
        degree_v,
        degree_d,
        coefficients,
        fit_rms_mm: 0.0,
        v_hull: hull(samples.iter().map(|s| s.v_px)),
        d_hull: hull(samples.iter().map(|s| s.distance_mm)),
    };
    for s in samples {
        let r = surface.eval(s.v_px, s.distance_mm) - s.z_mm;
        ss += r * r;
    }
    Ok(PolySurface {
        fit_rms_mm: (ss / n as f64).sqrt(),
        ..surface
    })
}

fn hull(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo <= hi).then_some((lo, hi))
}
