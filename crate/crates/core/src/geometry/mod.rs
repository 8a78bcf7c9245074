//! Extrinsic geometry of parametrized submanifolds of flat Euclidean space.
//!
//! A [`Chart`] maps a parameter vector `u ∈ R^n` to `R^{n+k}`. Everything here
//! is computed pointwise from the chart: the induced metric `g = JᵀJ`, an
//! orthonormal normal frame, and the mean-curvature vector
//!
//! `H = (1/n) Σ_{a,b} g^{ab} Π⊥(∂²Φ/∂u_a∂u_b)`.
//!
//! The `1/n` (trace-averaged) convention is fixed throughout: a unit circular
//! cylinder has `|H| = 1/2` and a unit sphere `|H| = 1`.

mod charts;
mod scan;
mod variation;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{self, Matrix};

pub use charts::{
    AffineMap, Cylinder, RigidMotion, SmoothChart, SmoothMap, Sphere,
};
pub use scan::{
    gauss_dispersion_from_normals, gauss_map_dispersion, minimality_scan, summarize_scan,
    GridSpec, ScanReport,
};
pub use variation::{
    first_variation_volume, geodesic_residual, ruling_wedge, FirstVariation, NormalPerturbation,
    WedgeCheck,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {point:?} is not inside the chart domain by the required margin")]
    OutsideDomain { point: Vec<f64> },
    #[error("degenerate chart at {point:?}: smallest singular value {sigma_min:e}")]
    Degenerate { point: Vec<f64>, sigma_min: f64 },
    #[error("chart evaluation failed at {point:?}: {reason}")]
    MapFailed { point: Vec<f64>, reason: String },
    #[error("operation needs a hypersurface, chart has codimension {codim}")]
    NotHypersurface { codim: usize },
    #[error("normal flips across the cell ending at grid index {index}")]
    NonOrientable { index: usize },
    #[error("curve step leaves the chart domain near t = {t}")]
    StepUnderflow { t: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),
}

/// Axis-aligned parameter box; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(GeometryError::InvalidBox("bounds must have equal, nonzero length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || a.is_nan() || b.is_nan()) {
            return Err(GeometryError::InvalidBox("lower must be below upper on every axis".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        self.contains_with_margin(u, &vec![0.0; u.len()])
    }

    pub fn contains_with_margin(&self, u: &[f64], margin: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(margin)
                .zip(self.lower.iter().zip(&self.upper))
                .all(|((x, m), (lo, hi))| *x - m >= *lo && *x + m <= *hi)
    }

    /// Whether `other` lies inside `self`.
    pub fn contains_box(&self, other: &ParamBox) -> bool {
        other.dim() == self.dim()
            && other
                .lower
                .iter()
                .zip(&other.upper)
                .zip(self.lower.iter().zip(&self.upper))
                .all(|((lo, hi), (slo, shi))| lo >= slo && hi <= shi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).collect()
    }
}

/// A smooth map from a parameter box into `R^{n+k}`.
pub trait Chart {
    fn param_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn domain(&self) -> &ParamBox;
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError>;

    /// First derivatives computed without finite differences, when the chart
    /// can provide them (dual numbers, closed forms).
    fn exact_jacobian(&self, _u: &[f64]) -> Option<Result<Matrix, GeometryError>> {
        None
    }

    /// Second derivatives `∂²Φ/∂u_a∂u_b`, indexed `[a][b]`, when the chart can
    /// provide them without finite differences.
    fn exact_second_derivatives(&self, _u: &[f64]) -> Option<Result<SecondDerivatives, GeometryError>> {
        None
    }

    fn codimension(&self) -> usize {
        self.ambient_dim() - self.param_dim()
    }
}

impl<C: Chart + ?Sized> Chart for &C {
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }
    fn domain(&self) -> &ParamBox {
        (**self).domain()
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        (**self).eval(u)
    }
    fn exact_jacobian(&self, u: &[f64]) -> Option<Result<Matrix, GeometryError>> {
        (**self).exact_jacobian(u)
    }
    fn exact_second_derivatives(&self, u: &[f64]) -> Option<Result<SecondDerivatives, GeometryError>> {
        (**self).exact_second_derivatives(u)
    }
}

/// `[a][b]` holds the ambient vector `∂²Φ/∂u_a∂u_b`.
pub type SecondDerivatives = Vec<Vec<Vec<f64>>>;

/// Finite-difference settings. Steps are relative: `h_j = h·(1 + |u_j|)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DiffSteps {
    pub h_rel: f64,
    pub h2_rel: f64,
    /// Combine second differences at `h` and `h/2` to cancel the `O(h²)` term.
    pub richardson: bool,
    pub rank_tol: f64,
}

impl Default for DiffSteps {
    fn default() -> Self {
        Self {
            h_rel: 1e-6,
            h2_rel: 1e-4,
            richardson: false,
            rank_tol: 1e-9,
        }
    }
}

fn steps_for(u: &[f64], rel: f64) -> Vec<f64> {
    u.iter().map(|x| rel * (1.0 + x.abs())).collect()
}

fn check_dim<C: Chart + ?Sized>(c: &C, u: &[f64]) -> Result<(), GeometryError> {
    if u.len() != c.param_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: c.param_dim(),
            found: u.len(),
        });
    }
    Ok(())
}

fn check_margin<C: Chart + ?Sized>(c: &C, u: &[f64], h: &[f64]) -> Result<(), GeometryError> {
    let margin: Vec<f64> = h.iter().map(|x| 2.0 * x).collect();
    if c.domain().contains_with_margin(u, &margin) {
        Ok(())
    } else {
        Err(GeometryError::OutsideDomain { point: u.to_vec() })
    }
}

/// Central-difference Jacobian, `(n+k) × n`.
pub fn jacobian_fd<C: Chart + ?Sized>(c: &C, u: &[f64], h_rel: f64) -> Result<Matrix, GeometryError> {
    check_dim(c, u)?;
    let h = steps_for(u, h_rel);
    check_margin(c, u, &h)?;
    let mut jac = Matrix::zeros(c.ambient_dim(), c.param_dim());
    let mut shifted = u.to_vec();
    for (j, hj) in h.iter().enumerate() {
        shifted[j] = u[j] + hj;
        let fp = c.eval(&shifted)?;
        shifted[j] = u[j] - hj;
        let fm = c.eval(&shifted)?;
        shifted[j] = u[j];
        for i in 0..c.ambient_dim() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * hj);
        }
    }
    Ok(jac)
}

/// Jacobian of `c` at `u`: exact when the chart supports it, otherwise central
/// differences. Fails on rank deficiency.
pub fn jacobian<C: Chart + ?Sized>(c: &C, u: &[f64], steps: &DiffSteps) -> Result<Matrix, GeometryError> {
    check_dim(c, u)?;
    let jac = match c.exact_jacobian(u) {
        Some(result) => {
            check_margin(c, u, &steps_for(u, steps.h_rel))?;
            result?
        }
        None => jacobian_fd(c, u, steps.h_rel)?,
    };
    let sigma_min = jac
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, s| m.min(*s));
    if !(sigma_min > steps.rank_tol) {
        return Err(GeometryError::Degenerate {
            point: u.to_vec(),
            sigma_min,
        });
    }
    Ok(jac)
}

/// Induced metric `g = JᵀJ` and `sqrt(det g)`.
pub fn metric<C: Chart + ?Sized>(c: &C, u: &[f64], steps: &DiffSteps) -> Result<(Matrix, f64), GeometryError> {
    let jac = jacobian(c, u, steps)?;
    metric_from_jacobian(&jac, u)
}

fn metric_from_jacobian(jac: &Matrix, u: &[f64]) -> Result<(Matrix, f64), GeometryError> {
    let g = jac.transpose() * jac;
    let chol = g.clone().cholesky().ok_or_else(|| GeometryError::Degenerate {
        point: u.to_vec(),
        sigma_min: 0.0,
    })?;
    let sqrt_det = chol.l().diagonal().iter().product::<f64>();
    if !(sqrt_det > 0.0) {
        return Err(GeometryError::Degenerate {
            point: u.to_vec(),
            sigma_min: 0.0,
        });
    }
    Ok((g, sqrt_det))
}

/// Orthonormal basis of the normal space at a point with tangent columns `jac`.
///
/// The tangent columns are orthonormalized, then ambient axes are
/// orthogonalized against them in order of decreasing normal component.
/// Each vector is signed so that its largest-magnitude component is positive,
/// ties going to the lowest axis.
pub fn normal_frame_from_jacobian(jac: &Matrix) -> Vec<Vec<f64>> {
    let (dim, n) = jac.shape();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for j in 0..n {
        let col: Vec<f64> = jac.column(j).iter().copied().collect();
        if let Some(v) = orthonormalize(col, &basis) {
            basis.push(v);
        }
    }
    let tangent_count = basis.len();
    let mut axes: Vec<(usize, f64)> = (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let r = project_out(e, &basis);
            (i, linalg::norm2(&r))
        })
        .collect();
    axes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in axes {
        if basis.len() == dim {
            break;
        }
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        if let Some(v) = orthonormalize(e, &basis) {
            basis.push(v);
        }
    }
    basis
        .into_iter()
        .skip(tangent_count)
        .map(|mut v| {
            let biggest = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let lead = v
                .iter()
                .position(|x| x.abs() >= biggest * (1.0 - 1e-12))
                .unwrap_or(0);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect()
}

fn project_out(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = linalg::dot(&v, q);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
    v
}

fn orthonormalize(v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = linalg::norm2(&v);
    let r = project_out(v, basis);
    let norm = linalg::norm2(&r);
    (norm > 1e-8 * scale.max(1e-300)).then(|| r.into_iter().map(|x| x / norm).collect())
}

/// Orthonormal normal frame of `k` ambient vectors at `u`.
pub fn normal_frame<C: Chart + ?Sized>(c: &C, u: &[f64], steps: &DiffSteps) -> Result<Vec<Vec<f64>>, GeometryError> {
    let jac = jacobian(c, u, steps)?;
    Ok(normal_frame_from_jacobian(&jac))
}

/// Central second differences `∂²Φ/∂u_a∂u_b`, indexed `[a][b]`.
pub fn second_derivatives<C: Chart + ?Sized>(c: &C, u: &[f64], h_rel: f64) -> Result<SecondDerivatives, GeometryError> {
    check_dim(c, u)?;
    let n = c.param_dim();
    let h = steps_for(u, h_rel);
    check_margin(c, u, &h)?;
    let f0 = c.eval(u)?;
    let at = |shifts: &[(usize, f64)]| {
        let mut v = u.to_vec();
        for (j, d) in shifts {
            v[*j] += d;
        }
        c.eval(&v)
    };
    let mut out = vec![vec![Vec::new(); n]; n];
    for a in 0..n {
        let fp = at(&[(a, h[a])])?;
        let fm = at(&[(a, -h[a])])?;
        out[a][a] = fp
            .iter()
            .zip(&fm)
            .zip(&f0)
            .map(|((p, m), z)| (p - 2.0 * z + m) / (h[a] * h[a]))
            .collect();
        for b in 0..a {
            let fpp = at(&[(a, h[a]), (b, h[b])])?;
            let fpm = at(&[(a, h[a]), (b, -h[b])])?;
            let fmp = at(&[(a, -h[a]), (b, h[b])])?;
            let fmm = at(&[(a, -h[a]), (b, -h[b])])?;
            let mixed: Vec<f64> = (0..f0.len())
                .map(|i| (fpp[i] - fpm[i] - fmp[i] + fmm[i]) / (4.0 * h[a] * h[b]))
                .collect();
            out[b][a] = mixed.clone();
            out[a][b] = mixed;
        }
    }
    Ok(out)
}

/// Pointwise extrinsic curvature data.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub point: Vec<f64>,
    pub metric_det: f64,
    pub sqrt_det: f64,
    pub normal_frame: Vec<Vec<f64>>,
    /// Trace-averaged mean-curvature vector, in ambient coordinates.
    pub mean_curvature: Vec<f64>,
    pub mean_curvature_norm: f64,
    /// Largest norm among the second derivatives of the chart.
    pub second_derivative_scale: f64,
}

impl CurvatureReport {
    /// `|H| < tol·(1 + max ‖∂²Φ‖)`.
    pub fn is_minimal(&self, tol_minimal: f64) -> bool {
        self.mean_curvature_norm < tol_minimal * (1.0 + self.second_derivative_scale)
    }
}

/// Mean-curvature vector and supporting data at `u`.
pub fn mean_curvature<C: Chart + ?Sized>(c: &C, u: &[f64], steps: &DiffSteps) -> Result<CurvatureReport, GeometryError> {
    let jac = jacobian(c, u, steps)?;
    let (g, sqrt_det) = metric_from_jacobian(&jac, u)?;
    let g_inv = g.clone().try_inverse().ok_or_else(|| GeometryError::Degenerate {
        point: u.to_vec(),
        sigma_min: 0.0,
    })?;
    let second = match c.exact_second_derivatives(u) {
        Some(exact) => exact?,
        None if steps.richardson => {
            let coarse = second_derivatives(c, u, steps.h2_rel)?;
            let fine = second_derivatives(c, u, 0.5 * steps.h2_rel)?;
            coarse
                .iter()
                .zip(&fine)
                .map(|(rc, rf)| {
                    rc.iter()
                        .zip(rf)
                        .map(|(vc, vf)| vc.iter().zip(vf).map(|(x, y)| (4.0 * y - x) / 3.0).collect())
                        .collect()
                })
                .collect()
        }
        None => second_derivatives(c, u, steps.h2_rel)?,
    };
    let n = c.param_dim();
    let dim = c.ambient_dim();
    let mut trace = vec![0.0; dim];
    let mut scale = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            let d = &second[a][b];
            scale = scale.max(linalg::norm2(d));
            let w = g_inv[(a, b)];
            trace.iter_mut().zip(d).for_each(|(t, x)| *t += w * x);
        }
    }
    let frame = normal_frame_from_jacobian(&jac);
    let mut h = vec![0.0; dim];
    for nu in &frame {
        let c = linalg::dot(&trace, nu) / n as f64;
        h.iter_mut().zip(nu).for_each(|(x, v)| *x += c * v);
    }
    let norm = linalg::norm2(&h);
    Ok(CurvatureReport {
        point: u.to_vec(),
        metric_det: g.determinant(),
        sqrt_det,
        normal_frame: frame,
        mean_curvature: h,
        mean_curvature_norm: norm,
        second_derivative_scale: scale,
    })
}
