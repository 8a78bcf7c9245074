//! Generalized helicoids
//!
//! `(s, t_1, …, t_{n-1}) ↦ (t_1 cos a_1 s, t_1 sin a_1 s, …, t_k cos a_k s,
//! t_k sin a_k s, t_{k+1}, …, t_{n-1}, b s)` in `R^{n+k}`, and their
//! intersections with affine hyperplanes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dual::Scalar;
use crate::geometry::{GridSpec, SmoothChart, SmoothMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HelicoidError {
    #[error("invalid helicoid: {0}")]
    InvalidSpec(String),
    #[error("invalid hyperplane: {0}")]
    InvalidHyperplane(String),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct HelicoidSpec {
    pub n: usize,
    pub k: usize,
    pub a: Vec<f64>,
    pub b: f64,
}

impl HelicoidSpec {
    /// Needs `n ≥ 2` and `1 ≤ k ≤ n - 1`: each rotating pair consumes one of
    /// the `n - 1` ruling parameters.
    pub fn new(n: usize, k: usize, a: Vec<f64>, b: f64) -> Result<Self, HelicoidError> {
        let spec = Self { n, k, a, b };
        spec.validate()?;
        Ok(spec)
    }

    /// The classical helicoid `(t cos s, t sin s, s)`.
    pub fn classical() -> Self {
        Self {
            n: 2,
            k: 1,
            a: vec![1.0],
            b: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), HelicoidError> {
        if self.n < 2 {
            return Err(HelicoidError::InvalidSpec(format!("n = {} must be at least 2", self.n)));
        }
        if self.k == 0 || self.k > self.n - 1 {
            return Err(HelicoidError::InvalidSpec(format!(
                "k = {} must lie in 1..={}",
                self.k,
                self.n - 1
            )));
        }
        if self.a.len() != self.k {
            return Err(HelicoidError::InvalidSpec(format!(
                "expected {} rotation rates, found {}",
                self.k,
                self.a.len()
            )));
        }
        if !self.a.iter().chain(core::iter::once(&self.b)).all(|x| x.is_finite()) {
            return Err(HelicoidError::InvalidSpec("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        self.n + self.k
    }

    /// `b · Π a_i == 0`, tested exactly on the stored values.
    pub fn is_degenerate(&self) -> bool {
        self.b == 0.0 || self.a.contains(&0.0)
    }

    /// The image is an affine subspace: no rotation at all, or a single
    /// rotating pair with no screw motion.
    pub fn is_affine(&self) -> bool {
        self.a.iter().all(|x| *x == 0.0) || (self.b == 0.0 && self.k == 1)
    }

    /// `s ∈ [0, 2π / min|a_i|]`, `t_i ∈ [0.1, 2]`, 11 nodes per axis.
    /// The `s` range falls back to `[0, 2π]` when some rate is zero.
    pub fn standard_grid(&self) -> GridSpec {
        let rate = self.a.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        let period = if rate > 0.0 && rate.is_finite() {
            2.0 * core::f64::consts::PI / rate
        } else {
            2.0 * core::f64::consts::PI
        };
        let mut lower = vec![0.1; self.n];
        let mut upper = vec![2.0; self.n];
        lower[0] = 0.0;
        upper[0] = period;
        GridSpec {
            lower,
            upper,
            points: vec![11; self.n],
        }
    }

    /// `c_i(s) = α_i cos(a_i s) + β_i sin(a_i s)` for the rotating pairs.
    fn pair_coefficients(&self, h: &Hyperplane, s: f64) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                let (al, be) = (h.coefficients[2 * i], h.coefficients[2 * i + 1]);
                al * libm::cos(self.a[i] * s) + be * libm::sin(self.a[i] * s)
            })
            .collect()
    }
}

impl SmoothMap for HelicoidSpec {
    fn param_dim(&self) -> usize {
        self.n
    }

    fn ambient_dim(&self) -> usize {
        self.n + self.k
    }

    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let s = u[0];
        let mut x = Vec::with_capacity(self.n + self.k);
        for i in 0..self.k {
            let angle = s.scale(self.a[i]);
            x.push(u[1 + i] * angle.cos());
            x.push(u[1 + i] * angle.sin());
        }
        x.extend_from_slice(&u[1 + self.k..]);
        x.push(s.scale(self.b));
        x
    }
}

/// The helicoid as an unbounded chart with an exact Jacobian.
pub fn helicoid_chart(h: &HelicoidSpec) -> Result<SmoothChart<HelicoidSpec>, HelicoidError> {
    h.validate()?;
    Ok(SmoothChart::unbounded(h.clone()))
}

/// `coefficients · x = delta` in the ambient coordinates of a helicoid,
/// i.e. `(α_1, β_1, …, α_k, β_k, α_{k+1}, …, α_n)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Hyperplane {
    pub coefficients: Vec<f64>,
    pub delta: f64,
}

impl Hyperplane {
    pub fn new(coefficients: Vec<f64>, delta: f64) -> Result<Self, HelicoidError> {
        if coefficients.iter().all(|c| *c == 0.0) {
            return Err(HelicoidError::InvalidHyperplane("coefficient vector is zero".into()));
        }
        if !coefficients.iter().all(|c| c.is_finite()) || !delta.is_finite() {
            return Err(HelicoidError::InvalidHyperplane("coefficients must be finite".into()));
        }
        Ok(Self { coefficients, delta })
    }

    pub fn offset(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() - self.delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub s: f64,
    pub t: Vec<f64>,
    pub point: Vec<f64>,
    /// `|coefficients · point − delta|`.
    pub residual: f64,
}

const SCAN_STEP: f64 = 0.1;
const SCAN_POINTS: usize = 64;
const PAIR_FLOOR: f64 = 1e-8;

/// A point of the helicoid on the hyperplane, or `None` when the two are
/// parallel (possible only for degenerate helicoids).
pub fn hyperplane_intersection(h: &HelicoidSpec, plane: &Hyperplane) -> Result<Option<Intersection>, HelicoidError> {
    h.validate()?;
    if plane.coefficients.len() != h.ambient_dim() {
        return Err(HelicoidError::InvalidHyperplane(format!(
            "expected {} coefficients, found {}",
            h.ambient_dim(),
            plane.coefficients.len()
        )));
    }
    let n = h.n;
    let k = h.k;
    let alpha_n = plane.coefficients[n + k - 1];
    let mut t = vec![0.0; n - 1];
    let s;

    if let Some(j) = (k..n - 1).find(|&j| plane.coefficients[k + j] != 0.0) {
        // A free coordinate t_j enters linearly with a constant coefficient.
        s = 0.0;
        t[j] = plane.delta / plane.coefficients[k + j];
    } else if let Some((s0, i, c)) = (0..SCAN_POINTS).find_map(|m| {
        let s0 = m as f64 * SCAN_STEP;
        h.pair_coefficients(plane, s0)
            .into_iter()
            .enumerate()
            .find(|(_, c)| c.abs() > PAIR_FLOOR)
            .map(|(i, c)| (s0, i, c))
    }) {
        s = s0;
        t[i] = (plane.delta - alpha_n * h.b * s0) / c;
    } else if alpha_n * h.b != 0.0 {
        s = plane.delta / (alpha_n * h.b);
    } else if plane.delta == 0.0 {
        s = 0.0;
    } else {
        return Ok(None);
    }

    let mut u = vec![s];
    u.extend_from_slice(&t);
    let point = h.apply(&u);
    let residual = plane.offset(&point).abs();
    Ok(Some(Intersection { s, t, point, residual }))
}
