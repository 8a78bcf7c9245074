use alloc::vec::Vec;

use super::{Chart, GeometryError, ParamBox, SecondDerivatives};
use crate::dual::{Dual, HyperDual, Scalar};
use crate::linalg::Matrix;

/// A map written once over [`Scalar`], so it can be evaluated on floats and
/// differentiated exactly with dual numbers.
pub trait SmoothMap {
    fn param_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S>;
}

/// A [`SmoothMap`] restricted to a parameter box; its Jacobian is exact.
#[derive(Debug, Clone)]
pub struct SmoothChart<M> {
    map: M,
    domain: ParamBox,
}

impl<M: SmoothMap> SmoothChart<M> {
    pub fn new(map: M, domain: ParamBox) -> Result<Self, GeometryError> {
        if domain.dim() != map.param_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: map.param_dim(),
                found: domain.dim(),
            });
        }
        Ok(Self { map, domain })
    }

    pub fn unbounded(map: M) -> Self {
        let domain = ParamBox::unbounded(map.param_dim());
        Self { map, domain }
    }

    pub fn map(&self) -> &M {
        &self.map
    }
}

impl<M: SmoothMap> Chart for SmoothChart<M> {
    fn param_dim(&self) -> usize {
        self.map.param_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.map.ambient_dim()
    }

    fn domain(&self) -> &ParamBox {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        if u.len() != self.param_dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.param_dim(),
                found: u.len(),
            });
        }
        Ok(self.map.apply(u))
    }

    fn exact_jacobian(&self, u: &[f64]) -> Option<Result<Matrix, GeometryError>> {
        let n = self.param_dim();
        if u.len() != n {
            return Some(Err(GeometryError::DimensionMismatch {
                expected: n,
                found: u.len(),
            }));
        }
        let mut jac = Matrix::zeros(self.ambient_dim(), n);
        let mut seeds: Vec<Dual> = u.iter().map(|x| Dual::constant(*x)).collect();
        for j in 0..n {
            seeds[j].eps = 1.0;
            for (i, d) in self.map.apply(&seeds).iter().enumerate() {
                jac[(i, j)] = d.eps;
            }
            seeds[j].eps = 0.0;
        }
        Some(Ok(jac))
    }

    fn exact_second_derivatives(&self, u: &[f64]) -> Option<Result<SecondDerivatives, GeometryError>> {
        let n = self.param_dim();
        if u.len() != n {
            return Some(Err(GeometryError::DimensionMismatch {
                expected: n,
                found: u.len(),
            }));
        }
        let mut out = alloc::vec![alloc::vec![Vec::new(); n]; n];
        let mut seeds: Vec<HyperDual> = u.iter().map(|x| HyperDual::constant(*x)).collect();
        for a in 0..n {
            for b in a..n {
                seeds[a].e1 = 1.0;
                seeds[b].e2 = 1.0;
                let d: Vec<f64> = self.map.apply(&seeds).iter().map(|x| x.e12).collect();
                seeds[a].e1 = 0.0;
                seeds[b].e2 = 0.0;
                out[b][a] = d.clone();
                out[a][b] = d;
            }
        }
        Some(Ok(out))
    }
}

/// `u ↦ origin + A u`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    origin: Vec<f64>,
    linear: Matrix,
}

impl AffineMap {
    pub fn new(origin: Vec<f64>, linear: Matrix) -> Result<Self, GeometryError> {
        if origin.len() != linear.nrows() {
            return Err(GeometryError::DimensionMismatch {
                expected: linear.nrows(),
                found: origin.len(),
            });
        }
        Ok(Self { origin, linear })
    }

    /// The coordinate embedding `R^n → R^{n+k}`, `u ↦ (u, 0)`.
    pub fn coordinate_plane(n: usize, k: usize) -> Self {
        Self {
            origin: alloc::vec![0.0; n + k],
            linear: Matrix::identity(n + k, n),
        }
    }
}

impl SmoothMap for AffineMap {
    fn param_dim(&self) -> usize {
        self.linear.ncols()
    }

    fn ambient_dim(&self) -> usize {
        self.linear.nrows()
    }

    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        (0..self.ambient_dim())
            .map(|i| {
                u.iter()
                    .enumerate()
                    .fold(S::from_f64(self.origin[i]), |acc, (j, x)| acc + x.scale(self.linear[(i, j)]))
            })
            .collect()
    }
}

/// Circular cylinder `(s, t) ↦ (R cos s, R sin s, t)`.
#[derive(Debug, Clone, Copy)]
pub struct Cylinder {
    pub radius: f64,
}

impl SmoothMap for Cylinder {
    fn param_dim(&self) -> usize {
        2
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        alloc::vec![u[0].cos().scale(self.radius), u[0].sin().scale(self.radius), u[1]]
    }
}

/// Round sphere in polar/azimuth coordinates
/// `(θ, φ) ↦ R (sin θ cos φ, sin θ sin φ, cos θ)`.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    pub radius: f64,
}

impl SmoothMap for Sphere {
    fn param_dim(&self) -> usize {
        2
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let (theta, phi) = (u[0], u[1]);
        alloc::vec![
            (theta.sin() * phi.cos()).scale(self.radius),
            (theta.sin() * phi.sin()).scale(self.radius),
            theta.cos().scale(self.radius),
        ]
    }
}

/// `x ↦ Q x + b` applied after another map. With orthogonal `Q` this is a
/// rigid motion; `Q = λI` gives a homothety.
#[derive(Debug, Clone)]
pub struct RigidMotion<M> {
    pub inner: M,
    pub linear: Matrix,
    pub offset: Vec<f64>,
}

impl<M: SmoothMap> SmoothMap for RigidMotion<M> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn apply<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let x = self.inner.apply(u);
        (0..self.ambient_dim())
            .map(|i| {
                x.iter()
                    .enumerate()
                    .fold(S::from_f64(self.offset[i]), |acc, (j, xj)| acc + xj.scale(self.linear[(i, j)]))
            })
            .collect()
    }
}
