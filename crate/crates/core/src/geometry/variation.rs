use alloc::vec::Vec;

use super::{jacobian, mean_curvature, normal_frame, Chart, DiffSteps, GeometryError, ParamBox};
use crate::linalg::{self, Matrix};
use crate::quadrature::{self, QuadratureSpec};

/// `‖Π_T γ''(t)‖` for `γ = c ∘ curve`: the tangential part of the ambient
/// acceleration, zero exactly when `γ` is a geodesic of the chart's image.
pub fn geodesic_residual<C, F>(c: &C, curve: F, t: f64, steps: &DiffSteps) -> Result<f64, GeometryError>
where
    C: Chart + ?Sized,
    F: Fn(f64) -> Vec<f64>,
{
    let h = steps.h2_rel * (1.0 + t.abs());
    let (u0, up, um) = (curve(t), curve(t + h), curve(t - h));
    let margin: Vec<f64> = u0.iter().map(|x| 2.0 * steps.h_rel * (1.0 + x.abs())).collect();
    if !(c.domain().contains_with_margin(&up, &margin) && c.domain().contains_with_margin(&um, &margin)) {
        return Err(GeometryError::StepUnderflow { t });
    }
    let (g0, gp, gm) = (c.eval(&u0)?, c.eval(&up)?, c.eval(&um)?);
    let accel: Vec<f64> = (0..g0.len()).map(|i| (gp[i] - 2.0 * g0[i] + gm[i]) / (h * h)).collect();
    let jac = jacobian(c, &u0, steps)?;
    Ok(linalg::norm2(&tangential_part(&jac, &accel, &u0)?))
}

fn tangential_part(jac: &Matrix, v: &[f64], u: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let g = jac.transpose() * jac;
    let rhs: Vec<f64> = (0..jac.ncols())
        .map(|a| jac.column(a).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect();
    let coeff = linalg::solve(g, &rhs).ok_or_else(|| GeometryError::Degenerate {
        point: u.to_vec(),
        sigma_min: 0.0,
    })?;
    Ok((0..jac.nrows())
        .map(|i| (0..jac.ncols()).map(|a| jac[(i, a)] * coeff[a]).sum())
        .collect())
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Wedge test for the curve `β(t) = Φ(t, 0)` on a surface chart in `R^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeCheck {
    /// `β'' × (β' × δ)` with `δ = ∂Φ/∂v` along `v = 0`.
    pub triple: [f64; 3],
    pub triple_norm: f64,
    /// `‖β' × δ‖`; the triple divided by this is `β'' × N`.
    pub tangent_wedge_norm: f64,
    /// `triple_norm / tangent_wedge_norm`, equal to the geodesic residual.
    pub normalized: f64,
}

/// For the equilibrium chart with two goods and two consumers, `β = (p, 0, w)`
/// and `δ = (0, 1, −p)`, so `β' × δ = (−ẇ, p ṗ, ṗ)` and the triple is
/// `(−p ṗ ẅ, −(ṗ p̈ + ẇ ẅ), p ṗ p̈)`.
pub fn ruling_wedge<C: Chart + ?Sized>(c: &C, t: f64, steps: &DiffSteps) -> Result<WedgeCheck, GeometryError> {
    if c.param_dim() != 2 || c.ambient_dim() != 3 {
        return Err(GeometryError::DimensionMismatch {
            expected: 2,
            found: c.param_dim(),
        });
    }
    let h = steps.h2_rel * (1.0 + t.abs());
    let (b0, bp, bm) = (c.eval(&[t, 0.0])?, c.eval(&[t + h, 0.0])?, c.eval(&[t - h, 0.0])?);
    let jac = jacobian(c, &[t, 0.0], steps)?;
    let vel: Vec<f64> = jac.column(0).iter().copied().collect();
    let delta: Vec<f64> = jac.column(1).iter().copied().collect();
    let accel: Vec<f64> = (0..3).map(|i| (bp[i] - 2.0 * b0[i] + bm[i]) / (h * h)).collect();
    let tangent = cross(&vel, &delta);
    let triple = cross(&accel, &tangent);
    let triple_norm = linalg::norm2(&triple);
    let tangent_wedge_norm = linalg::norm2(&tangent);
    Ok(WedgeCheck {
        triple,
        triple_norm,
        tangent_wedge_norm,
        normalized: triple_norm / tangent_wedge_norm,
    })
}

/// The hypersurface chart `Φ + ε ψ N`, with `N` oriented to agree with the
/// normal at a reference point.
pub struct NormalPerturbation<'a, C: ?Sized> {
    chart: &'a C,
    bump: &'a dyn Fn(&[f64]) -> f64,
    eps: f64,
    reference: Vec<f64>,
    steps: DiffSteps,
}

impl<'a, C: Chart + ?Sized> NormalPerturbation<'a, C> {
    /// Orients the normal field by the normal at `reference_point`.
    pub fn new(
        chart: &'a C,
        bump: &'a dyn Fn(&[f64]) -> f64,
        eps: f64,
        reference_point: &[f64],
        steps: &DiffSteps,
    ) -> Result<Self, GeometryError> {
        if chart.codimension() != 1 {
            return Err(GeometryError::NotHypersurface {
                codim: chart.codimension(),
            });
        }
        let mut frame = normal_frame(chart, reference_point, steps)?;
        Ok(Self {
            chart,
            bump,
            eps,
            reference: frame.swap_remove(0),
            steps: steps.clone(),
        })
    }

    pub fn normal(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut n = normal_frame(self.chart, u, &self.steps)?.swap_remove(0);
        if linalg::dot(&n, &self.reference) < 0.0 {
            n.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(n)
    }
}

impl<C: Chart + ?Sized> Chart for NormalPerturbation<'_, C> {
    fn param_dim(&self) -> usize {
        self.chart.param_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.chart.ambient_dim()
    }

    fn domain(&self) -> &ParamBox {
        self.chart.domain()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let mut x = self.chart.eval(u)?;
        if self.eps != 0.0 {
            let s = self.eps * (self.bump)(u);
            x.iter_mut().zip(self.normal(u)?).for_each(|(xi, ni)| *xi += s * ni);
        }
        Ok(x)
    }

    /// `J_Φ + ε (∇ψ ⊗ N + ψ ∂N)`, with `∂ψ` and `∂N` from central differences.
    fn exact_jacobian(&self, u: &[f64]) -> Option<Result<Matrix, GeometryError>> {
        Some((|| {
            let mut jac = jacobian(self.chart, u, &self.steps)?;
            if self.eps == 0.0 {
                return Ok(jac);
            }
            let psi = (self.bump)(u);
            let n0 = self.normal(u)?;
            let mut shifted = u.to_vec();
            for a in 0..u.len() {
                let h = self.steps.h2_rel * (1.0 + u[a].abs());
                shifted[a] = u[a] + h;
                let (psi_p, n_p) = ((self.bump)(&shifted), self.normal(&shifted)?);
                shifted[a] = u[a] - h;
                let (psi_m, n_m) = ((self.bump)(&shifted), self.normal(&shifted)?);
                shifted[a] = u[a];
                let dpsi = (psi_p - psi_m) / (2.0 * h);
                for i in 0..n0.len() {
                    let dn = (n_p[i] - n_m[i]) / (2.0 * h);
                    jac[(i, a)] += self.eps * (dpsi * n0[i] + psi * dn);
                }
            }
            Ok(jac)
        })())
    }
}

/// Derivative of patch volume under `Φ + ε ψ N` at `ε = 0`, two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstVariation {
    /// Central difference of the volume with `ε = ±1e-4`.
    pub numeric: f64,
    /// `−∫ ψ ⟨N, n H⟩ dvol`.
    pub formula: f64,
}

const VARIATION_EPS: f64 = 1e-4;

/// First variation of volume for a boundary-vanishing normal bump `ψ`.
/// The normal is oriented by its value at the box centre.
pub fn first_variation_volume<C: Chart + ?Sized>(
    c: &C,
    bx: &ParamBox,
    bump: &dyn Fn(&[f64]) -> f64,
    quad: &QuadratureSpec,
    steps: &DiffSteps,
) -> Result<FirstVariation, GeometryError> {
    if c.codimension() != 1 {
        return Err(GeometryError::NotHypersurface { codim: c.codimension() });
    }
    let centre = bx.center();
    let vol = |eps: f64| -> Result<f64, GeometryError> {
        let chart = NormalPerturbation::new(c, bump, eps, &centre, steps)?;
        Ok(quadrature::integrate(bx, quad, |u| {
            let jac = jacobian(&chart, u, steps)?;
            let g = jac.transpose() * &jac;
            Ok::<_, GeometryError>([libm::sqrt(g.determinant())])
        })?
        .value[0])
    };
    let numeric = (vol(VARIATION_EPS)? - vol(-VARIATION_EPS)?) / (2.0 * VARIATION_EPS);

    let oriented = NormalPerturbation::new(c, bump, 0.0, &centre, steps)?;
    let n = c.param_dim() as f64;
    let formula = -quadrature::integrate(bx, quad, |u| {
        let psi = bump(u);
        if psi == 0.0 {
            return Ok::<_, GeometryError>([0.0]);
        }
        let report = mean_curvature(c, u, steps)?;
        let normal = oriented.normal(u)?;
        Ok([psi * n * linalg::dot(&normal, &report.mean_curvature) * report.sqrt_det])
    })?
    .value[0];
    Ok(FirstVariation { numeric, formula })
}
