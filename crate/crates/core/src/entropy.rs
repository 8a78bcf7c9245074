//! Riemannian volume and differential entropy of parameter boxes, and
//! volume comparisons against same-boundary normal perturbations.

use alloc::format;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{metric, Chart, DiffSteps, GeometryError, NormalPerturbation, ParamBox};
use crate::quadrature::{self, QuadratureSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("geometry failed at quadrature node {node:?}: {source}")]
    Geometry { node: Vec<f64>, source: GeometryError },
    #[error(transparent)]
    Setup(#[from] GeometryError),
    #[error("invalid neighbourhood: {0}")]
    InvalidBox(alloc::string::String),
    #[error("density has zero mass on the box")]
    ZeroMeasure,
    #[error("density flagged as normalized integrates to {total}")]
    NotNormalized { total: f64 },
    #[error("density is negative ({value}) at {node:?}")]
    NegativeDensity { node: Vec<f64>, value: f64 },
}

/// A finite, non-empty axis-aligned box of chart parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "ParamBox", into = "ParamBox"))]
pub struct NeighborhoodBox(ParamBox);

impl NeighborhoodBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, EntropyError> {
        let bx = ParamBox::new(lower, upper).map_err(|e| EntropyError::InvalidBox(format!("{e}")))?;
        Self::try_from(bx)
    }

    pub fn unit(n: usize) -> Self {
        Self(ParamBox {
            lower: alloc::vec![0.0; n],
            upper: alloc::vec![1.0; n],
        })
    }

    pub fn as_box(&self) -> &ParamBox {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// The box with every side multiplied by `factor` about its lower corner.
    pub fn scaled(&self, factor: f64) -> Result<Self, EntropyError> {
        let upper = self
            .0
            .lower
            .iter()
            .zip(self.0.widths())
            .map(|(lo, w)| lo + factor * w)
            .collect();
        Self::new(self.0.lower.clone(), upper)
    }
}

impl TryFrom<ParamBox> for NeighborhoodBox {
    type Error = EntropyError;

    fn try_from(bx: ParamBox) -> Result<Self, Self::Error> {
        let bx = ParamBox::new(bx.lower, bx.upper).map_err(|e| EntropyError::InvalidBox(format!("{e}")))?;
        if !bx.is_finite() {
            return Err(EntropyError::InvalidBox("bounds must be finite".into()));
        }
        Ok(Self(bx))
    }
}

impl From<NeighborhoodBox> for ParamBox {
    fn from(b: NeighborhoodBox) -> Self {
        b.0
    }
}

/// A probability density with respect to the Riemannian volume measure.
#[derive(Clone, Copy)]
pub enum Density<'a> {
    Uniform,
    /// `f ≥ 0`; when `normalized` is false it is rescaled to unit mass.
    General {
        f: &'a dyn Fn(&[f64]) -> f64,
        normalized: bool,
    },
}

const NORMALIZATION_TOL: f64 = 1e-6;

fn check_inside<C: Chart + ?Sized>(c: &C, bx: &NeighborhoodBox) -> Result<(), EntropyError> {
    if bx.dim() != c.param_dim() {
        return Err(EntropyError::InvalidBox(format!(
            "box has dimension {}, chart has {}",
            bx.dim(),
            c.param_dim()
        )));
    }
    if !c.domain().contains_box(bx.as_box()) {
        return Err(EntropyError::InvalidBox("box leaves the chart domain".into()));
    }
    Ok(())
}

fn sqrt_det<C: Chart + ?Sized>(c: &C, u: &[f64], steps: &DiffSteps) -> Result<f64, EntropyError> {
    metric(c, u, steps).map(|(_, s)| s).map_err(|source| EntropyError::Geometry {
        node: u.to_vec(),
        source,
    })
}

/// `∫_box sqrt(det g) du`.
pub fn volume<C: Chart + ?Sized>(
    c: &C,
    bx: &NeighborhoodBox,
    q: &QuadratureSpec,
    steps: &DiffSteps,
) -> Result<f64, EntropyError> {
    check_inside(c, bx)?;
    let est = quadrature::integrate(bx.as_box(), q, |u| Ok::<_, EntropyError>([sqrt_det(c, u, steps)?]))?;
    Ok(est.value[0])
}

/// Entropy of the uniform density, `ln V`.
pub fn entropy_uniform<C: Chart + ?Sized>(
    c: &C,
    bx: &NeighborhoodBox,
    q: &QuadratureSpec,
    steps: &DiffSteps,
) -> Result<f64, EntropyError> {
    Ok(libm::log(volume(c, bx, q, steps)?))
}

/// `−∫ p ln p dvol` for a density per unit Riemannian volume.
pub fn entropy_general<C: Chart + ?Sized>(
    c: &C,
    bx: &NeighborhoodBox,
    density: Density<'_>,
    q: &QuadratureSpec,
    steps: &DiffSteps,
) -> Result<f64, EntropyError> {
    let (f, normalized) = match density {
        Density::Uniform => return entropy_uniform(c, bx, q, steps),
        Density::General { f, normalized } => (f, normalized),
    };
    check_inside(c, bx)?;
    // Mass Z = ∫ f and A = ∫ f ln f; the entropy of f / Z is ln Z − A / Z.
    let est = quadrature::integrate(bx.as_box(), q, |u| {
        let value = f(u);
        if !(value >= 0.0) {
            return Err(EntropyError::NegativeDensity {
                node: u.to_vec(),
                value,
            });
        }
        if value == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let w = sqrt_det(c, u, steps)?;
        Ok([value * w, value * libm::log(value) * w])
    })?;
    let [mass, plogp] = est.value;
    if !(mass > 0.0) {
        return Err(EntropyError::ZeroMeasure);
    }
    if normalized && (mass - 1.0).abs() >= NORMALIZATION_TOL {
        return Err(EntropyError::NotNormalized { total: mass });
    }
    Ok(libm::log(mass) - plogp / mass)
}

/// `ψ(u) = Σ_j c_j Π_a sin(m_{ja} π (u_a − lo_a) / w_a)`, which vanishes on the
/// boundary of the box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SineBump {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl SineBump {
    /// The single lowest mode with unit amplitude.
    pub fn fundamental(bx: &NeighborhoodBox) -> Self {
        Self {
            lower: bx.as_box().lower.clone(),
            upper: bx.as_box().upper.clone(),
            terms: alloc::vec![(1.0, alloc::vec![1; bx.dim()])],
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(coef, modes)| {
                coef * modes
                    .iter()
                    .zip(u)
                    .zip(self.lower.iter().zip(&self.upper))
                    .map(|((m, x), (lo, hi))| libm::sin(*m as f64 * core::f64::consts::PI * (x - lo) / (hi - lo)))
                    .product::<f64>()
            })
            .sum()
    }
}

/// One sample of a same-boundary comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MvpRow {
    pub eps: f64,
    pub volume: f64,
    pub entropy: f64,
}

/// Volume and uniform entropy of `Φ + ε ψ N` over `bx` for each `ε`. The
/// normal is oriented by its value at the box centre.
pub fn mvp_probe<C: Chart + ?Sized>(
    c: &C,
    bx: &NeighborhoodBox,
    bump: &dyn Fn(&[f64]) -> f64,
    eps_grid: &[f64],
    q: &QuadratureSpec,
    steps: &DiffSteps,
) -> Result<Vec<MvpRow>, EntropyError> {
    check_inside(c, bx)?;
    let centre = bx.as_box().center();
    eps_grid
        .iter()
        .map(|&eps| {
            let perturbed = NormalPerturbation::new(c, bump, eps, &centre, steps)?;
            let v = volume(&perturbed, bx, q, steps)?;
            Ok(MvpRow {
                eps,
                volume: v,
                entropy: libm::log(v),
            })
        })
        .collect()
}

/// Least-squares fit `V(ε) ≈ c0 + c1 ε + c2 ε²`; `None` with fewer than
/// three distinct `ε`.
pub fn quadratic_fit(rows: &[MvpRow]) -> Option<[f64; 3]> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for r in rows {
        let basis = nalgebra::Vector3::new(1.0, r.eps, r.eps * r.eps);
        ata += basis * basis.transpose();
        atb += basis * r.volume;
    }
    let sol = ata.lu().solve(&atb)?;
    sol.iter().all(|x| x.is_finite()).then(|| [sol[0], sol[1], sol[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AffineMap, Cylinder, SmoothChart};
    use crate::helicoid::{helicoid_chart, HelicoidSpec};
    use crate::linalg::Matrix;
    use core::f64::consts::{E, LN_2, PI, SQRT_2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize) -> SmoothChart<AffineMap> {
        SmoothChart::unbounded(AffineMap::coordinate_plane(n, 1))
    }

    fn scaled_plane(n: usize, factor: f64) -> SmoothChart<AffineMap> {
        let linear = Matrix::identity(n + 1, n) * factor;
        SmoothChart::unbounded(AffineMap::new(alloc::vec![0.0; n + 1], linear).unwrap())
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn box_validation() {
        assert!(NeighborhoodBox::new(alloc::vec![0.0], alloc::vec![0.0]).is_err());
        assert!(NeighborhoodBox::new(alloc::vec![0.0], alloc::vec![f64::INFINITY]).is_err());
        assert!(NeighborhoodBox::new(alloc::vec![0.0, 1.0], alloc::vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn unit_and_scaled_volumes() {
        let steps = DiffSteps::default();
        for n in 1..=3 {
            let unit = NeighborhoodBox::unit(n);
            let v = volume(&plane(n), &unit, &quad(), &steps).unwrap();
            assert!((v - 1.0).abs() < 1e-13);
            assert!(entropy_uniform(&plane(n), &unit, &quad(), &steps).unwrap().abs() < 1e-13);
            let v2 = volume(&scaled_plane(n, 2.0), &unit, &quad(), &steps).unwrap();
            assert!((v2 - libm::pow(2.0, n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn helicoid_patch_volume_matches_closed_form() {
        let chart = helicoid_chart(&HelicoidSpec::classical()).unwrap();
        let bx = NeighborhoodBox::new(alloc::vec![0.0, 0.0], alloc::vec![2.0 * PI, 1.0]).unwrap();
        let exact = PI * (SQRT_2 + libm::log(1.0 + SQRT_2));
        let steps = DiffSteps::default();
        let v = volume(&chart, &bx, &quad(), &steps).unwrap();
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
        let h = entropy_uniform(&chart, &bx, &quad(), &steps).unwrap();
        assert_eq!(h, libm::log(v));
    }

    #[test]
    fn doubling_sides_adds_n_log_two() {
        let steps = DiffSteps::default();
        for n in 1..=4 {
            let bx = NeighborhoodBox::new(alloc::vec![-0.3; n], alloc::vec![0.4; n]).unwrap();
            let h1 = entropy_uniform(&plane(n), &bx, &quad(), &steps).unwrap();
            let h2 = entropy_uniform(&plane(n), &bx.scaled(2.0).unwrap(), &quad(), &steps).unwrap();
            assert!((h2 - h1 - n as f64 * LN_2).abs() < 1e-10);
        }
    }

    #[test]
    fn general_entropy_examples() {
        let steps = DiffSteps::default();
        let unit = NeighborhoodBox::unit(1);
        let chart = plane(1);
        let h = entropy_general(&chart, &unit, Density::Uniform, &quad(), &steps).unwrap();
        assert!(h.abs() < 1e-13);
        let ones = |_: &[f64]| 1.0;
        let h = entropy_general(&chart, &unit, Density::General { f: &ones, normalized: true }, &quad(), &steps).unwrap();
        assert!(h.abs() < 1e-8);

        let left = |u: &[f64]| if u[0] < 0.5 { 2.0 } else { 0.0 };
        let h = entropy_general(&chart, &unit, Density::General { f: &left, normalized: true }, &quad(), &steps).unwrap();
        assert!((h + LN_2).abs() < 1e-12);

        let unnormalized = |u: &[f64]| if u[0] < 0.5 { 7.0 } else { 0.0 };
        let h = entropy_general(
            &chart,
            &unit,
            Density::General {
                f: &unnormalized,
                normalized: false,
            },
            &quad(),
            &steps,
        )
        .unwrap();
        assert!((h + LN_2).abs() < 1e-12);
    }

    #[test]
    fn general_entropy_errors() {
        let steps = DiffSteps::default();
        let unit = NeighborhoodBox::unit(1);
        let chart = plane(1);
        let zero = |_: &[f64]| 0.0;
        let err = entropy_general(&chart, &unit, Density::General { f: &zero, normalized: false }, &quad(), &steps);
        assert_eq!(err, Err(EntropyError::ZeroMeasure));
        let three = |_: &[f64]| 3.0;
        let err = entropy_general(&chart, &unit, Density::General { f: &three, normalized: true }, &quad(), &steps);
        assert!(matches!(err, Err(EntropyError::NotNormalized { .. })));
        let neg = |u: &[f64]| u[0] - 0.5;
        let err = entropy_general(&chart, &unit, Density::General { f: &neg, normalized: false }, &quad(), &steps);
        assert!(matches!(err, Err(EntropyError::NegativeDensity { .. })));
    }

    fn std_normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + libm::erf(x / SQRT_2))
    }

    fn std_normal_pdf(x: f64) -> f64 {
        libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
    }

    #[test]
    fn truncated_gaussian_entropy() {
        let (mu, sigma, lo, hi) = (0.3, 0.8, -1.0, 2.0);
        let (al, be) = ((lo - mu) / sigma, (hi - mu) / sigma);
        let z = std_normal_cdf(be) - std_normal_cdf(al);
        let exact = libm::log(libm::sqrt(2.0 * PI * E) * sigma * z)
            + (al * std_normal_pdf(al) - be * std_normal_pdf(be)) / (2.0 * z);
        let f = |u: &[f64]| libm::exp(-0.5 * ((u[0] - mu) / sigma) * ((u[0] - mu) / sigma));
        let bx = NeighborhoodBox::new(alloc::vec![lo], alloc::vec![hi]).unwrap();
        let steps = DiffSteps::default();
        let h = entropy_general(&plane(1), &bx, Density::General { f: &f, normalized: false }, &quad(), &steps).unwrap();
        assert!((h - exact).abs() < 1e-4, "{h} vs {exact}");
        let uniform = entropy_uniform(&plane(1), &bx, &quad(), &steps).unwrap();
        assert!(h <= uniform + 1e-6);
    }

    #[test]
    fn volume_is_monotone_in_the_box() {
        let chart = helicoid_chart(&HelicoidSpec::classical()).unwrap();
        let steps = DiffSteps::default();
        let mut prev = 0.0;
        for w in [0.1, 0.5, 1.0, 1.5, 3.0] {
            let bx = NeighborhoodBox::new(alloc::vec![0.0, -0.2], alloc::vec![w, w]).unwrap();
            let v = volume(&chart, &bx, &quad(), &steps).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn sixteen_and_thirty_two_nodes_agree() {
        let chart = helicoid_chart(&HelicoidSpec::classical()).unwrap();
        let bx = NeighborhoodBox::new(alloc::vec![0.0, 0.1], alloc::vec![3.0, 2.0]).unwrap();
        let steps = DiffSteps::default();
        let a = volume(&chart, &bx, &quad(), &steps).unwrap();
        let fine = QuadratureSpec {
            nodes_per_axis: 32,
            ..quad()
        };
        let b = volume(&chart, &bx, &fine, &steps).unwrap();
        assert!(((a - b) / b).abs() < 1e-8);
    }

    #[test]
    fn flat_patch_beats_random_perturbations() {
        let chart = plane(2);
        let bx = NeighborhoodBox::unit(2);
        let steps = DiffSteps::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps_grid = [-0.1, -0.05, 0.0, 0.05, 0.1];
        for _ in 0..20 {
            let terms = (0..3)
                .map(|_| {
                    (
                        rng.random_range(-1.0..1.0),
                        alloc::vec![rng.random_range(1..4u32), rng.random_range(1..4u32)],
                    )
                })
                .collect();
            let bump = SineBump {
                lower: alloc::vec![0.0, 0.0],
                upper: alloc::vec![1.0, 1.0],
                terms,
            };
            let psi = |u: &[f64]| bump.eval(u);
            let rows = mvp_probe(&chart, &bx, &psi, &eps_grid, &quad(), &steps).unwrap();
            let base = rows[2];
            assert_eq!(base.eps, 0.0);
            assert_eq!(base.entropy, libm::log(base.volume));
            assert!((base.volume - 1.0).abs() < 1e-13);
            for r in rows.iter().filter(|r| r.eps != 0.0) {
                assert!(r.volume > base.volume, "{r:?}");
            }
            let fit = quadratic_fit(&rows).unwrap();
            assert!(fit[2] > -1e-6);
        }
    }

    #[test]
    fn cylinder_shrinks_towards_its_axis() {
        // N is (1, 0, 0) at the centre and H points to the axis, so ε < 0
        // moves along H.
        let chart = SmoothChart::unbounded(Cylinder { radius: 1.0 });
        let bx = NeighborhoodBox::new(alloc::vec![-0.5, 0.0], alloc::vec![0.5, 1.0]).unwrap();
        let bump = SineBump::fundamental(&bx);
        let psi = |u: &[f64]| bump.eval(u);
        let steps = DiffSteps::default();
        let rows = mvp_probe(&chart, &bx, &psi, &[-0.01, 0.0, 0.01], &quad(), &steps).unwrap();
        assert!(rows[0].volume < rows[1].volume);
        assert!(rows[2].volume > rows[1].volume);
    }
}
