//! Price-income equilibria `B(r)` and the wealth/fiber chart of `E(r)`.
//!
//! Ambient coordinates of `S × Ω(r)` are `(p̄, ω_1, …, ω_{M−1})`, flat
//! Euclidean of dimension `LM − 1`; `p_L = 1` and `ω_M = r − Σ_{i<M} ω_i`
//! are eliminated. `B(r)` is parametrized by the wealths `t = (w_1, …,
//! w_{M−1})` and each fiber by `ω̄_i` (the first `L − 1` goods of consumer
//! `i < M`):
//!
//! `(t, ω̄) ↦ (p̄(t), ω̄_1, w_1(t) − p̄(t)·ω̄_1, …, ω̄_{M−1}, w_{M−1}(t) − p̄(t)·ω̄_{M−1})`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::economy::{demand, DemandSpec, Economy, EconomyError, Endowment, PriceVector};
use crate::geometry::{Chart, GeometryError, ParamBox};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error(transparent)]
    Economy(#[from] EconomyError),
    #[error("closed-form price-income chart needs an all Cobb-Douglas economy")]
    UnsupportedFamily,
    #[error("price {index} left the positive cone ({value})")]
    OutOfCone { index: usize, value: f64 },
    #[error("Newton did not converge (last residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("continuation step moved log-price by {jump}, above the cap {cap}")]
    BranchJump { jump: f64, cap: f64 },
    #[error("point is off B(r) (residual {residual:e})")]
    OffManifold { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A point `(p, w_1, …, w_M)` of `S × R^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceIncomePoint {
    pub prices: PriceVector,
    pub wealths: Vec<f64>,
}

/// Chart parameters: `B(r)` coordinates `t` and fiber coordinates `ω̄_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub t: Vec<f64>,
    /// `M − 1` rows of `L − 1` entries.
    pub fiber: Vec<Vec<f64>>,
}

impl ChartPoint {
    /// Reads `(t, ω̄_1, …, ω̄_{M−1})` from a flat parameter vector.
    pub fn from_flat(eco: &Economy, u: &[f64]) -> Result<Self, ManifoldError> {
        let (l, m) = (eco.goods(), eco.consumer_count());
        if u.len() != l * (m - 1) {
            return Err(ManifoldError::DimensionMismatch {
                expected: l * (m - 1),
                found: u.len(),
            });
        }
        let (t, rest) = u.split_at(m - 1);
        Ok(Self {
            t: t.to_vec(),
            fiber: rest.chunks(l - 1).map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut u = self.t.clone();
        for row in &self.fiber {
            u.extend_from_slice(row);
        }
        u
    }
}

/// A point of the ambient space in `(p̄, ω̄_1, ω_1^L, …)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint(pub Vec<f64>);

impl AmbientPoint {
    pub fn dimension(eco: &Economy) -> usize {
        eco.goods() * eco.consumer_count() - 1
    }

    pub fn encode(eco: &Economy, p: &PriceVector, omega: &Endowment) -> Self {
        let mut x = p.as_slice().to_vec();
        for i in 0..eco.consumer_count() - 1 {
            x.extend_from_slice(omega.row(i));
        }
        Self(x)
    }

    /// The represented pair `(p, ω)`, with `ω_M = r − Σ_{i<M} ω_i`.
    pub fn decode(&self, eco: &Economy) -> Result<(PriceVector, Endowment), ManifoldError> {
        let (l, m) = (eco.goods(), eco.consumer_count());
        if self.0.len() != Self::dimension(eco) {
            return Err(ManifoldError::DimensionMismatch {
                expected: Self::dimension(eco),
                found: self.0.len(),
            });
        }
        let p = PriceVector::new(self.0[..l - 1].to_vec())?;
        let rows: Vec<Vec<f64>> = self.0[l - 1..].chunks(l).map(<[f64]>::to_vec).collect();
        debug_assert_eq!(rows.len(), m - 1);
        Ok((p, Endowment::complete(eco, &rows)?))
    }

    /// `(p, w_1, …, w_M, ω̄_1, …, ω̄_{M−1})`, the coordinates in which `E(r)`
    /// is `B(r) × R^{(L−1)(M−1)}`.
    pub fn fiber_coordinates(&self, eco: &Economy) -> Result<(PriceIncomePoint, Vec<Vec<f64>>), ManifoldError> {
        let (p, omega) = self.decode(eco)?;
        let wealths = (0..eco.consumer_count()).map(|i| p.dot(omega.row(i))).collect();
        let fiber = (0..eco.consumer_count() - 1)
            .map(|i| omega.row(i)[..eco.goods() - 1].to_vec())
            .collect();
        Ok((PriceIncomePoint { prices: p, wealths }, fiber))
    }
}

/// `‖Σ_i f_i(p, w_i) − r‖_∞`.
pub fn br_residual(eco: &Economy, pi: &PriceIncomePoint) -> Result<f64, ManifoldError> {
    let total = eco.aggregate_demand(&pi.prices, &pi.wealths)?;
    Ok(total
        .iter()
        .zip(eco.resources())
        .fold(0.0_f64, |m, (x, r)| m.max((x - r).abs())))
}

fn check_t(eco: &Economy, t: &[f64]) -> Result<(), ManifoldError> {
    if t.len() + 1 != eco.consumer_count() {
        return Err(ManifoldError::DimensionMismatch {
            expected: eco.consumer_count() - 1,
            found: t.len(),
        });
    }
    Ok(())
}

/// Closed-form `B(r)` point of an all Cobb-Douglas economy with
/// `(w_1, …, w_{M−1}) = t`.
///
/// `w_M` solves the numéraire market `Σ_i α_{iL} w_i = r_L`, then
/// `p_l = Σ_i α_{il} w_i / r_l`.
pub fn br_point_cobb_douglas(eco: &Economy, t: &[f64]) -> Result<PriceIncomePoint, ManifoldError> {
    check_t(eco, t)?;
    let alphas = eco
        .consumers()
        .iter()
        .map(|c| match c {
            DemandSpec::CobbDouglas { alpha } => Ok(alpha.as_slice()),
            DemandSpec::Ces { .. } => Err(ManifoldError::UnsupportedFamily),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (l, m) = (eco.goods(), eco.consumer_count());
    let r = eco.resources();
    let spent_on_last: f64 = alphas[..m - 1].iter().zip(t).map(|(a, w)| a[l - 1] * w).sum();
    let w_last = (r[l - 1] - spent_on_last) / alphas[m - 1][l - 1];
    let mut wealths = t.to_vec();
    wealths.push(w_last);
    let mut prices = Vec::with_capacity(l - 1);
    for good in 0..l - 1 {
        let spent: f64 = alphas.iter().zip(&wealths).map(|(a, w)| a[good] * w).sum();
        let value = spent / r[good];
        if !(value > 0.0 && value.is_finite()) {
            return Err(ManifoldError::OutOfCone { index: good, value });
        }
        prices.push(value);
    }
    Ok(PriceIncomePoint {
        prices: PriceVector::new(prices)?,
        wealths,
    })
}

/// Settings of the Newton solve behind [`br_point_numeric`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Largest admissible `‖log p − log p_guess‖_∞`; exceeding it is a branch jump.
    pub step_cap: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-9,
            max_iter: 60,
            max_halvings: 50,
            step_cap: None,
        }
    }
}

/// `B(r)` point with wealths `t` by damped Newton in `(log p̄, w_M)`, started
/// from `guess`.
pub fn br_point_numeric(
    eco: &Economy,
    t: &[f64],
    guess: &PriceIncomePoint,
    opts: &NewtonOptions,
) -> Result<PriceIncomePoint, ManifoldError> {
    check_t(eco, t)?;
    let (l, m) = (eco.goods(), eco.consumer_count());
    let r = eco.resources();
    let last = &eco.consumers()[m - 1];
    let eval = |z: &[f64]| -> Option<Vec<f64>> {
        let p = PriceVector::new(z[..l - 1].iter().map(|x| libm::exp(*x)).collect()).ok()?;
        let mut w = t.to_vec();
        w.push(z[l - 1]);
        let total = eco.aggregate_demand(&p, &w).ok()?;
        let f: Vec<f64> = total.iter().zip(r).map(|(x, ri)| x - ri).collect();
        f.iter().all(|v| v.is_finite()).then_some(f)
    };
    let start_log: Vec<f64> = guess.prices.as_slice().iter().map(|p| libm::log(*p)).collect();
    let mut z = start_log.clone();
    z.push(*guess.wealths.last().unwrap_or(&0.0));

    let mut f = eval(&z).ok_or(ManifoldError::NoConvergence { residual: f64::INFINITY })?;
    let mut norm = linalg::norm_inf(&f);
    let mut converged_at = None;
    for iter in 0..opts.max_iter {
        if norm < opts.tol_residual && converged_at.is_none() {
            converged_at = Some(iter);
        }
        // A couple of polishing steps past the tolerance keep chart
        // evaluations smooth to roundoff.
        if converged_at.is_some_and(|c| iter >= c + 2) || norm == 0.0 {
            break;
        }
        let mut jac = Matrix::zeros(l, l);
        for j in 0..l - 1 {
            let h = 1e-7 * (1.0 + z[j].abs());
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            let (fp, fm) = match (eval(&zp), eval(&zm)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(ManifoldError::NoConvergence { residual: norm }),
            };
            for i in 0..l {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        // Demand is linear in wealth, so ∂F/∂w_M = f_M(p, 1).
        let p = PriceVector::new(z[..l - 1].iter().map(|x| libm::exp(*x)).collect())?;
        let unit = demand(last, &p, 1.0)?;
        for i in 0..l {
            jac[(i, l - 1)] = unit[i];
        }
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(step) = linalg::solve(jac, &neg) else {
            return Err(ManifoldError::NoConvergence { residual: norm });
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = z.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            if let Some(ft) = eval(&trial) {
                let nt = linalg::norm_inf(&ft);
                if nt < norm || (converged_at.is_some() && nt <= norm) {
                    accepted = Some((trial, ft, nt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((zn, fnew, nn)) => {
                z = zn;
                f = fnew;
                norm = nn;
            }
            None if converged_at.is_some() => break,
            None => return Err(ManifoldError::NoConvergence { residual: norm }),
        }
    }
    if !(norm < opts.tol_residual) {
        return Err(ManifoldError::NoConvergence { residual: norm });
    }
    if let Some(cap) = opts.step_cap {
        let jump = linalg::norm_inf(
            &z[..l - 1]
                .iter()
                .zip(&start_log)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if jump > cap {
            return Err(ManifoldError::BranchJump { jump, cap });
        }
    }
    let mut wealths = t.to_vec();
    wealths.push(z[l - 1]);
    Ok(PriceIncomePoint {
        prices: PriceVector::new(z[..l - 1].iter().map(|x| libm::exp(*x)).collect())?,
        wealths,
    })
}

/// How `B(r)` points are produced for a chart.
#[derive(Debug, Clone, PartialEq)]
pub enum BrSolver {
    /// [`br_point_cobb_douglas`].
    ClosedForm,
    /// Newton continuation along the straight segment from a solved anchor.
    Continuation {
        anchor: PriceIncomePoint,
        step_cap: f64,
        newton: NewtonOptions,
    },
}

impl BrSolver {
    /// Closed form for Cobb-Douglas economies, otherwise continuation from the
    /// equal-wealth point at unit prices.
    pub fn for_economy(eco: &Economy) -> Result<Self, ManifoldError> {
        if eco.is_cobb_douglas() {
            return Ok(Self::ClosedForm);
        }
        let unit = PriceVector::new(vec![1.0; eco.goods() - 1])?;
        let value = unit.dot(eco.resources());
        let share = value / eco.consumer_count() as f64;
        let guess = PriceIncomePoint {
            prices: unit,
            wealths: vec![share; eco.consumer_count()],
        };
        let anchor = br_point_numeric(eco, &guess.wealths[..eco.consumer_count() - 1], &guess, &NewtonOptions::default())?;
        Ok(Self::continuation(anchor, 0.1))
    }

    pub fn continuation(anchor: PriceIncomePoint, step_cap: f64) -> Self {
        Self::Continuation {
            anchor,
            step_cap,
            newton: NewtonOptions {
                step_cap: Some(step_cap),
                ..NewtonOptions::default()
            },
        }
    }

    pub fn solve(&self, eco: &Economy, t: &[f64]) -> Result<PriceIncomePoint, ManifoldError> {
        match self {
            Self::ClosedForm => br_point_cobb_douglas(eco, t),
            Self::Continuation { anchor, newton, .. } => {
                check_t(eco, t)?;
                let t0 = &anchor.wealths[..anchor.wealths.len() - 1];
                let mut current = anchor.clone();
                let (mut s, mut ds) = (0.0_f64, 1.0_f64);
                let mut last_err = None;
                while s < 1.0 {
                    let next = (s + ds).min(1.0);
                    let ts: Vec<f64> = t0.iter().zip(t).map(|(a, b)| a + next * (b - a)).collect();
                    match br_point_numeric(eco, &ts, &current, newton) {
                        Ok(pi) => {
                            current = pi;
                            s = next;
                            ds *= 2.0;
                        }
                        Err(e) => {
                            ds *= 0.5;
                            if ds < 1e-6 {
                                return Err(last_err.unwrap_or(e));
                            }
                            last_err = Some(e);
                        }
                    }
                }
                Ok(current)
            }
        }
    }
}

/// Ambient point `Φ(t, ω̄)` for an already solved `B(r)` point.
pub fn assemble(eco: &Economy, pi: &PriceIncomePoint, fiber: &[Vec<f64>]) -> Result<AmbientPoint, ManifoldError> {
    let (l, m) = (eco.goods(), eco.consumer_count());
    if fiber.len() != m - 1 || fiber.iter().any(|row| row.len() != l - 1) {
        return Err(ManifoldError::DimensionMismatch {
            expected: (m - 1) * (l - 1),
            found: fiber.iter().map(Vec::len).sum(),
        });
    }
    let p = pi.prices.as_slice();
    let mut x = p.to_vec();
    for (row, w) in fiber.iter().zip(&pi.wealths) {
        x.extend_from_slice(row);
        x.push(w - linalg::dot(p, row));
    }
    Ok(AmbientPoint(x))
}

/// `Φ(t, ω̄)`: the chart of `E(r)`.
pub fn phi_chart(eco: &Economy, solver: &BrSolver, cp: &ChartPoint) -> Result<AmbientPoint, ManifoldError> {
    let pi = solver.solve(eco, &cp.t)?;
    assemble(eco, &pi, &cp.fiber)
}

/// `θ(p, w) = (Σ_i f_i(p, w_i), u_1(f_1), …, u_{M−1}(f_{M−1}))`; utility slots
/// are `None` at bundles outside the positive orthant.
pub fn theta(eco: &Economy, pi: &PriceIncomePoint) -> Result<(Vec<f64>, Vec<Option<f64>>), ManifoldError> {
    let m = eco.consumer_count();
    if pi.wealths.len() != m {
        return Err(ManifoldError::DimensionMismatch {
            expected: m,
            found: pi.wealths.len(),
        });
    }
    let mut total = vec![0.0; eco.goods()];
    let mut utilities = Vec::with_capacity(m - 1);
    for (i, (spec, w)) in eco.consumers().iter().zip(&pi.wealths).enumerate() {
        let bundle = demand(spec, &pi.prices, *w)?;
        for (t, x) in total.iter_mut().zip(&bundle) {
            *t += x;
        }
        if i + 1 < m {
            utilities.push(spec.utility(&bundle));
        }
    }
    Ok((total, utilities))
}

const ON_BR_TOL: f64 = 1e-9;

fn require_on_br(eco: &Economy, pi: &PriceIncomePoint) -> Result<(), ManifoldError> {
    let residual = br_residual(eco, pi)?;
    if residual < ON_BR_TOL {
        Ok(())
    } else {
        Err(ManifoldError::OffManifold { residual })
    }
}

/// The no-trade equilibrium `ω_i = f_i(p, w_i)` of the fiber over `pi`.
pub fn no_trade_point(eco: &Economy, pi: &PriceIncomePoint) -> Result<Endowment, ManifoldError> {
    require_on_br(eco, pi)?;
    let rows = eco
        .consumers()
        .iter()
        .zip(&pi.wealths)
        .map(|(spec, w)| demand(spec, &pi.prices, *w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Endowment::from_rows(&rows)?)
}

/// The fiber over `pi` as an affine subspace: its no-trade point and the
/// `(L−1)(M−1)` directions `∂Φ/∂ω̄_i^l`.
pub fn fiber_basis(eco: &Economy, pi: &PriceIncomePoint) -> Result<(AmbientPoint, Vec<Vec<f64>>), ManifoldError> {
    let origin = AmbientPoint::encode(eco, &pi.prices, &no_trade_point(eco, pi)?);
    let (l, m) = (eco.goods(), eco.consumer_count());
    let p = pi.prices.as_slice();
    let mut dirs = Vec::with_capacity((l - 1) * (m - 1));
    for i in 0..m - 1 {
        for good in 0..l - 1 {
            let mut d = vec![0.0; AmbientPoint::dimension(eco)];
            let block = (l - 1) + i * l;
            d[block + good] = 1.0;
            d[block + l - 1] = -p[good];
            dirs.push(d);
        }
    }
    Ok((origin, dirs))
}

/// `Φ` packaged as a [`Chart`] with parameters `(t, ω̄_1, …, ω̄_{M−1})`.
#[derive(Debug, Clone)]
pub struct EquilibriumChart {
    economy: Economy,
    solver: BrSolver,
    domain: ParamBox,
}

impl EquilibriumChart {
    pub fn new(economy: Economy, solver: BrSolver) -> Self {
        let n = economy.goods() * (economy.consumer_count() - 1);
        Self {
            domain: ParamBox::unbounded(n),
            economy,
            solver,
        }
    }

    /// Closed form for Cobb-Douglas, continuation otherwise.
    pub fn for_economy(economy: Economy) -> Result<Self, ManifoldError> {
        let solver = BrSolver::for_economy(&economy)?;
        Ok(Self::new(economy, solver))
    }

    pub fn economy(&self) -> &Economy {
        &self.economy
    }

    pub fn solver(&self) -> &BrSolver {
        &self.solver
    }
}

impl Chart for EquilibriumChart {
    fn param_dim(&self) -> usize {
        self.domain.dim()
    }

    fn ambient_dim(&self) -> usize {
        AmbientPoint::dimension(&self.economy)
    }

    fn domain(&self) -> &ParamBox {
        &self.domain
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let fail = |e: ManifoldError| GeometryError::MapFailed {
            point: u.to_vec(),
            reason: e.to_string(),
        };
        let cp = ChartPoint::from_flat(&self.economy, u).map_err(fail)?;
        phi_chart(&self.economy, &self.solver, &cp)
            .map(|a| a.0)
            .map_err(fail)
    }
}
