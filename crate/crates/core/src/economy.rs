//! Pure exchange economies with closed-form demand.
//!
//! Prices are normalized with the last good as numéraire (`p_L = 1`), which is
//! never stored in a [`PriceVector`]. Demand is linear in wealth and is used
//! unchanged for negative wealth, so the full affine endowment space
//! `Σ ω_i = r` is admissible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconomyError {
    #[error("price component {index} is not strictly positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid demand specification: {0}")]
    InvalidDemand(String),
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),
    #[error("invalid scan configuration: {0}")]
    InvalidScan(String),
}

/// Preferences of one consumer, restricted to families with closed-form demand.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandSpec {
    /// `u(x) = Σ α_l log x_l` with `Σ α_l = 1`.
    CobbDouglas { alpha: Vec<f64> },
    /// `u(x) = (Σ a_l x_l^ρ)^{1/ρ}`, `ρ < 1`, `ρ ≠ 0`.
    Ces { weights: Vec<f64>, rho: f64 },
}

impl DemandSpec {
    pub fn cobb_douglas(alpha: Vec<f64>) -> Result<Self, EconomyError> {
        if alpha.len() < 2 {
            return Err(EconomyError::InvalidDemand("at least two goods are required".into()));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(EconomyError::InvalidDemand(
                "Cobb-Douglas shares must be positive".into(),
            ));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EconomyError::InvalidDemand(alloc::format!(
                "Cobb-Douglas shares sum to {total}, not 1"
            )));
        }
        Ok(Self::CobbDouglas { alpha })
    }

    pub fn ces(weights: Vec<f64>, rho: f64) -> Result<Self, EconomyError> {
        if weights.len() < 2 {
            return Err(EconomyError::InvalidDemand("at least two goods are required".into()));
        }
        if weights.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(EconomyError::InvalidDemand("CES weights must be positive".into()));
        }
        if !(rho.is_finite() && rho < 1.0) || rho == 0.0 {
            return Err(EconomyError::InvalidDemand(alloc::format!(
                "CES exponent must satisfy rho < 1, rho != 0 (got {rho}); use Cobb-Douglas for the rho -> 0 limit"
            )));
        }
        Ok(Self::Ces { weights, rho })
    }

    pub fn goods(&self) -> usize {
        match self {
            Self::CobbDouglas { alpha } => alpha.len(),
            Self::Ces { weights, .. } => weights.len(),
        }
    }

    /// Demand at un-normalized prices `prices` (all goods, numéraire included).
    pub fn demand_at(&self, prices: &[f64], wealth: f64) -> Result<Vec<f64>, EconomyError> {
        if prices.len() != self.goods() {
            return Err(EconomyError::DimensionMismatch {
                expected: self.goods(),
                found: prices.len(),
            });
        }
        if let Some((index, &value)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(EconomyError::NonPositivePrice { index, value });
        }
        Ok(match self {
            Self::CobbDouglas { alpha } => alpha
                .iter()
                .zip(prices)
                .map(|(a, p)| a * wealth / p)
                .collect(),
            Self::Ces { weights, rho } => {
                // x_l = w a_l^σ p_l^{-σ} / Σ_k a_k^σ p_k^{1-σ}, evaluated in log space.
                let sigma = 1.0 / (1.0 - rho);
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(prices)
                    .map(|(a, p)| sigma * (libm::log(*a) - libm::log(*p)))
                    .collect();
                let shift = logs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let terms: Vec<f64> = logs.iter().map(|v| libm::exp(v - shift)).collect();
                let denom: f64 = terms.iter().zip(prices).map(|(t, p)| t * p).sum();
                terms.iter().map(|t| wealth * t / denom).collect()
            }
        })
    }

    /// Direct utility of a bundle; `None` unless every component is positive.
    pub fn utility(&self, bundle: &[f64]) -> Option<f64> {
        if bundle.len() != self.goods() || bundle.iter().any(|x| !(*x > 0.0)) {
            return None;
        }
        Some(match self {
            Self::CobbDouglas { alpha } => {
                alpha.iter().zip(bundle).map(|(a, x)| a * libm::log(*x)).sum()
            }
            Self::Ces { weights, rho } => {
                let s: f64 = weights
                    .iter()
                    .zip(bundle)
                    .map(|(a, x)| a * libm::pow(*x, *rho))
                    .sum();
                libm::pow(s, 1.0 / rho)
            }
        })
    }
}

/// Normalized price vector: the first `L − 1` prices, numéraire implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(relative: Vec<f64>) -> Result<Self, EconomyError> {
        if let Some((index, &value)) = relative
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(EconomyError::NonPositivePrice { index, value });
        }
        Ok(Self(relative))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// All `L` prices with `p_L = 1` appended.
    pub fn full(&self) -> Vec<f64> {
        let mut p = self.0.clone();
        p.push(1.0);
        p
    }

    pub fn dot(&self, bundle: &[f64]) -> f64 {
        let (last, head) = bundle.split_last().expect("empty bundle");
        self.0.iter().zip(head).map(|(p, x)| p * x).sum::<f64>() + last
    }
}

/// `L` goods, `M ≥ 2` consumers and total resources `r > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    resources: Vec<f64>,
    consumers: Vec<DemandSpec>,
}

impl Economy {
    pub fn new(resources: Vec<f64>, consumers: Vec<DemandSpec>) -> Result<Self, EconomyError> {
        let goods = resources.len();
        if goods < 2 {
            return Err(EconomyError::InvalidEconomy("need at least two goods".into()));
        }
        if consumers.len() < 2 {
            return Err(EconomyError::InvalidEconomy("need at least two consumers".into()));
        }
        if resources.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(EconomyError::InvalidEconomy(
                "total resources must be strictly positive".into(),
            ));
        }
        for (i, c) in consumers.iter().enumerate() {
            if c.goods() != goods {
                return Err(EconomyError::InvalidEconomy(alloc::format!(
                    "consumer {i} has {} goods, economy has {goods}",
                    c.goods()
                )));
            }
        }
        Ok(Self { resources, consumers })
    }

    pub fn goods(&self) -> usize {
        self.resources.len()
    }

    pub fn consumer_count(&self) -> usize {
        self.consumers.len()
    }

    pub fn resources(&self) -> &[f64] {
        &self.resources
    }

    pub fn consumers(&self) -> &[DemandSpec] {
        &self.consumers
    }

    pub fn is_cobb_douglas(&self) -> bool {
        self.consumers
            .iter()
            .all(|c| matches!(c, DemandSpec::CobbDouglas { .. }))
    }

    /// Aggregate demand `Σ f_i(p, w_i)` at given wealths.
    pub fn aggregate_demand(&self, p: &PriceVector, wealths: &[f64]) -> Result<Vec<f64>, EconomyError> {
        if wealths.len() != self.consumer_count() {
            return Err(EconomyError::DimensionMismatch {
                expected: self.consumer_count(),
                found: wealths.len(),
            });
        }
        let mut total = vec![0.0; self.goods()];
        for (spec, w) in self.consumers.iter().zip(wealths) {
            for (t, x) in total.iter_mut().zip(demand(spec, p, *w)?) {
                *t += x;
            }
        }
        Ok(total)
    }
}

/// Endowment matrix, one row of `L` goods per consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct Endowment {
    goods: usize,
    data: Vec<f64>,
}

impl Endowment {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EconomyError> {
        let goods = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(goods * rows.len());
        for row in rows {
            if row.len() != goods {
                return Err(EconomyError::DimensionMismatch {
                    expected: goods,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { goods, data })
    }

    /// Completes the first `M − 1` rows with `ω_M = r − Σ_{i<M} ω_i`.
    pub fn complete(eco: &Economy, leading: &[Vec<f64>]) -> Result<Self, EconomyError> {
        if leading.len() + 1 != eco.consumer_count() {
            return Err(EconomyError::DimensionMismatch {
                expected: eco.consumer_count() - 1,
                found: leading.len(),
            });
        }
        let mut last = eco.resources().to_vec();
        for row in leading {
            if row.len() != eco.goods() {
                return Err(EconomyError::DimensionMismatch {
                    expected: eco.goods(),
                    found: row.len(),
                });
            }
            for (l, x) in last.iter_mut().zip(row) {
                *l -= x;
            }
        }
        let mut rows = leading.to_vec();
        rows.push(last);
        Self::from_rows(&rows)
    }

    pub fn consumers(&self) -> usize {
        self.data.len().checked_div(self.goods).unwrap_or(0)
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.goods..(i + 1) * self.goods]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.goods];
        for i in 0..self.consumers() {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums
    }

    /// Whether `Σ_i ω_i = r` within `tol` in every good.
    pub fn is_feasible(&self, resources: &[f64], tol: f64) -> bool {
        resources.len() == self.goods
            && self
                .column_sums()
                .iter()
                .zip(resources)
                .all(|(s, r)| (s - r).abs() <= tol)
    }

    fn check_shape(&self, eco: &Economy) -> Result<(), EconomyError> {
        if self.goods != eco.goods() {
            return Err(EconomyError::DimensionMismatch {
                expected: eco.goods(),
                found: self.goods,
            });
        }
        if self.consumers() != eco.consumer_count() {
            return Err(EconomyError::DimensionMismatch {
                expected: eco.consumer_count(),
                found: self.consumers(),
            });
        }
        Ok(())
    }
}

/// Demand `f(p, w)` of one consumer at normalized prices.
pub fn demand(spec: &DemandSpec, p: &PriceVector, wealth: f64) -> Result<Vec<f64>, EconomyError> {
    if p.as_slice().len() + 1 != spec.goods() {
        return Err(EconomyError::DimensionMismatch {
            expected: spec.goods() - 1,
            found: p.as_slice().len(),
        });
    }
    spec.demand_at(&p.full(), wealth)
}

/// Aggregate excess demand `Z(p, ω) = Σ_i f_i(p, p·ω_i) − Σ_i ω_i`.
pub fn aggregate_excess(eco: &Economy, p: &PriceVector, omega: &Endowment) -> Result<Vec<f64>, EconomyError> {
    omega.check_shape(eco)?;
    let wealths: Vec<f64> = (0..eco.consumer_count()).map(|i| p.dot(omega.row(i))).collect();
    let mut z = eco.aggregate_demand(p, &wealths)?;
    for (zl, s) in z.iter_mut().zip(omega.column_sums()) {
        *zl -= s;
    }
    Ok(z)
}

/// Settings for [`find_equilibria`].
///
/// Two goods: a logarithmic grid over `p_1` is scanned for sign changes of
/// `Z_1` and every bracket is bisected. Roots closer than one grid cell can be
/// missed. More goods: multi-start damped Newton in log-prices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScanConfig {
    pub log_p_min: f64,
    pub log_p_max: f64,
    pub cells: usize,
    /// Bisection stopping width, in log-price.
    pub tol_p: f64,
    pub tol_residual: f64,
    /// Roots closer than this in every log-price are merged.
    pub tol_dedupe: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_newton_iter: usize,
    pub max_halvings: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            log_p_min: -8.0,
            log_p_max: 8.0,
            cells: 20_000,
            tol_p: 1e-12,
            tol_residual: 1e-9,
            tol_dedupe: 1e-6,
            starts: 64,
            seed: 0,
            max_newton_iter: 100,
            max_halvings: 50,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), EconomyError> {
        let bad = |msg: &str| Err(EconomyError::InvalidScan(msg.into()));
        if !(self.log_p_min.is_finite() && self.log_p_max.is_finite() && self.log_p_min < self.log_p_max) {
            return bad("log_p_min must be below log_p_max");
        }
        if self.cells == 0 {
            return bad("cells must be positive");
        }
        for (name, v) in [
            ("tol_p", self.tol_p),
            ("tol_residual", self.tol_residual),
            ("tol_dedupe", self.tol_dedupe),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(EconomyError::InvalidScan(alloc::format!("{name} must be positive")));
            }
        }
        if self.starts == 0 {
            return bad("starts must be positive");
        }
        Ok(())
    }
}

/// Equilibrium prices for one endowment, sorted ascending in `p_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet {
    pub prices: Vec<PriceVector>,
    /// A root sits in the outermost grid cell, or `Z_1` has the same sign at
    /// both ends of the window, so roots may lie outside the scanned range.
    pub boundary_warning: bool,
    /// Candidate roots dropped because their residual exceeded `tol_residual`.
    pub rejected: usize,
}

impl EquilibriumSet {
    pub fn count(&self) -> usize {
        self.prices.len()
    }
}

fn excess_at_log(eco: &Economy, omega: &Endowment, logp: &[f64]) -> Result<Vec<f64>, EconomyError> {
    let p = PriceVector::new(logp.iter().map(|x| libm::exp(*x)).collect())?;
    aggregate_excess(eco, &p, omega)
}

/// All equilibrium prices of `eco` at endowment `omega`.
pub fn find_equilibria(eco: &Economy, omega: &Endowment, scan: &ScanConfig) -> Result<EquilibriumSet, EconomyError> {
    scan.validate()?;
    omega.check_shape(eco)?;
    let (candidates, boundary_warning) = if eco.goods() == 2 {
        scan_two_goods(eco, omega, scan)?
    } else {
        (newton_multistart(eco, omega, scan)?, false)
    };

    let mut accepted: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut rejected = 0;
    for logp in candidates {
        let residual = linalg::norm_inf(&excess_at_log(eco, omega, &logp)?);
        if !(residual < scan.tol_residual) {
            rejected += 1;
            continue;
        }
        match accepted.iter_mut().find(|(q, _)| {
            q.iter().zip(&logp).all(|(a, b)| (a - b).abs() < scan.tol_dedupe)
        }) {
            Some(existing) if residual < existing.1 => *existing = (logp, residual),
            Some(_) => {}
            None => accepted.push((logp, residual)),
        }
    }
    accepted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let prices = accepted
        .into_iter()
        .map(|(logp, _)| PriceVector::new(logp.iter().map(|x| libm::exp(*x)).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EquilibriumSet {
        prices,
        boundary_warning,
        rejected,
    })
}

/// Number of equilibria, i.e. the length of [`find_equilibria`].
pub fn count_equilibria(eco: &Economy, omega: &Endowment, scan: &ScanConfig) -> Result<usize, EconomyError> {
    find_equilibria(eco, omega, scan).map(|s| s.count())
}

fn scan_two_goods(eco: &Economy, omega: &Endowment, scan: &ScanConfig) -> Result<(Vec<Vec<f64>>, bool), EconomyError> {
    let width = scan.log_p_max - scan.log_p_min;
    let node = |i: usize| scan.log_p_min + width * (i as f64) / (scan.cells as f64);
    let z1 = |x: f64| excess_at_log(eco, omega, &[x]).map(|z| z[0]);

    let values = (0..=scan.cells)
        .map(|i| z1(node(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut roots = Vec::new();
    let mut edge_root = false;
    for i in 0..=scan.cells {
        let zi = values[i];
        if zi == 0.0 {
            roots.push(vec![node(i)]);
            edge_root |= i == 0 || i == scan.cells;
            continue;
        }
        if i == scan.cells {
            break;
        }
        let zn = values[i + 1];
        if zn == 0.0 || !zi.is_finite() || !zn.is_finite() || (zi > 0.0) == (zn > 0.0) {
            continue;
        }
        let (mut a, mut b, mut za) = (node(i), node(i + 1), zi);
        while b - a > scan.tol_p {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let zm = z1(m)?;
            if zm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (zm > 0.0) == (za > 0.0) {
                a = m;
                za = zm;
            } else {
                b = m;
            }
        }
        roots.push(vec![0.5 * (a + b)]);
        edge_root |= i == 0 || i + 1 == scan.cells;
    }
    let (first, last) = (values[0], values[scan.cells]);
    let same_sign = first != 0.0 && last != 0.0 && (first > 0.0) == (last > 0.0);
    Ok((roots, edge_root || same_sign))
}

fn newton_multistart(eco: &Economy, omega: &Endowment, scan: &ScanConfig) -> Result<Vec<Vec<f64>>, EconomyError> {
    let dim = eco.goods() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
    let mut roots = Vec::new();
    for start in 0..scan.starts {
        let x0: Vec<f64> = if start == 0 {
            vec![0.0; dim]
        } else {
            (0..dim)
                .map(|_| rng.random_range(scan.log_p_min..scan.log_p_max))
                .collect()
        };
        if let Some(root) = damped_newton(eco, omega, scan, x0) {
            roots.push(root);
        }
    }
    Ok(roots)
}

/// Damped Newton on the first `L − 1` excess demands, in log-prices.
fn damped_newton(eco: &Economy, omega: &Endowment, scan: &ScanConfig, mut x: Vec<f64>) -> Option<Vec<f64>> {
    let dim = x.len();
    let residual = |x: &[f64]| -> Option<Vec<f64>> {
        let z = excess_at_log(eco, omega, x).ok()?;
        let f = z[..dim].to_vec();
        f.iter().all(|v| v.is_finite()).then_some(f)
    };
    let mut f = residual(&x)?;
    for _ in 0..scan.max_newton_iter {
        let norm = linalg::norm_inf(&f);
        if norm < 1e-3 * scan.tol_residual {
            return Some(x);
        }
        let mut jac = Matrix::zeros(dim, dim);
        for j in 0..dim {
            let h = 1e-7 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (residual(&xp)?, residual(&xm)?);
            for i in 0..dim {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = linalg::solve(jac, &neg)?;
        let mut lambda = 1.0;
        let mut improved = None;
        for _ in 0..=scan.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            if let Some(ft) = residual(&trial) {
                if linalg::norm_inf(&ft) < norm {
                    improved = Some((trial, ft));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (xn, fnew) = improved?;
        let moved = linalg::norm_inf(&xn.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        x = xn;
        f = fnew;
        if moved < 1e-15 {
            break;
        }
    }
    (linalg::norm_inf(&f) < scan.tol_residual && x.iter().all(|v| v.is_finite())).then_some(x)
}
