//! Integration over axis-aligned boxes: tensor-product Gauss-Legendre up to a
//! configurable dimension, stratified Monte Carlo above it.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::ParamBox;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    /// Boxes of higher dimension fall back to Monte Carlo.
    pub max_tensor_dim: usize,
    pub mc_samples: usize,
    /// Monte Carlo strata along the first axis.
    pub mc_strata: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: 16,
            max_tensor_dim: 4,
            mc_samples: 100_000,
            mc_strata: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GaussLegendre,
    MonteCarlo,
}

/// Integral estimates for `K` integrands sharing one set of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    /// Zero for Gauss-Legendre.
    pub std_error: [f64; K],
    pub method: Method,
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integrates `f` over `bx` with the method selected by `spec`.
pub fn integrate<const K: usize, E, F>(bx: &ParamBox, spec: &QuadratureSpec, f: F) -> Result<Estimate<K>, E>
where
    F: FnMut(&[f64]) -> Result<[f64; K], E>,
{
    if bx.dim() <= spec.max_tensor_dim {
        integrate_gauss_legendre(bx, spec.nodes_per_axis, f)
    } else {
        integrate_monte_carlo(bx, spec, f)
    }
}

pub fn integrate_gauss_legendre<const K: usize, E, F>(bx: &ParamBox, nodes_per_axis: usize, mut f: F) -> Result<Estimate<K>, E>
where
    F: FnMut(&[f64]) -> Result<[f64; K], E>,
{
    let (x, w) = gauss_legendre(nodes_per_axis);
    let n = bx.dim();
    let half: Vec<f64> = bx.widths().iter().map(|d| 0.5 * d).collect();
    let mid = bx.center();
    let mut idx = vec![0usize; n];
    let mut u = vec![0.0; n];
    let mut total = [0.0; K];
    loop {
        let mut weight = 1.0;
        for a in 0..n {
            u[a] = mid[a] + half[a] * x[idx[a]];
            weight *= half[a] * w[idx[a]];
        }
        let v = f(&u)?;
        for k in 0..K {
            total[k] += weight * v[k];
        }
        let mut a = n;
        loop {
            if a == 0 {
                return Ok(Estimate {
                    value: total,
                    std_error: [0.0; K],
                    method: Method::GaussLegendre,
                });
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < nodes_per_axis {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Stratified Monte Carlo: equal slabs along the first axis, each with its
/// own ChaCha stream derived from `spec.seed`, reduced in stratum order.
pub fn integrate_monte_carlo<const K: usize, E, F>(bx: &ParamBox, spec: &QuadratureSpec, mut f: F) -> Result<Estimate<K>, E>
where
    F: FnMut(&[f64]) -> Result<[f64; K], E>,
{
    let strata = spec.mc_strata.max(1);
    let per = (spec.mc_samples / strata).max(2);
    let widths = bx.widths();
    let volume: f64 = widths.iter().product();
    let slab = volume / strata as f64;
    let mut value = [0.0; K];
    let mut variance = [0.0; K];
    let mut u = vec![0.0; bx.dim()];
    for s in 0..strata {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s as u64);
        let mut sum = [0.0; K];
        let mut sum_sq = [0.0; K];
        for _ in 0..per {
            u[0] = bx.lower[0] + widths[0] * (s as f64 + rng.random::<f64>()) / strata as f64;
            for a in 1..bx.dim() {
                u[a] = bx.lower[a] + widths[a] * rng.random::<f64>();
            }
            let v = f(&u)?;
            for k in 0..K {
                sum[k] += v[k];
                sum_sq[k] += v[k] * v[k];
            }
        }
        let nf = per as f64;
        for k in 0..K {
            let mean = sum[k] / nf;
            let var = ((sum_sq[k] - nf * mean * mean) / (nf - 1.0)).max(0.0);
            value[k] += slab * mean;
            variance[k] += slab * slab * var / nf;
        }
    }
    Ok(Estimate {
        value,
        std_error: variance.map(libm::sqrt),
        method: Method::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::convert::Infallible;

    #[test]
    fn low_order_rules_match_tables() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / libm::sqrt(3.0)).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - libm::sqrt(0.6)).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rule_is_exact_for_polynomials_up_to_degree_2n_minus_1() {
        for n in [1usize, 4, 7, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for deg in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * libm::pow(*xi, deg as f64)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn tensor_rule_integrates_separable_function() {
        let bx = ParamBox::new(vec![0.0, 1.0, -1.0], vec![1.0, 2.0, 2.0]).unwrap();
        let est = integrate_gauss_legendre(&bx, 8, |u| Ok::<_, Infallible>([u[0] * u[1] * u[1] * libm::exp(u[2])]))
            .unwrap();
        let exact = 0.5 * (7.0 / 3.0) * (libm::exp(2.0) - libm::exp(-1.0));
        assert!((est.value[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_seeded_and_within_error() {
        let bx = ParamBox::new(vec![0.0; 5], vec![1.0; 5]).unwrap();
        let spec = QuadratureSpec::default();
        let f = |u: &[f64]| Ok::<_, Infallible>([u.iter().map(|x| x * x).sum::<f64>()]);
        let a = integrate(&bx, &spec, f).unwrap();
        let b = integrate(&bx, &spec, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.method, Method::MonteCarlo);
        assert!((a.value[0] - 5.0 / 3.0).abs() < 3.0 * a.std_error[0]);
    }
}
