use eqmanifold::{aggregate_excess, count_equilibria, demand, DemandSpec, Economy, Endowment, PriceVector, ScanConfig};
use proptest::prelude::*;

fn shares(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(move |raw| {
        let total: f64 = raw.iter().sum();
        let mut alpha: Vec<f64> = raw.iter().map(|a| a / total).collect();
        // Absorb rounding so the shares sum to one.
        let head: f64 = alpha[..len - 1].iter().sum();
        alpha[len - 1] = 1.0 - head;
        alpha
    })
}

fn spec(len: usize) -> impl Strategy<Value = DemandSpec> {
    prop_oneof![
        shares(len).prop_map(|a| DemandSpec::cobb_douglas(a).unwrap()),
        (prop::collection::vec(0.1f64..10.0, len), -5.0f64..0.9)
            .prop_filter("rho must be nonzero", |(_, rho)| rho.abs() > 1e-3)
            .prop_map(|(w, rho)| DemandSpec::ces(w, rho).unwrap()),
    ]
}

fn economy() -> impl Strategy<Value = (Economy, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=4, 2usize..=3).prop_flat_map(|(l, m)| {
        (
            prop::collection::vec(spec(l), m),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, l), m),
            prop::collection::vec(-3.0f64..3.0, l - 1),
        )
            .prop_map(move |(consumers, rows, logp)| {
                let mut resources = vec![0.0; l];
                for row in &rows {
                    for (r, x) in resources.iter_mut().zip(row) {
                        *r += x;
                    }
                }
                let resources = resources.into_iter().map(|r| r + 0.1).collect();
                let eco = Economy::new(resources, consumers).unwrap();
                let prices = logp.into_iter().map(f64::exp).collect();
                (eco, rows, prices)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn budget_identity(s in spec(3), logp in prop::collection::vec(-4.0f64..4.0, 2), w in -10.0f64..10.0) {
        let p = PriceVector::new(logp.into_iter().map(f64::exp).collect()).unwrap();
        let x = demand(&s, &p, w).unwrap();
        let scale = 1.0 + w.abs();
        prop_assert!((p.dot(&x) - w).abs() <= 1e-10 * scale);
    }

    #[test]
    fn demand_is_homogeneous_of_degree_zero(s in spec(3), logp in prop::collection::vec(-3.0f64..3.0, 3), w in 0.1f64..10.0, lambda in 0.01f64..100.0) {
        let x = s.demand_at(&logp.iter().map(|v| v.exp()).collect::<Vec<_>>(), w).unwrap();
        let scaled: Vec<f64> = logp.iter().map(|v| lambda * v.exp()).collect();
        let y = s.demand_at(&scaled, lambda * w).unwrap();
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn walras_law((eco, rows, prices) in economy()) {
        let omega = Endowment::from_rows(&rows).unwrap();
        let p = PriceVector::new(prices).unwrap();
        let z = aggregate_excess(&eco, &p, &omega).unwrap();
        let full = p.full();
        let value: f64 = z.iter().zip(&full).map(|(zi, pi)| zi * pi).sum();
        let scale: f64 = z.iter().zip(&full).map(|(zi, pi)| (zi * pi).abs()).sum::<f64>() + 1.0;
        prop_assert!(value.abs() <= 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refining_the_scan_never_loses_roots(
        a in prop::collection::vec(shares(2), 2),
        weights in prop::collection::vec(prop::collection::vec(0.5f64..50.0, 2), 2),
        rho in -6.0f64..-0.5,
        e1 in 0.05f64..0.95,
        e2 in 0.05f64..0.95,
        use_ces in any::<bool>(),
    ) {
        let consumers = if use_ces {
            weights.into_iter().map(|w| DemandSpec::ces(w, rho).unwrap()).collect()
        } else {
            a.into_iter().map(|s| DemandSpec::cobb_douglas(s).unwrap()).collect()
        };
        let eco = Economy::new(vec![1.0, 1.0], consumers).unwrap();
        let omega = Endowment::from_rows(&[vec![e1, e2], vec![1.0 - e1, 1.0 - e2]]).unwrap();
        let coarse = ScanConfig { cells: 2_000, ..ScanConfig::default() };
        let fine = ScanConfig { cells: 8_000, ..ScanConfig::default() };
        let n_coarse = count_equilibria(&eco, &omega, &coarse).unwrap();
        let n_fine = count_equilibria(&eco, &omega, &fine).unwrap();
        prop_assert!(n_fine >= n_coarse, "{} < {}", n_fine, n_coarse);
        prop_assert!(n_coarse >= 1);
    }
}
