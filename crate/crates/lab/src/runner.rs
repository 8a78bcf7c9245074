//! Scenario execution. Every scenario turns a validated config into rows in a
//! fixed point order; points are evaluated on a rayon pool and collected in
//! index order, so the thread count never changes the output.

use eqmanifold::entropy::{self, NeighborhoodBox, SineBump};
use eqmanifold::geometry::{
    gauss_dispersion_from_normals, geodesic_residual, mean_curvature, ruling_wedge, summarize_scan,
};
use eqmanifold::helicoid::{helicoid_chart, hyperplane_intersection, HelicoidSpec, Hyperplane};
use eqmanifold::manifold::{AmbientPoint, ChartPoint, EquilibriumChart, PriceIncomePoint};
use eqmanifold::{demand, find_equilibria, Chart, Economy, Endowment, GridSpec, PriceVector};
use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ConfigError, CurveKind, ExperimentConfig, Scenario};
use crate::report::{Check, Contingency, ResultRow, RunOutput, Summary};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    /// The chart itself could not be set up, so no point can be evaluated.
    #[error("setup failed: {0}")]
    Setup(String),
}

const STREAM_ENDOWMENTS: u64 = 1;
const STREAM_HYPERPLANES: u64 = 1 << 16;
const STREAM_BUMPS: u64 = 1 << 32;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Draws one uniform value per bound pair.
fn uniform_in(r: &mut ChaCha8Rng, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(a, b)| if a == b { *a } else { r.random_range(*a..*b) })
        .collect()
}

/// Runs `scenario` with `jobs` worker threads (0 picks the rayon default).
pub fn run(scenario: Scenario, cfg: &ExperimentConfig, jobs: usize) -> Result<RunOutput, RunError> {
    cfg.validate(scenario)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    info!("running {scenario} with seed {}", cfg.seed);
    let (rows, checks, contingency, metrics) = pool.install(|| match scenario {
        Scenario::Equilibria => equilibria(cfg),
        Scenario::CurvatureScan => curvature_scan(cfg),
        Scenario::Entropy => entropy_boxes(cfg),
        Scenario::HelicoidCheck => helicoid_check(cfg),
        Scenario::GeodesicCheck => geodesic_check(cfg),
        Scenario::MvpProbe => mvp(cfg),
        Scenario::ConjectureSweep => conjecture_sweep(cfg),
    })?;
    let failures = rows.iter().filter(|r| r.failed()).count();
    let failure_fraction = if rows.is_empty() { 0.0 } else { failures as f64 / rows.len() as f64 };
    if failures > 0 {
        warn!("{failures} of {} points failed", rows.len());
    }
    Ok(RunOutput {
        summary: Summary {
            rows: rows.len(),
            failures,
            failure_fraction,
            checks,
            contingency,
            metrics,
        },
        rows,
    })
}

type Parts = (Vec<ResultRow>, Vec<Check>, Option<Contingency>, std::collections::BTreeMap<String, f64>);

fn parts(rows: Vec<ResultRow>) -> Parts {
    (rows, Vec::new(), None, Default::default())
}

fn error_flag(e: impl std::fmt::Display) -> String {
    format!("error: {e}")
}

fn chart(cfg: &ExperimentConfig) -> Result<(Economy, EquilibriumChart), RunError> {
    let eco = cfg.economy()?;
    let chart = EquilibriumChart::for_economy(eco.clone()).map_err(|e| RunError::Setup(e.to_string()))?;
    Ok((eco, chart))
}

/// Explicit endowments first, then the random draws, each completed with the
/// last consumer's row.
fn endowments(cfg: &ExperimentConfig, eco: &Economy) -> Vec<Vec<Vec<f64>>> {
    let mut out = cfg.endowments.explicit.clone();
    if let Some(spec) = &cfg.endowments.random {
        let mut r = rng(cfg.seed, STREAM_ENDOWMENTS);
        for _ in 0..spec.count {
            let flat = uniform_in(&mut r, &spec.lower, &spec.upper);
            out.push(flat.chunks(eco.goods()).map(<[f64]>::to_vec).collect());
        }
    }
    out
}

struct EquilibriumPoint {
    omega: Option<Endowment>,
    prices: Vec<PriceVector>,
    row: ResultRow,
}

fn solve_point(cfg: &ExperimentConfig, eco: &Economy, index: usize, leading: &[Vec<f64>], scenario: &str) -> EquilibriumPoint {
    let mut row = ResultRow::new(scenario, &cfg.economy_id(), index, leading.concat());
    let omega = match Endowment::complete(eco, leading) {
        Ok(o) => o,
        Err(e) => {
            row.flag(error_flag(e));
            return EquilibriumPoint { omega: None, prices: Vec::new(), row };
        }
    };
    row.point = omega.as_flat().to_vec();
    match find_equilibria(eco, &omega, &cfg.scan) {
        Ok(set) => {
            row.equilibrium_count = Some(set.count());
            row.detail = set.prices.iter().flat_map(|p| p.as_slice().to_vec()).collect();
            if set.boundary_warning {
                row.flag("boundary-warning");
            }
            if set.rejected > 0 {
                row.flag(format!("rejected-candidates={}", set.rejected));
            }
            if set.count() == 0 {
                row.flag("no-equilibrium");
            }
            EquilibriumPoint {
                omega: Some(omega),
                prices: set.prices,
                row,
            }
        }
        Err(e) => {
            row.flag(error_flag(e));
            EquilibriumPoint { omega: Some(omega), prices: Vec::new(), row }
        }
    }
}

fn equilibria(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let eco = cfg.economy()?;
    let points = endowments(cfg, &eco);
    let rows: Vec<ResultRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, leading)| solve_point(cfg, &eco, i, leading, "equilibria").row)
        .collect();
    let counts: Vec<usize> = rows.iter().filter_map(|r| r.equilibrium_count).collect();
    let mut out = parts(rows);
    out.3.insert("min_count".into(), counts.iter().copied().min().unwrap_or(0) as f64);
    out.3.insert("max_count".into(), counts.iter().copied().max().unwrap_or(0) as f64);
    Ok(out)
}

/// Per-cell rows plus one aggregate row carrying the sup and, for
/// hypersurfaces, the Gauss-map dispersion.
fn grid_rows<C: Chart + Sync>(c: &C, cfg: &ExperimentConfig, grid: &GridSpec, scenario: &str, first_index: usize) -> (Vec<ResultRow>, ResultRow) {
    let id = cfg.economy_id();
    let reports: Vec<_> = (0..grid.len())
        .into_par_iter()
        .map(|i| mean_curvature(c, &grid.point(i), &cfg.steps))
        .collect();
    let rows = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = ResultRow::new(scenario, &id, first_index + i, grid.point(i));
            match r {
                Ok(rep) => row.sup_mean_curvature = Some(rep.mean_curvature_norm),
                Err(e) => row.flag(error_flag(e)),
            }
            row
        })
        .collect();
    let normals: Option<Vec<Vec<f64>>> = reports
        .iter()
        .map(|r| r.as_ref().ok().map(|rep| rep.normal_frame[0].clone()))
        .collect();
    let report = summarize_scan(reports);
    let mut agg = ResultRow::new(scenario, &id, first_index + grid.len(), Vec::new());
    agg.flag("aggregate");
    agg.sup_mean_curvature = Some(report.sup_norm);
    if let Some(arg) = report.argmax {
        agg.detail = arg;
    }
    if report.failures > 0 {
        agg.flag(format!("failed-cells={}", report.failures));
    }
    match (c.codimension(), normals) {
        (1, Some(normals)) => match gauss_dispersion_from_normals(grid, &normals) {
            Ok(d) => agg.gauss_dispersion = Some(d),
            Err(e) => agg.flag(format!("gauss-unavailable: {e}")),
        },
        (1, None) => agg.flag("gauss-unavailable: failed cells"),
        _ => {}
    }
    (rows, agg)
}

fn curvature_scan(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let (_, c) = chart(cfg)?;
    let grid = cfg.grid.as_ref().expect("validated");
    let (mut rows, agg) = grid_rows(&c, cfg, grid, "curvature-scan", 0);
    let mut out = parts(Vec::new());
    out.3.insert("sup_mean_curvature".into(), agg.sup_mean_curvature.unwrap_or(f64::NAN));
    if let Some(d) = agg.gauss_dispersion {
        out.3.insert("gauss_dispersion".into(), d);
    }
    out.1.push(Check {
        name: "grid-evaluated".into(),
        passed: rows.iter().any(|r| !r.failed()),
        detail: format!("{} cells", rows.len()),
    });
    rows.push(agg);
    out.0 = rows;
    Ok(out)
}

fn entropy_boxes(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let (_, c) = chart(cfg)?;
    let id = cfg.economy_id();
    let rows: Vec<ResultRow> = cfg
        .boxes
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut row = ResultRow::new("entropy", &id, i, [b.lower.clone(), b.upper.clone()].concat());
            let result = NeighborhoodBox::try_from(b.clone()).and_then(|bx| entropy::volume(&c, &bx, &cfg.quadrature, &cfg.steps));
            match result {
                Ok(v) if v > 0.0 => {
                    row.volume = Some(v);
                    row.entropy = Some(v.ln());
                }
                Ok(v) => row.flag(error_flag(format!("non-positive volume {v}"))),
                Err(e) => row.flag(error_flag(e)),
            }
            row
        })
        .collect();
    Ok(parts(rows))
}

fn random_plane(r: &mut ChaCha8Rng, dim: usize) -> Option<Hyperplane> {
    let coefficients: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let delta = r.random_range(-2.0..2.0);
    Hyperplane::new(coefficients, delta).ok()
}

fn spec_point(h: &HelicoidSpec) -> Vec<f64> {
    let mut p = vec![h.n as f64, h.k as f64];
    p.extend(&h.a);
    p.push(h.b);
    p
}

fn helicoid_check(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let hc = &cfg.helicoid;
    let specs: Vec<(&HelicoidSpec, bool)> = hc
        .specs
        .iter()
        .map(|h| (h, false))
        .chain(hc.degenerate.iter().map(|h| (h, true)))
        .collect();
    let tol = &cfg.tolerances;
    let results: Vec<(ResultRow, Vec<Check>)> = specs
        .par_iter()
        .enumerate()
        .map(|(i, (h, expect_degenerate))| {
            let mut row = ResultRow::new("helicoid-check", "", i, spec_point(h));
            let mut checks = Vec::new();
            let degenerate = h.is_degenerate();
            if degenerate {
                row.flag("degenerate");
            }
            if h.is_affine() {
                row.flag("affine");
            }
            checks.push(Check {
                name: format!("spec[{i}] degeneracy flag"),
                passed: degenerate == *expect_degenerate,
                detail: format!("flagged {degenerate}, expected {expect_degenerate}"),
            });

            let c = match helicoid_chart(h) {
                Ok(c) => c,
                Err(e) => {
                    row.flag(error_flag(e));
                    return (row, checks);
                }
            };
            let grid = h.standard_grid();
            let reports: Vec<_> = grid.points().iter().map(|u| mean_curvature(&c, u, &cfg.steps)).collect();
            let scan = summarize_scan(reports);
            row.sup_mean_curvature = Some(scan.sup_norm);
            if scan.failures > 0 {
                row.flag(format!("failed-cells={}", scan.failures));
            }
            if !degenerate {
                checks.push(Check {
                    name: format!("spec[{i}] minimal"),
                    passed: scan.failures == 0 && scan.sup_norm < tol.minimal,
                    detail: format!("sup |H| = {:e}", scan.sup_norm),
                });
            }

            let mut r = rng(cfg.seed, STREAM_HYPERPLANES + i as u64);
            let (mut worst, mut parallel, mut errors) = (0.0_f64, 0usize, 0usize);
            for _ in 0..hc.hyperplanes {
                let Some(plane) = random_plane(&mut r, h.ambient_dim()) else { continue };
                match hyperplane_intersection(h, &plane) {
                    Ok(Some(hit)) => worst = worst.max(hit.residual),
                    Ok(None) => parallel += 1,
                    Err(e) => {
                        debug!("spec[{i}]: {e}");
                        errors += 1;
                    }
                }
            }
            row.value = Some(worst);
            row.detail = vec![parallel as f64];
            if parallel > 0 {
                row.flag(format!("parallel={parallel}"));
            }
            if errors > 0 {
                row.flag(error_flag(format!("{errors} intersections failed")));
            }
            checks.push(Check {
                name: format!("spec[{i}] intersections"),
                passed: errors == 0 && worst < tol.intersection && (degenerate || parallel == 0),
                detail: format!("max residual {worst:e}, {parallel} parallel"),
            });
            (row, checks)
        })
        .collect();
    let mut out = parts(Vec::new());
    for (row, checks) in results {
        out.0.push(row);
        out.1.extend(checks);
    }
    Ok(out)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// First-good holding of consumer 1 at the no-trade point above `t`.
fn no_trade_fiber(c: &EquilibriumChart, t: f64) -> f64 {
    let eco = c.economy();
    c.solver()
        .solve(eco, &[t])
        .ok()
        .and_then(|pi: PriceIncomePoint| demand(&eco.consumers()[0], &pi.prices, pi.wealths[0]).ok())
        .map_or(f64::NAN, |x| x[0])
}

fn geodesic_check(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let (_, c) = chart(cfg)?;
    let id = cfg.economy_id();
    let g = &cfg.geodesic;
    let ts = linspace(g.t_min, g.t_max, g.points);
    let rows: Vec<ResultRow> = ts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let curve = |s: f64| match g.curve {
                CurveKind::ZeroFiber => vec![s, 0.0],
                CurveKind::NoTrade => vec![s, no_trade_fiber(&c, s)],
            };
            let mut row = ResultRow::new("geodesic-check", &id, i, curve(t));
            match geodesic_residual(&c, curve, t, &cfg.steps) {
                Ok(res) if res.is_finite() => {
                    row.value = Some(res);
                    row.flag(if res < cfg.tolerances.geodesic { "geodesic" } else { "not-geodesic" });
                }
                Ok(res) => row.flag(error_flag(format!("residual {res}"))),
                Err(e) => row.flag(error_flag(e)),
            }
            if g.curve == CurveKind::ZeroFiber {
                match ruling_wedge(&c, t, &cfg.steps) {
                    Ok(w) if w.normalized.is_finite() => {
                        row.detail = vec![w.triple[0], w.triple[1], w.triple[2], w.normalized, w.tangent_wedge_norm];
                    }
                    Ok(_) => row.flag(error_flag("wedge degenerate")),
                    Err(e) => row.flag(error_flag(e)),
                }
            }
            row
        })
        .collect();
    let mut out = parts(Vec::new());
    let max_residual = rows.iter().filter_map(|r| r.value).fold(0.0, f64::max);
    out.3.insert("max_residual".into(), max_residual);
    if g.curve == CurveKind::ZeroFiber {
        let gap = rows
            .iter()
            .filter_map(|r| Some((r.value?, *r.detail.get(3)?)))
            .map(|(res, wedge)| (res - wedge).abs() / (1.0 + res))
            .fold(0.0, f64::max);
        out.3.insert("wedge_gap".into(), gap);
        out.1.push(Check {
            name: "wedge agrees with residual".into(),
            passed: gap < 1e-5,
            detail: format!("largest relative gap {gap:e}"),
        });
    }
    out.0 = rows;
    Ok(out)
}

fn random_bump(r: &mut ChaCha8Rng, bx: &NeighborhoodBox, terms: usize, max_mode: u32) -> SineBump {
    let mut bump = SineBump::fundamental(bx);
    bump.terms = (0..terms)
        .map(|_| {
            let coef = r.random_range(-1.0..1.0);
            let modes = (0..bx.dim()).map(|_| r.random_range(1..=max_mode)).collect();
            (coef, modes)
        })
        .collect();
    bump
}

fn mvp(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let (_, c) = chart(cfg)?;
    let id = cfg.economy_id();
    let m = &cfg.mvp;
    let jobs: Vec<(usize, usize)> = (0..cfg.boxes.len())
        .flat_map(|b| (0..m.perturbations).map(move |j| (b, j)))
        .collect();
    let per_job: Vec<(Vec<ResultRow>, Option<f64>)> = jobs
        .par_iter()
        .map(|&(b, j)| {
            let base = (b * m.perturbations + j) * m.eps.len();
            let fail = |e: String| {
                let mut row = ResultRow::new("mvp-probe", &id, base, vec![b as f64, j as f64]);
                row.flag(error_flag(e));
                (vec![row], None)
            };
            let bx = match NeighborhoodBox::try_from(cfg.boxes[b].clone()) {
                Ok(bx) => bx,
                Err(e) => return fail(e.to_string()),
            };
            let mut r = rng(cfg.seed, STREAM_BUMPS + (b * m.perturbations + j) as u64);
            let bump = random_bump(&mut r, &bx, m.terms, m.max_mode);
            let psi = |u: &[f64]| bump.eval(u);
            let v0 = match entropy::volume(&c, &bx, &cfg.quadrature, &cfg.steps) {
                Ok(v) => v,
                Err(e) => return fail(e.to_string()),
            };
            let probe = match entropy::mvp_probe(&c, &bx, &psi, &m.eps, &cfg.quadrature, &cfg.steps) {
                Ok(p) => p,
                Err(e) => return fail(e.to_string()),
            };
            let curvature = entropy::quadratic_fit(&probe).map(|f| f[2]);
            let rows = probe
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut row = ResultRow::new("mvp-probe", &id, base + k, vec![b as f64, j as f64, p.eps]);
                    if p.volume > 0.0 {
                        row.volume = Some(p.volume);
                        row.entropy = Some(p.volume.ln());
                    }
                    let change = p.volume - v0;
                    row.value = Some(change);
                    if change < -cfg.tolerances.volume_floor {
                        row.flag("below-baseline");
                    }
                    row
                })
                .collect();
            (rows, curvature)
        })
        .collect();
    let mut out = parts(Vec::new());
    let mut fitted = Vec::new();
    for (rows, curvature) in per_job {
        out.0.extend(rows);
        fitted.extend(curvature);
    }
    let min_change = out.0.iter().filter_map(|r| r.value).fold(f64::INFINITY, f64::min);
    let below = out.0.iter().filter(|r| r.flags.iter().any(|f| f == "below-baseline")).count();
    out.3.insert("min_volume_change".into(), if min_change.is_finite() { min_change } else { 0.0 });
    out.3.insert("below_baseline".into(), below as f64);
    if let Some(min_fit) = fitted.iter().copied().reduce(f64::min) {
        out.3.insert("min_fitted_curvature".into(), min_fit);
    }
    Ok(out)
}

/// Chart parameters `(p·ω_1, …, p·ω_{M−1}, ω̄_1, …, ω̄_{M−1})` of an equilibrium.
fn chart_point(eco: &Economy, p: &PriceVector, omega: &Endowment) -> Vec<f64> {
    let m = eco.consumer_count();
    let l = eco.goods();
    let cp = ChartPoint {
        t: (0..m - 1).map(|i| p.dot(omega.row(i))).collect(),
        fiber: (0..m - 1).map(|i| omega.row(i)[..l - 1].to_vec()).collect(),
    };
    cp.to_flat()
}

const OFF_BRANCH_TOL: f64 = 1e-6;

fn conjecture_sweep(cfg: &ExperimentConfig) -> Result<Parts, RunError> {
    let (eco, c) = chart(cfg)?;
    let points = endowments(cfg, &eco);
    let mut rows: Vec<ResultRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, leading)| {
            let EquilibriumPoint { omega, prices, mut row } = solve_point(cfg, &eco, i, leading, "conjecture-sweep");
            let Some(omega) = omega else { return row };
            let mut local: Option<f64> = None;
            for p in &prices {
                let u = chart_point(&eco, p, &omega);
                let expected = AmbientPoint::encode(&eco, p, &omega).0;
                match c.eval(&u) {
                    Ok(x) if x.iter().zip(&expected).all(|(a, b)| (a - b).abs() < OFF_BRANCH_TOL * (1.0 + b.abs())) => {}
                    Ok(_) => {
                        row.flag("off-branch");
                        continue;
                    }
                    Err(e) => {
                        row.flag(format!("chart-unavailable: {e}"));
                        continue;
                    }
                }
                match mean_curvature(&c, &u, &cfg.steps) {
                    Ok(rep) => local = Some(local.map_or(rep.mean_curvature_norm, |v: f64| v.max(rep.mean_curvature_norm))),
                    Err(e) => row.flag(format!("curvature-unavailable: {e}")),
                }
            }
            row.sup_mean_curvature = local;
            row
        })
        .collect();

    let grid = cfg.grid.as_ref().expect("validated");
    let (_, agg) = grid_rows(&c, cfg, grid, "conjecture-sweep", rows.len());
    let mut agg = agg;
    let counts: Vec<usize> = rows
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.equilibrium_count)
        .collect();
    let local_sup = rows.iter().filter_map(|r| r.sup_mean_curvature).fold(0.0, f64::max);
    let sup = agg.sup_mean_curvature.unwrap_or(0.0).max(local_sup);
    let table = Contingency::new(&counts, sup, cfg.tolerances.minimal);
    info!("contingency cell {}", table.cell());
    agg.equilibrium_count = Some(table.max_multiplicity);
    agg.flag(table.cell());
    if table.anomaly {
        agg.flag("conjecture-anomaly");
    }
    rows.push(agg);

    let mut out = parts(rows);
    out.3.insert("grid_sup_mean_curvature".into(), sup);
    out.3.insert("local_sup_mean_curvature".into(), local_sup);
    out.2 = Some(table);
    Ok(out)
}
