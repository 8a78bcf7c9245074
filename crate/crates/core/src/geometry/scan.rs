use alloc::vec;
use alloc::vec::Vec;

use super::{mean_curvature, normal_frame, Chart, CurvatureReport, DiffSteps, GeometryError};
use crate::linalg;

/// Tensor grid over a parameter box, `points[a]` nodes on axis `a`
/// (endpoints included). Points are enumerated with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self, GeometryError> {
        let grid = Self { lower, upper, points };
        grid.validate()?;
        Ok(grid)
    }

    /// Same node count on every axis.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, per_axis: usize) -> Result<Self, GeometryError> {
        let n = lower.len();
        Self::new(lower, upper, vec![per_axis; n])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n || self.points.len() != n {
            return Err(GeometryError::InvalidBox("grid bounds and counts must have equal, nonzero length".into()));
        }
        if self.points.contains(&0) {
            return Err(GeometryError::InvalidBox("every axis needs at least one node".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return Err(GeometryError::InvalidBox("grid bounds must be finite with lower <= upper".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.points[a];
            flat /= self.points[a];
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                if self.points[a] == 1 {
                    self.lower[a]
                } else {
                    self.lower[a] + (self.upper[a] - self.lower[a]) * i as f64 / (self.points[a] - 1) as f64
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Flat index of the neighbour one step back along the fastest axis that
    /// is not at its first node; `None` at the grid origin.
    pub fn predecessor(&self, flat: usize) -> Option<usize> {
        let idx = self.multi_index(flat);
        let mut stride = 1;
        for a in (0..self.dim()).rev() {
            if idx[a] > 0 {
                return Some(flat - stride);
            }
            stride *= self.points[a];
        }
        None
    }
}

/// Result of a grid-wide minimality test.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    /// Supremum of `|H|` over the non-degenerate cells.
    pub sup_norm: f64,
    pub argmax: Option<Vec<f64>>,
    pub cells: Vec<Result<CurvatureReport, GeometryError>>,
    /// Cells excluded from the supremum because evaluation failed.
    pub failures: usize,
}

impl ScanReport {
    /// Whether every evaluated cell passes [`CurvatureReport::is_minimal`].
    pub fn all_minimal(&self, tol_minimal: f64) -> bool {
        self.cells
            .iter()
            .filter_map(|c| c.as_ref().ok())
            .all(|r| r.is_minimal(tol_minimal))
    }
}

/// Folds per-cell reports (in grid order) into a [`ScanReport`].
pub fn summarize_scan(cells: Vec<Result<CurvatureReport, GeometryError>>) -> ScanReport {
    let mut sup = 0.0_f64;
    let mut argmax = None;
    let mut failures = 0;
    for cell in &cells {
        match cell {
            Ok(r) if argmax.is_none() || r.mean_curvature_norm > sup => {
                sup = r.mean_curvature_norm;
                argmax = Some(r.point.clone());
            }
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    ScanReport {
        sup_norm: sup,
        argmax,
        cells,
        failures,
    }
}

/// Mean curvature at every grid node.
pub fn minimality_scan<C: Chart + ?Sized>(c: &C, grid: &GridSpec, steps: &DiffSteps) -> Result<ScanReport, GeometryError> {
    grid.validate()?;
    if grid.dim() != c.param_dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: c.param_dim(),
            found: grid.dim(),
        });
    }
    let cells = grid.points().iter().map(|u| mean_curvature(c, u, steps)).collect();
    Ok(summarize_scan(cells))
}

/// Largest angle between unit normals over the grid, after orienting each
/// normal consistently with its grid predecessor.
pub fn gauss_dispersion_from_normals(grid: &GridSpec, normals: &[Vec<f64>]) -> Result<f64, GeometryError> {
    if normals.len() != grid.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: grid.len(),
            found: normals.len(),
        });
    }
    let mut oriented: Vec<Vec<f64>> = Vec::with_capacity(normals.len());
    for (i, nrm) in normals.iter().enumerate() {
        let mut v = nrm.clone();
        if let Some(prev) = grid.predecessor(i) {
            let d = linalg::dot(&v, &oriented[prev]);
            // A normal turning by more than ~84° within one cell cannot be
            // oriented from its neighbour.
            if d.abs() < 0.1 {
                return Err(GeometryError::NonOrientable { index: i });
            }
            if d < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        oriented.push(v);
    }
    let mut widest = 0.0_f64;
    for (i, a) in oriented.iter().enumerate() {
        for b in &oriented[i + 1..] {
            let chord: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let half = (0.5 * linalg::norm2(&chord)).min(1.0);
            widest = widest.max(2.0 * libm::asin(half));
        }
    }
    Ok(widest)
}

/// Dispersion of the Gauss map of a hypersurface chart over a grid.
pub fn gauss_map_dispersion<C: Chart + ?Sized>(c: &C, grid: &GridSpec, steps: &DiffSteps) -> Result<f64, GeometryError> {
    if c.codimension() != 1 {
        return Err(GeometryError::NotHypersurface { codim: c.codimension() });
    }
    grid.validate()?;
    let normals = grid
        .points()
        .iter()
        .map(|u| normal_frame(c, u, steps).map(|mut f| f.swap_remove(0)))
        .collect::<Result<Vec<_>, _>>()?;
    gauss_dispersion_from_normals(grid, &normals)
}
