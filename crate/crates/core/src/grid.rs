//! Uniform cell grid on [0, 1], discrete probability measures and the
//! field/trajectory containers shared by the solvers.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a user-supplied [`GridMeasure`].
pub const MASS_TOL: f64 = 1e-12;

/// N equal cells `[(i-1)/N, i/N)` with midpoints `(i - 1/2)/N`.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    midpoints: Arc<[f64]>,
}

impl PartialEq for UniformGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_cells() == other.n_cells()
    }
}

impl UniformGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::domain(format!("a grid needs at least 2 cells, got {n_cells}")));
        }
        let n = n_cells as f64;
        let midpoints = (0..n_cells).map(|i| (i as f64 + 0.5) / n).collect();
        Ok(Self { midpoints })
    }

    pub fn n_cells(&self) -> usize {
        self.midpoints.len()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n_cells() {
            return Err(Error::shape(format!(
                "{what} has length {len}, grid has {} cells",
                self.n_cells()
            )));
        }
        Ok(())
    }
}

/// Cell masses `m_i = μ(Ω_i)` of a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: UniformGrid,
    masses: Vec<f64>,
}

impl GridMeasure {
    /// Validates nonnegativity and unit total mass.
    pub fn new(grid: UniformGrid, masses: Vec<f64>) -> Result<Self> {
        grid.check_len("mass vector", masses.len())?;
        if let Some((i, m)) = masses.iter().enumerate().find(|(_, m)| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::domain(format!("mass of cell {i} is {m}, expected a finite nonnegative value")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::domain(format!("total mass is {total}, expected 1")));
        }
        Ok(Self { grid, masses })
    }

    /// Normalises a nonnegative weight vector into a probability measure.
    pub fn from_weights(grid: UniformGrid, weights: &[f64]) -> Result<Self> {
        grid.check_len("weight vector", weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("weights sum to zero"));
        }
        let masses = weights.iter().map(|w| w / total).collect();
        Ok(Self { grid, masses })
    }

    /// Builds cell masses from a density sampled at midpoints.
    pub fn from_density_fn(grid: UniformGrid, density: impl Fn(f64) -> f64) -> Result<Self> {
        let w: Vec<f64> = grid.midpoints().iter().map(|&x| density(x)).collect();
        Self::from_weights(grid, &w)
    }

    /// Unit mass in a single cell.
    pub fn point_mass(grid: UniformGrid, cell: usize) -> Result<Self> {
        if cell >= grid.n_cells() {
            return Err(Error::shape(format!("cell {cell} outside a {}-cell grid", grid.n_cells())));
        }
        let mut masses = vec![0.0; grid.n_cells()];
        masses[cell] = 1.0;
        Ok(Self { grid, masses })
    }

    /// Solver-produced masses; nonnegativity is checked by the caller.
    pub(crate) fn from_parts(grid: UniformGrid, masses: Vec<f64>) -> Self {
        debug_assert_eq!(grid.n_cells(), masses.len());
        Self { grid, masses }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Densities `p_i = N m_i`.
    pub fn densities(&self) -> Vec<f64> {
        let n = self.grid.n_cells() as f64;
        self.masses.iter().map(|m| n * m).collect()
    }

    pub fn moments(&self) -> Moments {
        moments(self)
    }
}

/// Uniform measure (density ≡ 1).
pub fn uniform_measure(grid: &UniformGrid) -> GridMeasure {
    let n = grid.n_cells();
    GridMeasure { grid: grid.clone(), masses: vec![1.0 / n as f64; n] }
}

/// Total-variation distance `Σ_i |m_i - n_i|`.
pub fn tv_distance(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    if mu.grid != nu.grid {
        return Err(Error::shape(format!(
            "measures live on grids of {} and {} cells",
            mu.grid.n_cells(),
            nu.grid.n_cells()
        )));
    }
    Ok(l1_distance(&mu.masses, &nu.masses))
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean and population standard deviation of a measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

pub fn moments(mu: &GridMeasure) -> Moments {
    let x = mu.grid.midpoints();
    let mean: f64 = x.iter().zip(&mu.masses).map(|(x, m)| x * m).sum();
    let var: f64 = x.iter().zip(&mu.masses).map(|(x, m)| (x - mean) * (x - mean) * m).sum();
    Moments { mean, std: var.max(0.0).sqrt() }
}

/// Utility or value-function values at the cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityField {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl UtilityField {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        grid.check_len("utility vector", values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("utility values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &UniformGrid, value: f64) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.n_cells()] }
    }

    pub(crate) fn from_parts(grid: UniformGrid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Arithmetic-mean restriction of a cell field onto a grid `factor` times
/// coarser. Each coarse value is the mean of the fine cells it contains.
pub fn coarsen_field(fine: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::domain(format!("coarsening factor must be a power of two, got {factor}")));
    }
    if fine.len() % factor != 0 {
        return Err(Error::shape(format!(
            "field of length {} is not divisible by factor {factor}",
            fine.len()
        )));
    }
    let inv = 1.0 / factor as f64;
    Ok(fine.chunks_exact(factor).map(|c| c.iter().sum::<f64>() * inv).collect())
}

/// Time-indexed sequence of cell fields stored row-major (`time × cell`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    n_cells: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl FieldTrajectory {
    pub fn new(n_cells: usize) -> Self {
        Self { n_cells, times: Vec::new(), values: Vec::new() }
    }

    pub fn zeros(n_cells: usize, times: Vec<f64>) -> Self {
        let values = vec![0.0; n_cells * times.len()];
        Self { n_cells, times, values }
    }

    pub fn push(&mut self, t: f64, row: &[f64]) {
        assert_eq!(row.len(), self.n_cells, "trajectory row length");
        self.times.push(t);
        self.values.extend_from_slice(row);
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_cells..(k + 1) * self.n_cells]
    }

    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_cells..(k + 1) * self.n_cells]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cells)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|k| self.row(k))
    }
}

/// Formats a value with 15 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}

/// Writes `t,x,mass,density` rows, one per (time, cell).
pub fn write_measure_csv<W: Write>(out: &mut W, grid: &UniformGrid, traj: &FieldTrajectory) -> io::Result<()> {
    writeln!(out, "t,x,mass,density")?;
    let n = grid.n_cells() as f64;
    for (t, row) in traj.times().iter().zip(traj.rows()) {
        for (x, m) in grid.midpoints().iter().zip(row) {
            writeln!(out, "{},{},{},{}", fmt_num(*t), fmt_num(*x), fmt_num(*m), fmt_num(n * m))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_layout() {
        let g = UniformGrid::new(4).unwrap();
        assert_eq!(g.midpoints(), &[0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.cell_width(), 0.25);
        assert!(UniformGrid::new(1).is_err());
    }

    #[test]
    fn measure_validation() {
        let g = UniformGrid::new(3).unwrap();
        assert!(GridMeasure::new(g.clone(), vec![0.5, 0.5, 0.0]).is_ok());
        assert!(matches!(GridMeasure::new(g.clone(), vec![0.5, 0.6, -0.1]), Err(Error::Domain(_))));
        assert!(matches!(GridMeasure::new(g.clone(), vec![0.5, 0.4, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(GridMeasure::new(g, vec![1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn tv_reference_values() {
        let g = UniformGrid::new(6).unwrap();
        let u = uniform_measure(&g);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
        // ‖μ‖ = 1: distance from the zero measure.
        assert!((l1_distance(u.masses(), &[0.0; 6]) - 1.0).abs() < 1e-15);
        let first = GridMeasure::point_mass(g.clone(), 0).unwrap();
        let last = GridMeasure::point_mass(g.clone(), 5).unwrap();
        assert_eq!(tv_distance(&first, &last).unwrap(), 2.0);
        let other = uniform_measure(&UniformGrid::new(5).unwrap());
        assert!(matches!(tv_distance(&u, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn uniform_measure_and_moments() {
        let g = UniformGrid::new(4).unwrap();
        let u = uniform_measure(&g);
        assert_eq!(u.masses(), &[0.25; 4]);
        for n in [2usize, 5, 16, 500] {
            let g = UniformGrid::new(n).unwrap();
            let u = uniform_measure(&g);
            assert!((u.total_mass() - 1.0).abs() < 1e-15);
            let m = moments(&u);
            assert!((m.mean - 0.5).abs() < 1e-15);
            let nf = n as f64;
            let var = (1.0 - 1.0 / (nf * nf)) / 12.0;
            // Direct summation as the independent check.
            let direct: f64 = g.midpoints().iter().map(|x| (x - 0.5) * (x - 0.5) / nf).sum();
            assert!((m.std * m.std - var).abs() < 1e-14);
            assert!((direct - var).abs() < 1e-14);
        }
        let p = GridMeasure::point_mass(g.clone(), 2).unwrap();
        let m = moments(&p);
        assert_eq!(m.mean, 0.625);
        assert_eq!(m.std, 0.0);
    }

    #[test]
    fn coarsen_reference_values() {
        assert_eq!(coarsen_field(&[3.0; 8], 4).unwrap(), vec![3.0, 3.0]);
        assert_eq!(coarsen_field(&[1.0, 2.0, 5.0], 1).unwrap(), vec![1.0, 2.0, 5.0]);
        let fine = UniformGrid::new(16).unwrap();
        let coarse = UniformGrid::new(8).unwrap();
        let f: Vec<f64> = fine.midpoints().iter().map(|x| 2.0 * x - 0.3).collect();
        let c = coarsen_field(&f, 2).unwrap();
        for (ci, x) in c.iter().zip(coarse.midpoints()) {
            assert!((ci - (2.0 * x - 0.3)).abs() < 1e-15);
        }
        assert!(matches!(coarsen_field(&[1.0; 6], 4), Err(Error::Shape(_))));
        assert!(matches!(coarsen_field(&[1.0; 6], 3), Err(Error::Domain(_))));
    }

    #[test]
    fn measure_csv_layout() {
        let g = UniformGrid::new(2).unwrap();
        let mut traj = FieldTrajectory::new(2);
        traj.push(0.0, &[0.25, 0.75]);
        let mut buf = Vec::new();
        write_measure_csv(&mut buf, &g, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x,mass,density");
        assert_eq!(lines.len(), 3);
        let cols: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols, vec![0.0, 0.75, 0.75, 1.5]);
    }

    fn measure(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, n).prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(a in measure(7), b in measure(7), c in measure(7)) {
            let g = UniformGrid::new(7).unwrap();
            let a = GridMeasure::from_weights(g.clone(), &a).unwrap();
            let b = GridMeasure::from_weights(g.clone(), &b).unwrap();
            let c = GridMeasure::from_weights(g, &c).unwrap();
            let ab = tv_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
            prop_assert!(ab <= 2.0 + 1e-15);
            prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-15);
        }

        #[test]
        fn coarsening_commutes_with_affine_maps(
            f in proptest::collection::vec(-10.0f64..10.0, 16),
            scale in -3.0f64..3.0,
            shift in -3.0f64..3.0,
        ) {
            let mapped: Vec<f64> = f.iter().map(|v| scale * v + shift).collect();
            for factor in [1usize, 2, 4, 8] {
                let lhs = coarsen_field(&mapped, factor).unwrap();
                let rhs: Vec<f64> = coarsen_field(&f, factor).unwrap().iter().map(|v| scale * v + shift).collect();
                for (l, r) in lhs.iter().zip(&rhs) {
                    prop_assert!((l - r).abs() < 1e-12);
                }
            }
        }
    }
}
