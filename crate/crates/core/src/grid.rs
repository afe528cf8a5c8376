//! Uniform tensor grids on boxes (1D intervals, 2D rectangles) with a
//! boundary ring, and node-valued fields on them.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension {0} unsupported (solver grids are 1D or 2D)")]
    Dimension(usize),
    #[error("axis {axis}: bounds [{low}, {high}] do not give a positive spacing")]
    Bounds { axis: usize, low: f64, high: f64 },
    #[error("field has {got} values, grid has {expected} nodes")]
    Size { expected: usize, got: usize },
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
}

/// Uniform grid with `interior[d]` unknowns per axis plus one boundary node
/// at each end. Node `k` on axis `d` sits at `lower[d] + k * h[d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    interior: Vec<usize>,
    h: Vec<f64>,
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], interior: &[usize]) -> Result<Self, GridError> {
        let dim = lower.len();
        if dim == 0 || dim > 2 || upper.len() != dim || interior.len() != dim {
            return Err(GridError::Dimension(dim));
        }
        let mut h = Vec::with_capacity(dim);
        for d in 0..dim {
            let step = (upper[d] - lower[d]) / (interior[d] + 1) as f64;
            if !(step > 0.0 && step.is_finite()) {
                return Err(GridError::Bounds {
                    axis: d,
                    low: lower[d],
                    high: upper[d],
                });
            }
            h.push(step);
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            interior: interior.to_vec(),
            h,
        })
    }

    /// 1D grid on `[low, high]` split into `cells` equal cells.
    pub fn interval(low: f64, high: f64, cells: usize) -> Result<Self, GridError> {
        Self::new(&[low], &[high], &[cells.saturating_sub(1)])
    }

    /// Square-celled 2D grid with `cells` cells per axis.
    pub fn rectangle(
        lower: [f64; 2],
        upper: [f64; 2],
        cells: [usize; 2],
    ) -> Result<Self, GridError> {
        Self::new(
            &lower,
            &upper,
            &[cells[0].saturating_sub(1), cells[1].saturating_sub(1)],
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn interior_counts(&self) -> &[usize] {
        &self.interior
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Nodes per axis, boundary ring included.
    pub fn nodes_per_axis(&self, axis: usize) -> usize {
        self.interior[axis] + 2
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|d| self.nodes_per_axis(d)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.iter().any(|&n| n == 0)
    }

    pub fn interior_len(&self) -> usize {
        self.interior.iter().product()
    }

    /// Linear index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.nodes_per_axis(0)
        }
    }

    pub fn index(&self, ij: &[usize]) -> usize {
        match self.dim() {
            1 => ij[0],
            _ => ij[1] * self.nodes_per_axis(0) + ij[0],
        }
    }

    /// Multi-index of node `k`.
    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        let nx = self.nodes_per_axis(0);
        match self.dim() {
            1 => [k, 0],
            _ => [k % nx, k / nx],
        }
    }

    pub fn coord(&self, k: usize) -> Vec<f64> {
        let ij = self.multi_index(k);
        (0..self.dim())
            .map(|d| {
                if ij[d] == self.interior[d] + 1 {
                    self.upper[d]
                } else {
                    self.lower[d] + ij[d] as f64 * self.h[d]
                }
            })
            .collect()
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let ij = self.multi_index(k);
        (0..self.dim()).any(|d| ij[d] == 0 || ij[d] == self.interior[d] + 1)
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_boundary(k)).collect()
    }

    /// Volume of the dual cell around a node (interior nodes).
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn h_squared_max(&self) -> f64 {
        self.h.iter().fold(0.0f64, |acc, x| acc.max(x * x))
    }

    /// Samples `f` at every node.
    pub fn sample(&self, t: f64, mut f: impl FnMut(&[f64]) -> f64) -> Field {
        let values = (0..self.len()).map(|k| f(&self.coord(k))).collect();
        Field { t, values }
    }
}

/// Node values of a scalar function at a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub t: f64,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, t: f64, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Size {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let field = Self { t, values };
        field.check_finite()?;
        Ok(field)
    }

    pub fn constant(grid: &Grid, t: f64, value: f64) -> Self {
        Self {
            t,
            values: vec![value; grid.len()],
        }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(GridError::NonFinite(k)),
            None => Ok(()),
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max |u - c|` over all nodes.
    pub fn max_abs_dev(&self, c: f64) -> f64 {
        self.values
            .iter()
            .fold(0.0f64, |acc, v| acc.max((v - c).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            t: self.t,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_boundary_ring() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 2.0], &[3, 1]).unwrap();
        assert_eq!(g.h(), &[0.25, 1.0]);
        assert_eq!(g.len(), 5 * 3);
        assert_eq!(g.interior_indices().len(), 3);
        let k = g.index(&[4, 2]);
        assert_eq!(g.coord(k), vec![1.0, 2.0]);
        assert!(g.is_boundary(k));
        assert!(!g.is_boundary(g.index(&[2, 1])));
    }

    #[test]
    fn rejects_inverted_bounds_and_3d() {
        assert!(matches!(
            Grid::new(&[1.0], &[0.0], &[4]),
            Err(GridError::Bounds { axis: 0, .. })
        ));
        assert!(matches!(
            Grid::new(&[0.0; 3], &[1.0; 3], &[2; 3]),
            Err(GridError::Dimension(3))
        ));
    }

    #[test]
    fn upper_node_is_exact() {
        let g = Grid::interval(0.0, std::f64::consts::PI, 7).unwrap();
        assert_eq!(g.coord(g.len() - 1), vec![std::f64::consts::PI]);
    }

    #[test]
    fn field_rejects_nan() {
        let g = Grid::interval(0.0, 1.0, 2).unwrap();
        assert_eq!(
            Field::new(&g, 0.0, vec![0.0, f64::NAN, 0.0]),
            Err(GridError::NonFinite(1))
        );
    }
}
