//! Uniform ε-discretization of a state box into hyperrectangular cells.
//!
//! Points are cell centers and are generated on demand from their index,
//! so even multi-million point grids cost no memory.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::AxisBox;
use crate::scalar::Real;

pub const DEFAULT_MAX_CELLS: u128 = 100_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid<T> {
    state_box: AxisBox<T>,
    epsilon: T,
    cells_per_axis: Vec<usize>,
    cell_width: Vec<T>,
    len: usize,
}

/// Grid with the default cell-count guard.
pub fn build_grid<T: Real>(state_box: &AxisBox<T>, epsilon: T) -> Result<SampleGrid<T>> {
    SampleGrid::with_limit(state_box, epsilon, DEFAULT_MAX_CELLS)
}

/// Smallest `n` with `width / n <= epsilon` in floating point.
fn cells_for<T: Real>(width: T, epsilon: T) -> usize {
    let mut n = (width / epsilon).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    // ceil of a quotient that rounded up by one ulp can overshoot by a whole cell
    while n > 1 && width / T::lit((n - 1) as f64) <= epsilon {
        n -= 1;
    }
    while width / T::lit(n as f64) > epsilon {
        n += 1;
    }
    n
}

impl<T: Real> SampleGrid<T> {
    pub fn with_limit(state_box: &AxisBox<T>, epsilon: T, max_cells: u128) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidEpsilon(epsilon.as_f64()));
        }
        if state_box.is_degenerate() {
            return Err(Error::InvalidBox(format!("degenerate state box {state_box}")));
        }
        let mut cells = Vec::with_capacity(state_box.dim());
        let mut total: u128 = 1;
        for i in 0..state_box.dim() {
            let ratio = (state_box.width(i) / epsilon).as_f64();
            if ratio > max_cells as f64 {
                return Err(Error::GridTooLarge {
                    cells: ratio.ceil() as u128,
                    limit: max_cells,
                });
            }
            let n = cells_for(state_box.width(i), epsilon);
            total = total.saturating_mul(n as u128);
            if total > max_cells {
                return Err(Error::GridTooLarge {
                    cells: total,
                    limit: max_cells,
                });
            }
            cells.push(n);
        }
        let cell_width = cells
            .iter()
            .enumerate()
            .map(|(i, &n)| state_box.width(i) / T::lit(n as f64))
            .collect();
        Ok(Self {
            state_box: state_box.clone(),
            epsilon,
            cells_per_axis: cells,
            cell_width,
            len: total as usize,
        })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn state_box(&self) -> &AxisBox<T> {
        &self.state_box
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn cell_width(&self) -> &[T] {
        &self.cell_width
    }

    pub fn dim(&self) -> usize {
        self.cells_per_axis.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Half of the largest realized cell side; never above `epsilon / 2`.
    pub fn cover_radius(&self) -> T {
        self.cell_width.iter().fold(T::zero(), |m, &w| m.max(w)) * T::half()
    }

    /// Row-major multi-index, last axis fastest.
    pub fn multi_index(&self, mut index: usize) -> Vec<usize> {
        debug_assert!(index < self.len);
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = index % self.cells_per_axis[a];
            index /= self.cells_per_axis[a];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.cells_per_axis)
            .fold(0, |acc, (&j, &n)| acc * n + j)
    }

    fn coord(&self, axis: usize, j: usize) -> T {
        self.state_box.lower()[axis] + (T::lit(j as f64) + T::half()) * self.cell_width[axis]
    }

    pub fn point_into(&self, mut index: usize, out: &mut [T]) {
        debug_assert!(index < self.len);
        for a in (0..self.dim()).rev() {
            let n = self.cells_per_axis[a];
            out[a] = self.coord(a, index % n);
            index /= n;
        }
    }

    pub fn point(&self, index: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.point_into(index, &mut out);
        out
    }

    /// The cell whose center is point `index`. Outer faces coincide with the state box.
    pub fn cell_of(&self, index: usize) -> AxisBox<T> {
        let m = self.multi_index(index);
        let lo = self.state_box.lower();
        let hi = self.state_box.upper();
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for (a, &j) in m.iter().enumerate() {
            let w = self.cell_width[a];
            lower.push(lo[a] + T::lit(j as f64) * w);
            upper.push(if j + 1 == self.cells_per_axis[a] {
                hi[a]
            } else {
                lo[a] + T::lit((j + 1) as f64) * w
            });
        }
        AxisBox::new(lower, upper).expect("grid cell bounds are ordered")
    }

    /// Index of the cell containing `x` (points outside the box snap to the boundary cell).
    pub fn nearest_index(&self, x: &[T]) -> usize {
        let mut idx = 0usize;
        for (a, &n) in self.cells_per_axis.iter().enumerate() {
            let rel = (x[a] - self.state_box.lower()[a]) / self.cell_width[a];
            let j = rel.floor().to_isize().unwrap_or(0).clamp(0, n as isize - 1) as usize;
            idx = idx * n + j;
        }
        idx
    }

    pub fn iterate_points(&self) -> impl Iterator<Item = (usize, Vec<T>)> + '_ {
        (0..self.len).map(move |i| (i, self.point(i)))
    }

    /// Disjoint index ranges covering the grid, for data-parallel sweeps.
    pub fn chunks(&self, chunk: usize) -> impl Iterator<Item = Range<usize>> {
        let chunk = chunk.max(1);
        let len = self.len;
        (0..len.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn two_by_two() {
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let g = build_grid(&b, 1.0).unwrap();
        assert_eq!(g.cells_per_axis(), &[2, 2]);
        let pts: Vec<_> = g.iterate_points().map(|(_, p)| p).collect();
        assert_eq!(
            pts,
            vec![
                vec![-0.5, -0.5],
                vec![-0.5, 0.5],
                vec![0.5, -0.5],
                vec![0.5, 0.5]
            ]
        );
        assert_eq!(g.cover_radius(), 0.5);
    }

    #[test]
    fn drone_and_pendulum_counts() {
        let d = AxisBox::cube(4, -3.0, 3.0).unwrap();
        let g = build_grid(&d, 0.2f64).unwrap();
        assert_eq!(g.cells_per_axis(), &[30; 4]);
        assert_eq!(g.len(), 810_000);
        assert!((g.cover_radius() - 0.1).abs() < 1e-15);

        let p = AxisBox::cube(2, -FRAC_PI_4, FRAC_PI_4).unwrap();
        let g = build_grid(&p, 9e-4).unwrap();
        assert_eq!(g.cells_per_axis(), &[1746, 1746]);
        assert_eq!(g.len(), 3_048_516);
        assert!(g.cover_radius() <= 9e-4 / 2.0);
    }

    #[test]
    fn single_cell() {
        let b = AxisBox::new(vec![0.0], vec![1.0]).unwrap();
        let g = build_grid(&b, 5.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.point(0), vec![0.5]);
    }

    #[test]
    fn errors() {
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        assert!(matches!(build_grid(&b, 0.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(build_grid(&b, -1.0), Err(Error::InvalidEpsilon(_))));
        assert!(matches!(
            build_grid(&b, 1e-5),
            Err(Error::GridTooLarge { .. })
        ));
        let flat = AxisBox::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(build_grid(&flat, 0.1).is_err());
    }

    #[test]
    fn index_round_trip_and_cells() {
        let b = AxisBox::new(vec![0.0, -1.0, 2.0], vec![1.0, 1.0, 2.5]).unwrap();
        let g = build_grid(&b, 0.3).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
            let p = g.point(i);
            assert_eq!(g.nearest_index(&p), i);
            assert!(g.cell_of(i).contains(&p));
        }
    }

    #[test]
    fn chunks_cover_everything_once() {
        let b = AxisBox::cube(2, 0.0, 1.0).unwrap();
        let g = build_grid(&b, 0.07).unwrap();
        let total: usize = g.chunks(17).map(|r| r.len()).sum();
        assert_eq!(total, g.len());
    }
}
