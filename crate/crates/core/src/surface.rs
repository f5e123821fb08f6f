//! Surface height grid shared by every pipeline stage.
//!
//! A scan is an `h × w` grid of heights in micrometers. Row `i` read left to
//! right is the profile `f_i`; row 0 is the top of the rendered image. Each
//! cell is either a finite height or explicitly missing.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("surface must have at least one row and one column (got {rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("pixel pitch must be positive and finite (got res_x={res_x}, res_y={res_y})")]
    InvalidResolution { res_x: f64, res_y: f64 },
    #[error("expected {expected} cells, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("ragged rows: row {row} has {len} cells, expected {expected}")]
    RaggedRows { row: usize, len: usize, expected: usize },
}

/// Height grid in micrometers with physical pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMatrix {
    rows: usize,
    cols: usize,
    heights: Vec<Option<f64>>,
    res_x: f64,
    res_y: f64,
    origin: (f64, f64),
}

/// Pixel pitch of the study microscope, µm per pixel.
pub const STUDY_RESOLUTION_UM: f64 = 0.645;

fn check_res(res_x: f64, res_y: f64) -> Result<(), SurfaceError> {
    if res_x > 0.0 && res_y > 0.0 && res_x.is_finite() && res_y.is_finite() {
        Ok(())
    } else {
        Err(SurfaceError::InvalidResolution { res_x, res_y })
    }
}

fn sanitize(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

impl SurfaceMatrix {
    /// An all-missing grid.
    pub fn missing(rows: usize, cols: usize, res_x: f64, res_y: f64) -> Result<Self, SurfaceError> {
        Self::from_vec(rows, cols, vec![None; rows * cols], res_x, res_y)
    }

    /// Builds a grid from row-major cells. Non-finite values become missing.
    pub fn from_vec(
        rows: usize,
        cols: usize,
        heights: Vec<Option<f64>>,
        res_x: f64,
        res_y: f64,
    ) -> Result<Self, SurfaceError> {
        if rows == 0 || cols == 0 {
            return Err(SurfaceError::EmptyGrid { rows, cols });
        }
        check_res(res_x, res_y)?;
        if heights.len() != rows * cols {
            return Err(SurfaceError::LengthMismatch {
                expected: rows * cols,
                actual: heights.len(),
            });
        }
        let heights = heights.into_iter().map(sanitize).collect();
        Ok(Self {
            rows,
            cols,
            heights,
            res_x,
            res_y,
            origin: (0.0, 0.0),
        })
    }

    pub fn from_rows(rows: Vec<Vec<Option<f64>>>, res_x: f64, res_y: f64) -> Result<Self, SurfaceError> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        let mut cells = Vec::with_capacity(h * w);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != w {
                return Err(SurfaceError::RaggedRows {
                    row: i,
                    len: row.len(),
                    expected: w,
                });
            }
            cells.extend(row);
        }
        Self::from_vec(h, w, cells, res_x, res_y)
    }

    /// Dense grid from a height function of `(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        res_x: f64,
        res_y: f64,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Result<Self, SurfaceError> {
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                cells.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, cells, res_x, res_y)
    }

    pub fn with_origin(mut self, x0: f64, y0: f64) -> Self {
        self.origin = (x0, y0);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn res_x(&self) -> f64 {
        self.res_x
    }

    pub fn res_y(&self) -> f64 {
        self.res_y
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.heights[self.index(row, col)]
    }

    /// Signed lookup; anything outside the grid reads as missing.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> Option<f64> {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            None
        } else {
            self.get(row as usize, col as usize)
        }
    }

    /// Stores a height; non-finite input is stored as missing.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let k = self.index(row, col);
        self.heights[k] = sanitize(value);
    }

    #[inline]
    pub fn is_present(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        &self.heights[row * self.cols..(row + 1) * self.cols]
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.heights
    }

    /// Iterates `(row, col, height)` over present cells.
    pub fn present(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let cols = self.cols;
        self.heights
            .iter()
            .enumerate()
            .filter_map(move |(k, v)| v.map(|z| (k / cols, k % cols, z)))
    }

    pub fn present_count(&self) -> usize {
        self.heights.iter().filter(|v| v.is_some()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.present_count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.len() as f64
    }

    /// A grid of the same geometry with every cell missing.
    pub fn blank_like(&self) -> Self {
        self.blank_with_dims(self.rows, self.cols)
    }

    pub(crate) fn blank_with_dims(&self, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            heights: vec![None; rows * cols],
            res_x: self.res_x,
            res_y: self.res_y,
            origin: self.origin,
        }
    }

    /// Applies `f` to present cells; returning `None` drops the cell.
    pub fn map_present(&self, mut f: impl FnMut(usize, usize, f64) -> Option<f64>) -> Self {
        let mut out = self.clone();
        for k in 0..out.heights.len() {
            if let Some(z) = out.heights[k] {
                out.heights[k] = sanitize(f(k / self.cols, k % self.cols, z));
            }
        }
        out
    }

    /// Physical x of column `col`, µm.
    pub fn x_at(&self, col: usize) -> f64 {
        self.origin.0 + col as f64 * self.res_x
    }

    /// Physical y of row `row`, µm.
    pub fn y_at(&self, row: usize) -> f64 {
        self.origin.1 + row as f64 * self.res_y
    }

    /// Fractional column index of physical position `x`.
    pub fn column_of(&self, x: f64) -> f64 {
        (x - self.origin.0) / self.res_x
    }

    pub fn row_of(&self, y: f64) -> f64 {
        (y - self.origin.1) / self.res_y
    }

    /// Present values, in row-major order.
    pub fn present_values(&self) -> Vec<f64> {
        self.heights.iter().flatten().copied().collect()
    }

    /// Sample standard deviation of present cells (`None` with < 2 cells).
    pub fn sd(&self) -> Option<f64> {
        let v = self.present_values();
        crate::stats::sample_sd(&v)
    }
}
