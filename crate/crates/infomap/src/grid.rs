//! The Information Map value grid: a 2-D matrix of real values with frame
//! metadata (resolution, origin, Cartesian or polar layout), nearest-cell
//! lookup and an explicit out-of-bounds policy.
//!
//! Cells may hold the unknown marker (NaN) meaning "no data recorded here";
//! consumers decide how to fall back.

use thiserror::Error;

/// Sentinel for cells without data. Stored as NaN; use [`is_unknown`] to test.
pub fn unknown() -> f64 {
    f64::NAN
}

/// True if `value` is the unknown marker.
pub fn is_unknown(value: f64) -> bool {
    value.is_nan()
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid value range: vmin {vmin} must be below vmax {vmax}")]
    InvalidRange { vmin: f64, vmax: f64 },
    #[error("fill value {value} outside [{vmin}, {vmax}]")]
    InvalidFill { value: f64, vmin: f64, vmax: f64 },
    #[error("out-of-bounds default {value} outside [{vmin}, {vmax}]")]
    InvalidOobDefault { value: f64, vmin: f64, vmax: f64 },
    #[error("value {value} at cell ({row}, {col}) outside [{vmin}, {vmax}]")]
    ValueOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        vmin: f64,
        vmax: f64,
    },
    #[error("cell ({row}, {col}) outside a {rows}x{cols} grid")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("position lies outside the grid")]
    OutOfBounds,
    #[error("value count {got} does not match {rows}x{cols} grid")]
    ValueCountMismatch { got: usize, rows: usize, cols: usize },
}

/// A position in the vehicle frame: x forward, y left, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPosition {
    pub x: f64,
    pub y: f64,
}

impl WorldPosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: &WorldPosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Grid layout and resolution.
///
/// Cartesian grids store meters per cell; polar grids store one range bin
/// size (meters) and one bearing bin size (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Cartesian { cell_size: f64 },
    Polar { range_bin: f64, bearing_bin: f64 },
}

impl Frame {
    fn validate(&self) -> Result<(), GridError> {
        let ok = match *self {
            Frame::Cartesian { cell_size } => cell_size.is_finite() && cell_size > 0.0,
            Frame::Polar {
                range_bin,
                bearing_bin,
            } => {
                range_bin.is_finite()
                    && range_bin > 0.0
                    && bearing_bin.is_finite()
                    && bearing_bin > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GridError::InvalidSpec(
                "resolution components must be positive and finite".into(),
            ))
        }
    }
}

/// Grid dimensions plus the map-coordinate location of the world origin.
///
/// The origin cell may lie outside the stored window; world-to-cell mapping
/// stays exact for any origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    origin_row: i64,
    origin_col: i64,
    frame: Frame,
}

impl GridSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        origin_row: i64,
        origin_col: i64,
        frame: Frame,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::InvalidSpec(
                "rows and cols must be at least 1".into(),
            ));
        }
        frame.validate()?;
        Ok(Self {
            rows,
            cols,
            origin_row,
            origin_col,
            frame,
        })
    }

    pub fn cartesian(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin_row: i64,
        origin_col: i64,
    ) -> Result<Self, GridError> {
        Self::new(rows, cols, origin_row, origin_col, Frame::Cartesian { cell_size })
    }

    /// Polar grid with range bins starting at zero and bearing bins covering
    /// [-pi, pi) from column 0 upward. The origin fields are unused by the
    /// polar transform and default to zero.
    pub fn polar(
        rows: usize,
        cols: usize,
        range_bin: f64,
        bearing_bin: f64,
    ) -> Result<Self, GridError> {
        Self::new(
            rows,
            cols,
            0,
            0,
            Frame::Polar {
                range_bin,
                bearing_bin,
            },
        )
    }

    /// Smallest Cartesian grid whose cell centers cover the rectangle
    /// `[x_min, x_max] x [y_min, y_max]` at the given cell size.
    pub fn cartesian_covering(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        cell_size: f64,
    ) -> Result<Self, GridError> {
        if !(x_min <= x_max && y_min <= y_max) {
            return Err(GridError::InvalidSpec("empty covering rectangle".into()));
        }
        Frame::Cartesian { cell_size }.validate()?;
        let min_col = (x_min / cell_size).round() as i64;
        let max_col = (x_max / cell_size).round() as i64;
        let min_row_y = (y_min / cell_size).round() as i64;
        let max_row_y = (y_max / cell_size).round() as i64;
        Self::cartesian(
            (max_row_y - min_row_y + 1) as usize,
            (max_col - min_col + 1) as usize,
            cell_size,
            max_row_y,
            -min_col,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn origin_row(&self) -> i64 {
        self.origin_row
    }

    pub fn origin_col(&self) -> i64 {
        self.origin_col
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// World area of one cell in square meters. Polar bin area grows with
    /// the range index.
    pub fn cell_area(&self, row: usize) -> f64 {
        match self.frame {
            Frame::Cartesian { cell_size } => cell_size * cell_size,
            Frame::Polar {
                range_bin,
                bearing_bin,
            } => {
                let r0 = row as f64 * range_bin;
                let r1 = (row + 1) as f64 * range_bin;
                0.5 * bearing_bin * (r1 * r1 - r0 * r0)
            }
        }
    }

    /// Raw (possibly out-of-window) cell index for a finite position.
    fn raw_cell(&self, p: WorldPosition) -> Option<(i64, i64)> {
        if !p.is_finite() {
            return None;
        }
        match self.frame {
            Frame::Cartesian { cell_size } => {
                let col = self.origin_col + (p.x / cell_size).round() as i64;
                let row = self.origin_row - (p.y / cell_size).round() as i64;
                Some((row, col))
            }
            Frame::Polar {
                range_bin,
                bearing_bin,
            } => {
                let range = p.x.hypot(p.y);
                // atan2 yields (-pi, pi]; bearing bins want [-pi, pi).
                let mut bearing = p.y.atan2(p.x);
                if bearing >= std::f64::consts::PI {
                    bearing -= 2.0 * std::f64::consts::PI;
                }
                let row = (range / range_bin).floor() as i64;
                let col = ((bearing + std::f64::consts::PI) / bearing_bin).floor() as i64;
                Some((row, col))
            }
        }
    }

    /// Cell index containing `p`, or `None` when the index falls outside the
    /// stored window (or `p` is not finite).
    pub fn world_to_cell(&self, p: WorldPosition) -> Option<(usize, usize)> {
        let (row, col) = self.raw_cell(p)?;
        if row >= 0 && (row as usize) < self.rows && col >= 0 && (col as usize) < self.cols {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    /// Nearest stored cell to `p`, clamping out-of-window indices.
    /// `None` only for non-finite positions.
    pub fn nearest_cell(&self, p: WorldPosition) -> Option<(usize, usize)> {
        let (row, col) = self.raw_cell(p)?;
        Some((
            row.clamp(0, self.rows as i64 - 1) as usize,
            col.clamp(0, self.cols as i64 - 1) as usize,
        ))
    }

    /// World position of the center of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> WorldPosition {
        match self.frame {
            Frame::Cartesian { cell_size } => WorldPosition::new(
                (col as i64 - self.origin_col) as f64 * cell_size,
                (self.origin_row - row as i64) as f64 * cell_size,
            ),
            Frame::Polar {
                range_bin,
                bearing_bin,
            } => {
                let range = (row as f64 + 0.5) * range_bin;
                let bearing = (col as f64 + 0.5) * bearing_bin - std::f64::consts::PI;
                WorldPosition::new(range * bearing.cos(), range * bearing.sin())
            }
        }
    }
}

/// What a lookup returns for positions outside the stored window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OobPolicy {
    /// Return the carried default value.
    DefaultValue(f64),
    /// Return the value of the nearest stored cell.
    NearestCell,
    /// Fail with [`GridError::OutOfBounds`].
    Error,
}

/// A discretized position-dependent parameter: one value per grid cell,
/// bounded to `[vmin, vmax]`, with NaN marking cells without data.
///
/// Immutable after construction by convention; mutation requires exclusive
/// ownership, so shared references are always safe to read concurrently.
#[derive(Debug, Clone)]
pub struct InformationMap {
    spec: GridSpec,
    values: Vec<f64>,
    vmin: f64,
    vmax: f64,
    oob: OobPolicy,
}

impl InformationMap {
    /// Map with every cell set to `fill`. The fill may be [`unknown`].
    pub fn new(
        spec: GridSpec,
        fill: f64,
        vmin: f64,
        vmax: f64,
        oob: OobPolicy,
    ) -> Result<Self, GridError> {
        Self::validate_range(vmin, vmax)?;
        Self::validate_oob(&oob, vmin, vmax)?;
        if !is_unknown(fill) && !(fill >= vmin && fill <= vmax) {
            return Err(GridError::InvalidFill {
                value: fill,
                vmin,
                vmax,
            });
        }
        let fill = canonical(fill);
        Ok(Self {
            values: vec![fill; spec.cell_count()],
            spec,
            vmin,
            vmax,
            oob,
        })
    }

    /// Map from row-major values, rejecting any value outside the range that
    /// is not the unknown marker.
    pub fn from_values(
        spec: GridSpec,
        values: Vec<f64>,
        vmin: f64,
        vmax: f64,
        oob: OobPolicy,
    ) -> Result<Self, GridError> {
        Self::validate_range(vmin, vmax)?;
        Self::validate_oob(&oob, vmin, vmax)?;
        if values.len() != spec.cell_count() {
            return Err(GridError::ValueCountMismatch {
                got: values.len(),
                rows: spec.rows(),
                cols: spec.cols(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !is_unknown(v) && !(v >= vmin && v <= vmax) {
                return Err(GridError::ValueOutOfRange {
                    row: i / spec.cols(),
                    col: i % spec.cols(),
                    value: v,
                    vmin,
                    vmax,
                });
            }
        }
        let values = values.into_iter().map(canonical).collect();
        Ok(Self {
            spec,
            values,
            vmin,
            vmax,
            oob,
        })
    }

    fn validate_range(vmin: f64, vmax: f64) -> Result<(), GridError> {
        if vmin.is_finite() && vmax.is_finite() && vmin < vmax {
            Ok(())
        } else {
            Err(GridError::InvalidRange { vmin, vmax })
        }
    }

    fn validate_oob(oob: &OobPolicy, vmin: f64, vmax: f64) -> Result<(), GridError> {
        if let OobPolicy::DefaultValue(d) = *oob {
            if !(d >= vmin && d <= vmax) {
                return Err(GridError::InvalidOobDefault {
                    value: d,
                    vmin,
                    vmax,
                });
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn vmin(&self) -> f64 {
        self.vmin
    }

    pub fn vmax(&self) -> f64 {
        self.vmax
    }

    pub fn oob_policy(&self) -> OobPolicy {
        self.oob
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row < self.spec.rows() && col < self.spec.cols() {
            Some(self.values[row * self.spec.cols() + col])
        } else {
            None
        }
    }

    pub fn set_cell(&mut self, row: usize, col: usize, value: f64) -> Result<(), GridError> {
        if row >= self.spec.rows() || col >= self.spec.cols() {
            return Err(GridError::IndexOutOfRange {
                row,
                col,
                rows: self.spec.rows(),
                cols: self.spec.cols(),
            });
        }
        if !is_unknown(value) && !(value >= self.vmin && value <= self.vmax) {
            return Err(GridError::ValueOutOfRange {
                row,
                col,
                value,
                vmin: self.vmin,
                vmax: self.vmax,
            });
        }
        self.values[row * self.spec.cols() + col] = canonical(value);
        Ok(())
    }

    /// Nearest-cell value at `p` (no interpolation). Out-of-window positions
    /// follow the map's policy; unknown cells return the unknown marker.
    pub fn value_at(&self, p: WorldPosition) -> Result<f64, GridError> {
        if let Some((row, col)) = self.spec.world_to_cell(p) {
            return Ok(self.values[row * self.spec.cols() + col]);
        }
        match self.oob {
            OobPolicy::DefaultValue(d) => Ok(d),
            OobPolicy::NearestCell => {
                let (row, col) = self.spec.nearest_cell(p).ok_or(GridError::OutOfBounds)?;
                Ok(self.values[row * self.spec.cols() + col])
            }
            OobPolicy::Error => Err(GridError::OutOfBounds),
        }
    }

    /// Mean over all known cells, or `None` for an all-unknown map.
    pub fn mean_known(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &v in &self.values {
            if !is_unknown(v) {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            None
        } else {
            Some(sum / n as f64)
        }
    }

    pub fn known_count(&self) -> usize {
        self.values.iter().filter(|v| !is_unknown(**v)).count()
    }
}

/// Canonicalize NaN payloads so unknown cells compare bit-equal.
fn canonical(v: f64) -> f64 {
    if v.is_nan() {
        f64::NAN
    } else {
        v
    }
}

impl PartialEq for InformationMap {
    /// Field-for-field, cell-for-cell bit equality (unknown == unknown).
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.vmin.to_bits() == other.vmin.to_bits()
            && self.vmax.to_bits() == other.vmax.to_bits()
            && self.oob == other.oob
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
