//! Typed context-information maps: per-class prior probability sets for a
//! Bayes classifier, orientation-initialization maps (palette-indexed so the
//! image round trip stays lossless), and clustering search-radius maps.

use std::path::Path;

use thiserror::Error;

use crate::format::{load_native_file, FormatError};
use crate::grid::{is_unknown, GridError, GridSpec, InformationMap, WorldPosition};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("class prior set wants at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("class `{class}` uses a different grid spec")]
    SpecMismatch { class: String },
    #[error("class map `{class}` must range within [0, 1]")]
    InvalidPriorRange { class: String },
    #[error("cell ({row}, {col}) holds value {value} absent from the palette")]
    PaletteMiss { row: usize, col: usize, value: f64 },
    #[error("palette line {line}: {reason}")]
    PaletteParse { line: usize, reason: String },
    #[error("palette index {0} declared twice")]
    DuplicatePaletteIndex(u8),
    #[error("orientation {0} outside [-pi, pi)")]
    InvalidOrientation(f64),
    #[error("radius map must be nonnegative, vmin is {0}")]
    NegativeRadius(f64),
    #[error("manifest line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Class priors
// ---------------------------------------------------------------------------

/// Per-class a-priori probability maps over one shared grid. Where every
/// class is known, the values of one position must sum to one.
#[derive(Debug, Clone)]
pub struct ClassPriorSet {
    classes: Vec<String>,
    maps: Vec<InformationMap>,
}

/// A cell whose known class values do not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorViolation {
    pub row: usize,
    pub col: usize,
    pub sum: f64,
}

impl ClassPriorSet {
    pub fn new(entries: Vec<(String, InformationMap)>) -> Result<Self, ContextError> {
        if entries.len() < 2 {
            return Err(ContextError::TooFewClasses(entries.len()));
        }
        let spec = *entries[0].1.spec();
        for (class, map) in &entries {
            if *map.spec() != spec {
                return Err(ContextError::SpecMismatch {
                    class: class.clone(),
                });
            }
            if map.vmin() < 0.0 || map.vmax() > 1.0 {
                return Err(ContextError::InvalidPriorRange {
                    class: class.clone(),
                });
            }
        }
        let (classes, maps) = entries.into_iter().unzip();
        Ok(Self { classes, maps })
    }

    /// Manifest: one `label path` line per class, paths relative to
    /// `base_dir`.
    pub fn load_manifest(text: &str, base_dir: impl AsRef<Path>) -> Result<Self, ContextError> {
        let base_dir = base_dir.as_ref();
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (label, path) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| ContextError::ManifestParse {
                    line: idx + 1,
                    reason: format!("expected `label path`, got `{line}`"),
                })?;
            entries.push((label.to_string(), load_native_file(base_dir.join(path.trim()))?));
        }
        Self::new(entries)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn spec(&self) -> &GridSpec {
        self.maps[0].spec()
    }

    /// Every cell where all classes are known and the sum strays from one by
    /// more than `tolerance`. An empty report means the set is valid.
    pub fn validate(&self, tolerance: f64) -> Vec<PriorViolation> {
        let spec = self.spec();
        let mut violations = Vec::new();
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                let mut sum = 0.0;
                let mut all_known = true;
                for map in &self.maps {
                    let v = map.get(row, col).unwrap();
                    if is_unknown(v) {
                        all_known = false;
                        break;
                    }
                    sum += v;
                }
                if all_known && (sum - 1.0).abs() > tolerance {
                    violations.push(PriorViolation { row, col, sum });
                }
            }
        }
        violations
    }

    /// Per-class prior distribution at a position. Unknown cells (in any
    /// class) fall back to the uniform distribution, keeping the classifier
    /// running off the painted area; out-of-grid lookups renormalize whatever
    /// the out-of-bounds policies return.
    pub fn prior_at(&self, p: WorldPosition) -> Vec<f64> {
        let k = self.maps.len();
        let uniform = vec![1.0 / k as f64; k];
        let in_grid = self.spec().world_to_cell(p).is_some();
        let mut values = Vec::with_capacity(k);
        for map in &self.maps {
            match map.value_at(p) {
                Ok(v) if !is_unknown(v) => values.push(v),
                _ => return uniform,
            }
        }
        if in_grid {
            return values;
        }
        let sum: f64 = values.iter().sum();
        if sum > 0.0 {
            values.iter().map(|v| v / sum).collect()
        } else {
            uniform
        }
    }
}

// ---------------------------------------------------------------------------
// Orientation maps
// ---------------------------------------------------------------------------

/// Palette entry: an 8-bit color index standing for one initial orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaletteEntry {
    pub index: u8,
    pub orientation: f64,
}

/// A hand-painted map whose cell values are palette indices; the palette maps
/// each index to a track-initialization orientation.
#[derive(Debug, Clone)]
pub struct OrientationMap {
    palette: Vec<PaletteEntry>,
    map: InformationMap,
}

impl OrientationMap {
    /// Validates up front that every known cell value resolves through the
    /// palette, so later decodes are total.
    pub fn new(palette: Vec<PaletteEntry>, map: InformationMap) -> Result<Self, ContextError> {
        for (i, entry) in palette.iter().enumerate() {
            if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&entry.orientation) {
                return Err(ContextError::InvalidOrientation(entry.orientation));
            }
            if palette[..i].iter().any(|e| e.index == entry.index) {
                return Err(ContextError::DuplicatePaletteIndex(entry.index));
            }
        }
        let result = Self { palette, map };
        let spec = result.map.spec();
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                let v = result.map.get(row, col).unwrap();
                if !is_unknown(v) && result.lookup(v).is_none() {
                    return Err(ContextError::PaletteMiss { row, col, value: v });
                }
            }
        }
        Ok(result)
    }

    fn lookup(&self, value: f64) -> Option<f64> {
        if value.fract() != 0.0 || !(0.0..=255.0).contains(&value) {
            return None;
        }
        let index = value as u8;
        self.palette
            .iter()
            .find(|e| e.index == index)
            .map(|e| e.orientation)
    }

    /// Initial orientation at a position, or `None` where the map holds no
    /// data. A non-unknown cell missing from the palette means the map was
    /// corrupted after validation.
    pub fn orientation_at(&self, p: WorldPosition) -> Result<Option<f64>, ContextError> {
        let value = match self.map.value_at(p) {
            Ok(v) => v,
            Err(_) => return Ok(None),
        };
        if is_unknown(value) {
            return Ok(None);
        }
        match self.lookup(value) {
            Some(orientation) => Ok(Some(orientation)),
            None => Err(ContextError::PaletteMiss {
                row: 0,
                col: 0,
                value,
            }),
        }
    }

    pub fn palette(&self) -> &[PaletteEntry] {
        &self.palette
    }

    pub fn map(&self) -> &InformationMap {
        &self.map
    }
}

/// Palette sidecar: one `index orientation_radians` pair per line.
pub fn parse_palette(text: &str) -> Result<Vec<PaletteEntry>, ContextError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let index = parts
            .next()
            .and_then(|t| t.parse::<u8>().ok())
            .ok_or_else(|| ContextError::PaletteParse {
                line: line_no,
                reason: "expected an 8-bit index".into(),
            })?;
        let orientation = parts
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| ContextError::PaletteParse {
                line: line_no,
                reason: "expected an orientation in radians".into(),
            })?;
        entries.push(PaletteEntry { index, orientation });
    }
    Ok(entries)
}

pub fn palette_text(palette: &[PaletteEntry]) -> String {
    palette
        .iter()
        .map(|e| format!("{} {}\n", e.index, e.orientation))
        .collect()
}

// ---------------------------------------------------------------------------
// Search-radius maps
// ---------------------------------------------------------------------------

/// Position-dependent maximum search radius (meters) for grid-based
/// clustering; values are nonnegative by construction.
#[derive(Debug, Clone)]
pub struct RadiusMap {
    map: InformationMap,
}

impl RadiusMap {
    pub fn new(map: InformationMap) -> Result<Self, ContextError> {
        if map.vmin() < 0.0 {
            return Err(ContextError::NegativeRadius(map.vmin()));
        }
        Ok(Self { map })
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, ContextError> {
        Self::new(load_native_file(path)?)
    }

    /// Search radius at a position, following the map's out-of-bounds policy.
    pub fn radius_at(&self, p: WorldPosition) -> Result<f64, GridError> {
        self.map.value_at(p)
    }

    pub fn map(&self) -> &InformationMap {
        &self.map
    }
}
