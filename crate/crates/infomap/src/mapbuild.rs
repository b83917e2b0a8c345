//! Estimating static sensory maps from recorded detections and ground truth:
//! per-cell detection probability from hit/opportunity counts, per-cell
//! clutter rates from unmatched detections, plus the fill and smoothing steps
//! that precede expert editing.

use std::path::Path;

use thiserror::Error;

use crate::grid::{is_unknown, unknown, GridError, GridSpec, InformationMap, OobPolicy, WorldPosition};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("detection log holds no frames")]
    EmptyLog,
    #[error("frame timestamp {t} does not increase over {prev}")]
    NonIncreasingTimestamp { prev: f64, t: f64 },
    #[error("frame at {timestamp} holds a non-finite position")]
    NonFinitePosition { timestamp: f64 },
    #[error("match radius must be positive, got {0}")]
    InvalidMatchRadius(f64),
    #[error("map has no known cell to fill from")]
    AllUnknown,
    #[error("constant fill {value} outside [{vmin}, {vmax}]")]
    InvalidFill { value: f64, vmin: f64, vmax: f64 },
    #[error("detection log line {line}: {reason}")]
    LogParse { line: usize, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One recorded scan: what the preprocessing reported and, when available,
/// where objects really were.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrame {
    pub timestamp: f64,
    pub detections: Vec<WorldPosition>,
    pub truths: Vec<WorldPosition>,
}

/// Timestamp-ordered recording of detections and ground-truth presences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionLog {
    frames: Vec<LogFrame>,
}

impl DetectionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_frame(&mut self, frame: LogFrame) -> Result<(), BuildError> {
        if let Some(last) = self.frames.last() {
            if frame.timestamp <= last.timestamp {
                return Err(BuildError::NonIncreasingTimestamp {
                    prev: last.timestamp,
                    t: frame.timestamp,
                });
            }
        }
        if !frame.timestamp.is_finite()
            || frame
                .detections
                .iter()
                .chain(&frame.truths)
                .any(|p| !p.is_finite())
        {
            return Err(BuildError::NonFinitePosition {
                timestamp: frame.timestamp,
            });
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn from_frames(frames: Vec<LogFrame>) -> Result<Self, BuildError> {
        let mut log = Self::new();
        for frame in frames {
            log.push_frame(frame)?;
        }
        Ok(log)
    }

    pub fn frames(&self) -> &[LogFrame] {
        &self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Line-oriented text form: `frame <t>` opens a scan, followed by
    /// `det <x> <y>` and `truth <x> <y>` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for frame in &self.frames {
            out.push_str(&format!("frame {}\n", frame.timestamp));
            for d in &frame.detections {
                out.push_str(&format!("det {} {}\n", d.x, d.y));
            }
            for t in &frame.truths {
                out.push_str(&format!("truth {} {}\n", t.x, t.y));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BuildError> {
        let mut log = Self::new();
        let mut current: Option<LogFrame> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let mut number = |name: &str| -> Result<f64, BuildError> {
                parts
                    .next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| BuildError::LogParse {
                        line: line_no,
                        reason: format!("{key}: missing or invalid {name}"),
                    })
            };
            match key {
                "frame" => {
                    let t = number("timestamp")?;
                    if let Some(done) = current.take() {
                        log.push_frame(done)?;
                    }
                    current = Some(LogFrame {
                        timestamp: t,
                        detections: Vec::new(),
                        truths: Vec::new(),
                    });
                }
                "det" | "truth" => {
                    let x = number("x")?;
                    let y = number("y")?;
                    let frame = current.as_mut().ok_or_else(|| BuildError::LogParse {
                        line: line_no,
                        reason: format!("{key} before any frame"),
                    })?;
                    if key == "det" {
                        frame.detections.push(WorldPosition::new(x, y));
                    } else {
                        frame.truths.push(WorldPosition::new(x, y));
                    }
                }
                other => {
                    return Err(BuildError::LogParse {
                        line: line_no,
                        reason: format!("unrecognized key `{other}`"),
                    })
                }
            }
        }
        if let Some(done) = current.take() {
            log.push_frame(done)?;
        }
        Ok(log)
    }

    pub fn save_file(&self, path: impl AsRef<Path>) -> Result<(), BuildError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, BuildError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Per-cell hit and opportunity counters; hits never exceed opportunities.
#[derive(Debug, Clone)]
pub struct CountGrid {
    spec: GridSpec,
    hits: Vec<u32>,
    opportunities: Vec<u32>,
}

impl CountGrid {
    fn new(spec: GridSpec) -> Self {
        Self {
            hits: vec![0; spec.cell_count()],
            opportunities: vec![0; spec.cell_count()],
            spec,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn hits(&self, row: usize, col: usize) -> u32 {
        self.hits[row * self.spec.cols() + col]
    }

    pub fn opportunities(&self, row: usize, col: usize) -> u32 {
        self.opportunities[row * self.spec.cols() + col]
    }
}

/// Greedy nearest-first one-to-one matching of detections to truths within
/// `radius`. Distance ties break toward the smaller detection index, then the
/// smaller truth index.
pub fn match_frame(
    truths: &[WorldPosition],
    detections: &[WorldPosition],
    radius: f64,
) -> FrameMatch {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in truths.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let dist = t.distance_to(d);
            if dist <= radius {
                pairs.push((dist, di, ti));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut truth_used = vec![false; truths.len()];
    let mut det_used = vec![false; detections.len()];
    let mut matches = Vec::new();
    for (_, di, ti) in pairs {
        if !truth_used[ti] && !det_used[di] {
            truth_used[ti] = true;
            det_used[di] = true;
            matches.push((ti, di));
        }
    }
    let unmatched_detections = (0..detections.len()).filter(|&di| !det_used[di]).collect();
    FrameMatch {
        matches,
        unmatched_detections,
    }
}

/// Result of matching one frame: `(truth index, detection index)` pairs plus
/// the detections left unexplained by any truth.
#[derive(Debug, Clone)]
pub struct FrameMatch {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
}

/// Count, for every cell, how often a truth was present (opportunity) and how
/// often a detection within `match_radius` explained it (hit). Truths outside
/// the grid window are skipped.
pub fn accumulate(
    log: &DetectionLog,
    spec: GridSpec,
    match_radius: f64,
) -> Result<CountGrid, BuildError> {
    if log.is_empty() {
        return Err(BuildError::EmptyLog);
    }
    if match_radius <= 0.0 || match_radius.is_nan() {
        return Err(BuildError::InvalidMatchRadius(match_radius));
    }
    let mut counts = CountGrid::new(spec);
    for frame in log.frames() {
        let matched = match_frame(&frame.truths, &frame.detections, match_radius);
        let mut hit = vec![false; frame.truths.len()];
        for &(ti, _) in &matched.matches {
            hit[ti] = true;
        }
        for (ti, truth) in frame.truths.iter().enumerate() {
            if let Some((row, col)) = spec.world_to_cell(*truth) {
                let idx = row * spec.cols() + col;
                counts.opportunities[idx] += 1;
                if hit[ti] {
                    counts.hits[idx] += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Detection probability per cell: hits over opportunities wherever at least
/// `min_opportunities` truths were seen, the unknown marker elsewhere.
pub fn estimate_pd(counts: &CountGrid, min_opportunities: u32) -> InformationMap {
    let min_opportunities = min_opportunities.max(1);
    let spec = *counts.spec();
    let values: Vec<f64> = counts
        .hits
        .iter()
        .zip(&counts.opportunities)
        .map(|(&h, &n)| {
            if n >= min_opportunities {
                h as f64 / n as f64
            } else {
                unknown()
            }
        })
        .collect();
    InformationMap::from_values(spec, values, 0.0, 1.0, OobPolicy::DefaultValue(0.0))
        .expect("ratios lie in [0, 1]")
}

/// Per-cell rate of unmatched detections per frame. The map range tops out at
/// the observed maximum (1.0 when no clutter was seen at all, to keep the
/// range valid).
pub fn estimate_clutter(
    log: &DetectionLog,
    spec: GridSpec,
    match_radius: f64,
) -> Result<InformationMap, BuildError> {
    if log.is_empty() {
        return Err(BuildError::EmptyLog);
    }
    if match_radius <= 0.0 || match_radius.is_nan() {
        return Err(BuildError::InvalidMatchRadius(match_radius));
    }
    let mut counts = vec![0u32; spec.cell_count()];
    for frame in log.frames() {
        let matched = match_frame(&frame.truths, &frame.detections, match_radius);
        for &di in &matched.unmatched_detections {
            if let Some((row, col)) = spec.world_to_cell(frame.detections[di]) {
                counts[row * spec.cols() + col] += 1;
            }
        }
    }
    let n_frames = log.frames().len() as f64;
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 / n_frames).collect();
    let observed_max = values.iter().copied().fold(0.0_f64, f64::max);
    let vmax = if observed_max > 0.0 { observed_max } else { 1.0 };
    Ok(InformationMap::from_values(
        spec,
        values,
        0.0,
        vmax,
        OobPolicy::DefaultValue(0.0),
    )?)
}

/// How [`fill_unknown`] replaces unknown cells.
#[derive(Debug, Clone, Copy)]
pub enum FillMode {
    /// Value of the nearest known cell (Euclidean cell distance; ties prefer
    /// the smaller row, then the smaller column).
    Nearest,
    /// A constant within the map range.
    Constant(f64),
}

pub fn fill_unknown(map: &InformationMap, mode: FillMode) -> Result<InformationMap, BuildError> {
    let mut out = map.clone();
    let spec = *map.spec();
    match mode {
        FillMode::Constant(v) => {
            if !(v >= map.vmin() && v <= map.vmax()) {
                return Err(BuildError::InvalidFill {
                    value: v,
                    vmin: map.vmin(),
                    vmax: map.vmax(),
                });
            }
            for row in 0..spec.rows() {
                for col in 0..spec.cols() {
                    if is_unknown(map.get(row, col).unwrap()) {
                        out.set_cell(row, col, v)?;
                    }
                }
            }
        }
        FillMode::Nearest => {
            if map.known_count() == 0 {
                return Err(BuildError::AllUnknown);
            }
            for row in 0..spec.rows() {
                for col in 0..spec.cols() {
                    if is_unknown(map.get(row, col).unwrap()) {
                        let v = nearest_known(map, row, col);
                        out.set_cell(row, col, v)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Expanding-ring search for the nearest known cell. A ring at Chebyshev
/// radius k cannot beat a candidate closer than k, which bounds the scan.
fn nearest_known(map: &InformationMap, row: usize, col: usize) -> f64 {
    let spec = map.spec();
    let (rows, cols) = (spec.rows() as i64, spec.cols() as i64);
    let (r0, c0) = (row as i64, col as i64);
    // (squared distance, row, col) of the best candidate so far
    let mut best: Option<(i64, i64, i64)> = None;
    let max_ring = rows.max(cols);
    for k in 0..=max_ring {
        if let Some((d2, _, _)) = best {
            if k * k > d2 {
                break;
            }
        }
        let mut consider = |r: i64, c: i64| {
            if r < 0 || r >= rows || c < 0 || c >= cols {
                return;
            }
            let v = map.get(r as usize, c as usize).unwrap();
            if is_unknown(v) {
                return;
            }
            let d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
            let candidate = (d2, r, c);
            if best.is_none_or(|b| candidate < b) {
                best = Some(candidate);
            }
        };
        if k == 0 {
            consider(r0, c0);
            continue;
        }
        for c in (c0 - k)..=(c0 + k) {
            consider(r0 - k, c);
            consider(r0 + k, c);
        }
        for r in (r0 - k + 1)..=(r0 + k - 1) {
            consider(r, c0 - k);
            consider(r, c0 + k);
        }
    }
    let (_, r, c) = best.expect("caller guarantees at least one known cell");
    map.get(r as usize, c as usize).unwrap()
}

/// Box mean over the known cells of a `(2k+1)^2` window. Unknown cells
/// neither contribute nor get overwritten; results clamp to the map range.
pub fn smooth(map: &InformationMap, kernel_radius: usize) -> InformationMap {
    if kernel_radius == 0 {
        return map.clone();
    }
    let spec = *map.spec();
    let (rows, cols) = (spec.rows() as i64, spec.cols() as i64);
    let k = kernel_radius as i64;
    let mut out = map.clone();
    for row in 0..rows {
        for col in 0..cols {
            if is_unknown(map.get(row as usize, col as usize).unwrap()) {
                continue;
            }
            let mut sum = 0.0;
            let mut n = 0usize;
            for r in (row - k).max(0)..=(row + k).min(rows - 1) {
                for c in (col - k).max(0)..=(col + k).min(cols - 1) {
                    let v = map.get(r as usize, c as usize).unwrap();
                    if !is_unknown(v) {
                        sum += v;
                        n += 1;
                    }
                }
            }
            let mean = (sum / n as f64).clamp(map.vmin(), map.vmax());
            out.set_cell(row as usize, col as usize, mean)
                .expect("clamped mean is in range");
        }
    }
    out
}
