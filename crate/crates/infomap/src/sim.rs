//! Deterministic scenario simulator and metric suite: generates detection
//! logs from configured sensors and trajectories, reproduces the two-sensor
//! occlusion experiment (a track crossing a blind spot survives only with a
//! combined persistence map), and scores runs with the OSPA metric.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::format::{load_native_file, FormatError};
use crate::grid::{
    is_unknown, unknown, GridError, GridSpec, InformationMap, OobPolicy, WorldPosition,
};
use crate::hierarchy::{
    Combinator, DynamicObjectMap, Hierarchy, HierarchyError, NodeSource, ValueProvider,
};
use crate::mapbuild::{BuildError, DetectionLog, LogFrame};
use crate::phd::{
    birth_from_measurements, extract, predict, prune_merge, update, Fallbacks, FilterConfig,
    GaussianMixture, Measurement, PhdError,
};

/// Disk radius used to suppress births around already-extracted tracks.
const BIRTH_SUPPRESSION_RADIUS: f64 = 2.0;
/// Expected-cardinality level a track must hold through the occlusion.
const SURVIVAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario config `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Phd(#[from] PhdError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Axis-aligned rectangle, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn contains(&self, p: WorldPosition) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }
}

/// Constant-speed motion along a waypoint polyline, parked at the final
/// waypoint once the polyline is exhausted.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub speed: f64,
    pub waypoints: Vec<WorldPosition>,
}

impl Trajectory {
    pub fn position_at(&self, t: f64) -> WorldPosition {
        let mut remaining = self.speed * t.max(0.0);
        let mut pos = self.waypoints[0];
        for next in &self.waypoints[1..] {
            let segment = pos.distance_to(next);
            if segment == 0.0 {
                pos = *next;
                continue;
            }
            if remaining <= segment {
                let f = remaining / segment;
                return WorldPosition::new(
                    pos.x + f * (next.x - pos.x),
                    pos.y + f * (next.y - pos.y),
                );
            }
            remaining -= segment;
            pos = *next;
        }
        pos
    }
}

/// One sensor's detection-probability source: a rectangular field of view
/// with constant probability inside, or a full map.
#[derive(Debug, Clone)]
pub enum SensorFov {
    Rect { detection: f64, region: Rect },
    Map(InformationMap),
}

impl SensorFov {
    /// Detection probability seen by the generator; unknown and out-of-map
    /// positions detect nothing.
    fn detection_probability(&self, p: WorldPosition) -> f64 {
        match self {
            SensorFov::Rect { detection, region } => {
                if region.contains(p) {
                    *detection
                } else {
                    0.0
                }
            }
            SensorFov::Map(map) => match map.value_at(p) {
                Ok(v) if !is_unknown(v) => v.clamp(0.0, 1.0),
                _ => 0.0,
            },
        }
    }
}

/// Declarative scenario: sensors, trajectories, clutter, noise, and the
/// occlusion geometry for the persistence experiment. A fixed seed makes
/// every derived artifact byte-identical.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub duration: usize,
    pub dt: f64,
    pub seed: u64,
    pub noise_std: f64,
    pub clutter_rate: f64,
    pub clutter_region: Option<Rect>,
    pub grid_cell: f64,
    pub grid_region: Option<Rect>,
    pub sensors: Vec<SensorFov>,
    pub trajectories: Vec<Trajectory>,
    pub occlusion: Option<Rect>,
    pub persistence_in_fov: f64,
    pub persistence_occlusion: f64,
    pub persistence_fallback: f64,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 1,
            dt: 0.5,
            seed: 0,
            noise_std: 0.0,
            clutter_rate: 0.0,
            clutter_region: None,
            grid_cell: 0.5,
            grid_region: None,
            sensors: Vec::new(),
            trajectories: Vec::new(),
            occlusion: None,
            persistence_in_fov: 0.99,
            persistence_occlusion: 0.999,
            persistence_fallback: 0.8,
            ospa_cutoff: 5.0,
            ospa_order: 1.0,
        }
    }
}

impl ScenarioConfig {
    /// Shipped default geometry for the occlusion experiment: two 12 m fields
    /// of view separated by a 6 m gap, one target crossing at 2 m/s, sampled
    /// every 0.5 s. The gap is long enough that a track coasting on the
    /// fallback persistence demonstrably dies.
    pub fn occlusion_default() -> Self {
        Self {
            duration: 30,
            dt: 0.5,
            seed: 7,
            noise_std: 0.05,
            sensors: vec![
                SensorFov::Rect {
                    detection: 0.95,
                    region: Rect::new(0.0, 0.0, 12.0, 10.0),
                },
                SensorFov::Rect {
                    detection: 0.95,
                    region: Rect::new(18.0, 0.0, 30.0, 10.0),
                },
            ],
            trajectories: vec![Trajectory {
                speed: 2.0,
                waypoints: vec![WorldPosition::new(1.0, 5.0), WorldPosition::new(29.0, 5.0)],
            }],
            occlusion: Some(Rect::new(12.0, 0.0, 18.0, 10.0)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.duration < 1 {
            return Err(invalid("duration", "must be at least 1 scan"));
        }
        if self.dt <= 0.0 || self.dt.is_nan() {
            return Err(invalid("dt", "must be positive"));
        }
        if self.noise_std < 0.0 || self.noise_std.is_nan() {
            return Err(invalid("noise", "must be nonnegative"));
        }
        if self.clutter_rate < 0.0 || self.clutter_rate.is_nan() {
            return Err(invalid("clutter_rate", "must be nonnegative"));
        }
        if self.clutter_rate > 0.0 {
            match self.clutter_region {
                Some(r) if r.is_valid() && r.area() > 0.0 => {}
                Some(_) => return Err(invalid("clutter_region", "degenerate rectangle")),
                None => {
                    return Err(invalid(
                        "clutter_region",
                        "required when clutter_rate is positive",
                    ))
                }
            }
        }
        if self.grid_cell <= 0.0 || self.grid_cell.is_nan() {
            return Err(invalid("grid_cell", "must be positive"));
        }
        for (i, sensor) in self.sensors.iter().enumerate() {
            if let SensorFov::Rect { detection, region } = sensor {
                if !(0.0..=1.0).contains(detection) {
                    return Err(invalid(
                        &format!("sensor[{i}].detection"),
                        "must lie in [0, 1]",
                    ));
                }
                if !region.is_valid() {
                    return Err(invalid(&format!("sensor[{i}].region"), "degenerate rectangle"));
                }
            }
        }
        for (i, trajectory) in self.trajectories.iter().enumerate() {
            if trajectory.waypoints.is_empty() {
                return Err(invalid(
                    &format!("trajectory[{i}].waypoints"),
                    "wants at least one waypoint",
                ));
            }
            if trajectory.speed <= 0.0 || trajectory.speed.is_nan() {
                return Err(invalid(&format!("trajectory[{i}].speed"), "must be positive"));
            }
            if trajectory.waypoints.iter().any(|w| !w.is_finite()) {
                return Err(invalid(
                    &format!("trajectory[{i}].waypoints"),
                    "positions must be finite",
                ));
            }
        }
        if let Some(r) = self.occlusion {
            if !r.is_valid() {
                return Err(invalid("occlusion", "degenerate rectangle"));
            }
        }
        for (field, value) in [
            ("persistence_in_fov", self.persistence_in_fov),
            ("persistence_occlusion", self.persistence_occlusion),
            ("persistence_fallback", self.persistence_fallback),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(field, "must lie in [0, 1]"));
            }
        }
        if self.ospa_cutoff <= 0.0 || self.ospa_cutoff.is_nan() {
            return Err(invalid("ospa_cutoff", "must be positive"));
        }
        if self.ospa_order < 1.0 || self.ospa_order.is_nan() {
            return Err(invalid("ospa_order", "must be at least 1"));
        }
        Ok(())
    }

    /// Experiment grid: the configured region, or the bounding box of all
    /// rectangles and waypoints inflated by two meters.
    pub fn grid_spec(&self) -> Result<GridSpec, SimError> {
        let region = match self.grid_region {
            Some(r) if r.is_valid() => r,
            Some(_) => return Err(invalid("grid_region", "degenerate rectangle")),
            None => self
                .derived_region()
                .ok_or_else(|| invalid("grid_region", "cannot be derived; set it explicitly"))?,
        };
        Ok(GridSpec::cartesian_covering(
            region.x_min,
            region.x_max,
            region.y_min,
            region.y_max,
            self.grid_cell,
        )?)
    }

    fn derived_region(&self) -> Option<Rect> {
        let mut bounds: Option<Rect> = None;
        let mut include = |x: f64, y: f64| {
            bounds = Some(match bounds {
                None => Rect::new(x, y, x, y),
                Some(b) => Rect::new(
                    b.x_min.min(x),
                    b.y_min.min(y),
                    b.x_max.max(x),
                    b.y_max.max(y),
                ),
            });
        };
        for sensor in &self.sensors {
            if let SensorFov::Rect { region, .. } = sensor {
                include(region.x_min, region.y_min);
                include(region.x_max, region.y_max);
            }
        }
        for trajectory in &self.trajectories {
            for w in &trajectory.waypoints {
                include(w.x, w.y);
            }
        }
        if let Some(r) = self.occlusion {
            include(r.x_min, r.y_min);
            include(r.x_max, r.y_max);
        }
        if let Some(r) = self.clutter_region {
            include(r.x_min, r.y_min);
            include(r.x_max, r.y_max);
        }
        bounds.map(|b| Rect::new(b.x_min - 2.0, b.y_min - 2.0, b.x_max + 2.0, b.y_max + 2.0))
    }

    /// Parse the line-oriented scenario file; map sensor paths resolve
    /// relative to `base_dir`.
    pub fn parse(text: &str, base_dir: impl AsRef<Path>) -> Result<Self, SimError> {
        let base_dir = base_dir.as_ref();
        let mut config = Self::default();
        let mut duration_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let bad = |reason: String| SimError::InvalidConfig {
                field: format!("{key} (line {line_no})"),
                reason,
            };
            let floats = |raw: &str| -> Result<Vec<f64>, SimError> {
                raw.split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| bad(format!("invalid number `{t}`")))
                    })
                    .collect()
            };
            let one_float = |raw: &str| -> Result<f64, SimError> {
                match floats(raw)?.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(bad("wants exactly one number".into())),
                }
            };
            let rect_of = |raw: &str| -> Result<Rect, SimError> {
                let v = floats(raw)?;
                if v.len() != 4 {
                    return Err(bad("wants `x_min y_min x_max y_max`".into()));
                }
                Ok(Rect::new(v[0], v[1], v[2], v[3]))
            };
            match key {
                "duration" => {
                    config.duration = rest
                        .parse()
                        .map_err(|_| bad(format!("invalid scan count `{rest}`")))?;
                    duration_seen = true;
                }
                "seed" => {
                    config.seed = rest
                        .parse()
                        .map_err(|_| bad(format!("invalid seed `{rest}`")))?;
                }
                "dt" => config.dt = one_float(rest)?,
                "noise" => config.noise_std = one_float(rest)?,
                "clutter_rate" => config.clutter_rate = one_float(rest)?,
                "grid_cell" => config.grid_cell = one_float(rest)?,
                "persistence_in_fov" => config.persistence_in_fov = one_float(rest)?,
                "persistence_occlusion" => config.persistence_occlusion = one_float(rest)?,
                "persistence_fallback" => config.persistence_fallback = one_float(rest)?,
                "ospa_cutoff" => config.ospa_cutoff = one_float(rest)?,
                "ospa_order" => config.ospa_order = one_float(rest)?,
                "clutter_region" => config.clutter_region = Some(rect_of(rest)?),
                "grid_region" => config.grid_region = Some(rect_of(rest)?),
                "occlusion" => config.occlusion = Some(rect_of(rest)?),
                "sensor" => {
                    let (kind, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                    match kind {
                        "rect" => {
                            let v = floats(args)?;
                            if v.len() != 5 {
                                return Err(bad("rect wants `pd x_min y_min x_max y_max`".into()));
                            }
                            config.sensors.push(SensorFov::Rect {
                                detection: v[0],
                                region: Rect::new(v[1], v[2], v[3], v[4]),
                            });
                        }
                        "map" => {
                            let map = load_native_file(base_dir.join(args.trim()))?;
                            config.sensors.push(SensorFov::Map(map));
                        }
                        other => return Err(bad(format!("sensor kind must be rect|map, got `{other}`"))),
                    }
                }
                "trajectory" => {
                    let v = floats(rest)?;
                    if v.len() < 3 || (v.len() - 1) % 2 != 0 {
                        return Err(bad("wants `speed x0 y0 [x1 y1 ...]`".into()));
                    }
                    config.trajectories.push(Trajectory {
                        speed: v[0],
                        waypoints: v[1..]
                            .chunks(2)
                            .map(|c| WorldPosition::new(c[0], c[1]))
                            .collect(),
                    });
                }
                other => {
                    return Err(SimError::InvalidConfig {
                        field: format!("line {line_no}"),
                        reason: format!("unrecognized key `{other}`"),
                    })
                }
            }
        }
        if !duration_seen {
            return Err(invalid("duration", "missing"));
        }
        config.validate()?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Detection log generation
// ---------------------------------------------------------------------------

/// Simulate the scenario into a detection log: truths advance along their
/// polylines; each sensor detects each truth with the probability its map
/// gives at that position; Poisson clutter falls uniformly over the clutter
/// region. Fully reproducible from the seed.
pub fn generate(config: &ScenarioConfig) -> Result<DetectionLog, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = if config.noise_std > 0.0 {
        Some(Normal::new(0.0, config.noise_std).expect("validated std dev"))
    } else {
        None
    };
    let clutter = if config.clutter_rate > 0.0 {
        Some((
            Poisson::new(config.clutter_rate).expect("validated rate"),
            config.clutter_region.expect("validated region"),
        ))
    } else {
        None
    };

    let mut log = DetectionLog::new();
    for scan in 0..config.duration {
        let t = scan as f64 * config.dt;
        let truths: Vec<WorldPosition> = config
            .trajectories
            .iter()
            .map(|trajectory| trajectory.position_at(t))
            .collect();
        let mut detections = Vec::new();
        for sensor in &config.sensors {
            for truth in &truths {
                if rng.gen::<f64>() < sensor.detection_probability(*truth) {
                    let (dx, dy) = match &noise {
                        Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                        None => (0.0, 0.0),
                    };
                    detections.push(WorldPosition::new(truth.x + dx, truth.y + dy));
                }
            }
            if let Some((poisson, region)) = &clutter {
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    detections.push(WorldPosition::new(
                        rng.gen_range(region.x_min..=region.x_max),
                        rng.gen_range(region.y_min..=region.y_max),
                    ));
                }
            }
        }
        log.push_frame(LogFrame {
            timestamp: t,
            detections,
            truths,
        })?;
    }
    Ok(log)
}

// ---------------------------------------------------------------------------
// Map providers used to bake the experiment maps
// ---------------------------------------------------------------------------

/// Constant value inside a rectangle, another (possibly unknown) outside.
pub struct RegionValue {
    pub region: Rect,
    pub inside: f64,
    pub outside: f64,
}

impl ValueProvider for RegionValue {
    fn value_at(&self, p: WorldPosition) -> f64 {
        if self.region.contains(p) {
            self.inside
        } else {
            self.outside
        }
    }

    fn value_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Persistence coverage derived from a detection map: a fixed in-view value
/// wherever the sensor has any detection probability, unknown elsewhere.
struct MapCoverage {
    map: InformationMap,
    in_view: f64,
}

impl ValueProvider for MapCoverage {
    fn value_at(&self, p: WorldPosition) -> f64 {
        match self.map.value_at(p) {
            Ok(v) if !is_unknown(v) && v > 0.0 => self.in_view,
            _ => unknown(),
        }
    }

    fn value_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

fn sensor_pd_source(sensor: &SensorFov) -> NodeSource {
    match sensor {
        SensorFov::Rect { detection, region } => NodeSource::Provider(Arc::new(RegionValue {
            region: *region,
            inside: *detection,
            outside: 0.0,
        })),
        SensorFov::Map(map) => NodeSource::Static(map.clone()),
    }
}

fn sensor_coverage_source(sensor: &SensorFov, in_view: f64) -> NodeSource {
    match sensor {
        SensorFov::Rect { region, .. } => NodeSource::Provider(Arc::new(RegionValue {
            region: *region,
            inside: in_view,
            outside: unknown(),
        })),
        SensorFov::Map(map) => NodeSource::Provider(Arc::new(MapCoverage {
            map: map.clone(),
            in_view,
        })),
    }
}

/// Combined detection map of all sensors: the maximum over per-sensor fields
/// of view, baked over the experiment grid.
fn bake_detection_map(config: &ScenarioConfig, grid: GridSpec) -> Result<InformationMap, SimError> {
    let mut h = Hierarchy::new();
    let root = h.add_node("fov0", sensor_pd_source(&config.sensors[0]), Combinator::Max)?;
    for (i, sensor) in config.sensors.iter().enumerate().skip(1) {
        let child = h.add_node(format!("fov{i}"), sensor_pd_source(sensor), Combinator::Max)?;
        h.link(root, child)?;
    }
    Ok(h.bake(root, grid)?)
}

/// Combined persistence map: maximum of per-sensor coverage (high inside any
/// field of view, unknown elsewhere), multiplied with the occlusion map that
/// keeps persistence high where objects cannot vanish. Without the occlusion
/// knowledge, the gap stays unknown and the tracker falls back to its low
/// persistence constant.
fn bake_persistence_map(
    config: &ScenarioConfig,
    grid: GridSpec,
    with_occlusion_knowledge: bool,
) -> Result<InformationMap, SimError> {
    let mut h = Hierarchy::new();
    let coverage = h.add_node(
        "coverage0",
        sensor_coverage_source(&config.sensors[0], config.persistence_in_fov),
        Combinator::Max,
    )?;
    for (i, sensor) in config.sensors.iter().enumerate().skip(1) {
        let child = h.add_node(
            format!("coverage{i}"),
            sensor_coverage_source(sensor, config.persistence_in_fov),
            Combinator::Max,
        )?;
        h.link(coverage, child)?;
    }
    let root = match (with_occlusion_knowledge, config.occlusion) {
        (true, Some(region)) => {
            let occlusion = h.add_node(
                "no-vanish",
                NodeSource::Provider(Arc::new(RegionValue {
                    region,
                    inside: config.persistence_occlusion,
                    outside: unknown(),
                })),
                Combinator::Product,
            )?;
            h.link(occlusion, coverage)?;
            occlusion
        }
        _ => coverage,
    };
    Ok(h.bake(root, grid)?)
}

// ---------------------------------------------------------------------------
// Occlusion experiment
// ---------------------------------------------------------------------------

/// Per-scan metrics of one tracker run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan: usize,
    pub time: f64,
    pub truth_count: usize,
    pub estimate_count: usize,
    pub expected_cardinality: f64,
    pub cardinality_error: i64,
    pub ospa: f64,
    pub occluded: bool,
}

/// Full run record plus the survival verdict over the occluded interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scans: Vec<ScanRecord>,
    pub survival: bool,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
}

impl RunReport {
    pub const CSV_HEADER: &'static str =
        "scan,time,truths,estimates,expected_cardinality,cardinality_error,ospa,occluded";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.scans {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scan,
                r.time,
                r.truth_count,
                r.estimate_count,
                r.expected_cardinality,
                r.cardinality_error,
                r.ospa,
                u8::from(r.occluded),
            ));
        }
        out
    }
}

impl std::fmt::Display for RunReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.scans {
            writeln!(
                f,
                "scan {} t={} truths={} estimates={} expected={:.3} ospa={:.3}{}",
                r.scan,
                r.time,
                r.truth_count,
                r.estimate_count,
                r.expected_cardinality,
                r.ospa,
                if r.occluded { " occluded" } else { "" },
            )?;
        }
        writeln!(f, "survival {}", self.survival)
    }
}

/// Run the tracker over the scenario twice the caller's way: with the baked
/// combined persistence map, or without the occlusion knowledge so the gap
/// falls back to the low persistence constant. Reports whether the expected
/// cardinality stayed at or above 0.5 through every occluded scan.
pub fn run_occlusion_experiment(
    config: &ScenarioConfig,
    with_persistence_map: bool,
) -> Result<RunReport, SimError> {
    config.validate()?;
    if config.sensors.is_empty() {
        return Err(invalid("sensors", "experiment wants at least one sensor"));
    }
    if config.trajectories.is_empty() {
        return Err(invalid("trajectories", "experiment wants at least one trajectory"));
    }
    let grid = config.grid_spec()?;
    let detection_map = bake_detection_map(config, grid)?;
    let persistence_map = bake_persistence_map(config, grid, with_persistence_map)?;
    let log = generate(config)?;
    run_tracker(config, grid, detection_map, persistence_map, &log)
}

fn run_tracker(
    config: &ScenarioConfig,
    grid: GridSpec,
    detection_map: InformationMap,
    persistence_map: InformationMap,
    log: &DetectionLog,
) -> Result<RunReport, SimError> {
    let cell_area = grid.cell_area(0);

    // uniform clutter-rate map mirroring the generator: per sensor, rate
    // spread over the clutter region
    let clutter_rate_per_cell = match (config.clutter_rate > 0.0, config.clutter_region) {
        (true, Some(region)) => {
            config.sensors.len() as f64 * config.clutter_rate * cell_area / region.area()
        }
        _ => 0.0,
    };
    let clutter_map = InformationMap::new(
        grid,
        clutter_rate_per_cell,
        0.0,
        (clutter_rate_per_cell * 4.0).max(1.0),
        OobPolicy::DefaultValue(clutter_rate_per_cell),
    )?;
    let birth_map = InformationMap::new(grid, 1.0, 0.0, 1.0, OobPolicy::DefaultValue(0.0))?;

    let mut h = Hierarchy::new();
    let pd_node = h.add_node("detection", NodeSource::Static(detection_map), Combinator::Product)?;
    let ps_node = h.add_node(
        "persistence",
        NodeSource::Static(persistence_map),
        Combinator::Product,
    )?;
    let clutter_node = h.add_node("clutter", NodeSource::Static(clutter_map), Combinator::Product)?;
    let birth_node = h.add_node("birth", NodeSource::Static(birth_map), Combinator::Product)?;
    let objects = Arc::new(DynamicObjectMap::new(1.0)?);
    let tracked = h.add_node(
        "tracked_objects",
        NodeSource::Objects(Arc::clone(&objects)),
        Combinator::Product,
    )?;
    h.link(birth_node, tracked)?;

    let filter = FilterConfig {
        dt: config.dt,
        process_noise: 0.2,
        measurement_noise: (
            config.noise_std.powi(2).max(1e-4),
            config.noise_std.powi(2).max(1e-4),
        ),
        birth_position_var: 0.25,
        birth_velocity_var: 6.25,
        ..FilterConfig::default()
    };
    let params = crate::phd::MapParameters::new(&h, pd_node, ps_node, birth_node, clutter_node, cell_area)
        .with_fallbacks(Fallbacks {
            survival: config.persistence_fallback,
            clutter_rate: clutter_rate_per_cell,
            ..Fallbacks::default()
        });
    let motion = filter.motion_model();
    let sensor = filter.sensor_model()?;
    let birth_covariance = filter.birth_covariance();

    let mut mix = GaussianMixture::new();
    let mut previous_measurements: Vec<Measurement> = Vec::new();
    let mut scans = Vec::with_capacity(log.frames().len());

    for (scan, frame) in log.frames().iter().enumerate() {
        let births = birth_from_measurements(
            &previous_measurements,
            &params,
            &birth_covariance,
            filter.birth_weight,
        );
        mix = predict(&mix, &motion, &params, &births);
        let measurements: Vec<Measurement> = frame
            .detections
            .iter()
            .map(|d| Vector2::new(d.x, d.y))
            .collect();
        mix = update(&mix, &measurements, &sensor, &params)?;
        mix = prune_merge(
            &mix,
            filter.truncate_threshold,
            filter.merge_distance,
            filter.max_components,
        );

        let extraction = extract(&mix, filter.extraction_threshold);
        objects.clear();
        for (i, state) in extraction.states.iter().enumerate() {
            objects.insert(
                format!("track-{i}"),
                WorldPosition::new(state[0], state[1]),
                BIRTH_SUPPRESSION_RADIUS,
                0.0,
            )?;
        }

        let estimates: Vec<WorldPosition> = extraction
            .states
            .iter()
            .map(|s| WorldPosition::new(s[0], s[1]))
            .collect();
        let occluded = config
            .occlusion
            .is_some_and(|region| frame.truths.iter().any(|t| region.contains(*t)));
        scans.push(ScanRecord {
            scan,
            time: frame.timestamp,
            truth_count: frame.truths.len(),
            estimate_count: estimates.len(),
            expected_cardinality: mix.total_weight(),
            cardinality_error: estimates.len() as i64 - frame.truths.len() as i64,
            ospa: ospa(&estimates, &frame.truths, config.ospa_cutoff, config.ospa_order),
            occluded,
        });
        previous_measurements = measurements;
    }

    let survival = scans
        .iter()
        .filter(|r| r.occluded)
        .all(|r| r.expected_cardinality >= SURVIVAL_THRESHOLD);
    Ok(RunReport {
        scans,
        survival,
        ospa_cutoff: config.ospa_cutoff,
        ospa_order: config.ospa_order,
    })
}

// ---------------------------------------------------------------------------
// OSPA metric
// ---------------------------------------------------------------------------

/// Optimal SubPattern Assignment distance between two position sets:
/// optimal assignment over distances clamped at `cutoff`, a `cutoff` penalty
/// per unmatched element, p-norm averaged over the larger cardinality.
pub fn ospa(xs: &[WorldPosition], ys: &[WorldPosition], cutoff: f64, order: f64) -> f64 {
    assert!(cutoff > 0.0, "cutoff must be positive");
    assert!(order >= 1.0, "order must be at least 1");
    let (small, large) = if xs.len() <= ys.len() { (xs, ys) } else { (ys, xs) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    if m == 0 {
        return cutoff;
    }
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| {
            large
                .iter()
                .map(|b| a.distance_to(b).min(cutoff).powf(order))
                .collect()
        })
        .collect();
    let matched = min_assignment_cost(&cost);
    ((matched + cutoff.powf(order) * (n - m) as f64) / n as f64).powf(1.0 / order)
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// by shortest augmenting paths over row/column potentials. Columns beyond
/// the row count stay unmatched at zero cost.
fn min_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let m = cost.len();
    if m == 0 {
        return 0.0;
    }
    let n = cost[0].len();
    debug_assert!(m <= n);
    // pad with zero-cost dummy rows to square
    let at = |row: usize, col: usize| -> f64 {
        if row < m {
            cost[row][col]
        } else {
            0.0
        }
    };
    let mut row_potential = vec![0.0f64; n + 1];
    let mut col_potential = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row (1-based, 0 = free)
    let mut path = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut min_reduced = vec![f64::INFINITY; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !visited[j] {
                    let reduced = at(i0 - 1, j - 1) - row_potential[i0] - col_potential[j];
                    if reduced < min_reduced[j] {
                        min_reduced[j] = reduced;
                        path[j] = j0;
                    }
                    if min_reduced[j] < delta {
                        delta = min_reduced[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if visited[j] {
                    row_potential[matched_row[j]] += delta;
                    col_potential[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = path[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for col in 1..=n {
        let row = matched_row[col];
        if row >= 1 && row <= m {
            total += cost[row - 1][col - 1];
        }
    }
    total
}
