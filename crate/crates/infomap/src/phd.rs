//! Gaussian-mixture PHD multi-object filter whose detection, persistence,
//! birth, and clutter parameters are looked up per position instead of being
//! global constants.
//!
//! Prediction scales each component's weight by the persistence probability
//! at its mean and appends birth components. The update keeps a
//! missed-detection copy weighted by one minus the detection probability and,
//! per measurement, Kalman-updated copies normalized against the clutter
//! intensity plus the summed detection likelihood.

use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use thiserror::Error;

use crate::grid::{is_unknown, WorldPosition};
use crate::hierarchy::{Hierarchy, NodeId};

/// State vector: (x, y, vx, vy) in meters and meters per second.
pub type StateVector = Vector4<f64>;
pub type StateMatrix = Matrix4<f64>;
/// Position measurement in the vehicle frame.
pub type Measurement = Vector2<f64>;

const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PhdError {
    #[error("innovation covariance is singular (determinant {det})")]
    SingularInnovation { det: f64 },
    #[error("measurement noise must be symmetric positive-definite")]
    InvalidMeasurementNoise,
    #[error("process noise must be symmetric positive-semidefinite")]
    InvalidProcessNoise,
    #[error("filter config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("hierarchy has no node named `{0}`")]
    UnknownNode(String),
}

/// One weighted Gaussian of the PHD intensity. The weight is the expected
/// number of objects this component accounts for.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: StateVector, covariance: StateMatrix) -> Self {
        Self {
            weight,
            mean,
            covariance,
        }
    }

    pub fn position(&self) -> WorldPosition {
        WorldPosition::new(self.mean[0], self.mean[1])
    }
}

/// The PHD intensity as a weighted Gaussian mixture; its total weight is the
/// expected object count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_components(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        // the empty sum is IEEE -0.0; keep the sign positive
        self.components.iter().map(|c| c.weight).sum::<f64>().max(0.0)
    }
}

/// Constant-velocity transition with discrete white-noise acceleration.
#[derive(Debug, Clone)]
pub struct MotionModel {
    pub transition: StateMatrix,
    pub process_noise: StateMatrix,
}

impl MotionModel {
    pub fn new(transition: StateMatrix, process_noise: StateMatrix) -> Result<Self, PhdError> {
        if !is_symmetric(&process_noise, 1e-9) {
            return Err(PhdError::InvalidProcessNoise);
        }
        Ok(Self {
            transition,
            process_noise,
        })
    }

    /// `accel_noise` is the white-noise acceleration intensity (m^2/s^4 scale).
    pub fn constant_velocity(dt: f64, accel_noise: f64) -> Self {
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0, //
            0.0, 1.0, 0.0, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let (d4, d3, d2) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
        let q = accel_noise
            * Matrix4::new(
                d4, 0.0, d3, 0.0, //
                0.0, d4, 0.0, d3, //
                d3, 0.0, d2, 0.0, //
                0.0, d3, 0.0, d2,
            );
        Self {
            transition: f,
            process_noise: q,
        }
    }
}

/// Position-only observation with Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct SensorModel {
    pub observation: Matrix2x4<f64>,
    pub noise: Matrix2<f64>,
}

impl SensorModel {
    pub fn new(observation: Matrix2x4<f64>, noise: Matrix2<f64>) -> Result<Self, PhdError> {
        let det = noise[(0, 0)] * noise[(1, 1)] - noise[(0, 1)] * noise[(1, 0)];
        if !is_symmetric2(&noise, 1e-9) || noise[(0, 0)] <= 0.0 || det <= 0.0 {
            return Err(PhdError::InvalidMeasurementNoise);
        }
        Ok(Self { observation, noise })
    }

    /// Sensor observing (x, y) with independent per-axis noise variances.
    pub fn position_sensor(var_x: f64, var_y: f64) -> Result<Self, PhdError> {
        Self::new(
            Matrix2x4::new(
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ),
            Matrix2::new(var_x, 0.0, 0.0, var_y),
        )
    }
}

fn is_symmetric(m: &StateMatrix, tol: f64) -> bool {
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

fn is_symmetric2(m: &Matrix2<f64>, tol: f64) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= tol
}

fn symmetrize4(m: &StateMatrix) -> StateMatrix {
    (m + m.transpose()) * 0.5
}

// ---------------------------------------------------------------------------
// Parameter providers
// ---------------------------------------------------------------------------

/// Where the filter reads its position-dependent parameters from. The two
/// implementations — scalar constants and map requests — are interchangeable,
/// and uniform maps reproduce the scalar run exactly.
pub trait ParameterProvider {
    /// p_D at a position, in [0, 1].
    fn detection_probability(&self, p: WorldPosition) -> f64;
    /// p_S at a position, in [0, 1].
    fn survival_probability(&self, p: WorldPosition) -> f64;
    /// Birth weight factor at a measurement position, >= 0.
    fn birth_factor(&self, p: WorldPosition) -> f64;
    /// Clutter intensity per unit area at a measurement position, >= 0.
    fn clutter_intensity(&self, p: WorldPosition) -> f64;
}

/// Constant parameters, the classic configuration.
#[derive(Debug, Clone, Copy)]
pub struct ScalarParameters {
    pub detection: f64,
    pub survival: f64,
    pub birth: f64,
    pub clutter_intensity: f64,
}

impl ParameterProvider for ScalarParameters {
    fn detection_probability(&self, _p: WorldPosition) -> f64 {
        self.detection
    }

    fn survival_probability(&self, _p: WorldPosition) -> f64 {
        self.survival
    }

    fn birth_factor(&self, _p: WorldPosition) -> f64 {
        self.birth
    }

    fn clutter_intensity(&self, _p: WorldPosition) -> f64 {
        self.clutter_intensity
    }
}

/// Constants used whenever a map request answers "unknown"; the filter never
/// consumes the sentinel itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fallbacks {
    pub detection: f64,
    pub survival: f64,
    pub birth: f64,
    /// Per-cell clutter rate; converted to intensity like map values.
    pub clutter_rate: f64,
}

impl Default for Fallbacks {
    fn default() -> Self {
        Self {
            detection: 0.5,
            survival: 0.99,
            birth: 0.0,
            clutter_rate: 0.0,
        }
    }
}

/// Map-backed parameters: every lookup is a hierarchical request, so dynamic
/// object maps and external providers feed the filter transparently.
pub struct MapParameters<'h> {
    hierarchy: &'h Hierarchy,
    pd_node: NodeId,
    ps_node: NodeId,
    birth_node: NodeId,
    clutter_node: NodeId,
    fallbacks: Fallbacks,
    /// World area of one clutter-map cell; turns per-cell rates into
    /// intensity per unit area.
    clutter_cell_area: f64,
}

impl<'h> MapParameters<'h> {
    /// When no explicit clutter fallback is configured and the clutter node
    /// is a static map, the fallback rate defaults to the mean of its known
    /// cells.
    pub fn new(
        hierarchy: &'h Hierarchy,
        pd_node: NodeId,
        ps_node: NodeId,
        birth_node: NodeId,
        clutter_node: NodeId,
        clutter_cell_area: f64,
    ) -> Self {
        let mut fallbacks = Fallbacks::default();
        if let Some(rate) = hierarchy.static_map(clutter_node).and_then(|m| m.mean_known()) {
            fallbacks.clutter_rate = rate;
        }
        Self {
            hierarchy,
            pd_node,
            ps_node,
            birth_node,
            clutter_node,
            fallbacks,
            clutter_cell_area,
        }
    }

    pub fn with_fallbacks(mut self, fallbacks: Fallbacks) -> Self {
        self.fallbacks = fallbacks;
        self
    }

    /// Request a node value, replacing unknown (or a failed lookup under an
    /// error out-of-bounds policy) with the fallback.
    fn request_or(&self, node: NodeId, p: WorldPosition, fallback: f64) -> f64 {
        match self.hierarchy.request(node, p) {
            Ok(v) if !is_unknown(v) => v,
            _ => fallback,
        }
    }
}

impl ParameterProvider for MapParameters<'_> {
    fn detection_probability(&self, p: WorldPosition) -> f64 {
        self.request_or(self.pd_node, p, self.fallbacks.detection)
            .clamp(0.0, 1.0)
    }

    fn survival_probability(&self, p: WorldPosition) -> f64 {
        self.request_or(self.ps_node, p, self.fallbacks.survival)
            .clamp(0.0, 1.0)
    }

    fn birth_factor(&self, p: WorldPosition) -> f64 {
        self.request_or(self.birth_node, p, self.fallbacks.birth)
            .max(0.0)
    }

    fn clutter_intensity(&self, p: WorldPosition) -> f64 {
        let rate = self.request_or(self.clutter_node, p, self.fallbacks.clutter_rate);
        (rate / self.clutter_cell_area).max(0.0)
    }
}

// ---------------------------------------------------------------------------
// Filter steps
// ---------------------------------------------------------------------------

/// PHD prediction: each component survives with the persistence probability
/// at its prior mean position and propagates through the motion model; birth
/// components are appended verbatim.
pub fn predict(
    mix: &GaussianMixture,
    motion: &MotionModel,
    params: &impl ParameterProvider,
    births: &GaussianMixture,
) -> GaussianMixture {
    let f = &motion.transition;
    let components = mix
        .components
        .iter()
        .map(|c| {
            let ps = params.survival_probability(c.position()).clamp(0.0, 1.0);
            GaussianComponent {
                weight: c.weight * ps,
                mean: f * c.mean,
                covariance: symmetrize4(&(f * c.covariance * f.transpose() + motion.process_noise)),
            }
        })
        .chain(births.components.iter().cloned())
        .collect();
    GaussianMixture { components }
}

struct UpdatePrep {
    detection: f64,
    predicted_measurement: Vector2<f64>,
    innovation_inv: Matrix2<f64>,
    /// Gaussian normalization 1 / (2 pi sqrt(det S)).
    norm: f64,
    gain: nalgebra::Matrix4x2<f64>,
    posterior_covariance: StateMatrix,
}

/// PHD update. Detection probabilities are evaluated at the predicted
/// component means; the clutter intensity is evaluated at each measurement.
pub fn update(
    mix: &GaussianMixture,
    measurements: &[Measurement],
    sensor: &SensorModel,
    params: &impl ParameterProvider,
) -> Result<GaussianMixture, PhdError> {
    let h = &sensor.observation;
    let r = &sensor.noise;
    let identity = Matrix4::<f64>::identity();

    let preps: Vec<UpdatePrep> = mix
        .components
        .iter()
        .map(|c| {
            let s_raw = h * c.covariance * h.transpose() + r;
            let s = (s_raw + s_raw.transpose()) * 0.5;
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            if !det.is_finite() || det <= SINGULAR_TOLERANCE {
                return Err(PhdError::SingularInnovation { det });
            }
            let innovation_inv =
                Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;
            let gain = c.covariance * h.transpose() * innovation_inv;
            let i_kh = identity - gain * h;
            // Joseph form keeps the posterior covariance positive-definite
            let posterior_covariance =
                symmetrize4(&(i_kh * c.covariance * i_kh.transpose() + gain * r * gain.transpose()));
            Ok(UpdatePrep {
                detection: params.detection_probability(c.position()).clamp(0.0, 1.0),
                predicted_measurement: h * c.mean,
                innovation_inv,
                norm: 1.0 / (2.0 * std::f64::consts::PI * det.sqrt()),
                gain,
                posterior_covariance,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(mix.len() * (measurements.len() + 1));

    // missed-detection term: [1 - p_D] carries each component over
    for (c, prep) in mix.components.iter().zip(&preps) {
        out.push(GaussianComponent {
            weight: c.weight * (1.0 - prep.detection),
            mean: c.mean,
            covariance: c.covariance,
        });
    }

    for z in measurements {
        let clutter = params
            .clutter_intensity(WorldPosition::new(z[0], z[1]))
            .max(0.0);
        let mut numerators = Vec::with_capacity(mix.len());
        for (c, prep) in mix.components.iter().zip(&preps) {
            let innovation = z - prep.predicted_measurement;
            let mahal = (innovation.transpose() * prep.innovation_inv * innovation)[(0, 0)];
            let likelihood = prep.norm * (-0.5 * mahal).exp();
            numerators.push(c.weight * prep.detection * likelihood);
        }
        let denominator = clutter + numerators.iter().sum::<f64>();
        if denominator.is_nan() || denominator <= 0.0 {
            // measurement explained by nothing (likelihoods underflowed and
            // no clutter): it contributes no components
            continue;
        }
        for ((c, prep), numerator) in mix.components.iter().zip(&preps).zip(&numerators) {
            let innovation = z - prep.predicted_measurement;
            out.push(GaussianComponent {
                weight: numerator / denominator,
                mean: c.mean + prep.gain * innovation,
                covariance: prep.posterior_covariance,
            });
        }
    }

    Ok(GaussianMixture { components: out })
}

/// Adaptive birth: one component per measurement, weighted by the birth
/// request at the measurement position (object-map suppression arrives
/// through the hierarchy). Zero-weight components are dropped.
pub fn birth_from_measurements(
    measurements: &[Measurement],
    params: &impl ParameterProvider,
    base_covariance: &StateMatrix,
    base_weight: f64,
) -> GaussianMixture {
    let components = measurements
        .iter()
        .filter_map(|z| {
            let factor = params
                .birth_factor(WorldPosition::new(z[0], z[1]))
                .max(0.0);
            let weight = base_weight * factor;
            (weight > 0.0).then(|| GaussianComponent {
                weight,
                mean: Vector4::new(z[0], z[1], 0.0, 0.0),
                covariance: *base_covariance,
            })
        })
        .collect();
    GaussianMixture { components }
}

/// Standard GM-PHD housekeeping: drop components below `truncate_threshold`,
/// greedily merge everything within `merge_distance` (Mahalanobis) of the
/// heaviest remaining component (moment-preserving), keep at most
/// `max_components` of the heaviest. Merging conserves weight; only
/// truncation and the component cap remove mass.
pub fn prune_merge(
    mix: &GaussianMixture,
    truncate_threshold: f64,
    merge_distance: f64,
    max_components: usize,
) -> GaussianMixture {
    let mut pool: Vec<GaussianComponent> = mix
        .components
        .iter()
        .filter(|c| c.weight >= truncate_threshold)
        .cloned()
        .collect();
    let mut merged: Vec<GaussianComponent> = Vec::new();
    while !pool.is_empty() {
        let pivot = pool
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .map(|(i, _)| i)
            .unwrap();
        let pivot_mean = pool[pivot].mean;
        let (group, rest): (Vec<_>, Vec<_>) = pool.into_iter().enumerate().partition(|(i, c)| {
            if *i == pivot {
                return true;
            }
            mahalanobis(&c.mean, &pivot_mean, &c.covariance)
                .is_some_and(|d| d <= merge_distance)
        });
        pool = rest.into_iter().map(|(_, c)| c).collect();
        merged.push(merge_components(group.into_iter().map(|(_, c)| c)));
    }
    merged.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    merged.truncate(max_components);
    GaussianMixture { components: merged }
}

fn mahalanobis(mean: &StateVector, pivot: &StateVector, covariance: &StateMatrix) -> Option<f64> {
    let diff = mean - pivot;
    let chol = nalgebra::Cholesky::new(*covariance)?;
    let solved = chol.solve(&diff);
    let d2 = diff.dot(&solved);
    (d2 >= 0.0).then(|| d2.sqrt())
}

fn merge_components(group: impl Iterator<Item = GaussianComponent>) -> GaussianComponent {
    let group: Vec<GaussianComponent> = group.collect();
    let weight: f64 = group.iter().map(|c| c.weight).sum();
    let mut mean = Vector4::zeros();
    for c in &group {
        mean += c.weight * c.mean;
    }
    mean /= weight;
    let mut covariance = Matrix4::zeros();
    for c in &group {
        let d = mean - c.mean;
        covariance += c.weight * (c.covariance + d * d.transpose());
    }
    covariance /= weight;
    GaussianComponent {
        weight,
        mean,
        covariance: symmetrize4(&covariance),
    }
}

/// State estimates extracted from a mixture.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// Means of components at or above the weight threshold.
    pub states: Vec<StateVector>,
    /// Rounded total mixture weight.
    pub expected_cardinality: usize,
}

pub fn extract(mix: &GaussianMixture, weight_threshold: f64) -> Extraction {
    let states = mix
        .components
        .iter()
        .filter(|c| c.weight >= weight_threshold)
        .map(|c| c.mean)
        .collect();
    let total = mix.total_weight().max(0.0);
    Extraction {
        states,
        expected_cardinality: total.round() as usize,
    }
}

// ---------------------------------------------------------------------------
// Filter configuration
// ---------------------------------------------------------------------------

/// Key-value filter configuration; see the crate README for the key list.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub dt: f64,
    pub process_noise: f64,
    /// Diagonal of the measurement noise covariance (variances).
    pub measurement_noise: (f64, f64),
    pub truncate_threshold: f64,
    pub merge_distance: f64,
    pub max_components: usize,
    pub extraction_threshold: f64,
    pub birth_weight: f64,
    pub birth_position_var: f64,
    pub birth_velocity_var: f64,
    pub fallbacks: Fallbacks,
    pub pd_node: String,
    pub ps_node: String,
    pub birth_node: String,
    pub clutter_node: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            process_noise: 0.1,
            measurement_noise: (0.01, 0.01),
            truncate_threshold: 1e-5,
            merge_distance: 3.0,
            max_components: 100,
            extraction_threshold: 0.5,
            birth_weight: 0.1,
            birth_position_var: 1.0,
            birth_velocity_var: 4.0,
            fallbacks: Fallbacks::default(),
            pd_node: "detection".into(),
            ps_node: "persistence".into(),
            birth_node: "birth".into(),
            clutter_node: "clutter".into(),
        }
    }
}

impl FilterConfig {
    pub fn parse(text: &str) -> Result<Self, PhdError> {
        let mut config = Self::default();
        let mut pairs: HashMap<&str, (usize, &str)> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PhdError::Config {
                line: line_no,
                reason: format!("expected `key=value`, got `{line}`"),
            })?;
            pairs.insert(key.trim(), (line_no, value.trim()));
        }
        let mut number = |key: &str, slot: &mut f64| -> Result<(), PhdError> {
            if let Some(&(line, raw)) = pairs.get(key) {
                *slot = raw.parse().map_err(|_| PhdError::Config {
                    line,
                    reason: format!("{key}: invalid number `{raw}`"),
                })?;
                pairs.remove(key);
            }
            Ok(())
        };
        number("dt", &mut config.dt)?;
        number("process_noise", &mut config.process_noise)?;
        number("truncate_threshold", &mut config.truncate_threshold)?;
        number("merge_distance", &mut config.merge_distance)?;
        number("extraction_threshold", &mut config.extraction_threshold)?;
        number("birth_weight", &mut config.birth_weight)?;
        number("birth_position_var", &mut config.birth_position_var)?;
        number("birth_velocity_var", &mut config.birth_velocity_var)?;
        number("fallback_pd", &mut config.fallbacks.detection)?;
        number("fallback_ps", &mut config.fallbacks.survival)?;
        number("fallback_birth", &mut config.fallbacks.birth)?;
        number("fallback_clutter", &mut config.fallbacks.clutter_rate)?;
        if let Some((line, raw)) = pairs.remove("measurement_noise") {
            let mut parts = raw.split(',').map(str::trim);
            let parse = |v: Option<&str>| -> Result<f64, PhdError> {
                v.and_then(|v| v.parse().ok()).ok_or_else(|| PhdError::Config {
                    line,
                    reason: format!("measurement_noise wants `var_x,var_y`, got `{raw}`"),
                })
            };
            config.measurement_noise = (parse(parts.next())?, parse(parts.next())?);
        }
        if let Some((line, raw)) = pairs.remove("max_components") {
            config.max_components = raw.parse().map_err(|_| PhdError::Config {
                line,
                reason: format!("max_components: invalid count `{raw}`"),
            })?;
        }
        for (key, slot) in [
            ("pd_node", &mut config.pd_node),
            ("ps_node", &mut config.ps_node),
            ("birth_node", &mut config.birth_node),
            ("clutter_node", &mut config.clutter_node),
        ] {
            if let Some((_, raw)) = pairs.remove(key) {
                *slot = raw.to_string();
            }
        }
        if let Some((&key, &(line, _))) = pairs.iter().next() {
            return Err(PhdError::Config {
                line,
                reason: format!("unrecognized key `{key}`"),
            });
        }
        Ok(config)
    }

    pub fn motion_model(&self) -> MotionModel {
        MotionModel::constant_velocity(self.dt, self.process_noise)
    }

    pub fn sensor_model(&self) -> Result<SensorModel, PhdError> {
        SensorModel::position_sensor(self.measurement_noise.0, self.measurement_noise.1)
    }

    pub fn birth_covariance(&self) -> StateMatrix {
        Matrix4::from_diagonal(&Vector4::new(
            self.birth_position_var,
            self.birth_position_var,
            self.birth_velocity_var,
            self.birth_velocity_var,
        ))
    }

    /// Bind the configured node names against a hierarchy.
    pub fn bind<'h>(
        &self,
        hierarchy: &'h Hierarchy,
        clutter_cell_area: f64,
    ) -> Result<MapParameters<'h>, PhdError> {
        let resolve = |name: &str| {
            hierarchy
                .node_id(name)
                .ok_or_else(|| PhdError::UnknownNode(name.to_string()))
        };
        Ok(MapParameters::new(
            hierarchy,
            resolve(&self.pd_node)?,
            resolve(&self.ps_node)?,
            resolve(&self.birth_node)?,
            resolve(&self.clutter_node)?,
            clutter_cell_area,
        )
        .with_fallbacks(self.fallbacks))
    }
}
