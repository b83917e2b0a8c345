//! Linking Information Maps into trees that answer combined value requests.
//!
//! A node owns one value source (a static map, a dynamic object map, or an
//! external provider), a combinator, and an ordered list of child nodes. A
//! request to a node folds the node's own value with every child's request
//! result, so appended maps contribute transparently. Whole hierarchies can
//! be baked into standalone static maps.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::format::{load_native_file, FormatError};
use crate::grid::{is_unknown, unknown, GridError, GridSpec, InformationMap, OobPolicy, WorldPosition};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("node name `{0}` already used in this hierarchy")]
    DuplicateName(String),
    #[error("linking `{child}` under `{parent}` would create a cycle")]
    CycleDetected { parent: String, child: String },
    #[error("node `{0}` already has a parent; hierarchies are trees")]
    MultipleParents(String),
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("object id `{0}` already present")]
    DuplicateId(String),
    #[error("no object with id `{0}`")]
    UnknownId(String),
    #[error("object radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("object value {value} outside declared range [{vmin}, {vmax}]")]
    ValueOutOfRange { value: f64, vmin: f64, vmax: f64 },
    #[error("invalid neutral value {neutral} for range [{vmin}, {vmax}]")]
    InvalidNeutral { neutral: f64, vmin: f64, vmax: f64 },
    #[error("provider `{0}` is not registered")]
    UnknownProvider(String),
    #[error("hierarchy config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// How a node folds its own value with its children's results.
///
/// Unknown operands are skipped; a fold whose operands are all unknown yields
/// unknown. `Override` instead takes the first known child in declared order,
/// falling back to the node's own value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combinator {
    Product,
    Min,
    Max,
    Mean,
    SumClamped,
    Override,
}

impl Combinator {
    pub fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "product" => Self::Product,
            "min" => Self::Min,
            "max" => Self::Max,
            "mean" => Self::Mean,
            "sum" => Self::SumClamped,
            "override" => Self::Override,
            _ => return None,
        })
    }

    pub fn token(&self) -> &'static str {
        match self {
            Self::Product => "product",
            Self::Min => "min",
            Self::Max => "max",
            Self::Mean => "mean",
            Self::SumClamped => "sum",
            Self::Override => "override",
        }
    }
}

/// External value source: answers a position request with a value in its
/// declared range, or the unknown marker.
pub trait ValueProvider: Send + Sync {
    fn value_at(&self, p: WorldPosition) -> f64;
    /// Declared (vmin, vmax) of the values this provider can return.
    fn value_range(&self) -> (f64, f64);
}

#[derive(Debug, Clone)]
struct DiskObject {
    id: String,
    center: WorldPosition,
    radius: f64,
    value: f64,
}

/// A mutable set of disk-shaped objects over a neutral background, used to
/// feed live track positions into hierarchical requests (e.g. suppressing
/// birth probability near existing tracks).
///
/// One writer and any number of readers may share it; a lookup sees either
/// the pre- or post-state of a concurrent insert/remove, never a torn state.
pub struct DynamicObjectMap {
    neutral: f64,
    vmin: f64,
    vmax: f64,
    objects: RwLock<Vec<DiskObject>>,
}

impl DynamicObjectMap {
    /// Object map with declared range [0, 1].
    pub fn new(neutral: f64) -> Result<Self, HierarchyError> {
        Self::with_range(neutral, 0.0, 1.0)
    }

    pub fn with_range(neutral: f64, vmin: f64, vmax: f64) -> Result<Self, HierarchyError> {
        if !(vmin < vmax && neutral >= vmin && neutral <= vmax) {
            return Err(HierarchyError::InvalidNeutral { neutral, vmin, vmax });
        }
        Ok(Self {
            neutral,
            vmin,
            vmax,
            objects: RwLock::new(Vec::new()),
        })
    }

    pub fn insert(
        &self,
        id: impl Into<String>,
        center: WorldPosition,
        radius: f64,
        value: f64,
    ) -> Result<(), HierarchyError> {
        let id = id.into();
        if radius <= 0.0 || radius.is_nan() {
            return Err(HierarchyError::InvalidRadius(radius));
        }
        if !(value >= self.vmin && value <= self.vmax) {
            return Err(HierarchyError::ValueOutOfRange {
                value,
                vmin: self.vmin,
                vmax: self.vmax,
            });
        }
        let mut objects = self.objects.write().unwrap();
        if objects.iter().any(|o| o.id == id) {
            return Err(HierarchyError::DuplicateId(id));
        }
        objects.push(DiskObject {
            id,
            center,
            radius,
            value,
        });
        Ok(())
    }

    pub fn remove(&self, id: &str) -> Result<(), HierarchyError> {
        let mut objects = self.objects.write().unwrap();
        match objects.iter().position(|o| o.id == id) {
            Some(i) => {
                objects.remove(i);
                Ok(())
            }
            None => Err(HierarchyError::UnknownId(id.to_string())),
        }
    }

    pub fn clear(&self) {
        self.objects.write().unwrap().clear();
    }

    pub fn len(&self) -> usize {
        self.objects.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Minimum value over all disks covering `p`, or the neutral value when
    /// none does. Min is the most conservative overlap rule for suppression.
    pub fn value_at(&self, p: WorldPosition) -> f64 {
        self.objects
            .read()
            .unwrap()
            .iter()
            .filter(|o| o.center.distance_to(&p) <= o.radius)
            .map(|o| o.value)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
            .unwrap_or(self.neutral)
    }

    pub fn value_range(&self) -> (f64, f64) {
        (self.vmin, self.vmax)
    }
}

impl std::fmt::Debug for DynamicObjectMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicObjectMap")
            .field("neutral", &self.neutral)
            .field("objects", &self.objects.read().unwrap().len())
            .finish()
    }
}

/// The value source behind one hierarchy node.
pub enum NodeSource {
    Static(InformationMap),
    Objects(Arc<DynamicObjectMap>),
    Provider(Arc<dyn ValueProvider>),
}

impl NodeSource {
    fn value_at(&self, p: WorldPosition) -> Result<f64, GridError> {
        match self {
            NodeSource::Static(map) => map.value_at(p),
            NodeSource::Objects(objects) => Ok(objects.value_at(p)),
            NodeSource::Provider(provider) => Ok(provider.value_at(p)),
        }
    }

    fn value_range(&self) -> (f64, f64) {
        match self {
            NodeSource::Static(map) => (map.vmin(), map.vmax()),
            NodeSource::Objects(objects) => objects.value_range(),
            NodeSource::Provider(provider) => provider.value_range(),
        }
    }
}

impl std::fmt::Debug for NodeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeSource::Static(m) => write!(f, "Static({}x{})", m.spec().rows(), m.spec().cols()),
            NodeSource::Objects(_) => write!(f, "Objects"),
            NodeSource::Provider(_) => write!(f, "Provider"),
        }
    }
}

/// Handle to a node inside a [`Hierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
struct Node {
    name: String,
    source: NodeSource,
    combinator: Combinator,
    children: Vec<NodeId>,
    parent: Option<NodeId>,
}

/// A forest of named map nodes. Structure is fixed while requests are served;
/// only object-map contents change at runtime.
#[derive(Debug, Default)]
pub struct Hierarchy {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
}

impl Hierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        name: impl Into<String>,
        source: NodeSource,
        combinator: Combinator,
    ) -> Result<NodeId, HierarchyError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(HierarchyError::DuplicateName(name));
        }
        let id = NodeId(self.nodes.len());
        self.by_name.insert(name.clone(), id);
        self.nodes.push(Node {
            name,
            source,
            combinator,
            children: Vec::new(),
            parent: None,
        });
        Ok(id)
    }

    /// Append `child` to `parent`'s ordered child list, keeping the forest a
    /// forest: a node gets at most one parent and may not become its own
    /// ancestor.
    pub fn link(&mut self, parent: NodeId, child: NodeId) -> Result<(), HierarchyError> {
        if self.nodes[child.0].parent.is_some() {
            return Err(HierarchyError::MultipleParents(
                self.nodes[child.0].name.clone(),
            ));
        }
        let mut cursor = Some(parent);
        while let Some(id) = cursor {
            if id == child {
                return Err(HierarchyError::CycleDetected {
                    parent: self.nodes[parent.0].name.clone(),
                    child: self.nodes[child.0].name.clone(),
                });
            }
            cursor = self.nodes[id.0].parent;
        }
        self.nodes[parent.0].children.push(child);
        self.nodes[child.0].parent = Some(parent);
        Ok(())
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of nodes without a parent.
    pub fn roots(&self) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.name.as_str())
    }

    /// The shared object map behind a node, if that node is object-backed.
    pub fn object_map(&self, id: NodeId) -> Option<Arc<DynamicObjectMap>> {
        match &self.nodes[id.0].source {
            NodeSource::Objects(objects) => Some(Arc::clone(objects)),
            _ => None,
        }
    }

    /// The static map behind a node, if that node is map-backed.
    pub fn static_map(&self, id: NodeId) -> Option<&InformationMap> {
        match &self.nodes[id.0].source {
            NodeSource::Static(map) => Some(map),
            _ => None,
        }
    }

    /// Combined value of the node and all maps appended below it.
    pub fn request(&self, id: NodeId, p: WorldPosition) -> Result<f64, GridError> {
        let node = &self.nodes[id.0];
        let own = node.source.value_at(p)?;
        let mut child_values = Vec::with_capacity(node.children.len());
        for &child in &node.children {
            child_values.push(self.request(child, p)?);
        }
        Ok(fold(node, own, &child_values))
    }

    pub fn request_by_name(&self, name: &str, p: WorldPosition) -> Result<f64, HierarchyError> {
        let id = self
            .node_id(name)
            .ok_or_else(|| HierarchyError::UnknownNode(name.to_string()))?;
        Ok(self.request(id, p)?)
    }

    /// Sample the node at every cell center of `spec` into a standalone
    /// static map. Unknown results are stored as unknown cells; the value
    /// range is the envelope of all source ranges in the subtree, widened by
    /// observed values where a fold escapes it.
    pub fn bake(&self, id: NodeId, spec: GridSpec) -> Result<InformationMap, GridError> {
        let (mut vmin, mut vmax) = self.subtree_range(id);
        let mut values = Vec::with_capacity(spec.cell_count());
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                let v = self.request(id, spec.cell_center(row, col))?;
                if !is_unknown(v) {
                    vmin = vmin.min(v);
                    vmax = vmax.max(v);
                }
                values.push(v);
            }
        }
        InformationMap::from_values(spec, values, vmin, vmax, OobPolicy::DefaultValue(vmin))
    }

    fn subtree_range(&self, id: NodeId) -> (f64, f64) {
        let node = &self.nodes[id.0];
        let (mut lo, mut hi) = node.source.value_range();
        for &child in &node.children {
            let (clo, chi) = self.subtree_range(child);
            lo = lo.min(clo);
            hi = hi.max(chi);
        }
        (lo, hi)
    }
}

/// Fold the node's own value with its children's results.
///
/// Known operands are sorted into a canonical order before reduction, so
/// permuting children can never change the result, not even in the last bit.
fn fold(node: &Node, own: f64, child_values: &[f64]) -> f64 {
    if node.combinator == Combinator::Override {
        return child_values
            .iter()
            .copied()
            .find(|v| !is_unknown(*v))
            .unwrap_or(own);
    }
    let mut operands: Vec<f64> = std::iter::once(own)
        .chain(child_values.iter().copied())
        .filter(|v| !is_unknown(*v))
        .collect();
    if operands.is_empty() {
        return unknown();
    }
    operands.sort_by(f64::total_cmp);
    match node.combinator {
        Combinator::Product => operands.iter().product(),
        Combinator::Min => operands[0],
        Combinator::Max => *operands.last().unwrap(),
        Combinator::Mean => operands.iter().sum::<f64>() / operands.len() as f64,
        Combinator::SumClamped => {
            let (lo, hi) = node.source.value_range();
            operands.iter().sum::<f64>().clamp(lo, hi)
        }
        Combinator::Override => unreachable!(),
    }
}

// ---------------------------------------------------------------------------
// Config file loader
// ---------------------------------------------------------------------------

/// Named external providers a hierarchy config may reference.
#[derive(Default)]
pub struct ProviderRegistry {
    providers: HashMap<String, Arc<dyn ValueProvider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, provider: Arc<dyn ValueProvider>) {
        self.providers.insert(name.into(), provider);
    }

    fn get(&self, name: &str) -> Option<Arc<dyn ValueProvider>> {
        self.providers.get(name).map(Arc::clone)
    }
}

impl Hierarchy {
    /// Load a hierarchy from its text config.
    ///
    /// One block per node:
    /// ```text
    /// node birth
    /// source static maps/birth.imap   # or: objects 1.0 | provider <name>
    /// combine product
    /// children tracked_objects
    /// ```
    /// Static map paths resolve relative to `base_dir`. The loader validates
    /// name resolution and tree-ness before returning.
    pub fn from_config(
        text: &str,
        base_dir: impl AsRef<Path>,
        registry: &ProviderRegistry,
    ) -> Result<Self, HierarchyError> {
        let base_dir = base_dir.as_ref();
        let cfg_err = |line: usize, reason: String| HierarchyError::Config { line, reason };

        struct Block {
            line: usize,
            name: String,
            source: Option<NodeSource>,
            combinator: Combinator,
            children: Vec<String>,
        }
        let mut blocks: Vec<Block> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match key {
                "node" => {
                    if rest.is_empty() {
                        return Err(cfg_err(line_no, "node wants a name".into()));
                    }
                    blocks.push(Block {
                        line: line_no,
                        name: rest.to_string(),
                        source: None,
                        combinator: Combinator::Product,
                        children: Vec::new(),
                    });
                }
                "source" => {
                    let block = blocks
                        .last_mut()
                        .ok_or_else(|| cfg_err(line_no, "source before any node".into()))?;
                    let (kind, arg) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                    let arg = arg.trim();
                    block.source = Some(match kind {
                        "static" => {
                            let path = base_dir.join(arg);
                            NodeSource::Static(load_native_file(&path)?)
                        }
                        "objects" => {
                            let neutral: f64 = arg.parse().map_err(|_| {
                                cfg_err(line_no, format!("invalid neutral value `{arg}`"))
                            })?;
                            NodeSource::Objects(Arc::new(DynamicObjectMap::new(neutral)?))
                        }
                        "provider" => NodeSource::Provider(
                            registry
                                .get(arg)
                                .ok_or_else(|| HierarchyError::UnknownProvider(arg.to_string()))?,
                        ),
                        other => {
                            return Err(cfg_err(
                                line_no,
                                format!("source kind must be static|objects|provider, got `{other}`"),
                            ))
                        }
                    });
                }
                "combine" => {
                    let block = blocks
                        .last_mut()
                        .ok_or_else(|| cfg_err(line_no, "combine before any node".into()))?;
                    block.combinator = Combinator::parse(rest).ok_or_else(|| {
                        cfg_err(
                            line_no,
                            format!("combine must be product|min|max|mean|sum|override, got `{rest}`"),
                        )
                    })?;
                }
                "children" => {
                    let block = blocks
                        .last_mut()
                        .ok_or_else(|| cfg_err(line_no, "children before any node".into()))?;
                    block
                        .children
                        .extend(rest.split_whitespace().map(str::to_string));
                }
                other => return Err(cfg_err(line_no, format!("unrecognized key `{other}`"))),
            }
        }

        let mut hierarchy = Hierarchy::new();
        let mut ids = Vec::with_capacity(blocks.len());
        for block in &mut blocks {
            let source = block
                .source
                .take()
                .ok_or_else(|| cfg_err(block.line, format!("node `{}` has no source", block.name)))?;
            ids.push(hierarchy.add_node(block.name.clone(), source, block.combinator)?);
        }
        for (block, &id) in blocks.iter().zip(&ids) {
            for child_name in &block.children {
                let child = hierarchy
                    .node_id(child_name)
                    .ok_or_else(|| HierarchyError::UnknownNode(child_name.clone()))?;
                hierarchy.link(id, child)?;
            }
        }
        Ok(hierarchy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::save_native_file;
    use crate::grid::GridSpec;

    fn uniform(value: f64) -> InformationMap {
        let spec = GridSpec::cartesian(10, 10, 1.0, 9, 0).unwrap();
        InformationMap::new(spec, value, 0.0, 1.0, OobPolicy::DefaultValue(0.0)).unwrap()
    }

    fn leaf(h: &mut Hierarchy, name: &str, value: f64) -> NodeId {
        h.add_node(name, NodeSource::Static(uniform(value)), Combinator::Product)
            .unwrap()
    }

    const ORIGIN: WorldPosition = WorldPosition { x: 2.0, y: 2.0 };

    #[test]
    fn leaf_request_equals_source_value() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.7);
        assert_eq!(h.request(a, ORIGIN).unwrap(), 0.7);
    }

    #[test]
    fn product_fold_over_own_and_children() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.9);
        let b = leaf(&mut h, "b", 0.5);
        let c = leaf(&mut h, "c", 1.0);
        h.link(a, b).unwrap();
        h.link(a, c).unwrap();
        assert!((h.request(a, ORIGIN).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn linking_back_is_a_cycle() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.5);
        let b = leaf(&mut h, "b", 0.5);
        h.link(a, b).unwrap();
        assert!(matches!(
            h.link(b, a),
            Err(HierarchyError::CycleDetected { .. })
        ));
        assert!(matches!(
            h.link(a, a),
            Err(HierarchyError::CycleDetected { .. })
        ));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut h = Hierarchy::new();
        leaf(&mut h, "a", 0.5);
        assert!(matches!(
            h.add_node("a", NodeSource::Static(uniform(0.1)), Combinator::Min),
            Err(HierarchyError::DuplicateName(_))
        ));
    }

    #[test]
    fn second_parent_is_rejected() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.5);
        let b = leaf(&mut h, "b", 0.5);
        let c = leaf(&mut h, "c", 0.5);
        h.link(a, c).unwrap();
        assert!(matches!(
            h.link(b, c),
            Err(HierarchyError::MultipleParents(_))
        ));
    }

    #[test]
    fn unknown_operands_are_skipped() {
        let mut h = Hierarchy::new();
        let spec = GridSpec::cartesian(10, 10, 1.0, 9, 0).unwrap();
        let all_unknown =
            InformationMap::new(spec, unknown(), 0.0, 1.0, OobPolicy::DefaultValue(0.0)).unwrap();
        let a = h
            .add_node("a", NodeSource::Static(all_unknown.clone()), Combinator::Product)
            .unwrap();
        let b = leaf(&mut h, "b", 0.4);
        h.link(a, b).unwrap();
        assert_eq!(h.request(a, ORIGIN).unwrap(), 0.4);

        // all-unknown fold yields unknown
        let mut h2 = Hierarchy::new();
        let lone = h2
            .add_node("lone", NodeSource::Static(all_unknown), Combinator::Product)
            .unwrap();
        assert!(is_unknown(h2.request(lone, ORIGIN).unwrap()));
    }

    #[test]
    fn override_takes_first_known_child_in_order() {
        let spec = GridSpec::cartesian(10, 10, 1.0, 9, 0).unwrap();
        let all_unknown =
            InformationMap::new(spec, unknown(), 0.0, 1.0, OobPolicy::DefaultValue(0.0)).unwrap();
        let mut h = Hierarchy::new();
        let root = h
            .add_node("root", NodeSource::Static(uniform(0.5)), Combinator::Override)
            .unwrap();
        let gap = h
            .add_node("gap", NodeSource::Static(all_unknown), Combinator::Product)
            .unwrap();
        let b = leaf(&mut h, "b", 0.2);
        let c = leaf(&mut h, "c", 0.8);
        h.link(root, gap).unwrap();
        h.link(root, b).unwrap();
        h.link(root, c).unwrap();
        // first known child wins: gap is unknown, b delivers
        assert_eq!(h.request(root, ORIGIN).unwrap(), 0.2);
    }

    #[test]
    fn override_falls_back_to_own_value() {
        let spec = GridSpec::cartesian(10, 10, 1.0, 9, 0).unwrap();
        let all_unknown =
            InformationMap::new(spec, unknown(), 0.0, 1.0, OobPolicy::DefaultValue(0.0)).unwrap();
        let mut h = Hierarchy::new();
        let root = h
            .add_node("root", NodeSource::Static(uniform(0.5)), Combinator::Override)
            .unwrap();
        let gap = h
            .add_node("gap", NodeSource::Static(all_unknown), Combinator::Product)
            .unwrap();
        h.link(root, gap).unwrap();
        assert_eq!(h.request(root, ORIGIN).unwrap(), 0.5);
    }

    #[test]
    fn object_map_lookup() {
        let objects = DynamicObjectMap::new(1.0).unwrap();
        assert_eq!(objects.value_at(WorldPosition::new(5.0, 0.5)), 1.0);
        objects
            .insert("t1", WorldPosition::new(5.0, 0.0), 1.0, 0.0)
            .unwrap();
        assert_eq!(objects.value_at(WorldPosition::new(5.0, 0.5)), 0.0);
        assert_eq!(objects.value_at(WorldPosition::new(5.0, 2.0)), 1.0);
    }

    #[test]
    fn overlapping_objects_fold_by_min() {
        let objects = DynamicObjectMap::new(1.0).unwrap();
        objects
            .insert("a", WorldPosition::new(0.0, 0.0), 2.0, 0.4)
            .unwrap();
        objects
            .insert("b", WorldPosition::new(1.0, 0.0), 2.0, 0.2)
            .unwrap();
        assert_eq!(objects.value_at(WorldPosition::new(0.5, 0.0)), 0.2);
    }

    #[test]
    fn object_map_errors() {
        let objects = DynamicObjectMap::new(1.0).unwrap();
        objects
            .insert("a", WorldPosition::new(0.0, 0.0), 1.0, 0.5)
            .unwrap();
        assert!(matches!(
            objects.insert("a", WorldPosition::new(1.0, 1.0), 1.0, 0.5),
            Err(HierarchyError::DuplicateId(_))
        ));
        assert!(matches!(
            objects.insert("b", WorldPosition::new(1.0, 1.0), 0.0, 0.5),
            Err(HierarchyError::InvalidRadius(_))
        ));
        assert!(matches!(
            objects.remove("missing"),
            Err(HierarchyError::UnknownId(_))
        ));
    }

    #[test]
    fn removing_an_object_restores_lookups() {
        let objects = DynamicObjectMap::new(1.0).unwrap();
        let probes: Vec<WorldPosition> = (0..20)
            .map(|i| WorldPosition::new(i as f64 * 0.5, (i % 5) as f64))
            .collect();
        let before: Vec<f64> = probes.iter().map(|p| objects.value_at(*p)).collect();
        objects
            .insert("t", WorldPosition::new(3.0, 2.0), 1.5, 0.0)
            .unwrap();
        objects.remove("t").unwrap();
        let after: Vec<f64> = probes.iter().map(|p| objects.value_at(*p)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn birth_suppression_through_object_map_child() {
        let mut h = Hierarchy::new();
        let birth = h
            .add_node("birth", NodeSource::Static(uniform(1.0)), Combinator::Product)
            .unwrap();
        let objects = Arc::new(DynamicObjectMap::new(1.0).unwrap());
        let tracked = h
            .add_node("tracked", NodeSource::Objects(Arc::clone(&objects)), Combinator::Product)
            .unwrap();
        h.link(birth, tracked).unwrap();

        let near = WorldPosition::new(4.0, 3.0);
        assert_eq!(h.request(birth, near).unwrap(), 1.0);
        objects.insert("track-7", near, 2.0, 0.0).unwrap();
        assert_eq!(h.request(birth, near).unwrap(), 0.0);
        assert_eq!(h.request(birth, WorldPosition::new(9.0, 9.0)).unwrap(), 1.0);
    }

    #[test]
    fn bake_uniform_leaf() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.7);
        let spec = GridSpec::cartesian(5, 5, 1.0, 4, 0).unwrap();
        let baked = h.bake(a, spec).unwrap();
        assert!(baked.values().iter().all(|&v| v == 0.7));
        assert_eq!((baked.vmin(), baked.vmax()), (0.0, 1.0));
    }

    #[test]
    fn bake_then_request_matches_live_request_at_cell_centers() {
        let mut h = Hierarchy::new();
        let a = leaf(&mut h, "a", 0.9);
        let b = leaf(&mut h, "b", 0.5);
        h.link(a, b).unwrap();
        let spec = GridSpec::cartesian(8, 8, 0.5, 7, 0).unwrap();
        let baked = h.bake(a, spec).unwrap();

        let mut check = Hierarchy::new();
        let baked_node = check
            .add_node("baked", NodeSource::Static(baked), Combinator::Product)
            .unwrap();
        for row in 0..spec.rows() {
            for col in 0..spec.cols() {
                let p = spec.cell_center(row, col);
                assert_eq!(
                    check.request(baked_node, p).unwrap().to_bits(),
                    h.request(a, p).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn permuting_children_never_changes_commutative_folds() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = [0.13, 0.57, 0.91, 0.44, 0.78];
        for combinator in [
            Combinator::Product,
            Combinator::Min,
            Combinator::Max,
            Combinator::Mean,
        ] {
            let build = |order: &[usize]| {
                let mut h = Hierarchy::new();
                let root = h
                    .add_node("root", NodeSource::Static(uniform(0.31)), combinator)
                    .unwrap();
                for &i in order {
                    let child = leaf(&mut h, &format!("c{i}"), values[i]);
                    h.link(root, child).unwrap();
                }
                h.request(root, ORIGIN).unwrap()
            };
            let mut order: Vec<usize> = (0..values.len()).collect();
            let reference = build(&order);
            for _ in 0..50 {
                order.shuffle(&mut rng);
                assert_eq!(build(&order).to_bits(), reference.to_bits());
            }
        }
    }

    #[test]
    fn config_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        save_native_file(&uniform(0.9), dir.path().join("a.imap")).unwrap();
        save_native_file(&uniform(0.5), dir.path().join("b.imap")).unwrap();
        let config = "\
# detection hierarchy
node detection
source static a.imap
combine product
children helper

node helper
source static b.imap

node tracked
source objects 1.0
";
        let h = Hierarchy::from_config(config, dir.path(), &ProviderRegistry::new()).unwrap();
        assert_eq!(h.len(), 3);
        let roots: Vec<&str> = h.roots().collect();
        assert_eq!(roots, vec!["detection", "tracked"]);
        assert!(
            (h.request_by_name("detection", ORIGIN).unwrap() - 0.45).abs() < 1e-15
        );
    }

    #[test]
    fn config_errors() {
        let registry = ProviderRegistry::new();
        let err = Hierarchy::from_config("node a\nsource objects 1.0\nchildren ghost\n", ".", &registry)
            .unwrap_err();
        assert!(matches!(err, HierarchyError::UnknownNode(_)));

        let err = Hierarchy::from_config("source objects 1.0\n", ".", &registry).unwrap_err();
        assert!(matches!(err, HierarchyError::Config { line: 1, .. }));

        let err = Hierarchy::from_config("node a\nsource provider nope\n", ".", &registry)
            .unwrap_err();
        assert!(matches!(err, HierarchyError::UnknownProvider(_)));

        // a cycle written in config form
        let err = Hierarchy::from_config(
            "node a\nsource objects 1.0\nchildren b\n\nnode b\nsource objects 1.0\nchildren a\n",
            ".",
            &registry,
        )
        .unwrap_err();
        assert!(matches!(err, HierarchyError::CycleDetected { .. }));
    }

    #[test]
    fn provider_nodes_answer_requests() {
        struct Halver;
        impl ValueProvider for Halver {
            fn value_at(&self, p: WorldPosition) -> f64 {
                if p.x < 0.0 {
                    unknown()
                } else {
                    0.5
                }
            }
            fn value_range(&self) -> (f64, f64) {
                (0.0, 1.0)
            }
        }
        let mut registry = ProviderRegistry::new();
        registry.register("halver", Arc::new(Halver));
        let h = Hierarchy::from_config("node ext\nsource provider halver\n", ".", &registry)
            .unwrap();
        assert_eq!(h.request_by_name("ext", WorldPosition::new(1.0, 0.0)).unwrap(), 0.5);
        assert!(is_unknown(
            h.request_by_name("ext", WorldPosition::new(-1.0, 0.0)).unwrap()
        ));
    }

    #[test]
    fn sum_clamps_to_source_range() {
        let mut h = Hierarchy::new();
        let root = h
            .add_node("root", NodeSource::Static(uniform(0.8)), Combinator::SumClamped)
            .unwrap();
        let child = leaf(&mut h, "child", 0.7);
        h.link(root, child).unwrap();
        assert_eq!(h.request(root, ORIGIN).unwrap(), 1.0);
    }
}
