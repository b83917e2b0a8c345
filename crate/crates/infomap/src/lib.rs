//! Position-dependent parameters stored as discretized grid maps
//! ("Information Maps"), with hierarchical combination of static maps,
//! dynamic object maps, and external providers; estimation of detection and
//! clutter maps from recorded logs; and a Gaussian-mixture PHD multi-object
//! tracker that reads every parameter through map requests.

pub mod context;
pub mod format;
pub mod grid;
pub mod hierarchy;
pub mod mapbuild;
pub mod phd;
pub mod sim;

pub use grid::{
    is_unknown, unknown, Frame, GridError, GridSpec, InformationMap, OobPolicy, WorldPosition,
};
pub use hierarchy::{Combinator, DynamicObjectMap, Hierarchy, NodeId, NodeSource, ValueProvider};
