//! Lightweight truss design by alternating linear programming.
//!
//! A [`FunctionalSpec`] fixes supports, loads and the design region. The
//! pipeline seeds a dense ground structure, solves for minimum-volume bar
//! forces, then alternately relocates joints and re-solves forces while local
//! topology repairs and subdivision refine the layout.

pub mod equilibrium;
pub mod geomopt;
mod error;
pub mod gsm;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod stability;
pub mod topo_local;
pub mod topo_subdiv;

pub use error::{Error, Result};
pub use model::{
    equilibrium_residual, validate_spec, Aabb, Bar, DesignRegion, FunctionalSpec, Joint, JointId,
    JointKind, OptimizationReport, PhaseRecord, PipelineParams, Point, Truss, Violation,
};
