//! Discrete cusps and funnels: weighted graph Laplacians, conjugate operators,
//! Mourre-type commutator checks and resolvent probes on finite sections.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conjugate;
pub mod consts;
pub mod error;
pub mod graph;
pub mod lap;
pub mod mourre;
pub mod operator;
pub mod perturbation;
pub mod report;
pub mod sector;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{
    build_geometry, build_glued_model, cartesian_product, cusp_ray, funnel_ray, twisted_product, CompactPart,
    FiniteGraphSpec, GeometryKind, GeometrySpec, GluingEdge, ProductKind, Region, Side, VertexLabel, WeightedGraph,
};
pub use operator::{GaugePair, OperatorMatrix};
pub use lap::{LapScanConfig, LapScanResult, LapVerdict};
pub use mourre::MourreScanResult;
pub use perturbation::{PerturbationSpec, Profile};
pub use report::{Command, ExperimentConfig, ScanReport, Verdict};
pub use sector::{build_sector_model, SectorModel, SectorOptions};
pub use spectral::{EigenDecomposition, SpectralWindow};
pub use sparse::{CsrMatrix, C64};
