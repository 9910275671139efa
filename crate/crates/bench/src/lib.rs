//! Fixtures shared by the benches.

use cusplab::graph::FiniteGraphSpec;
use cusplab::{build_sector_model, GeometrySpec, PerturbationSpec, SectorModel, SectorOptions};

/// Free glued model with a triangle fiber and a single hub vertex.
pub fn glued_model(n1: usize) -> SectorModel {
    build_sector_model(&GeometrySpec::glued_hub(n1, FiniteGraphSpec::triangle()), &PerturbationSpec::zero(), SectorOptions::default())
        .expect("valid fixture")
}
