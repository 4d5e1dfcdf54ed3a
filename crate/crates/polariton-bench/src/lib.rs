//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use polariton::{build_model, CouplingTensor, FrequencyGrid, Lattice, ModelId, ModelParams};

/// Built-in model on an `n^3` lattice with `nodes` grid points up to `3`.
pub fn fixture(id: ModelId, n: usize, nodes: usize) -> CouplingTensor {
    let lat = Arc::new(Lattice::new(n, 1.0).expect("lattice"));
    let grid = FrequencyGrid::midpoint(nodes, 3.0, 2.0).expect("grid");
    build_model(id, lat, &grid, &ModelParams::default()).expect("model")
}
