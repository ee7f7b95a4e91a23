//! Reproducible batch protocols: the injection-by-removal grid, per-domain
//! deltas at the grid optimum, the layer-by-magnitude generation sweep, and
//! plot-ready table emission.

pub mod generation;
pub mod grid;
pub mod tables;

pub use generation::{rewrite_record, run_generation_sweep, GenCell, GenSweepConfig};
pub use grid::{domain_delta_at_optimum, run_grid_sweep, GridSweepConfig, SweepResult};
pub use tables::{emit_generation_csv, emit_grid_csv, write_manifest, RunManifest};
