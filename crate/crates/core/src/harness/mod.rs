//! Training loop, policy reuse across topologies, and parameter sweeps.

mod ablate;
mod game;
mod report;

pub use ablate::{ablate, comparison_csv, derive_seed, AblationGrid, GridPoint};
pub use game::{evaluate, run, train, RunOptions};
pub use report::{
    load_maps, map_file_name, EpisodeSummary, MetricsRow, RunReport, TransferRecord,
};
