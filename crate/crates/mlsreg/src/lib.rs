//! File formats, the pipeline runner and the `mlsreg` command line on top
//! of [`mlsreg_core`].

pub mod artifacts;
pub mod clock;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use mlsreg_core as core;

pub use artifacts::Workspace;
pub use clock::StdClock;
pub use error::{Error, Result};
pub use run::{run_pipeline, PipelineInputs, PipelineRun};
