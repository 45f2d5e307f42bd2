//! File formats, run configuration, reports and the command runner.

pub mod config;
pub mod spectrum_file;
pub mod report;
pub mod run;

pub use config::{AnalysisKind, RunConfig};
pub use report::{Quantity, Report};
pub use run::{run_command, Command, RunOutput};
pub use spectrum_file::{format_spectrum, load_spectrum, parse_spectrum, write_spectrum};
