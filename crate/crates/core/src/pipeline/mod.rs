//! Window batching and the build-only / build+IO experiment drivers.

mod config;
mod report;
mod run;
mod window;

pub use config::{ConfigError, Mode, PipelineConfig, Source};
pub use report::{BenchReport, ConfigEcho, InstanceReport, SampledWindow};
pub use run::{run, run_build_io, run_build_only, PipelineError};
pub use window::{window_batcher, TrafficWindow, WindowBatcher, DEFAULT_WINDOW_SIZE};
