//! Anonymized hypersparse traffic matrices built from packet streams.
//!
//! Packets enter through [`ingest`] (pcap files, seeded synthetic traffic or
//! the emulated link), are relabeled by the keyed [`anonymizer`], cut into
//! fixed-size windows and turned into 2^32 x 2^32 [`matrix::HypersparseMatrix`]
//! values by the [`pipeline`]. [`report`] turns benchmark sweeps into CSV rate
//! tables and SVG charts; [`cli`] exposes everything as the `hypertraffic`
//! command.

pub mod anonymizer;
pub mod cli;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod report;

pub use anonymizer::{anonymize_ip, anonymize_window, deanonymize_ip, derive_key, AnonKey};
pub use ingest::{IngestStats, PacketRecord};
pub use matrix::{HypersparseMatrix, SparseVector};
pub use pipeline::{BenchReport, Mode, PipelineConfig, TrafficWindow};
pub use report::{RateRow, RateTable};
