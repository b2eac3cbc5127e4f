use serde::Serialize;

use super::config::{Mode, PipelineConfig, Source};
use crate::ingest::{IngestStats, PacketRecord, Transport};
use crate::matrix::HypersparseMatrix;

/// A window kept for after-the-fact verification.
#[derive(Debug, Clone)]
pub struct SampledWindow {
    pub index: usize,
    pub records: Vec<PacketRecord>,
    pub matrix: HypersparseMatrix,
}

/// Results of one build-only instance or one receiver/builder pair.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InstanceReport {
    pub instance: usize,
    pub windows_built: usize,
    pub packets: u64,
    /// Sum of the per-window build times.
    pub build_seconds: f64,
    pub window_seconds: Vec<f64>,
    /// Build+IO: first record received to last matrix built.
    pub io_seconds: Option<f64>,
    pub stats: IngestStats,
    pub error: Option<String>,
    #[serde(skip)]
    pub samples: Vec<SampledWindow>,
    #[serde(skip)]
    pub matrices: Vec<HypersparseMatrix>,
}

impl InstanceReport {
    pub fn rate(&self) -> f64 {
        let secs = self.io_seconds.unwrap_or(self.build_seconds);
        if secs > 0.0 {
            self.packets as f64 / secs
        } else {
            0.0
        }
    }
}

/// Serializable copy of the settings that shaped a run. Key material is
/// reduced to a flag.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub mode: Mode,
    pub window_size: usize,
    pub windows_per_batch: usize,
    pub batches: usize,
    pub instances: usize,
    pub queue_depth: usize,
    pub anonymized: bool,
    pub source: String,
    pub transport: Transport,
    /// How concurrent instances are realized.
    pub concurrency: &'static str,
}

impl From<&PipelineConfig> for ConfigEcho {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            mode: c.mode,
            window_size: c.window_size,
            windows_per_batch: c.windows_per_batch,
            batches: c.batches,
            instances: c.instances,
            queue_depth: c.queue_depth,
            anonymized: c.anon.is_some(),
            source: match &c.source {
                Source::Synthetic { seed } => format!("synthetic:{seed}"),
                Source::Pcap(p) => format!("pcap:{}", p.display()),
                Source::Endpoint(e) => format!("endpoint:{e}"),
            },
            transport: c.transport,
            concurrency: match c.mode {
                Mode::BuildOnly => "threads (one per instance, single process)",
                Mode::BuildIo => "thread pairs (receiver + builder), bounded window queue",
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub config: ConfigEcho,
    pub per_instance: Vec<InstanceReport>,
    pub total_packets: u64,
    /// Wall-clock length of the measured region.
    pub wall_seconds: f64,
    /// `total_packets / wall_seconds`.
    pub aggregate_rate: f64,
    /// Aggregate rate of each batch of windows.
    pub batch_rates: Vec<f64>,
    pub drops: IngestStats,
    /// Records handed to the link by internally spawned senders.
    pub sent_packets: Option<u64>,
    /// The source ran dry before the requested window count.
    pub exhausted: bool,
    /// At least one built window was shorter than the window size.
    pub partial_window: bool,
}

impl BenchReport {
    pub fn windows_built(&self) -> usize {
        self.per_instance.iter().map(|i| i.windows_built).sum()
    }

    pub fn errors(&self) -> Vec<&str> {
        self.per_instance.iter().filter_map(|i| i.error.as_deref()).collect()
    }

    /// Population standard deviation of the batch rates.
    pub fn batch_stddev(&self) -> f64 {
        stddev(&self.batch_rates)
    }
}

pub(crate) fn stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
