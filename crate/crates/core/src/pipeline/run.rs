//! The two experiment drivers.
//!
//! Build-only: every instance is a thread that prepares a window (untimed),
//! meets the other instances at a barrier, then anonymizes and builds the
//! window's matrix (timed). The measured region of a window step spans the
//! earliest start to the latest finish across instances, and the aggregate rate
//! divides all packets by the summed regions.
//!
//! Build+IO: each pair is a receiver thread that cuts the incoming record
//! stream into windows and a builder thread that consumes them through a
//! bounded queue. The measured region runs from the first record received to
//! the last matrix built.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Instant;

use thiserror::Error;

use super::config::{ConfigError, Mode, PipelineConfig, Source};
use super::report::{BenchReport, ConfigEcho, InstanceReport, SampledWindow};
use super::window::TrafficWindow;
use crate::anonymizer::{anonymize_in_place, AnonKey};
use crate::ingest::link::{LinkError, LinkReceiver, SendOptions};
use crate::ingest::{parse_pcap, send_records, IngestStats, PacketRecord, PcapError, SynthUniform, Transport};
use crate::matrix::HypersparseMatrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Pcap { path: String, source: PcapError },
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// Dispatches on `config.mode`.
pub fn run(config: &PipelineConfig) -> Result<BenchReport, PipelineError> {
    match config.mode {
        Mode::BuildOnly => run_build_only(config),
        Mode::BuildIo => run_build_io(config),
    }
}

fn build_window(anon: Option<&AnonKey>, records: &mut [PacketRecord]) -> HypersparseMatrix {
    if let Some(key) = anon {
        anonymize_in_place(key, records);
    }
    HypersparseMatrix::from_pairs(records.iter().map(|r| r.pair()))
}

fn load_pcap(path: &Path) -> Result<(Vec<PacketRecord>, IngestStats), PipelineError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| PipelineError::Open { path: display.clone(), source })?;
    parse_pcap(BufReader::new(file)).map_err(|source| PipelineError::Pcap { path: display, source })
}

enum WindowSource {
    Synthetic(SynthUniform),
    Shared(Arc<Vec<PacketRecord>>),
}

struct Plan {
    /// Length of each window every instance builds.
    lengths: Vec<usize>,
    exhausted: bool,
}

fn plan_windows(config: &PipelineConfig, available: Option<usize>) -> Plan {
    let requested = config.windows_per_instance();
    let ws = config.window_size;
    match available {
        None => Plan { lengths: vec![ws; requested], exhausted: false },
        Some(total) => {
            let mut lengths = vec![ws; (total / ws).min(requested)];
            if lengths.len() < requested && total % ws != 0 {
                lengths.push(total % ws);
            }
            Plan { exhausted: total < requested * ws, lengths }
        }
    }
}

struct InstanceRun {
    report: InstanceReport,
    spans: Vec<(Instant, Instant)>,
}

pub fn run_build_only(config: &PipelineConfig) -> Result<BenchReport, PipelineError> {
    config.validate()?;
    if config.mode != Mode::BuildOnly {
        return Err(ConfigError::Invalid("run_build_only requires mode build_only".into()).into());
    }

    let (shared, pcap_stats) = match &config.source {
        Source::Pcap(path) => {
            let (records, stats) = load_pcap(path)?;
            (Some(Arc::new(records)), stats)
        }
        _ => (None, IngestStats::default()),
    };
    let plan = plan_windows(config, shared.as_ref().map(|r| r.len()));
    let barrier = Barrier::new(config.instances);

    let runs: Vec<InstanceRun> = thread::scope(|s| {
        let handles: Vec<_> = (0..config.instances)
            .map(|i| {
                let source = match (&config.source, &shared) {
                    (Source::Synthetic { seed }, _) => WindowSource::Synthetic(SynthUniform::new(seed.wrapping_add(i as u64))),
                    (_, Some(records)) => WindowSource::Shared(Arc::clone(records)),
                    _ => unreachable!("validated source"),
                };
                let (barrier, lengths) = (&barrier, &plan.lengths);
                s.spawn(move || build_only_instance(i, config, source, lengths, barrier))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("build-only instance panicked")).collect()
    });

    let steps = plan.lengths.len();
    let regions: Vec<f64> = (0..steps)
        .map(|w| {
            let start = runs.iter().map(|r| r.spans[w].0).min().unwrap();
            let end = runs.iter().map(|r| r.spans[w].1).max().unwrap();
            (end - start).as_secs_f64()
        })
        .collect();
    let batch_rates = plan
        .lengths
        .chunks(config.windows_per_batch)
        .zip(regions.chunks(config.windows_per_batch))
        .map(|(lens, secs)| {
            let packets = lens.iter().sum::<usize>() * config.instances;
            packets as f64 / secs.iter().sum::<f64>()
        })
        .collect();

    let per_instance: Vec<InstanceReport> = runs.into_iter().map(|r| r.report).collect();
    let total_packets = per_instance.iter().map(|r| r.packets).sum();
    let wall_seconds: f64 = regions.iter().sum();
    let mut drops = IngestStats::default();
    for _ in 0..config.instances {
        drops.merge(&pcap_stats);
    }
    Ok(BenchReport {
        mode: Mode::BuildOnly,
        config: ConfigEcho::from(config),
        per_instance,
        total_packets,
        wall_seconds,
        aggregate_rate: rate(total_packets, wall_seconds),
        batch_rates,
        drops,
        sent_packets: None,
        exhausted: plan.exhausted,
        partial_window: plan.lengths.last().is_some_and(|&l| l < config.window_size),
    })
}

fn rate(packets: u64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        packets as f64 / seconds
    } else {
        0.0
    }
}

fn build_only_instance(
    instance: usize,
    config: &PipelineConfig,
    mut source: WindowSource,
    lengths: &[usize],
    barrier: &Barrier,
) -> InstanceRun {
    let mut report = InstanceReport { instance, ..Default::default() };
    let mut spans = Vec::with_capacity(lengths.len());
    let mut buf = vec![PacketRecord::default(); config.window_size];
    let mut offset = 0;
    for (w, &len) in lengths.iter().enumerate() {
        let window = &mut buf[..len];
        match &mut source {
            WindowSource::Synthetic(gen) => gen.fill(window),
            WindowSource::Shared(records) => {
                window.copy_from_slice(&records[offset..offset + len]);
                offset += len;
            }
        }
        let sample = (config.verify_every > 0 && w % config.verify_every == 0).then(|| window.to_vec());

        barrier.wait();
        let start = Instant::now();
        let matrix = build_window(config.anon.as_ref(), window);
        let end = Instant::now();

        std::hint::black_box(&matrix);
        let secs = (end - start).as_secs_f64();
        spans.push((start, end));
        report.window_seconds.push(secs);
        report.build_seconds += secs;
        report.windows_built += 1;
        report.packets += len as u64;
        if let Some(records) = sample {
            report.samples.push(SampledWindow { index: w, records, matrix: matrix.clone() });
        }
        if config.keep_matrices {
            report.matrices.push(matrix);
        }
    }
    InstanceRun { report, spans }
}

fn pair_endpoint(endpoint: &str, pair: usize) -> Result<String, PipelineError> {
    let bad = || ConfigError::Value { key: "endpoint".into(), reason: format!("{endpoint:?} is not host:port") };
    let (host, port) = endpoint.rsplit_once(':').ok_or_else(bad)?;
    let port: u16 = port.parse().map_err(|_| bad())?;
    if port == 0 {
        return Ok(endpoint.to_string());
    }
    let port = port
        .checked_add(pair as u16)
        .ok_or_else(|| ConfigError::Value { key: "endpoint".into(), reason: "port range overflows".into() })?;
    Ok(format!("{host}:{port}"))
}

struct ReceiverOutcome {
    first_record: Option<Instant>,
    stats: IngestStats,
    error: Option<String>,
}

struct BuilderOutcome {
    report: InstanceReport,
    finished: Vec<Instant>,
    lengths: Vec<usize>,
}

pub fn run_build_io(config: &PipelineConfig) -> Result<BenchReport, PipelineError> {
    config.validate()?;
    if config.mode != Mode::BuildIo {
        return Err(ConfigError::Invalid("run_build_io requires mode build_io".into()).into());
    }
    let Source::Endpoint(endpoint) = &config.source else { unreachable!("validated source") };
    let pairs = config.pairs();

    let mut receivers = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let mut rx = LinkReceiver::bind(&pair_endpoint(endpoint, p)?, config.transport)?;
        if config.transport == Transport::Datagram {
            rx = rx.with_idle_timeout(config.idle_timeout);
        }
        receivers.push(rx);
    }
    let targets: Vec<String> = receivers.iter().map(|r| r.local_addr().to_string()).collect();

    let (outcomes, sent) = thread::scope(|s| {
        let senders: Vec<_> = if config.spawn_sender {
            targets
                .iter()
                .enumerate()
                .map(|(p, addr)| {
                    let opts = SendOptions { transport: config.transport, rate_limit: config.rate_limit, duration: None };
                    let records = SynthUniform::new(config.sender_seed.wrapping_add(p as u64))
                        .take(config.windows_per_instance() * config.window_size);
                    s.spawn(move || send_records(addr, records, &opts))
                })
                .collect()
        } else {
            Vec::new()
        };

        let pair_handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(p, rx)| {
                let (tx, queue) = sync_channel::<TrafficWindow>(config.queue_depth);
                let recv = s.spawn(move || receive_windows(rx, config.window_size, tx));
                let build = s.spawn(move || build_windows(p, config, queue));
                (recv, build)
            })
            .collect();

        let outcomes: Vec<(ReceiverOutcome, Option<BuilderOutcome>)> = pair_handles
            .into_iter()
            .map(|(recv, build)| {
                let builder = build.join().ok();
                let receiver = recv.join().unwrap_or_else(|_| ReceiverOutcome {
                    first_record: None,
                    stats: IngestStats::default(),
                    error: Some("receiver thread panicked".into()),
                });
                (receiver, builder)
            })
            .collect();
        let sent: Vec<Result<u64, String>> = senders
            .into_iter()
            .map(|h| match h.join() {
                Ok(r) => r.map_err(|e| e.to_string()),
                Err(_) => Err("sender thread panicked".into()),
            })
            .collect();
        (outcomes, sent)
    });

    let mut per_instance = Vec::with_capacity(pairs);
    let mut drops = IngestStats::default();
    let mut first_any: Option<Instant> = None;
    let mut last_any: Option<Instant> = None;
    let mut pair_batch_rates: Vec<Vec<f64>> = Vec::new();
    for (p, (recv, built)) in outcomes.into_iter().enumerate() {
        drops.merge(&recv.stats);
        let mut report = match &built {
            Some(b) => b.report.clone(),
            None => InstanceReport {
                instance: p,
                error: Some("builder thread panicked; pair torn down".into()),
                ..Default::default()
            },
        };
        report.stats = recv.stats;
        if report.error.is_none() {
            report.error = recv.error.clone();
        }
        if let (Some(first), Some(b)) = (recv.first_record, &built) {
            if let Some(&last) = b.finished.last() {
                report.io_seconds = Some((last - first).as_secs_f64());
                first_any = Some(first_any.map_or(first, |f| f.min(first)));
                last_any = Some(last_any.map_or(last, |l| l.max(last)));
                let mut prev = first;
                let mut rates = Vec::new();
                for (ends, lens) in b.finished.chunks(config.windows_per_batch).zip(b.lengths.chunks(config.windows_per_batch)) {
                    let end = *ends.last().unwrap();
                    rates.push(rate(lens.iter().sum::<usize>() as u64, (end - prev).as_secs_f64()));
                    prev = end;
                }
                pair_batch_rates.push(rates);
            }
        }
        per_instance.push(report);
    }

    let batches = pair_batch_rates.iter().map(Vec::len).max().unwrap_or(0);
    let batch_rates = (0..batches)
        .map(|b| pair_batch_rates.iter().filter_map(|r| r.get(b)).sum())
        .collect();
    let total_packets = per_instance.iter().map(|r| r.packets).sum();
    let wall_seconds = match (first_any, last_any) {
        (Some(f), Some(l)) => (l - f).as_secs_f64(),
        _ => 0.0,
    };
    let mut sent_packets = None;
    for (p, r) in sent.into_iter().enumerate() {
        match r {
            Ok(n) => *sent_packets.get_or_insert(0) += n,
            Err(e) => {
                let slot = &mut per_instance[p].error;
                slot.get_or_insert_with(|| format!("sender: {e}"));
            }
        }
    }
    let partial_window = per_instance.iter().any(|r| r.packets % config.window_size as u64 != 0);
    Ok(BenchReport {
        mode: Mode::BuildIo,
        config: ConfigEcho::from(config),
        per_instance,
        total_packets,
        wall_seconds,
        aggregate_rate: rate(total_packets, wall_seconds),
        batch_rates,
        drops,
        sent_packets,
        exhausted: false,
        partial_window,
    })
}

fn receive_windows(
    rx: LinkReceiver,
    window_size: usize,
    queue: std::sync::mpsc::SyncSender<TrafficWindow>,
) -> ReceiverOutcome {
    let mut out = ReceiverOutcome { first_record: None, stats: IngestStats::default(), error: None };
    let mut stream = match rx.open() {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(format!("receiver: {e}"));
            return out;
        }
    };
    loop {
        let mut records = Vec::with_capacity(window_size);
        while records.len() < window_size {
            let want = window_size - records.len();
            match stream.next_batch(&mut records, want) {
                Ok(0) => break,
                Ok(_) => {
                    out.first_record.get_or_insert_with(Instant::now);
                }
                Err(e) => {
                    out.error = Some(format!("receiver: {e}"));
                    break;
                }
            }
        }
        let full = records.len() == window_size;
        if !records.is_empty() && queue.send(TrafficWindow::from_records(records, window_size)).is_err() {
            out.error.get_or_insert_with(|| "builder gone; receive stopped".into());
            break;
        }
        if !full || out.error.is_some() {
            break;
        }
    }
    out.stats = stream.stats();
    out
}

fn build_windows(pair: usize, config: &PipelineConfig, queue: std::sync::mpsc::Receiver<TrafficWindow>) -> BuilderOutcome {
    let mut report = InstanceReport { instance: pair, ..Default::default() };
    let mut finished = Vec::new();
    let mut lengths = Vec::new();
    for (w, mut window) in queue.into_iter().enumerate() {
        if !config.builder_delay.is_zero() {
            thread::sleep(config.builder_delay);
        }
        let sample = (config.verify_every > 0 && w % config.verify_every == 0).then(|| window.records().to_vec());
        let start = Instant::now();
        let matrix = build_window(config.anon.as_ref(), window.records_mut());
        let end = Instant::now();
        std::hint::black_box(&matrix);
        let secs = (end - start).as_secs_f64();
        report.window_seconds.push(secs);
        report.build_seconds += secs;
        report.windows_built += 1;
        report.packets += window.len() as u64;
        finished.push(end);
        lengths.push(window.len());
        if let Some(records) = sample {
            report.samples.push(SampledWindow { index: w, records, matrix: matrix.clone() });
        }
        if config.keep_matrices {
            report.matrices.push(matrix);
        }
    }
    BuilderOutcome { report, finished, lengths }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(instances: usize) -> PipelineConfig {
        PipelineConfig {
            window_size: 1000,
            windows_per_batch: 1,
            batches: 1,
            instances,
            source: Source::Synthetic { seed: 3 },
            ..Default::default()
        }
    }

    #[test]
    fn single_window_counts() {
        let r = run_build_only(&small(1)).unwrap();
        assert_eq!(r.total_packets, 1000);
        assert_eq!(r.windows_built(), 1);
        assert_eq!(r.per_instance[0].window_seconds.len(), 1);
        assert!(r.aggregate_rate > 0.0);
        assert!(!r.partial_window && !r.exhausted);
    }

    #[test]
    fn per_instance_totals_independent_of_instance_count() {
        let mut c = small(3);
        c.batches = 2;
        c.windows_per_batch = 3;
        let r = run_build_only(&c).unwrap();
        assert_eq!(r.per_instance.len(), 3);
        assert!(r.per_instance.iter().all(|i| i.packets == 6000 && i.windows_built == 6));
        assert_eq!(r.batch_rates.len(), 2);
    }

    #[test]
    fn sampled_windows_match_direct_build() {
        let mut c = small(2);
        c.windows_per_batch = 4;
        c.verify_every = 2;
        c.anon = Some(crate::anonymizer::derive_key(&[9; 16]).unwrap());
        let r = run_build_only(&c).unwrap();
        for inst in &r.per_instance {
            assert_eq!(inst.samples.len(), 2);
            for s in &inst.samples {
                let mut recs = s.records.clone();
                anonymize_in_place(c.anon.as_ref().unwrap(), &mut recs);
                assert_eq!(s.matrix, HypersparseMatrix::from_pairs(recs.iter().map(|r| r.pair())));
            }
        }
    }

    #[test]
    fn plan_for_short_source() {
        let c = PipelineConfig { window_size: 10, windows_per_batch: 2, batches: 2, ..Default::default() };
        let p = plan_windows(&c, Some(25));
        assert_eq!(p.lengths, vec![10, 10, 5]);
        assert!(p.exhausted);
        let p = plan_windows(&c, Some(100));
        assert_eq!(p.lengths, vec![10; 4]);
        assert!(!p.exhausted);
        let p = plan_windows(&c, Some(40));
        assert_eq!(p.lengths, vec![10; 4]);
        assert!(!p.exhausted);
    }

    #[test]
    fn pair_ports() {
        assert_eq!(pair_endpoint("127.0.0.1:9000", 2).unwrap(), "127.0.0.1:9002");
        assert_eq!(pair_endpoint("127.0.0.1:0", 2).unwrap(), "127.0.0.1:0");
        assert!(pair_endpoint("localhost", 0).is_err());
    }

    #[test]
    fn mode_mismatch_rejected() {
        assert!(run_build_io(&small(2)).is_err());
    }
}
