//! The `hypertraffic` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::anonymizer::{anonymize_ip, anonymize_record, deanonymize_ip, deanonymize_record, AnonKey};
use crate::ingest::link::{collect_stream, decode_records, encode_records, LinkReceiver};
use crate::ingest::{
    parse_pcap, rewrite_ipv4_addresses, send_records, IngestStats, PacketRecord, PcapReader, PcapWriter,
    SendOptions, SynthUniform, Transport, RECORD_BYTES,
};
use crate::matrix::HypersparseMatrix;
use crate::pipeline::{self, window_batcher, Mode, PipelineConfig, Source};
use crate::report::{emit_chart, write_rate_csv, RateRow, RateTable};

pub const KEY_ENV: &str = "HYPERTRAFFIC_KEY";

#[derive(Debug, Parser)]
#[command(name = "hypertraffic", version, about = "Anonymized hypersparse traffic matrices from packet streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic records to a pcap or record file
    Gen(GenArgs),
    /// Send records over the emulated link
    Send(SendArgs),
    /// Receive records from the emulated link
    Recv(RecvArgs),
    /// Build traffic matrices from a capture or record file and write them as TSV
    Build(BuildArgs),
    /// Run build-only or build+IO throughput sweeps
    Bench(BenchArgs),
    /// Anonymize (or restore) the addresses in a capture or record file
    Anon(AnonArgs),
    /// Summarize a TSV matrix: nnz, total, row/col sums, top talkers
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    /// classic libpcap capture
    Pcap,
    /// back-to-back 8-byte records (src, dst big-endian)
    Records,
}

#[derive(Debug, Args)]
struct KeyArg {
    /// 32 hex characters of anonymization secret
    #[arg(long = "anon-key", env = KEY_ENV, hide_env_values = true)]
    anon_key: Option<String>,
}

impl KeyArg {
    fn key(&self) -> Result<Option<AnonKey>> {
        self.anon_key
            .as_deref()
            .map(|k| AnonKey::from_hex(k).context("--anon-key"))
            .transpose()
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output path
    #[arg(long)]
    out: PathBuf,
    /// Number of records
    #[arg(long, default_value_t = 1 << 17)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output format (default: by extension, .pcap means pcap)
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
}

#[derive(Debug, Args)]
struct SendArgs {
    /// Receiver as host:port
    #[arg(long)]
    endpoint: String,
    /// Records to send; synthetic records are generated when absent
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Synthetic record count
    #[arg(long, default_value_t = 1 << 17)]
    count: usize,
    /// Synthetic seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Records per second
    #[arg(long)]
    rate: Option<f64>,
    /// Stop after this many seconds
    #[arg(long)]
    duration: Option<f64>,
    /// lossless (tcp) or datagram (udp)
    #[arg(long, default_value = "lossless")]
    transport: Transport,
}

#[derive(Debug, Args)]
struct RecvArgs {
    /// Address to bind as host:port
    #[arg(long)]
    endpoint: String,
    #[arg(long, default_value = "lossless")]
    transport: Transport,
    /// Write received records here (record format)
    #[arg(long)]
    out: Option<PathBuf>,
    /// End the stream after this long without traffic
    #[arg(long, default_value_t = 2000)]
    idle_timeout_ms: u64,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Capture file input
    #[arg(long, conflicts_with = "input")]
    pcap: Option<PathBuf>,
    /// Record or capture file input
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Output TSV file, or a directory when --window-size is given
    #[arg(long)]
    out: PathBuf,
    /// Build one matrix per window of this many records
    #[arg(long)]
    window_size: Option<usize>,
    #[command(flatten)]
    key: KeyArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// build-only or build-io
    #[arg(long)]
    mode: Option<Mode>,
    /// Comma-separated instance sweep (build-io counts threads, two per pair)
    #[arg(long, value_delimiter = ',')]
    instances: Vec<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    /// Windows per batch
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    /// Synthetic source seed
    #[arg(long)]
    seed: Option<u64>,
    /// Build-only: read windows from this capture instead of synthetic traffic
    #[arg(long)]
    pcap: Option<PathBuf>,
    /// Build-io: receive endpoint (port 0 for ephemeral)
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    transport: Option<Transport>,
    #[arg(long)]
    queue_depth: Option<usize>,
    /// Build-io: wait for an external sender instead of spawning one
    #[arg(long)]
    external_sender: bool,
    /// Sender rate limit for spawned senders (records per second)
    #[arg(long)]
    rate: Option<f64>,
    /// Rate table CSV output
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG chart output
    #[arg(long)]
    chart: Option<PathBuf>,
    /// Full JSON reports output
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    key: KeyArg,
}

#[derive(Debug, Args)]
struct AnonArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Apply the inverse permutation
    #[arg(long)]
    reverse: bool,
    #[command(flatten)]
    key: KeyArg,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// TSV matrix
    matrix: PathBuf,
    /// Number of top sources and destinations to list
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Write per-source sums as index<TAB>count lines
    #[arg(long)]
    row_sums: Option<PathBuf>,
    /// Write per-destination sums as index<TAB>count lines
    #[arg(long)]
    col_sums: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Send(a) => send(a),
        Command::Recv(a) => recv(a),
        Command::Build(a) => build(a),
        Command::Bench(a) => bench(a),
        Command::Anon(a) => anon(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn format_of(path: &Path, explicit: Option<FileFormat>) -> FileFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pcap") => FileFormat::Pcap,
        _ => FileFormat::Records,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("create {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("open {}", path.display()))?))
}

/// Reads a record file. A trailing partial record is counted as malformed.
pub fn read_record_file<R: Read>(mut source: R) -> io::Result<(Vec<PacketRecord>, IngestStats)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut records = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    decode_records(&bytes, &mut records);
    let stats = IngestStats {
        accepted: records.len() as u64,
        dropped_malformed: u64::from(bytes.len() % RECORD_BYTES != 0),
        ..Default::default()
    };
    Ok((records, stats))
}

pub fn write_record_file<W: Write>(records: &[PacketRecord], mut sink: W) -> io::Result<()> {
    let mut bytes = Vec::new();
    for chunk in records.chunks(8192) {
        bytes.clear();
        encode_records(chunk, &mut bytes);
        sink.write_all(&bytes)?;
    }
    sink.flush()
}

fn load_records(path: &Path, format: Option<FileFormat>) -> Result<(Vec<PacketRecord>, IngestStats)> {
    let reader = open(path)?;
    match format_of(path, format) {
        FileFormat::Pcap => parse_pcap(reader).with_context(|| path.display().to_string()),
        FileFormat::Records => read_record_file(reader).with_context(|| path.display().to_string()),
    }
}

fn print_stats(label: &str, stats: &IngestStats) {
    println!(
        "{label}: accepted={} dropped_non_ipv4={} dropped_truncated={} dropped_malformed={}",
        stats.accepted, stats.dropped_non_ipv4, stats.dropped_truncated, stats.dropped_malformed
    );
}

fn gen(a: GenArgs) -> Result<()> {
    let records = SynthUniform::new(a.seed).take(a.count);
    let mut out = create(&a.out)?;
    match format_of(&a.out, a.format) {
        FileFormat::Pcap => {
            let mut w = PcapWriter::new(&mut out)?;
            for (i, r) in records.enumerate() {
                w.write_record((i / 1_000_000) as u32, (i % 1_000_000) as u32, r)?;
            }
            w.finish()?;
        }
        FileFormat::Records => write_record_file(&records.collect::<Vec<_>>(), &mut out)?,
    }
    out.flush()?;
    println!("wrote {} records to {}", a.count, a.out.display());
    Ok(())
}

fn send(a: SendArgs) -> Result<()> {
    let opts = SendOptions {
        transport: a.transport,
        rate_limit: a.rate,
        duration: a.duration.map(Duration::from_secs_f64),
    };
    if let Some(rate) = a.rate {
        if !(rate > 0.0 && rate.is_finite()) {
            bail!("--rate must be positive");
        }
    }
    let sent = match &a.input {
        Some(path) => {
            let (records, _) = load_records(path, a.format)?;
            send_records(&a.endpoint, records, &opts)?
        }
        None => send_records(&a.endpoint, SynthUniform::new(a.seed).take(a.count), &opts)?,
    };
    println!("sent {sent}");
    Ok(())
}

fn recv(a: RecvArgs) -> Result<()> {
    let mut rx = LinkReceiver::bind(&a.endpoint, a.transport)?;
    if a.transport == Transport::Datagram {
        rx = rx.with_idle_timeout(Duration::from_millis(a.idle_timeout_ms));
    }
    eprintln!("listening on {}", rx.local_addr());
    let (records, stats) = collect_stream(rx.open()?)?;
    if let Some(out) = &a.out {
        write_record_file(&records, create(out)?)?;
    }
    println!("received {}", records.len());
    print_stats("stats", &stats);
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let (path, format) = match (&a.pcap, &a.input) {
        (Some(p), _) => (p, Some(FileFormat::Pcap)),
        (None, Some(p)) => (p, a.format),
        (None, None) => bail!("one of --pcap or --input is required"),
    };
    let (mut records, stats) = load_records(path, format)?;
    if let Some(key) = a.key.key()? {
        crate::anonymizer::anonymize_in_place(&key, &mut records);
    }
    print_stats("ingest", &stats);
    match a.window_size {
        None => {
            let m = HypersparseMatrix::from_pairs(records.iter().map(|r| r.pair()));
            m.write_tsv(create(&a.out)?)?;
            println!("matrix nnz={} total={} -> {}", m.nnz(), m.total()?, a.out.display());
        }
        Some(0) => bail!("--window-size must be at least 1"),
        Some(ws) => {
            fs::create_dir_all(&a.out).with_context(|| format!("create {}", a.out.display()))?;
            let mut n = 0;
            for (i, w) in window_batcher(records, ws).enumerate() {
                let path = a.out.join(format!("window-{i:06}.tsv"));
                w.to_matrix().write_tsv(create(&path)?)?;
                n += 1;
            }
            println!("wrote {n} window matrices to {}", a.out.display());
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut base = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
            PipelineConfig::from_kv(&text).with_context(|| path.display().to_string())?
        }
        None => PipelineConfig::default(),
    };
    if let Some(m) = a.mode {
        base.mode = m;
    }
    if let Some(v) = a.window_size {
        base.window_size = v;
    }
    if let Some(v) = a.windows {
        base.windows_per_batch = v;
    }
    if let Some(v) = a.batches {
        base.batches = v;
    }
    if let Some(v) = a.queue_depth {
        base.queue_depth = v;
    }
    if let Some(v) = a.transport {
        base.transport = v;
    }
    if let Some(v) = a.rate {
        base.rate_limit = Some(v);
    }
    if let Some(k) = a.key.key()? {
        base.anon = Some(k);
    }
    if a.external_sender {
        base.spawn_sender = false;
    }
    match base.mode {
        Mode::BuildOnly => {
            if let Some(p) = &a.pcap {
                base.source = Source::Pcap(p.clone());
            } else if let Some(s) = a.seed {
                base.source = Source::Synthetic { seed: s };
            }
        }
        Mode::BuildIo => {
            if let Some(s) = a.seed {
                base.sender_seed = s;
            }
            if let Some(e) = &a.endpoint {
                base.source = Source::Endpoint(e.clone());
            } else if !matches!(base.source, Source::Endpoint(_)) {
                base.source = Source::Endpoint("127.0.0.1:0".into());
            }
        }
    }
    let sweep = if a.instances.is_empty() { vec![base.instances] } else { a.instances.clone() };
    for &n in &sweep {
        let cfg = PipelineConfig { instances: n, ..base.clone() };
        cfg.validate().with_context(|| format!("instances={n}"))?;
    }

    let mut table = RateTable::default();
    let mut reports = Vec::new();
    for &n in &sweep {
        let cfg = PipelineConfig { instances: n, ..base.clone() };
        let report = pipeline::run(&cfg)?;
        if let Some(e) = report.errors().first() {
            bail!("instances={n}: {e}");
        }
        let row = RateRow::from_report(&report);
        println!(
            "{} instances={} packets={} aggregate_pps={:.0} per_instance_pps={:.0} stddev_pps={:.0}",
            row.mode, n, report.total_packets, row.aggregate_rate, row.per_instance_rate, row.stddev
        );
        if report.exhausted {
            eprintln!("warning: source exhausted before {} windows per instance", cfg.windows_per_instance());
        }
        table.push(row);
        reports.push(report);
    }

    match &a.out {
        Some(path) => write_rate_csv(&table, create(path)?)?,
        None => write_rate_csv(&table, io::stdout().lock())?,
    }
    if let Some(path) = &a.chart {
        emit_chart(&table, create(path)?)?;
    }
    if let Some(path) = &a.report {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &reports)?;
        out.flush()?;
    }
    Ok(())
}

fn anon(a: AnonArgs) -> Result<()> {
    let Some(key) = a.key.key()? else {
        bail!("an anonymization key is required (--anon-key or {KEY_ENV})");
    };
    let mut out = create(&a.out)?;
    match format_of(&a.input, a.format) {
        FileFormat::Pcap => {
            let mut reader = PcapReader::new(open(&a.input)?).with_context(|| a.input.display().to_string())?;
            let mut writer = PcapWriter::with_resolution(&mut out, reader.is_nanosecond())?;
            let mut stats = IngestStats::default();
            while let Some(mut raw) = reader.next_raw()? {
                let mapped = if a.reverse {
                    rewrite_ipv4_addresses(&mut raw.data, |ip| deanonymize_ip(&key, ip))
                } else {
                    rewrite_ipv4_addresses(&mut raw.data, |ip| anonymize_ip(&key, ip))
                };
                match mapped {
                    Ok(_) => stats.accepted += 1,
                    Err(reason) => stats.count_drop(reason),
                }
                writer.write_frame(raw.ts_sec, raw.ts_frac, &raw.data)?;
            }
            writer.finish()?;
            print_stats("rewritten", &stats);
        }
        FileFormat::Records => {
            let (records, _) = read_record_file(open(&a.input)?)?;
            let mapped: Vec<PacketRecord> = records
                .into_iter()
                .map(|r| if a.reverse { deanonymize_record(&key, r) } else { anonymize_record(&key, r) })
                .collect();
            write_record_file(&mapped, &mut out)?;
            println!("rewrote {} records", mapped.len());
        }
    }
    out.flush()?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let m = HypersparseMatrix::read_tsv(open(&a.matrix)?).with_context(|| a.matrix.display().to_string())?;
    let rows = m.row_sums();
    let cols = m.col_sums();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "nnz={}", m.nnz())?;
    writeln!(out, "total={}", m.total()?)?;
    writeln!(out, "sources={}", rows.len())?;
    writeln!(out, "destinations={}", cols.len())?;
    writeln!(out, "top_sources:")?;
    for (ip, count) in rows.top_k(a.top) {
        writeln!(out, "  {}\t{count}", std::net::Ipv4Addr::from(ip))?;
    }
    writeln!(out, "top_destinations:")?;
    for (ip, count) in cols.top_k(a.top) {
        writeln!(out, "  {}\t{count}", std::net::Ipv4Addr::from(ip))?;
    }
    for (path, v) in [(&a.row_sums, &rows), (&a.col_sums, &cols)] {
        if let Some(path) = path {
            let mut w = create(path)?;
            for (i, c) in v.entries() {
                writeln!(w, "{i}\t{c}")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
