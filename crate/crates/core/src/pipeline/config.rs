//! Pipeline configuration and its `key=value` text form.
//!
//! ```text
//! # blank lines and lines starting with '#' are ignored
//! mode = build_only
//! window_size = 131072
//! windows_per_batch = 64
//! batches = 8
//! instances = 4
//! seed = 7
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::window::DEFAULT_WINDOW_SIZE;
use crate::anonymizer::AnonKey;
use crate::ingest::Transport;

pub const DEFAULT_WINDOWS_PER_BATCH: usize = 64;
pub const DEFAULT_BATCHES: usize = 8;
pub const DEFAULT_QUEUE_DEPTH: usize = 4;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BuildOnly,
    BuildIo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BuildOnly => "build_only",
            Mode::BuildIo => "build_io",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "build_only" | "build-only" => Ok(Mode::BuildOnly),
            "build_io" | "build-io" => Ok(Mode::BuildIo),
            other => Err(format!("unknown mode {other:?} (expected build-only or build-io)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Synthetic { seed: u64 },
    Pcap(PathBuf),
    /// `host:port` to receive on. Port 0 picks ephemeral ports; otherwise pair
    /// `p` listens on `port + p`.
    Endpoint(String),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub window_size: usize,
    pub windows_per_batch: usize,
    pub batches: usize,
    /// Build-only: concurrent builder threads. Build+IO: total threads, two per
    /// receiver/builder pair.
    pub instances: usize,
    pub mode: Mode,
    pub queue_depth: usize,
    pub anon: Option<AnonKey>,
    pub source: Source,
    pub transport: Transport,
    /// Build+IO: start an internal synthetic sender per pair (loopback self-test).
    pub spawn_sender: bool,
    /// Seed for internally spawned senders.
    pub sender_seed: u64,
    pub rate_limit: Option<f64>,
    /// Datagram receive ends after this long without traffic.
    pub idle_timeout: Duration,
    /// Keep every window matrix in the report instead of dropping it after timing.
    pub keep_matrices: bool,
    /// Retain every n-th window's records and matrix for verification (0 = off).
    pub verify_every: usize,
    /// Artificial pause before each build+IO window build; zero in real runs.
    pub builder_delay: Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_size: DEFAULT_WINDOW_SIZE,
            windows_per_batch: DEFAULT_WINDOWS_PER_BATCH,
            batches: DEFAULT_BATCHES,
            instances: 1,
            mode: Mode::BuildOnly,
            queue_depth: DEFAULT_QUEUE_DEPTH,
            anon: None,
            source: Source::Synthetic { seed: DEFAULT_SEED },
            transport: Transport::Lossless,
            spawn_sender: true,
            sender_seed: DEFAULT_SEED,
            rate_limit: None,
            idle_timeout: Duration::from_secs(2),
            keep_matrices: false,
            verify_every: 0,
            builder_delay: Duration::ZERO,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.to_string(), reason: e.to_string() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Value { key: key.to_string(), reason: format!("{value:?} is not a boolean") }),
    }
}

impl PipelineConfig {
    /// Records each instance processes when its source never runs dry.
    pub fn packets_per_instance(&self) -> u64 {
        (self.batches * self.windows_per_batch * self.window_size) as u64
    }

    pub fn windows_per_instance(&self) -> usize {
        self.batches * self.windows_per_batch
    }

    /// Receiver/builder pairs in build+IO mode.
    pub fn pairs(&self) -> usize {
        self.instances / 2
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("window_size", self.window_size),
            ("windows_per_batch", self.windows_per_batch),
            ("batches", self.batches),
            ("instances", self.instances),
            ("queue_depth", self.queue_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if let Some(rate) = self.rate_limit {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ConfigError::Invalid("rate_limit must be a positive number".into()));
            }
        }
        match self.mode {
            Mode::BuildOnly => {
                if matches!(self.source, Source::Endpoint(_)) {
                    return Err(ConfigError::Invalid("build_only reads a synthetic or pcap source".into()));
                }
            }
            Mode::BuildIo => {
                if self.instances % 2 != 0 {
                    return Err(ConfigError::Invalid(format!(
                        "build_io needs an even thread count (two per pair), got {}",
                        self.instances
                    )));
                }
                if !matches!(self.source, Source::Endpoint(_)) {
                    return Err(ConfigError::Invalid("build_io receives from an endpoint".into()));
                }
            }
        }
        Ok(())
    }

    /// Applies one setting. Used both for config files and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "window_size" => self.window_size = parse(key, value)?,
            "windows_per_batch" | "windows" => self.windows_per_batch = parse(key, value)?,
            "batches" => self.batches = parse(key, value)?,
            "instances" => self.instances = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "queue_depth" => self.queue_depth = parse(key, value)?,
            "seed" => self.source = Source::Synthetic { seed: parse(key, value)? },
            "pcap" => self.source = Source::Pcap(PathBuf::from(value)),
            "endpoint" => self.source = Source::Endpoint(value.to_string()),
            "transport" => self.transport = parse(key, value)?,
            "spawn_sender" => self.spawn_sender = parse_bool(key, value)?,
            "sender_seed" => self.sender_seed = parse(key, value)?,
            "rate_limit" => self.rate_limit = Some(parse(key, value)?),
            "idle_timeout_ms" => self.idle_timeout = Duration::from_millis(parse(key, value)?),
            "keep_matrices" => self.keep_matrices = parse_bool(key, value)?,
            "verify_every" => self.verify_every = parse(key, value)?,
            "builder_delay_ms" => self.builder_delay = Duration::from_millis(parse(key, value)?),
            "anon_key" => {
                let k = AnonKey::from_hex(value)
                    .map_err(|e| ConfigError::Value { key: key.to_string(), reason: e.to_string() })?;
                self.anon = Some(k);
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: idx + 1, text: raw.to_string() })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }
}
