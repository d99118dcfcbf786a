//! End-to-end experiment campaigns over loopback.
//!
//! One run wires `generator -> encoder -> channel -> decoder -> sink` (or
//! `generator -> passthrough -> channel -> sink` without correction) on
//! ephemeral loopback ports, pushes a paced flow through it and collects the
//! sink's metrics. HARQ/ARQ scenarios are not run live: their rows come from
//! the transmission-cost models.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use log::{info, warn};
use thiserror::Error;

use crate::channel::{self, ChannelConfig, ChannelCounters, ChannelError};
use crate::codec::{CodingParams, LENGTH_PREFIX};
use crate::config::{self, ConfigError, ConfigFile, Section};
use crate::metrics::{emit_csv, fmt_sig, RunRow};
use crate::models::{self, LossRate, ModelError, RetxParams};
use crate::relay::{
    self, RelayConfig, RelayError, RelayStats, ReleasePolicy, Role, DEFAULT_IDLE_TIMEOUT,
    DEFAULT_MAX_BLOCKS, DEFAULT_SALVAGE_TIMEOUT,
};
use crate::traffic::{self, SendReport, SinkConfig, SinkReport, TrafficConfig, TrafficError};

/// Loss rates swept when a scenario names no grid.
pub const DEFAULT_GRID: [f64; 10] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45];
pub const DEFAULT_RATE_BPS: u64 = 10_000_000;
pub const DEFAULT_DURATION: Duration = Duration::from_secs(10);

/// Silence at the sink that ends a run once the sender is done.
const SETTLE: Duration = Duration::from_millis(150);

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario {scenario}: {reason}")]
    Scenario { scenario: String, reason: String },
    #[error("duplicate scenario name {0:?}")]
    DuplicateName(String),
    #[error("campaign has no scenarios")]
    Empty,
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> LabError {
    let context = context.into();
    move |source| LabError::Io { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    None,
    Nc,
    HarqArq,
}

impl FromStr for Correction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Correction::None),
            "nc" => Ok(Correction::Nc),
            "harq_arq" => Ok(Correction::HarqArq),
            _ => Err(format!("unknown correction '{s}' (none | nc | harq_arq)")),
        }
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correction::None => "none",
            Correction::Nc => "nc",
            Correction::HarqArq => "harq_arq",
        })
    }
}

/// Everything one live run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub correction: Correction,
    /// Required when `correction` is `Nc`.
    pub coding: Option<CodingParams>,
    pub loss_rate: f64,
    pub traffic: TrafficConfig,
    pub seed: u64,
    pub release: ReleasePolicy,
    pub idle_timeout: Duration,
    pub salvage_timeout: Duration,
    pub max_blocks: usize,
    pub channel_delay: Duration,
    pub channel_delay_jitter: Duration,
}

impl PipelineSpec {
    pub fn new(
        correction: Correction,
        coding: Option<CodingParams>,
        loss_rate: f64,
        traffic: TrafficConfig,
    ) -> Self {
        Self {
            correction,
            coding,
            loss_rate,
            traffic,
            seed: 1,
            release: ReleasePolicy::Burst,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            salvage_timeout: DEFAULT_SALVAGE_TIMEOUT,
            max_blocks: DEFAULT_MAX_BLOCKS,
            channel_delay: Duration::ZERO,
            channel_delay_jitter: Duration::ZERO,
        }
    }
}

/// Block geometry sized so each slot holds exactly one payload.
pub fn coding_for(
    k: usize,
    n: usize,
    payload_size: usize,
) -> Result<CodingParams, crate::codec::CodecError> {
    CodingParams::new(k, n, payload_size + LENGTH_PREFIX)
}

/// Raw results of one live run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub sent: SendReport,
    pub sink: SinkReport,
    pub channel: ChannelCounters,
    /// Encoder or passthrough counters.
    pub ingress: RelayStats,
    pub decoder: Option<RelayStats>,
}

impl RunOutcome {
    /// Datagrams put on the channel per source datagram.
    pub fn tx_per_source_packet(&self) -> f64 {
        if self.ingress.received == 0 {
            0.0
        } else {
            self.ingress.sent as f64 / self.ingress.received as f64
        }
    }

    /// `metric,value` listing of every counter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        let f = &self.sink.flow;
        put("sent_packets", self.sent.packets.to_string());
        put("sent_bytes", self.sent.bytes.to_string());
        put("send_rate_mbps", fmt_sig(self.sent.rate_bps / 1e6));
        put("delivered_packets", f.packets_delivered.to_string());
        put("lost_packets", f.packets_lost.to_string());
        put("duplicates", f.duplicates.to_string());
        put("delivered_bytes", f.bytes_delivered.to_string());
        put("throughput_mbps", fmt_sig(f.throughput_bps / 1e6));
        put("arrival_rate_mbps", fmt_sig(f.arrival_rate_bps / 1e6));
        put("jitter_final_ms", fmt_sig(f.jitter_ms));
        put("jitter_mean_ms", fmt_sig(f.mean_jitter_ms));
        put("delivered_loss", fmt_sig(f.loss_fraction));
        put(
            "stream_identical",
            (self.sink.digest == self.sent.digest).to_string(),
        );
        put("channel_seen", self.channel.seen.to_string());
        put("channel_dropped", self.channel.dropped.to_string());
        put("channel_forwarded", self.channel.forwarded.to_string());
        put("ingress_received", self.ingress.received.to_string());
        put("ingress_sent", self.ingress.sent.to_string());
        put("ingress_oversize", self.ingress.oversize.to_string());
        put("partial_flushes", self.ingress.partial_flushes.to_string());
        put("tx_per_source_packet", fmt_sig(self.tx_per_source_packet()));
        if let Some(d) = &self.decoder {
            put("decoder_received", d.received.to_string());
            put("decoder_malformed", d.malformed.to_string());
            put("decoder_late", d.late.to_string());
            put("decoder_delivered", d.delivered.to_string());
            put("decoder_salvaged", d.salvaged.to_string());
            put("decoder_lost", d.lost.to_string());
            put("blocks_decoded", d.blocks_decoded.to_string());
            put("blocks_salvaged", d.blocks_salvaged.to_string());
        }
        out
    }
}

/// Run one flow through a fresh loopback pipeline.
pub fn run_pipeline(spec: &PipelineSpec) -> Result<RunOutcome, LabError> {
    spec.traffic.validate()?;
    let loopback: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
    let coding = match spec.correction {
        Correction::Nc => Some(spec.coding.ok_or_else(|| LabError::Scenario {
            scenario: "pipeline".into(),
            reason: "nc run without coding parameters".into(),
        })?),
        Correction::None => None,
        Correction::HarqArq => {
            return Err(LabError::Scenario {
                scenario: "pipeline".into(),
                reason: "harq_arq is modelled, not run live".into(),
            })
        }
    };

    let sink = traffic::spawn_sink(
        loopback,
        SinkConfig {
            window: Some(spec.traffic.duration),
            expected_packets: Some(spec.traffic.packet_count()),
        },
    )
    .map_err(io_err("sink"))?;

    let relay_cfg = |role, listen, forward, coding| {
        let mut cfg = RelayConfig::new(role, listen, forward, coding);
        cfg.release = spec.release;
        cfg.idle_timeout = spec.idle_timeout;
        cfg.salvage_timeout = spec.salvage_timeout;
        cfg.max_blocks = spec.max_blocks;
        cfg.seed = spec.seed;
        cfg
    };

    let decoder = match coding {
        Some(c) => Some(relay::spawn_decoder(relay_cfg(
            Role::Decoder,
            loopback,
            sink.local_addr(),
            c,
        ))?),
        None => None,
    };
    let channel_out = decoder
        .as_ref()
        .map_or(sink.local_addr(), |d| d.local_addr());
    let chan_cfg = ChannelConfig::new(spec.loss_rate, spec.seed ^ 0xC4A2_11E1)?
        .with_delay(spec.channel_delay, spec.channel_delay_jitter);
    let chan = channel::spawn(chan_cfg, loopback, channel_out)?;
    let ingress = match coding {
        Some(c) => relay::spawn_encoder(relay_cfg(Role::Encoder, loopback, chan.local_addr(), c))?,
        None => {
            // the passthrough ignores the block geometry
            let c = CodingParams::new(1, 1, spec.traffic.payload_size + LENGTH_PREFIX)
                .map_err(RelayError::from)?;
            relay::spawn_passthrough(relay_cfg(Role::Passthrough, loopback, chan.local_addr(), c))?
        }
    };

    let sent =
        traffic::generate(&spec.traffic, ingress.local_addr(), None).map_err(io_err("generator"));

    // Shut down front to back so nothing in flight is cut off.
    let ingress = ingress.stop();
    thread::sleep(spec.channel_delay + spec.channel_delay_jitter + Duration::from_millis(20));
    let channel = chan.stop();
    let decoder = decoder.map(|d| {
        sink.wait_quiet(SETTLE, spec.salvage_timeout * 4);
        d.stop()
    });
    sink.wait_quiet(SETTLE, Duration::from_secs(2));
    let sink = sink.stop();
    Ok(RunOutcome {
        sent: sent?,
        sink,
        channel,
        ingress,
        decoder,
    })
}

/// One scenario of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub correction: Correction,
    /// `(k, n)` when `correction` is `Nc`.
    pub block: Option<(usize, usize)>,
    pub grid: Vec<f64>,
    pub rate_bps: u64,
    pub payload_size: usize,
    pub duration: Duration,
    pub seed: u64,
    pub release: ReleasePolicy,
    pub idle_timeout: Duration,
    pub salvage_timeout: Duration,
    pub channel_delay: Duration,
    pub channel_delay_jitter: Duration,
    pub retx: RetxParams,
}

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, correction: Correction) -> Self {
        Self {
            name: name.into(),
            correction,
            block: None,
            grid: DEFAULT_GRID.to_vec(),
            rate_bps: DEFAULT_RATE_BPS,
            payload_size: traffic::DEFAULT_PAYLOAD_SIZE,
            duration: DEFAULT_DURATION,
            seed: 1,
            release: ReleasePolicy::Burst,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            salvage_timeout: DEFAULT_SALVAGE_TIMEOUT,
            channel_delay: Duration::ZERO,
            channel_delay_jitter: Duration::ZERO,
            retx: RetxParams::default(),
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> LabError {
        LabError::Scenario {
            scenario: self.name.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.name.is_empty() {
            return Err(self.invalid("empty name"));
        }
        if self.grid.is_empty() {
            return Err(self.invalid("empty loss grid"));
        }
        if let Some(r) = self.grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(self.invalid(format!("loss rate {r} outside [0, 1]")));
        }
        match (self.correction, self.block) {
            (Correction::Nc, None) => return Err(self.invalid("nc needs k and n")),
            (Correction::Nc, Some((k, n))) => {
                self.coding_params(k, n)?;
            }
            (Correction::HarqArq, _) => self.retx.validate()?,
            _ => {}
        }
        if self.correction != Correction::HarqArq {
            TrafficConfig::new(self.rate_bps, self.payload_size, self.duration)?;
        }
        Ok(())
    }

    fn coding_params(&self, k: usize, n: usize) -> Result<CodingParams, LabError> {
        coding_for(k, n, self.payload_size).map_err(|e| self.invalid(e.to_string()))
    }

    /// K/N for coded scenarios, 1 for the uncoded path.
    pub fn code_rate(&self) -> Option<f64> {
        match (self.correction, self.block) {
            (Correction::Nc, Some((k, n))) => Some(k as f64 / n as f64),
            (Correction::None, _) => Some(1.0),
            _ => None,
        }
    }

    /// Live-run description for loss rate `r`; the channel seed varies with the grid index.
    pub fn pipeline(&self, index: usize, r: f64) -> Result<PipelineSpec, LabError> {
        let traffic = TrafficConfig::new(self.rate_bps, self.payload_size, self.duration)?;
        let coding = match self.block {
            Some((k, n)) if self.correction == Correction::Nc => Some(self.coding_params(k, n)?),
            _ => None,
        };
        let mut p = PipelineSpec::new(self.correction, coding, r, traffic);
        p.seed = self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64);
        p.release = self.release;
        p.idle_timeout = self.idle_timeout;
        p.salvage_timeout = self.salvage_timeout;
        p.channel_delay = self.channel_delay;
        p.channel_delay_jitter = self.channel_delay_jitter;
        Ok(p)
    }
}

const SCENARIO_KEYS: [&str; 15] = [
    "correction",
    "k",
    "n",
    "grid",
    "rate",
    "payload_size",
    "duration",
    "seed",
    "release",
    "idle_timeout_ms",
    "salvage_timeout_ms",
    "delay_ms",
    "delay_jitter_ms",
    "harq_max_tx",
    "arq_max_rounds",
];

fn apply(spec: &mut ScenarioSpec, s: &Section) -> Result<(), LabError> {
    let bad = |key: &str, v: &str, reason: String| {
        LabError::Config(ConfigError::Value {
            key: key.into(),
            value: v.into(),
            reason,
        })
    };
    if let Some(c) = s.get("correction") {
        spec.correction = c.parse().map_err(|e| bad("correction", c, e))?;
    }
    if let Some(g) = s.get("grid") {
        spec.grid = parse_grid(g).map_err(|e| bad("grid", g, e))?;
    }
    if let Some(r) = s.get("rate") {
        spec.rate_bps = traffic::parse_rate(r).map_err(|e| bad("rate", r, e))?;
    }
    if let Some(d) = s.parse::<f64>("duration")? {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(bad(
                "duration",
                &d.to_string(),
                "must be non-negative".into(),
            ));
        }
        spec.duration = Duration::from_secs_f64(d);
    }
    if let Some(p) = s.parse("payload_size")? {
        spec.payload_size = p;
    }
    if let Some(seed) = s.parse("seed")? {
        spec.seed = seed;
    }
    if let Some(r) = s.parse("release")? {
        spec.release = r;
    }
    let ms = |key: &str| -> Result<Option<Duration>, LabError> {
        Ok(s.parse::<u64>(key)?.map(Duration::from_millis))
    };
    if let Some(d) = ms("idle_timeout_ms")? {
        spec.idle_timeout = d;
    }
    if let Some(d) = ms("salvage_timeout_ms")? {
        spec.salvage_timeout = d;
    }
    if let Some(d) = ms("delay_ms")? {
        spec.channel_delay = d;
    }
    if let Some(d) = ms("delay_jitter_ms")? {
        spec.channel_delay_jitter = d;
    }
    if let Some(h) = s.parse("harq_max_tx")? {
        spec.retx.harq_max_tx = h;
    }
    if let Some(a) = s.parse("arq_max_rounds")? {
        spec.retx.arq_max_rounds = a;
    }
    match (s.parse::<usize>("k")?, s.parse::<usize>("n")?) {
        (Some(k), Some(n)) => spec.block = Some((k, n)),
        (None, None) => {}
        _ => return Err(spec.invalid("k and n must be given together")),
    }
    Ok(())
}

/// Comma- or whitespace-separated loss rates, or `default`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    if text.trim() == "default" {
        return Ok(DEFAULT_GRID.to_vec());
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            models::parse_rational(t)
                .map(|q| models::to_f64(&q))
                .map_err(|e| format!("{t}: {e}"))
        })
        .collect()
}

/// Parse a campaign file: global keys set defaults, each `[name]` section is a scenario.
pub fn parse_campaign(text: &str) -> Result<Vec<ScenarioSpec>, LabError> {
    let file: ConfigFile = config::parse(text)?;
    file.global.expect_keys("global section", &SCENARIO_KEYS)?;
    let mut base = ScenarioSpec::new("", Correction::None);
    apply(&mut base, &file.global)?;
    if file.sections.is_empty() {
        return Err(LabError::Empty);
    }
    let mut specs = Vec::with_capacity(file.sections.len());
    for (name, section) in &file.sections {
        section.expect_keys(name, &SCENARIO_KEYS)?;
        let mut spec = base.clone();
        spec.name = name.clone();
        apply(&mut spec, section)?;
        spec.validate()?;
        specs.push(spec);
    }
    Ok(specs)
}

/// Outcome of [`run_campaign`].
#[derive(Debug, Clone, Default)]
pub struct Campaign {
    pub rows: Vec<RunRow>,
    /// `(scenario, loss rate, error)` for runs that did not complete.
    pub failures: Vec<(String, f64, String)>,
}

impl Campaign {
    pub fn csv(&self) -> String {
        emit_csv(&self.rows)
    }
}

/// Label used for a grid point in file names.
fn r_label(r: f64) -> String {
    format!("r{}", fmt_sig(r)).replace('.', "p")
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Modelled HARQ/ARQ rows: one for the cheapest and one for the costliest recovery.
pub fn harq_rows(spec: &ScenarioSpec, r: f64) -> Result<[RunRow; 2], LabError> {
    let loss = LossRate::from_f64(r)?;
    let row = |suffix: &str, cost: models::Rational| RunRow {
        scenario: format!("{}_{suffix}", spec.name),
        loss_rate: r,
        tx_per_source_packet: Some(models::to_f64(&cost)),
        ..RunRow::default()
    };
    Ok([
        row("min", spec.retx.min_cost(loss)),
        row("max", spec.retx.max_cost(loss)),
    ])
}

/// Run every scenario over its grid, writing `campaign.csv` and `runs/*.csv` under `out`.
///
/// A run that fails leaves a row with empty measurement cells and an entry in
/// `failures.txt`; the campaign carries on.
pub fn run_campaign(specs: &[ScenarioSpec], out: &Path) -> Result<Campaign, LabError> {
    if specs.is_empty() {
        return Err(LabError::Empty);
    }
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if specs[..i].iter().any(|o| o.name == s.name) {
            return Err(LabError::DuplicateName(s.name.clone()));
        }
    }
    let runs_dir: PathBuf = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(format!("create {}", runs_dir.display())))?;

    let mut campaign = Campaign::default();
    for spec in specs {
        for (index, &r) in spec.grid.iter().enumerate() {
            if spec.correction == Correction::HarqArq {
                campaign.rows.extend(harq_rows(spec, r)?);
                continue;
            }
            info!("running {} at r={}", spec.name, fmt_sig(r));
            let mut row = RunRow {
                scenario: spec.name.clone(),
                loss_rate: r,
                code_rate: spec.code_rate(),
                ..RunRow::default()
            };
            match spec.pipeline(index, r).and_then(|p| run_pipeline(&p)) {
                Ok(outcome) => {
                    let f = &outcome.sink.flow;
                    row.throughput_mbps = Some(f.throughput_bps / 1e6);
                    row.jitter_ms = Some(f.mean_jitter_ms);
                    row.delivered_loss = Some(f.loss_fraction);
                    row.tx_per_source_packet = Some(outcome.tx_per_source_packet());
                    let path =
                        runs_dir.join(format!("{}_{}.csv", file_safe(&spec.name), r_label(r)));
                    fs::write(&path, outcome.to_csv())
                        .map_err(io_err(format!("write {}", path.display())))?;
                }
                Err(e) => {
                    warn!("{} at r={} failed: {e}", spec.name, fmt_sig(r));
                    campaign
                        .failures
                        .push((spec.name.clone(), r, e.to_string()));
                }
            }
            campaign.rows.push(row);
        }
    }

    let csv_path = out.join("campaign.csv");
    fs::write(&csv_path, campaign.csv())
        .map_err(io_err(format!("write {}", csv_path.display())))?;
    let failures_path = out.join("failures.txt");
    if campaign.failures.is_empty() {
        let _ = fs::remove_file(&failures_path);
    } else {
        let text: String = campaign
            .failures
            .iter()
            .map(|(s, r, e)| format!("{s},{},{e}\n", fmt_sig(*r)))
            .collect();
        fs::write(&failures_path, text)
            .map_err(io_err(format!("write {}", failures_path.display())))?;
    }
    Ok(campaign)
}

/// One line of the NC versus HARQ/ARQ comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareLine {
    pub scenario: String,
    pub loss_rate: f64,
    pub code_rate: f64,
    pub delivered_loss: Option<f64>,
    pub measured_tx: Option<f64>,
    /// `1/CR`.
    pub nc_tx: f64,
    pub ha_min: f64,
    pub ha_max: f64,
    /// `p_ha_max / p_nc_capacity`; absent at `r = 1`.
    pub advantage: Option<f64>,
    /// `1/CR < p_ha_min`: the code is cheaper than the best HARQ/ARQ case.
    pub nc_cheaper: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompareReport {
    pub lines: Vec<CompareLine>,
    pub warnings: Vec<String>,
}

impl CompareReport {
    /// `(scenario, lo, hi)`: grid range where the code beats the cheapest HARQ/ARQ case.
    pub fn cheaper_ranges(&self) -> Vec<(String, f64, f64)> {
        let mut out: Vec<(String, f64, f64)> = Vec::new();
        for l in self.lines.iter().filter(|l| l.nc_cheaper) {
            match out.iter_mut().find(|(s, _, _)| *s == l.scenario) {
                Some(e) => {
                    e.1 = e.1.min(l.loss_rate);
                    e.2 = e.2.max(l.loss_rate);
                }
                None => out.push((l.scenario.clone(), l.loss_rate, l.loss_rate)),
            }
        }
        out
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_else(|| "-".into());
        writeln!(
            f,
            "{:<16} {:>6} {:>8} {:>10} {:>9} {:>7} {:>17} {:>9}  flag",
            "scenario", "r", "cr", "nc_loss", "nc_tx", "1/cr", "harq_arq[min,max]", "advantage"
        )?;
        for l in &self.lines {
            writeln!(
                f,
                "{:<16} {:>6} {:>8} {:>10} {:>9} {:>7} {:>17} {:>9}  {}",
                l.scenario,
                fmt_sig(l.loss_rate),
                fmt_sig(l.code_rate),
                opt(l.delivered_loss),
                opt(l.measured_tx),
                fmt_sig(l.nc_tx),
                format!("[{}, {}]", fmt_sig(l.ha_min), fmt_sig(l.ha_max)),
                opt(l.advantage),
                if l.nc_cheaper { "nc<ha_min" } else { "" }
            )?;
        }
        for (s, lo, hi) in self.cheaper_ranges() {
            writeln!(
                f,
                "{s}: 1/CR below p_ha_min for r in [{}, {}]",
                fmt_sig(lo),
                fmt_sig(hi)
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Compare every coded scenario against the HARQ/ARQ bracket at each loss rate.
pub fn compare_report(rows: &[RunRow]) -> CompareReport {
    let mut report = CompareReport::default();
    let coded: Vec<&RunRow> = rows
        .iter()
        .filter(|r| r.code_rate.is_some_and(|cr| cr > 0.0 && cr < 1.0))
        .collect();
    if coded.is_empty() {
        report.warnings.push("no coded scenario rows".into());
    }
    for row in &coded {
        let cr = row.code_rate.expect("filtered on code rate");
        let Ok(loss) = LossRate::from_f64(row.loss_rate) else {
            report.warnings.push(format!(
                "{}: loss rate {} out of range",
                row.scenario, row.loss_rate
            ));
            continue;
        };
        if row.delivered_loss.is_none() {
            report.warnings.push(format!(
                "{} at r={}: no measurement (run failed)",
                row.scenario,
                fmt_sig(row.loss_rate)
            ));
        }
        let ha_min = models::to_f64(&models::p_ha_min(loss));
        let nc_tx = 1.0 / cr;
        report.lines.push(CompareLine {
            scenario: row.scenario.clone(),
            loss_rate: row.loss_rate,
            code_rate: cr,
            delivered_loss: row.delivered_loss,
            measured_tx: row.tx_per_source_packet,
            nc_tx,
            ha_min,
            ha_max: models::to_f64(&models::p_ha_max(loss)),
            advantage: models::nc_advantage(loss).ok().map(|a| models::to_f64(&a)),
            nc_cheaper: nc_tx < ha_min,
        });
    }
    // every coded scenario should cover the union of loss rates seen
    let mut grid: Vec<f64> = coded.iter().map(|r| r.loss_rate).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut names: Vec<&str> = coded.iter().map(|r| r.scenario.as_str()).collect();
    names.dedup();
    for name in names {
        for &r in &grid {
            if !coded
                .iter()
                .any(|row| row.scenario == name && row.loss_rate == r)
            {
                report
                    .warnings
                    .push(format!("{name}: missing row for r={}", fmt_sig(r)));
            }
        }
    }
    report
}
