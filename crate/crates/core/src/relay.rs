//! Encoder proxy, decoder proxy and plain passthrough.
//!
//! The encoder listens where the application sends (the app port), codes each
//! datagram into a systematic symbol, forwards it at once to the peer's coded
//! port, and follows every full block with its `N - K` coded symbols back to
//! back. The decoder listens on the coded port, rebuilds the source datagrams
//! and hands them to the consumer address, so neither application sees the
//! coding layer.
//!
//! [`EncoderCore`] and [`DecoderCore`] hold the protocol logic without any
//! sockets; the `spawn_*` functions wrap them in a receive loop.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use crate::codec::{BlockDecoder, BlockEncoder, CodecError, CodingParams, SymbolKind};
use crate::net::{self, ServiceHandle, MAX_DATAGRAM};
use crate::wire;

pub const DEFAULT_APP_PORT: u16 = 5201;
pub const DEFAULT_CODED_PORT: u16 = 5202;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_millis(50);
pub const DEFAULT_SALVAGE_TIMEOUT: Duration = Duration::from_millis(200);
pub const DEFAULT_MAX_BLOCKS: usize = 8;
pub const DEFAULT_SYMBOL_SIZE: usize = 1400;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("app port and coded port must differ (both {0})")]
    SamePorts(u16),
    #[error("max in-flight blocks must be at least 1")]
    NoBlockWindow,
    #[error("role {0} cannot be started with this function")]
    WrongRole(Role),
    #[error("failed to bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Encoder,
    Decoder,
    Passthrough,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Encoder => "encode",
            Role::Decoder => "decode",
            Role::Passthrough => "passthrough",
        })
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "encode" | "encoder" => Ok(Role::Encoder),
            "decode" | "decoder" => Ok(Role::Decoder),
            "passthrough" => Ok(Role::Passthrough),
            _ => Err(format!("unknown role '{s}'")),
        }
    }
}

/// When the decoder hands payloads to the application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ReleasePolicy {
    /// Hold a block until it reaches full rank, then release it whole, in block order.
    #[default]
    Burst,
    /// Forward systematic payloads on arrival; recovered ones follow on decode.
    Early,
}

impl FromStr for ReleasePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "burst" => Ok(ReleasePolicy::Burst),
            "early" | "early-release" => Ok(ReleasePolicy::Early),
            _ => Err(format!("unknown release policy '{s}'")),
        }
    }
}

impl fmt::Display for ReleasePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReleasePolicy::Burst => "burst",
            ReleasePolicy::Early => "early",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RelayConfig {
    pub role: Role,
    /// Where this proxy receives.
    pub listen: SocketAddr,
    /// Where this proxy sends.
    pub forward: SocketAddr,
    pub coding: CodingParams,
    pub release: ReleasePolicy,
    /// Encoder: flush a partial block after this long without input.
    pub idle_timeout: Duration,
    /// Decoder: abandon an incomplete block after this long without progress.
    pub salvage_timeout: Duration,
    /// Decoder: incomplete blocks kept before the oldest is force-salvaged.
    pub max_blocks: usize,
    /// Base seed for coefficient draws.
    pub seed: u64,
}

impl RelayConfig {
    pub fn new(role: Role, listen: SocketAddr, forward: SocketAddr, coding: CodingParams) -> Self {
        Self {
            role,
            listen,
            forward,
            coding,
            release: ReleasePolicy::Burst,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            salvage_timeout: DEFAULT_SALVAGE_TIMEOUT,
            max_blocks: DEFAULT_MAX_BLOCKS,
            seed: 0,
        }
    }

    /// Port-contract form: the encoder listens on `app_port` and sends to
    /// `peer:coded_port`; the decoder listens on `coded_port` and delivers to
    /// `peer:app_port`; passthrough behaves like the encoder without coding.
    pub fn from_ports(
        role: Role,
        app_port: u16,
        coded_port: u16,
        peer: IpAddr,
        coding: CodingParams,
    ) -> Result<Self, RelayError> {
        if app_port == coded_port {
            return Err(RelayError::SamePorts(app_port));
        }
        let any = IpAddr::V4(Ipv4Addr::UNSPECIFIED);
        let (listen, forward) = match role {
            Role::Encoder | Role::Passthrough => (
                SocketAddr::new(any, app_port),
                SocketAddr::new(peer, coded_port),
            ),
            Role::Decoder => (
                SocketAddr::new(any, coded_port),
                SocketAddr::new(peer, app_port),
            ),
        };
        Ok(Self::new(role, listen, forward, coding))
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if self.max_blocks == 0 {
            return Err(RelayError::NoBlockWindow);
        }
        Ok(())
    }
}

/// Live counters, readable while the proxy runs.
#[derive(Debug, Default)]
pub struct RelayCounters {
    received: AtomicU64,
    sent: AtomicU64,
    send_errors: AtomicU64,
    oversize: AtomicU64,
    malformed: AtomicU64,
    late: AtomicU64,
    dependent: AtomicU64,
    delivered: AtomicU64,
    salvaged: AtomicU64,
    lost: AtomicU64,
    blocks_decoded: AtomicU64,
    blocks_salvaged: AtomicU64,
    partial_flushes: AtomicU64,
}

fn bump(c: &AtomicU64, by: u64) {
    c.fetch_add(by, Ordering::Relaxed);
}

impl RelayCounters {
    pub fn snapshot(&self) -> RelayStats {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        RelayStats {
            received: g(&self.received),
            sent: g(&self.sent),
            send_errors: g(&self.send_errors),
            oversize: g(&self.oversize),
            malformed: g(&self.malformed),
            late: g(&self.late),
            dependent: g(&self.dependent),
            delivered: g(&self.delivered),
            salvaged: g(&self.salvaged),
            lost: g(&self.lost),
            blocks_decoded: g(&self.blocks_decoded),
            blocks_salvaged: g(&self.blocks_salvaged),
            partial_flushes: g(&self.partial_flushes),
        }
    }
}

/// Counter snapshot.
///
/// Encoder: `received` app datagrams, `sent` coded datagrams, `oversize` rejected.
/// Decoder: `received` coded datagrams; every source slot of every block ends
/// in exactly one of `delivered`, `salvaged` or `lost`; bad datagrams land in
/// `malformed`, symbols for finished blocks in `late`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelayStats {
    pub received: u64,
    pub sent: u64,
    pub send_errors: u64,
    pub oversize: u64,
    pub malformed: u64,
    pub late: u64,
    pub dependent: u64,
    pub delivered: u64,
    pub salvaged: u64,
    pub lost: u64,
    pub blocks_decoded: u64,
    pub blocks_salvaged: u64,
    pub partial_flushes: u64,
}

impl RelayStats {
    pub const CSV_HEADER: &'static str = "received,sent,send_errors,oversize,malformed,late,dependent,delivered,salvaged,lost,blocks_decoded,blocks_salvaged,partial_flushes";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.received,
            self.sent,
            self.send_errors,
            self.oversize,
            self.malformed,
            self.late,
            self.dependent,
            self.delivered,
            self.salvaged,
            self.lost,
            self.blocks_decoded,
            self.blocks_salvaged,
            self.partial_flushes
        )
    }
}

/// Per-block coefficient seed derived from the relay seed.
pub fn block_seed(seed: u64, block_id: u32) -> u64 {
    let mut z = seed ^ (block_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Encoder protocol logic.
pub struct EncoderCore {
    encoder: BlockEncoder,
    seed: u64,
    counters: Arc<RelayCounters>,
}

impl EncoderCore {
    pub fn new(coding: CodingParams, seed: u64, counters: Arc<RelayCounters>) -> Self {
        Self {
            encoder: BlockEncoder::new(coding),
            seed,
            counters,
        }
    }

    pub fn has_partial_block(&self) -> bool {
        self.encoder.buffered() > 0
    }

    /// Code one application datagram; appends the datagrams to send to `out`.
    pub fn on_payload(&mut self, payload: &[u8], out: &mut Vec<Vec<u8>>) {
        bump(&self.counters.received, 1);
        match self.encoder.push(payload) {
            Ok(sym) => out.push(wire::serialize(&sym)),
            Err(e) => {
                bump(&self.counters.oversize, 1);
                warn!("dropping datagram: {e}");
                return;
            }
        }
        if self.encoder.is_full() {
            self.flush(out);
        }
    }

    /// Idle timeout expired: code over whatever the current block holds.
    pub fn on_idle(&mut self, out: &mut Vec<Vec<u8>>) {
        if self.has_partial_block() {
            bump(&self.counters.partial_flushes, 1);
            self.flush(out);
        }
    }

    fn flush(&mut self, out: &mut Vec<Vec<u8>>) {
        let seed = block_seed(self.seed, self.encoder.block_id());
        out.extend(self.encoder.flush(seed).iter().map(wire::serialize));
    }
}

struct BlockSlot {
    decoder: BlockDecoder,
    /// Slots already handed to the application.
    delivered: Vec<bool>,
    /// Decoded or salvaged; awaiting in-order emission under burst release.
    ready: Option<Vec<Vec<u8>>>,
    last_progress: Instant,
}

impl BlockSlot {
    fn finished(&self) -> bool {
        self.decoder.is_released()
    }
}

/// Decoder protocol logic.
pub struct DecoderCore {
    policy: ReleasePolicy,
    max_blocks: usize,
    salvage_timeout: Duration,
    blocks: BTreeMap<u32, BlockSlot>,
    /// Lowest block id not yet emitted and retired.
    next_release: Option<u32>,
    max_seen: u32,
    last_k: usize,
    last_activity: Option<Instant>,
    counters: Arc<RelayCounters>,
}

impl DecoderCore {
    pub fn new(
        policy: ReleasePolicy,
        max_blocks: usize,
        salvage_timeout: Duration,
        counters: Arc<RelayCounters>,
    ) -> Self {
        Self {
            policy,
            max_blocks: max_blocks.max(1),
            salvage_timeout,
            blocks: BTreeMap::new(),
            next_release: None,
            max_seen: 0,
            last_k: 0,
            last_activity: None,
            counters,
        }
    }

    /// Incomplete blocks currently held.
    pub fn pending_blocks(&self) -> usize {
        self.blocks.values().filter(|b| !b.finished()).count()
    }

    /// Handle one coded datagram; appends released payloads to `out`.
    pub fn on_datagram(&mut self, datagram: &[u8], now: Instant, out: &mut Vec<Vec<u8>>) {
        bump(&self.counters.received, 1);
        self.last_activity = Some(now);
        let sym = match wire::parse(datagram) {
            Ok(s) => s,
            Err(e) => {
                bump(&self.counters.malformed, 1);
                debug!("malformed datagram: {}", e.code());
                return;
            }
        };
        let id = sym.block_id;
        let next = *self.next_release.get_or_insert(id);
        if id < next || self.blocks.get(&id).is_some_and(BlockSlot::finished) {
            bump(&self.counters.late, 1);
            return;
        }
        self.max_seen = self.max_seen.max(id);

        let slot = self.blocks.entry(id).or_insert_with(|| BlockSlot {
            decoder: BlockDecoder::for_symbol(&sym),
            delivered: vec![false; sym.k()],
            ready: None,
            last_progress: now,
        });
        match slot.decoder.insert(&sym) {
            Ok(0) => bump(&self.counters.dependent, 1),
            Ok(_) => slot.last_progress = now,
            Err(e) => {
                bump(&self.counters.malformed, 1);
                debug!("symbol rejected by block {id}: {e}");
                return;
            }
        }
        self.last_k = slot.decoder.k();
        slot.delivered.truncate(slot.decoder.k());

        if self.policy == ReleasePolicy::Early {
            if let SymbolKind::Systematic(s) = sym.kind {
                let s = s as usize;
                if s < slot.delivered.len() && !slot.delivered[s] {
                    if let Some(p) = slot.decoder.slot_payload(s) {
                        slot.delivered[s] = true;
                        bump(&self.counters.delivered, 1);
                        out.push(p);
                    }
                }
            }
        }

        if slot.decoder.is_decodable() {
            Self::finish(slot, &self.counters, self.policy, false, out);
        }

        // A block two behind the newest one will get no more symbols.
        let stale: Vec<u32> = self
            .blocks
            .range(..self.max_seen.saturating_sub(1))
            .filter(|(_, b)| !b.finished())
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            self.salvage(id, out);
        }
        while self.pending_blocks() > self.max_blocks {
            let oldest = self
                .blocks
                .iter()
                .find(|(_, b)| !b.finished())
                .map(|(&id, _)| id)
                .expect("pending block exists");
            self.salvage(oldest, out);
        }
        self.emit(false, out);
    }

    /// Periodic check: salvage blocks that stopped making progress.
    pub fn on_tick(&mut self, now: Instant, out: &mut Vec<Vec<u8>>) {
        let stale: Vec<u32> = self
            .blocks
            .iter()
            .filter(|(_, b)| !b.finished() && now - b.last_progress >= self.salvage_timeout)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            self.salvage(id, out);
        }
        let quiet = self
            .last_activity
            .is_some_and(|t| now - t >= self.salvage_timeout);
        self.emit(quiet, out);
    }

    /// Salvage everything still open and release it all.
    pub fn drain(&mut self, out: &mut Vec<Vec<u8>>) {
        let open: Vec<u32> = self
            .blocks
            .iter()
            .filter(|(_, b)| !b.finished())
            .map(|(&id, _)| id)
            .collect();
        for id in open {
            self.salvage(id, out);
        }
        self.emit(true, out);
    }

    fn salvage(&mut self, id: u32, out: &mut Vec<Vec<u8>>) {
        if let Some(slot) = self.blocks.get_mut(&id) {
            Self::finish(slot, &self.counters, self.policy, true, out);
        }
    }

    /// Release or salvage a block and account each of its slots exactly once.
    fn finish(
        slot: &mut BlockSlot,
        counters: &RelayCounters,
        policy: ReleasePolicy,
        abandon: bool,
        out: &mut Vec<Vec<u8>>,
    ) {
        let k = slot.decoder.k();
        let mut recovered: Vec<Option<Vec<u8>>> = vec![None; k];
        let decoded = !abandon && slot.decoder.is_decodable();
        let full = if decoded {
            slot.decoder.release().ok()
        } else {
            None
        };
        let decoded_ok = full.is_some();
        match full {
            Some(payloads) => {
                bump(&counters.blocks_decoded, 1);
                for (i, p) in payloads.into_iter().enumerate() {
                    recovered[i] = Some(p);
                }
            }
            None => {
                bump(&counters.blocks_salvaged, 1);
                for (i, p) in slot.decoder.salvage().recovered {
                    recovered[i] = Some(p);
                }
            }
        }
        let counter = if decoded_ok {
            &counters.delivered
        } else {
            &counters.salvaged
        };
        let mut ready = Vec::new();
        for (i, p) in recovered.into_iter().enumerate() {
            if slot.delivered[i] {
                continue;
            }
            match p {
                Some(p) => {
                    bump(counter, 1);
                    slot.delivered[i] = true;
                    ready.push(p);
                }
                None => bump(&counters.lost, 1),
            }
        }
        match policy {
            ReleasePolicy::Early => out.extend(ready),
            ReleasePolicy::Burst => slot.ready = Some(ready),
        }
    }

    /// Hand finished blocks over in block order and retire them.
    fn emit(&mut self, force: bool, out: &mut Vec<Vec<u8>>) {
        let Some(mut next) = self.next_release else {
            return;
        };
        let abandon_below = self.max_seen.saturating_sub(1);
        while let Some((&first, slot)) = self.blocks.first_key_value() {
            if first == next {
                if !slot.finished() {
                    break;
                }
                let mut slot = self.blocks.pop_first().unwrap().1;
                if let Some(ready) = slot.ready.take() {
                    out.extend(ready);
                }
                next = next.wrapping_add(1);
            } else if first > next && (force || next < abandon_below) {
                // whole blocks never seen
                let missing = (first - next) as u64;
                bump(&self.counters.lost, missing * self.last_k as u64);
                next = first;
            } else {
                break;
            }
        }
        self.next_release = Some(next);
    }
}

/// A running proxy.
pub struct RelayHandle {
    service: ServiceHandle<()>,
    counters: Arc<RelayCounters>,
    drain: Arc<AtomicBool>,
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.service.local_addr()
    }

    pub fn stats(&self) -> RelayStats {
        self.counters.snapshot()
    }

    pub fn counters(&self) -> Arc<RelayCounters> {
        self.counters.clone()
    }

    /// Flush (encoder) or salvage and release (decoder) everything pending, keep running.
    pub fn drain(&self) {
        self.drain.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.service.is_finished()
    }

    /// Drain, stop and return the final counters.
    pub fn stop(self) -> RelayStats {
        let counters = self.counters.clone();
        self.service.stop();
        counters.snapshot()
    }
}

struct Sockets {
    rx: UdpSocket,
    tx: UdpSocket,
    local: SocketAddr,
}

fn open(cfg: &RelayConfig) -> Result<Sockets, RelayError> {
    let err = |addr| move |source| RelayError::Bind { addr, source };
    let rx = net::bind_udp(cfg.listen).map_err(err(cfg.listen))?;
    let local = rx.local_addr().map_err(err(cfg.listen))?;
    let tx = net::sender_for(cfg.forward).map_err(err(cfg.forward))?;
    Ok(Sockets { rx, tx, local })
}

fn send_all(s: &Sockets, to: SocketAddr, out: &mut Vec<Vec<u8>>, counters: &RelayCounters) {
    for d in out.drain(..) {
        match s.tx.send_to(&d, to) {
            Ok(_) => bump(&counters.sent, 1),
            Err(e) => {
                bump(&counters.send_errors, 1);
                debug!("send to {to} failed: {e}");
            }
        }
    }
}

fn start(
    cfg: &RelayConfig,
    name: &str,
    body: impl FnOnce(Sockets, &AtomicBool, &AtomicBool, Arc<RelayCounters>) + Send + 'static,
) -> Result<RelayHandle, RelayError> {
    cfg.validate()?;
    let sockets = open(cfg)?;
    let local = sockets.local;
    let stop = Arc::new(AtomicBool::new(false));
    let drain = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(RelayCounters::default());
    let join = {
        let (stop, drain, counters) = (stop.clone(), drain.clone(), counters.clone());
        thread::Builder::new()
            .name(name.into())
            .spawn(move || body(sockets, &stop, &drain, counters))
            .expect("spawn relay thread")
    };
    Ok(RelayHandle {
        service: ServiceHandle::new(local, stop, join),
        counters,
        drain,
    })
}

/// Start whichever proxy `cfg.role` names.
pub fn spawn(cfg: RelayConfig) -> Result<RelayHandle, RelayError> {
    match cfg.role {
        Role::Encoder => spawn_encoder(cfg),
        Role::Decoder => spawn_decoder(cfg),
        Role::Passthrough => spawn_passthrough(cfg),
    }
}

pub fn spawn_encoder(cfg: RelayConfig) -> Result<RelayHandle, RelayError> {
    if cfg.role != Role::Encoder {
        return Err(RelayError::WrongRole(cfg.role));
    }
    let (coding, seed, idle, forward) = (cfg.coding, cfg.seed, cfg.idle_timeout, cfg.forward);
    start(&cfg, "nc-encoder", move |s, stop, drain, counters| {
        let mut core = EncoderCore::new(coding, seed, counters.clone());
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut out = Vec::new();
        let mut last_rx = Instant::now();
        loop {
            if stop.load(Ordering::Relaxed) || drain.swap(false, Ordering::SeqCst) {
                core.on_idle(&mut out);
                send_all(&s, forward, &mut out, &counters);
                if stop.load(Ordering::Relaxed) {
                    break;
                }
            }
            let wait = if core.has_partial_block() {
                idle.saturating_sub(last_rx.elapsed())
                    .clamp(Duration::from_millis(1), net::POLL)
            } else {
                net::POLL
            };
            let _ = s.rx.set_read_timeout(Some(wait));
            match s.rx.recv_from(&mut buf) {
                Ok((len, _)) => {
                    last_rx = Instant::now();
                    core.on_payload(&buf[..len], &mut out);
                }
                Err(e) if net::is_timeout(&e) => {
                    if core.has_partial_block() && last_rx.elapsed() >= idle {
                        core.on_idle(&mut out);
                    }
                }
                Err(e) => warn!("encoder receive failed: {e}"),
            }
            send_all(&s, forward, &mut out, &counters);
        }
    })
}

pub fn spawn_decoder(cfg: RelayConfig) -> Result<RelayHandle, RelayError> {
    if cfg.role != Role::Decoder {
        return Err(RelayError::WrongRole(cfg.role));
    }
    let (policy, max_blocks, salvage, forward) = (
        cfg.release,
        cfg.max_blocks,
        cfg.salvage_timeout,
        cfg.forward,
    );
    start(&cfg, "nc-decoder", move |s, stop, drain, counters| {
        let mut core = DecoderCore::new(policy, max_blocks, salvage, counters.clone());
        let mut buf = vec![0u8; MAX_DATAGRAM];
        let mut out = Vec::new();
        let mut last_tick = Instant::now();
        loop {
            if stop.load(Ordering::Relaxed) || drain.swap(false, Ordering::SeqCst) {
                core.drain(&mut out);
                send_all(&s, forward, &mut out, &counters);
                if stop.load(Ordering::Relaxed) {
                    break;
                }
            }
            match s.rx.recv_from(&mut buf) {
                Ok((len, _)) => core.on_datagram(&buf[..len], Instant::now(), &mut out),
                Err(e) if net::is_timeout(&e) => {}
                Err(e) => warn!("decoder receive failed: {e}"),
            }
            let now = Instant::now();
            if now - last_tick >= net::POLL {
                core.on_tick(now, &mut out);
                last_tick = now;
            }
            send_all(&s, forward, &mut out, &counters);
        }
    })
}

/// Forward datagrams unmodified; the no-correction baseline path.
pub fn spawn_passthrough(cfg: RelayConfig) -> Result<RelayHandle, RelayError> {
    if cfg.role != Role::Passthrough {
        return Err(RelayError::WrongRole(cfg.role));
    }
    let forward = cfg.forward;
    start(&cfg, "nc-passthrough", move |s, stop, _drain, counters| {
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while !stop.load(Ordering::Relaxed) {
            match s.rx.recv_from(&mut buf) {
                Ok((len, _)) => {
                    bump(&counters.received, 1);
                    bump(&counters.delivered, 1);
                    match s.tx.send_to(&buf[..len], forward) {
                        Ok(_) => bump(&counters.sent, 1),
                        Err(_) => bump(&counters.send_errors, 1),
                    }
                }
                Err(e) if net::is_timeout(&e) => {}
                Err(e) => warn!("passthrough receive failed: {e}"),
            }
        }
    })
}
