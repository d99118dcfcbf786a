//! Paced UDP traffic generator and measuring sink.
//!
//! Every datagram starts with an 8-octet big-endian sequence number and an
//! 8-octet big-endian send timestamp (microseconds since the generator
//! started, monotonic clock), followed by filler derived from the sequence
//! number. The sink feeds these into [`FlowMetrics`].

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{FlowMetrics, FlowReport};
use crate::net::{self, ServiceHandle, MAX_DATAGRAM};

/// Sequence number plus send timestamp.
pub const HEAD_LEN: usize = 16;
pub const DEFAULT_PAYLOAD_SIZE: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrafficError {
    #[error("payload size {0} below the {HEAD_LEN}-octet header")]
    PayloadTooSmall(usize),
    #[error("target rate must be positive")]
    ZeroRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficConfig {
    /// Target rate in bits per second of UDP payload.
    pub rate_bps: u64,
    pub payload_size: usize,
    pub duration: Duration,
}

impl TrafficConfig {
    pub fn new(
        rate_bps: u64,
        payload_size: usize,
        duration: Duration,
    ) -> Result<Self, TrafficError> {
        let cfg = Self {
            rate_bps,
            payload_size,
            duration,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.payload_size < HEAD_LEN {
            return Err(TrafficError::PayloadTooSmall(self.payload_size));
        }
        if self.rate_bps == 0 {
            return Err(TrafficError::ZeroRate);
        }
        Ok(())
    }

    /// Send spacing: one payload's worth of bits at the target rate.
    pub fn interval(&self) -> Duration {
        let ns = 8 * self.payload_size as u128 * 1_000_000_000 / self.rate_bps as u128;
        Duration::from_nanos(ns as u64)
    }

    /// Packets in one run: `ceil(rate * duration / (8 * payload_size))`.
    pub fn packet_count(&self) -> u64 {
        let bits = self.rate_bps as u128 * self.duration.as_nanos();
        let per_packet = 8 * self.payload_size as u128 * 1_000_000_000;
        bits.div_ceil(per_packet) as u64
    }

    /// Send time of packet `seq` relative to the start of the run.
    fn offset(&self, seq: u64) -> Duration {
        let ns =
            seq as u128 * 8 * self.payload_size as u128 * 1_000_000_000 / self.rate_bps as u128;
        Duration::from_nanos(ns as u64)
    }
}

/// Parse a bit rate such as `10000000`, `10M`, `2.5m` or `500k`.
pub fn parse_rate(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let (num, scale) = match t.char_indices().last() {
        Some((i, 'k' | 'K')) => (&t[..i], 1e3),
        Some((i, 'm' | 'M')) => (&t[..i], 1e6),
        Some((i, 'g' | 'G')) => (&t[..i], 1e9),
        _ => (t, 1.0),
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad rate '{text}'"))?;
    let bps = (v * scale).round();
    if !(bps >= 1.0 && bps < u64::MAX as f64) {
        return Err(format!("rate '{text}' must be positive"));
    }
    Ok(bps as u64)
}

/// Fill `buf` with the datagram for `seq` sent at `send_us`.
pub fn write_payload(buf: &mut [u8], seq: u64, send_us: i64) {
    buf[..8].copy_from_slice(&seq.to_be_bytes());
    buf[8..HEAD_LEN].copy_from_slice(&send_us.to_be_bytes());
    let mut x = seq.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    for b in &mut buf[HEAD_LEN..] {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        *b = x as u8;
    }
}

/// Sequence number and send timestamp from a datagram head.
pub fn read_head(datagram: &[u8]) -> Option<(u64, i64)> {
    let seq = u64::from_be_bytes(datagram.get(..8)?.try_into().ok()?);
    let ts = i64::from_be_bytes(datagram.get(8..HEAD_LEN)?.try_into().ok()?);
    Some((seq, ts))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SendReport {
    pub packets: u64,
    pub bytes: u64,
    pub send_errors: u64,
    /// Time from the first to the last send.
    pub span: Duration,
    /// Payload rate over the send span.
    pub rate_bps: f64,
    /// SHA-256 over all payloads in send order.
    pub digest: [u8; 32],
}

impl SendReport {
    pub const CSV_HEADER: &'static str = "packets,bytes,send_errors,span_s,rate_mbps";

    pub fn to_csv(&self) -> String {
        use crate::metrics::fmt_sig;
        format!(
            "{}\n{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.packets,
            self.bytes,
            self.send_errors,
            fmt_sig(self.span.as_secs_f64()),
            fmt_sig(self.rate_bps / 1e6)
        )
    }
}

/// Send `cfg.packet_count()` datagrams to `dest`, paced against absolute
/// deadlines so sleep overshoot does not accumulate. `stop` ends the run early.
pub fn generate(
    cfg: &TrafficConfig,
    dest: SocketAddr,
    stop: Option<&AtomicBool>,
) -> io::Result<SendReport> {
    cfg.validate()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let socket = net::sender_for(dest)?;
    let count = cfg.packet_count();
    let mut buf = vec![0u8; cfg.payload_size];
    let mut hasher = Sha256::new();
    let mut report = SendReport::default();
    let start = Instant::now();
    let mut last = start;
    for seq in 0..count {
        if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
            break;
        }
        let due = start + cfg.offset(seq);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
        let sent_at = Instant::now();
        write_payload(&mut buf, seq, (sent_at - start).as_micros() as i64);
        match socket.send_to(&buf, dest) {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {
                report.send_errors += 1;
            }
            Err(e) => return Err(e),
        }
        hasher.update(&buf);
        report.packets += 1;
        report.bytes += buf.len() as u64;
        last = sent_at;
    }
    report.span = last - start;
    if report.packets > 1 && !report.span.is_zero() {
        let bits = 8.0 * (report.bytes - cfg.payload_size as u64) as f64;
        report.rate_bps = bits / report.span.as_secs_f64();
    }
    report.digest = hasher.finalize().into();
    debug!("generator done: {report:?}");
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinkConfig {
    /// Throughput window; `None` uses the arrival span.
    pub window: Option<Duration>,
    /// Packets the sender emitted, so a lost tail counts as loss.
    pub expected_packets: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkReport {
    pub flow: FlowReport,
    /// Datagrams too short to carry a header.
    pub malformed: u64,
    /// SHA-256 over all payloads in arrival order.
    pub digest: [u8; 32],
    /// Every arrival carried the next sequence number.
    pub in_order: bool,
}

struct SinkState {
    metrics: FlowMetrics,
    hasher: Sha256,
    malformed: u64,
    next_seq: u64,
    in_order: bool,
}

/// A running sink.
pub struct SinkHandle {
    service: ServiceHandle<()>,
    state: Arc<Mutex<SinkState>>,
    arrivals: Arc<AtomicU64>,
    last_arrival: Arc<Mutex<Instant>>,
    cfg: SinkConfig,
}

impl SinkHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.service.local_addr()
    }

    /// Datagrams received so far, valid or not.
    pub fn arrivals(&self) -> u64 {
        self.arrivals.load(Ordering::Relaxed)
    }

    pub fn idle_for(&self) -> Duration {
        self.last_arrival.lock().unwrap().elapsed()
    }

    /// Block until nothing has arrived for `quiet`, or `limit` elapses.
    pub fn wait_quiet(&self, quiet: Duration, limit: Duration) {
        let deadline = Instant::now() + limit;
        while self.idle_for() < quiet && Instant::now() < deadline {
            thread::sleep(net::POLL);
        }
    }

    pub fn snapshot(&self) -> SinkReport {
        let st = self.state.lock().unwrap();
        SinkReport {
            flow: st.metrics.report(self.cfg.expected_packets),
            malformed: st.malformed,
            digest: st.hasher.clone().finalize().into(),
            in_order: st.in_order,
        }
    }

    /// Read whatever is still queued on the socket, stop, and report.
    pub fn stop(self) -> SinkReport {
        let state = self.state.clone();
        let cfg = self.cfg;
        self.service.stop();
        let st = state.lock().unwrap();
        SinkReport {
            flow: st.metrics.report(cfg.expected_packets),
            malformed: st.malformed,
            digest: st.hasher.clone().finalize().into(),
            in_order: st.in_order,
        }
    }
}

pub fn spawn_sink(listen: SocketAddr, cfg: SinkConfig) -> io::Result<SinkHandle> {
    let socket = net::bind_udp(listen)?;
    let local = socket.local_addr()?;
    let state = Arc::new(Mutex::new(SinkState {
        metrics: FlowMetrics::new(cfg.window.map(|w| w.as_secs_f64())),
        hasher: Sha256::new(),
        malformed: 0,
        next_seq: 0,
        in_order: true,
    }));
    let stop = Arc::new(AtomicBool::new(false));
    let arrivals = Arc::new(AtomicU64::new(0));
    let last_arrival = Arc::new(Mutex::new(Instant::now()));
    let join = {
        let (state, stop, arrivals, last_arrival) = (
            state.clone(),
            stop.clone(),
            arrivals.clone(),
            last_arrival.clone(),
        );
        thread::Builder::new()
            .name("nc-sink".into())
            .spawn(move || sink_loop(socket, &state, &stop, &arrivals, &last_arrival))?
    };
    Ok(SinkHandle {
        service: ServiceHandle::new(local, stop, join),
        state,
        arrivals,
        last_arrival,
        cfg,
    })
}

fn sink_loop(
    socket: UdpSocket,
    state: &Mutex<SinkState>,
    stop: &AtomicBool,
    arrivals: &AtomicU64,
    last_arrival: &Mutex<Instant>,
) {
    let epoch = Instant::now();
    let mut buf = vec![0u8; MAX_DATAGRAM];
    loop {
        let stopping = stop.load(Ordering::Relaxed);
        if stopping {
            // drain what is already queued without waiting for more
            let _ = socket.set_nonblocking(true);
        }
        let len = match socket.recv_from(&mut buf) {
            Ok((len, _)) => len,
            Err(e) if net::is_timeout(&e) => {
                if stopping {
                    break;
                }
                continue;
            }
            Err(e) => {
                warn!("sink receive failed: {e}");
                if stopping {
                    break;
                }
                continue;
            }
        };
        let now = Instant::now();
        let recv_us = (now - epoch).as_micros() as i64;
        arrivals.fetch_add(1, Ordering::Relaxed);
        *last_arrival.lock().unwrap() = now;
        let datagram = &buf[..len];
        let mut st = state.lock().unwrap();
        match read_head(datagram) {
            Some((seq, send_us)) => {
                if seq != st.next_seq {
                    st.in_order = false;
                }
                st.next_seq = seq.wrapping_add(1);
                if st.metrics.record(seq, send_us, recv_us, len) {
                    st.hasher.update(datagram);
                }
            }
            None => st.malformed += 1,
        }
    }
}
