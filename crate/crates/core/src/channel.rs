//! Seeded i.i.d. erasure channel between the two proxies.
//!
//! Drop verdicts come from a counter-based generator keyed by `(seed, index)`,
//! so the drop pattern depends only on the order datagrams arrive in, never on
//! thread scheduling.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use crate::net::{self, ServiceHandle, MAX_DATAGRAM};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("loss rate {0} outside [0, 1]")]
    LossRate(f64),
    #[error("failed to bind channel ingress {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub loss_rate: f64,
    pub seed: u64,
    /// Fixed one-way delay added to every forwarded datagram.
    pub delay: Duration,
    /// Uniform delay variation of ± this amount around `delay`.
    pub delay_jitter: Duration,
}

impl ChannelConfig {
    pub fn new(loss_rate: f64, seed: u64) -> Result<Self, ChannelError> {
        let cfg = Self {
            loss_rate,
            seed,
            delay: Duration::ZERO,
            delay_jitter: Duration::ZERO,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delay(mut self, delay: Duration, jitter: Duration) -> Self {
        self.delay = delay;
        self.delay_jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(ChannelError::LossRate(self.loss_rate));
        }
        Ok(())
    }

    fn is_delayed(&self) -> bool {
        !self.delay.is_zero() || !self.delay_jitter.is_zero()
    }

    /// Delay for the datagram at `index`, clamped at zero.
    pub fn delay_for(&self, index: u64) -> Duration {
        if self.delay_jitter.is_zero() {
            return self.delay;
        }
        let u = unit_f64(mix(self.seed ^ 0xD1B5_4A32_D192_ED03, index));
        let j = self.delay_jitter.as_secs_f64();
        let d = self.delay.as_secs_f64() + (2.0 * u - 1.0) * j;
        Duration::from_secs_f64(d.max(0.0))
    }
}

/// SplitMix64 over `(seed, index)`.
fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Keep/drop verdict for the datagram at `packet_index`.
pub fn admit(cfg: &ChannelConfig, packet_index: u64) -> bool {
    unit_f64(mix(cfg.seed, packet_index)) >= cfg.loss_rate
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounters {
    pub seen: u64,
    pub dropped: u64,
    /// Admitted datagrams, including any still waiting out their delay.
    pub forwarded: u64,
    pub send_errors: u64,
}

impl ChannelCounters {
    pub const CSV_HEADER: &'static str = "seen,dropped,forwarded,send_errors";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{}\n",
            Self::CSV_HEADER,
            self.seen,
            self.dropped,
            self.forwarded,
            self.send_errors
        )
    }
}

/// Counters shared with the forwarding loop. One lock keeps `seen = dropped + forwarded`.
#[derive(Debug, Default)]
pub struct SharedCounters(Mutex<ChannelCounters>);

impl SharedCounters {
    pub fn snapshot(&self) -> ChannelCounters {
        *self.0.lock().unwrap()
    }

    fn verdict(&self, keep: bool) {
        let mut c = self.0.lock().unwrap();
        c.seen += 1;
        if keep {
            c.forwarded += 1;
        } else {
            c.dropped += 1;
        }
    }

    fn send_error(&self) {
        self.0.lock().unwrap().send_errors += 1;
    }
}

pub struct ChannelHandle {
    service: ServiceHandle<()>,
    counters: Arc<SharedCounters>,
}

impl ChannelHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.service.local_addr()
    }

    pub fn counters(&self) -> ChannelCounters {
        self.counters.snapshot()
    }

    pub fn shared_counters(&self) -> Arc<SharedCounters> {
        self.counters.clone()
    }

    pub fn stop(self) -> ChannelCounters {
        let counters = self.counters.clone();
        self.service.stop();
        counters.snapshot()
    }
}

struct Delayed {
    due: Instant,
    index: u64,
    datagram: Vec<u8>,
}

impl PartialEq for Delayed {
    fn eq(&self, o: &Self) -> bool {
        (self.due, self.index) == (o.due, o.index)
    }
}
impl Eq for Delayed {}
impl PartialOrd for Delayed {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Delayed {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.due, self.index).cmp(&(o.due, o.index))
    }
}

type DelayQueue = Arc<(Mutex<(BinaryHeap<Reverse<Delayed>>, bool)>, Condvar)>;

/// Forward datagrams from `ingress` to `egress`, dropping per [`admit`].
pub fn spawn(
    cfg: ChannelConfig,
    ingress: SocketAddr,
    egress: SocketAddr,
) -> Result<ChannelHandle, ChannelError> {
    cfg.validate()?;
    let bind_err = |source: io::Error| ChannelError::Bind {
        addr: ingress,
        source,
    };
    let socket = net::bind_udp(ingress).map_err(bind_err)?;
    let out = net::sender_for(egress).map_err(bind_err)?;
    let local = socket.local_addr().map_err(bind_err)?;
    let stop = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(SharedCounters::default());

    let join = {
        let stop = stop.clone();
        let counters = counters.clone();
        thread::Builder::new()
            .name("nc-channel".into())
            .spawn(move || forward_loop(cfg, socket, out, egress, &stop, &counters))
            .expect("spawn channel thread")
    };
    Ok(ChannelHandle {
        service: ServiceHandle::new(local, stop, join),
        counters,
    })
}

fn forward_loop(
    cfg: ChannelConfig,
    socket: UdpSocket,
    out: UdpSocket,
    egress: SocketAddr,
    stop: &AtomicBool,
    counters: &Arc<SharedCounters>,
) {
    let queue: Option<DelayQueue> = cfg
        .is_delayed()
        .then(|| Arc::new((Mutex::new((BinaryHeap::new(), false)), Condvar::new())));
    let sender = queue.clone().map(|q| {
        let out = out.try_clone().expect("clone channel socket");
        let counters = counters.clone();
        thread::spawn(move || delayed_sender(q, out, egress, &counters))
    });

    let mut buf = vec![0u8; MAX_DATAGRAM];
    let mut index = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let len = match socket.recv_from(&mut buf) {
            Ok((len, _)) => len,
            Err(e) if net::is_timeout(&e) => continue,
            Err(e) => {
                warn!("channel receive failed: {e}");
                continue;
            }
        };
        let keep = admit(&cfg, index);
        counters.verdict(keep);
        if keep {
            match &queue {
                None => {
                    if out.send_to(&buf[..len], egress).is_err() {
                        counters.send_error();
                    }
                }
                Some(q) => {
                    let item = Delayed {
                        due: Instant::now() + cfg.delay_for(index),
                        index,
                        datagram: buf[..len].to_vec(),
                    };
                    q.0.lock().unwrap().0.push(Reverse(item));
                    q.1.notify_one();
                }
            }
        }
        index += 1;
    }
    if let (Some(q), Some(sender)) = (queue, sender) {
        q.0.lock().unwrap().1 = true;
        q.1.notify_one();
        let _ = sender.join();
    }
    debug!("channel stopped: {:?}", counters.snapshot());
}

fn delayed_sender(q: DelayQueue, out: UdpSocket, egress: SocketAddr, counters: &SharedCounters) {
    let (lock, cv) = &*q;
    let mut guard = lock.lock().unwrap();
    loop {
        let now = Instant::now();
        match guard.0.peek() {
            Some(Reverse(top)) if top.due <= now => {
                let Reverse(item) = guard.0.pop().unwrap();
                drop(guard);
                if out.send_to(&item.datagram, egress).is_err() {
                    counters.send_error();
                }
                guard = lock.lock().unwrap();
            }
            Some(Reverse(top)) => {
                let wait = top.due - now;
                guard = cv.wait_timeout(guard, wait).unwrap().0;
            }
            None if guard.1 => return,
            None => guard = cv.wait(guard).unwrap(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drop_fraction(r: f64, seed: u64, n: u64) -> f64 {
        let cfg = ChannelConfig::new(r, seed).unwrap();
        (0..n).filter(|&i| !admit(&cfg, i)).count() as f64 / n as f64
    }

    #[test]
    fn endpoints() {
        assert_eq!(drop_fraction(0.0, 1, 10_000), 0.0);
        assert_eq!(drop_fraction(1.0, 1, 10_000), 1.0);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(ChannelConfig::new(-0.1, 0).is_err());
        assert!(ChannelConfig::new(1.1, 0).is_err());
    }

    #[test]
    fn empirical_rate_within_three_sigma() {
        let n = 100_000;
        for (r, seed) in [(0.2, 7u64), (0.33, 8), (0.05, 9)] {
            let f = drop_fraction(r, seed, n);
            let sigma = (r * (1.0 - r) / n as f64).sqrt();
            assert!((f - r).abs() <= 3.0 * sigma, "r={r} got {f}");
        }
    }

    #[test]
    fn verdicts_are_keyed_by_seed_and_index() {
        let a = ChannelConfig::new(0.5, 11).unwrap();
        let b = ChannelConfig::new(0.5, 12).unwrap();
        let va: Vec<bool> = (0..256).map(|i| admit(&a, i)).collect();
        let va2: Vec<bool> = (0..256).rev().map(|i| admit(&a, i)).rev().collect();
        let vb: Vec<bool> = (0..256).map(|i| admit(&b, i)).collect();
        assert_eq!(va, va2);
        assert_ne!(va, vb);
    }

    #[test]
    fn delay_jitter_stays_in_band() {
        let cfg = ChannelConfig::new(0.0, 3)
            .unwrap()
            .with_delay(Duration::from_millis(10), Duration::from_millis(4));
        for i in 0..1000 {
            let d = cfg.delay_for(i).as_secs_f64();
            assert!((0.006..=0.014).contains(&d), "{d}");
        }
        let fixed = ChannelConfig::new(0.0, 3)
            .unwrap()
            .with_delay(Duration::from_millis(2), Duration::ZERO);
        assert_eq!(fixed.delay_for(99), Duration::from_millis(2));
    }
}
