//! Flow measurements: throughput, sequence-gap loss and interarrival jitter.
//!
//! Jitter follows the RTP estimator: for consecutive packets
//! `D = (recv_i - recv_{i-1}) - (send_i - send_{i-1})` and `J += (|D| - J) / 16`.
//! Only differences of timestamps from the same clock enter `D`, so a constant
//! offset between sender and receiver clocks cancels.

use std::collections::HashSet;

/// Running interarrival jitter, in microseconds internally.
#[derive(Debug, Clone, Default)]
pub struct JitterEstimator {
    jitter_us: f64,
    prev: Option<(i64, i64)>,
    sum_us: f64,
    updates: u64,
}

impl JitterEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed one packet's send and receive timestamps (microseconds). Returns the new estimate in µs.
    pub fn update(&mut self, send_us: i64, recv_us: i64) -> f64 {
        if let Some((ps, pr)) = self.prev {
            let d = (recv_us - pr) - (send_us - ps);
            self.jitter_us += ((d.abs() as f64) - self.jitter_us) / 16.0;
        }
        self.prev = Some((send_us, recv_us));
        self.sum_us += self.jitter_us;
        self.updates += 1;
        self.jitter_us
    }

    pub fn jitter_ms(&self) -> f64 {
        self.jitter_us / 1000.0
    }

    /// Average of the running estimate over all updates.
    pub fn mean_jitter_ms(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.sum_us / self.updates as f64 / 1000.0
        }
    }
}

/// Sequence-gap loss accounting; duplicates count once.
#[derive(Debug, Clone, Default)]
pub struct LossCounter {
    seen: HashSet<u64>,
    max_seq: Option<u64>,
    duplicates: u64,
}

impl LossCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a sequence number; `false` for a duplicate.
    pub fn record(&mut self, seq: u64) -> bool {
        if !self.seen.insert(seq) {
            self.duplicates += 1;
            return false;
        }
        self.max_seq = Some(self.max_seq.map_or(seq, |m| m.max(seq)));
        true
    }

    pub fn delivered(&self) -> u64 {
        self.seen.len() as u64
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn max_seq(&self) -> Option<u64> {
        self.max_seq
    }

    /// `(max_seq + 1) - delivered`.
    pub fn lost(&self) -> u64 {
        self.max_seq.map_or(0, |m| m + 1 - self.delivered())
    }

    /// Loss against a known number of sent packets, which also catches a lost tail.
    pub fn lost_of(&self, sent: u64) -> u64 {
        let span = self.max_seq.map_or(0, |m| m + 1).max(sent);
        span - self.delivered()
    }
}

/// Everything the sink knows about one measured flow.
#[derive(Debug, Clone)]
pub struct FlowMetrics {
    bytes_delivered: u64,
    loss: LossCounter,
    jitter: JitterEstimator,
    window_s: Option<f64>,
    first_arrival_us: Option<i64>,
    last_arrival_us: Option<i64>,
}

impl FlowMetrics {
    /// `window_s` fixes the throughput denominator; `None` uses the arrival span.
    pub fn new(window_s: Option<f64>) -> Self {
        Self {
            bytes_delivered: 0,
            loss: LossCounter::new(),
            jitter: JitterEstimator::new(),
            window_s,
            first_arrival_us: None,
            last_arrival_us: None,
        }
    }

    /// Account one arrival. Duplicates are counted but change nothing else.
    pub fn record(&mut self, seq: u64, send_us: i64, recv_us: i64, len: usize) -> bool {
        if !self.loss.record(seq) {
            return false;
        }
        self.bytes_delivered += len as u64;
        self.jitter.update(send_us, recv_us);
        self.first_arrival_us.get_or_insert(recv_us);
        self.last_arrival_us = Some(recv_us);
        true
    }

    pub fn bytes_delivered(&self) -> u64 {
        self.bytes_delivered
    }

    pub fn packets_delivered(&self) -> u64 {
        self.loss.delivered()
    }

    pub fn packets_lost(&self) -> u64 {
        self.loss.lost()
    }

    pub fn loss(&self) -> &LossCounter {
        &self.loss
    }

    pub fn jitter(&self) -> &JitterEstimator {
        &self.jitter
    }

    pub fn arrival_span_s(&self) -> f64 {
        match (self.first_arrival_us, self.last_arrival_us) {
            (Some(a), Some(b)) => (b - a) as f64 / 1e6,
            _ => 0.0,
        }
    }

    pub fn window_s(&self) -> f64 {
        self.window_s.unwrap_or_else(|| self.arrival_span_s())
    }

    /// `8 * bytes_delivered / window`.
    pub fn throughput_bps(&self) -> f64 {
        let w = self.window_s();
        if w > 0.0 {
            8.0 * self.bytes_delivered as f64 / w
        } else {
            0.0
        }
    }

    /// Rate over the arrival span, excluding the first packet which opens the span.
    pub fn arrival_rate_bps(&self) -> f64 {
        let n = self.packets_delivered();
        let span = self.arrival_span_s();
        if n < 2 || span <= 0.0 {
            return 0.0;
        }
        8.0 * self.bytes_delivered as f64 * (n - 1) as f64 / n as f64 / span
    }

    pub fn report(&self, sent: Option<u64>) -> FlowReport {
        let delivered = self.packets_delivered();
        let lost = match sent {
            Some(s) => self.loss.lost_of(s),
            None => self.packets_lost(),
        };
        let total = delivered + lost;
        FlowReport {
            packets_delivered: delivered,
            packets_lost: lost,
            duplicates: self.loss.duplicates(),
            bytes_delivered: self.bytes_delivered,
            window_s: self.window_s(),
            throughput_bps: self.throughput_bps(),
            arrival_rate_bps: self.arrival_rate_bps(),
            jitter_ms: self.jitter.jitter_ms(),
            mean_jitter_ms: self.jitter.mean_jitter_ms(),
            loss_fraction: if total == 0 {
                0.0
            } else {
                lost as f64 / total as f64
            },
        }
    }
}

/// Snapshot of a flow at report time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowReport {
    pub packets_delivered: u64,
    pub packets_lost: u64,
    pub duplicates: u64,
    pub bytes_delivered: u64,
    pub window_s: f64,
    pub throughput_bps: f64,
    pub arrival_rate_bps: f64,
    /// Final value of the running estimate.
    pub jitter_ms: f64,
    /// Running estimate averaged over the flow.
    pub mean_jitter_ms: f64,
    pub loss_fraction: f64,
}

impl FlowReport {
    pub const CSV_HEADER: &'static str = "packets_delivered,packets_lost,duplicates,bytes_delivered,window_s,throughput_mbps,arrival_rate_mbps,jitter_ms,mean_jitter_ms,loss_fraction";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.packets_delivered,
            self.packets_lost,
            self.duplicates,
            self.bytes_delivered,
            fmt_sig(self.window_s),
            fmt_sig(self.throughput_bps / 1e6),
            fmt_sig(self.arrival_rate_bps / 1e6),
            fmt_sig(self.jitter_ms),
            fmt_sig(self.mean_jitter_ms),
            fmt_sig(self.loss_fraction),
        )
    }
}

/// Format with six significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if mag > 5 {
        let unit = 10f64.powi(mag - 5);
        return format!("{:.0}", (x / unit).round() * unit);
    }
    let s = format!("{:.*}", (5 - mag) as usize, x);
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub const RUN_CSV_HEADER: [&str; 7] = [
    "scenario",
    "loss_rate",
    "code_rate",
    "throughput_mbps",
    "jitter_ms",
    "delivered_loss",
    "tx_per_source_packet",
];

/// One campaign result row. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRow {
    pub scenario: String,
    pub loss_rate: f64,
    pub code_rate: Option<f64>,
    pub throughput_mbps: Option<f64>,
    pub jitter_ms: Option<f64>,
    pub delivered_loss: Option<f64>,
    pub tx_per_source_packet: Option<f64>,
}

/// Text cells of a [`RunRow`], in header order.
type RunRowRecord = [String; 7];

impl RunRow {
    fn to_record(&self) -> RunRowRecord {
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        [
            self.scenario.clone(),
            fmt_sig(self.loss_rate),
            opt(self.code_rate),
            opt(self.throughput_mbps),
            opt(self.jitter_ms),
            opt(self.delivered_loss),
            opt(self.tx_per_source_packet),
        ]
    }
}

/// Render rows under the fixed campaign header.
pub fn emit_csv(rows: &[RunRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(RUN_CSV_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row.to_record()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("line {line}: bad number '{value}'")]
    Number { line: usize, value: String },
}

/// Parse a campaign CSV produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<RunRow>, CsvError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RUN_CSV_HEADER {
        return Err(CsvError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |idx: usize| -> Result<Option<f64>, CsvError> {
            let v = rec.get(idx).unwrap_or("").trim();
            if v.is_empty() {
                return Ok(None);
            }
            v.parse().map(Some).map_err(|_| CsvError::Number {
                line,
                value: v.to_string(),
            })
        };
        rows.push(RunRow {
            scenario: rec.get(0).unwrap_or("").to_string(),
            loss_rate: num(1)?.ok_or(CsvError::Number {
                line,
                value: String::new(),
            })?,
            code_rate: num(2)?,
            throughput_mbps: num(3)?,
            jitter_ms: num(4)?,
            delivered_loss: num(5)?,
            tx_per_source_packet: num(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn periodic_delivery_has_zero_jitter() {
        let mut j = JitterEstimator::new();
        for i in 0..100 {
            j.update(i * 1000, 5_000 + i * 1000);
        }
        assert_eq!(j.jitter_ms(), 0.0);
    }

    #[test]
    fn transit_step_decays_geometrically() {
        let mut j = JitterEstimator::new();
        j.update(0, 0);
        // +16 ms transit step on the second packet
        assert!((j.update(1_000, 17_000) - 1_000.0).abs() < 1e-9);
        let mut expect = 1_000.0;
        for i in 2..40 {
            let v = j.update(i * 1_000, 16_000 + i * 1_000);
            expect *= 15.0 / 16.0;
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn clock_offset_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arrivals: Vec<(i64, i64)> = (0..500)
            .map(|i| (i * 1000, i * 1000 + rng.gen_range(0..3000)))
            .collect();
        let mut a = JitterEstimator::new();
        let mut b = JitterEstimator::new();
        for &(s, r) in &arrivals {
            a.update(s, r);
            b.update(s, r + 123_456_789);
        }
        assert_eq!(a.jitter_ms(), b.jitter_ms());
        assert_eq!(a.mean_jitter_ms(), b.mean_jitter_ms());
    }

    /// Recursion simulated directly on burst-release arrival times.
    /// `late(b)` shifts block `b`'s release, e.g. when its last systematic
    /// packet is lost and the first coded packet completes the rank instead.
    fn simulate_burst_jitter(k: i64, delta: i64, blocks: i64, late: &dyn Fn(i64) -> i64) -> f64 {
        let mut j = 0.0f64;
        let mut prev: Option<(i64, i64)> = None;
        let mut sum = 0.0;
        let mut n = 0.0;
        for b in 0..blocks {
            let release = (b * k + k - 1) * delta + late(b);
            for s in 0..k {
                let seq = b * k + s;
                let (send, recv) = (seq * delta, release + s);
                if let Some((ps, pr)) = prev {
                    let d: i64 = (recv - pr) - (send - ps);
                    j += (d.abs() as f64 - j) / 16.0;
                }
                prev = Some((send, recv));
                sum += j;
                n += 1.0;
            }
        }
        sum / n / 1000.0
    }

    #[test]
    fn burst_release_jitter_matches_recursion() {
        let k = 10;
        let delta = 960;
        let mut est = JitterEstimator::new();
        for b in 0..200i64 {
            let release = (b * k + k - 1) * delta;
            for s in 0..k {
                let seq = b * k + s;
                est.update(seq * delta, release + s);
            }
        }
        let oracle = simulate_burst_jitter(k, delta, 200, &|_| 0);
        assert!((est.mean_jitter_ms() - oracle).abs() < 1e-9);
        // steady state sits near 1.8 * delta for 9 tight gaps and one long one
        assert!(oracle > 1.4 && oracle < 2.0, "{oracle}");
    }

    #[test]
    fn burst_jitter_is_insensitive_to_recovered_loss() {
        let clean = simulate_burst_jitter(10, 960, 300, &|_| 0);
        for r in [0.05, 0.25] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let late: Vec<i64> = (0..300)
                .map(|_| if rng.gen::<f64>() < r { 60 } else { 0 })
                .collect();
            let lossy = simulate_burst_jitter(10, 960, 300, &|b| late[b as usize]);
            assert!((clean - lossy).abs() / clean < 0.05, "{clean} vs {lossy}");
        }
    }

    #[test]
    fn loss_counting() {
        let mut l = LossCounter::new();
        for s in 0..10 {
            l.record(s);
        }
        assert_eq!(l.lost(), 0);

        let mut l = LossCounter::new();
        for s in (0..10).filter(|s| *s != 3 && *s != 7) {
            l.record(s);
        }
        assert_eq!(l.lost(), 2);
        assert!(!l.record(5));
        assert_eq!(l.duplicates(), 1);
        assert_eq!(l.lost(), 2);
        assert_eq!(l.lost_of(12), 4);
    }

    #[test]
    fn reordered_arrivals_count_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seqs: Vec<u64> = (0..1000).filter(|s| s % 10 != 4).collect();
        use rand::seq::SliceRandom;
        seqs.shuffle(&mut rng);
        let mut l = LossCounter::new();
        for s in seqs {
            l.record(s);
        }
        assert_eq!(l.lost(), 100);
    }

    #[test]
    fn random_loss_fraction_within_binomial_bounds() {
        let n = 100_000u64;
        let r = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut l = LossCounter::new();
        for s in 0..n {
            if rng.gen::<f64>() >= r {
                l.record(s);
            }
        }
        let frac = l.lost_of(n) as f64 / n as f64;
        let sigma = (r * (1.0 - r) / n as f64).sqrt();
        assert!((frac - r).abs() <= 3.0 * sigma, "{frac}");
    }

    #[test]
    fn flow_throughput_and_report() {
        let mut m = FlowMetrics::new(Some(1.0));
        for s in 0..100u64 {
            m.record(s, s as i64 * 10_000, s as i64 * 10_000 + 50, 1250);
        }
        assert!(!m.record(5, 0, 0, 1250));
        assert_eq!(m.throughput_bps(), 1_000_000.0);
        let rep = m.report(Some(101));
        assert_eq!(rep.packets_lost, 1);
        assert_eq!(rep.duplicates, 1);
        assert!((m.arrival_rate_bps() - 1_000_000.0).abs() < 1.0);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.5), "1.5");
        assert_eq!(fmt_sig(0.2), "0.2");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_sig(10.000_312), "10.0003");
        assert_eq!(fmt_sig(12_345_678.0), "12345700");
        assert_eq!(fmt_sig(-0.000_001_234_567_8), "-0.00000123457");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }

    #[test]
    fn csv_empty_and_round_trip() {
        assert_eq!(emit_csv(&[]), format!("{}\n", RUN_CSV_HEADER.join(",")));
        let rows = vec![
            RunRow {
                scenario: "nc_2_3".into(),
                loss_rate: 0.1,
                code_rate: Some(2.0 / 3.0),
                throughput_mbps: Some(9.99812),
                jitter_ms: Some(1.71),
                delivered_loss: Some(0.0003),
                tx_per_source_packet: Some(1.5),
            },
            RunRow {
                scenario: "harq_arq_min".into(),
                loss_rate: 0.1,
                tx_per_source_packet: Some(1.3),
                ..Default::default()
            },
        ];
        let text = emit_csv(&rows);
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], rows[1]);
        assert_eq!(back[0].scenario, "nc_2_3");
        assert!((back[0].code_rate.unwrap() - 2.0 / 3.0).abs() < 1e-6);
        for line in text.lines() {
            assert_eq!(line.split(',').count(), 7);
        }
    }

    #[test]
    fn csv_rejects_foreign_header() {
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(CsvError::Header(_))));
    }
}
