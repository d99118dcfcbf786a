//! Transmissions-per-source-packet models for HARQ/ARQ and network coding.
//!
//! Closed forms use exact rationals. A HARQ/ARQ source packet either gets
//! through on the first transmission (probability `1 - r`) or is lost and then
//! recovered, half the time by HARQ and half the time by ARQ. The bracket
//! endpoints charge the cheapest and the most expensive recovery:
//!
//! * `p_ha_min = (1 - r) + 2 * r/2 + 6 * r/2  = 1 + 3r`
//! * `p_ha_max = (1 - r) + 5 * r/2 + 40 * r/2 = 1 + 21.5r`
//!
//! where 5 is the HARQ cycle length and 40 = 8 ARQ rounds of a full HARQ cycle.
//! Network coding at code rate CR costs `1/CR`, and no erasure code can do
//! better than the channel capacity bound `1 / (1 - r)`.

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("loss rate {0} outside [0, 1]")]
    LossRateOutOfRange(String),
    #[error("loss rate 1 leaves no capacity")]
    NoCapacity,
    #[error("code rate {0} outside (0, 1]")]
    CodeRateOutOfRange(String),
    #[error("invalid retransmission parameters: {0}")]
    InvalidParams(String),
    #[error("cannot parse '{0}' as a number")]
    Parse(String),
}

/// Parse `"0.2"`, `"2/3"` or `"1"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, ModelError> {
    let err = || ModelError::Parse(s.to_string());
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| err())?;
        let den: i64 = den.trim().parse().map_err(|_| err())?;
        if den == 0 {
            return Err(err());
        }
        return Ok(Rational::new(num, den));
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if (int.is_empty() && frac.is_empty())
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        || frac.len() > 15
    {
        return Err(err());
    }
    let scale = 10i64.pow(frac.len() as u32);
    let int: i64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| err())?
    };
    let frac_v: i64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| err())?
    };
    let num = int
        .checked_mul(scale)
        .and_then(|v| v.checked_add(frac_v))
        .ok_or_else(err)?;
    Ok(Rational::new(if neg { -num } else { num }, scale))
}

pub fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Packet erasure probability `r` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LossRate(Rational);

impl LossRate {
    pub fn new(r: Rational) -> Result<Self, ModelError> {
        if r < Rational::zero() || r > Rational::one() {
            return Err(ModelError::LossRateOutOfRange(r.to_string()));
        }
        Ok(Self(r))
    }

    pub fn from_ratio(num: i64, den: i64) -> Result<Self, ModelError> {
        if den == 0 {
            return Err(ModelError::Parse(format!("{num}/{den}")));
        }
        Self::new(Rational::new(num, den))
    }

    /// Nearest rational with denominator at most 10^6.
    pub fn from_f64(r: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&r) {
            return Err(ModelError::LossRateOutOfRange(r.to_string()));
        }
        Self::new(Rational::new((r * 1e6).round() as i64, 1_000_000))
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        Self::new(parse_rational(s)?)
    }

    pub fn value(&self) -> Rational {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        to_f64(&self.0)
    }
}

/// Code rate `K/N` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeRate(Rational);

impl CodeRate {
    pub fn new(cr: Rational) -> Result<Self, ModelError> {
        if cr <= Rational::zero() || cr > Rational::one() {
            return Err(ModelError::CodeRateOutOfRange(cr.to_string()));
        }
        Ok(Self(cr))
    }

    pub fn from_kn(k: usize, n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::CodeRateOutOfRange(format!("{k}/{n}")));
        }
        Self::new(Rational::new(k as i64, n as i64))
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        Self::new(parse_rational(s)?)
    }

    pub fn value(&self) -> Rational {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        to_f64(&self.0)
    }
}

pub fn p_ha_min(r: LossRate) -> Rational {
    RetxParams::default().min_cost(r)
}

pub fn p_ha_max(r: LossRate) -> Rational {
    RetxParams::default().max_cost(r)
}

/// Transmissions per source packet for a block code: `1/CR`.
pub fn p_nc(cr: CodeRate) -> Rational {
    cr.0.recip()
}

/// Capacity bound `1/(1 - r)`.
pub fn p_nc_capacity(r: LossRate) -> Result<Rational, ModelError> {
    let keep = Rational::one() - r.0;
    if keep.is_zero() {
        return Err(ModelError::NoCapacity);
    }
    Ok(keep.recip())
}

/// `p_ha_max(r) / p_nc_capacity(r) = (1 + 21.5r)(1 - r)`.
pub fn nc_advantage(r: LossRate) -> Result<Rational, ModelError> {
    Ok(p_ha_max(r) / p_nc_capacity(r)?)
}

/// HARQ/ARQ retransmission budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetxParams {
    /// Transmissions in one HARQ cycle, first transmission included.
    pub harq_max_tx: u32,
    /// ARQ rounds; each restarts a full HARQ cycle.
    pub arq_max_rounds: u32,
    /// Fraction of lost packets recovered by HARQ; the rest go to ARQ.
    pub harq_share: Rational,
}

impl Default for RetxParams {
    fn default() -> Self {
        Self {
            harq_max_tx: 5,
            arq_max_rounds: 8,
            harq_share: Rational::new(1, 2),
        }
    }
}

impl RetxParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.harq_max_tx < 1 {
            return Err(ModelError::InvalidParams("harq_max_tx must be >= 1".into()));
        }
        if self.harq_share < Rational::zero() || self.harq_share > Rational::one() {
            return Err(ModelError::InvalidParams(
                "harq_share outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Transmission-count range of a HARQ recovery: `2..=harq_max_tx`.
    pub fn harq_range(&self) -> (u32, u32) {
        (2, self.harq_max_tx)
    }

    /// Transmission-count range of an ARQ recovery: `harq_max_tx + 1 ..= harq_max_tx * arq_max_rounds`.
    pub fn arq_range(&self) -> (u32, u32) {
        (self.harq_max_tx + 1, self.harq_max_tx * self.arq_max_rounds)
    }

    fn expected(&self, r: LossRate, harq_cost: Rational, arq_cost: Rational) -> Rational {
        let r = r.0;
        let h = self.harq_share;
        (Rational::one() - r) + r * h * harq_cost + r * (Rational::one() - h) * arq_cost
    }

    pub fn min_cost(&self, r: LossRate) -> Rational {
        let (h, _) = self.harq_range();
        let (a, _) = self.arq_range();
        self.expected(
            r,
            Rational::from_integer(h as i64),
            Rational::from_integer(a as i64),
        )
    }

    pub fn max_cost(&self, r: LossRate) -> Rational {
        let (_, h) = self.harq_range();
        let (_, a) = self.arq_range();
        self.expected(
            r,
            Rational::from_integer(h as i64),
            Rational::from_integer(a as i64),
        )
    }

    /// Expectation under uniform recovery cost over each range.
    pub fn uniform_cost(&self, r: LossRate) -> Rational {
        let mid = |(lo, hi): (u32, u32)| Rational::new((lo + hi) as i64, 2);
        self.expected(r, mid(self.harq_range()), mid(self.arq_range()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum McMode {
    /// Cheapest outcome of each recovery path.
    Min,
    /// Most expensive outcome of each recovery path.
    Max,
    /// Uniform over each path's transmission-count range.
    Uniform,
}

impl McMode {
    pub fn label(&self) -> &'static str {
        match self {
            McMode::Min => "min",
            McMode::Max => "max",
            McMode::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub mode: McMode,
    pub trials: u64,
    /// Transmissions per delivered packet.
    pub mean: f64,
    pub stderr: f64,
    pub delivered_fraction: f64,
    pub min_tx: u32,
    pub max_tx: u32,
}

#[derive(Debug, Clone, Copy, Default)]
struct McSums {
    n: u64,
    tx: u64,
    tx_sq: u64,
    delivered: u64,
    tx_delivered: u64,
    min_tx: u32,
    max_tx: u32,
}

impl McSums {
    fn merge(mut self, o: McSums) -> McSums {
        if o.n == 0 {
            return self;
        }
        if self.n == 0 {
            return o;
        }
        self.n += o.n;
        self.tx += o.tx;
        self.tx_sq += o.tx_sq;
        self.delivered += o.delivered;
        self.tx_delivered += o.tx_delivered;
        self.min_tx = self.min_tx.min(o.min_tx);
        self.max_tx = self.max_tx.max(o.max_tx);
        self
    }
}

const MC_CHUNK: u64 = 1 << 16;

fn chunk_seed(seed: u64, chunk: u64) -> u64 {
    // splitmix64 finalizer over (seed, chunk)
    let mut z = seed ^ chunk.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_chunk(params: &RetxParams, r: f64, share: f64, mode: McMode, n: u64, seed: u64) -> McSums {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = McSums {
        min_tx: u32::MAX,
        ..Default::default()
    };
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)| match mode {
        McMode::Min => lo,
        McMode::Max => hi,
        McMode::Uniform => rng.gen_range(lo..=hi),
    };
    for _ in 0..n {
        let (cost, delivered) = if rng.gen::<f64>() >= r {
            (1, true)
        } else if rng.gen::<f64>() < share {
            let range = params.harq_range();
            if range.0 <= range.1 {
                (pick(&mut rng, range), true)
            } else {
                (params.harq_max_tx, false)
            }
        } else {
            let range = params.arq_range();
            if range.0 <= range.1 {
                (pick(&mut rng, range), true)
            } else {
                (params.harq_max_tx * params.arq_max_rounds.max(1), false)
            }
        };
        s.n += 1;
        s.tx += cost as u64;
        s.tx_sq += (cost as u64) * (cost as u64);
        if delivered {
            s.delivered += 1;
            s.tx_delivered += cost as u64;
        }
        s.min_tx = s.min_tx.min(cost);
        s.max_tx = s.max_tx.max(cost);
    }
    s
}

/// Monte Carlo estimate of HARQ/ARQ transmissions per delivered packet.
///
/// Trials are split into fixed chunks with seeds derived from `seed`, so the
/// result does not depend on how many threads run them.
pub fn mc_harq_arq_cost(
    params: &RetxParams,
    r: LossRate,
    mode: McMode,
    trials: u64,
    seed: u64,
) -> Result<McResult, ModelError> {
    params.validate()?;
    if trials == 0 {
        return Err(ModelError::InvalidParams("trials must be >= 1".into()));
    }
    let rf = r.as_f64();
    let share = to_f64(&params.harq_share);
    let chunks = trials.div_ceil(MC_CHUNK);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get() as u64)
        .unwrap_or(1)
        .min(chunks);

    let sums = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut acc = McSums::default();
                    let mut c = w;
                    while c < chunks {
                        let n = MC_CHUNK.min(trials - c * MC_CHUNK);
                        acc = acc.merge(run_chunk(params, rf, share, mode, n, chunk_seed(seed, c)));
                        c += workers;
                    }
                    acc
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("monte carlo worker panicked"))
            .fold(McSums::default(), McSums::merge)
    });

    let n = sums.n as f64;
    let delivered = sums.delivered as f64;
    let (mean, stderr) = if sums.delivered == sums.n {
        let mean = sums.tx as f64 / n;
        let var = if sums.n > 1 {
            ((sums.tx_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    } else if sums.delivered == 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        // ratio estimator sum(tx)/sum(delivered), delta-method variance
        let ratio = sums.tx as f64 / delivered;
        let mx = sums.tx as f64 / n;
        let my = delivered / n;
        let vx = sums.tx_sq as f64 / n - mx * mx;
        let vy = my - my * my;
        let cxy = sums.tx_delivered as f64 / n - mx * my;
        let var = (vx - 2.0 * ratio * cxy + ratio * ratio * vy) / (my * my);
        (ratio, (var.max(0.0) / n).sqrt())
    };
    Ok(McResult {
        mode,
        trials: sums.n,
        mean,
        stderr,
        delivered_fraction: delivered / n,
        min_tx: sums.min_tx,
        max_tx: sums.max_tx,
    })
}
