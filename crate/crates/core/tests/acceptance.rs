//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria run one after another (the live pipelines need the CPU to
//! themselves); the process exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ncrelay_core::codec::{BlockDecoder, BlockEncoder, CodedSymbol, CodingParams, SymbolKind};
use ncrelay_core::lab::{coding_for, run_pipeline, Correction, PipelineSpec, RunOutcome};
use ncrelay_core::metrics::fmt_sig;
use ncrelay_core::models::{self, CodeRate, LossRate, McMode, RetxParams};
use ncrelay_core::traffic::{self, SinkConfig, TrafficConfig};
use ncrelay_core::wire;

// Pinned tolerances and budgets.
const CLOSED_FORM_TOL: f64 = 0.005;
const CLOSED_FORM_BUDGET: Duration = Duration::from_secs(1);
const DOMINANCE_STEP: i64 = 1000;
const DOMINANCE_BUDGET: Duration = Duration::from_secs(1);
const CODEC_BLOCKS: usize = 10_000;
const CODEC_MAX_K: usize = 16;
const CODEC_MAX_N: usize = 32;
const CODEC_SINGULAR_MAX: f64 = 0.01;
const CODEC_BUDGET: Duration = Duration::from_secs(60);
const E2E_RATE_BPS: u64 = 10_000_000;
const E2E_DURATION: Duration = Duration::from_secs(30);
const E2E_PAYLOAD: usize = 1200;
const E2E_LOW_R: f64 = 0.10;
const E2E_LOW_MAX_LOSS: f64 = 0.01;
const E2E_HIGH_R: f64 = 0.40;
const E2E_HIGH_MIN_LOSS: f64 = 0.05;
const ROBUST_R: f64 = 0.45;
const ROBUST_MAX_LOSS: f64 = 0.005;
const JITTER_DURATION: Duration = Duration::from_secs(10);
const JITTER_LOW_R: f64 = 0.05;
const JITTER_HIGH_R: f64 = 0.25;
const JITTER_MAX_REL_DIFF: f64 = 0.25;
const JITTER_MIN_RATIO: f64 = 3.0;
const MC_R: (i64, i64) = (1, 5);
const MC_TRIALS: u64 = 1_000_000;
const MC_SIGMAS: f64 = 3.0;
const MC_BUDGET: Duration = Duration::from_secs(10);
const OVERHEAD_DURATION: Duration = Duration::from_secs(20);
const OVERHEAD_MAX: f64 = 0.05;
const FUZZ_DATAGRAMS: usize = 1_000_000;
const ROUND_TRIPS: usize = 100_000;
const FUZZ_BUDGET: Duration = Duration::from_secs(30);

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> Verdict {
    let took = start.elapsed();
    check(
        took < budget,
        format!(
            "{detail}; {:.3}s of {:.0}s budget",
            took.as_secs_f64(),
            budget.as_secs_f64()
        ),
    )
}

fn closed_forms() -> Verdict {
    let start = Instant::now();
    let r = |n, d| LossRate::from_ratio(n, d).unwrap();
    let cases: [(&str, models::Rational, f64); 8] = [
        ("p_ha_min(0.2)", models::p_ha_min(r(1, 5)), 1.6),
        ("p_ha_max(0.2)", models::p_ha_max(r(1, 5)), 5.3),
        (
            "p_nc(2/3)",
            models::p_nc(CodeRate::from_kn(2, 3).unwrap()),
            1.5,
        ),
        (
            "p_nc_capacity(0.2)",
            models::p_nc_capacity(r(1, 5)).unwrap(),
            1.25,
        ),
        (
            "nc_advantage(0.2)",
            models::nc_advantage(r(1, 5)).unwrap(),
            4.24,
        ),
        ("p_ha_min(0.1)", models::p_ha_min(r(1, 10)), 1.3),
        ("p_ha_max(0.1)", models::p_ha_max(r(1, 10)), 3.15),
        (
            "p_nc_capacity(0.1)",
            models::p_nc_capacity(r(1, 10)).unwrap(),
            1.11,
        ),
    ];
    let mut worst = 0.0f64;
    for (name, got, want) in &cases {
        let err = (models::to_f64(got) - want).abs();
        if err > CLOSED_FORM_TOL {
            return Err(format!(
                "{name} = {got} ({}) vs {want}",
                models::to_f64(got)
            ));
        }
        worst = worst.max(err);
    }
    within_budget(
        start,
        CLOSED_FORM_BUDGET,
        format!("8 values, max |error| {}", fmt_sig(worst)),
    )
}

fn dominance() -> Verdict {
    let start = Instant::now();
    let two_thirds = Ratio::new(2, 3);
    let mut grid: Vec<Ratio<i64>> = (0..=DOMINANCE_STEP)
        .map(|i| Ratio::new(i, DOMINANCE_STEP))
        .take_while(|r| *r <= two_thirds)
        .collect();
    grid.push(two_thirds);
    let mut equal = Vec::new();
    for r in &grid {
        let lhs = (Ratio::<i64>::one() - r).recip();
        let rhs = Ratio::from_integer(1) + Ratio::from_integer(3) * r;
        if lhs > rhs {
            return Err(format!("1/(1-r) > 1+3r at r = {r}"));
        }
        if lhs == rhs {
            equal.push(*r);
        }
    }
    equal.dedup();
    let expect = vec![Ratio::zero(), two_thirds];
    if equal != expect {
        return Err(format!("equality at {equal:?}, expected only 0 and 2/3"));
    }
    within_budget(
        start,
        DOMINANCE_BUDGET,
        format!("{} grid points, equality only at 0 and 2/3", grid.len()),
    )
}

/// GF(2^8) multiply by shift-and-add, independent of the library tables.
fn slow_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1B;
        }
        b >>= 1;
    }
    p
}

fn slow_inv(a: u8) -> u8 {
    (1..=255u8)
        .find(|&b| slow_mul(a, b) == 1)
        .expect("nonzero element")
}

/// Rank of a matrix over GF(2^8) by plain Gaussian elimination.
fn oracle_rank(mut rows: Vec<Vec<u8>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let inv = slow_inv(rows[rank][c]);
        for x in rows[rank].iter_mut() {
            *x = slow_mul(*x, inv);
        }
        for i in 0..rows.len() {
            if i != rank && rows[i][c] != 0 {
                let f = rows[i][c];
                let pivot = rows[rank].clone();
                for (x, p) in rows[i].iter_mut().zip(pivot) {
                    *x ^= slow_mul(f, p);
                }
            }
        }
        rank += 1;
    }
    rank
}

fn codec_property() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut singular = 0usize;
    for block in 0..CODEC_BLOCKS {
        let k = rng.gen_range(1..=CODEC_MAX_K);
        let n = rng.gen_range(k..=CODEC_MAX_N);
        let symbol_size = rng.gen_range(3..=256);
        let params = CodingParams::new(k, n, symbol_size).unwrap();
        let mut enc = BlockEncoder::starting_at(params, block as u32);
        let payloads: Vec<Vec<u8>> = (0..k)
            .map(|_| {
                let len = rng.gen_range(0..=params.max_payload());
                (0..len).map(|_| rng.gen()).collect()
            })
            .collect();
        let mut symbols: Vec<CodedSymbol> = payloads.iter().map(|p| enc.push(p).unwrap()).collect();
        symbols.extend(enc.flush(rng.gen()));
        // erase N-K symbols: keep a random K-subset
        for i in 0..k {
            let j = rng.gen_range(i..n);
            symbols.swap(i, j);
        }
        symbols.truncate(k);

        let expected_rank = oracle_rank(symbols.iter().map(|s| s.coefficients.clone()).collect());
        let mut dec = BlockDecoder::new(block as u32, k, symbol_size);
        for s in &symbols {
            dec.insert(s)
                .map_err(|e| format!("block {block}: insert failed: {e}"))?;
        }
        if dec.rank() != expected_rank {
            return Err(format!(
                "block {block}: rank {} vs oracle {expected_rank}",
                dec.rank()
            ));
        }
        if expected_rank == k {
            let got = dec.release().map_err(|e| format!("block {block}: {e}"))?;
            if got != payloads {
                return Err(format!("block {block} (k={k}, n={n}): payload mismatch"));
            }
        } else {
            singular += 1;
            if dec.is_decodable() {
                return Err(format!("block {block}: decodable despite singular matrix"));
            }
            // salvage must return exactly the systematic payloads it holds
            for (slot, p) in dec.salvage().recovered {
                if p != payloads[slot] {
                    return Err(format!("block {block}: salvaged slot {slot} differs"));
                }
            }
        }
    }
    let frac = singular as f64 / CODEC_BLOCKS as f64;
    if frac >= CODEC_SINGULAR_MAX {
        return Err(format!("singular fraction {frac}"));
    }
    within_budget(
        start,
        CODEC_BUDGET,
        format!("{CODEC_BLOCKS} blocks, singular fraction {}", fmt_sig(frac)),
    )
}

fn flow(duration: Duration) -> TrafficConfig {
    TrafficConfig::new(E2E_RATE_BPS, E2E_PAYLOAD, duration).unwrap()
}

fn nc_run(k: usize, n: usize, r: f64, duration: Duration, seed: u64) -> Result<RunOutcome, String> {
    let coding = coding_for(k, n, E2E_PAYLOAD).map_err(|e| e.to_string())?;
    let mut spec = PipelineSpec::new(Correction::Nc, Some(coding), r, flow(duration));
    spec.seed = seed;
    run_pipeline(&spec).map_err(|e| e.to_string())
}

fn passthrough_run(r: f64, duration: Duration, seed: u64) -> Result<RunOutcome, String> {
    let mut spec = PipelineSpec::new(Correction::None, None, r, flow(duration));
    spec.seed = seed;
    run_pipeline(&spec).map_err(|e| e.to_string())
}

fn describe(o: &RunOutcome) -> String {
    let f = &o.sink.flow;
    format!(
        "loss {} ({}/{}), {} Mbit/s",
        fmt_sig(f.loss_fraction),
        f.packets_lost,
        o.sent.packets,
        fmt_sig(f.throughput_bps / 1e6)
    )
}

fn e2e_recovery() -> Verdict {
    let low = nc_run(10, 15, E2E_LOW_R, E2E_DURATION, 41)?;
    let high = nc_run(10, 15, E2E_HIGH_R, E2E_DURATION, 42)?;
    let (l, h) = (low.sink.flow.loss_fraction, high.sink.flow.loss_fraction);
    check(
        l <= E2E_LOW_MAX_LOSS && h >= E2E_HIGH_MIN_LOSS,
        format!(
            "r={E2E_LOW_R}: {} (<= {E2E_LOW_MAX_LOSS}); r={E2E_HIGH_R}: {} (>= {E2E_HIGH_MIN_LOSS})",
            describe(&low),
            describe(&high)
        ),
    )
}

fn cr_fifth_robustness() -> Verdict {
    let o = nc_run(10, 50, ROBUST_R, E2E_DURATION, 43)?;
    check(
        o.sink.flow.loss_fraction <= ROBUST_MAX_LOSS,
        format!(
            "r={ROBUST_R}, K=10 N=50: {} (<= {ROBUST_MAX_LOSS})",
            describe(&o)
        ),
    )
}

fn jitter_shape() -> Verdict {
    let base = passthrough_run(0.0, JITTER_DURATION, 44)?;
    let low = nc_run(10, 50, JITTER_LOW_R, JITTER_DURATION, 45)?;
    let high = nc_run(10, 50, JITTER_HIGH_R, JITTER_DURATION, 46)?;
    let (jb, jl, jh) = (
        base.sink.flow.mean_jitter_ms,
        low.sink.flow.mean_jitter_ms,
        high.sink.flow.mean_jitter_ms,
    );
    let rel = (jl - jh).abs() / jl.min(jh);
    let ratio = jl.min(jh) / jb;
    check(
        rel < JITTER_MAX_REL_DIFF && ratio >= JITTER_MIN_RATIO,
        format!(
            "mean jitter passthrough {} ms, nc r={JITTER_LOW_R} {} ms, r={JITTER_HIGH_R} {} ms; \
             relative difference {} (< {JITTER_MAX_REL_DIFF}), ratio to baseline {} (>= {JITTER_MIN_RATIO})",
            fmt_sig(jb),
            fmt_sig(jl),
            fmt_sig(jh),
            fmt_sig(rel),
            fmt_sig(ratio)
        ),
    )
}

fn mc_convergence() -> Verdict {
    let start = Instant::now();
    let r = LossRate::from_ratio(MC_R.0, MC_R.1).unwrap();
    let params = RetxParams::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (mode, want) in [(McMode::Min, 1.6), (McMode::Max, 5.3)] {
        let res =
            models::mc_harq_arq_cost(&params, r, mode, MC_TRIALS, 7).map_err(|e| e.to_string())?;
        let z = (res.mean - want).abs() / res.stderr;
        ok &= z <= MC_SIGMAS;
        parts.push(format!(
            "{} {} ± {} vs {want} ({} se)",
            mode.label(),
            fmt_sig(res.mean),
            fmt_sig(res.stderr),
            fmt_sig(z)
        ));
    }
    let detail = parts.join("; ");
    if !ok {
        return Err(detail);
    }
    within_budget(start, MC_BUDGET, detail)
}

fn transparency_and_overhead() -> Verdict {
    // direct socket path: generator straight into the sink
    let cfg = flow(OVERHEAD_DURATION);
    let sink = traffic::spawn_sink(
        "127.0.0.1:0".parse().unwrap(),
        SinkConfig {
            window: Some(cfg.duration),
            expected_packets: Some(cfg.packet_count()),
        },
    )
    .map_err(|e| e.to_string())?;
    traffic::generate(&cfg, sink.local_addr(), None).map_err(|e| e.to_string())?;
    sink.wait_quiet(Duration::from_millis(150), Duration::from_secs(2));
    let direct = sink.stop().flow;

    // compare both the windowed throughput and the rate measured over the arrival span
    let pt = passthrough_run(0.0, OVERHEAD_DURATION, 47)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a;
    let overhead = rel(direct.throughput_bps, pt.sink.flow.throughput_bps)
        .max(rel(direct.arrival_rate_bps, pt.sink.flow.arrival_rate_bps));
    let nc = nc_run(10, 15, 0.0, OVERHEAD_DURATION, 48)?;
    let identical = nc.sink.digest == nc.sent.digest
        && nc.sink.in_order
        && nc.sink.flow.packets_delivered == nc.sent.packets;
    check(
        pt.sink.flow.packets_lost == 0 && overhead <= OVERHEAD_MAX && identical,
        format!(
            "direct {} Mbit/s (arrival {}), passthrough {} (arrival {}), overhead {} <= {OVERHEAD_MAX}; \
             lossless nc stream identical: {identical} ({} packets)",
            fmt_sig(direct.throughput_bps / 1e6),
            fmt_sig(direct.arrival_rate_bps / 1e6),
            describe(&pt),
            fmt_sig(pt.sink.flow.arrival_rate_bps / 1e6),
            fmt_sig(overhead),
            nc.sink.flow.packets_delivered
        ),
    )
}

fn random_symbol(rng: &mut ChaCha8Rng) -> CodedSymbol {
    let k = rng.gen_range(1..=255usize);
    let n = rng.gen_range(k..=255usize) as u8;
    let size = rng.gen_range(3..=64usize);
    let symbol: Vec<u8> = (0..size).map(|_| rng.gen()).collect();
    if rng.gen_bool(0.5) {
        let slot = rng.gen_range(0..k) as u8;
        CodedSymbol::systematic(rng.gen(), k, n, slot, symbol)
    } else {
        CodedSymbol {
            block_id: rng.gen(),
            n,
            kind: SymbolKind::Coded,
            coefficients: (0..k).map(|_| rng.gen()).collect(),
            symbol,
        }
    }
}

fn wire_fuzz() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let valid: Vec<Vec<u8>> = (0..64)
        .map(|_| wire::serialize(&random_symbol(&mut rng)))
        .collect();
    let mut accepted = 0usize;
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
        let mut buf = Vec::with_capacity(512);
        for i in 0..FUZZ_DATAGRAMS {
            buf.clear();
            match i % 3 {
                // raw noise
                0 => {
                    let len = rng.gen_range(0..=96);
                    buf.extend((0..len).map(|_| rng.gen::<u8>()));
                }
                // valid prefix, random tail
                1 => {
                    buf.extend_from_slice(&wire::MAGIC);
                    buf.push(wire::VERSION);
                    let len = rng.gen_range(0..=96);
                    buf.extend((0..len).map(|_| rng.gen::<u8>()));
                }
                // valid datagram with bit flips and truncation
                _ => {
                    buf.extend_from_slice(&valid[rng.gen_range(0..valid.len())]);
                    for _ in 0..rng.gen_range(1..=4) {
                        let at = rng.gen_range(0..buf.len());
                        buf[at] ^= 1 << rng.gen_range(0..8);
                    }
                    if rng.gen_bool(0.3) {
                        let cut = rng.gen_range(0..=buf.len());
                        buf.truncate(cut);
                    }
                }
            }
            if wire::parse(&buf).is_ok() {
                accepted += 1;
            }
        }
    }));
    if outcome.is_err() {
        return Err("parser panicked".into());
    }
    for i in 0..ROUND_TRIPS {
        let s = random_symbol(&mut rng);
        match wire::parse(&wire::serialize(&s)) {
            Ok(back) if back == s => {}
            other => return Err(format!("round trip {i} failed: {other:?}")),
        }
    }
    within_budget(
        start,
        FUZZ_BUDGET,
        format!("{FUZZ_DATAGRAMS} fuzzed datagrams ({accepted} parsed as valid), {ROUND_TRIPS} round trips"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("closed-form reproduction", closed_forms),
        ("bracket dominance", dominance),
        ("codec correctness", codec_property),
        ("end-to-end loss recovery, K=10 N=15", e2e_recovery),
        ("CR 1/5 robustness", cr_fifth_robustness),
        ("jitter shape under burst release", jitter_shape),
        ("Monte Carlo convergence", mc_convergence),
        ("transparency and overhead", transparency_and_overhead),
        ("wire-format fuzz", wire_fuzz),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let verdict = panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {id} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {id} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
