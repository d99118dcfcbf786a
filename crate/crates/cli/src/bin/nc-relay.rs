//! Encoder, decoder or passthrough proxy.
//!
//! Settings resolve as: command line, then `NC_*` environment variables, then
//! the `--config` file (`key = value`, keys named like the long options), then
//! built-in defaults. While running, type `drain` on stdin to flush the current
//! block (encoder) or salvage and release all pending blocks (decoder),
//! `stats` to print counters, and `quit` to stop.

use std::fs;
use std::io::{self, BufRead};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::Ordering;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Parser;
use log::info;

use ncrelay_core::codec::CodingParams;
use ncrelay_core::config::{self, Section};
use ncrelay_core::net::POLL;
use ncrelay_core::relay::{
    self, RelayConfig, ReleasePolicy, Role, DEFAULT_APP_PORT, DEFAULT_CODED_PORT,
    DEFAULT_IDLE_TIMEOUT, DEFAULT_MAX_BLOCKS, DEFAULT_SALVAGE_TIMEOUT, DEFAULT_SYMBOL_SIZE,
};

#[derive(Parser, Debug)]
#[command(
    name = "nc-relay",
    version,
    about = "RLNC erasure-correcting UDP proxy"
)]
struct Args {
    /// encode | decode | passthrough
    role: Role,
    /// Application-facing port.
    #[arg(long, env = "NC_APP_PORT")]
    app_port: Option<u16>,
    /// Port carrying coded traffic between the proxies.
    #[arg(long, env = "NC_CODED_PORT")]
    coded_port: Option<u16>,
    /// Address of the other proxy (encoder, passthrough) or of the application (decoder).
    #[arg(long, env = "NC_PEER")]
    peer: Option<IpAddr>,
    /// Override the listen address derived from the ports.
    #[arg(long, env = "NC_LISTEN")]
    listen: Option<SocketAddr>,
    /// Override the forward address derived from the ports.
    #[arg(long, env = "NC_FORWARD")]
    forward: Option<SocketAddr>,
    /// Source packets per block.
    #[arg(long, env = "NC_K")]
    k: Option<usize>,
    /// Packets sent per block, coded ones included.
    #[arg(long, env = "NC_N")]
    n: Option<usize>,
    /// Octets per coded symbol; payloads may be up to two less.
    #[arg(long, env = "NC_SYMBOL_SIZE")]
    symbol_size: Option<usize>,
    /// burst | early
    #[arg(long, env = "NC_RELEASE")]
    release: Option<ReleasePolicy>,
    /// Encoder: flush a partial block after this much silence.
    #[arg(long, env = "NC_IDLE_TIMEOUT_MS")]
    idle_timeout_ms: Option<u64>,
    /// Decoder: salvage a block that made no progress for this long.
    #[arg(long, env = "NC_SALVAGE_TIMEOUT_MS")]
    salvage_timeout_ms: Option<u64>,
    /// Decoder: incomplete blocks held before the oldest is salvaged.
    #[arg(long, env = "NC_MAX_BLOCKS")]
    max_blocks: Option<usize>,
    /// Seed for coefficient draws.
    #[arg(long, env = "NC_SEED")]
    seed: Option<u64>,
    /// Write final counters here as CSV.
    #[arg(long, env = "NC_METRICS_CSV")]
    metrics_csv: Option<PathBuf>,
    /// key = value file supplying defaults.
    #[arg(long, env = "NC_CONFIG")]
    config: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 14] = [
    "app_port",
    "coded_port",
    "peer",
    "listen",
    "forward",
    "k",
    "n",
    "symbol_size",
    "release",
    "idle_timeout_ms",
    "salvage_timeout_ms",
    "max_blocks",
    "seed",
    "metrics_csv",
];

struct Resolver {
    file: Section,
}

impl Resolver {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        let file = match path {
            None => Section::default(),
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let mut parsed =
                    config::parse(&text).with_context(|| format!("parsing {}", p.display()))?;
                if let Some((name, _)) = parsed.sections.first() {
                    bail!(
                        "{}: sections are not used here (found [{name}])",
                        p.display()
                    );
                }
                // accept dashed spellings too
                let mut section = Section::default();
                for key in parsed.global.keys() {
                    section.insert(
                        key.replace('-', "_"),
                        parsed.global.get(key).unwrap_or_default(),
                    );
                }
                parsed.global = section;
                parsed
                    .global
                    .expect_keys(&p.display().to_string(), &CONFIG_KEYS)?;
                parsed.global
            }
        };
        Ok(Self { file })
    }

    fn pick<T>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = cli {
            return Ok(v);
        }
        Ok(self.file.parse(key)?.unwrap_or(default))
    }

    fn pick_opt<T>(&self, cli: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => Ok(self.file.parse(key)?),
        }
    }
}

fn build_config(args: &Args) -> Result<(RelayConfig, Option<PathBuf>)> {
    let res = Resolver::load(args.config.as_ref())?;
    let k = res.pick(args.k, "k", 10)?;
    let n = res.pick(args.n, "n", 15)?;
    let symbol_size = res.pick(args.symbol_size, "symbol_size", DEFAULT_SYMBOL_SIZE)?;
    let coding = CodingParams::new(k, n, symbol_size)?;
    let app_port = res.pick(args.app_port, "app_port", DEFAULT_APP_PORT)?;
    let coded_port = res.pick(args.coded_port, "coded_port", DEFAULT_CODED_PORT)?;
    let peer = res.pick(args.peer, "peer", IpAddr::from([127, 0, 0, 1]))?;
    let mut cfg = RelayConfig::from_ports(args.role, app_port, coded_port, peer, coding)?;
    if let Some(l) = res.pick_opt(args.listen, "listen")? {
        cfg.listen = l;
    }
    if let Some(f) = res.pick_opt(args.forward, "forward")? {
        cfg.forward = f;
    }
    cfg.release = res.pick(args.release, "release", ReleasePolicy::Burst)?;
    cfg.idle_timeout = Duration::from_millis(res.pick(
        args.idle_timeout_ms,
        "idle_timeout_ms",
        DEFAULT_IDLE_TIMEOUT.as_millis() as u64,
    )?);
    cfg.salvage_timeout = Duration::from_millis(res.pick(
        args.salvage_timeout_ms,
        "salvage_timeout_ms",
        DEFAULT_SALVAGE_TIMEOUT.as_millis() as u64,
    )?);
    cfg.max_blocks = res.pick(args.max_blocks, "max_blocks", DEFAULT_MAX_BLOCKS)?;
    cfg.seed = res.pick(args.seed, "seed", 0)?;
    cfg.validate()?;
    let metrics = res.pick_opt(args.metrics_csv.clone(), "metrics_csv")?;
    Ok((cfg, metrics))
}

enum Command {
    Drain,
    Stats,
    Quit,
}

fn read_commands(tx: mpsc::Sender<Command>) {
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { return };
        let cmd = match line.trim() {
            "drain" => Command::Drain,
            "stats" => Command::Stats,
            "quit" | "stop" => Command::Quit,
            "" => continue,
            other => {
                eprintln!("unknown command '{other}' (drain | stats | quit)");
                continue;
            }
        };
        if tx.send(cmd).is_err() {
            return;
        }
    }
}

fn main() -> Result<()> {
    ncrelay_cli::init_logging();
    let args = Args::parse();
    let (cfg, metrics_csv) = build_config(&args)?;
    let stop = ncrelay_cli::stop_on_signal()?;
    info!(
        "{} listening on {}, forwarding to {} (k={}, n={}, symbol {} octets, {} release)",
        cfg.role,
        cfg.listen,
        cfg.forward,
        cfg.coding.k(),
        cfg.coding.n(),
        cfg.coding.symbol_size(),
        cfg.release
    );
    let handle = relay::spawn(cfg)?;

    let (tx, rx) = mpsc::channel();
    thread::Builder::new()
        .name("stdin".into())
        .spawn(move || read_commands(tx))?;

    while !stop.load(Ordering::SeqCst) && !handle.is_finished() {
        match rx.recv_timeout(POLL) {
            Ok(Command::Drain) => {
                handle.drain();
                info!("drain requested");
            }
            Ok(Command::Stats) => print!("{}", handle.stats().to_csv()),
            Ok(Command::Quit) => break,
            Err(_) => {}
        }
    }
    let stats = handle.stop();
    info!("stopped: {stats:?}");
    if let Some(path) = metrics_csv {
        fs::write(&path, stats.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
