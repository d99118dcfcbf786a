//! Paced UDP traffic generator and measuring sink.

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use ncrelay_core::metrics::{fmt_sig, FlowReport};
use ncrelay_core::net::POLL;
use ncrelay_core::traffic::{self, SinkConfig, TrafficConfig, DEFAULT_PAYLOAD_SIZE};

#[derive(Parser, Debug)]
#[command(name = "nc-traffic", version, about = "UDP traffic generator and sink")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Send a paced flow.
    Send {
        /// Target payload rate in bit/s; accepts k, M and G suffixes.
        #[arg(long, default_value = "10M", value_parser = traffic::parse_rate)]
        rate: u64,
        /// Payload octets per datagram (at least 16).
        #[arg(long, default_value_t = DEFAULT_PAYLOAD_SIZE)]
        size: usize,
        /// Run length in seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value = "127.0.0.1:5201")]
        dest: SocketAddr,
        /// Write the send report here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Receive a flow and report throughput, loss and jitter.
    Sink {
        #[arg(long, default_value = "0.0.0.0:5201")]
        listen: SocketAddr,
        /// Write the flow report here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Throughput window in seconds; defaults to the arrival span.
        #[arg(long)]
        window: Option<f64>,
        /// Packets the sender emitted, so a lost tail counts as loss.
        #[arg(long)]
        expect: Option<u64>,
        /// Stop after this many seconds without traffic once the flow started.
        #[arg(long)]
        idle_exit: Option<f64>,
    },
}

fn print_flow(r: &FlowReport) {
    println!(
        "delivered {} lost {} ({}) dup {} | throughput {} Mbit/s | jitter {} ms (mean {} ms)",
        r.packets_delivered,
        r.packets_lost,
        fmt_sig(r.loss_fraction),
        r.duplicates,
        fmt_sig(r.throughput_bps / 1e6),
        fmt_sig(r.jitter_ms),
        fmt_sig(r.mean_jitter_ms)
    );
}

fn main() -> Result<()> {
    ncrelay_cli::init_logging();
    let stop = ncrelay_cli::stop_on_signal()?;
    match Args::parse().cmd {
        Cmd::Send {
            rate,
            size,
            duration,
            dest,
            csv,
        } => {
            anyhow::ensure!(
                duration >= 0.0 && duration.is_finite(),
                "duration must be non-negative"
            );
            let cfg = TrafficConfig::new(rate, size, Duration::from_secs_f64(duration))?;
            info!("sending {} packets to {dest}", cfg.packet_count());
            let r = traffic::generate(&cfg, dest, Some(&stop))?;
            println!(
                "sent {} packets ({} octets) in {} s: {} Mbit/s",
                r.packets,
                r.bytes,
                fmt_sig(r.span.as_secs_f64()),
                fmt_sig(r.rate_bps / 1e6)
            );
            if let Some(path) = csv {
                fs::write(&path, r.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Cmd::Sink {
            listen,
            csv,
            window,
            expect,
            idle_exit,
        } => {
            let sink = traffic::spawn_sink(
                listen,
                SinkConfig {
                    window: window.map(Duration::from_secs_f64),
                    expected_packets: expect,
                },
            )?;
            info!("sink listening on {}", sink.local_addr());
            let idle = idle_exit.map(Duration::from_secs_f64);
            while !stop.load(Ordering::SeqCst) {
                thread::sleep(POLL);
                if idle.is_some_and(|d| sink.arrivals() > 0 && sink.idle_for() >= d) {
                    break;
                }
            }
            let r = sink.stop();
            print_flow(&r.flow);
            if let Some(path) = csv {
                fs::write(&path, r.flow.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
