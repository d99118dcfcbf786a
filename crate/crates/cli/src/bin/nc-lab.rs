//! Experiment campaigns: live loopback runs plus modelled HARQ/ARQ rows.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::warn;

use ncrelay_core::lab;
use ncrelay_core::metrics::parse_csv;

#[derive(Parser, Debug)]
#[command(
    name = "nc-lab",
    version,
    about = "Loss-sweep campaigns over a loopback relay pipeline"
)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run every scenario of a campaign file.
    Run {
        /// Campaign file: global defaults, then one [section] per scenario.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for campaign.csv, report.txt and runs/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare coded scenarios of a campaign CSV against the HARQ/ARQ bracket.
    Report {
        #[arg(long)]
        campaign: PathBuf,
    },
}

fn main() -> Result<()> {
    ncrelay_cli::init_logging();
    match Args::parse().cmd {
        Cmd::Run { spec, out } => {
            let text =
                fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let specs = lab::parse_campaign(&text)
                .with_context(|| format!("parsing {}", spec.display()))?;
            let campaign = lab::run_campaign(&specs, &out)?;
            let report = lab::compare_report(&campaign.rows);
            fs::write(out.join("report.txt"), report.to_string())?;
            print!("{}", campaign.csv());
            println!();
            print!("{report}");
            for (s, r, e) in &campaign.failures {
                warn!("{s} at r={r} failed: {e}");
            }
        }
        Cmd::Report { campaign } => {
            let text = fs::read_to_string(&campaign)
                .with_context(|| format!("reading {}", campaign.display()))?;
            let rows = parse_csv(&text)?;
            print!("{}", lab::compare_report(&rows));
        }
    }
    Ok(())
}
