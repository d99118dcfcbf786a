//! HARQ/ARQ versus network-coding transmission cost.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use ncrelay_core::metrics::fmt_sig;
use ncrelay_core::models::{self, CodeRate, LossRate, McMode, RetxParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Closed,
    McMin,
    McMax,
    McUniform,
}

#[derive(Parser, Debug)]
#[command(
    name = "nc-model",
    version,
    about = "Transmissions per source packet under HARQ/ARQ and RLNC"
)]
struct Args {
    /// Loss rates, comma-separated; decimals or fractions such as 1/3.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2")]
    r: Vec<String>,
    /// Code rate K/N for the network-coding column, e.g. 2/3.
    #[arg(long)]
    cr: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Closed)]
    mode: Mode,
    /// Monte Carlo trials per loss rate.
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Transmissions in one HARQ cycle.
    #[arg(long, default_value_t = 5)]
    harq_max_tx: u32,
    /// ARQ rounds, each a full HARQ cycle.
    #[arg(long, default_value_t = 8)]
    arq_max_rounds: u32,
    /// Write the table here as CSV instead of printing it.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn closed_table(rates: &[LossRate], cr: Option<CodeRate>, params: &RetxParams) -> String {
    let mut out = String::from("r,p_ha_min,p_ha_max,p_ha_uniform,p_nc_capacity,advantage,p_nc\n");
    for &r in rates {
        let cap = models::p_nc_capacity(r).ok();
        let adv = cap.map(|c| params.max_cost(r) / c);
        let f = |q: models::Rational| fmt_sig(models::to_f64(&q));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_sig(r.as_f64()),
            f(params.min_cost(r)),
            f(params.max_cost(r)),
            f(params.uniform_cost(r)),
            cap.map(f).unwrap_or_default(),
            adv.map(f).unwrap_or_default(),
            cr.map(|c| f(models::p_nc(c))).unwrap_or_default(),
        ));
    }
    out
}

fn mc_table(
    rates: &[LossRate],
    params: &RetxParams,
    mode: McMode,
    trials: u64,
    seed: u64,
) -> Result<String> {
    let mut out =
        String::from("r,mode,trials,mean,stderr,closed_form,delivered_fraction,min_tx,max_tx\n");
    for &r in rates {
        let res = models::mc_harq_arq_cost(params, r, mode, trials, seed)?;
        let closed = match mode {
            McMode::Min => params.min_cost(r),
            McMode::Max => params.max_cost(r),
            McMode::Uniform => params.uniform_cost(r),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_sig(r.as_f64()),
            mode.label(),
            res.trials,
            fmt_sig(res.mean),
            fmt_sig(res.stderr),
            fmt_sig(models::to_f64(&closed)),
            fmt_sig(res.delivered_fraction),
            res.min_tx,
            res.max_tx
        ));
    }
    Ok(out)
}

fn main() -> Result<()> {
    let args = Args::parse();
    let rates = args
        .r
        .iter()
        .map(|s| LossRate::parse(s).with_context(|| format!("loss rate '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    let cr = args
        .cr
        .as_deref()
        .map(|s| CodeRate::parse(s).with_context(|| format!("code rate '{s}'")))
        .transpose()?;
    let params = RetxParams {
        harq_max_tx: args.harq_max_tx,
        arq_max_rounds: args.arq_max_rounds,
        ..RetxParams::default()
    };
    params.validate()?;
    let table = match args.mode {
        Mode::Closed => closed_table(&rates, cr, &params),
        Mode::McMin => mc_table(&rates, &params, McMode::Min, args.trials, args.seed)?,
        Mode::McMax => mc_table(&rates, &params, McMode::Max, args.trials, args.seed)?,
        Mode::McUniform => mc_table(&rates, &params, McMode::Uniform, args.trials, args.seed)?,
    };
    match args.csv {
        Some(path) => {
            fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{table}"),
    }
    Ok(())
}
