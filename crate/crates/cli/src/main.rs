//! `pixvlc`: command-line front end for the simulator.
//!
//! Exit codes: 0 when every check passes, 1 when a tolerance or expectation
//! check fails, 2 on any error.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pixvlc::framing::PACKET_BITS;
use pixvlc::harness::{
    replay_trace, reproduce_table, run_scenario_with, snr_sweep, write_samples_csv, Metric, Outcome, RunOptions,
    Scenario, TableName, TableReport, TraceRecord,
};
use pixvlc::metrics::LinkReport;
use pixvlc::optics::{self, EmitterPlacement, OpticalSetup};
use pixvlc::protocol::{estimate_latency, packets_per_slot, LatencyModel};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "pixvlc", version, about = "Pixelated-shutter visible light communication simulator")]
struct Cli {
    /// Print JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum emitter separation and angle, and optionally the emitter-to-pixel map.
    Geometry {
        /// Pixel pitch, meters.
        #[arg(long, default_value_t = 0.036)]
        d: f64,
        /// Emitter plane to lens distance, meters.
        #[arg(long, default_value_t = 0.155)]
        s1: f64,
        /// Lens to shutter distance, meters.
        #[arg(long, default_value_t = 0.082)]
        s2: f64,
        /// Back focal length, meters.
        #[arg(long, default_value_t = 0.0375)]
        bfl: f64,
        #[arg(long, default_value_t = 1)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        cols: usize,
        /// Emitter positions as `x,y;x,y;...` in meters.
        #[arg(long, allow_hyphen_values = true)]
        positions: Option<String>,
    },
    /// Run a scenario file and write its trace.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the trace, event log, reports and optional samples.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every photodiode sample as CSV (needs --out).
        #[arg(long)]
        dump_samples: bool,
    },
    /// Recompute a reference table: GEOMETRY, T3_PACKETS, T5_LATENCY, GOODPUT or ALL.
    Tables { name: String },
    /// Discovery and Identification latency estimate.
    Latency {
        #[arg(long, default_value_t = 100)]
        rows: u64,
        #[arg(long, default_value_t = 100)]
        cols: u64,
        #[arg(long, default_value_t = 100)]
        transmitters: u64,
        #[arg(long, default_value_t = PACKET_BITS as u64)]
        packet_bits: u64,
        /// Seconds per bit, in microseconds.
        #[arg(long, default_value_t = 1.0)]
        bit_time_us: f64,
        /// Switching slot, in microseconds.
        #[arg(long, default_value_t = 1.0)]
        t_s_us: f64,
    },
    /// Whole packets that fit in one switching slot.
    PacketsPerSlot {
        /// Symbol rate, symbols per second.
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        bits_per_symbol: u32,
        /// Switching slot, seconds.
        #[arg(long, default_value_t = 2.0)]
        t_s: f64,
        #[arg(long, default_value_t = PACKET_BITS)]
        packet_bits: usize,
    },
    /// Recompute the reports of a saved trace from its decoded bits.
    Replay { trace: PathBuf },
    /// Per-pixel SNR of a scenario at several switching times.
    SnrSweep {
        scenario: PathBuf,
        /// Switching times in milliseconds.
        #[arg(long, value_delimiter = ',', default_values_t = [100.0, 500.0, 1000.0, 1500.0, 2000.0])]
        times_ms: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every check passed.
fn execute(cli: Cli) -> Result<bool> {
    let json = cli.json;
    match cli.command {
        Command::Geometry { d, s1, s2, bfl, rows, cols, positions } => {
            let setup = OpticalSetup { d, s1, s2, bfl, grid_rows: rows, grid_cols: cols };
            geometry(&setup, positions.as_deref(), json)
        }
        Command::Run { scenario, seed, out, dump_samples } => run(&scenario, seed, out.as_deref(), dump_samples, json),
        Command::Tables { name } => tables(&name, json),
        Command::Latency { rows, cols, transmitters, packet_bits, bit_time_us, t_s_us } => {
            let micros = |us: f64| Duration::from_nanos((us * 1e3).round() as u64);
            let model = LatencyModel::new(rows * cols, transmitters, packet_bits, micros(bit_time_us), micros(t_s_us))?;
            let est = estimate_latency(&model);
            let ms = |d: Duration| d.as_nanos() as f64 / 1e6;
            if json {
                let value = serde_json::json!({
                    "grid_pixels": rows * cols,
                    "step1_ms": ms(est.discovery),
                    "step2_ms": ms(est.identification),
                    "total_ms": ms(est.total),
                });
                println!("{value}");
            } else {
                println!("{:<12} {:>12} {:>12} {:>12}", "pixels", "step 1 [ms]", "step 2 [ms]", "total [ms]");
                println!(
                    "{:<12} {:>12} {:>12} {:>12}",
                    format!("{rows}x{cols}"),
                    ms(est.discovery),
                    ms(est.identification),
                    ms(est.total)
                );
            }
            Ok(true)
        }
        Command::PacketsPerSlot { rate, bits_per_symbol, t_s, packet_bits } => {
            if !(rate > 0.0 && t_s > 0.0 && bits_per_symbol > 0 && packet_bits > 0) {
                bail!("rate, bits per symbol, T_s and packet size must be positive");
            }
            let n = packets_per_slot(rate, bits_per_symbol, t_s, packet_bits);
            if json {
                println!("{}", serde_json::json!({ "symbol_rate": rate, "t_s": t_s, "packets": n }));
            } else {
                println!("{n} packets of {packet_bits} bits in {t_s} s at {rate} symbols/s");
            }
            Ok(true)
        }
        Command::Replay { trace } => {
            let reports = replay_trace(&trace)?;
            print_reports(&reports, json)?;
            Ok(true)
        }
        Command::SnrSweep { scenario, times_ms } => {
            let scenario = Scenario::load(&scenario)?;
            let times: Vec<f64> = times_ms.iter().map(|ms| ms / 1e3).collect();
            let rows = snr_sweep(&scenario, &times)?;
            if json {
                println!("{}", serde_json::to_string(&rows)?);
            } else {
                for row in rows {
                    let cells: Vec<String> = row.pixel_snr_db.iter().map(|s| s.to_string()).collect();
                    println!("{:>8.0} ms  {}", row.switching_time_s * 1e3, cells.join("  "));
                }
            }
            Ok(true)
        }
    }
}

fn geometry(setup: &OpticalSetup, positions: Option<&str>, json: bool) -> Result<bool> {
    let h = optics::min_separation(setup)?;
    let alpha = optics::min_angle(setup)?;
    let mapping = match positions {
        Some(text) => {
            let placement = parse_positions(text)?;
            Some(optics::map_emitters_to_pixels(setup, &placement)?)
        }
        None => None,
    };
    if json {
        let mut value = serde_json::json!({ "h_m": h, "h_cm": h * 100.0, "alpha_deg": alpha });
        match &mapping {
            Some(Ok(pixels)) => value["pixels"] = serde_json::to_value(pixels)?,
            Some(Err(infeasible)) => value["infeasible"] = serde_json::to_value(infeasible)?,
            None => {}
        }
        println!("{value}");
    } else {
        println!("minimum separation h = {:.2} cm", h * 100.0);
        println!("minimum angle alpha  = {:.1} deg", alpha);
        match &mapping {
            Some(Ok(pixels)) => println!("emitter pixels       = {pixels:?}"),
            Some(Err(infeasible)) => println!("infeasible placement: {infeasible}"),
            None => {}
        }
    }
    Ok(!matches!(mapping, Some(Err(_))))
}

fn parse_positions(text: &str) -> Result<EmitterPlacement> {
    let positions = text
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (x, y) = pair.split_once(',').with_context(|| format!("position {pair:?} is not x,y"))?;
            Ok((x.trim().parse::<f64>()?, y.trim().parse::<f64>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmitterPlacement { positions })
}

fn tables(name: &str, json: bool) -> Result<bool> {
    let names: Vec<TableName> = if name.eq_ignore_ascii_case("all") {
        TableName::ALL.to_vec()
    } else {
        vec![name.parse::<TableName>().map_err(anyhow::Error::msg)?]
    };
    let reports: Vec<TableReport> = names.into_iter().map(reproduce_table).collect();
    if json {
        println!("{}", serde_json::to_string(&reports)?);
    } else {
        for r in &reports {
            println!("{}", r.render());
        }
    }
    Ok(reports.iter().all(TableReport::passed))
}

fn run(path: &Path, seed: Option<u64>, out: Option<&Path>, dump_samples: bool, json: bool) -> Result<bool> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    if dump_samples && out.is_none() {
        bail!("--dump-samples needs --out");
    }
    let output = run_scenario_with(&scenario, RunOptions { dump_samples })?;
    let trace = &output.trace;
    let stem = if scenario.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    } else {
        scenario.name.clone()
    };
    if let Some(dir) = out {
        write_outputs(dir, &stem, trace)?;
        if let Some(samples) = &output.samples {
            write_samples_csv(dir.join(format!("{stem}.samples.csv")), samples)?;
        }
    }

    let checks: Vec<(String, bool)> = scenario
        .expect
        .iter()
        .map(|e| {
            let report = trace.reports.iter().find(|r| r.label == e.label);
            let value = report.and_then(|r| match e.metric {
                Metric::Ber => r.ber,
                Metric::PerPercent => r.per_percent,
                Metric::SnrDb => r.snr_db.map(|s| s.db()),
            });
            let range = format!(
                "[{}, {}]",
                e.min.map_or("-inf".into(), |v| v.to_string()),
                e.max.map_or("+inf".into(), |v| v.to_string())
            );
            let shown = value.map_or("n/a".into(), |v| format!("{v:.6}"));
            (format!("emitter {} {:?} = {shown} in {range}", e.label, e.metric), e.holds(value))
        })
        .collect();

    if json {
        let value = serde_json::json!({
            "scenario": stem,
            "scenario_hash": trace.scenario_hash,
            "seed": trace.seed,
            "outcome": trace.outcome,
            "reports": trace.reports,
            "checks": checks.iter().map(|(c, ok)| serde_json::json!({ "check": c, "pass": ok })).collect::<Vec<_>>(),
        });
        println!("{value}");
    } else {
        println!("scenario {stem} (seed {}, hash {})", trace.seed, &trace.scenario_hash[..12]);
        match &trace.outcome {
            Outcome::FixedMask => println!("fixed mask, controller not run"),
            Outcome::Locked { pixels, labels, cycles, dwells, lock_time_s } => println!(
                "locked pixels {pixels:?} (emitters {labels:?}) after {cycles} cycle(s), {dwells} dwells, {lock_time_s:.3} s"
            ),
            Outcome::NonConvergence { cycles, dwells } => {
                println!("no lock after {cycles} cycle(s) and {dwells} dwells; all pixels closed")
            }
        }
        print_reports(&trace.reports, false)?;
        for (check, ok) in &checks {
            println!("{} {check}", if *ok { "PASS" } else { "FAIL" });
        }
    }
    Ok(checks.iter().all(|(_, ok)| *ok))
}

fn write_outputs(dir: &Path, stem: &str, trace: &TraceRecord) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: String, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write(format!("{stem}.trace.json"), serde_json::to_string(trace)?)?;
    let events: Vec<String> = trace.events.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    write(format!("{stem}.events.jsonl"), events.iter().map(|l| format!("{l}\n")).collect())?;
    write(format!("{stem}.reports.json"), serde_json::to_string_pretty(&trace.reports)?)?;
    Ok(())
}

fn print_reports(reports: &[LinkReport], json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(reports)?);
        return Ok(());
    }
    let opt = |v: Option<f64>, digits: usize| v.map_or("n/a".to_string(), |x| format!("{x:.digits$}"));
    println!(
        "{:<8} {:>12} {:>12} {:>10} {:>10} {:>12} {:>14}",
        "emitter", "BER", "bits", "PER [%]", "packets", "SNR [dB]", "goodput [b/s]"
    );
    for r in reports {
        println!(
            "{:<8} {:>12} {:>12} {:>10} {:>10} {:>12} {:>14}",
            r.label,
            opt(r.ber, 6),
            r.bits_compared,
            opt(r.per_percent, 2),
            format!("{}/{}", r.packets_detected_valid, r.packets_expected),
            r.snr_db.map_or("n/a".into(), |s| match s.db() {
                v if v.is_finite() => format!("{v:.2}"),
                v => format!("{v}"),
            }),
            opt(r.goodput_bps, 0),
        );
    }
    Ok(())
}
