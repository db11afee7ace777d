//! Command-line driver. Exit codes: 0 pass, 1 assertion or runtime failure,
//! 2 usage or parse error, 3 environment (bind, file output).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use clap::{Parser, Subcommand, ValueEnum};

use canwire::capture::{self, infer_periods, read_log, strip_timestamps, write_log, LogRecord};
use canwire::catalog::{catalog, Period};
use canwire::control::{self, ServeOptions};
use canwire::hex;
use canwire::scenario::{Scenario, ScenarioError};
use canwire::testbed::{Side, Testbed, TestbedConfig, Topology};
use canwire::vehicle::DemoScript;
use canwire::Micros;

const PASS: u8 = 0;
const FAIL: u8 = 1;
const USAGE: u8 = 2;
const ENVIRONMENT: u8 = 3;

#[derive(Parser)]
#[command(name = "canwire", version, about = "Virtual CAN-bus security testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BusSide {
    Upstream,
    Downstream,
}

impl From<BusSide> for Side {
    fn from(b: BusSide) -> Self {
        match b {
            BusSide::Upstream => Side::Upstream,
            BusSide::Downstream => Side::Downstream,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in virtual time and check its assertions.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario paced to wall-clock time behind the control endpoint.
    Serve {
        /// Defaults to the demo drive on the man-in-the-middle bench.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = control::DEFAULT_ENDPOINT)]
        endpoint: String,
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Record bus traffic to a candump-style log.
    Record {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// e.g. 10s, 1500ms, 2m; a bare number is seconds.
        #[arg(long, value_parser = parse_duration)]
        duration: Micros,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "upstream")]
        bus: BusSide,
        /// Omit timestamps, as in a log of unknown timing.
        #[arg(long)]
        untimed: bool,
    },
    /// Replay a timed log into a cluster and print what it ends up showing.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Keep the simulated vehicle transmitting alongside the replay.
        #[arg(long)]
        live: bool,
    },
    /// Estimate message periods from a log, timed or not.
    Infer {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "130", value_parser = parse_id)]
        ref_id: u32,
        #[arg(long, default_value_t = 100.0)]
        ref_period_ms: f64,
        #[arg(long)]
        json: bool,
    },
}

fn parse_id(s: &str) -> Result<u32, String> {
    hex::parse_id(s).ok_or_else(|| format!("`{s}` is not a hex id"))
}

fn parse_duration(s: &str) -> Result<Micros, String> {
    let (number, unit) = match s.find(|c: char| c.is_ascii_alphabetic()) {
        Some(i) => s.split_at(i),
        None => (s, "s"),
    };
    let value: f64 = number.trim().parse().map_err(|_| format!("bad duration `{s}`"))?;
    let scale = match unit {
        "us" => 1.0,
        "ms" => 1e3,
        "s" => 1e6,
        "m" => 60e6,
        _ => return Err(format!("unknown unit in `{s}` (us, ms, s, m)")),
    };
    if !(value.is_finite() && value >= 0.0) {
        return Err(format!("bad duration `{s}`"));
    }
    Ok((value * scale).round() as Micros)
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn scenario_failure(e: ScenarioError) -> Failure {
    let code = if e.is_input_error() { USAGE } else { FAIL };
    fail(code, e.to_string())
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario, Failure> {
    match path {
        Some(p) => Scenario::load(p).map_err(scenario_failure),
        None => Ok(Scenario {
            name: "demo".into(),
            demo: Some(DemoScript::default_drive()),
            ..Scenario::from_json(r#"{"duration_ms": 0}"#).expect("minimal scenario")
        }),
    }
}

fn read_records(path: &Path) -> Result<Vec<LogRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(USAGE, format!("cannot read {}: {e}", path.display())))?;
    read_log(&text).map_err(|e| fail(FAIL, format!("{}: {e}", path.display())))
}

fn run(scenario: &Path, json: bool) -> Result<u8, Failure> {
    let scenario = Scenario::load(scenario).map_err(scenario_failure)?;
    let report = scenario.run().map_err(scenario_failure)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    } else {
        print!("{}", report.table());
    }
    Ok(if report.passed() { PASS } else { FAIL })
}

fn serve(scenario: Option<&Path>, endpoint: String, time_scale: f64) -> Result<u8, Failure> {
    let scenario = load_scenario(scenario)?;
    let testbed = scenario.testbed().map_err(scenario_failure)?;
    let options = ServeOptions {
        endpoint,
        time_scale,
        ..ServeOptions::default()
    };
    let server = match control::spawn(testbed, options) {
        Ok(s) => s,
        Err(e @ control::ServerError::BadScale(_)) => return Err(fail(USAGE, e.to_string())),
        Err(e) => return Err(fail(ENVIRONMENT, e.to_string())),
    };
    eprintln!("listening on ws://{}{}  (ctrl-c to stop)", server.addr(), control::CONTROL_PATH);
    let stop = server.stop_flag();
    ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).map_err(|e| fail(ENVIRONMENT, e.to_string()))?;
    let testbed = server.wait().map_err(|e| fail(FAIL, e.to_string()))?;
    let t = testbed.telemetry();
    println!(
        "stopped at {:.3} s: displayed {} km/h, {} rpm; truth {} km/h, {} rpm",
        t.sim_time_us as f64 / 1e6,
        t.cluster.speed,
        t.cluster.rpm,
        t.vehicle.speed,
        t.vehicle.rpm
    );
    println!("{}", serde_json::to_string(&t.cluster).expect("state serializes"));
    Ok(PASS)
}

fn record(scenario: Option<&Path>, duration: Micros, out: &Path, side: Side, untimed: bool) -> Result<u8, Failure> {
    let scenario = load_scenario(scenario)?;
    let mut tb = scenario.testbed().map_err(scenario_failure)?;
    tb.set_recording(true);
    for a in scenario.actions.iter().filter(|a| a.at_ms * 1000 <= duration) {
        tb.run_until(a.at_ms * 1000).map_err(|e| fail(FAIL, e.to_string()))?;
        tb.apply(&a.action).map_err(|e| fail(FAIL, format!("action {}: {e}", a.action.verb())))?;
    }
    tb.run_until(duration).map_err(|e| fail(FAIL, e.to_string()))?;
    let channel = match side {
        Side::Upstream => "can0",
        Side::Downstream => "can1",
    };
    let mut records = capture::record(&tb.take_events(), tb.bus_id(side), channel, 0..duration + 1);
    if untimed {
        records = strip_timestamps(&records);
    }
    std::fs::write(out, write_log(&records)).map_err(|e| fail(ENVIRONMENT, format!("cannot write {}: {e}", out.display())))?;
    eprintln!("{} frames written to {}", records.len(), out.display());
    Ok(PASS)
}

fn replay(log: &Path, speed: f64, live: bool) -> Result<u8, Failure> {
    let records = read_records(log)?;
    let mut tb = Testbed::new(TestbedConfig {
        topology: Topology::Direct,
        vehicle_active: live,
        ..TestbedConfig::default()
    })
    .map_err(|e| fail(FAIL, e.to_string()))?;
    let t0 = records.first().and_then(|r| r.timestamp).unwrap_or(0);
    let start = if live { t0 } else { 0 };
    tb.add_replayer(Side::Downstream, &records, start, speed)
        .map_err(|e| fail(FAIL, e.to_string()))?;
    let end = tb.replayers()[0].end().unwrap_or(0) + 10_000;
    tb.run_until(end).map_err(|e| fail(FAIL, e.to_string()))?;
    let r = &tb.replayers()[0];
    eprintln!(
        "replayed {} frames ({} dropped) ending at {:.3} s",
        records.len() - r.remaining(),
        r.dropped(),
        end as f64 / 1e6
    );
    println!("{}", serde_json::to_string_pretty(&tb.cluster().snapshot()).expect("state serializes"));
    Ok(PASS)
}

fn infer(log: &Path, ref_id: u32, ref_period_ms: f64, json: bool) -> Result<u8, Failure> {
    let records = read_records(log)?;
    let estimates = infer_periods(&records, ref_id, ref_period_ms).map_err(|e| fail(FAIL, e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&estimates).expect("estimates serialize"));
        return Ok(PASS);
    }
    println!("{:<5} {:>10} {:>10} {:>8} {:>10} {:>10}", "id", "period_ms", "raw_ms", "samples", "confidence", "catalog");
    for e in &estimates {
        let period = e.period_ms.map_or("once".to_string(), |p| format!("{p}"));
        let raw = e.raw_ms.map_or("-".to_string(), |p| format!("{p:.2}"));
        let known = match catalog().get(e.id).map(|m| m.period) {
            Some(Period::Every(ms)) => ms.to_string(),
            Some(Period::Once) => "once".into(),
            None => "-".into(),
        };
        println!(
            "{:<5} {:>10} {:>10} {:>8} {:>10.2} {:>10}",
            hex::id_string(e.id),
            period,
            raw,
            e.samples,
            e.confidence,
            known
        );
    }
    Ok(PASS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CANWIRE_LOG_LEVEL", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { PASS });
        }
    };
    let result = match cli.command {
        Command::Run { scenario, json } => run(&scenario, json),
        Command::Serve {
            scenario,
            endpoint,
            time_scale,
        } => serve(scenario.as_deref(), endpoint, time_scale),
        Command::Record {
            scenario,
            duration,
            out,
            bus,
            untimed,
        } => record(scenario.as_deref(), duration, &out, bus.into(), untimed),
        Command::Replay { log, speed, live } => replay(&log, speed, live),
        Command::Infer {
            log,
            ref_id,
            ref_period_ms,
            json,
        } => infer(&log, ref_id, ref_period_ms, json),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
