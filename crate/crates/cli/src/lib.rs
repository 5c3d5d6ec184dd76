//! Command implementations behind the `qoffload` binary.
//!
//! Exit codes: 0 success, 2 device or connection failure, 3 bad input
//! (arguments, files, QASM, Hamiltonians), 4 server lifecycle.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qoffload::circuit::{bell, ghz3, Circuit, Histogram};
use qoffload::emit::{check_qir_shape, emit_qasm, emit_qir, parse_qasm};
use qoffload::resman::{serve, LatencyConfig, ServerConfig};
use qoffload::runtime::{DeviceConfig, DeviceRegistry, Job, RuntimeError};
use qoffload::sim::Seed;
use qoffload::vqe::{optimize, AnsatzSpec, Hamiltonian, VqeConfig, VqeError, VqeReport};

pub const EXIT_DEVICE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SERVER: u8 = 4;

const DEFAULT_ENDPOINT: &str = "127.0.0.1:7117";

#[derive(Debug, Parser)]
#[command(name = "qoffload", version, about = "Offload quantum circuits to simulators and remote devices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prepare and measure a Bell pair.
    Bell(JobArgs),
    /// Execute an OpenQASM 2.0 file.
    Run {
        /// QASM source file.
        file: PathBuf,
        #[command(flatten)]
        job: JobArgs,
    },
    /// Translate a circuit to OpenQASM 2.0 or QIR.
    Transpile(TranspileArgs),
    /// Run the resource manager until interrupted.
    Serve(ServeArgs),
    /// Minimize a Pauli Hamiltonian with the variational eigensolver.
    Vqe(VqeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeviceChoice {
    /// In-process statevector simulator.
    Sim,
    /// Remote resource manager at --endpoint.
    Qpu,
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    #[arg(long, value_enum, default_value = "sim")]
    pub device: DeviceChoice,
    /// Resource manager address for --device qpu.
    #[arg(long, env = "QOFFLOAD_ENDPOINT", default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    /// Delay added to every message leg to the remote device.
    #[arg(long, default_value_t = 0)]
    pub latency_ms: u64,
    #[arg(long, env = "QOFFLOAD_SEED", default_value_t = 0)]
    pub seed: Seed,
    /// Print a JSON document instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct JobArgs {
    #[arg(long, default_value_t = 1000)]
    pub shots: u64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    Bell,
    Ghz3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Qasm,
    Qir,
}

#[derive(Debug, Args)]
pub struct TranspileArgs {
    /// QASM source file.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    #[arg(long, value_enum, default_value = "qasm")]
    pub to: Target,
    /// Write to this file instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Re-read the output and compare it with the input circuit.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "QOFFLOAD_BIND", default_value = DEFAULT_ENDPOINT)]
    pub bind: String,
    /// Delay before handling each request and again before each response.
    #[arg(long, env = "QOFFLOAD_LATENCY_MS", default_value_t = 0)]
    pub latency_ms: u64,
    #[arg(long, env = "QOFFLOAD_CAPACITY", default_value_t = 24)]
    pub capacity: usize,
    /// Seconds a fetched result stays available.
    #[arg(long, env = "QOFFLOAD_TTL_SECS", default_value_t = 600)]
    pub ttl_secs: u64,
}

#[derive(Debug, Args)]
pub struct VqeArgs {
    /// Hamiltonian file, one `coefficient PAULIS` term per line.
    pub hamiltonian: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// Shots per term; 0 computes exact expectations (sim only).
    #[arg(long, default_value_t = 4096)]
    pub shots: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Stop when the simplex energy spread falls below this.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Initial parameters: one value for all, or a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Vec<f64>,
    /// Initial simplex step.
    #[arg(long, default_value_t = VqeConfig::DEFAULT_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub device: DeviceArgs,
}

/// `--json` document of `bell` and `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub circuit: String,
    pub device: String,
    pub shots: u64,
    pub seed: Seed,
    pub histogram: Histogram,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn device(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DEVICE,
            message: message.into(),
        }
    }

    pub fn server(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SERVER,
            message: message.into(),
        }
    }
}

impl From<RuntimeError> for CliError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::JobFailed { .. } | RuntimeError::WorkerStopped(_) => Self::device(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

impl From<VqeError> for CliError {
    fn from(e: VqeError) -> Self {
        match e {
            VqeError::Runtime(r) => r.into(),
            VqeError::Aborted { source, partial } => {
                let inner = CliError::from(*source);
                Self {
                    code: inner.code,
                    message: format!(
                        "{} (aborted after {} iterations, best energy so far {})",
                        inner.message, partial.outcome.iterations, partial.outcome.best_energy
                    ),
                }
            }
            other => Self::input(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::input(format!("i/o error: {e}"))
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn registry_for(args: &DeviceArgs, capacity: usize) -> Result<(DeviceRegistry, &'static str), CliError> {
    let mut registry = DeviceRegistry::new();
    let name = match args.device {
        DeviceChoice::Sim => {
            registry.register_device(DeviceConfig::local("sim", capacity))?;
            "sim"
        }
        DeviceChoice::Qpu => {
            let config = DeviceConfig::remote("qpu", args.endpoint.clone(), capacity)
                .with_latency(Duration::from_millis(args.latency_ms));
            registry.register_device(config)?;
            "qpu"
        }
    };
    Ok((registry, name))
}

fn histogram_table(histogram: &Histogram) -> String {
    let mut s = String::new();
    for (k, count) in histogram.counts().iter().enumerate() {
        let _ = writeln!(s, "{} {count}", histogram.bitstring(k));
    }
    s
}

fn run_job(name: &str, circuit: Circuit, args: &JobArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (registry, device) = registry_for(&args.device, qoffload::circuit::DEFAULT_MAX_QUBITS)?;
    let job = Job::new(circuit, args.shots, args.device.seed)?;
    let result = registry.submit_sync(device, job)?;
    if args.device.json {
        let report = JobReport {
            circuit: name.to_string(),
            device: device.to_string(),
            shots: args.shots,
            seed: args.device.seed,
            histogram: result.histogram,
            wall_time_s: result.wall_time.as_secs_f64(),
        };
        writeln!(out, "{}", to_json(&report)?)?;
    } else {
        writeln!(out, "circuit {name} on {device}, {} shots, seed {}", args.shots, args.device.seed)?;
        write!(out, "{}", histogram_table(&result.histogram))?;
        writeln!(err, "wall time {:.3} ms", result.wall_time.as_secs_f64() * 1e3)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::input(format!("cannot encode JSON: {e}")))
}

fn transpile(args: &TranspileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let circuit = match (&args.input, args.builtin) {
        (_, Some(Builtin::Bell)) => bell(),
        (_, Some(Builtin::Ghz3)) => ghz3(),
        (Some(path), None) => {
            let text = read_file(path)?;
            parse_qasm(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(CliError::input("give an input file or --builtin")),
    };
    let text = match args.to {
        Target::Qasm => {
            let qasm = emit_qasm(&circuit).map_err(|e| CliError::input(e.to_string()))?;
            if args.check {
                let back = parse_qasm(qasm.as_str()).map_err(|e| CliError::input(format!("re-parse failed: {e}")))?;
                if back != circuit {
                    return Err(CliError::input("re-parsed QASM differs from the input circuit"));
                }
            }
            qasm.into_string()
        }
        Target::Qir => {
            let qir = emit_qir(&circuit).map_err(|e| CliError::input(e.to_string()))?;
            if args.check {
                let shape = check_qir_shape(qir.as_str()).map_err(|e| CliError::input(format!("QIR check failed: {e}")))?;
                let gates = shape.gate_calls().count();
                let measures = shape.measure_calls().count();
                if gates != circuit.gates().len() || measures != circuit.num_qubits() {
                    return Err(CliError::input(format!(
                        "QIR has {gates} gate and {measures} measure calls, expected {} and {}",
                        circuit.gates().len(),
                        circuit.num_qubits()
                    )));
                }
            }
            qir.into_string()
        }
    };
    match &args.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

/// Serves until `stop` yields or its sender is dropped.
pub fn serve_until(args: &ServeArgs, stop: Receiver<()>, out: &mut dyn Write) -> Result<(), CliError> {
    let handle = serve(ServerConfig {
        bind: args.bind.clone(),
        capacity: args.capacity,
        latency: LatencyConfig::from_millis(args.latency_ms),
        result_ttl: Duration::from_secs(args.ttl_secs),
    })
    .map_err(|e| CliError::server(e.to_string()))?;
    writeln!(out, "listening on {}", handle.local_addr())?;
    out.flush()?;
    let _ = stop.recv();
    handle.shutdown();
    writeln!(out, "shut down")?;
    Ok(())
}

fn vqe(args: &VqeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let text = read_file(&args.hamiltonian)?;
    let hamiltonian: Hamiltonian = text
        .parse()
        .map_err(|e| CliError::input(format!("{}: {e}", args.hamiltonian.display())))?;
    if args.layers == 0 {
        return Err(CliError::input("--layers must be at least 1"));
    }
    let spec = AnsatzSpec::new(hamiltonian.num_qubits(), args.layers);
    let (registry, device) = registry_for(&args.device, qoffload::circuit::DEFAULT_MAX_QUBITS)?;
    let mut config = VqeConfig::new(spec, device);
    config.initial_theta = match args.theta0.as_slice() {
        [] => vec![0.0; spec.num_parameters()],
        [single] => vec![*single; spec.num_parameters()],
        many => many.to_vec(),
    };
    config.initial_step = args.step;
    config.max_iterations = args.max_iters;
    config.tolerance = args.tol;
    config.shots = args.shots;
    config.seed = args.device.seed;

    let report = optimize(&hamiltonian, &registry, &config)?;
    if args.device.json {
        writeln!(out, "{}", to_json(&report)?)?;
    } else {
        write_vqe_text(&report, out)?;
        writeln!(err, "wall time {:.3} s", report.timing.total_wall_time_s)?;
    }
    Ok(())
}

fn write_vqe_text(report: &VqeReport, out: &mut dyn Write) -> io::Result<()> {
    let o = &report.outcome;
    writeln!(out, "{:>5}  {:>20}", "iter", "best energy")?;
    for (i, e) in o.energy_trace.iter().enumerate() {
        writeln!(out, "{:>5}  {e:>20.12}", i + 1)?;
    }
    writeln!(out, "energy {:.12}", o.best_energy)?;
    writeln!(out, "iterations {} ({} evaluations, converged: {})", o.iterations, o.evaluations, o.converged)?;
    let theta: Vec<String> = o.best_theta.iter().map(|t| format!("{t:.9}")).collect();
    writeln!(out, "theta {}", theta.join(","))
}

/// Runs everything except `serve`, which needs a shutdown signal.
pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Bell(args) => run_job("bell", bell(), args, out, err),
        Command::Run { file, job } => {
            let text = read_file(file)?;
            let circuit = parse_qasm(&text).map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
            run_job(&file.display().to_string(), circuit, job, out, err)
        }
        Command::Transpile(args) => transpile(args, out),
        Command::Vqe(args) => vqe(args, out, err),
        Command::Serve(_) => Err(CliError::server("serve must be started through serve_until")),
    }
}
