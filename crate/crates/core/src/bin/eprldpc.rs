use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eprldpc::bitmatrix::BitMatrix;
use eprldpc::channel::{CodeSpec, Mode};
use eprldpc::construction::{optimize_code, ConstructionConfig};
use eprldpc::decoders::{DecoderKind, HybridSchedule};
use eprldpc::graph::{degree_distributions, estimate_p4, girth, TannerGraph};
use eprldpc::sim::sweep::{run_sweep, ChannelParam, ExperimentPlan, StopRule};
use eprldpc::sim::threshold::{estimate_threshold, ThresholdChannel, ThresholdCode, ThresholdConfig};
use eprldpc::sim::{plot, qalist};
use eprldpc::{verify, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "eprldpc", version, about = "Extended binary representations of non-binary LDPC codes")]
struct Cli {
    /// Flat key=value file; every key mirrors a flag of the subcommand and
    /// flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a PEG mother matrix and an extended matrix reaching the girth target.
    Construct(ConstructArgs),
    /// Girth, cycle counts and degree distributions of a code file.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo error rates over a channel grid.
    Sweep(SweepArgs),
    /// Bisection estimate of the decoding threshold.
    Threshold(ThresholdArgs),
    /// Run the built-in structural checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct ConstructArgs {
    /// Starting extension degree (q = 2^p).
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// Target bit-level girth g_s.
    #[arg(long, default_value_t = 6)]
    girth: usize,
    /// Symbols (mother columns).
    #[arg(long, default_value_t = 120)]
    n: usize,
    /// Checks; defaults to n * dv / dc.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 3)]
    dv: usize,
    #[arg(long, default_value_t = 6)]
    dc: usize,
    #[arg(long)]
    psi: Option<usize>,
    #[arg(long)]
    phi: Option<usize>,
    /// Reject codes whose estimated threshold exceeds this Eb/N0 in dB.
    #[arg(long)]
    tb: Option<f64>,
    #[arg(long)]
    wide_blocks: bool,
    #[arg(long, default_value_t = 16)]
    max_p: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Transmission mode recorded in the code file.
    #[arg(long, default_value = "extended")]
    mode: Mode,
    #[arg(long, default_value = "code.qalist")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Longest cycle length searched.
    #[arg(long, default_value_t = 16)]
    cap: usize,
    /// Monte-Carlo trials for the length-4 cycle probability; 0 skips it.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 16)]
    mu: usize,
    #[arg(long, default_value_t = 4)]
    nu: usize,
    #[arg(long, default_value_t = 2)]
    rounds: usize,
    #[arg(long)]
    flip_threshold: Option<usize>,
}

impl ScheduleArgs {
    fn schedule(&self) -> eprldpc::Result<HybridSchedule> {
        HybridSchedule::new(self.mu, self.nu, self.rounds, self.flip_threshold)
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "sepr")]
    decoder: DecoderKind,
    /// bsc, bec, ebn0 or sigma.
    #[arg(long, default_value = "ebn0")]
    channel: ChannelParam,
    /// Comma-separated channel parameters.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    min_errors: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_frames: u64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Mode; defaults to the one recorded in the code file.
    #[arg(long)]
    mode: Option<Mode>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fill the seconds column (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
    /// CSV path; the plot goes next to it with an .svg extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// seb, sepr, ser or bec.
    #[arg(long, default_value = "sepr")]
    decoder: DecoderKind,
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-3)]
    target: f64,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo trials per field size.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Random labels and zeroing patterns per p.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

/// Inserts `--key value` for every config entry not already given as a flag.
fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>, (u8, String)> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = if let Some(v) = argv[pos].strip_prefix("--config=") {
        v.to_string()
    } else {
        argv.get(pos + 1).cloned().ok_or((EXIT_USAGE, "--config needs a path".to_string()))?
    };
    let text = std::fs::read_to_string(&path).map_err(|e| (EXIT_IO, format!("{path}: {e}")))?;
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or((EXIT_USAGE, format!("{path}:{}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if given.contains(&key) {
            continue;
        }
        match v.trim() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            v => {
                extra.push(format!("--{key}"));
                extra.push(v.to_string());
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn read_code(path: &Path) -> eprldpc::Result<CodeSpec> {
    qalist::read(path).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        Error::Io(m) => Error::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write_file(path: &Path, text: &str) -> eprldpc::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn construct(a: &ConstructArgs) -> eprldpc::Result<()> {
    let m = a.m.unwrap_or(a.n * a.dv / a.dc.max(1));
    let mut cfg = ConstructionConfig::regular(a.n, m, a.dv, a.dc, a.p, a.girth, a.seed);
    cfg.psi = a.psi;
    cfg.phi = a.phi;
    cfg.t_b = a.tb;
    cfg.wide_blocks = a.wide_blocks;
    cfg.max_p = a.max_p;
    let built = optimize_code(&cfg)?;
    let spec = CodeSpec::from_construction(&built, a.mode)?;
    qalist::write(&a.out, &spec).map_err(|e| Error::Io(format!("{}: {e}", a.out.display())))?;
    print!("{}", built.report);
    println!("rate: {}/{} = {:.4}", spec.k(), spec.n(), spec.rate());
    println!("written: {}", a.out.display());
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> eprldpc::Result<()> {
    let spec = read_code(&a.input)?;
    let mother = spec.h.mother();
    println!("symbols: {}  checks: {}  p: {}  q: {}", spec.n(), spec.h.m(), spec.p(), spec.h.q());
    println!("rate: {}/{} = {:.4}", spec.k(), spec.n(), spec.rate());
    println!("extended rate: {:.4}", spec.extended_rate());
    println!("active bits (M_s): {}", spec.m_s());
    println!("extended rows: {}", spec.omega_e.matrix().n_rows());
    let mg = girth(&TannerGraph::from_matrix(&mother), a.cap);
    println!("mother girth: {}", mg.girth);
    let bg = girth(&TannerGraph::from_matrix(spec.img.matrix()), a.cap);
    println!("binary image girth: {}", bg.girth);
    let eg = girth(&TannerGraph::from_matrix(spec.omega_e.matrix()), a.cap);
    println!("girth: {}", eg.girth);
    for (len, count) in &eg.short_cycle_counts {
        println!("cycles of length {len}: {count}");
    }
    match degree_distributions(&mother) {
        Ok(d) => println!("mother {}\nmother {}", d.lambda_string(), d.rho_string()),
        Err(e) => println!("mother degree distribution unavailable: {e}"),
    }
    // degree profile over the active columns only
    let mask = spec.omega_e.column_mask();
    let mut index = vec![u32::MAX; mask.len()];
    let mut next = 0;
    for (c, &a) in mask.iter().enumerate() {
        if a {
            index[c] = next;
            next += 1;
        }
    }
    let rows = spec.omega_e.matrix().rows().iter().map(|r| r.iter().map(|&c| index[c as usize]).collect()).collect();
    let sub = BitMatrix::from_rows(next as usize, rows)?;
    match degree_distributions(&sub) {
        Ok(d) => println!("extended {}\nextended {}", d.lambda_string(), d.rho_string()),
        Err(e) => println!("extended degree distribution unavailable: {e}"),
    }
    if a.trials > 0 {
        let est = estimate_p4(spec.h.ctx(), a.trials, a.seed)?;
        println!(
            "p4 estimate: {:.5} +/- {:.5} (1/(q-1) = {:.5})",
            est.estimate,
            est.standard_error,
            1.0 / (spec.h.q() - 1) as f64
        );
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> eprldpc::Result<()> {
    let spec = read_code(&a.input)?;
    let mut plan = ExperimentPlan::new(a.decoder, a.channel, a.grid.clone());
    plan.stop = StopRule {
        min_frame_errors: a.min_errors,
        max_frames: a.max_frames,
    };
    plan.schedule = a.schedule.schedule()?;
    plan.seed = a.seed;
    plan.mode = a.mode.unwrap_or(spec.mode);
    plan.batch = a.batch;
    plan.threads = a.threads;
    plan.timing = a.timing;
    let result = run_sweep(&spec, &plan)?;
    let csv = result.to_csv();
    match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            write_file(&path.with_extension("svg"), &plot::svg(&result))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn threshold(a: &ThresholdArgs) -> eprldpc::Result<()> {
    let spec = read_code(&a.input)?;
    let plain;
    let (code, rate) = match a.decoder {
        DecoderKind::Seb => (ThresholdCode::Binary(spec.img.matrix()), spec.rate()),
        DecoderKind::Sepr | DecoderKind::Bec => (
            ThresholdCode::Extended {
                omega_e: &spec.omega_e,
                gens: &spec.gens,
            },
            spec.extended_rate(),
        ),
        DecoderKind::Ser => {
            plain = spec.with_plain_omega()?;
            (
                ThresholdCode::Extended {
                    omega_e: &plain.omega_e,
                    gens: &plain.gens,
                },
                plain.extended_rate(),
            )
        }
        other => {
            return Err(Error::InvalidArgument(format!("no threshold estimator for decoder {other}")));
        }
    };
    let channel = if a.decoder == DecoderKind::Bec {
        ThresholdChannel::Bec
    } else {
        ThresholdChannel::EbN0 { rate }
    };
    let cfg = ThresholdConfig {
        channel,
        lo: a.lo,
        hi: a.hi,
        tolerance: a.tolerance,
        target_entropy: a.target,
        frames: a.frames,
        iterations: a.iterations,
        schedule: a.schedule.schedule()?,
        seed: a.seed,
    };
    let est = estimate_threshold(code, &cfg)?;
    let mut text = format!(
        "threshold: {:.4} {}\nbracket: [{:.4}, {:.4}]\ntarget entropy: {:.3e}\nparam,entropy\n",
        est.t_b,
        est.unit,
        est.good.min(est.bad),
        est.good.max(est.bad),
        est.target_entropy
    );
    for p in &est.trace {
        text.push_str(&format!("{},{:.6e}\n", p.param, p.entropy));
    }
    match &a.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_verify(a: &VerifyArgs) -> eprldpc::Result<bool> {
    let mut checks = verify::cycle_probability(a.trials, a.seed)?;
    checks.extend(verify::resolvability());
    checks.extend(verify::permutation_property(a.samples, a.seed)?);
    let mut ok = true;
    for c in &checks {
        println!("{}: {} - {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        ok &= c.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let argv = match merge_config(std::env::args().collect()) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Construct(a) => construct(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Threshold(a) => threshold(a),
        Command::Verify(a) => match run_verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VERIFY),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
