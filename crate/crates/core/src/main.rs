use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ll1_unmix::config::{InitKind, ModeKind, RunConfigFile, Theta};
use ll1_unmix::init::initialize;
use ll1_unmix::io::{
    read_abundances, read_cube, read_endmembers, write_abundances, write_atomic, write_cube, write_endmembers,
    write_trace_csv,
};
use ll1_unmix::model::{check_identifiability, ModelDims};
use ll1_unmix::rng::RNG_ALGORITHM;
use ll1_unmix::{datagen, metrics, solver, Error};

/// Overrides the default output directory (`ll1-out`).
const OUT_DIR_ENV: &str = "LL1_OUT_DIR";

const ENDMEMBERS_FILE: &str = "endmembers.ll1f";
const ABUNDANCES_FILE: &str = "abundances.ll1f";
const CLEAN_FILE: &str = "clean.ll1c";
const NOISY_FILE: &str = "noisy.ll1c";
const MANIFEST_FILE: &str = "manifest.json";
const TRACE_FILE: &str = "trace.csv";

#[derive(Parser)]
#[command(name = "ll1-unmix", version, about = "LL1 block-term hyperspectral unmixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cube with known factors.
    Synth(SynthArgs),
    /// Factor a cube into endmembers and abundance maps.
    Decompose(DecomposeArgs),
    /// Compare estimated factors against ground truth.
    Eval(EvalArgs),
    /// Check the identifiability conditions for a problem size.
    Check(CheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    i: usize,
    #[arg(long)]
    j: usize,
    #[arg(long)]
    k: usize,
    /// Rank of every abundance map.
    #[arg(long)]
    l: usize,
    /// Number of endmembers.
    #[arg(long)]
    r: usize,
    /// Target SNR in dB. Without it only the clean cube is written.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory [default: $LL1_OUT_DIR or ./ll1-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Cube file (LL1C).
    #[arg(long)]
    input: PathBuf,
    /// JSON run configuration. Inline flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of endmembers.
    #[arg(long)]
    r: usize,
    /// `lr` (rank bound, default) or `nn` (nuclear-norm ball).
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModeKind>,
    /// Rank bound for `lr` [default: largest identifiable rank].
    #[arg(long)]
    l: Option<usize>,
    /// Nuclear-norm radius for `nn` [default: 1.5 max(I, J, K)].
    #[arg(long)]
    l_tilde: Option<f64>,
    /// TV weight, one value or a comma-separated list per endmember [default: 1e-4].
    #[arg(long, value_parser = parse_theta)]
    theta: Option<Theta>,
    /// TV exponent [default: 0.5].
    #[arg(long)]
    q: Option<f64>,
    /// TV smoothing [default: 1e-3].
    #[arg(long)]
    eps: Option<f64>,
    /// `spa` (default) or `random`.
    #[arg(long, value_parser = parse_init)]
    init: Option<InitKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 1200]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective change that stops the run [default: 1e-5].
    #[arg(long)]
    obj_tol: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    ap_max_iters: Option<usize>,
    /// [default: 1e-3]
    #[arg(long)]
    ap_tol: Option<f64>,
    /// Disable extrapolation.
    #[arg(long)]
    no_extrapolation: bool,
    /// Start from these endmembers instead of `--init`.
    #[arg(long, requires = "init_s")]
    init_c: Option<PathBuf>,
    /// Start from these abundances (used as given).
    #[arg(long, requires = "init_c")]
    init_s: Option<PathBuf>,
    /// Trace CSV path [default: <out>/trace.csv]
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output directory [default: $LL1_OUT_DIR or ./ll1-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Sum-to-one tolerance.
    #[arg(long, default_value_t = 1e-5)]
    p: f64,
    /// Rank used for the low-rank energy [default: `l` from the truth manifest].
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    i: usize,
    #[arg(long)]
    j: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    l: usize,
    #[arg(long)]
    r: usize,
}

fn parse_mode(s: &str) -> Result<ModeKind, String> {
    match s {
        "lr" => Ok(ModeKind::Lr),
        "nn" => Ok(ModeKind::Nn),
        _ => Err(format!("expected lr or nn, got {s}")),
    }
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    match s {
        "spa" => Ok(InitKind::Spa),
        "random" => Ok(InitKind::Random),
        _ => Err(format!("expected spa or random, got {s}")),
    }
}

fn parse_theta(s: &str) -> Result<Theta, String> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals.map_err(|e| e.to_string())? {
        v if v.len() == 1 => Ok(Theta::Scalar(v[0])),
        v => Ok(Theta::PerEndmember(v)),
    }
}

/// Process outcome: an exit code plus an optional message for stderr.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Aborted { .. } | Error::Numerical(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ll1-out"))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure { code: 2, message: format!("{}: {e}", dir.display()) })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("json values always serialize");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn synth(a: SynthArgs) -> CmdResult {
    let dir = out_dir(a.out);
    ensure_dir(&dir)?;
    let data = datagen::generate_synthetic(a.i, a.j, a.k, a.l, a.r, a.seed)?;
    write_endmembers(&dir.join(ENDMEMBERS_FILE), &data.endmembers)?;
    write_abundances(&dir.join(ABUNDANCES_FILE), &data.abundances)?;
    write_cube(&dir.join(CLEAN_FILE), &data.cube)?;
    let mut realized = None;
    if let Some(snr) = a.snr {
        let noisy = datagen::add_noise(&data.cube, snr, a.seed)?;
        realized = Some(datagen::realized_snr_db(&data.cube, &noisy)?);
        write_cube(&dir.join(NOISY_FILE), &noisy)?;
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &json!({
            "command": "synth",
            "i": a.i, "j": a.j, "k": a.k, "l": a.l, "r": a.r,
            "snr": a.snr,
            "realized_snr": realized,
            "seed": a.seed,
            "rng_algorithm": RNG_ALGORITHM,
            "endmembers": ENDMEMBERS_FILE,
            "abundances": ABUNDANCES_FILE,
            "clean": CLEAN_FILE,
            "noisy": a.snr.map(|_| NOISY_FILE),
        }),
    )?;
    Ok(0)
}

fn decompose(a: DecomposeArgs) -> CmdResult {
    let cube = read_cube(&a.input)?;
    let file_cfg = match &a.config {
        Some(p) => RunConfigFile::from_json(&fs::read_to_string(p).map_err(Error::from)?)?,
        None => RunConfigFile::default(),
    };
    let inline = RunConfigFile {
        mode: a.mode,
        l: a.l,
        l_tilde: a.l_tilde,
        theta: a.theta,
        q: a.q,
        eps: a.eps,
        init: a.init,
        seed: a.seed,
        max_iters: a.max_iters,
        obj_tol: a.obj_tol,
        ap_max_iters: a.ap_max_iters,
        ap_tol: a.ap_tol,
        extrapolation: a.no_extrapolation.then_some(false),
    };
    let run_cfg = file_cfg.merged(&inline);
    let (cfg, init_spec) = run_cfg.resolve(cube.rows(), cube.cols(), cube.bands(), a.r)?;

    let (c0, s0) = match (&a.init_c, &a.init_s) {
        (Some(pc), Some(ps)) => {
            let c0 = read_endmembers(pc)?;
            let s0 = read_abundances(ps)?;
            (c0, s0)
        }
        _ => initialize(&cube, a.r, init_spec, cfg.mode, cfg.ap)?,
    };

    let dir = out_dir(a.out);
    ensure_dir(&dir)?;
    let trace_path = a.trace.unwrap_or_else(|| dir.join(TRACE_FILE));
    let mode_json = match cfg.mode {
        ll1_unmix::FeasibilityMode::ExactRank(l) => json!({"kind": "lr", "l": l}),
        ll1_unmix::FeasibilityMode::NuclearBall(t) => json!({"kind": "nn", "l_tilde": t}),
    };
    let base = json!({
        "command": "decompose",
        "input": a.input,
        "r": a.r,
        "mode": mode_json,
        "theta": cfg.tv.theta,
        "q": cfg.tv.q,
        "eps": cfg.tv.eps,
        "seed": cfg.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "max_iters": cfg.max_iters,
        "obj_tol": cfg.obj_tol,
        "ap_max_iters": cfg.ap.max_iters,
        "ap_tol": cfg.ap.tol,
        "extrapolation": cfg.extrapolation,
    });

    match solver::run(&cube, &c0, &s0, &cfg) {
        Ok(out) => {
            write_endmembers(&dir.join(ENDMEMBERS_FILE), &out.endmembers)?;
            write_abundances(&dir.join(ABUNDANCES_FILE), &out.abundances)?;
            write_trace_csv(&trace_path, &out.trace)?;
            let mut m = base;
            m["final_objective"] = json!(out.final_objective());
            m["iterations"] = json!(out.iterations());
            m["termination"] = json!(out.termination.as_str());
            m["trace"] = json!(trace_path);
            write_json(&dir.join(MANIFEST_FILE), &m)?;
            Ok(0)
        }
        Err(Error::Aborted { iteration, reason, trace }) => {
            write_trace_csv(&trace_path, &trace)?;
            let mut m = base;
            m["iterations"] = json!(trace.records.len());
            m["termination"] = json!("aborted");
            m["abort_iteration"] = json!(iteration);
            m["abort_reason"] = json!(reason);
            m["trace"] = json!(trace_path);
            write_json(&dir.join(MANIFEST_FILE), &m)?;
            Err(Failure { code: 3, message: format!("numerical abort at iteration {iteration}: {reason}") })
        }
        Err(e) => Err(e.into()),
    }
}

fn manifest_l(dir: &Path) -> Option<usize> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("l").and_then(|l| l.as_u64()).map(|l| l as usize)
}

fn eval(a: EvalArgs) -> CmdResult {
    let c_est = read_endmembers(&a.est.join(ENDMEMBERS_FILE))?;
    let s_est = read_abundances(&a.est.join(ABUNDANCES_FILE))?;
    let c_true = read_endmembers(&a.truth.join(ENDMEMBERS_FILE))?;
    let s_true = read_abundances(&a.truth.join(ABUNDANCES_FILE))?;
    let mse_c = metrics::mse_factor(c_est.matrix(), c_true.matrix())?;
    let mse_s = metrics::mse_abundances(&s_est, &s_true)?;
    let sto = metrics::sto_feasibility(&s_est, a.p)?;
    let lr = match a.l.or_else(|| manifest_l(&a.truth)) {
        Some(l) => Some(metrics::lr_feasibility(&s_est, l)?),
        None => None,
    };
    let report = json!({
        "mse_c": mse_c.value,
        "mse_s": mse_s.value,
        "permutation": mse_c.matching,
        "permutation_s": mse_s.matching,
        "sto_percent": sto,
        "p": a.p,
        "lr_energy_percent": lr,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json values always serialize"));
    Ok(0)
}

fn check(a: CheckArgs) -> CmdResult {
    let dims = ModelDims::new(a.i, a.j, a.k, a.l, a.r)?;
    let rep = check_identifiability(&dims)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "satisfied": rep.satisfied,
            "size_margin": rep.size_margin,
            "kruskal_margin": rep.kruskal_margin,
        }))
        .expect("json values always serialize")
    );
    Ok(if rep.satisfied { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Decompose(a) => decompose(a),
        Command::Eval(a) => eval(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
