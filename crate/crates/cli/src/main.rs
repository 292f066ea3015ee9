//! `pas`: build synthetic cases, run PAS/AS screening, resume and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pas_core::cases::{build_case, case_catalog, catalog_case, BuiltCase, CaseSpec};
use pas_core::engine::{
    ExternalHandshake, HfEvaluator, Method, PasConfig, RunState, RunStatus, Runner,
};
use pas_core::metrics::{combined_csv, history_csv, trajectory_csv, MethodReport};
use pas_core::par::{init_threads, ExecMode};
use pas_core::PasError;
use serde_json::json;

const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_HF_TIMEOUT: u8 = 4;
const EXIT_PAUSED: u8 = 5;

#[derive(Parser)]
#[command(
    name = "pas",
    version,
    about = "Probabilistic adaptive screening for extreme loads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic validation cases.
    Case {
        #[command(subcommand)]
        action: CaseAction,
    },
    /// Run PAS and/or AS on a case.
    Run(RunArgs),
    /// Merge method reports of one or more run directories into one table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CaseAction {
    /// List the built-in catalog.
    List,
    /// Materialise a case: definition, matched peaks and the HF oracle.
    Build {
        /// Catalog name or path to a case definition file.
        case: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "PAS_OUT_DIR", default_value = "pas_out")]
        out: PathBuf,
    },
    /// Paired LF/HF peaks as CSV.
    Scatter {
        case: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Pas,
    As,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HfMode {
    MatchedDataset,
    ExternalHandshake,
}

#[derive(Args)]
struct RunArgs {
    /// Catalog name or path to a case definition file. Defaults to the
    /// definition stored next to a resumed checkpoint.
    #[arg(long)]
    case: Option<String>,
    #[arg(long, value_enum, default_value = "pas")]
    method: MethodArg,
    /// Seed for the case realisation and the bootstrap streams.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    /// Bootstrap draws per iteration.
    #[arg(long)]
    z: Option<usize>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Checkpoint file of an interrupted run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, env = "PAS_OUT_DIR", default_value = "pas_out")]
    out: PathBuf,
    #[arg(long = "hf-mode", value_enum, default_value = "matched-dataset")]
    hf_mode: HfMode,
    /// Exchange directory for the external handshake [default: <out>/hf].
    #[arg(long = "hf-dir")]
    hf_dir: Option<PathBuf>,
    /// Seconds to wait for one HF response.
    #[arg(long = "hf-timeout", default_value_t = 3600.0)]
    hf_timeout: f64,
    /// Pause after this iteration, leaving a resumable checkpoint.
    #[arg(long = "stop-after")]
    stop_after: Option<usize>,
}

enum Failure {
    Usage(String),
    Run(PasError),
}

impl From<PasError> for Failure {
    fn from(e: PasError) -> Self {
        match e {
            PasError::Config(_) | PasError::Parse(_) => Failure::Usage(e.to_string()),
            e => Failure::Run(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Case { action } => cmd_case(action).map(|_| 0),
        Command::Run(args) => cmd_run(args),
        Command::Report { dirs, out } => cmd_report(&dirs, out.as_deref()).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(PasError::HfTimeout { event_id })) => {
            eprintln!(
                "error: no HF response for event {event_id}; rerun with --resume to continue"
            );
            ExitCode::from(EXIT_HF_TIMEOUT)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_spec(case: &str, seed: Option<u64>) -> CliResult<CaseSpec> {
    let path = Path::new(case);
    let spec = if path.is_file() {
        CaseSpec::from_config_text(&fs::read_to_string(path)?)?
    } else {
        catalog_case(case)?
    };
    Ok(match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn build(spec: &CaseSpec, exec: ExecMode) -> CliResult<BuiltCase> {
    eprintln!("building case {} (seed {})", spec.name, spec.rng_seed);
    Ok(build_case(spec, exec)?)
}

fn write_case_files(case: &BuiltCase, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("case.cfg"), case.spec.to_config_text())?;
    fs::write(dir.join("peaks.csv"), case.peaks.to_csv())?;
    fs::write(dir.join("oracle.csv"), case.oracle.to_csv())?;
    let summary = json!({
        "case": case.spec.name,
        "seed": case.spec.rng_seed,
        "tpe": case.exposure.tpe,
        "n_w": case.exposure.n_w,
        "pexp": case.exposure.pexp,
        "n_peaks": case.peaks.len(),
        "oracle_mpm": case.oracle_mpm,
    });
    fs::write(
        dir.join("oracle.json"),
        serde_json::to_string_pretty(&summary).map_err(PasError::from)?,
    )?;
    Ok(())
}

fn cmd_case(action: CaseAction) -> CliResult<()> {
    match action {
        CaseAction::List => {
            for spec in case_catalog() {
                let e = spec.exposure()?;
                println!(
                    "{}\t{}\tTexp={} s\tN={}\tPexp={:.3e}",
                    spec.name,
                    spec.hf_map.name(),
                    spec.texp,
                    spec.n_seeds,
                    e.pexp
                );
            }
        }
        CaseAction::Build { case, seed, out } => {
            let spec = load_spec(&case, seed)?;
            let built = build(&spec, ExecMode::Sequential)?;
            write_case_files(&built, &out)?;
            eprintln!(
                "{} peaks, n_w={}, oracle MPM {:.4} written to {}",
                built.peaks.len(),
                built.exposure.n_w,
                built.oracle_mpm,
                out.display()
            );
        }
        CaseAction::Scatter { case, seed, out } => {
            let spec = load_spec(&case, seed)?;
            let built = build(&spec, ExecMode::Sequential)?;
            let csv = built.peaks.scatter_csv();
            match out {
                Some(path) => fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn method_dir(out: &Path, method: Method) -> PathBuf {
    out.join(method.to_string().to_lowercase())
}

fn run_config(args: &RunArgs, spec: &CaseSpec) -> PasConfig {
    let base = PasConfig::default();
    PasConfig {
        eps1: args.eps1.unwrap_or(spec.eps1),
        eps2: args.eps2.unwrap_or(spec.eps2),
        z: args.z.unwrap_or(base.z),
        max_iterations: args.max_iter.unwrap_or(base.max_iterations),
        rng_seed: spec.rng_seed,
        ..base
    }
}

fn cmd_run(args: RunArgs) -> CliResult<u8> {
    if args.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    init_threads(args.threads);
    let exec = if args.threads > 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    };

    let resumed =
        match &args.resume {
            Some(p) => Some(RunState::load(p).map_err(|e| {
                Failure::Usage(format!("cannot read checkpoint {}: {e}", p.display()))
            })?),
            None => None,
        };
    let (out, spec) = match (&args.resume, &args.case) {
        (Some(ckpt), case) => {
            let method_dir = ckpt.parent().unwrap_or(Path::new("."));
            let out = method_dir.parent().unwrap_or(Path::new(".")).to_path_buf();
            let spec = match case {
                Some(c) => load_spec(c, args.seed)?,
                None => load_spec(&out.join("case.cfg").to_string_lossy(), args.seed)?,
            };
            (out, spec)
        }
        (None, Some(c)) => (args.out.clone(), load_spec(c, args.seed)?),
        (None, None) => return Err(Failure::Usage("--case or --resume is required".into())),
    };

    let methods: Vec<Method> = match (&resumed, args.method) {
        (Some(state), _) => vec![state.method],
        (None, MethodArg::Pas) => vec![Method::Pas],
        (None, MethodArg::As) => vec![Method::As],
        (None, MethodArg::Both) => vec![Method::Pas, Method::As],
    };

    let case = build(&spec, exec)?;
    write_case_files(&case, &out)?;
    let pool = case.lf_pool()?;
    let config = match &resumed {
        Some(state) => state.config,
        None => run_config(&args, &spec),
    };

    let mut codes = Vec::new();
    let mut resumed = resumed;
    for method in methods {
        let runner = Runner::new(&pool, case.exposure.pexp, method, config)?.with_exec(exec);
        let state = match resumed.take() {
            Some(s) => s,
            None => runner.initial_state()?,
        };
        let dir = method_dir(&out, method);
        fs::create_dir_all(&dir)?;
        let ckpt = dir.join("checkpoint.json");
        let mut save = |s: &RunState| s.save(&ckpt);

        let mut matched;
        let mut handshake;
        let hf: &mut dyn HfEvaluator = match args.hf_mode {
            HfMode::MatchedDataset => {
                matched = case.hf_dataset()?;
                &mut matched
            }
            HfMode::ExternalHandshake => {
                let hf_dir = args.hf_dir.clone().unwrap_or_else(|| out.join("hf"));
                handshake = ExternalHandshake::new(
                    hf_dir,
                    Duration::from_secs_f64(args.hf_timeout.max(0.0)),
                );
                let case_ref = &case;
                handshake.window = Some(Box::new(move |e| case_ref.window(e).unwrap_or_default()));
                &mut handshake
            }
        };

        eprintln!(
            "running {method} on {} (n_w={}, Pexp={:.3e})",
            spec.name, case.exposure.n_w, case.exposure.pexp
        );
        let outcome = runner.run(state, hf, &mut save, args.stop_after)?;
        outcome.state.save(&ckpt)?;
        fs::write(dir.join("history.csv"), history_csv(&outcome.state))?;
        fs::write(dir.join("trajectory.csv"), trajectory_csv(&outcome.state))?;

        if outcome.status == RunStatus::Paused {
            eprintln!("{method} paused; resume with --resume {}", ckpt.display());
            codes.push(EXIT_PAUSED);
            continue;
        }
        let report = MethodReport::from_state(
            &spec.name,
            &outcome.state,
            &case.oracle,
            case.exposure.pexp,
            case.oracle_mpm,
        )?;
        fs::write(dir.join("report.json"), report.to_json()?)?;
        eprintln!(
            "{method}: {:?} after {} HF samples, MPM {:.4} (oracle {:.4}), M1={:.4} M2={:+.4} M3={:+.4}",
            report.status, report.n_c, report.mpm_pred, report.mpm_true, report.m1, report.m2, report.m3
        );
        codes.push(if report.status == RunStatus::Converged {
            0
        } else {
            EXIT_NOT_CONVERGED
        });
    }
    Ok(codes.into_iter().max().unwrap_or(0))
}

fn find_reports(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let direct = dir.join("report.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let found: Vec<PathBuf> = ["pas", "as"]
        .iter()
        .map(|m| dir.join(m).join("report.json"))
        .filter(|p| p.is_file())
        .collect();
    if found.is_empty() {
        return Err(Failure::Usage(format!(
            "no report.json under {}",
            dir.display()
        )));
    }
    Ok(found)
}

fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut reports = Vec::new();
    for d in dirs {
        for path in find_reports(d)? {
            reports.push(MethodReport::from_json(&fs::read_to_string(&path)?)?);
        }
    }
    let csv = combined_csv(&reports);
    match out {
        Some(path) => {
            fs::write(path, &csv)?;
            let rows: Vec<serde_json::Value> = reports
                .iter()
                .map(|r| {
                    let mut v = serde_json::to_value(r).unwrap_or_default();
                    v["hf_duration_s"] = json!(r.hf_duration());
                    v
                })
                .collect();
            fs::write(
                path.with_extension("json"),
                serde_json::to_string_pretty(&rows).map_err(PasError::from)?,
            )?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
