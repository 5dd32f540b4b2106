use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mourre::error::exit;
use mourre::manifest::compare;
use mourre::{execute, CliError, CliResult, Command, Overrides, RunConfig, RunManifest, RunOptions, MANIFEST_FILE};

const DEFAULT_OUT: &str = "mourre-out";

#[derive(Parser)]
#[command(name = "mourre", version, about = "Numerical experiments on random Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Build the island set and check its geometry and density.
    Islands(RunArgs),
    /// Eigenpairs in a window with IPR, decay and virial diagnostics.
    Spectrum(RunArgs),
    /// Commutator lower bound on a spectral window above E0.
    Mourre(RunArgs),
    /// Decay of the Cook integrand and its fitted slope.
    Cook(RunArgs),
    /// Gram matrix, selection-rule audit and overlap envelope.
    WaveletCheck(RunArgs),
    /// Integrated density of states and level statistics.
    Ids(RunArgs),
    /// Repeat a run from its manifest and compare checksums.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: mourre-out]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG figures.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct RerunArgs {
    /// Path to a manifest.json or the directory holding it.
    manifest: PathBuf,
    /// Output directory [default: <run dir>/rerun]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    outputs: Vec<&'a str>,
    wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mismatches: Option<&'a [String]>,
}

fn summary<'a>(m: &'a RunManifest, out: &Path, mismatches: Option<&'a [String]>) -> String {
    let s = Summary {
        command: &m.command,
        out: out.display().to_string(),
        outputs: m.outputs.iter().map(|r| r.file.as_str()).collect(),
        wall_clock_seconds: m.wall_clock_seconds,
        mismatches,
    };
    serde_json::to_string(&s).unwrap_or_default()
}

fn run(cmd: Command, args: RunArgs) -> CliResult<i32> {
    let flags = Overrides {
        seed: args.seed,
        out: args.out,
    };
    let cfg = RunConfig::load(&args.config, &flags)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let opts = RunOptions {
        threads: args.threads,
        plot: args.plot,
    };
    let m = execute(cmd, &cfg, &out, opts)?;
    println!("{}", summary(&m, &out, None));
    Ok(exit::SUCCESS)
}

fn rerun(args: RerunArgs) -> CliResult<i32> {
    let path = if args.manifest.is_dir() {
        args.manifest.join(MANIFEST_FILE)
    } else {
        args.manifest
    };
    let original = RunManifest::read(&path)?;
    let cmd = Command::from_name(&original.command)
        .ok_or_else(|| CliError::config("manifest.command", format!("unknown command `{}`", original.command)))?;
    let cfg = RunConfig::resolve(&original.config, std::iter::empty::<(String, String)>(), &Overrides::default())?;
    let out = args.out.unwrap_or_else(|| {
        path.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .join("rerun")
    });
    let opts = RunOptions {
        threads: args.threads,
        plot: false,
    };
    let m = execute(cmd, &cfg, &out, opts)?;
    let mismatches = compare(&original, &m);
    println!("{}", summary(&m, &out, Some(&mismatches)));
    Ok(if mismatches.is_empty() { exit::SUCCESS } else { exit::FAILURE })
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.report()).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config {
                field: None,
                message: e.to_string().trim_end().to_string(),
            };
            return fail(&err);
        }
    };
    let result = match cli.command {
        Sub::Islands(a) => run(Command::Islands, a),
        Sub::Spectrum(a) => run(Command::Spectrum, a),
        Sub::Mourre(a) => run(Command::Mourre, a),
        Sub::Cook(a) => run(Command::Cook, a),
        Sub::WaveletCheck(a) => run(Command::WaveletCheck, a),
        Sub::Ids(a) => run(Command::Ids, a),
        Sub::Rerun(a) => rerun(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => fail(&e),
    }
}
