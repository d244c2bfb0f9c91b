//! Command-line front end of `logitfield`: JSON run configs in, long-format
//! CSV out, with a key-value run summary on every exit path.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::{validate_config, Command};
use run::{execute, Outcome, Report};

pub const THREADS_ENV: &str = "LOGITFIELD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "logitfield", version, about = "Logit dynamics and mean field games on [0, 1]")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Tabulate e_κ, ln_κ, the logit rate and the control cost.
    KappaEval(RunArgs),
    /// Integrate the GPL dynamic over a horizon.
    GplRun(RunArgs),
    /// Integrate the GPL dynamic to its stationary state.
    GplStationary(RunArgs),
    /// Solve the finite-horizon MFG by damped fixed-point iteration.
    MfgRun(RunArgs),
    /// Moment-matching search for the competition model.
    Calibrate(RunArgs),
    /// Least-squares fit of logistic growth to weight samples.
    FitLogistic(RunArgs),
    /// Grid-refinement study against a fine benchmark.
    Converge(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores, or $LOGITFIELD_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the config, print its canonical form and exit.
    #[arg(long)]
    check: bool,
}

impl Sub {
    fn split(&self) -> (Command, &RunArgs) {
        match self {
            Sub::KappaEval(a) => (Command::KappaEval, a),
            Sub::GplRun(a) => (Command::GplRun, a),
            Sub::GplStationary(a) => (Command::GplStationary, a),
            Sub::MfgRun(a) => (Command::MfgRun, a),
            Sub::Calibrate(a) => (Command::Calibrate, a),
            Sub::FitLogistic(a) => (Command::FitLogistic, a),
            Sub::Converge(a) => (Command::Converge, a),
        }
    }
}

struct Summary {
    command: String,
    config: String,
    config_sha256: String,
    threads: String,
    started: Instant,
    report: Report,
    message: Option<String>,
}

impl Summary {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: String::new(),
            config_sha256: "unavailable".to_string(),
            threads: String::new(),
            started: Instant::now(),
            report: Report::default(),
            message: None,
        }
    }

    fn render(&self, outcome: Outcome) -> String {
        let mut lines = vec![
            "[run-summary]".to_string(),
            format!("command={}", self.command),
            format!("config={}", self.config),
            format!("config_sha256={}", self.config_sha256),
            format!("cli_version={}", env!("CARGO_PKG_VERSION")),
            format!("core_version={}", logitfield::VERSION),
            format!("threads={}", self.threads),
            format!("wall_time_s={:.3}", self.started.elapsed().as_secs_f64()),
            format!("outcome={}", outcome.name()),
            format!("exit_code={}", outcome.exit_code()),
        ];
        let files: Vec<_> = self.report.files.iter().map(|p| p.display().to_string()).collect();
        lines.push(format!("outputs={}", files.join(" ")));
        for (k, v) in &self.report.entries {
            lines.push(format!("{k}={v}"));
        }
        if let Some(m) = &self.message {
            lines.push(format!("message={}", m.replace('\n', " ")));
        }
        lines.join("\n") + "\n"
    }

    /// Prints the block and, if `dir` exists, saves it as `run_summary.txt`.
    fn finish(self, outcome: Outcome, dir: Option<&Path>) -> i32 {
        let text = self.render(outcome);
        if outcome == Outcome::Success {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
        if let Some(dir) = dir.filter(|d| d.is_dir()) {
            if let Err(e) = std::fs::write(dir.join("run_summary.txt"), &text) {
                eprintln!("warning: could not write run summary: {e}");
            }
        }
        outcome.exit_code()
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return if n == 0 { Err("--threads must be at least 1".into()) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code == 0 {
                return 0;
            }
            let mut s = Summary::new("");
            s.message = Some(e.kind().to_string());
            return s.finish(Outcome::ConfigError, None);
        }
    };
    let (command, args) = cli.command.split();
    let mut s = Summary::new(command.name());
    s.config = args.config.display().to_string();

    let bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => {
            s.message = Some(format!("cannot read config {}: {e}", args.config.display()));
            eprintln!("error: {}", s.message.as_deref().unwrap_or_default());
            return s.finish(Outcome::ConfigError, None);
        }
    };
    s.config_sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let document = match String::from_utf8(bytes) {
        Ok(d) => d,
        Err(e) => {
            s.message = Some(format!("config is not UTF-8: {e}"));
            return s.finish(Outcome::ConfigError, None);
        }
    };
    let config = match validate_config(command, &document) {
        Ok(c) => c,
        Err(diagnostics) => {
            for d in &diagnostics {
                eprintln!("config error: {d}");
            }
            s.message = Some(format!("{} config diagnostic(s); first: {}", diagnostics.len(), diagnostics[0]));
            return s.finish(Outcome::ConfigError, None);
        }
    };
    if args.check {
        println!("{}", config.canonical());
        return s.finish(Outcome::Success, None);
    }

    match thread_count(args.threads) {
        Ok(Some(n)) => {
            // Only the first call in a process can size the global pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(None) => {}
        Err(m) => {
            eprintln!("error: {m}");
            s.message = Some(m);
            return s.finish(Outcome::ConfigError, None);
        }
    }
    s.threads = rayon::current_num_threads().to_string();

    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let config_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        let mut report = Report::default();
        let r = execute(&config, &out, &config_dir, &mut report);
        (report, r)
    }));
    let outcome = match result {
        Ok((report, r)) => {
            s.report = report;
            match r {
                Ok(()) => Outcome::Success,
                Err(f) => {
                    eprintln!("error: {}", f.message);
                    s.message = Some(f.message);
                    f.outcome
                }
            }
        }
        Err(_) => {
            s.message = Some("internal panic".to_string());
            Outcome::InternalError
        }
    };
    let _ = std::io::stdout().flush();
    s.finish(outcome, Some(&out))
}
