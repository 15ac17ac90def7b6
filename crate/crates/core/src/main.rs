use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mthy::document::NodeName;
use mthy::protocol::{serve_stdio, serve_tcp, Core};
use mthy::replay::{replay, EditScript, ReplayMode, QUIESCENCE_TIMEOUT};
use mthy::report::{diagnostics, human_line, JsonLine};
use mthy::session::Session;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "mthy", version, about = "Continuous checker for Mini-Theory files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a theory file (and its imports) or every theory in a directory.
    Check {
        path: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Print JSON lines instead of diagnostics.
        #[arg(long)]
        json: bool,
    },
    /// Serve the editor protocol over TCP or stdio.
    Serve {
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        port: Option<u16>,
        #[arg(long)]
        stdio: bool,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Directory that node names are relative to.
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
    /// Replay an edit script and print the quiescent trace.
    Replay {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Incremental)]
        mode: Mode,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Incremental,
    Batch,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(2, |n| n.get())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match cli.command {
        Command::Check { path, workers, json } => check(&path, workers, json),
        Command::Serve {
            port,
            stdio,
            workers,
            root,
        } => serve(port, stdio, workers, root),
        Command::Replay { script, mode, workers } => {
            let mode = match mode {
                Mode::Incremental => ReplayMode::Incremental,
                Mode::Batch => ReplayMode::Batch,
            };
            run_replay(&script, mode, workers)
        }
    }
}

fn usage_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("mthy: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn check(path: &Path, workers: usize, json: bool) -> ExitCode {
    let mut session;
    if path.is_dir() {
        session = Session::with_root(workers, path);
        if let Err(e) = session.load_dir(path) {
            return usage_error(format_args!("{}: {e}", path.display()));
        }
    } else {
        let (dir, file) = match (path.parent(), path.file_name().and_then(|f| f.to_str())) {
            (Some(dir), Some(file)) => (dir, file),
            _ => return usage_error(format_args!("{}: not a theory file", path.display())),
        };
        let Ok(node) = NodeName::new(file) else {
            return usage_error(format_args!("{}: not a .mthy file", path.display()));
        };
        session = Session::with_root(workers, dir);
        if let Err(e) = session.load_file(&node) {
            return usage_error(format_args!("{}: {e}", path.display()));
        }
    }
    session.run();
    if !session.wait_quiescent(QUIESCENCE_TIMEOUT) {
        return usage_error("checking did not finish");
    }

    let lines = diagnostics(&session.latest(), &session.outcomes());
    let mut out = io::stdout().lock();
    for line in &lines {
        let text = if json {
            serde_json::to_string(line).expect("report lines serialize")
        } else {
            human_line(line)
        };
        let _ = writeln!(out, "{text}");
    }
    let failed = lines
        .iter()
        .any(|l| matches!(l, JsonLine::Summary { failed, .. } if *failed > 0));
    if failed {
        ExitCode::from(EXIT_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn serve(port: Option<u16>, stdio: bool, workers: usize, root: PathBuf) -> ExitCode {
    if !root.is_dir() {
        return usage_error(format_args!("{}: not a directory", root.display()));
    }
    let core = Core::new(Session::with_root(workers, root));
    let result = if stdio {
        eprintln!("LISTENING stdio");
        serve_stdio(core)
    } else {
        let listener = match TcpListener::bind(("127.0.0.1", port.unwrap_or(0))) {
            Ok(l) => l,
            Err(e) => return usage_error(format_args!("cannot listen on port {}: {e}", port.unwrap_or(0))),
        };
        let bound = match listener.local_addr() {
            Ok(addr) => addr.port(),
            Err(e) => return usage_error(e),
        };
        let mut out = io::stdout().lock();
        let _ = writeln!(out, "LISTENING {bound}");
        let _ = out.flush();
        drop(out);
        serve_tcp(core, listener)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => usage_error(e),
    }
}

fn run_replay(script: &Path, mode: ReplayMode, workers: usize) -> ExitCode {
    let script = match EditScript::load(script) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    match replay(&script, mode, workers) {
        Ok(trace) => {
            print!("{trace}");
            ExitCode::SUCCESS
        }
        Err(e) => usage_error(e),
    }
}
