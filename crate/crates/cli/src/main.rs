use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fql_core::engine::{ReadMode, Store};
use fql_core::persist::load_file;
use fql_core::surface::{parse_script, print_script, Runner, ScriptError, Stmt};
use fql_core::{Catalog, Error};

#[derive(Parser)]
#[command(name = "fql", version, about = "Query functional databases")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Interactive prompt; one statement per line.
    Repl {
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Run a script.
    Run {
        script: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        /// Evaluate expressions as written, without rewriting.
        #[arg(long)]
        no_opt: bool,
    },
    /// Run a script, printing the rewrite plan of every shown expression
    /// instead of its value.
    Explain {
        script: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Print a script in canonical form.
    Fmt { script: PathBuf },
    /// Run a script with the naive reference evaluator.
    OracleEval {
        script: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn fail(e: &ScriptError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e.error))
}

fn runner(db: Option<&Path>, mode: ReadMode, script: Option<&Path>) -> Result<Runner, ScriptError> {
    let catalog = match db {
        Some(p) => load_file(p).map_err(|error| ScriptError { line: 0, error })?,
        None => Catalog::new(),
    };
    let base = script
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Runner::new(Store::new(catalog).session())
        .with_mode(mode)
        .with_base_dir(base))
}

fn read_script(p: &Path) -> Result<String, ScriptError> {
    std::fs::read_to_string(p).map_err(|e| ScriptError {
        line: 0,
        error: Error::Io(format!("{}: {e}", p.display())),
    })
}

fn run_file(script: &Path, db: Option<&Path>, mode: ReadMode, explain: bool) -> Result<(), ScriptError> {
    let src = read_script(script)?;
    let mut parsed = parse_script(&src).map_err(|error| ScriptError {
        line: match &error {
            Error::Parse { line, .. } => *line,
            _ => 0,
        },
        error,
    })?;
    if explain {
        for s in &mut parsed.stmts {
            if let Stmt::Show(e) | Stmt::Expr(e) = &s.stmt {
                s.stmt = Stmt::Explain(e.clone());
            }
        }
    }
    let mut r = runner(db, mode, Some(script))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    r.run(&parsed, &mut out)
}

fn repl(db: Option<&Path>) -> ExitCode {
    let mut r = match runner(db, ReadMode::Optimized, None) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let interactive = io::stdin().is_terminal();
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            print!("fql> ");
            let _ = io::stdout().flush();
        }
        let Some(line) = lines.next() else { break };
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        };
        let mut out = io::stdout().lock();
        if let Err(e) = r.run_source(&line, &mut out) {
            eprintln!("error: {e}");
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Repl { db } => return repl(db.as_deref()),
        Cmd::Run { script, db, no_opt } => {
            let mode = if *no_opt { ReadMode::Plain } else { ReadMode::Optimized };
            run_file(script, db.as_deref(), mode, false)
        }
        Cmd::Explain { script, db } => run_file(script, db.as_deref(), ReadMode::Optimized, true),
        Cmd::OracleEval { script, db } => run_file(script, db.as_deref(), ReadMode::Oracle, false),
        Cmd::Fmt { script } => read_script(script).and_then(|src| {
            let s = parse_script(&src).map_err(|error| ScriptError { line: 0, error })?;
            print!("{}", print_script(&s));
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
