//! Command-line front end: load model files, run queries, print answers.

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use zeno_ec::corpus::{format_report, run_manifest_file};
use zeno_ec::rational::parse_rat;
use zeno_ec::runner::{execute, RunFlags, RunSpec};

#[derive(Parser)]
#[command(
    name = "zeno-ec",
    version,
    about = "Goal-directed Event Calculus reasoner over dense rational time"
)]
struct Cli {
    /// Model files, merged in order.
    files: Vec<PathBuf>,

    /// Run this query instead of the files' inline `?- ...` queries.
    #[arg(long, value_name = "QUERY")]
    query: Option<String>,

    /// Halt derivations that descend through a Zeno chain of event times.
    #[arg(long = "zeno_halt", alias = "zeno-halt")]
    zeno_halt: bool,

    /// Materialize declared `incr_event` occurrences up to the horizon
    /// before answering.
    #[arg(long)]
    incremental: bool,

    /// Horizon for incremental mode, a decimal or `p/q` rational.
    /// Overrides a `!incr_max_time(R)` directive in the query.
    #[arg(long = "incr-max-time", value_name = "R")]
    incr_max_time: Option<String>,

    /// Derivation depth limit (goal expansions along one branch).
    #[arg(long, value_name = "N", default_value_t = 2000)]
    depth: u64,

    /// Stop after N answers.
    #[arg(long, value_name = "N")]
    answers: Option<usize>,

    /// Do not auto-generate effect-candidate (`can_*`) facts.
    #[arg(long = "no-ec")]
    no_ec: bool,

    /// Output format for query results.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Run a golden-corpus manifest and report one line per row.
    #[arg(long, value_name = "MANIFEST")]
    corpus: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, PartialEq)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    if let Some(manifest) = &cli.corpus {
        let (results, all_pass) = run_manifest_file(manifest)?;
        print!("{}", format_report(&results));
        return Ok(if all_pass { 0 } else { 1 });
    }

    let incr_max_time = match &cli.incr_max_time {
        Some(s) => Some(parse_rat(s).ok_or_else(|| format!("bad --incr-max-time value: {s}"))?),
        None => None,
    };
    let mut sources = Vec::new();
    for path in &cli.files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        sources.push((path.display().to_string(), text));
    }
    let spec = RunSpec {
        sources,
        query_text: cli.query.clone(),
        flags: RunFlags {
            zeno_halt: cli.zeno_halt,
            incremental: cli.incremental,
            incr_max_time,
            depth: cli.depth,
            answers: cli.answers,
            no_ec: cli.no_ec,
        },
    };
    let runs = execute(&spec).map_err(|e| e.to_string())?;
    if runs.is_empty() {
        return Err("no queries: pass --query or include ?- queries in a file".to_string());
    }

    if cli.format == Format::Json {
        let docs: Vec<serde_json::Value> = runs.iter().map(|r| r.json_value()).collect();
        let doc = if docs.len() == 1 {
            docs.into_iter().next().unwrap()
        } else {
            serde_json::Value::Array(docs)
        };
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        let show_headers = runs.len() > 1;
        for run in &runs {
            if show_headers {
                println!("% {}", run.display);
            }
            let block = run.text_block();
            // Result lines (answers, Zeno warnings, depth exhaustion) go to
            // stdout; usage-level failures go to stderr.
            if matches!(run.exit_code(), 3 | 5) {
                eprint!("{block}");
            } else {
                print!("{block}");
            }
        }
    }
    let last = runs.last().unwrap().exit_code();
    Ok(u8::try_from(last).unwrap_or(3))
}
