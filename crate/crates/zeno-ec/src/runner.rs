//! Shared run pipeline: sources + optional query text + flags in, rendered
//! outcomes with exit codes out. The CLI binary, the corpus runner and the
//! integration tests all go through this module so they agree byte-for-byte
//! on what a query prints and which exit code it produces.

use crate::engine::{run_query, Answer, EngineConfig, Halt, QueryVerdict};
use crate::incremental::{resolve_max_time, run_incremental, IncrError};
use crate::output::render_answer_lines;
use crate::program::ModelProgram;
use crate::rational::Rat;
use crate::syntax::{display_query, Query};
use crate::zeno::format_interval;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct RunFlags {
    pub zeno_halt: bool,
    pub incremental: bool,
    pub incr_max_time: Option<Rat>,
    pub depth: u64,
    pub answers: Option<usize>,
    /// Disable automatic generation of effect-candidate facts.
    pub no_ec: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        RunFlags {
            zeno_halt: false,
            incremental: false,
            incr_max_time: None,
            depth: EngineConfig::default().depth_limit,
            answers: None,
            no_ec: false,
        }
    }
}

pub struct RunSpec {
    /// `(label, text)` pairs; labels appear in parse errors.
    pub sources: Vec<(String, String)>,
    /// When set, run exactly this query; otherwise run the sources' inline
    /// queries in order.
    pub query_text: Option<String>,
    pub flags: RunFlags,
}

/// Errors that abort the whole run before any query executes (exit 3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunError {
    Parse { label: String, message: String },
    Validation(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Parse { label, message } => write!(f, "{label}: {message}"),
            RunError::Validation(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug)]
pub enum QueryOutcome {
    Answers {
        lines: Vec<String>,
        raw: Vec<Answer>,
        truncated: bool,
    },
    Halted(Halt),
    IncrFailed(IncrError),
}

#[derive(Debug)]
pub struct QueryRun {
    pub display: String,
    pub outcome: QueryOutcome,
    /// Program the query actually ran against: the loaded model, extended
    /// with materialized `incr_happens/2` facts when incremental.
    pub kb: Arc<ModelProgram>,
    pub nodes: u64,
    pub time_ms: u128,
}

impl QueryRun {
    pub fn exit_code(&self) -> i32 {
        match &self.outcome {
            QueryOutcome::Answers { lines, .. } => {
                if lines.is_empty() {
                    1
                } else {
                    0
                }
            }
            QueryOutcome::Halted(h) | QueryOutcome::IncrFailed(IncrError::Halted(h)) => match h {
                Halt::Zeno(_) => 2,
                Halt::DepthExhausted { .. } => 4,
                Halt::InvalidDuration(_) | Halt::TypeError(_) => 3,
            },
            QueryOutcome::IncrFailed(_) => 5,
        }
    }

    /// The printable result: answer lines, `no answers.`, or the halt /
    /// driver message. The caller routes it to stdout or stderr based on
    /// the exit code.
    pub fn text_block(&self) -> String {
        match &self.outcome {
            QueryOutcome::Answers { lines, .. } => {
                if lines.is_empty() {
                    "no answers.\n".to_string()
                } else {
                    let mut out = lines.join("\n");
                    out.push('\n');
                    out
                }
            }
            QueryOutcome::Halted(h) => format!("{h}\n"),
            QueryOutcome::IncrFailed(e) => format!("{e}\n"),
        }
    }

    pub fn json_value(&self) -> serde_json::Value {
        let (verdict, answers, zeno, truncated, error) = match &self.outcome {
            QueryOutcome::Answers {
                lines, truncated, ..
            } => (
                if lines.is_empty() {
                    "no_answers"
                } else {
                    "answers"
                },
                lines.clone(),
                None,
                *truncated,
                None,
            ),
            QueryOutcome::Halted(h) | QueryOutcome::IncrFailed(IncrError::Halted(h)) => {
                let verdict = match h {
                    Halt::Zeno(_) => "zeno_halt",
                    Halt::DepthExhausted { .. } => "depth_exhausted",
                    Halt::InvalidDuration(_) => "invalid_duration",
                    Halt::TypeError(_) => "type_error",
                };
                let zeno = match h {
                    Halt::Zeno(r) => Some(serde_json::json!({
                        "event": r.event_text(),
                        "interval": format_interval(&r.interval),
                    })),
                    _ => None,
                };
                (verdict, Vec::new(), zeno, false, Some(h.to_string()))
            }
            QueryOutcome::IncrFailed(e) => {
                ("incremental_error", Vec::new(), None, false, Some(e.to_string()))
            }
        };
        serde_json::json!({
            "query": self.display,
            "verdict": verdict,
            "answers": answers,
            "zeno_report": zeno,
            "truncated": truncated,
            "error": error,
            "stats": { "nodes": self.nodes, "time_ms": self.time_ms },
        })
    }
}

/// Parse and validate the sources into a program plus its inline queries.
pub fn load_program(spec: &RunSpec) -> Result<(ModelProgram, Vec<Query>), RunError> {
    let mut rules = Vec::new();
    let mut queries = Vec::new();
    for (label, text) in &spec.sources {
        let (mut r, mut q) = crate::parser::parse_program(text).map_err(|e| RunError::Parse {
            label: label.clone(),
            message: e.to_string(),
        })?;
        rules.append(&mut r);
        queries.append(&mut q);
    }
    let program = ModelProgram::new(rules, Vec::new(), !spec.flags.no_ec)
        .map_err(|e| RunError::Validation(e.to_string()))?;
    Ok((program, queries))
}

/// Run every selected query and collect its outcome. Query-level failures
/// (halts, incremental errors) are per-run outcomes, not `Err`s.
pub fn execute(spec: &RunSpec) -> Result<Vec<QueryRun>, RunError> {
    let (program, inline) = load_program(spec)?;
    let program = Arc::new(program);
    let queries: Vec<Query> = match &spec.query_text {
        Some(text) => {
            vec![
                crate::parser::parse_query_text(text).map_err(|e| RunError::Parse {
                    label: "<query>".to_string(),
                    message: e.to_string(),
                })?,
            ]
        }
        None => inline,
    };
    Ok(queries
        .iter()
        .map(|q| run_one(&program, q, &spec.flags))
        .collect())
}

fn run_one(program: &Arc<ModelProgram>, query: &Query, flags: &RunFlags) -> QueryRun {
    let display = display_query(query);
    let config = EngineConfig {
        depth_limit: flags.depth,
        answer_limit: flags.answers,
        zeno_halt: flags.zeno_halt,
        trace: None,
    };
    let started = Instant::now();
    // A query is incremental if asked for globally or via its own directive.
    let incremental = flags.incremental || query.incr_max_time().is_some();
    let (kb, query) = if incremental {
        let horizon = match resolve_max_time(query, flags.incr_max_time.as_ref()) {
            Ok(h) => h,
            Err(e) => return finish(program.clone(), display, QueryOutcome::IncrFailed(e), 0, started),
        };
        match run_incremental(program, &horizon, &config) {
            Ok(out) => {
                let mut q = query.clone();
                q.directives.clear();
                (Arc::new(out.kb), q)
            }
            Err(e) => {
                return finish(program.clone(), display, QueryOutcome::IncrFailed(e), 0, started)
            }
        }
    } else {
        (program.clone(), query.clone())
    };
    let out = run_query(&kb, &query, config);
    let outcome = match out.verdict {
        QueryVerdict::Answers(raw) => QueryOutcome::Answers {
            lines: render_answer_lines(&raw),
            raw,
            truncated: out.truncated,
        },
        QueryVerdict::Halted(h) => QueryOutcome::Halted(h),
    };
    finish(kb, display, outcome, out.nodes, started)
}

fn finish(
    kb: Arc<ModelProgram>,
    display: String,
    outcome: QueryOutcome,
    nodes: u64,
    started: Instant,
) -> QueryRun {
    QueryRun {
        display,
        outcome,
        kb,
        nodes,
        time_ms: started.elapsed().as_millis(),
    }
}

/// Parse command-style flag tokens (the corpus manifest's `flags` column).
pub fn parse_flag_tokens(tokens: &[&str]) -> Result<RunFlags, String> {
    let mut flags = RunFlags::default();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let mut value_for = |name: &str| {
            it.next()
                .map(|s| s.to_string())
                .ok_or_else(|| format!("{name} needs a value"))
        };
        match *tok {
            "--zeno_halt" | "--zeno-halt" => flags.zeno_halt = true,
            "--incremental" => flags.incremental = true,
            "--no-ec" => flags.no_ec = true,
            "--incr-max-time" => {
                let v = value_for("--incr-max-time")?;
                flags.incr_max_time = Some(
                    crate::rational::parse_rat(&v).ok_or_else(|| format!("bad rational: {v}"))?,
                );
            }
            "--depth" => {
                let v = value_for("--depth")?;
                flags.depth = v.parse().map_err(|_| format!("bad depth: {v}"))?;
            }
            "--answers" => {
                let v = value_for("--answers")?;
                flags.answers =
                    Some(v.parse().map_err(|_| format!("bad answer count: {v}"))?);
            }
            other => return Err(format!("unknown flag: {other}")),
        }
    }
    Ok(flags)
}
