//! Golden-corpus driver: parse a manifest of example runs and check each
//! row's outcome against its recorded expectation.
//!
//! Manifest rows have four `|`-separated cells:
//!
//! ```text
//! files | query | flags | expectation
//! ```
//!
//! * `files` — whitespace-separated model paths, relative to the manifest.
//! * `query` — the query to run (inline queries in the files are ignored).
//! * `flags` — CLI-style flags, e.g. `--zeno_halt --answers 1`.
//! * `expectation` — one of `ANSWERS(line; line; ...)` (order-insensitive),
//!   `NO_ANSWER`, `ZENO_HALT(event|event)` (any listed event acceptable),
//!   or `DEPTH_EXHAUSTED`.
//!
//! Blank lines and `#` comments are skipped.

use crate::engine::Halt;
use crate::incremental::IncrError;
use crate::runner::{execute, parse_flag_tokens, QueryOutcome, QueryRun, RunSpec};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Answers(Vec<String>),
    NoAnswer,
    Zeno(Vec<String>),
    DepthExhausted,
}

impl std::fmt::Display for Expectation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expectation::Answers(lines) => write!(f, "ANSWERS({})", lines.join("; ")),
            Expectation::NoAnswer => write!(f, "NO_ANSWER"),
            Expectation::Zeno(evs) => write!(f, "ZENO_HALT({})", evs.join("|")),
            Expectation::DepthExhausted => write!(f, "DEPTH_EXHAUSTED"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestRow {
    /// 1-based line number in the manifest, for reporting.
    pub line: usize,
    pub files: Vec<String>,
    pub query: String,
    pub flags: String,
    pub expectation: Expectation,
}

pub struct RowResult {
    pub row: ManifestRow,
    pub pass: bool,
    /// Human-readable mismatch description; empty on pass.
    pub detail: String,
    /// The completed run, absent when loading or flag parsing failed.
    pub run: Option<QueryRun>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, String> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cells = line.splitn(4, '|').map(str::trim);
        let (files, query, flags, expect) = match (
            cells.next(),
            cells.next(),
            cells.next(),
            cells.next(),
        ) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(format!("line {}: expected 4 cells", idx + 1)),
        };
        rows.push(ManifestRow {
            line: idx + 1,
            files: files.split_whitespace().map(str::to_string).collect(),
            query: query.to_string(),
            flags: flags.to_string(),
            expectation: parse_expectation(expect)
                .ok_or_else(|| format!("line {}: bad expectation: {expect}", idx + 1))?,
        });
    }
    Ok(rows)
}

fn parse_expectation(s: &str) -> Option<Expectation> {
    if s == "NO_ANSWER" {
        return Some(Expectation::NoAnswer);
    }
    if s == "DEPTH_EXHAUSTED" {
        return Some(Expectation::DepthExhausted);
    }
    if let Some(inner) = s.strip_prefix("ANSWERS(").and_then(|r| r.strip_suffix(')')) {
        let lines: Vec<String> = inner
            .split(';')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        return Some(Expectation::Answers(lines));
    }
    if let Some(inner) = s.strip_prefix("ZENO_HALT(").and_then(|r| r.strip_suffix(')')) {
        let evs: Vec<String> = inner
            .split('|')
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .map(str::to_string)
            .collect();
        if evs.is_empty() {
            return None;
        }
        return Some(Expectation::Zeno(evs));
    }
    None
}

/// Run one manifest row with its files resolved against `base`.
pub fn run_row(base: &Path, row: &ManifestRow) -> RowResult {
    let fail = |detail: String| RowResult {
        row: row.clone(),
        pass: false,
        detail,
        run: None,
    };
    let flag_tokens: Vec<&str> = row.flags.split_whitespace().collect();
    let flags = match parse_flag_tokens(&flag_tokens) {
        Ok(f) => f,
        Err(e) => return fail(format!("bad flags: {e}")),
    };
    let mut sources = Vec::new();
    for file in &row.files {
        let path = base.join(file);
        match std::fs::read_to_string(&path) {
            Ok(text) => sources.push((file.clone(), text)),
            Err(e) => return fail(format!("cannot read {}: {e}", path.display())),
        }
    }
    let spec = RunSpec {
        sources,
        query_text: Some(row.query.clone()),
        flags,
    };
    let run = match execute(&spec) {
        Ok(mut runs) => runs.remove(0),
        Err(e) => return fail(format!("load failed: {e}")),
    };
    let (pass, detail) = judge(&row.expectation, &run);
    RowResult {
        row: row.clone(),
        pass,
        detail,
        run: Some(run),
    }
}

fn judge(expect: &Expectation, run: &QueryRun) -> (bool, String) {
    let got = || format!("got: {}", run.text_block().trim_end().replace('\n', " / "));
    match (expect, &run.outcome) {
        (Expectation::Answers(want), QueryOutcome::Answers { lines, .. }) => {
            let mut w = want.clone();
            let mut g = lines.clone();
            w.sort();
            g.sort();
            if w == g {
                (true, String::new())
            } else {
                (false, format!("expected {expect}, {}", got()))
            }
        }
        (Expectation::NoAnswer, QueryOutcome::Answers { lines, .. }) if lines.is_empty() => {
            (true, String::new())
        }
        (Expectation::Zeno(alts), outcome) => match zeno_event(outcome) {
            Some(ev) if alts.iter().any(|a| *a == ev) => (true, String::new()),
            Some(ev) => (
                false,
                format!("expected {expect}, halted on event {ev}"),
            ),
            None => (false, format!("expected {expect}, {}", got())),
        },
        (Expectation::DepthExhausted, QueryOutcome::Halted(Halt::DepthExhausted { .. }))
        | (
            Expectation::DepthExhausted,
            QueryOutcome::IncrFailed(IncrError::Halted(Halt::DepthExhausted { .. })),
        ) => (true, String::new()),
        _ => (false, format!("expected {expect}, {}", got())),
    }
}

fn zeno_event(outcome: &QueryOutcome) -> Option<String> {
    match outcome {
        QueryOutcome::Halted(Halt::Zeno(r))
        | QueryOutcome::IncrFailed(IncrError::Halted(Halt::Zeno(r))) => Some(r.event_text()),
        _ => None,
    }
}

/// Run a whole manifest file; `Ok` carries per-row results and whether all
/// rows passed.
pub fn run_manifest_file(path: &Path) -> Result<(Vec<RowResult>, bool), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let rows = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let results: Vec<RowResult> = rows.iter().map(|r| run_row(base, r)).collect();
    let all = results.iter().all(|r| r.pass);
    Ok((results, all))
}

/// Render the pass/fail table printed by `--corpus`.
pub fn format_report(results: &[RowResult]) -> String {
    let mut out = String::new();
    let mut failed = 0;
    for r in results {
        let mark = if r.pass { "PASS" } else { "FAIL" };
        if !r.pass {
            failed += 1;
        }
        let time = r
            .run
            .as_ref()
            .map(|run| format!("{:>6} ms", run.time_ms))
            .unwrap_or_else(|| "      --".to_string());
        out.push_str(&format!(
            "{mark}  line {:>3}  {}  [{}]  {}\n",
            r.row.line,
            time,
            r.row.files.join(" "),
            r.row.query
        ));
        if !r.pass {
            out.push_str(&format!("      {}\n", r.detail));
        }
    }
    out.push_str(&format!(
        "{} rows, {} failed\n",
        results.len(),
        failed
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_expectations() {
        let text = "\
# comment
ex1/model.pl | ?- holdsAt(light_on, T). | | ANSWERS(T ~ {T > 10, T =< 20})

a.pl b.pl | ?- q(X). | --zeno_halt --answers 1 | ZENO_HALT(fade_in_end|fade_out_end)
a.pl | ?- q(X). | | NO_ANSWER
a.pl | ?- q(X). | --depth 100 | DEPTH_EXHAUSTED
";
        let rows = parse_manifest(text).expect("parse");
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].line, 2);
        assert_eq!(
            rows[0].expectation,
            Expectation::Answers(vec!["T ~ {T > 10, T =< 20}".to_string()])
        );
        assert_eq!(rows[1].files, vec!["a.pl", "b.pl"]);
        assert_eq!(
            rows[1].expectation,
            Expectation::Zeno(vec![
                "fade_in_end".to_string(),
                "fade_out_end".to_string()
            ])
        );
        assert_eq!(rows[2].expectation, Expectation::NoAnswer);
        assert_eq!(rows[3].expectation, Expectation::DepthExhausted);
        assert_eq!(rows[3].flags, "--depth 100");
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(parse_manifest("only | three | cells").is_err());
        assert!(parse_manifest("a | b | c | WHATEVER").is_err());
    }

    #[test]
    fn answers_comparison_is_order_insensitive() {
        let dir = tempdir_like();
        std::fs::write(
            dir.join("m.pl"),
            "event(a). event(b). fluent(f).\nhappens(a, 1). happens(b, 2).\n",
        )
        .unwrap();
        let row = ManifestRow {
            line: 1,
            files: vec!["m.pl".to_string()],
            query: "?- happens(E, T).".to_string(),
            flags: String::new(),
            expectation: Expectation::Answers(vec![
                "E = b, T = 2".to_string(),
                "E = a, T = 1".to_string(),
            ]),
        };
        let result = run_row(&dir, &row);
        assert!(result.pass, "{}", result.detail);
    }

    fn tempdir_like() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("zeno-ec-corpus-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
