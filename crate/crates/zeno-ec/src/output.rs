//! Rendering of query answers as stable one-line strings.
//!
//! Ground bindings print as `X = 490`; a variable left free by the
//! derivation prints its residual constraints solved for that variable,
//! `T ~ {T > 10, T =< 20}`. These lines are the interface both for humans
//! and for the golden corpus expectations, so their format is normative:
//! exact rationals via [`format_rat`], lower bounds before upper bounds,
//! bindings joined with `", "`, and `true` for a query with no visible
//! variables.

use crate::engine::Answer;
use crate::rational::Rat;
use crate::store::{ConstraintStore, Row, RowOp};
use crate::syntax::{display_linexpr, display_term, LinExpr, RelOp, Term, VarId};
use num_traits::{One, Signed};
use std::collections::BTreeMap;

/// Render every answer, one line each, in derivation order.
pub fn render_answer_lines(answers: &[Answer]) -> Vec<String> {
    answers.iter().map(render_answer_line).collect()
}

/// One answer as a single line.
pub fn render_answer_line(ans: &Answer) -> String {
    // Variables named `_` (each occurrence of the anonymous variable) are
    // existential: they participate in the derivation but are not reported.
    let visible: Vec<&(String, Term)> = ans
        .bindings
        .iter()
        .filter(|(n, _)| !n.starts_with('_'))
        .collect();
    if visible.is_empty() {
        return "true".to_string();
    }

    let mut var_name: BTreeMap<VarId, String> = BTreeMap::new();
    for (name, term) in &visible {
        if let Term::Var(v) = term {
            var_name.entry(*v).or_insert_with(|| name.clone());
        }
    }
    let namer = |v: VarId| {
        var_name
            .get(&v)
            .cloned()
            .unwrap_or_else(|| format!("_G{v}"))
    };

    // Attach each residual row to the first visible variable it mentions,
    // so a row shared by two free variables is printed exactly once.
    let mut rows_for: BTreeMap<VarId, Vec<&Row>> = BTreeMap::new();
    for row in &ans.residual {
        let owner = visible.iter().find_map(|(_, t)| match t {
            Term::Var(v) if row.delta.terms.contains_key(v) => Some(*v),
            _ => None,
        });
        if let Some(v) = owner {
            rows_for.entry(v).or_default().push(row);
        }
    }

    let pieces: Vec<String> = visible
        .iter()
        .map(|(name, term)| match resolve(term, &ans.store) {
            Term::Var(v) => {
                let mut rendered: Vec<(u8, String)> = rows_for
                    .get(&v)
                    .map(|rows| rows.iter().map(|r| render_row_for(r, v, &namer)).collect())
                    .unwrap_or_default();
                rendered.sort();
                let body: Vec<String> = rendered.into_iter().map(|(_, s)| s).collect();
                format!("{} ~ {{{}}}", name, body.join(", "))
            }
            ground => format!("{} = {}", name, display_term(&ground, &namer)),
        })
        .collect();
    pieces.join(", ")
}

/// Substitute variables that the store fixes to a point. The engine already
/// substitutes values pinned by equalities; this additionally catches a
/// variable pinched to one value by a pair of inequalities.
fn resolve(t: &Term, store: &ConstraintStore) -> Term {
    match t {
        Term::Num(_) => t.clone(),
        Term::Var(v) => match store.fixed_value(*v) {
            Some(r) => Term::Num(r),
            None => t.clone(),
        },
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| resolve(a, store)).collect())
        }
    }
}

/// Render `row` (`delta op 0`) solved for `v`, with a sort rank putting
/// equalities first, then lower bounds, then upper bounds.
fn render_row_for(row: &Row, v: VarId, namer: &impl Fn(VarId) -> String) -> (u8, String) {
    let coeff = row.delta.terms.get(&v).expect("row mentions owner").clone();
    let mut rest = LinExpr {
        terms: row.delta.terms.clone(),
        constant: row.delta.constant.clone(),
    };
    rest.terms.remove(&v);
    // c*v + rest op 0  ==>  v op' -rest/c, flipping the order when c < 0.
    let rhs = rest.scale(&(-Rat::one() / &coeff));
    let op = match (row.op, coeff.is_positive()) {
        (RowOp::Eq, _) => RelOp::Eq,
        (RowOp::Le, true) => RelOp::Le,
        (RowOp::Lt, true) => RelOp::Lt,
        (RowOp::Le, false) => RelOp::Ge,
        (RowOp::Lt, false) => RelOp::Gt,
    };
    let rank = match op {
        RelOp::Eq => 0,
        RelOp::Gt | RelOp::Ge => 1,
        _ => 2,
    };
    let line = format!(
        "{} {} {}",
        namer(v),
        op.answer_token(),
        display_linexpr(&rhs, namer)
    );
    (rank, line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_query, EngineConfig, QueryVerdict};
    use crate::parser::{parse_program, parse_query_text};
    use crate::program::ModelProgram;

    fn lines(src: &str, query: &str) -> Vec<String> {
        let (rules, _) = parse_program(src).expect("parse");
        let p = ModelProgram::new(rules, Vec::new(), true).expect("validate");
        let q = parse_query_text(query).expect("query");
        let out = run_query(&p, &q, EngineConfig::default());
        match out.verdict {
            QueryVerdict::Answers(a) => render_answer_lines(&a),
            QueryVerdict::Halted(h) => panic!("halted: {h}"),
        }
    }

    const LIGHT: &str = "fluent(light_on).\n\
         event(turn_on). event(turn_off).\n\
         initiates(turn_on, light_on, T).\n\
         terminates(turn_off, light_on, T).\n\
         happens(turn_on, 10). happens(turn_off, 20).\n";

    #[test]
    fn free_time_variable_renders_bounds() {
        assert_eq!(
            lines(LIGHT, "?- holdsAt(light_on, T)."),
            vec!["T ~ {T > 10, T =< 20}"]
        );
    }

    #[test]
    fn ground_query_renders_true() {
        assert_eq!(lines(LIGHT, "?- holdsAt(light_on, 15)."), vec!["true"]);
    }

    #[test]
    fn anonymous_variables_are_hidden() {
        assert_eq!(lines(LIGHT, "?- holdsAt(light_on, _)."), vec!["true"]);
    }

    #[test]
    fn pinned_variables_render_as_values() {
        assert_eq!(
            lines(LIGHT, "?- happens(E, T), T .>. 15."),
            vec!["E = turn_off, T = 20"]
        );
    }
}
