//! Incremental forward driver.
//!
//! Events declared with `incr_event/1` are not proved on demand during a
//! query. Instead this driver materializes their occurrences one time point
//! at a time, from time 0 up to a caller-supplied horizon: at each step it
//! asks the engine for the earliest next occurrence of any declared pattern
//! strictly beyond the current frontier, asserts it as an `incr_happens/2`
//! fact, and advances the frontier to it. Trigger rules are written against
//! `incr_happens`, so each inserted fact is visible to the search for the
//! following one.
//!
//! The driver requires every discovered occurrence to be pinned to a single
//! time point: an event that can only be placed inside an interval has no
//! meaningful "next occurrence" to assert. Models whose occurrences
//! accumulate toward a limit are not detected specially; as the knowledge
//! base grows the derivation of the next occurrence deepens, so such runs
//! end with [`Halt::DepthExhausted`] from the engine.

use crate::engine::{run_query, EngineConfig, Halt, QueryVerdict};
use crate::program::ModelProgram;
use crate::rational::Rat;
use crate::store::ConstraintStore;
use crate::syntax::{
    display_term, Constraint, LinExpr, Literal, Query, RelOp, Term, VarId,
};
use num_traits::Zero;

/// Upper bound on driver iterations, a last-resort guard against models
/// that produce unboundedly many occurrences at constant derivation depth.
const ITERATION_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum IncrError {
    /// Incremental mode was requested but no horizon was given, neither as
    /// a CLI flag nor as a `!incr_max_time(R)` directive in the query.
    MaxTimeMissing,
    /// An occurrence of a declared incremental event was derivable only
    /// with a non-point time or a non-ground event term.
    NonPointOccurrence { event: String, detail: String },
    /// The engine halted while searching for the next occurrence.
    Halted(Halt),
    /// The driver performed [`ITERATION_LIMIT`] steps without exhausting
    /// the horizon.
    IterationLimit { limit: u64 },
}

impl std::fmt::Display for IncrError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IncrError::MaxTimeMissing => write!(
                f,
                "incremental mode needs a horizon: pass --incr-max-time or \
                 add a !incr_max_time(R) directive to the query"
            ),
            IncrError::NonPointOccurrence { event, detail } => write!(
                f,
                "incremental event {event} has a non-point occurrence: {detail}"
            ),
            IncrError::Halted(h) => write!(f, "incremental driver halted: {h}"),
            IncrError::IterationLimit { limit } => {
                write!(f, "incremental driver exceeded {limit} steps")
            }
        }
    }
}

#[derive(Debug)]
pub struct IncrOutcome {
    /// Materialized occurrences in frontier order (ground event, time).
    pub occurrences: Vec<(Term, Rat)>,
    /// The input program extended with one `incr_happens/2` fact per
    /// occurrence; queries run against this knowledge base.
    pub kb: ModelProgram,
}

/// Pick the horizon for a query: an explicit CLI value wins over the
/// query's own `!incr_max_time(R)` directive.
pub fn resolve_max_time(query: &Query, flag: Option<&Rat>) -> Result<Rat, IncrError> {
    flag.or_else(|| query.incr_max_time())
        .cloned()
        .ok_or(IncrError::MaxTimeMissing)
}

/// Run the frontier loop to the horizon and return the extended program.
pub fn run_incremental(
    program: &ModelProgram,
    max_time: &Rat,
    config: &EngineConfig,
) -> Result<IncrOutcome, IncrError> {
    let mut kb = program.clone();
    let patterns: Vec<Term> = kb.incr_events().to_vec();
    let mut occurrences: Vec<(Term, Rat)> = Vec::new();
    let mut frontier = Rat::zero();

    let mut step_config = config.clone();
    step_config.answer_limit = None;

    for _ in 0..ITERATION_LIMIT {
        // Earliest next occurrence of any pattern strictly after `frontier`.
        let mut best: Option<Rat> = None;
        let mut at_best: Vec<Term> = Vec::new();
        for pat in &patterns {
            let query = next_occurrence_query(pat, &frontier, max_time);
            let out = run_query(&kb, &query, step_config.clone());
            let answers = match out.verdict {
                QueryVerdict::Answers(a) => a,
                QueryVerdict::Halted(h) => return Err(IncrError::Halted(h)),
            };
            for ans in &answers {
                let (event, time) = read_occurrence(pat, &ans.bindings, &ans.store)?;
                match &best {
                    Some(b) if time > *b => {}
                    Some(b) if time == *b => at_best.push(event),
                    _ => {
                        best = Some(time);
                        at_best = vec![event];
                    }
                }
            }
        }
        let t_star = match best {
            Some(t) => t,
            None => return Ok(IncrOutcome { occurrences, kb }),
        };
        at_best.sort_by_key(|e| display_term(e, &|v| format!("_G{v}")));
        at_best.dedup();
        for event in at_best {
            kb.push_fact(Term::app(
                "incr_happens",
                vec![event.clone(), Term::num(t_star.clone())],
            ));
            occurrences.push((event, t_star.clone()));
        }
        frontier = t_star;
    }
    Err(IncrError::IterationLimit {
        limit: ITERATION_LIMIT,
    })
}

/// `?- T .>. frontier, T .=<. max, happens(pat, T).` with the pattern's
/// variables renumbered to query variables so their instantiation can be
/// read back from answer bindings.
fn next_occurrence_query(pat: &Term, frontier: &Rat, max_time: &Rat) -> Query {
    let mut pat_vars: Vec<VarId> = Vec::new();
    pat.vars_into(&mut pat_vars);
    let remap = |v: VarId| pat_vars.iter().position(|p| *p == v).unwrap() as VarId;
    let pat = pat.map_vars(&remap);
    let t = pat_vars.len() as VarId;
    let mut var_names: Vec<String> = (0..pat_vars.len()).map(|i| format!("A{i}")).collect();
    var_names.push("T".to_string());
    Query {
        body: vec![
            Literal::Constraint(Constraint::new(
                RelOp::Gt,
                LinExpr::var(t),
                LinExpr::constant(frontier.clone()),
            )),
            Literal::Constraint(Constraint::new(
                RelOp::Le,
                LinExpr::var(t),
                LinExpr::constant(max_time.clone()),
            )),
            Literal::Atom(Term::app("happens", vec![pat, Term::Var(t)])),
        ],
        var_names,
        directives: Vec::new(),
    }
}

/// Extract the ground event instance and pinned time from one answer of a
/// [`next_occurrence_query`]. Bindings are in query-variable order: the
/// pattern arguments first, the time variable last.
fn read_occurrence(
    pat: &Term,
    bindings: &[(String, Term)],
    store: &ConstraintStore,
) -> Result<(Term, Rat), IncrError> {
    let non_point = |detail: String| IncrError::NonPointOccurrence {
        event: display_term(pat, &|v| format!("_G{v}")),
        detail,
    };
    let (_, time_term) = bindings.last().expect("query has a time variable");
    let time = match ground_term(time_term, store) {
        Some(Term::Num(r)) => r,
        _ => {
            return Err(non_point(format!(
                "time {} is not fixed to a single point",
                display_term(time_term, &|v| format!("_G{v}"))
            )))
        }
    };
    let mut pat_vars: Vec<VarId> = Vec::new();
    pat.vars_into(&mut pat_vars);
    let event_pat = pat.map_vars(&|v| {
        pat_vars.iter().position(|p| *p == v).unwrap() as VarId
    });
    let event = substitute(&event_pat, &bindings[..bindings.len() - 1]);
    match ground_term(&event, store) {
        Some(ev) => Ok((ev, time)),
        None => Err(non_point(format!(
            "event instance {} is not ground",
            display_term(&event, &|v| format!("_G{v}"))
        ))),
    }
}

/// Replace query variable `i` with the value of the `i`-th binding.
fn substitute(t: &Term, bindings: &[(String, Term)]) -> Term {
    match t {
        Term::Var(v) => bindings[*v as usize].1.clone(),
        Term::Num(_) => t.clone(),
        Term::App(f, args) => Term::App(
            f.clone(),
            args.iter().map(|a| substitute(a, bindings)).collect(),
        ),
    }
}

/// Resolve any remaining variables through the store's fixed values;
/// `None` when some variable is not fixed to a point.
fn ground_term(t: &Term, store: &ConstraintStore) -> Option<Term> {
    match t {
        Term::Num(_) => Some(t.clone()),
        Term::Var(v) => store.fixed_value(*v).map(Term::Num),
        Term::App(f, args) => {
            let args: Option<Vec<Term>> = args.iter().map(|a| ground_term(a, store)).collect();
            Some(Term::App(f.clone(), args?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::rational::rat;

    fn load(src: &str) -> ModelProgram {
        let (rules, queries) = parse_program(src).expect("parse");
        assert!(queries.is_empty());
        ModelProgram::new(rules, Vec::new(), true).expect("validate")
    }

    #[test]
    fn drives_a_simple_trigger_chain() {
        // `tick` echoes itself 2 time units later, seeded by a plain fact.
        let p = load(
            "event(tick).\n\
             incr_event(tick).\n\
             fluent(dummy).\n\
             happens(tick, 1).\n\
             happens(tick, T) :- incr_happens(tick, T1), T .=. T1 + 2.\n",
        );
        let out = run_incremental(&p, &rat(6), &EngineConfig::default()).expect("drive");
        let times: Vec<Rat> = out.occurrences.iter().map(|(_, t)| t.clone()).collect();
        assert_eq!(times, vec![rat(1), rat(3), rat(5)]);
        assert!(out
            .occurrences
            .iter()
            .all(|(e, _)| *e == Term::atom("tick")));
        // The knowledge base carries one incr_happens fact per occurrence.
        assert_eq!(out.kb.clauses_for("incr_happens", 2).count(), 3);
    }

    #[test]
    fn horizon_cuts_the_chain() {
        let p = load(
            "event(tick).\n\
             incr_event(tick).\n\
             fluent(dummy).\n\
             happens(tick, 1).\n\
             happens(tick, T) :- incr_happens(tick, T1), T .=. T1 + 2.\n",
        );
        let out = run_incremental(&p, &rat(2), &EngineConfig::default()).expect("drive");
        assert_eq!(out.occurrences.len(), 1);
    }

    #[test]
    fn interval_occurrence_is_rejected() {
        // The only occurrence is constrained to an interval, never pinned.
        let p = load(
            "event(drift).\n\
             incr_event(drift).\n\
             fluent(dummy).\n\
             happens(drift, T) :- T .>. 3, T .<. 4.\n",
        );
        let err = run_incremental(&p, &rat(10), &EngineConfig::default()).unwrap_err();
        match err {
            IncrError::NonPointOccurrence { event, .. } => assert_eq!(event, "drift"),
            other => panic!("expected NonPointOccurrence, got {other:?}"),
        }
    }

    #[test]
    fn missing_horizon_is_reported() {
        let q = crate::parser::parse_query_text("?- happens(e, T).").expect("query");
        assert_eq!(
            resolve_max_time(&q, None).unwrap_err(),
            IncrError::MaxTimeMissing
        );
        let q = crate::parser::parse_query_text("?- !incr_max_time(19.5), happens(e, T).")
            .expect("query");
        assert_eq!(resolve_max_time(&q, None).unwrap(), ratio_late(39, 2));
        // The flag wins over the directive.
        assert_eq!(resolve_max_time(&q, Some(&rat(7))).unwrap(), rat(7));
    }

    fn ratio_late(n: i64, d: i64) -> Rat {
        crate::rational::ratio(n, d)
    }
}
