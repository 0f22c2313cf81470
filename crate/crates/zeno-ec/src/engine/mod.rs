//! Goal-directed resolution engine over the constraint store.
//!
//! The solver runs a depth-first search with chronological backtracking in
//! continuation-passing style: every choicepoint clones the machine state
//! (substitution, constraint store, ancestor chains). The state-evolution
//! axioms and the extended `holdsAt` family are built-in goal expansions
//! (`builtins`), the constructive negations are refutation procedures with
//! complement splitting (`negation`), and every `happens/2` expansion feeds
//! the Zeno-chain guard.
//!
//! Soundness under resource limits: exceeding the per-branch depth limit
//! halts the whole query (`Halt::DepthExhausted`) instead of silently
//! pruning, because a pruned branch inside a refutation would otherwise turn
//! into an unsound negation success.

mod builtins;
mod negation;

use crate::program::ModelProgram;
use crate::rational::Rat;
use crate::store::{AssertResult, ConstraintStore, Row};
use crate::syntax::{Constraint, LinExpr, Literal, Query, RelOp, Term, VarId};
use crate::zeno::{HappensRecord, ZenoReport};
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Persistent list for ancestor chains (cheap clone, scope-correct sharing).
// ---------------------------------------------------------------------------

pub(crate) struct ArcList<T>(Option<Arc<(T, ArcList<T>)>>);

impl<T> Clone for ArcList<T> {
    fn clone(&self) -> Self {
        ArcList(self.0.clone())
    }
}

impl<T> ArcList<T> {
    pub fn new() -> Self {
        ArcList(None)
    }

    pub fn cons(&self, head: T) -> Self {
        ArcList(Some(Arc::new((head, self.clone()))))
    }

    /// The list without its head (empty stays empty).
    pub fn tail(&self) -> Self {
        match self.0.as_deref() {
            Some((_, rest)) => rest.clone(),
            None => ArcList(None),
        }
    }

    pub fn iter(&self) -> ArcListIter<'_, T> {
        ArcListIter(self)
    }
}

#[derive(Clone)]
pub(crate) struct ArcListIter<'a, T>(&'a ArcList<T>);

impl<'a, T> Iterator for ArcListIter<'a, T> {
    type Item = &'a T;
    fn next(&mut self) -> Option<&'a T> {
        let node = self.0 .0.as_deref()?;
        self.0 = &node.1;
        Some(&node.0)
    }
}

// ---------------------------------------------------------------------------
// Public configuration and results
// ---------------------------------------------------------------------------

/// Emitted on every built-in goal expansion when tracing is enabled; used by
/// conformance tests to pin down clause and literal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub goal: String,
    pub clause: &'static str,
    pub body: Vec<String>,
}

#[derive(Clone)]
pub struct EngineConfig {
    /// Maximum derivation depth (goal expansions along one branch).
    pub depth_limit: u64,
    /// Stop after this many answers (None: exhaust the search space).
    pub answer_limit: Option<usize>,
    /// Enable the Zeno-descending-chain guard.
    pub zeno_halt: bool,
    pub trace: Option<Sender<TraceEvent>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            depth_limit: 2000,
            answer_limit: None,
            zeno_halt: false,
            trace: None,
        }
    }
}

/// Abnormal termination of a query.
#[derive(Debug, Clone, PartialEq)]
pub enum Halt {
    Zeno(ZenoReport),
    DepthExhausted { limit: u64 },
    InvalidDuration(String),
    TypeError(String),
}

impl std::fmt::Display for Halt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Halt::Zeno(r) => write!(f, "{}", r.render_warning()),
            Halt::DepthExhausted { limit } => {
                write!(f, "derivation depth limit of {limit} exhausted")
            }
            Halt::InvalidDuration(msg) => write!(f, "invalid duration: {msg}"),
            Halt::TypeError(msg) => write!(f, "type error: {msg}"),
        }
    }
}

/// One solution to a query.
#[derive(Debug, Clone)]
pub struct Answer {
    /// Query variable name, value term (numbers substituted where fixed).
    pub bindings: Vec<(String, Term)>,
    /// Projection of the store onto the variables still free in `bindings`.
    pub residual: Vec<Row>,
    /// Event occurrences used by the derivation (event, time term).
    pub fragment: Vec<(Term, Term)>,
    /// Full final store, for bounds rendering and certification.
    pub store: ConstraintStore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryVerdict {
    Answers(Vec<Answer>),
    Halted(Halt),
}

impl PartialEq for Answer {
    fn eq(&self, other: &Self) -> bool {
        self.bindings == other.bindings && self.residual == other.residual
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub verdict: QueryVerdict,
    /// True when the answer limit cut enumeration short.
    pub truncated: bool,
    /// Total goal expansions performed.
    pub nodes: u64,
}

// ---------------------------------------------------------------------------
// Internal machinery
// ---------------------------------------------------------------------------

pub(crate) enum Flow {
    Continue,
    Stop(StopCause),
}

pub(crate) enum StopCause {
    Enough,
    Halted(Halt),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum NegKind {
    Stopped,
    Started,
}

/// Variant identity of a refutation in progress, for the provisional
/// assumption: a nested negation call matching an active context attempts
/// the outer exclusion early instead of unfolding forever.
#[derive(Clone)]
pub(crate) struct RefutationCtx {
    pub id: u64,
    pub kind: NegKind,
    pub closed: bool,
    pub t1_value: CtxVal,
    pub skeleton: Term,
    /// Candidate time variable of the enclosing enumeration.
    pub tc: VarId,
    /// Outer negation interval terms (dereferenced at context creation).
    pub t1: Term,
    pub t2: Term,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub(crate) enum CtxVal {
    Num(Rat),
    Var(VarId),
}

pub(crate) const WILDCARD: VarId = u32::MAX;

/// Internal goal-list marker popping one entry from `positive_goals`; never
/// produced by the parser (user atoms cannot start with `$`).
pub(crate) const POP_POSITIVE: &str = "$pop_positive";

/// Replace every variable with a single wildcard id: variant skeletons.
pub(crate) fn skeleton_of(t: &Term) -> Term {
    t.map_vars(&|_| WILDCARD)
}

/// Bindings as a persistent map: states clone at every choice point, and
/// structural sharing keeps those clones O(1).
pub(crate) type Subst = im::OrdMap<VarId, Term>;

#[derive(Clone)]
pub(crate) struct State {
    pub subst: Subst,
    pub store: ConstraintStore,
    pub next_var: VarId,
    pub depth: u64,
    pub in_refutation: u32,
    /// Ids of refutation contexts whose provisional assumption this branch
    /// has relied on.
    pub used_hypothesis: BTreeSet<u64>,
    /// Contexts disabled for retry-without-assumption.
    pub disabled_ctxs: BTreeSet<u64>,
    pub positive_goals: ArcList<Term>,
    /// Ground `not_happens` goals whose refutation is in progress; a nested
    /// identical goal succeeds coinductively (the cycle back to it passes
    /// only through positive literals, so the loop is even).
    pub negative_goals: ArcList<Term>,
    pub happens_chain: ArcList<HappensRecord>,
    pub refutation_ctxs: ArcList<RefutationCtx>,
    pub fragment: ArcList<(Term, Term)>,
}

impl State {
    fn new(first_free_var: VarId) -> Self {
        State {
            subst: Subst::new(),
            store: ConstraintStore::new(),
            next_var: first_free_var,
            depth: 0,
            in_refutation: 0,
            used_hypothesis: BTreeSet::new(),
            disabled_ctxs: BTreeSet::new(),
            positive_goals: ArcList::new(),
            negative_goals: ArcList::new(),
            happens_chain: ArcList::new(),
            refutation_ctxs: ArcList::new(),
            fragment: ArcList::new(),
        }
    }

    pub fn fresh_var(&mut self) -> VarId {
        let v = self.next_var;
        self.next_var += 1;
        v
    }
}

pub(crate) struct RunCtx<'p> {
    pub program: &'p ModelProgram,
    pub config: EngineConfig,
    pub nodes: AtomicU64,
    pub next_ctx_id: AtomicU64,
}

impl<'p> RunCtx<'p> {
    pub fn fresh_ctx_id(&self) -> u64 {
        self.next_ctx_id.fetch_add(1, Ordering::Relaxed)
    }

    pub fn trace(&self, event: impl FnOnce() -> TraceEvent) {
        if let Some(tx) = &self.config.trace {
            let _ = tx.send(event());
        }
    }
}

// -- term utilities ---------------------------------------------------------

/// Follow substitution chains to the representative of a term (shallow).
pub(crate) fn walk_root(t: &Term, subst: &Subst) -> Term {
    let mut cur = t.clone();
    while let Term::Var(v) = cur {
        match subst.get(&v) {
            Some(next) => cur = next.clone(),
            None => return Term::Var(v),
        }
    }
    cur
}

/// Deep dereference: substitute bound variables, replace store-pinned
/// variables by their numeric value, keep the rest as root variables.
/// Uses the store's cheap equality-pinned map, not full projection, since
/// this runs on every dispatched goal.
pub(crate) fn deref_deep(t: &Term, st: &State) -> Term {
    match walk_root(t, &st.subst) {
        Term::Var(v) => match st.store.pinned_value(v) {
            Some(r) => Term::Num(r.clone()),
            None => Term::Var(v),
        },
        Term::Num(r) => Term::Num(r),
        Term::App(f, args) => {
            Term::App(f, args.iter().map(|a| deref_deep(a, st)).collect())
        }
    }
}

/// Fully ground form of a term (all variables resolved), or None.
pub(crate) fn canonical_ground(t: &Term, st: &State) -> Option<Term> {
    match deref_deep(t, st) {
        Term::Var(_) => None,
        Term::Num(r) => Some(Term::Num(r)),
        Term::App(f, args) => {
            let grounded: Option<Vec<Term>> = args
                .iter()
                .map(|a| canonical_ground(a, st))
                .collect();
            Some(Term::App(f, grounded?))
        }
    }
}

/// Unification with store routing: numeric equality of store-registered
/// variables is asserted as a constraint; everything else binds in the
/// substitution.
pub(crate) fn unify(a: &Term, b: &Term, st: &mut State) -> bool {
    let a = walk_root(a, &st.subst);
    let b = walk_root(b, &st.subst);
    match (a, b) {
        (Term::Var(x), Term::Var(y)) => {
            if x == y {
                return true;
            }
            if st.store.is_registered(x) || st.store.is_registered(y) {
                if st.store.assert_var_eq_var(x, y) == AssertResult::Failed {
                    return false;
                }
            }
            st.subst.insert(x, Term::Var(y));
            true
        }
        (Term::Var(x), Term::Num(r)) | (Term::Num(r), Term::Var(x)) => {
            if st.store.is_registered(x)
                && st.store.assert_var_eq_num(x, &r) == AssertResult::Failed
            {
                return false;
            }
            st.subst.insert(x, Term::Num(r));
            true
        }
        (Term::Var(x), t @ Term::App(..)) | (t @ Term::App(..), Term::Var(x)) => {
            if st.store.is_registered(x) {
                return false; // numeric variable cannot become a structure
            }
            st.subst.insert(x, t);
            true
        }
        (Term::Num(p), Term::Num(q)) => p == q,
        (Term::App(f, fa), Term::App(g, ga)) => {
            f == g
                && fa.len() == ga.len()
                && fa.iter().zip(ga.iter()).all(|(x, y)| unify(x, &y.clone(), st))
        }
        _ => false,
    }
}

/// Resolve a (clause-level) linear expression against the current bindings:
/// bound-to-number variables fold into the constant, unbound variables map
/// to their root. Fails if a variable is bound to a structure.
pub(crate) fn resolve_linexpr(e: &LinExpr, st: &State) -> Option<LinExpr> {
    let mut out = LinExpr::constant(e.constant.clone());
    for (v, c) in &e.terms {
        match walk_root(&Term::Var(*v), &st.subst) {
            Term::Num(r) => out.constant += c * r,
            Term::Var(w) => {
                out = out.add(&LinExpr::var(w).scale(c));
            }
            Term::App(..) => return None,
        }
    }
    Some(out)
}

/// Linear expression for a single term (number or variable).
pub(crate) fn linexpr_of_term(t: &Term, st: &State) -> Option<LinExpr> {
    match walk_root(t, &st.subst) {
        Term::Num(r) => Some(LinExpr::constant(r)),
        Term::Var(v) => Some(LinExpr::var(v)),
        Term::App(..) => None,
    }
}

pub(crate) fn display_goal(t: &Term) -> String {
    crate::syntax::display_term(t, &|v| format!("_G{v}"))
}

// ---------------------------------------------------------------------------
// The solve loop
// ---------------------------------------------------------------------------

pub(crate) type Goals = ArcList<Literal>;

pub(crate) fn push_goals(rest: &Goals, body: &[Literal]) -> Goals {
    let mut out = rest.clone();
    for lit in body.iter().rev() {
        out = out.cons(lit.clone());
    }
    out
}

pub(crate) type Emit<'a> = &'a mut dyn FnMut(&State) -> Flow;

pub(crate) fn solve(rc: &RunCtx, goals: &Goals, mut state: State, emit: Emit) -> Flow {
    let (lit, rest) = match goals.0.as_deref() {
        None => return emit(&state),
        Some((head, tail)) => (head.clone(), tail.clone()),
    };
    // Scope marker inserted by enter_positive: the guarded goal's derivation
    // is complete once control passes it, so the goal stops being an
    // ancestor for whatever follows in the conjunction.
    if let Literal::Atom(t) = &lit {
        if t.functor() == Some((POP_POSITIVE, 0)) {
            state.positive_goals = state.positive_goals.tail();
            return solve(rc, &rest, state, emit);
        }
    }
    rc.nodes.fetch_add(1, Ordering::Relaxed);
    state.depth += 1;
    if state.depth > rc.config.depth_limit {
        return Flow::Stop(StopCause::Halted(Halt::DepthExhausted {
            limit: rc.config.depth_limit,
        }));
    }

    match &lit {
        Literal::Constraint(c) => solve_constraint(rc, c, &rest, state, emit),
        Literal::Atom(t) => {
            let goal = walk_root(t, &state.subst);
            match goal.functor() {
                Some(("happens", 2)) => builtins::solve_happens(rc, &goal, &rest, state, emit),
                Some(("holdsAt", 2 | 3 | 4)) => {
                    builtins::solve_holds_at(rc, &goal, &rest, state, emit)
                }
                Some(_) => solve_user(rc, &goal, &rest, state, emit),
                None => Flow::Continue, // unbound or numeric goal: fail
            }
        }
        Literal::NegatedBuiltin(t) => {
            let goal = walk_root(t, &state.subst);
            match goal.functor() {
                Some(("not_holdsAt", 2 | 3)) => {
                    builtins::solve_not_holds_at(rc, &goal, &rest, state, emit)
                }
                Some(("not_happens", 2)) => {
                    negation::solve_not_happens(rc, &goal, &rest, state, emit)
                }
                Some((name @ ("not_stoppedIn" | "not_startedIn"), 3)) => {
                    let kind = if name == "not_stoppedIn" {
                        NegKind::Stopped
                    } else {
                        NegKind::Started
                    };
                    negation::solve_interval_negation(rc, kind, false, &goal, &rest, state, emit)
                }
                Some((name @ ("$not_stoppedIn_closed" | "$not_startedIn_closed"), 3)) => {
                    let kind = if name.starts_with("$not_stoppedIn") {
                        NegKind::Stopped
                    } else {
                        NegKind::Started
                    };
                    negation::solve_interval_negation(rc, kind, true, &goal, &rest, state, emit)
                }
                _ => Flow::Continue,
            }
        }
    }
}

fn solve_constraint(
    rc: &RunCtx,
    c: &Constraint,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let lhs = match resolve_linexpr(&c.lhs, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let rhs = match resolve_linexpr(&c.rhs, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let resolved = Constraint::new(c.op, lhs, rhs);
    let mut st = state;
    match st.store.assert_constraint(&resolved) {
        AssertResult::Consistent => solve(rc, rest, st, emit),
        AssertResult::Failed => Flow::Continue,
        AssertResult::NeedsSplit => {
            // delta <> 0 splits into delta < 0, then delta > 0
            let lt = Constraint::new(RelOp::Lt, resolved.lhs.clone(), resolved.rhs.clone());
            let gt = Constraint::new(RelOp::Gt, resolved.lhs.clone(), resolved.rhs.clone());
            let mut first = st.clone();
            if first.store.assert_constraint(&lt) == AssertResult::Consistent {
                match solve(rc, rest, first, emit) {
                    Flow::Continue => {}
                    stop => return stop,
                }
            }
            if st.store.assert_constraint(&gt) == AssertResult::Consistent {
                return solve(rc, rest, st, emit);
            }
            Flow::Continue
        }
    }
}

/// Resolve a goal against program clauses, in program order.
pub(crate) fn solve_user(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let (f, n) = match goal.functor() {
        Some(fa) => fa,
        None => return Flow::Continue,
    };
    let clauses: Vec<_> = rc.program.clauses_for(f, n).cloned().collect();
    for rule in clauses {
        let mut st = state.clone();
        let base = st.next_var;
        st.next_var += rule.num_vars();
        let offset = |v: VarId| base + v;
        let head = rule.head.map_vars(&offset);
        if !unify(goal, &head, &mut st) {
            continue;
        }
        let body: Vec<Literal> = rule
            .body
            .iter()
            .map(|l| match l {
                Literal::Atom(t) => Literal::Atom(t.map_vars(&offset)),
                Literal::NegatedBuiltin(t) => Literal::NegatedBuiltin(t.map_vars(&offset)),
                Literal::Constraint(c) => Literal::Constraint(c.map_vars(&offset)),
            })
            .collect();
        match solve(rc, &push_goals(rest, &body), st, emit) {
            Flow::Continue => {}
            stop => return stop,
        }
    }
    Flow::Continue
}

// ---------------------------------------------------------------------------
// Query entry point
// ---------------------------------------------------------------------------

fn build_answer(query: &Query, state: &State) -> Answer {
    let mut bindings = Vec::new();
    let mut keep: BTreeSet<VarId> = BTreeSet::new();
    for (i, name) in query.var_names.iter().enumerate() {
        let value = deref_deep(&Term::Var(i as VarId), state);
        let mut vars = Vec::new();
        value.vars_into(&mut vars);
        keep.extend(vars);
        bindings.push((name.clone(), value));
    }
    let residual = state.store.project(&keep);
    let fragment: Vec<(Term, Term)> = state
        .fragment
        .iter()
        .map(|(e, t)| (deref_deep(e, state), deref_deep(t, state)))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    Answer {
        bindings,
        residual,
        fragment,
        store: state.store.clone(),
    }
}

fn run_query_inner(program: &ModelProgram, query: &Query, config: EngineConfig) -> RunOutput {
    let rc = RunCtx {
        program,
        config: config.clone(),
        nodes: AtomicU64::new(0),
        next_ctx_id: AtomicU64::new(0),
    };
    let state = State::new(query.var_names.len() as VarId);
    let goals = push_goals(&ArcList::new(), &query.body);
    let mut answers: Vec<Answer> = Vec::new();
    let mut truncated = false;
    let flow = solve(&rc, &goals, state, &mut |st: &State| {
        let ans = build_answer(query, st);
        if !answers.contains(&ans) {
            answers.push(ans);
        }
        if let Some(limit) = config.answer_limit {
            if answers.len() >= limit {
                truncated = true;
                return Flow::Stop(StopCause::Enough);
            }
        }
        Flow::Continue
    });
    let nodes = rc.nodes.load(Ordering::Relaxed);
    let verdict = match flow {
        Flow::Continue | Flow::Stop(StopCause::Enough) => QueryVerdict::Answers(answers),
        Flow::Stop(StopCause::Halted(h)) => QueryVerdict::Halted(h),
    };
    RunOutput {
        verdict,
        truncated,
        nodes,
    }
}

/// Solve one query against a program. Runs on a dedicated thread with a
/// large stack (derivations recurse deeply).
pub fn run_query(program: &ModelProgram, query: &Query, config: EngineConfig) -> RunOutput {
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .stack_size(64 << 20)
            .spawn_scoped(scope, || run_query_inner(program, query, config))
            .expect("spawn solver thread")
            .join()
            .expect("solver thread panicked")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_program, parse_query_text};
    use crate::rational::{format_rat, rat};
    use crate::store::RowOp;

    fn prog(src: &str) -> ModelProgram {
        let (rules, queries) = parse_program(src).expect("parse");
        assert!(queries.is_empty(), "test programs carry no inline queries");
        ModelProgram::new(rules, queries, true).expect("validate")
    }

    fn ask_with(p: &ModelProgram, q: &str, config: EngineConfig) -> RunOutput {
        let query = parse_query_text(q).expect("parse query");
        run_query(p, &query, config)
    }

    fn ask(p: &ModelProgram, q: &str) -> RunOutput {
        ask_with(p, q, EngineConfig::default())
    }

    fn answers(out: &RunOutput) -> &[Answer] {
        match &out.verdict {
            QueryVerdict::Answers(a) => a,
            QueryVerdict::Halted(h) => panic!("unexpected halt: {h}"),
        }
    }

    fn binding<'a>(ans: &'a Answer, name: &str) -> &'a Term {
        &ans.bindings.iter().find(|(n, _)| n == name).unwrap().1
    }

    /// Render an answer's residual rows as display strings for assertions.
    fn residual_strings(ans: &Answer, names: &[(VarId, &str)]) -> Vec<String> {
        let namer = |v: VarId| {
            names
                .iter()
                .find(|(id, _)| *id == v)
                .map(|(_, n)| n.to_string())
                .unwrap_or_else(|| format!("_G{v}"))
        };
        ans.residual
            .iter()
            .map(|row| {
                let op = match row.op {
                    RowOp::Eq => "=",
                    RowOp::Le => "=<",
                    RowOp::Lt => "<",
                };
                format!(
                    "{} {} 0",
                    crate::syntax::display_linexpr(&row.delta, &namer),
                    op
                )
            })
            .collect()
    }

    const LIGHT: &str = "
        fluent(light).
        event(turn_on).
        event(turn_off).
        initiates(turn_on, light, T).
        terminates(turn_off, light, T).
        happens(turn_on, 10).
        happens(turn_off, 20).
    ";

    #[test]
    fn fact_query_binds_time() {
        let p = prog("event(e). happens(e, 5).");
        let out = ask(&p, "happens(e, T)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        assert_eq!(binding(&ans[0], "T"), &Term::num(rat(5)));
        assert!(ans[0].residual.is_empty());
    }

    #[test]
    fn holds_between_initiation_and_termination() {
        let p = prog(LIGHT);
        for (t, expect) in [(5, false), (10, false), (15, true), (20, true), (25, false)] {
            let out = ask(&p, &format!("holdsAt(light, {t})"));
            assert_eq!(
                answers(&out).len(),
                usize::from(expect),
                "holdsAt(light, {t})"
            );
            // agreement with the ground-timeline oracle
            let world = crate::ground::GroundWorld::new(p.rules(), &[]);
            assert_eq!(
                world.holds_at(&Term::atom("light"), &rat(t)),
                expect,
                "oracle holdsAt(light, {t})"
            );
        }
    }

    #[test]
    fn free_time_query_returns_interval() {
        let p = prog(LIGHT);
        let out = ask(&p, "holdsAt(light, T)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        let t_root = match binding(&ans[0], "T") {
            Term::Var(v) => *v,
            other => panic!("expected interval answer, got {other:?}"),
        };
        let bounds = ans[0].store.bounds_of(t_root);
        assert_eq!(bounds.lower, Some(crate::store::BoundVal { value: rat(10), strict: true }));
        assert_eq!(bounds.upper, Some(crate::store::BoundVal { value: rat(20), strict: false }));
        let rows = residual_strings(&ans[0], &[(t_root, "T")]);
        assert_eq!(rows.len(), 2, "residual should be the two bounds: {rows:?}");
    }

    #[test]
    fn extra_query_constraints_narrow_the_answer() {
        let p = prog(LIGHT);
        let out = ask(&p, "T .>. 12, holdsAt(light, T)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        let t_root = match binding(&ans[0], "T") {
            Term::Var(v) => *v,
            other => panic!("unexpected {other:?}"),
        };
        let bounds = ans[0].store.bounds_of(t_root);
        assert_eq!(bounds.lower.unwrap().value, rat(12));
        assert_eq!(bounds.upper.unwrap().value, rat(20));
    }

    #[test]
    fn negative_fluent_after_termination() {
        let p = prog(LIGHT);
        let out = ask(&p, "not_holdsAt(light, T)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        let t_root = match binding(&ans[0], "T") {
            Term::Var(v) => *v,
            other => panic!("unexpected {other:?}"),
        };
        let bounds = ans[0].store.bounds_of(t_root);
        assert_eq!(bounds.lower, Some(crate::store::BoundVal { value: rat(20), strict: true }));
        assert_eq!(bounds.upper, None);
        let world = crate::ground::GroundWorld::new(p.rules(), &[]);
        assert!(world.not_holds_at(&Term::atom("light"), &rat(30)));
        assert!(!world.not_holds_at(&Term::atom("light"), &rat(15)));
    }

    const BANKISH: &str = "
        fluent(balance(B)).
        event(deposit(A)).
        initiallyP(balance(10000)).
        initiates(deposit(A), balance(NewB), T) :-
            holdsAt(balance(B), T),
            NewB .=. B + A.
        terminates(deposit(A), balance(B), T).
        happens(deposit(2000), 10).
    ";

    #[test]
    fn valued_fluent_updates_through_recursion() {
        let p = prog(BANKISH);
        let out = ask(&p, "holdsAt(balance(B), 15)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        assert_eq!(binding(&ans[0], "B"), &Term::num(rat(12000)));

        let out = ask(&p, "holdsAt(balance(B), 5)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        assert_eq!(binding(&ans[0], "B"), &Term::num(rat(10000)));

        let world = crate::ground::GroundWorld::new(p.rules(), &[]);
        let vals = world.holding_matching(&Term::app("balance", vec![Term::Var(0)]), &rat(15));
        assert_eq!(vals, vec![Term::app("balance", vec![Term::num(rat(12000))])]);
    }

    #[test]
    fn model_fragment_records_used_occurrences() {
        let p = prog(BANKISH);
        let out = ask(&p, "holdsAt(balance(B), 15)");
        let ans = answers(&out);
        assert_eq!(
            ans[0].fragment,
            vec![(Term::app("deposit", vec![Term::num(rat(2000))]), Term::num(rat(10)))]
        );
    }

    #[test]
    fn answer_limit_truncates() {
        let p = prog("event(e). happens(e, 1). happens(e, 2). happens(e, 3).");
        let out = ask_with(
            &p,
            "happens(e, T)",
            EngineConfig {
                answer_limit: Some(2),
                ..EngineConfig::default()
            },
        );
        assert!(out.truncated);
        assert_eq!(answers(&out).len(), 2);
        assert_eq!(binding(&answers(&out)[0], "T"), &Term::num(rat(1)));
        assert_eq!(binding(&answers(&out)[1], "T"), &Term::num(rat(2)));
    }

    #[test]
    fn runaway_recursion_exhausts_depth() {
        let p = prog("p :- p.");
        let out = ask(&p, "p");
        match out.verdict {
            QueryVerdict::Halted(Halt::DepthExhausted { limit: 2000 }) => {}
            other => panic!("expected depth exhaustion, got {other:?}"),
        }
    }

    const SELF_FEE: &str = "
        fluent(noServiceFeeYet).
        event(serviceFee(F)).
        initiallyP(noServiceFeeYet).
        terminates(serviceFee(F), noServiceFeeYet, T).
        happens(serviceFee(500), T) :- holdsAt(noServiceFeeYet, T).
    ";

    #[test]
    fn zeno_chain_is_detected_with_guard_enabled() {
        let p = prog(SELF_FEE);
        let out = ask_with(
            &p,
            "T .>. 0, T .=<. 100, happens(serviceFee(F), T)",
            EngineConfig {
                zeno_halt: true,
                ..EngineConfig::default()
            },
        );
        match &out.verdict {
            QueryVerdict::Halted(Halt::Zeno(report)) => {
                assert_eq!(report.event_text(), "serviceFee(500)");
                assert_eq!(crate::zeno::format_interval(&report.interval), "(0, 100)");
            }
            other => panic!("expected Zeno halt, got {other:?}"),
        }
    }

    #[test]
    fn zeno_chain_without_guard_exhausts_depth() {
        let p = prog(SELF_FEE);
        let out = ask(&p, "T .>. 0, T .=<. 100, happens(serviceFee(F), T)");
        match out.verdict {
            QueryVerdict::Halted(Halt::DepthExhausted { .. }) => {}
            other => panic!("expected depth exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_interpolates_values() {
        // level rises by 1 per time unit from the filling start
        let p = prog("
            fluent(filling).
            fluent(level(X)).
            event(tap_on).
            event(tap_off).
            initiates(tap_on, filling, T).
            terminates(tap_off, filling, T).
            trajectory(filling, T1, level(X), T2) :- X .=. T2 - T1.
            happens(tap_on, 10).
            happens(tap_off, 20).
        ");
        let out = ask(&p, "holdsAt(level(X), 14)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        assert_eq!(binding(&ans[0], "X"), &Term::num(rat(4)));

        // after the stop the trajectory no longer yields values
        let out = ask(&p, "holdsAt(level(X), 25)");
        assert_eq!(answers(&out).len(), 0);

        let world = crate::ground::GroundWorld::new(p.rules(), &[]);
        let vals = world.holding_matching(&Term::app("level", vec![Term::Var(0)]), &rat(14));
        assert_eq!(vals, vec![Term::app("level", vec![Term::num(rat(4))])]);
    }

    #[test]
    fn control_fluent_variant_requires_the_named_fluent() {
        let p = prog("
            fluent(filling).
            fluent(draining).
            fluent(level(X)).
            event(tap_on).
            initiates(tap_on, filling, T).
            trajectory(filling, T1, level(X), T2) :- X .=. T2 - T1.
            happens(tap_on, 10).
        ");
        let out = ask(&p, "holdsAt(level(X), 14, filling)");
        assert_eq!(answers(&out).len(), 1);
        assert_eq!(binding(&answers(&out)[0], "X"), &Term::num(rat(4)));
        // a declared fluent with no matching trajectory yields nothing
        let out = ask(&p, "holdsAt(level(X), 14, draining)");
        assert_eq!(answers(&out).len(), 0);
        // an undeclared third argument is a type error
        let out = ask(&p, "holdsAt(level(X), 14, nonsense)");
        match out.verdict {
            QueryVerdict::Halted(Halt::TypeError(_)) => {}
            other => panic!("expected type error, got {other:?}"),
        }
    }

    #[test]
    fn delayed_variant_measures_stability() {
        let p = prog(LIGHT);
        // light was initiated at 10 and ran unstopped for 6 units: holds at 16
        let out = ask(&p, "holdsAt(light, 16, 6)");
        assert_eq!(answers(&out).len(), 1);
        // a 12-unit run would end at 22, after the termination at 20
        let out = ask(&p, "holdsAt(light, 22, 12)");
        assert_eq!(answers(&out).len(), 0);
        // open interval: a termination at exactly the endpoint does not
        // cancel the run (mirrors the base axiom, where a terminator at t
        // does not stop t itself)
        let out = ask(&p, "holdsAt(light, 20, 10)");
        assert_eq!(answers(&out).len(), 1);
        // free duration: residual links T2 = 10 + D with D in (0, 10]
        let out = ask(&p, "holdsAt(light, T2, D)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        let d_root = match binding(&ans[0], "D") {
            Term::Var(v) => *v,
            other => panic!("unexpected {other:?}"),
        };
        let b = ans[0].store.bounds_of(d_root);
        assert_eq!(b.lower.unwrap().value, rat(0));
        assert_eq!(b.upper.unwrap().value, rat(10));
    }

    #[test]
    fn invalid_duration_is_reported() {
        let p = prog(LIGHT);
        let out = ask(&p, "holdsAt(light, 16, 0)");
        match out.verdict {
            QueryVerdict::Halted(Halt::InvalidDuration(_)) => {}
            other => panic!("expected invalid duration, got {other:?}"),
        }
        let out = ask(&p, "D .<. 0, holdsAt(light, 16, D)");
        match out.verdict {
            QueryVerdict::Halted(Halt::InvalidDuration(_)) => {}
            other => panic!("expected invalid duration, got {other:?}"),
        }
    }

    #[test]
    fn not_happens_splits_the_timeline() {
        let p = prog("event(e). event(f). happens(e, 10). happens(f, 30).");
        let out = ask(&p, "not_happens(e, T)");
        let ans = answers(&out);
        // two branches: T < 10 and T > 10
        assert_eq!(ans.len(), 2);
        let roots: Vec<VarId> = ans
            .iter()
            .map(|a| match binding(a, "T") {
                Term::Var(v) => *v,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        let b0 = ans[0].store.bounds_of(roots[0]);
        assert_eq!(b0.upper, Some(crate::store::BoundVal { value: rat(10), strict: true }));
        let b1 = ans[1].store.bounds_of(roots[1]);
        assert_eq!(b1.lower, Some(crate::store::BoundVal { value: rat(10), strict: true }));
        // a pinned occurrence time cannot be excluded
        let out = ask(&p, "not_happens(e, 10)");
        assert_eq!(answers(&out).len(), 0);
        // unrelated events do not constrain the time
        let out = ask(&p, "T .=. 10, not_happens(f, T)");
        assert_eq!(answers(&out).len(), 1);
    }

    #[test]
    fn trace_reports_clause_order() {
        let (tx, rx) = std::sync::mpsc::channel();
        let p = prog(LIGHT);
        let _ = ask_with(
            &p,
            "holdsAt(light, 15)",
            EngineConfig {
                trace: Some(tx),
                ..EngineConfig::default()
            },
        );
        let events: Vec<TraceEvent> = rx.try_iter().collect();
        let tags: Vec<&'static str> = events.iter().map(|e| e.clause).collect();
        let initially = tags.iter().position(|t| *t == "holdsAt/2 initially");
        let initiated = tags.iter().position(|t| *t == "holdsAt/2 initiated");
        assert!(initially.is_some() && initiated.is_some());
        assert!(initially.unwrap() < initiated.unwrap());
        // the initiated-clause body leads with the range guards, then
        // candidate gating, occurrence, effect, and the interval negation
        let body = &events[initiated.unwrap()].body;
        assert!(body[0].contains(".>."), "guard first: {body:?}");
        assert!(body[2].contains("can_initiates"), "{body:?}");
        assert!(body[3].contains("happens"), "{body:?}");
        assert!(body[4].contains("initiates"), "{body:?}");
        assert!(body[5].contains("not_stoppedIn"), "{body:?}");
    }

    #[test]
    fn scaling_probe() {
        let p = prog(SELF_FEE);
        for limit in [500u64, 1000, 2000, 4000] {
            let start = std::time::Instant::now();
            let out = ask_with(
                &p,
                "T .>. 0, T .=<. 100, happens(serviceFee(F), T)",
                EngineConfig { depth_limit: limit, ..EngineConfig::default() },
            );
            println!(
                "depth {limit}: {:?} nodes={} verdict={:?}",
                start.elapsed(),
                out.nodes,
                matches!(out.verdict, QueryVerdict::Halted(Halt::DepthExhausted { .. }))
            );
        }
    }

    #[test]
    fn rationals_stay_exact_through_derivations() {
        let p = prog("
            fluent(f).
            event(a).
            event(b).
            initiates(a, f, T).
            terminates(b, f, T).
            happens(a, 1/3).
            happens(b, 2/3).
        ");
        let out = ask(&p, "holdsAt(f, T)");
        let ans = answers(&out);
        assert_eq!(ans.len(), 1);
        let t_root = match binding(&ans[0], "T") {
            Term::Var(v) => *v,
            other => panic!("unexpected {other:?}"),
        };
        let b = ans[0].store.bounds_of(t_root);
        assert_eq!(format_rat(&b.lower.unwrap().value), "1/3");
        assert_eq!(format_rat(&b.upper.unwrap().value), "2/3");
    }
}
