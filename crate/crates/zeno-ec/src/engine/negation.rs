//! Constructive negation by refutation with complement splitting.
//!
//! `not_stoppedIn(T1, F, T2)` (and friends) succeeds when every candidate
//! occurrence that could change `F` strictly inside the interval is excluded.
//! Candidates are enumerated as answers to a positive goal; they come back
//! with constraint stores that bound the candidate time. Each candidate is
//! then excluded by a case split asserted on the *caller's* store: either the
//! interval start lies at or after the candidate region (`T1 >= hi`) or the
//! interval end lies at or before it (`T2 =< lo`). A candidate with no
//! consistent exclusion branch refutes the negation.
//!
//! Self-supporting models (an event whose own effect feeds its next trigger)
//! would make the candidate enumeration recurse forever. When a nested
//! negation call matches an enclosing refutation in progress — same kind,
//! same interval start, same fluent skeleton — the engine provisionally
//! assumes the enclosing exclusion will succeed and applies the split
//! immediately. If neither split branch is consistent the assumption is
//! abandoned and the nested negation unfolds normally, which reproduces the
//! divergence in a form the Zeno-chain guard can recognize. Candidates that
//! were derived under such an assumption and then turn out to be
//! unexcludable are re-enumerated with the assumption disabled before the
//! negation is allowed to fail.

use super::*;
use crate::store::{BoundVal, Row, RowOp, VarBounds};
use crate::syntax::{Constraint, LinExpr, Literal, RelOp, Term};

fn row_to_constraint(row: &Row) -> Constraint {
    let op = match row.op {
        RowOp::Eq => RelOp::Eq,
        RowOp::Le => RelOp::Le,
        RowOp::Lt => RelOp::Lt,
    };
    Constraint::new(op, row.delta.clone(), LinExpr::constant(Rat::from_integer(0.into())))
}

/// Bounds of the candidate time variable in a given state (the variable may
/// have been unified with a number or another variable).
fn time_bounds(tc: VarId, subst: &Subst, store: &ConstraintStore) -> VarBounds {
    match walk_root(&Term::Var(tc), subst) {
        Term::Num(r) => VarBounds {
            lower: Some(BoundVal {
                value: r.clone(),
                strict: false,
            }),
            upper: Some(BoundVal {
                value: r,
                strict: false,
            }),
        },
        Term::Var(w) => store.bounds_of(w),
        Term::App(..) => VarBounds::default(),
    }
}

/// Run a goal list in refutation mode, collecting every answer state.
fn enumerate(
    rc: &RunCtx,
    goals: &[Literal],
    base: State,
) -> Result<Vec<State>, StopCause> {
    let mut answers: Vec<State> = Vec::new();
    let flow = solve(
        rc,
        &push_goals(&ArcList::new(), goals),
        base,
        &mut |st: &State| {
            answers.push(st.clone());
            Flow::Continue
        },
    );
    match flow {
        Flow::Continue | Flow::Stop(StopCause::Enough) => Ok(answers),
        Flow::Stop(stop) => Err(stop),
    }
}

// ---------------------------------------------------------------------------
// Interval negation: not_stoppedIn / not_startedIn, open and closed
// ---------------------------------------------------------------------------

struct IntervalNeg {
    t1: Term,
    t2: Term,
    closed: bool,
}

impl IntervalNeg {
    /// `T1 >= hi`: the candidate region lies entirely at or before the
    /// interval start.
    fn low_side_row(&self, hi: &BoundVal, st: &State) -> Option<Constraint> {
        let t1 = linexpr_of_term(&self.t1, st)?;
        Some(Constraint::new(
            RelOp::Ge,
            t1,
            LinExpr::constant(hi.value.clone()),
        ))
    }

    /// The interval end lies at or before the candidate region. For the open
    /// interval `T2 =< lo` always suffices; for the closed end `(T1, T2]` the
    /// candidate must stay strictly above `T2`, so a candidate that can reach
    /// `lo` itself needs `T2 < lo`.
    fn high_side_row(&self, lo: &BoundVal, st: &State) -> Option<Constraint> {
        let t2 = linexpr_of_term(&self.t2, st)?;
        let op = if self.closed && !lo.strict {
            RelOp::Lt
        } else {
            RelOp::Le
        };
        Some(Constraint::new(op, t2, LinExpr::constant(lo.value.clone())))
    }
}

pub(crate) fn solve_interval_negation(
    rc: &RunCtx,
    kind: NegKind,
    closed: bool,
    goal: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let args = match goal {
        Term::App(_, args) => args.clone(),
        _ => return Flow::Continue,
    };
    let (t1, fluent, t2) = (&args[0], &args[1], &args[2]);

    // Provisional assumption: inside a matching refutation, apply the outer
    // exclusion split now instead of unfolding.
    let t1_val = match walk_root(t1, &state.subst) {
        Term::Num(r) => Some(CtxVal::Num(r)),
        Term::Var(v) => Some(CtxVal::Var(v)),
        Term::App(..) => None,
    };
    if let Some(t1_val) = t1_val {
        let skel = skeleton_of(&deref_deep(fluent, &state));
        let ctx = state.refutation_ctxs.iter().find(|c| {
            c.kind == kind
                && c.closed == closed
                && !state.disabled_ctxs.contains(&c.id)
                && c.t1_value == t1_val
                && c.skeleton == skel
        });
        if let Some(ctx) = ctx {
            let ctx = ctx.clone();
            let spec = IntervalNeg {
                t1: ctx.t1.clone(),
                t2: ctx.t2.clone(),
                closed: ctx.closed,
            };
            let bounds = time_bounds(ctx.tc, &state.subst, &state.store);
            let mut attempted = false;
            if let Some(hi) = &bounds.upper {
                if let Some(row) = spec.low_side_row(hi, &state) {
                    let mut st = state.clone();
                    if st.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
                        attempted = true;
                        st.used_hypothesis.insert(ctx.id);
                        match solve(rc, rest, st, emit) {
                            Flow::Continue => {}
                            stop => return stop,
                        }
                    }
                }
            }
            if let Some(lo) = &bounds.lower {
                if let Some(row) = spec.high_side_row(lo, &state) {
                    let mut st = state.clone();
                    if st.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
                        attempted = true;
                        st.used_hypothesis.insert(ctx.id);
                        match solve(rc, rest, st, emit) {
                            Flow::Continue => {}
                            stop => return stop,
                        }
                    }
                }
            }
            if attempted {
                return Flow::Continue;
            }
            // No split branch is consistent: the candidate genuinely sits
            // inside the enclosing interval. Unfold normally below.
        }
    }

    interval_negation_core(rc, kind, closed, t1, fluent, t2, rest, state, emit)
}

#[allow(clippy::too_many_arguments)]
fn interval_negation_core(
    rc: &RunCtx,
    kind: NegKind,
    closed: bool,
    t1: &Term,
    fluent: &Term,
    t2: &Term,
    rest: &Goals,
    mut state: State,
    emit: Emit,
) -> Flow {
    let t1_lin = match linexpr_of_term(t1, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let t2_lin = match linexpr_of_term(t2, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };

    // Fast path: an empty interval has nothing to refute.
    if state
        .store
        .entails(&Constraint::new(RelOp::Le, t2_lin.clone(), t1_lin.clone()))
    {
        return solve(rc, rest, state, emit);
    }

    let tc = state.fresh_var();
    let families: &[(&'static str, &'static str)] = match kind {
        NegKind::Stopped => &[
            ("can_terminates", "terminates"),
            ("can_releases", "releases"),
        ],
        NegKind::Started => &[("can_initiates", "initiates")],
    };

    let ctx = RefutationCtx {
        id: rc.fresh_ctx_id(),
        kind,
        closed,
        t1_value: match walk_root(t1, &state.subst) {
            Term::Num(r) => CtxVal::Num(r),
            Term::Var(v) => CtxVal::Var(v),
            Term::App(..) => return Flow::Continue,
        },
        skeleton: skeleton_of(&deref_deep(fluent, &state)),
        tc,
        t1: t1.clone(),
        t2: t2.clone(),
    };

    let mut answers: Vec<State> = Vec::new();
    for (can_pred, pred) in families {
        let mut st = state.clone();
        st.in_refutation += 1;
        st.refutation_ctxs = st.refutation_ctxs.cons(ctx.clone());
        let ec = st.fresh_var();
        let mut goals = vec![
            Literal::Constraint(Constraint::new(RelOp::Gt, LinExpr::var(tc), t1_lin.clone())),
            Literal::Constraint(Constraint::new(
                if closed { RelOp::Le } else { RelOp::Lt },
                LinExpr::var(tc),
                t2_lin.clone(),
            )),
        ];
        if rc.program.has_clauses(can_pred, 3) {
            goals.push(Literal::Atom(Term::app(
                can_pred,
                vec![Term::Var(ec), fluent.clone(), Term::Var(tc)],
            )));
        }
        goals.push(Literal::Atom(Term::app(
            "happens",
            vec![Term::Var(ec), Term::Var(tc)],
        )));
        goals.push(Literal::Atom(Term::app(
            pred,
            vec![Term::Var(ec), fluent.clone(), Term::Var(tc)],
        )));
        rc.trace(|| TraceEvent {
            goal: format!(
                "{}({}, {}, {}{}",
                match kind {
                    NegKind::Stopped => "not_stoppedIn",
                    NegKind::Started => "not_startedIn",
                },
                display_goal(t1),
                display_goal(fluent),
                display_goal(t2),
                if closed { "] (closed)" } else { ")" }
            ),
            clause: pred,
            body: goals
                .iter()
                .map(|l| crate::syntax::display_literal(l, &|v| format!("_G{v}")))
                .collect(),
        });
        match enumerate(rc, &goals, st) {
            Ok(mut found) => answers.append(&mut found),
            Err(stop) => return Flow::Stop(stop),
        }
    }

    // Fresh-variable counters advanced inside the enumeration; skip past them
    // so continuation variables cannot collide with candidate-store rows.
    let base_rows = state.store.rows().len();
    let mut branch0 = state;
    for ans in &answers {
        branch0.next_var = branch0.next_var.max(ans.next_var);
    }

    let spec = IntervalNeg {
        t1: t1.clone(),
        t2: t2.clone(),
        closed,
    };
    process_interval(
        rc, &answers, base_rows, 0, tc, &spec, kind, fluent, branch0, rest, emit,
    )
}

/// Exclude candidates one at a time, branching on the complement split.
/// Each branch narrows the caller's store, which can render later candidates
/// dead; liveness is re-checked by re-asserting the candidate's rows.
/// `base_rows` counts the rows the enumeration started from; answer stores
/// share that prefix with every branch store, so only the suffix a
/// candidate added needs re-asserting.
#[allow(clippy::too_many_arguments)]
fn process_interval(
    rc: &RunCtx,
    answers: &[State],
    base_rows: usize,
    k: usize,
    tc: VarId,
    spec: &IntervalNeg,
    kind: NegKind,
    fluent: &Term,
    branch: State,
    rest: &Goals,
    emit: Emit,
) -> Flow {
    let ans = match answers.get(k) {
        None => return solve(rc, rest, branch, emit),
        Some(a) => a,
    };

    let mut merged = branch.store.clone();
    let mut dead = false;
    for row in ans.store.rows().iter().skip(base_rows) {
        if merged.assert_constraint(&row_to_constraint(row)) == crate::store::AssertResult::Failed {
            dead = true;
            break;
        }
    }
    if dead {
        return process_interval(
            rc, answers, base_rows, k + 1, tc, spec, kind, fluent, branch, rest, emit,
        );
    }

    let bounds = time_bounds(tc, &ans.subst, &merged);
    let mut any_branch = false;
    if let Some(hi) = &bounds.upper {
        if let Some(row) = spec.low_side_row(hi, &branch) {
            let mut bs = branch.clone();
            if bs.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
                any_branch = true;
                match process_interval(
                    rc, answers, base_rows, k + 1, tc, spec, kind, fluent, bs, rest, emit,
                ) {
                    Flow::Continue => {}
                    stop => return stop,
                }
            }
        }
    }
    if let Some(lo) = &bounds.lower {
        if let Some(row) = spec.high_side_row(lo, &branch) {
            let mut bs = branch.clone();
            if bs.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
                any_branch = true;
                match process_interval(
                    rc, answers, base_rows, k + 1, tc, spec, kind, fluent, bs, rest, emit,
                ) {
                    Flow::Continue => {}
                    stop => return stop,
                }
            }
        }
    }
    if any_branch {
        return Flow::Continue;
    }

    // Unexcludable candidate. If its derivation leaned on a provisional
    // assumption, re-run the refutation with that assumption disabled; a
    // candidate that still cannot be excluded then genuinely refutes the
    // negation.
    let assumed: std::collections::BTreeSet<u64> = ans
        .used_hypothesis
        .difference(&branch.disabled_ctxs)
        .copied()
        .collect();
    if !assumed.is_empty() {
        let mut retry = branch;
        retry.disabled_ctxs.extend(assumed);
        return interval_negation_core(
            rc,
            kind,
            spec.closed,
            &spec.t1,
            fluent,
            &spec.t2,
            rest,
            retry,
            emit,
        );
    }
    Flow::Continue
}

// ---------------------------------------------------------------------------
// not_happens/2
// ---------------------------------------------------------------------------

/// Refute any occurrence of the event at exactly `T` by pushing `T` outside
/// every candidate occurrence region (below it or above it).
pub(crate) fn solve_not_happens(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    mut state: State,
    emit: Emit,
) -> Flow {
    let (event, t) = match goal {
        Term::App(_, args) => (args[0].clone(), args[1].clone()),
        _ => return Flow::Continue,
    };
    if linexpr_of_term(&t, &state).is_none() {
        return Flow::Continue;
    }

    // Coinductive success on an even loop: proving this refutation again
    // while it is already in progress (e.g. through an effect rule guarded
    // by the same not_happens) is consistent, not divergent.
    let ground_goal = canonical_ground(goal, &state);
    if let Some(g) = &ground_goal {
        if state.negative_goals.iter().any(|a| a == g) {
            return solve(rc, rest, state, emit);
        }
    }

    let tc = state.fresh_var();
    let mut st = state.clone();
    st.in_refutation += 1;
    if let Some(g) = ground_goal {
        st.negative_goals = st.negative_goals.cons(g);
    }
    let goals = vec![Literal::Atom(Term::app(
        "happens",
        vec![event.clone(), Term::Var(tc)],
    ))];
    rc.trace(|| TraceEvent {
        goal: format!("not_happens({}, {})", display_goal(&event), display_goal(&t)),
        clause: "happens",
        body: goals
            .iter()
            .map(|l| crate::syntax::display_literal(l, &|v| format!("_G{v}")))
            .collect(),
    });
    let answers = match enumerate(rc, &goals, st) {
        Ok(found) => found,
        Err(stop) => return Flow::Stop(stop),
    };
    let base_rows = state.store.rows().len();
    for ans in &answers {
        state.next_var = state.next_var.max(ans.next_var);
    }
    process_timepoint(rc, &answers, base_rows, 0, tc, &t, state, rest, emit)
}

#[allow(clippy::too_many_arguments)]
fn process_timepoint(
    rc: &RunCtx,
    answers: &[State],
    base_rows: usize,
    k: usize,
    tc: VarId,
    t: &Term,
    branch: State,
    rest: &Goals,
    emit: Emit,
) -> Flow {
    let ans = match answers.get(k) {
        None => return solve(rc, rest, branch, emit),
        Some(a) => a,
    };

    let mut merged = branch.store.clone();
    let mut dead = false;
    for row in ans.store.rows().iter().skip(base_rows) {
        if merged.assert_constraint(&row_to_constraint(row)) == crate::store::AssertResult::Failed {
            dead = true;
            break;
        }
    }
    if dead {
        return process_timepoint(rc, answers, base_rows, k + 1, tc, t, branch, rest, emit);
    }

    let bounds = time_bounds(tc, &ans.subst, &merged);
    let t_lin = match linexpr_of_term(t, &branch) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let mut any_branch = false;
    // T below the candidate region
    if let Some(lo) = &bounds.lower {
        let op = if lo.strict { RelOp::Le } else { RelOp::Lt };
        let row = Constraint::new(op, t_lin.clone(), LinExpr::constant(lo.value.clone()));
        let mut bs = branch.clone();
        if bs.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
            any_branch = true;
            match process_timepoint(rc, answers, base_rows, k + 1, tc, t, bs, rest, emit) {
                Flow::Continue => {}
                stop => return stop,
            }
        }
    }
    // T above the candidate region
    if let Some(hi) = &bounds.upper {
        let op = if hi.strict { RelOp::Ge } else { RelOp::Gt };
        let row = Constraint::new(op, t_lin.clone(), LinExpr::constant(hi.value.clone()));
        let mut bs = branch.clone();
        if bs.store.assert_constraint(&row) == crate::store::AssertResult::Consistent {
            any_branch = true;
            match process_timepoint(rc, answers, base_rows, k + 1, tc, t, bs, rest, emit) {
                Flow::Continue => {}
                stop => return stop,
            }
        }
    }
    // Whether alternatives were explored or the candidate was unexcludable,
    // this level is finished (an unexcludable candidate fails the negation).
    let _ = any_branch;
    Flow::Continue
}
