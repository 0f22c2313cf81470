//! Built-in goal expansions for the state-evolution predicate family.
//!
//! Each variant of `holdsAt` / `not_holdsAt` expands into a fixed literal
//! sequence executed by the ordinary solve loop; the order of those literals
//! (range guards first, then candidate gating, then the occurrence, then the
//! effect body, then the interval negation) is part of the reasoner's
//! contract and is exercised by trace-based conformance tests.
//!
//! Candidate gating literals (`can_initiates` etc.) are emitted only when the
//! program actually has clauses for them, so a program loaded without the
//! candidate preprocessing still runs on the bare axioms.

use super::*;
use crate::rational::Rat;
use crate::syntax::{Constraint, LinExpr, Literal, RelOp, Term};
use crate::zeno;
use num_traits::Zero;

fn ct(op: RelOp, lhs: LinExpr, rhs: LinExpr) -> Literal {
    Literal::Constraint(Constraint::new(op, lhs, rhs))
}

fn atom(name: &str, args: Vec<Term>) -> Literal {
    Literal::Atom(Term::app(name, args))
}

fn neg(name: &str, args: Vec<Term>) -> Literal {
    Literal::NegatedBuiltin(Term::app(name, args))
}

/// Ground-variant loop check shared by the positive family: a goal that is
/// fully ground and identical to an in-progress ancestor goal cannot
/// contribute a new proof and fails finitely.
enum Entered {
    /// Ground goal already on the ancestor chain: fail this branch.
    Blocked,
    /// Ground goal pushed; the caller must append a pop marker so the entry
    /// is dropped once the goal's own derivation completes (it must not leak
    /// into sibling goals of the surrounding conjunction).
    Pushed,
    /// Not ground at entry: nothing recorded.
    Skipped,
}

fn enter_positive(goal: &Term, state: &mut State) -> Entered {
    if let Some(g) = canonical_ground(goal, state) {
        if state.positive_goals.iter().any(|a| *a == g) {
            return Entered::Blocked;
        }
        state.positive_goals = state.positive_goals.cons(g);
        Entered::Pushed
    } else {
        Entered::Skipped
    }
}

/// Continuation extended with the scope marker matching a `Pushed` entry.
fn guard_rest(rest: &Goals, entered: &Entered) -> Goals {
    match entered {
        Entered::Pushed => rest.cons(Literal::Atom(Term::atom(POP_POSITIVE))),
        _ => rest.clone(),
    }
}

fn try_clauses(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    emit: Emit,
    clauses: &mut [(&'static str, Option<Vec<Literal>>, State)],
) -> Flow {
    for (tag, body, st) in clauses.iter_mut() {
        let body = match body.take() {
            Some(b) => b,
            None => continue,
        };
        rc.trace(|| TraceEvent {
            goal: display_goal(goal),
            clause: tag,
            body: body
                .iter()
                .map(|l| crate::syntax::display_literal(l, &|v| format!("_G{v}")))
                .collect(),
        });
        match solve(rc, &push_goals(rest, &body), st.clone(), emit) {
            Flow::Continue => {}
            stop => return stop,
        }
    }
    Flow::Continue
}

fn gate(rc: &RunCtx, pred: &'static str, arity: usize, args: Vec<Term>, out: &mut Vec<Literal>) {
    if rc.program.has_clauses(pred, arity) {
        out.push(atom(pred, args));
    }
}

// ---------------------------------------------------------------------------
// happens/2
// ---------------------------------------------------------------------------

pub(crate) fn solve_happens(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    mut state: State,
    emit: Emit,
) -> Flow {
    let entered = enter_positive(goal, &mut state);
    if matches!(entered, Entered::Blocked) {
        return Flow::Continue;
    }
    let rest = &guard_rest(rest, &entered);
    let (event, time) = match goal {
        Term::App(_, args) => (args[0].clone(), args[1].clone()),
        _ => return Flow::Continue,
    };
    if state.in_refutation == 0 {
        state.fragment = state.fragment.cons((event.clone(), time.clone()));
    }

    // Resolve clause by clause so the Zeno guard sees the event after head
    // unification, when its arguments are maximally bound; an expansion-time
    // record would compare fresh, unbound argument variables across chain
    // levels and never match.
    let clauses: Vec<_> = rc.program.clauses_for("happens", 2).cloned().collect();
    for rule in clauses {
        let mut st = state.clone();
        let base = st.next_var;
        st.next_var += rule.num_vars();
        let offset = |v: crate::syntax::VarId| base + v;
        let head = rule.head.map_vars(&offset);
        if !unify(goal, &head, &mut st) {
            continue;
        }
        if rc.config.zeno_halt {
            if let Term::Var(v) = walk_root(&time, &st.subst) {
                if st.store.pinned_value(v).is_none() {
                    let record = zeno::HappensRecord {
                        event: deref_deep(&event, &st),
                        time_var: v,
                        bounds: st.store.bounds_of(v),
                    };
                    if let Some(report) =
                        zeno::detect(st.happens_chain.iter(), &record, &st.store)
                    {
                        return Flow::Stop(StopCause::Halted(Halt::Zeno(report)));
                    }
                    st.happens_chain = st.happens_chain.cons(record);
                }
            }
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
// holdsAt/2..4
// ---------------------------------------------------------------------------

pub(crate) fn solve_holds_at(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    mut state: State,
    emit: Emit,
) -> Flow {
    let entered = enter_positive(goal, &mut state);
    if matches!(entered, Entered::Blocked) {
        return Flow::Continue;
    }
    let rest = &guard_rest(rest, &entered);
    let args = match goal {
        Term::App(_, args) => args.clone(),
        _ => return Flow::Continue,
    };
    match args.len() {
        2 => holds_at_2(rc, goal, &args[0], &args[1], rest, state, emit),
        3 => match deref_deep(&args[2], &state) {
            arg @ Term::App(..) => {
                if rc.program.is_declared_fluent(&arg) {
                    holds_at_cf(rc, goal, &args[0], &args[1], &arg, None, rest, state, emit)
                } else {
                    Flow::Stop(StopCause::Halted(Halt::TypeError(format!(
                        "third argument of holdsAt/3 must be a declared fluent or a duration, \
                         got {}",
                        display_goal(&arg)
                    ))))
                }
            }
            _ => holds_at_delayed(rc, goal, &args[0], &args[1], None, &args[2], rest, state, emit),
        },
        4 => {
            // Two readings: holdsAt(F, T2, CF, Dur) with a declared control
            // fluent third, or holdsAt(F, T2, Dur, E) with a declared event
            // fourth anchoring the initiation.
            let third = deref_deep(&args[2], &state);
            if matches!(third, Term::App(..)) && rc.program.is_declared_fluent(&third) {
                holds_at_cf(
                    rc,
                    goal,
                    &args[0],
                    &args[1],
                    &third,
                    Some(&args[3]),
                    rest,
                    state,
                    emit,
                )
            } else {
                let fourth = deref_deep(&args[3], &state);
                if matches!(fourth, Term::App(..)) && rc.program.is_declared_event(&fourth) {
                    holds_at_delayed(
                        rc,
                        goal,
                        &args[0],
                        &args[1],
                        Some(&fourth),
                        &args[2],
                        rest,
                        state,
                        emit,
                    )
                } else {
                    Flow::Stop(StopCause::Halted(Halt::TypeError(format!(
                        "holdsAt/4 needs a declared control fluent as third argument or a \
                         declared event as fourth argument, got {} and {}",
                        display_goal(&third),
                        display_goal(&fourth)
                    ))))
                }
            }
        }
        _ => Flow::Continue,
    }
}

fn holds_at_2(
    rc: &RunCtx,
    goal: &Term,
    fluent: &Term,
    time: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let time_lin = match linexpr_of_term(time, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };

    // (a) held initially and was never stopped since 0
    let st_a = state.clone();
    let body_a = vec![
        atom("initiallyP", vec![fluent.clone()]),
        neg(
            "not_stoppedIn",
            vec![Term::num(Rat::zero()), fluent.clone(), time.clone()],
        ),
    ];

    // (b) initiated by an earlier occurrence and not stopped since
    let mut st_b = state.clone();
    let t1 = st_b.fresh_var();
    let ev = st_b.fresh_var();
    let mut body_b = vec![
        ct(RelOp::Gt, LinExpr::var(t1), LinExpr::constant(Rat::zero())),
        ct(RelOp::Lt, LinExpr::var(t1), time_lin.clone()),
    ];
    gate(
        rc,
        "can_initiates",
        3,
        vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        &mut body_b,
    );
    body_b.extend([
        atom("happens", vec![Term::Var(ev), Term::Var(t1)]),
        atom(
            "initiates",
            vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        ),
        neg(
            "not_stoppedIn",
            vec![Term::Var(t1), fluent.clone(), time.clone()],
        ),
    ]);

    // (c) value carried by a trajectory of an initiated control fluent
    let mut st_c = state.clone();
    let t1c = st_c.fresh_var();
    let evc = st_c.fresh_var();
    let f1 = st_c.fresh_var();
    let mut body_c = vec![
        ct(RelOp::Gt, LinExpr::var(t1c), LinExpr::constant(Rat::zero())),
        ct(RelOp::Lt, LinExpr::var(t1c), time_lin),
    ];
    gate(
        rc,
        "can_trajectory",
        4,
        vec![
            Term::Var(f1),
            Term::Var(t1c),
            fluent.clone(),
            time.clone(),
        ],
        &mut body_c,
    );
    gate(
        rc,
        "can_initiates",
        3,
        vec![Term::Var(evc), Term::Var(f1), Term::Var(t1c)],
        &mut body_c,
    );
    body_c.extend([
        atom("happens", vec![Term::Var(evc), Term::Var(t1c)]),
        atom(
            "initiates",
            vec![Term::Var(evc), Term::Var(f1), Term::Var(t1c)],
        ),
        atom(
            "trajectory",
            vec![
                Term::Var(f1),
                Term::Var(t1c),
                fluent.clone(),
                time.clone(),
            ],
        ),
        neg(
            "not_stoppedIn",
            vec![Term::Var(t1c), Term::Var(f1), time.clone()],
        ),
    ]);

    try_clauses(
        rc,
        goal,
        rest,
        emit,
        &mut [
            ("holdsAt/2 initially", Some(body_a), st_a),
            ("holdsAt/2 initiated", Some(body_b), st_b),
            ("holdsAt/2 trajectory", Some(body_c), st_c),
        ],
    )
}

/// Duration guard common to the delayed variants: numeric durations must be
/// positive, unbound durations get `Dur > 0` asserted by the synthesized
/// body, and a store already entailing `Dur =< 0` is a hard input error.
fn check_duration(dur: &Term, state: &State) -> Result<(), Flow> {
    match walk_root(dur, &state.subst) {
        Term::Num(d) => {
            if d <= Rat::zero() {
                return Err(Flow::Stop(StopCause::Halted(Halt::InvalidDuration(
                    format!("duration {} is not positive", crate::rational::format_rat(&d)),
                ))));
            }
        }
        Term::Var(v) => {
            let le_zero = Constraint::new(RelOp::Le, LinExpr::var(v), LinExpr::constant(Rat::zero()));
            if state.store.is_registered(v) && state.store.entails(&le_zero) {
                return Err(Flow::Stop(StopCause::Halted(Halt::InvalidDuration(
                    "duration variable is constrained to be non-positive".to_string(),
                ))));
            }
        }
        Term::App(..) => {
            return Err(Flow::Stop(StopCause::Halted(Halt::TypeError(
                "duration argument must be numeric".to_string(),
            ))));
        }
    }
    Ok(())
}

/// Control-fluent variants: `holdsAt(F, T2, CF)` and `holdsAt(F, T2, CF, Dur)`.
/// The value of `F` at `T2` comes from a trajectory of the given control
/// fluent `CF`, which must have been initiated and not stopped before `T2`
/// (open interval: stopping exactly at `T2` does not cancel the value).
#[allow(clippy::too_many_arguments)]
fn holds_at_cf(
    rc: &RunCtx,
    goal: &Term,
    fluent: &Term,
    time: &Term,
    cf: &Term,
    dur: Option<&Term>,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let time_lin = match linexpr_of_term(time, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let mut st = state.clone();
    let t1 = st.fresh_var();
    let ev = st.fresh_var();
    let mut body = Vec::new();
    let tag;
    if let Some(dur) = dur {
        if let Err(stop) = check_duration(dur, &st) {
            return stop;
        }
        let dur_lin = match linexpr_of_term(dur, &st) {
            Some(e) => e,
            None => return Flow::Continue,
        };
        tag = "holdsAt/4 control-fluent";
        body.push(ct(
            RelOp::Eq,
            time_lin,
            LinExpr::var(t1).add(&dur_lin),
        ));
        body.push(ct(RelOp::Gt, dur_lin, LinExpr::constant(Rat::zero())));
        body.push(ct(
            RelOp::Gt,
            LinExpr::var(t1),
            LinExpr::constant(Rat::zero()),
        ));
    } else {
        tag = "holdsAt/3 control-fluent";
        body.push(ct(
            RelOp::Gt,
            LinExpr::var(t1),
            LinExpr::constant(Rat::zero()),
        ));
        body.push(ct(RelOp::Lt, LinExpr::var(t1), time_lin));
    }
    gate(
        rc,
        "can_trajectory",
        4,
        vec![cf.clone(), Term::Var(t1), fluent.clone(), time.clone()],
        &mut body,
    );
    gate(
        rc,
        "can_initiates",
        3,
        vec![Term::Var(ev), cf.clone(), Term::Var(t1)],
        &mut body,
    );
    body.extend([
        atom("happens", vec![Term::Var(ev), Term::Var(t1)]),
        atom("initiates", vec![Term::Var(ev), cf.clone(), Term::Var(t1)]),
        atom(
            "trajectory",
            vec![cf.clone(), Term::Var(t1), fluent.clone(), time.clone()],
        ),
        neg(
            "not_stoppedIn",
            vec![Term::Var(t1), cf.clone(), time.clone()],
        ),
    ]);
    try_clauses(rc, goal, rest, emit, &mut [(tag, Some(body), st)])
}

/// Delayed-stability variants: `holdsAt(F, T2, Dur)` and
/// `holdsAt(F, T2, Dur, E)`. `F` was initiated at `T1 = T2 - Dur` (by the
/// given event in the 4-ary form) and ran unstopped through the open
/// interval `(T1, T2)`. The interval is open on both ends for the same
/// reason the base persistence axiom's is: a terminator at exactly `T2`
/// does not stop `T2` itself. Closing the right end would also make a rule
/// that triggers an event off this predicate and terminates the same
/// fluent at `T2` into its own stopper, which has no consistent reading.
/// Anchored at an initiation: no initially branch.
#[allow(clippy::too_many_arguments)]
fn holds_at_delayed(
    rc: &RunCtx,
    goal: &Term,
    fluent: &Term,
    time: &Term,
    event: Option<&Term>,
    dur: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let time_lin = match linexpr_of_term(time, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    if let Err(stop) = check_duration(dur, &state) {
        return stop;
    }
    let dur_lin = match linexpr_of_term(dur, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let mut st = state.clone();
    let t1 = st.fresh_var();
    let (ev, tag) = match event {
        Some(e) => (e.clone(), "holdsAt/4 event-delay"),
        None => (Term::Var(st.fresh_var()), "holdsAt/3 delay"),
    };
    let mut body = vec![
        ct(RelOp::Eq, time_lin, LinExpr::var(t1).add(&dur_lin)),
        ct(RelOp::Gt, dur_lin, LinExpr::constant(Rat::zero())),
        ct(
            RelOp::Gt,
            LinExpr::var(t1),
            LinExpr::constant(Rat::zero()),
        ),
    ];
    gate(
        rc,
        "can_initiates",
        3,
        vec![ev.clone(), fluent.clone(), Term::Var(t1)],
        &mut body,
    );
    body.extend([
        atom("happens", vec![ev.clone(), Term::Var(t1)]),
        atom("initiates", vec![ev, fluent.clone(), Term::Var(t1)]),
        neg(
            "not_stoppedIn",
            vec![Term::Var(t1), fluent.clone(), time.clone()],
        ),
    ]);
    try_clauses(rc, goal, rest, emit, &mut [(tag, Some(body), st)])
}

// ---------------------------------------------------------------------------
// not_holdsAt/2..3 (constructive)
// ---------------------------------------------------------------------------

pub(crate) fn solve_not_holds_at(
    rc: &RunCtx,
    goal: &Term,
    rest: &Goals,
    mut state: State,
    emit: Emit,
) -> Flow {
    let entered = enter_positive(goal, &mut state);
    if matches!(entered, Entered::Blocked) {
        return Flow::Continue;
    }
    let rest = &guard_rest(rest, &entered);
    let args = match goal {
        Term::App(_, args) => args.clone(),
        _ => return Flow::Continue,
    };
    match args.len() {
        2 => not_holds_at_2(rc, goal, &args[0], &args[1], rest, state, emit),
        3 => not_holds_at_delayed(rc, goal, &args[0], &args[1], &args[2], rest, state, emit),
        _ => Flow::Continue,
    }
}

fn not_holds_at_2(
    rc: &RunCtx,
    goal: &Term,
    fluent: &Term,
    time: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let time_lin = match linexpr_of_term(time, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };

    // (a) false initially and never started since 0
    let st_a = state.clone();
    let body_a = vec![
        atom("initiallyN", vec![fluent.clone()]),
        neg(
            "not_startedIn",
            vec![Term::num(Rat::zero()), fluent.clone(), time.clone()],
        ),
    ];

    // (b) terminated by an earlier occurrence and never restarted
    let mut st_b = state.clone();
    let t1 = st_b.fresh_var();
    let ev = st_b.fresh_var();
    let mut body_b = vec![
        ct(RelOp::Gt, LinExpr::var(t1), LinExpr::constant(Rat::zero())),
        ct(RelOp::Lt, LinExpr::var(t1), time_lin),
    ];
    gate(
        rc,
        "can_terminates",
        3,
        vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        &mut body_b,
    );
    body_b.extend([
        atom("happens", vec![Term::Var(ev), Term::Var(t1)]),
        atom(
            "terminates",
            vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        ),
        neg(
            "not_startedIn",
            vec![Term::Var(t1), fluent.clone(), time.clone()],
        ),
    ]);

    try_clauses(
        rc,
        goal,
        rest,
        emit,
        &mut [
            ("not_holdsAt/2 initially", Some(body_a), st_a),
            ("not_holdsAt/2 terminated", Some(body_b), st_b),
        ],
    )
}

/// `not_holdsAt(F, T2, Dur)`: `F` was terminated at `T1 = T2 - Dur` and not
/// restarted through the open interval `(T1, T2)`; an initiation at exactly
/// `T2` takes effect only after `T2`, so it does not count. Anchored at a
/// termination: no initially branch.
fn not_holds_at_delayed(
    rc: &RunCtx,
    goal: &Term,
    fluent: &Term,
    time: &Term,
    dur: &Term,
    rest: &Goals,
    state: State,
    emit: Emit,
) -> Flow {
    let time_lin = match linexpr_of_term(time, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    if let Err(stop) = check_duration(dur, &state) {
        return stop;
    }
    let dur_lin = match linexpr_of_term(dur, &state) {
        Some(e) => e,
        None => return Flow::Continue,
    };
    let mut st = state.clone();
    let t1 = st.fresh_var();
    let ev = st.fresh_var();
    let mut body = vec![
        ct(RelOp::Eq, time_lin, LinExpr::var(t1).add(&dur_lin)),
        ct(RelOp::Gt, dur_lin, LinExpr::constant(Rat::zero())),
        ct(
            RelOp::Gt,
            LinExpr::var(t1),
            LinExpr::constant(Rat::zero()),
        ),
    ];
    gate(
        rc,
        "can_terminates",
        3,
        vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        &mut body,
    );
    body.extend([
        atom("happens", vec![Term::Var(ev), Term::Var(t1)]),
        atom(
            "terminates",
            vec![Term::Var(ev), fluent.clone(), Term::Var(t1)],
        ),
        neg(
            "not_startedIn",
            vec![Term::Var(t1), fluent.clone(), time.clone()],
        ),
    ]);
    try_clauses(
        rc,
        goal,
        rest,
        emit,
        &mut [("not_holdsAt/3 delay", Some(body), st)],
    )
}
