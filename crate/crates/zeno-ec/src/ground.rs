//! Ground-timeline evaluator, used as an independent oracle in tests.
//!
//! Given the model rules and a concrete list of event occurrences, this
//! module evaluates `holdsAt` / `not_holdsAt` questions at concrete times by
//! direct application of the state-evolution axioms: initial state, effect
//! rules, trajectories, and the stopped/started interval checks. It shares
//! no code with the goal-directed engine — no constraint store, no
//! resolution machinery — so agreement between the two is meaningful
//! evidence of correctness.
//!
//! Scope: effect-rule bodies may contain constraints (fully bound, or a
//! single unbound variable in an equality), `holdsAt/2`, `happens/2`,
//! `not_happens/2`, the interval negations with bound arguments, and plain
//! user predicates. This covers the whole example corpus.

use crate::rational::Rat;
use crate::syntax::{LinExpr, Literal, RelOp, Rule, Term, VarId};
use num_traits::Zero;
use std::collections::BTreeMap;

type Subst = BTreeMap<VarId, Term>;

/// Recursion guard for user-predicate resolution inside rule bodies.
const MAX_DEPTH: u32 = 64;

/// Rule-local variables are renamed into this range before unification so
/// they can never collide with caller pattern variables.
const FRESH_BASE: VarId = 1 << 24;

pub struct GroundWorld<'a> {
    rules: &'a [Rule],
    occurrences: Vec<(Term, Rat)>,
}

fn walk(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => match s.get(v) {
            Some(bound) => walk(bound, s),
            None => t.clone(),
        },
        Term::Num(_) => t.clone(),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| walk(a, s)).collect()),
    }
}

fn unify(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let a = walk(a, s);
    let b = walk(b, s);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), other) => {
            s.insert(*x, other.clone());
            true
        }
        (other, Term::Var(y)) => {
            s.insert(*y, other.clone());
            true
        }
        (Term::Num(p), Term::Num(q)) => p == q,
        (Term::App(f, fa), Term::App(g, ga)) => {
            f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(x, y)| unify(x, y, s))
        }
        _ => false,
    }
}

/// Evaluate a linear expression under a substitution. Returns the constant
/// part plus the list of unbound (var, coefficient) pairs.
fn eval_linexpr(e: &LinExpr, s: &Subst) -> Option<(Rat, Vec<(VarId, Rat)>)> {
    let mut constant = e.constant.clone();
    let mut free = Vec::new();
    for (v, c) in &e.terms {
        match walk(&Term::Var(*v), s) {
            Term::Num(r) => constant += c * r,
            Term::Var(w) => free.push((w, c.clone())),
            Term::App(..) => return None, // non-numeric term in arithmetic
        }
    }
    // merge duplicate free vars (aliased through the substitution)
    free.sort_by_key(|(v, _)| *v);
    free.dedup_by(|(v2, c2), (v1, c1)| {
        if v1 == v2 {
            *c1 += c2.clone();
            true
        } else {
            false
        }
    });
    free.retain(|(_, c)| !c.is_zero());
    Some((constant, free))
}

fn rel_holds(delta: &Rat, op: RelOp) -> bool {
    let z = Rat::zero();
    match op {
        RelOp::Eq => delta == &z,
        RelOp::Ne => delta != &z,
        RelOp::Lt => delta < &z,
        RelOp::Le => delta <= &z,
        RelOp::Ge => delta >= &z,
        RelOp::Gt => delta > &z,
    }
}

impl<'a> GroundWorld<'a> {
    /// Build a world from the model rules plus extra occurrences (for
    /// example, trigger events materialized by an engine answer). Ground
    /// `happens/2` facts in the rules are collected automatically.
    pub fn new(rules: &'a [Rule], extra: &[(Term, Rat)]) -> Self {
        let mut occurrences: Vec<(Term, Rat)> = Vec::new();
        for r in rules {
            if !r.body.is_empty() {
                continue;
            }
            if let Term::App(f, args) = &r.head {
                if f == "happens" && args.len() == 2 && args[0].is_ground() {
                    if let Term::Num(t) = &args[1] {
                        occurrences.push((args[0].clone(), t.clone()));
                    }
                }
            }
        }
        for (e, t) in extra {
            occurrences.push((e.clone(), t.clone()));
        }
        occurrences.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        occurrences.dedup();
        GroundWorld { rules, occurrences }
    }

    pub fn occurrences(&self) -> &[(Term, Rat)] {
        &self.occurrences
    }

    // -- generic resolution over the model rules ---------------------------

    fn solve_goal(&self, goal: &Term, s: &Subst, next: &mut VarId, depth: u32) -> Vec<Subst> {
        if depth > MAX_DEPTH {
            return Vec::new();
        }
        let (f, n) = match goal.functor() {
            Some(fa) => fa,
            None => return Vec::new(),
        };
        if f == "happens" && n == 2 {
            return self.solve_happens(goal, s);
        }
        let mut out = Vec::new();
        for rule in self.rules {
            let matches = match rule.head.functor() {
                Some((g, m)) => g == f && m == n,
                None => false,
            };
            if !matches {
                continue;
            }
            let base = *next;
            *next += rule.num_vars();
            let offset = |v: VarId| base + v;
            let head = rule.head.map_vars(&offset);
            let mut s2 = s.clone();
            if !unify(goal, &head, &mut s2) {
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
            out.extend(self.solve_body(&body, s2, next, depth + 1));
        }
        out
    }

    fn solve_happens(&self, goal: &Term, s: &Subst) -> Vec<Subst> {
        let args = match goal {
            Term::App(_, args) => args,
            _ => return Vec::new(),
        };
        let mut out = Vec::new();
        for (e, t) in &self.occurrences {
            let mut s2 = s.clone();
            if unify(&args[0], e, &mut s2) && unify(&args[1], &Term::Num(t.clone()), &mut s2) {
                out.push(s2);
            }
        }
        out
    }

    fn solve_body(&self, lits: &[Literal], s: Subst, next: &mut VarId, depth: u32) -> Vec<Subst> {
        let mut states = vec![s];
        for lit in lits {
            let mut nexts = Vec::new();
            for st in states {
                nexts.extend(self.solve_literal(lit, st, next, depth));
            }
            if nexts.is_empty() {
                return Vec::new();
            }
            states = nexts;
        }
        states
    }

    fn solve_literal(&self, lit: &Literal, s: Subst, next: &mut VarId, depth: u32) -> Vec<Subst> {
        match lit {
            Literal::Constraint(c) => self.solve_constraint(c, s),
            Literal::Atom(t) => match t.functor() {
                Some(("holdsAt", 2)) => {
                    let (f_pat, t_arg) = match t {
                        Term::App(_, args) => (walk(&args[0], &s), walk(&args[1], &s)),
                        _ => unreachable!(),
                    };
                    let at = match t_arg {
                        Term::Num(r) => r,
                        _ => return Vec::new(), // unbound query time: unsupported
                    };
                    self.holding_matching_subst(&f_pat, &at, &s, next, depth)
                }
                _ => self.solve_goal(t, &s, next, depth),
            },
            Literal::NegatedBuiltin(t) => {
                let args = match t {
                    Term::App(_, args) => args.iter().map(|a| walk(a, &s)).collect::<Vec<_>>(),
                    _ => return Vec::new(),
                };
                let ok = match t.functor() {
                    Some(("not_stoppedIn", 3)) => match (&args[0], &args[2]) {
                        (Term::Num(t1), Term::Num(t2)) => {
                            !self.stopped_in(t1, &args[1], t2, next, depth)
                        }
                        _ => false,
                    },
                    Some(("not_startedIn", 3)) => match (&args[0], &args[2]) {
                        (Term::Num(t1), Term::Num(t2)) => {
                            !self.started_in(t1, &args[1], t2, next, depth)
                        }
                        _ => false,
                    },
                    Some(("not_holdsAt", 2)) => match &args[1] {
                        Term::Num(at) => self.not_holds_at(&args[0], at),
                        _ => false,
                    },
                    Some(("not_happens", 2)) => match &args[1] {
                        Term::Num(at) => !self
                            .occurrences
                            .iter()
                            .any(|(e, te)| e == &args[0] && te == at),
                        _ => false,
                    },
                    _ => false,
                };
                if ok {
                    vec![s]
                } else {
                    Vec::new()
                }
            }
        }
    }

    fn solve_constraint(&self, c: &crate::syntax::Constraint, mut s: Subst) -> Vec<Subst> {
        let delta = c.delta();
        let (constant, free) = match eval_linexpr(&delta, &s) {
            Some(x) => x,
            None => return Vec::new(),
        };
        match free.len() {
            0 => {
                if rel_holds(&constant, c.op) {
                    vec![s]
                } else {
                    Vec::new()
                }
            }
            1 if c.op == RelOp::Eq => {
                let (v, coeff) = &free[0];
                let value = -constant / coeff;
                s.insert(*v, Term::Num(value));
                vec![s]
            }
            _ => Vec::new(), // underdetermined: outside checker scope
        }
    }

    // -- state-evolution semantics -----------------------------------------

    fn effect_derivable(
        &self,
        pred: &str,
        event: &Term,
        fluent: &Term,
        at: &Rat,
        next: &mut VarId,
        depth: u32,
    ) -> bool {
        let goal = Term::app(
            pred,
            vec![event.clone(), fluent.clone(), Term::Num(at.clone())],
        );
        !self.solve_goal(&goal, &Subst::new(), next, depth).is_empty()
    }

    fn stopped_in(&self, t1: &Rat, fluent: &Term, t2: &Rat, next: &mut VarId, depth: u32) -> bool {
        if depth > MAX_DEPTH {
            return false;
        }
        self.occurrences.iter().any(|(e, t)| {
            t > t1
                && t < t2
                && (self.effect_derivable("terminates", e, fluent, t, next, depth + 1)
                    || self.effect_derivable("releases", e, fluent, t, next, depth + 1))
        })
    }

    fn started_in(&self, t1: &Rat, fluent: &Term, t2: &Rat, next: &mut VarId, depth: u32) -> bool {
        if depth > MAX_DEPTH {
            return false;
        }
        self.occurrences.iter().any(|(e, t)| {
            t > t1 && t < t2 && self.effect_derivable("initiates", e, fluent, t, next, depth + 1)
        })
    }

    /// All ground fluents initiated by occurrence `(event, at)`.
    fn initiated_by(&self, event: &Term, at: &Rat, next: &mut VarId, depth: u32) -> Vec<Term> {
        let pat = Term::Var(FRESH_BASE - 1);
        let goal = Term::app(
            "initiates",
            vec![event.clone(), pat.clone(), Term::Num(at.clone())],
        );
        let mut out = Vec::new();
        for sol in self.solve_goal(&goal, &Subst::new(), next, depth) {
            let g = walk(&pat, &sol);
            if g.is_ground() && !out.contains(&g) {
                out.push(g);
            }
        }
        out
    }

    /// Fluents holding at `at` that match `pattern`, with the caller
    /// substitution extended accordingly.
    fn holding_matching_subst(
        &self,
        pattern: &Term,
        at: &Rat,
        s: &Subst,
        next: &mut VarId,
        depth: u32,
    ) -> Vec<Subst> {
        if depth > MAX_DEPTH {
            return Vec::new();
        }
        let mut out: Vec<Subst> = Vec::new();
        let push = |cand: &Term, base: &Subst, out: &mut Vec<Subst>| {
            let mut s2 = base.clone();
            if unify(pattern, cand, &mut s2) && !out.contains(&s2) {
                out.push(s2);
            }
        };

        // initial state, persisting
        let init_pat = Term::Var(FRESH_BASE - 2);
        let goal = Term::app("initiallyP", vec![init_pat.clone()]);
        for sol in self.solve_goal(&goal, &Subst::new(), next, depth + 1) {
            let g = walk(&init_pat, &sol);
            if g.is_ground()
                && !self.stopped_in(&Rat::zero(), &g, at, next, depth + 1)
            {
                push(&g, s, &mut out);
            }
        }

        for (e, t1) in &self.occurrences {
            if !(t1 > &Rat::zero() && t1 < at) {
                continue;
            }
            // direct initiation, persisting
            for g in self.initiated_by(e, t1, next, depth + 1) {
                if !self.stopped_in(t1, &g, at, next, depth + 1) {
                    push(&g, s, &mut out);
                }
            }
            // trajectory released from an initiated control fluent
            for f1 in self.initiated_by(e, t1, next, depth + 1) {
                if self.stopped_in(t1, &f1, at, next, depth + 1) {
                    continue;
                }
                let traj_pat = Term::Var(FRESH_BASE - 3);
                let goal = Term::app(
                    "trajectory",
                    vec![
                        f1.clone(),
                        Term::Num(t1.clone()),
                        traj_pat.clone(),
                        Term::Num(at.clone()),
                    ],
                );
                for sol in self.solve_goal(&goal, &Subst::new(), next, depth + 1) {
                    let g = walk(&traj_pat, &sol);
                    if g.is_ground() {
                        push(&g, s, &mut out);
                    }
                }
            }
        }
        out
    }

    // -- public queries ----------------------------------------------------

    /// Does `fluent` (ground) hold at time `at`?
    pub fn holds_at(&self, fluent: &Term, at: &Rat) -> bool {
        let mut next = FRESH_BASE;
        !self
            .holding_matching_subst(fluent, at, &Subst::new(), &mut next, 0)
            .is_empty()
    }

    /// All ground fluents matching `pattern` that hold at `at`.
    pub fn holding_matching(&self, pattern: &Term, at: &Rat) -> Vec<Term> {
        let mut next = FRESH_BASE;
        let sols = self.holding_matching_subst(pattern, at, &Subst::new(), &mut next, 0);
        let mut out = Vec::new();
        for s in sols {
            let g = walk(pattern, &s);
            if g.is_ground() && !out.contains(&g) {
                out.push(g);
            }
        }
        out
    }

    /// Is `fluent` (ground) known not to hold at `at`? This is the
    /// constructive reading: initially-false and not started since, or
    /// terminated and not started since.
    pub fn not_holds_at(&self, fluent: &Term, at: &Rat) -> bool {
        let mut next = FRESH_BASE;
        let init_pat = Term::Var(FRESH_BASE - 4);
        let goal = Term::app("initiallyN", vec![init_pat.clone()]);
        for sol in self.solve_goal(&goal, &Subst::new(), &mut next, 0) {
            if &walk(&init_pat, &sol) == fluent
                && !self.started_in(&Rat::zero(), fluent, at, &mut next, 0)
            {
                return true;
            }
        }
        for (e, t1) in &self.occurrences {
            if t1 > &Rat::zero()
                && t1 < at
                && self.effect_derivable("terminates", e, fluent, t1, &mut next, 0)
                && !self.started_in(t1, fluent, at, &mut next, 0)
            {
                return true;
            }
        }
        false
    }

    /// Evaluate a fully instantiated body (query literals after binding all
    /// variables): every literal must succeed. Times inside must be ground.
    pub fn check_literals(&self, lits: &[Literal]) -> bool {
        let mut next = FRESH_BASE;
        !self.solve_body(lits, Subst::new(), &mut next, 0).is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::rational::{rat, ratio};

    fn world(src: &str) -> (Vec<Rule>, Vec<(Term, Rat)>) {
        let (rules, _) = parse_program(src).expect("parse");
        (rules, Vec::new())
    }

    #[test]
    fn simple_persistence_and_termination() {
        let (rules, _) = world(
            "initiallyP(light).\n\
             terminates(turn_off, light, T).\n\
             initiates(turn_on, light, T).\n\
             happens(turn_off, 10).\n\
             happens(turn_on, 30).",
        );
        let w = GroundWorld::new(&rules, &[]);
        let light = Term::atom("light");
        assert!(w.holds_at(&light, &rat(5)));
        assert!(w.holds_at(&light, &rat(10))); // termination visible strictly after
        assert!(!w.holds_at(&light, &rat(12)));
        assert!(w.not_holds_at(&light, &rat(12)));
        assert!(w.holds_at(&light, &rat(31)));
        assert!(!w.not_holds_at(&light, &rat(31)));
    }

    #[test]
    fn valued_fluent_with_body_recursion() {
        let (rules, _) = world(
            "initiallyP(balance(10000)).\n\
             initiates(deposit(A), balance(NewB), T) :- A .>. 0, \
               holdsAt(balance(B), T), NewB .=. B + A.\n\
             terminates(deposit(A), balance(B), T) :- holdsAt(balance(B), T).\n\
             happens(deposit(2000), 5).\n\
             happens(deposit(500), 15).",
        );
        let w = GroundWorld::new(&rules, &[]);
        assert!(w.holds_at(&Term::app("balance", vec![Term::num(rat(10000))]), &rat(3)));
        assert!(w.holds_at(&Term::app("balance", vec![Term::num(rat(12000))]), &rat(7)));
        assert!(!w.holds_at(&Term::app("balance", vec![Term::num(rat(10000))]), &rat(7)));
        assert!(w.holds_at(&Term::app("balance", vec![Term::num(rat(12500))]), &rat(20)));
        let pat = Term::app("balance", vec![Term::Var(0)]);
        assert_eq!(
            w.holding_matching(&pat, &rat(20)),
            vec![Term::app("balance", vec![Term::num(rat(12500))])]
        );
    }

    #[test]
    fn trajectory_values_and_stopping() {
        let (rules, _) = world(
            "initiallyP(brightness(0)).\n\
             initiates(turn_up, fading_in, T).\n\
             releases(turn_up, brightness(X), T).\n\
             terminates(stop_fade, fading_in, T).\n\
             initiates(stop_fade, brightness(X), T) :- holdsAt(brightness(X), T).\n\
             trajectory(fading_in, T1, brightness(X2), T2) :- \
               holdsAt(brightness(X), T1), X2 .=. X + T2 - T1.\n\
             happens(turn_up, 10).\n\
             happens(stop_fade, 20).",
        );
        let w = GroundWorld::new(&rules, &[]);
        let b = |n: i64| Term::app("brightness", vec![Term::num(rat(n))]);
        // before the ramp: initial value persists
        assert!(w.holds_at(&b(0), &rat(5)));
        // on the ramp: value follows the trajectory
        assert!(w.holds_at(&b(5), &rat(15)));
        assert!(!w.holds_at(&b(0), &rat(15))); // released at 10
        assert!(!w.holds_at(&b(4), &rat(15)));
        // fractional query time, exact arithmetic
        assert!(w.holds_at(
            &Term::app("brightness", vec![Term::num(ratio(13, 4))]),
            &ratio(53, 4)
        ));
        // after the stop event: ramp value frozen at 10 persists
        assert!(w.holds_at(&b(10), &rat(25)));
        assert!(!w.holds_at(&b(15), &rat(25)));
    }

    #[test]
    fn release_ends_persistence_without_negation() {
        let (rules, _) = world(
            "initiallyP(water_level(30)).\n\
             initiates(open_valve, filling, T).\n\
             releases(open_valve, water_level(X), T).\n\
             trajectory(filling, T1, water_level(X2), T2) :- \
               holdsAt(water_level(X), T1), X2 .=. X + 10 * (T2 - T1).\n\
             happens(open_valve, 2).",
        );
        let w = GroundWorld::new(&rules, &[]);
        let wl = |n: i64| Term::app("water_level", vec![Term::num(rat(n))]);
        assert!(w.holds_at(&wl(30), &rat(1)));
        assert!(!w.holds_at(&wl(30), &rat(3))); // released, no longer persists
        assert!(w.holds_at(&wl(40), &rat(3)));
        assert!(w.holds_at(&wl(110), &rat(10)));
    }

    #[test]
    fn extra_occurrences_participate() {
        let (rules, _) = world(
            "initiallyP(light).\n\
             terminates(turn_off, light, T).",
        );
        let extra = vec![(Term::atom("turn_off"), rat(7))];
        let w = GroundWorld::new(&rules, &extra);
        let light = Term::atom("light");
        assert!(w.holds_at(&light, &rat(6)));
        assert!(!w.holds_at(&light, &rat(8)));
    }

    #[test]
    fn conditional_effects_respect_guards() {
        let (rules, _) = world(
            "initiallyP(balance(100)).\n\
             initiates(withdraw(A), balance(NewB), T) :- \
               holdsAt(balance(B), T), B .>=. A, NewB .=. B - A.\n\
             terminates(withdraw(A), balance(B), T) :- \
               holdsAt(balance(B), T), B .>=. A.\n\
             happens(withdraw(200), 5).\n\
             happens(withdraw(50), 10).",
        );
        let w = GroundWorld::new(&rules, &[]);
        let b = |n: i64| Term::app("balance", vec![Term::num(rat(n))]);
        // overdraft attempt has no effect: guard fails
        assert!(w.holds_at(&b(100), &rat(7)));
        // valid withdrawal applies
        assert!(w.holds_at(&b(50), &rat(12)));
        assert!(!w.holds_at(&b(100), &rat(12)));
    }

    #[test]
    fn check_literals_evaluates_instantiated_queries() {
        let (rules, _) = world(
            "initiallyP(light).\n\
             terminates(turn_off, light, T).\n\
             happens(turn_off, 10).",
        );
        let w = GroundWorld::new(&rules, &[]);
        let (_, queries) = parse_program("?- holdsAt(light, 5).").unwrap();
        assert!(w.check_literals(&queries[0].body));
        let (_, queries) = parse_program("?- holdsAt(light, 15).").unwrap();
        assert!(!w.check_literals(&queries[0].body));
        let (_, queries) = parse_program("?- not_holdsAt(light, 15).").unwrap();
        assert!(w.check_literals(&queries[0].body));
    }
}
