//! Detection of Zeno-descending event chains during derivation.
//!
//! Every expansion of a `happens/2` goal records the event term (dereferenced
//! at expansion time), the store variable standing for its time, and a
//! snapshot of the concrete bounds entailed for that variable. The records
//! form an ancestor chain through the derivation, including negation
//! sub-derivations.
//!
//! A chain of three records — two ancestors plus the current expansion —
//! triggers a halt when:
//! 1. all three event terms are syntactically equal;
//! 2. the intervals match: between the two ancestors (older vs newer) the
//!    lower bounds agree exactly (value and strictness) and the upper bounds
//!    agree by value (strictness ignored, to absorb the one-step tightening
//!    a self-supporting derivation performs); between the newer ancestor and
//!    the current record the bounds agree exactly on both ends. Absent
//!    bounds only match absent bounds.
//! 3. the store entails a strictly descending order:
//!    `current < newer < older`.
//!
//! Such a derivation is constructing an infinite sequence of occurrences of
//! the same event, squeezed into one fixed interval and strictly descending:
//! the signature of a Zeno (accumulation-point) model. The engine halts and
//! reports rather than diverging.

use crate::rational::format_rat;
use crate::store::{ConstraintStore, VarBounds};
use crate::syntax::{Constraint, LinExpr, RelOp, Term, VarId};

/// One `happens/2` expansion on the current derivation path.
#[derive(Clone, Debug)]
pub struct HappensRecord {
    pub event: Term,
    pub time_var: VarId,
    pub bounds: VarBounds,
}

/// Report attached to a Zeno halt: the recurring event and the interval the
/// descending chain is squeezed into (bounds of the most recent time
/// variable).
#[derive(Clone, Debug, PartialEq)]
pub struct ZenoReport {
    pub event: Term,
    pub interval: VarBounds,
}

/// Render an interval like `(0, 100)`, `(0, 100]` or `(13, +inf)`.
pub fn format_interval(b: &VarBounds) -> String {
    let lo = match &b.lower {
        Some(l) => format!("{}{}", if l.strict { "(" } else { "[" }, format_rat(&l.value)),
        None => "(-inf".to_string(),
    };
    let hi = match &b.upper {
        Some(u) => format!("{}{}", format_rat(&u.value), if u.strict { ")" } else { "]" }),
        None => "+inf)".to_string(),
    };
    format!("{lo}, {hi}")
}

impl ZenoReport {
    pub fn event_text(&self) -> String {
        crate::syntax::display_term(&self.event, &|v| format!("_G{v}"))
    }

    pub fn render_warning(&self) -> String {
        format!(
            "Zeno-descending chain detected: event {} recurs with strictly \
             descending times inside {}; derivation halted",
            self.event_text(),
            format_interval(&self.interval)
        )
    }
}

fn lower_exact(a: &VarBounds, b: &VarBounds) -> bool {
    match (&a.lower, &b.lower) {
        (None, None) => true,
        (Some(x), Some(y)) => x.value == y.value && x.strict == y.strict,
        _ => false,
    }
}

fn upper_exact(a: &VarBounds, b: &VarBounds) -> bool {
    match (&a.upper, &b.upper) {
        (None, None) => true,
        (Some(x), Some(y)) => x.value == y.value && x.strict == y.strict,
        _ => false,
    }
}

fn upper_value_only(a: &VarBounds, b: &VarBounds) -> bool {
    match (&a.upper, &b.upper) {
        (None, None) => true,
        (Some(x), Some(y)) => x.value == y.value,
        _ => false,
    }
}

/// Older ancestor vs newer ancestor: lower exact, upper by value.
pub fn interval_match_relaxed(older: &VarBounds, newer: &VarBounds) -> bool {
    lower_exact(older, newer) && upper_value_only(older, newer)
}

/// Newer ancestor vs current: exact on both ends.
pub fn interval_match_exact(a: &VarBounds, b: &VarBounds) -> bool {
    lower_exact(a, b) && upper_exact(a, b)
}

fn entails_strictly_before(store: &ConstraintStore, earlier: VarId, later: VarId) -> bool {
    store.entails(&Constraint::new(
        RelOp::Lt,
        LinExpr::var(earlier),
        LinExpr::var(later),
    ))
}

/// Check the current expansion against its ancestor chain (newest first).
/// Returns a report when a three-element descending chain is found.
pub fn detect<'a>(
    ancestors: impl Iterator<Item = &'a HappensRecord> + Clone,
    current: &HappensRecord,
    store: &ConstraintStore,
) -> Option<ZenoReport> {
    let mut newer_iter = ancestors;
    loop {
        let newer = newer_iter.next()?;
        let rest = newer_iter.clone();
        if newer.event == current.event
            && interval_match_exact(&newer.bounds, &current.bounds)
            && entails_strictly_before(store, current.time_var, newer.time_var)
        {
            for older in rest {
                if older.event == current.event
                    && interval_match_relaxed(&older.bounds, &newer.bounds)
                    && entails_strictly_before(store, newer.time_var, older.time_var)
                {
                    return Some(ZenoReport {
                        event: current.event.clone(),
                        interval: current.bounds.clone(),
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::store::BoundVal;
    use crate::syntax::Term;

    fn bounds(lo: Option<(i64, bool)>, hi: Option<(i64, bool)>) -> VarBounds {
        VarBounds {
            lower: lo.map(|(v, strict)| BoundVal { value: rat(v), strict }),
            upper: hi.map(|(v, strict)| BoundVal { value: rat(v), strict }),
        }
    }

    fn fee() -> Term {
        Term::app("serviceFee", vec![Term::num(rat(500))])
    }

    /// Store entailing t2 < t1 < t0 inside (0, 100), mirroring a descending
    /// self-supporting derivation.
    fn descending_store() -> ConstraintStore {
        let mut s = ConstraintStore::new();
        let v = LinExpr::var;
        let k = |n: i64| LinExpr::constant(rat(n));
        for t in 0..3 {
            s.assert_constraint(&Constraint::new(RelOp::Gt, v(t), k(0)));
            s.assert_constraint(&Constraint::new(RelOp::Lt, v(t), k(100)));
        }
        s.assert_constraint(&Constraint::new(RelOp::Lt, v(1), v(0)));
        s.assert_constraint(&Constraint::new(RelOp::Lt, v(2), v(1)));
        s
    }

    #[test]
    fn detects_three_element_descending_chain() {
        let store = descending_store();
        // oldest expansion saw (0, 100], the later two see (0, 100)
        let older = HappensRecord {
            event: fee(),
            time_var: 0,
            bounds: bounds(Some((0, true)), Some((100, false))),
        };
        let newer = HappensRecord {
            event: fee(),
            time_var: 1,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let current = HappensRecord {
            event: fee(),
            time_var: 2,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let chain = [newer.clone(), older.clone()];
        let report = detect(chain.iter(), &current, &store).expect("chain detected");
        assert_eq!(report.event, fee());
        assert_eq!(report.interval, current.bounds);
        let warning = report.render_warning();
        assert!(warning.contains("Zeno-descending chain"), "{warning}");
        assert!(warning.contains("serviceFee(500)"), "{warning}");
        assert!(warning.contains("(0, 100)"), "{warning}");
    }

    #[test]
    fn different_events_do_not_chain() {
        let store = descending_store();
        let mk = |event: Term, var| HappensRecord {
            event,
            time_var: var,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let chain = [mk(fee(), 1), mk(Term::atom("other"), 0)];
        let current = mk(fee(), 2);
        assert!(detect(chain.iter(), &current, &store).is_none());
    }

    #[test]
    fn lower_bound_mismatch_blocks_detection() {
        let store = descending_store();
        let older = HappensRecord {
            event: fee(),
            time_var: 0,
            bounds: bounds(Some((5, true)), Some((100, false))),
        };
        let newer = HappensRecord {
            event: fee(),
            time_var: 1,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let current = HappensRecord {
            event: fee(),
            time_var: 2,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let chain = [newer, older];
        assert!(detect(chain.iter(), &current, &store).is_none());
    }

    #[test]
    fn current_must_match_exactly() {
        let store = descending_store();
        // current sees (0, 100] while newer ancestor saw (0, 100): not exact
        let older = HappensRecord {
            event: fee(),
            time_var: 0,
            bounds: bounds(Some((0, true)), Some((100, false))),
        };
        let newer = HappensRecord {
            event: fee(),
            time_var: 1,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let current = HappensRecord {
            event: fee(),
            time_var: 2,
            bounds: bounds(Some((0, true)), Some((100, false))),
        };
        let chain = [newer, older];
        assert!(detect(chain.iter(), &current, &store).is_none());
    }

    #[test]
    fn ordering_must_be_entailed() {
        // same intervals but no ordering constraints between the times
        let mut store = ConstraintStore::new();
        let v = LinExpr::var;
        let k = |n: i64| LinExpr::constant(rat(n));
        for t in 0..3 {
            store.assert_constraint(&Constraint::new(RelOp::Gt, v(t), k(0)));
            store.assert_constraint(&Constraint::new(RelOp::Lt, v(t), k(100)));
        }
        let mk = |var| HappensRecord {
            event: fee(),
            time_var: var,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let chain = [mk(1), mk(0)];
        assert!(detect(chain.iter(), &mk(2), &store).is_none());
    }

    #[test]
    fn unbounded_intervals_chain_when_absent_on_both() {
        let mut store = ConstraintStore::new();
        let v = LinExpr::var;
        let k = |n: i64| LinExpr::constant(rat(n));
        for t in 0..3 {
            store.assert_constraint(&Constraint::new(RelOp::Gt, v(t), k(13)));
        }
        store.assert_constraint(&Constraint::new(RelOp::Lt, v(1), v(0)));
        store.assert_constraint(&Constraint::new(RelOp::Lt, v(2), v(1)));
        let mk = |var| HappensRecord {
            event: Term::atom("switch_left"),
            time_var: var,
            bounds: bounds(Some((13, true)), None),
        };
        let chain = [mk(1), mk(0)];
        let report = detect(chain.iter(), &mk(2), &store).expect("detected");
        assert_eq!(format_interval(&report.interval), "(13, +inf)");
    }

    #[test]
    fn two_element_chain_is_not_enough() {
        let store = descending_store();
        let mk = |var| HappensRecord {
            event: fee(),
            time_var: var,
            bounds: bounds(Some((0, true)), Some((100, true))),
        };
        let chain = [mk(1)];
        assert!(detect(chain.iter(), &mk(2), &store).is_none());
    }
}
