//! Incremental linear rational constraint store.
//!
//! Rows have the normal form `delta op 0` with `op ∈ {Eq, Le, Lt}`.
//! Consistency, entailment, bounds and projection all reduce to
//! Fourier–Motzkin elimination with exact rational arithmetic; combining a
//! strict row with anything yields a strict row. Equalities are eliminated
//! by substitution before inequality elimination.
//!
//! Disequality (`.<>.`) is not representable as a single row: asserting it
//! returns [`AssertResult::NeedsSplit`] and the caller must branch on the
//! two strict orderings.

use crate::rational::Rat;
use crate::syntax::{Constraint, LinExpr, RelOp, VarId};
use im::{OrdMap, OrdSet, Vector};
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RowOp {
    Eq,
    Le,
    Lt,
}

/// A stored constraint `delta op 0`.
#[derive(Clone, PartialEq, Debug)]
pub struct Row {
    pub delta: LinExpr,
    pub op: RowOp,
}

impl Row {
    fn is_constant(&self) -> bool {
        self.delta.terms.is_empty()
    }

    /// For a constant row, is it true?
    fn constant_truth(&self) -> bool {
        let c = &self.delta.constant;
        match self.op {
            RowOp::Eq => c.is_zero(),
            RowOp::Le => *c <= Rat::zero(),
            RowOp::Lt => *c < Rat::zero(),
        }
    }

    /// Scale so the leading (smallest-id) coefficient has magnitude 1.
    /// Inequalities may only be scaled by positive factors; equalities are
    /// additionally sign-normalized.
    fn normalize(mut self) -> Row {
        if let Some((_, c0)) = self.delta.terms.iter().next() {
            let mut factor = Rat::one() / c0.abs();
            if self.op == RowOp::Eq && c0.is_negative() {
                factor = -factor;
            }
            if !factor.is_one() {
                self.delta = self.delta.scale(&factor);
            }
        }
        self
    }
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
pub enum AssertResult {
    Consistent,
    Failed,
    /// The constraint was a disequality; assert the two strict orderings on
    /// separate branches instead.
    NeedsSplit,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BoundVal {
    pub value: Rat,
    pub strict: bool,
}

/// Concrete bounds entailed for one variable. A missing side is unbounded.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct VarBounds {
    pub lower: Option<BoundVal>,
    pub upper: Option<BoundVal>,
}

impl VarBounds {
    /// The single value this variable is fixed to, if any.
    pub fn fixed(&self) -> Option<&Rat> {
        match (&self.lower, &self.upper) {
            (Some(l), Some(u)) if !l.strict && !u.strict && l.value == u.value => Some(&l.value),
            _ => None,
        }
    }
}

/// Persistent collections keep store clones cheap: a derivation branch
/// clones its whole state at every choice point, and with thousands of
/// rows per store a deep-copying store dominated both time and memory.
#[derive(Clone, Debug, Default)]
pub struct ConstraintStore {
    rows: Vector<Row>,
    reg_order: Vector<VarId>,
    registered: OrdSet<VarId>,
    /// A concrete solution of `rows`, maintained across asserts. Most
    /// asserts in a derivation only touch fresh variables or nudge one
    /// bound, so satisfiability can usually be re-certified by evaluating
    /// or locally repairing this witness instead of re-running elimination.
    witness: OrdMap<VarId, Rat>,
    /// Variables pinned to a single value by equality propagation alone.
    /// Maintained incrementally so [`ConstraintStore::pinned_value`] is a
    /// map lookup instead of an elimination pass.
    pinned: OrdMap<VarId, Rat>,
    /// Equality rows whose value is not yet determined by `pinned`;
    /// revisited whenever a new variable gets pinned.
    pending_eqs: Vector<Row>,
}

impl ConstraintStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &Vector<Row> {
        &self.rows
    }

    pub fn is_registered(&self, v: VarId) -> bool {
        self.registered.contains(&v)
    }

    /// All constrained variables, in first-registration order.
    pub fn registered_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.reg_order.iter().copied()
    }

    fn register_vars(&mut self, e: &LinExpr) {
        for v in e.terms.keys() {
            if self.registered.insert(*v).is_none() {
                self.reg_order.push_back(*v);
            }
        }
    }

    fn push_row(&mut self, delta: LinExpr, op: RowOp) -> AssertResult {
        let row = Row { delta, op }.normalize();
        if row.is_constant() {
            return if row.constant_truth() {
                AssertResult::Consistent
            } else {
                AssertResult::Failed
            };
        }
        if self.rows.contains(&row) {
            return AssertResult::Consistent;
        }
        self.register_vars(&row.delta);
        self.rows.push_back(row.clone());
        let consistent = self.witness_accommodates(&row)
            || match solve_witness(&self.rows, &self.reg_order) {
                Some(w) => {
                    self.witness = w;
                    true
                }
                None => false,
            };
        if !consistent {
            self.rows.pop_back();
            return AssertResult::Failed;
        }
        if row.op == RowOp::Eq {
            self.pending_eqs.push_back(row);
            self.propagate_pins();
        }
        AssertResult::Consistent
    }

    /// Resolve pending equality rows against the pinned map until no more
    /// variables can be pinned. A pending row with exactly one unpinned
    /// variable determines that variable; rows with none left are satisfied
    /// (the store is already known consistent) and dropped.
    fn propagate_pins(&mut self) {
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < self.pending_eqs.len() {
                let row = &self.pending_eqs[i];
                let mut resid = row.delta.constant.clone();
                let mut unknown: Option<(VarId, Rat)> = None;
                let mut too_many = false;
                for (v, c) in &row.delta.terms {
                    match self.pinned.get(v) {
                        Some(val) => resid += c * val,
                        None if unknown.is_none() => unknown = Some((*v, c.clone())),
                        None => {
                            too_many = true;
                            break;
                        }
                    }
                }
                if too_many {
                    i += 1;
                    continue;
                }
                match unknown {
                    Some((v, c)) => {
                        self.pinned.insert(v, -resid / c);
                        changed = true;
                    }
                    // pins are entailed equalities, so a fully pinned row in a
                    // consistent store must balance
                    None => debug_assert!(resid.is_zero()),
                }
                self.pending_eqs.remove(i);
            }
            if !changed {
                break;
            }
        }
    }

    /// Try to keep the cached witness valid for a newly pushed row without
    /// running elimination: default missing variables to zero, then repair a
    /// single variable of the row against every row that mentions it.
    fn witness_accommodates(&mut self, row: &Row) -> bool {
        for v in row.delta.terms.keys() {
            self.witness.entry(*v).or_insert_with(Rat::zero);
        }
        if row_satisfied(row, &self.witness) == Some(true) {
            return true;
        }
        'candidates: for v in row.delta.terms.keys() {
            let mut lower: Option<BoundVal> = None;
            let mut upper: Option<BoundVal> = None;
            for r in &self.rows {
                let a = match r.delta.terms.get(v) {
                    Some(a) => a.clone(),
                    None => continue,
                };
                // residual of the row with v removed, under the witness
                let mut resid = r.delta.constant.clone();
                for (w, c) in &r.delta.terms {
                    if w == v {
                        continue;
                    }
                    match self.witness.get(w) {
                        Some(val) => resid += c * val,
                        None => continue 'candidates,
                    }
                }
                let value = -resid / &a;
                match r.op {
                    RowOp::Eq => {
                        merge_lower(&mut lower, value.clone(), false);
                        merge_upper(&mut upper, value, false);
                    }
                    RowOp::Le | RowOp::Lt => {
                        let strict = r.op == RowOp::Lt;
                        if a.is_positive() {
                            merge_upper(&mut upper, value, strict);
                        } else {
                            merge_lower(&mut lower, value, strict);
                        }
                    }
                }
            }
            if let Some(value) = pick_in_interval(&lower, &upper) {
                self.witness.insert(*v, value);
                return true;
            }
        }
        false
    }

    /// Assert `lhs op rhs`. The store is left unchanged on `Failed` and
    /// `NeedsSplit`.
    pub fn assert_constraint(&mut self, c: &Constraint) -> AssertResult {
        let delta = c.delta();
        match c.op {
            RelOp::Eq => self.push_row(delta, RowOp::Eq),
            RelOp::Le => self.push_row(delta, RowOp::Le),
            RelOp::Lt => self.push_row(delta, RowOp::Lt),
            RelOp::Ge => self.push_row(delta.scale(&-Rat::one()), RowOp::Le),
            RelOp::Gt => self.push_row(delta.scale(&-Rat::one()), RowOp::Lt),
            RelOp::Ne => {
                if self.entails_delta(&delta, RelOp::Ne) {
                    AssertResult::Consistent
                } else if self.entails_delta(&delta, RelOp::Eq) {
                    AssertResult::Failed
                } else {
                    AssertResult::NeedsSplit
                }
            }
        }
    }

    /// Convenience: assert `v = r`.
    pub fn assert_var_eq_num(&mut self, v: VarId, r: &Rat) -> AssertResult {
        self.push_row(LinExpr::var(v).sub(&LinExpr::constant(r.clone())), RowOp::Eq)
    }

    /// Convenience: assert `a = b`.
    pub fn assert_var_eq_var(&mut self, a: VarId, b: VarId) -> AssertResult {
        if a == b {
            return AssertResult::Consistent;
        }
        self.push_row(LinExpr::var(a).sub(&LinExpr::var(b)), RowOp::Eq)
    }

    fn entails_delta(&self, delta: &LinExpr, op: RelOp) -> bool {
        // A variable with no constraints at all can always be moved to defeat
        // the entailment.
        if delta.terms.keys().any(|v| !self.registered.contains(v)) {
            return false;
        }
        let refuted = |extra: Row| -> bool {
            // the witness is a counterexample whenever it satisfies the
            // negated constraint
            if row_satisfied(&extra, &self.witness) == Some(true) {
                return false;
            }
            // every variable of `extra` is registered (checked above), so the
            // registration order already covers it
            fm_eliminate(
                self.rows.iter().chain(std::iter::once(&extra)),
                &BTreeSet::new(),
                self.reg_order.iter().copied(),
            )
            .is_none()
        };
        let neg = |e: &LinExpr| e.scale(&-Rat::one());
        match op {
            RelOp::Le => refuted(Row { delta: neg(delta), op: RowOp::Lt }),
            RelOp::Lt => refuted(Row { delta: neg(delta), op: RowOp::Le }),
            RelOp::Ge => refuted(Row { delta: delta.clone(), op: RowOp::Lt }),
            RelOp::Gt => refuted(Row { delta: delta.clone(), op: RowOp::Le }),
            RelOp::Eq => {
                refuted(Row { delta: delta.clone(), op: RowOp::Lt })
                    && refuted(Row { delta: neg(delta), op: RowOp::Lt })
            }
            RelOp::Ne => refuted(Row { delta: delta.clone(), op: RowOp::Eq }),
        }
    }

    /// Does the store entail `lhs op rhs`?
    pub fn entails(&self, c: &Constraint) -> bool {
        self.entails_delta(&c.delta(), c.op)
    }

    /// Tightest concrete bounds entailed for `v`.
    pub fn bounds_of(&self, v: VarId) -> VarBounds {
        let mut keep = BTreeSet::new();
        keep.insert(v);
        let rows = match fm_eliminate(self.rows.iter(), &keep, self.reg_order.iter().copied()) {
            Some(rows) => rows,
            None => return VarBounds::default(), // inconsistent store
        };
        let mut bounds = VarBounds::default();
        for row in &rows {
            let a = match row.delta.terms.get(&v) {
                Some(a) => a.clone(),
                None => continue,
            };
            let value = -&row.delta.constant / &a;
            match row.op {
                RowOp::Eq => {
                    merge_lower(&mut bounds.lower, value.clone(), false);
                    merge_upper(&mut bounds.upper, value, false);
                }
                RowOp::Le | RowOp::Lt => {
                    let strict = row.op == RowOp::Lt;
                    if a.is_positive() {
                        merge_upper(&mut bounds.upper, value, strict);
                    } else {
                        merge_lower(&mut bounds.lower, value, strict);
                    }
                }
            }
        }
        bounds
    }

    /// The exact value `v` is fixed to, if the store pins it down.
    pub fn fixed_value(&self, v: VarId) -> Option<Rat> {
        self.bounds_of(v).fixed().cloned()
    }

    /// Like [`fixed_value`](Self::fixed_value) but answered from the
    /// incrementally maintained equality-propagation map, so it costs a map
    /// lookup. Conservative: a variable fixed only through inequalities
    /// (`v >= 3, v =< 3`) or a joint equality system is not reported.
    pub fn pinned_value(&self, v: VarId) -> Option<&Rat> {
        self.pinned.get(&v)
    }

    /// Project onto `keep`: eliminate all other variables, prune redundant
    /// rows, and return a canonically ordered row set.
    pub fn project(&self, keep: &BTreeSet<VarId>) -> Vec<Row> {
        let rows = match fm_eliminate(self.rows.iter(), keep, self.reg_order.iter().copied()) {
            Some(rows) => rows,
            None => {
                return vec![Row {
                    delta: LinExpr::constant(Rat::one()),
                    op: RowOp::Le,
                }]
            }
        };
        let mut rows: Vec<Row> = {
            let mut seen = BTreeSet::new();
            rows.into_iter()
                .map(Row::normalize)
                .filter(|r| seen.insert(row_key(r)))
                .collect()
        };
        // drop rows entailed by the others
        let order: Vec<VarId> = self.reg_order.iter().copied().collect();
        let mut i = 0;
        while i < rows.len() {
            let candidate = rows[i].clone();
            let rest: Vec<Row> = rows
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| r.clone())
                .collect();
            if rows_entail(&rest, &candidate, &order) {
                rows.remove(i);
            } else {
                i += 1;
            }
        }
        rows.sort_by_key(row_key);
        rows
    }
}

fn row_key(r: &Row) -> (Vec<(VarId, Rat)>, u8, Rat) {
    (
        r.delta.terms.iter().map(|(v, c)| (*v, c.clone())).collect(),
        match r.op {
            RowOp::Eq => 0,
            RowOp::Le => 1,
            RowOp::Lt => 2,
        },
        r.delta.constant.clone(),
    )
}

fn rows_entail(rows: &[Row], target: &Row, order: &[VarId]) -> bool {
    let neg = |e: &LinExpr| e.scale(&-Rat::one());
    let refuted = |extra: Row| -> bool {
        fm_eliminate(
            rows.iter().chain(std::iter::once(&extra)),
            &BTreeSet::new(),
            order.iter().copied(),
        )
        .is_none()
    };
    match target.op {
        RowOp::Le => refuted(Row { delta: neg(&target.delta), op: RowOp::Lt }),
        RowOp::Lt => refuted(Row { delta: neg(&target.delta), op: RowOp::Le }),
        RowOp::Eq => {
            refuted(Row { delta: target.delta.clone(), op: RowOp::Lt })
                && refuted(Row { delta: neg(&target.delta), op: RowOp::Lt })
        }
    }
}

/// Evaluate a row under a (partial) assignment; None if a variable is
/// missing.
fn row_satisfied(row: &Row, witness: &OrdMap<VarId, Rat>) -> Option<bool> {
    let mut total = row.delta.constant.clone();
    for (v, c) in &row.delta.terms {
        total += c * witness.get(v)?;
    }
    Some(match row.op {
        RowOp::Eq => total.is_zero(),
        RowOp::Le => total <= Rat::zero(),
        RowOp::Lt => total < Rat::zero(),
    })
}

/// A concrete value inside the interval, or None when it is empty.
fn pick_in_interval(lower: &Option<BoundVal>, upper: &Option<BoundVal>) -> Option<Rat> {
    match (lower, upper) {
        (None, None) => Some(Rat::zero()),
        (Some(l), None) => Some(if l.strict {
            &l.value + Rat::one()
        } else {
            l.value.clone()
        }),
        (None, Some(u)) => Some(if u.strict {
            &u.value - Rat::one()
        } else {
            u.value.clone()
        }),
        (Some(l), Some(u)) => {
            if l.value > u.value {
                None
            } else if l.value == u.value {
                if l.strict || u.strict {
                    None
                } else {
                    Some(l.value.clone())
                }
            } else {
                Some((&l.value + &u.value) / Rat::from_integer(2.into()))
            }
        }
    }
}

/// Decide satisfiability by staged elimination and, when satisfiable,
/// recover a concrete solution by back-substitution: walk the elimination
/// stages in reverse, picking each variable inside the interval its stage
/// rows permit given the values chosen so far.
fn solve_witness(rows: &Vector<Row>, reg_order: &Vector<VarId>) -> Option<OrdMap<VarId, Rat>> {
    let mut m = ElimMatrix::new(rows.iter())?;
    let mut stages: Vec<(VarId, Vec<Row>)> = Vec::with_capacity(reg_order.len());
    for v in reg_order.iter().rev() {
        let involved = m.eliminate(*v)?;
        stages.push((*v, involved));
    }
    debug_assert!(m.into_rows().is_empty());

    let mut witness: OrdMap<VarId, Rat> = OrdMap::new();
    for (v, stage_rows) in stages.iter().rev() {
        let mut lower: Option<BoundVal> = None;
        let mut upper: Option<BoundVal> = None;
        for r in stage_rows {
            let a = match r.delta.terms.get(v) {
                Some(a) => a.clone(),
                None => continue,
            };
            let mut resid = r.delta.constant.clone();
            for (w, c) in &r.delta.terms {
                if w != v {
                    // only older (already assigned) variables can appear here
                    resid += c * witness.get(w).expect("stage variable assigned");
                }
            }
            let value = -resid / &a;
            match r.op {
                RowOp::Eq => {
                    merge_lower(&mut lower, value.clone(), false);
                    merge_upper(&mut upper, value, false);
                }
                RowOp::Le | RowOp::Lt => {
                    let strict = r.op == RowOp::Lt;
                    if a.is_positive() {
                        merge_upper(&mut upper, value, strict);
                    } else {
                        merge_lower(&mut lower, value, strict);
                    }
                }
            }
        }
        let value = pick_in_interval(&lower, &upper)
            .expect("projection guarantees a non-empty interval");
        witness.insert(*v, value);
    }
    Some(witness)
}

fn merge_lower(slot: &mut Option<BoundVal>, value: Rat, strict: bool) {
    let better = match slot {
        None => true,
        Some(b) => value > b.value || (value == b.value && strict && !b.strict),
    };
    if better {
        *slot = Some(BoundVal { value, strict });
    }
}

fn merge_upper(slot: &mut Option<BoundVal>, value: Rat, strict: bool) {
    let better = match slot {
        None => true,
        Some(b) => value < b.value || (value == b.value && strict && !b.strict),
    };
    if better {
        *slot = Some(BoundVal { value, strict });
    }
}

/// Row set indexed by variable, so eliminating a variable only visits the
/// rows that actually mention it. Eliminated rows leave tombstones; index
/// entries pointing at tombstones are skipped on lookup. Rows are
/// normalized and deduplicated on insertion — elimination along a chain
/// re-derives the same bound many times, and without suppression those
/// copies multiply the products of every later step.
struct ElimMatrix {
    slots: Vec<Option<Row>>,
    by_var: BTreeMap<VarId, Vec<usize>>,
    keys: BTreeSet<(Vec<(VarId, Rat)>, u8, Rat)>,
}

impl ElimMatrix {
    /// `None` when some row is constant-false.
    fn new<'a>(rows: impl IntoIterator<Item = &'a Row>) -> Option<ElimMatrix> {
        let mut m = ElimMatrix {
            slots: Vec::new(),
            by_var: BTreeMap::new(),
            keys: BTreeSet::new(),
        };
        for r in rows {
            if r.is_constant() {
                if !r.constant_truth() {
                    return None;
                }
            } else {
                m.insert(r.clone());
            }
        }
        Some(m)
    }

    fn insert(&mut self, row: Row) {
        let row = row.normalize();
        if !self.keys.insert(row_key(&row)) {
            return;
        }
        let id = self.slots.len();
        for v in row.delta.terms.keys() {
            self.by_var.entry(*v).or_default().push(id);
        }
        self.slots.push(Some(row));
    }

    /// Remove and return the live rows mentioning `v`, in insertion order.
    fn take_mentioning(&mut self, v: VarId) -> Vec<Row> {
        let ids = self.by_var.remove(&v).unwrap_or_default();
        let taken: Vec<Row> = ids.into_iter().filter_map(|id| self.slots[id].take()).collect();
        for row in &taken {
            self.keys.remove(&row_key(row));
        }
        taken
    }

    /// Eliminate `v`, inserting the replacement rows. Returns the rows that
    /// mentioned `v` (used as back-substitution stages by
    /// [`solve_witness`]), or `None` if elimination exposed an
    /// inconsistency.
    fn eliminate(&mut self, v: VarId) -> Option<Vec<Row>> {
        let involved = self.take_mentioning(v);
        let mut emit = |row: Row| -> bool {
            if row.is_constant() {
                row.constant_truth()
            } else {
                self.insert(row);
                true
            }
        };

        // substitution via an equality that mentions v, if one exists
        if let Some(idx) = involved.iter().position(|r| r.op == RowOp::Eq) {
            let eq = &involved[idx];
            let coeff = eq.delta.terms.get(&v).unwrap().clone();
            // v = -(delta - coeff*v) / coeff
            let mut rest = eq.delta.clone();
            rest.terms.remove(&v);
            let solved = rest.scale(&(-Rat::one() / coeff));
            for (i, row) in involved.iter().enumerate() {
                if i == idx {
                    continue;
                }
                let c = row.delta.terms.get(&v).unwrap().clone();
                let mut d = row.delta.clone();
                d.terms.remove(&v);
                let d = d.add(&solved.scale(&c));
                if !emit(Row { delta: d, op: row.op }) {
                    return None;
                }
            }
            return Some(involved);
        }

        // Fourier–Motzkin combination of upper and lower rows
        let (pos, neg): (Vec<&Row>, Vec<&Row>) = involved
            .iter()
            .partition(|r| r.delta.terms.get(&v).unwrap().is_positive());
        for p in &pos {
            let a = p.delta.terms.get(&v).unwrap().clone();
            for n in &neg {
                let b = -n.delta.terms.get(&v).unwrap().clone();
                let delta = p.delta.scale(&b).add(&n.delta.scale(&a));
                debug_assert!(!delta.terms.contains_key(&v));
                let op = if p.op == RowOp::Lt || n.op == RowOp::Lt {
                    RowOp::Lt
                } else {
                    RowOp::Le
                };
                if !emit(Row { delta, op }) {
                    return None;
                }
            }
        }
        Some(involved)
    }

    fn into_rows(self) -> Vec<Row> {
        self.slots.into_iter().flatten().collect()
    }
}

/// Eliminate every variable not in `keep` (newest registrations first).
/// Returns `None` if the system is inconsistent, otherwise the rows of the
/// projection.
fn fm_eliminate<'a, R, O>(rows: R, keep: &BTreeSet<VarId>, reg_order: O) -> Option<Vec<Row>>
where
    R: IntoIterator<Item = &'a Row>,
    O: IntoIterator<Item = VarId>,
    O::IntoIter: DoubleEndedIterator,
{
    let mut m = ElimMatrix::new(rows)?;
    for v in reg_order.into_iter().rev() {
        if !keep.contains(&v) {
            m.eliminate(v)?;
        }
    }
    Some(m.into_rows())
}
