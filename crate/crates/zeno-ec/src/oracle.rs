//! Brute-force satisfiability oracle for linear rational constraint systems.
//!
//! This module is deliberately independent of the incremental constraint
//! store: it decides satisfiability by exact vertex enumeration and is used
//! by the test suites as ground truth for the store's verdicts.
//!
//! A system is a list of `(delta, op)` pairs meaning `delta op 0` with
//! `op ∈ {Eq, Lt, Le, Gt, Ge}` (`Gt`/`Ge` are normalized by negation; `Ne`
//! must be split by the caller). All variables are confined to a large
//! bounding box so the feasible region is a polytope whose vertices can be
//! enumerated: every vertex is the unique solution of some n-subset of the
//! defining hyperplanes (constraints read as equalities, plus box faces).
//!
//! Strict feasibility uses the centroid argument: every closed-feasible
//! vertex satisfies `delta <= 0` for a strict row, so the centroid of all
//! feasible vertices satisfies `delta < 0` iff at least one vertex does.
//! Since a bounded nonempty polytope attains the maximum of a linear
//! functional at a vertex, the centroid strictly satisfies every strict row
//! iff the open system is satisfiable (within the box).

use crate::rational::{rat, Rat};
use crate::syntax::{LinExpr, RelOp, VarId};
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Half-width of the bounding box. Test generators keep coefficients small,
/// so any satisfiable system they produce has a witness well inside the box.
const BOX: i64 = 1_000_000;

/// Solve the square system `A x = b` exactly. Returns `None` when the
/// matrix is singular (no unique solution).
fn solve_square(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col].clone();
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &p;
            for c in col..n {
                let v = &a[col][c] * &factor;
                a[r][c] -= v;
            }
            let v = &b[col] * &factor;
            b[r] -= v;
        }
    }
    Some(
        (0..n)
            .map(|i| &b[i] / &a[i][i])
            .collect(),
    )
}

fn eval(delta: &LinExpr, point: &BTreeMap<VarId, Rat>) -> Rat {
    let mut acc = delta.constant.clone();
    for (v, c) in &delta.terms {
        acc += c * point.get(v).expect("point must bind all variables");
    }
    acc
}

fn normalize(rows: &[(LinExpr, RelOp)]) -> Vec<(LinExpr, RelOp)> {
    rows.iter()
        .map(|(d, op)| match op {
            RelOp::Gt => (d.scale(&rat(-1)), RelOp::Lt),
            RelOp::Ge => (d.scale(&rat(-1)), RelOp::Le),
            RelOp::Ne => panic!("oracle does not handle Ne; split it first"),
            other => (d.clone(), *other),
        })
        .collect()
}

fn closed_ok(delta: &Rat, op: RelOp) -> bool {
    match op {
        RelOp::Eq => delta.is_zero(),
        RelOp::Le | RelOp::Lt => *delta <= Rat::zero(),
        _ => unreachable!(),
    }
}

fn strict_ok(delta: &Rat, op: RelOp) -> bool {
    match op {
        RelOp::Eq => delta.is_zero(),
        RelOp::Le => *delta <= Rat::zero(),
        RelOp::Lt => *delta < Rat::zero(),
        _ => unreachable!(),
    }
}

fn collect_vars(rows: &[(LinExpr, RelOp)]) -> Vec<VarId> {
    let mut set = BTreeSet::new();
    for (d, _) in rows {
        set.extend(d.terms.keys().copied());
    }
    set.into_iter().collect()
}

/// Enumerate all vertices of the closed feasible region (strict rows read
/// as non-strict) intersected with the bounding box.
pub fn feasible_vertices(rows: &[(LinExpr, RelOp)]) -> Vec<BTreeMap<VarId, Rat>> {
    let rows = normalize(rows);
    let vars = collect_vars(&rows);
    let n = vars.len();
    if n == 0 {
        let empty = BTreeMap::new();
        let all_ok = rows.iter().all(|(d, op)| closed_ok(&d.constant, *op));
        return if all_ok { vec![empty] } else { Vec::new() };
    }
    let index: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();

    // hyperplanes: (coefficients over vars, rhs) meaning Σ c x = rhs
    let mut planes: Vec<(Vec<Rat>, Rat)> = Vec::new();
    for (d, _) in &rows {
        let mut coeffs = vec![Rat::zero(); n];
        for (v, c) in &d.terms {
            coeffs[index[v]] = c.clone();
        }
        planes.push((coeffs, -d.constant.clone()));
    }
    for i in 0..n {
        for sign in [1i64, -1] {
            let mut coeffs = vec![Rat::zero(); n];
            coeffs[i] = Rat::from_integer(1.into());
            planes.push((coeffs, rat(BOX * sign)));
        }
    }

    let mut seen: BTreeSet<Vec<Rat>> = BTreeSet::new();
    let mut out = Vec::new();
    let mut subset = vec![0usize; n];
    enumerate_subsets(planes.len(), n, 0, 0, &mut subset, &mut |chosen| {
        let a: Vec<Vec<Rat>> = chosen.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<Rat> = chosen.iter().map(|&i| planes[i].1.clone()).collect();
        let point = match solve_square(a, b) {
            Some(p) => p,
            None => return,
        };
        if point.iter().any(|x| x.abs() > rat(BOX)) {
            return;
        }
        let as_map: BTreeMap<VarId, Rat> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, point[i].clone()))
            .collect();
        if rows.iter().all(|(d, op)| closed_ok(&eval(d, &as_map), *op)) {
            if seen.insert(point) {
                out.push(as_map);
            }
        }
    });
    out
}

fn enumerate_subsets(
    total: usize,
    size: usize,
    start: usize,
    depth: usize,
    subset: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if depth == size {
        f(subset);
        return;
    }
    for i in start..total {
        subset[depth] = i;
        enumerate_subsets(total, size, i + 1, depth + 1, subset, f);
    }
}

/// Decide satisfiability (with true strictness). Returns an exact witness
/// point — the centroid of all closed-feasible vertices — or `None`.
pub fn check_sat(rows: &[(LinExpr, RelOp)]) -> Option<BTreeMap<VarId, Rat>> {
    let norm = normalize(rows);
    let vertices = feasible_vertices(rows);
    if vertices.is_empty() {
        return None;
    }
    let vars = collect_vars(&norm);
    let count = rat(vertices.len() as i64);
    let centroid: BTreeMap<VarId, Rat> = vars
        .iter()
        .map(|v| {
            let sum: Rat = vertices
                .iter()
                .map(|p| p[v].clone())
                .fold(Rat::zero(), |a, b| a + b);
            (*v, sum / count.clone())
        })
        .collect();
    if norm
        .iter()
        .all(|(d, op)| strict_ok(&eval(d, &centroid), *op))
    {
        Some(centroid)
    } else {
        None
    }
}

/// Does the system entail `delta op 0`? Decided by refutation.
pub fn entails(rows: &[(LinExpr, RelOp)], delta: &LinExpr, op: RelOp) -> bool {
    let with = |extra_delta: LinExpr, extra_op: RelOp| -> bool {
        let mut sys = rows.to_vec();
        sys.push((extra_delta, extra_op));
        check_sat(&sys).is_none()
    };
    match op {
        RelOp::Le => with(delta.scale(&rat(-1)), RelOp::Lt),
        RelOp::Lt => with(delta.scale(&rat(-1)), RelOp::Le),
        RelOp::Ge => with(delta.clone(), RelOp::Lt),
        RelOp::Gt => with(delta.clone(), RelOp::Le),
        RelOp::Eq => with(delta.clone(), RelOp::Lt) && with(delta.scale(&rat(-1)), RelOp::Lt),
        RelOp::Ne => with(delta.clone(), RelOp::Eq),
    }
}
