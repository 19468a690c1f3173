//! Joins over database functions, semi-join reduction and outer marking.
//!
//! Members of the input database are joined along equality conditions,
//! either given explicitly or derived from the catalog's relationships: a
//! relationship function member is linked to each participating member on
//! the paired key parameters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::eval::values_equal;
use crate::expr::JoinPair;
use crate::model::{
    BaseType, Catalog, DomainConstraint, Evaluator, FnKind, FunctionValue, Key, Param, ParamSig,
    Value, ROOT_NAME,
};

use super::{member_name, tuple_attrs};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Col {
    Key(usize),
    Attr(String),
}

#[derive(Clone, Debug)]
struct Cond {
    left: (usize, Col),
    right: (usize, Col),
}

struct Member {
    name: String,
    rel: Arc<FunctionValue>,
    rows: Vec<(Key, Value)>,
    /// Rows that can take part in a join result (relationship predicate
    /// rows mapped to `false` cannot).
    live: Vec<usize>,
}

/// Members of a database function plus the equality conditions linking them.
pub struct JoinGraph {
    members: Vec<Member>,
    conds: Vec<Cond>,
    /// `cells[c][side][row]`: value of condition `c`'s column on that side.
    cells: Vec<[Vec<Option<Value>>; 2]>,
}

impl JoinGraph {
    pub fn build(
        dbf: &FunctionValue,
        on: Option<&[JoinPair]>,
        catalog: &Catalog,
        ev: &mut dyn Evaluator,
    ) -> Result<JoinGraph> {
        let mut members = Vec::new();
        for (key, value) in dbf.mappings(ev)? {
            let name = member_name(&key)?;
            let Some(rel) = value.as_func() else {
                return Err(Error::TypeMismatch(format!(
                    "member {name} is a {}, not a function",
                    value.type_name()
                )));
            };
            let rows = rel.mappings(ev)?;
            let live = rows
                .iter()
                .enumerate()
                .filter(|(_, (_, v))| *v != Value::Bool(false))
                .map(|(i, _)| i)
                .collect();
            members.push(Member {
                name,
                rel: rel.clone(),
                rows,
                live,
            });
        }
        let index: BTreeMap<&str, usize> = members
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.as_str(), i))
            .collect();

        let mut conds = Vec::new();
        match on {
            Some(pairs) => {
                for pair in pairs {
                    let side = |c: &crate::expr::ColRef| -> Result<(usize, Col)> {
                        let m = *index.get(c.relation.as_str()).ok_or_else(|| {
                            Error::UnresolvableCondition(format!(
                                "{c}: no member named {}",
                                c.relation
                            ))
                        })?;
                        Ok(match members[m].rel.sig().position(&c.column) {
                            Some(i) => (m, Col::Key(i)),
                            None => (m, Col::Attr(c.column.clone())),
                        })
                    };
                    conds.push(Cond {
                        left: side(&pair.left)?,
                        right: side(&pair.right)?,
                    });
                }
            }
            None => {
                for decl in catalog.relationships() {
                    let Some(&rf) = index.get(decl.function.as_str()) else {
                        continue;
                    };
                    let rf_sig = members[rf].rel.sig().clone();
                    for (i, (fname, pname)) in decl.participants.iter().enumerate() {
                        if fname == ROOT_NAME {
                            continue;
                        }
                        let Some(&m) = index.get(fname.as_str()) else {
                            continue;
                        };
                        let p = members[m].rel.sig().position(pname).ok_or_else(|| {
                            Error::UnresolvableCondition(format!(
                                "member {fname} has no key parameter {pname}"
                            ))
                        })?;
                        let q = decl.paired_param(&rf_sig, i).ok_or_else(|| {
                            Error::UnresolvableCondition(format!(
                                "member {} has no parameter paired with {fname}.{pname}",
                                decl.function
                            ))
                        })?;
                        conds.push(Cond {
                            left: (rf, Col::Key(q)),
                            right: (m, Col::Key(p)),
                        });
                    }
                }
            }
        }

        check_connected(&members, &conds)?;

        let mut cells = Vec::with_capacity(conds.len());
        for c in &conds {
            cells.push([
                column_cells(&members[c.left.0], &c.left.1, ev)?,
                column_cells(&members[c.right.0], &c.right.1, ev)?,
            ]);
        }
        Ok(JoinGraph {
            members,
            conds,
            cells,
        })
    }

    pub fn member_names(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|m| m.name.as_str())
    }

    /// Every combination of live rows, one per member, satisfying all
    /// conditions. Members are placed in breadth-first order over the
    /// conditions; each new member is probed through an index on its first
    /// linking condition.
    fn combinations(&self) -> Vec<Vec<usize>> {
        let n = self.members.len();
        if n == 0 {
            return Vec::new();
        }
        let order = self.placement_order();
        let mut placed = vec![false; n];
        let mut partial: Vec<Vec<usize>> = vec![vec![usize::MAX; n]];
        for &m in &order {
            // conditions decidable once m is placed
            let linking: Vec<usize> = (0..self.conds.len())
                .filter(|&c| {
                    let (l, r) = (self.conds[c].left.0, self.conds[c].right.0);
                    (l == m && (placed[r] || r == m)) || (r == m && placed[l])
                })
                .collect();
            let probe = linking.iter().copied().find(|&c| {
                let (l, r) = (self.conds[c].left.0, self.conds[c].right.0);
                l != r
            });
            let index = probe.map(|c| {
                let side = if self.conds[c].left.0 == m { 0 } else { 1 };
                let mut idx: BTreeMap<Value, Vec<usize>> = BTreeMap::new();
                for &row in &self.members[m].live {
                    if let Some(v) = &self.cells[c][side][row] {
                        idx.entry(coarse(v)).or_default().push(row);
                    }
                }
                (c, side, idx)
            });
            let mut next = Vec::new();
            for assignment in partial {
                let candidates: Vec<usize> = match &index {
                    Some((c, side, idx)) => {
                        let other = 1 - side;
                        let other_member = if other == 0 {
                            self.conds[*c].left.0
                        } else {
                            self.conds[*c].right.0
                        };
                        match &self.cells[*c][other][assignment[other_member]] {
                            Some(v) => idx.get(&coarse(v)).cloned().unwrap_or_default(),
                            None => Vec::new(),
                        }
                    }
                    None => self.members[m].live.clone(),
                };
                for row in candidates {
                    let mut a = assignment.clone();
                    a[m] = row;
                    if linking.iter().all(|&c| self.holds(c, &a)) {
                        next.push(a);
                    }
                }
            }
            partial = next;
            placed[m] = true;
        }
        partial
    }

    fn holds(&self, c: usize, assignment: &[usize]) -> bool {
        let (l, r) = (self.conds[c].left.0, self.conds[c].right.0);
        match (
            &self.cells[c][0][assignment[l]],
            &self.cells[c][1][assignment[r]],
        ) {
            (Some(a), Some(b)) => values_equal(a, b),
            _ => false,
        }
    }

    fn placement_order(&self) -> Vec<usize> {
        let n = self.members.len();
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(m) = queue.pop_front() {
                order.push(m);
                for c in &self.conds {
                    for (a, b) in [(c.left.0, c.right.0), (c.right.0, c.left.0)] {
                        if a == m && !seen[b] {
                            seen[b] = true;
                            queue.push_back(b);
                        }
                    }
                }
            }
        }
        order
    }

    /// True when semi-join reduction alone is exact: at most one condition
    /// per member pair, no self-conditions and no cycles.
    fn is_tree(&self) -> bool {
        let mut pairs = BTreeSet::new();
        for c in &self.conds {
            let (a, b) = (c.left.0.min(c.right.0), c.left.0.max(c.right.0));
            if a == b || !pairs.insert((a, b)) {
                return false;
            }
        }
        pairs.len() + 1 == self.members.len().max(1)
    }

    /// For each member, the live rows taking part in at least one complete
    /// join result. Semi-joins run to fixpoint; graphs that are not trees are
    /// then checked against the full join.
    fn participants(&self) -> Vec<BTreeSet<usize>> {
        let mut alive: Vec<BTreeSet<usize>> = self
            .members
            .iter()
            .map(|m| m.live.iter().copied().collect())
            .collect();
        loop {
            let mut changed = false;
            for c in 0..self.conds.len() {
                let (l, r) = (self.conds[c].left.0, self.conds[c].right.0);
                if l == r {
                    let keep: BTreeSet<usize> = alive[l]
                        .iter()
                        .copied()
                        .filter(|&row| {
                            matches!((&self.cells[c][0][row], &self.cells[c][1][row]),
                                (Some(a), Some(b)) if values_equal(a, b))
                        })
                        .collect();
                    changed |= keep.len() != alive[l].len();
                    alive[l] = keep;
                    continue;
                }
                for (side, member, other_member) in [(0, l, r), (1, r, l)] {
                    let other = 1 - side;
                    let mut idx: BTreeMap<Value, Vec<&Value>> = BTreeMap::new();
                    for &row in &alive[other_member] {
                        if let Some(v) = &self.cells[c][other][row] {
                            idx.entry(coarse(v)).or_default().push(v);
                        }
                    }
                    let keep: BTreeSet<usize> = alive[member]
                        .iter()
                        .copied()
                        .filter(|&row| match &self.cells[c][side][row] {
                            Some(v) => idx
                                .get(&coarse(v))
                                .is_some_and(|cands| cands.iter().any(|w| values_equal(v, w))),
                            None => false,
                        })
                        .collect();
                    changed |= keep.len() != alive[member].len();
                    alive[member] = keep;
                }
            }
            if !changed {
                break;
            }
        }
        if self.is_tree() {
            return alive;
        }
        let mut exact = vec![BTreeSet::new(); self.members.len()];
        for combo in self.combinations() {
            for (m, row) in combo.into_iter().enumerate() {
                exact[m].insert(row);
            }
        }
        exact
    }

    /// Output key columns: member key parameters in member order, with
    /// columns equated by a key-to-key condition collapsed into the first.
    fn key_columns(&self) -> Vec<(usize, usize)> {
        let cols: Vec<(usize, usize)> = self
            .members
            .iter()
            .enumerate()
            .flat_map(|(m, mem)| (0..mem.rel.sig().arity()).map(move |i| (m, i)))
            .collect();
        let pos = |c: (usize, usize)| cols.iter().position(|x| *x == c).unwrap();
        let mut parent: Vec<usize> = (0..cols.len()).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for c in &self.conds {
            if let ((lm, Col::Key(li)), (rm, Col::Key(ri))) = (&c.left, &c.right) {
                let a = find(&mut parent, pos((*lm, *li)));
                let b = find(&mut parent, pos((*rm, *ri)));
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
        (0..cols.len())
            .filter(|&i| find(&mut parent, i) == i)
            .map(|i| cols[i])
            .collect()
    }

    /// Output attribute name for each `(member, attribute)`: the plain name,
    /// or `member.attr` when several members define it.
    pub fn attribute_names(&self, ev: &mut dyn Evaluator) -> Result<BTreeMap<(String, String), String>> {
        let mut per_member: Vec<BTreeSet<String>> = Vec::new();
        for m in &self.members {
            let mut names = BTreeSet::new();
            for &row in &m.live {
                names.extend(row_attrs(m, &m.rows[row].1, ev)?.into_iter().map(|(n, _)| n));
            }
            per_member.push(names);
        }
        let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
        for names in &per_member {
            for n in names {
                *owners.entry(n.as_str()).or_default() += 1;
            }
        }
        let mut out = BTreeMap::new();
        for (m, names) in self.members.iter().zip(&per_member) {
            for n in names {
                let shown = if owners[n.as_str()] > 1 {
                    format!("{}.{}", m.name, n)
                } else {
                    n.clone()
                };
                out.insert((m.name.clone(), n.clone()), shown);
            }
        }
        Ok(out)
    }

    /// Whether every live row of `member` defines the same attribute names.
    pub fn homogeneous(&self, member: &str, ev: &mut dyn Evaluator) -> Result<bool> {
        let Some(m) = self.members.iter().find(|m| m.name == member) else {
            return Ok(false);
        };
        let mut first: Option<Vec<String>> = None;
        for &row in &m.live {
            let names: Vec<String> = row_attrs(m, &m.rows[row].1, ev)?
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            match &first {
                None => first = Some(names),
                Some(f) if *f != names => return Ok(false),
                Some(_) => {}
            }
        }
        Ok(true)
    }
}

/// Index key for equality probing: numbers collapse to their float value so
/// that Int and Float keys meet; candidates are re-checked with
/// [`values_equal`].
fn coarse(v: &Value) -> Value {
    match v {
        Value::Int(i) => Value::float(*i as f64),
        Value::Float(f) if f.0 == 0.0 => Value::float(0.0),
        _ => v.clone(),
    }
}

fn column_cells(m: &Member, col: &Col, ev: &mut dyn Evaluator) -> Result<Vec<Option<Value>>> {
    let mut out = vec![None; m.rows.len()];
    for &row in &m.live {
        let (key, value) = &m.rows[row];
        out[row] = Some(match col {
            Col::Key(i) => key[*i].clone(),
            Col::Attr(a) => match value {
                Value::Func(t) => match t.apply(&[Value::text(a.as_str())], ev) {
                    Ok(v) => v,
                    Err(Error::UndefinedInput(_) | Error::Domain(_)) => {
                        return Err(Error::UnresolvableCondition(format!(
                            "a row of {} has no attribute {a}",
                            m.name
                        )))
                    }
                    Err(e) => return Err(e),
                },
                other => {
                    return Err(Error::TypeMismatch(format!(
                        "join on attribute {a} of {}, whose rows are {} values",
                        m.name,
                        other.type_name()
                    )))
                }
            },
        });
    }
    Ok(out)
}

/// Attributes a member row contributes to a join result.
fn row_attrs(m: &Member, value: &Value, ev: &mut dyn Evaluator) -> Result<Vec<(String, Value)>> {
    match value {
        Value::Func(t) => tuple_attrs(t, ev),
        Value::Bool(_) => Ok(Vec::new()),
        other => Ok(vec![(m.name.clone(), other.clone())]),
    }
}

fn check_connected(members: &[Member], conds: &[Cond]) -> Result<()> {
    if members.len() <= 1 {
        return Ok(());
    }
    let mut seen = vec![false; members.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(m) = stack.pop() {
        for c in conds {
            for (a, b) in [(c.left.0, c.right.0), (c.right.0, c.left.0)] {
                if a == m && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    if seen.iter().all(|s| *s) {
        return Ok(());
    }
    let unreachable: Vec<&str> = members
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(m, _)| m.name.as_str())
        .collect();
    Err(Error::DisconnectedSchema(format!(
        "{} not linked to {}",
        unreachable.join(", "),
        members[0].name
    )))
}

/// Joins all members of a database function into one relation function.
pub fn join(
    dbf: &FunctionValue,
    on: Option<&[JoinPair]>,
    catalog: &Catalog,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let graph = JoinGraph::build(dbf, on, catalog, ev)?;
    match graph.members.len() {
        0 => {
            return Err(Error::UnresolvableCondition(
                "join of a database without members".into(),
            ))
        }
        1 => return Ok(graph.members[0].rel.as_ref().clone()),
        _ => {}
    }
    let key_cols = graph.key_columns();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &(m, i) in &key_cols {
        *counts
            .entry(graph.members[m].rel.sig().params()[i].name.as_str())
            .or_default() += 1;
    }
    let params = key_cols
        .iter()
        .map(|&(m, i)| {
            let p = &graph.members[m].rel.sig().params()[i];
            let name = if counts[p.name.as_str()] > 1 {
                format!("{}.{}", graph.members[m].name, p.name)
            } else {
                p.name.clone()
            };
            Param::new(name, p.constraint.clone())
        })
        .collect();
    let sig = ParamSig::new(params)?;
    let names = graph.attribute_names(ev)?;

    let mut rows = Vec::new();
    for combo in graph.combinations() {
        let key: Key = key_cols
            .iter()
            .map(|&(m, i)| graph.members[m].rows[combo[m]].0[i].clone())
            .collect();
        let mut attrs = Vec::new();
        for (m, &row) in graph.members.iter().zip(&combo) {
            for (a, v) in row_attrs(m, &m.rows[row].1, ev)? {
                attrs.push((names[&(m.name.clone(), a)].clone(), v));
            }
        }
        rows.push((key, Value::func(FunctionValue::record(attrs)?)));
    }
    Ok(FunctionValue::extensional_with(sig, DomainConstraint::any(), rows, ev)?.with_kind(FnKind::Relation))
}

/// Restricts every member to the rows that take part in a complete join.
pub fn reduce_db(dbf: &FunctionValue, catalog: &Catalog, ev: &mut dyn Evaluator) -> Result<FunctionValue> {
    let graph = JoinGraph::build(dbf, None, catalog, ev)?;
    let alive = graph.participants();
    let map = graph
        .members
        .iter()
        .zip(alive)
        .map(|(m, keep)| {
            let rows = keep
                .into_iter()
                .map(|r| m.rows[r].clone())
                .collect::<BTreeMap<_, _>>();
            (
                vec![Value::text(m.name.as_str())],
                Value::func(restricted(&m.rel, rows)),
            )
        })
        .collect();
    Ok(FunctionValue::from_parts_unchecked(
        dbf.sig().clone(),
        dbf.codomain().clone(),
        dbf.kind(),
        map,
    ))
}

/// Replaces each marked member by a function from `"inner"` / `"outer"` to
/// the rows that do / do not take part in a complete join.
pub fn outer_mark(
    names: &[String],
    dbf: &FunctionValue,
    catalog: &Catalog,
    ev: &mut dyn Evaluator,
) -> Result<FunctionValue> {
    let graph = JoinGraph::build(dbf, None, catalog, ev)?;
    for n in names {
        if !graph.members.iter().any(|m| &m.name == n) {
            return Err(Error::UnknownRelation(format!(
                "{n} is not a member of the database"
            )));
        }
    }
    let alive = graph.participants();
    let part_sig = ParamSig::single(
        "part",
        DomainConstraint::finite_set(
            BaseType::Text,
            [Value::text("inner"), Value::text("outer")],
        )?,
    );
    let mut map = BTreeMap::new();
    for (m, keep) in graph.members.iter().zip(alive) {
        let value = if names.contains(&m.name) {
            let (mut inner, mut outer) = (BTreeMap::new(), BTreeMap::new());
            for (i, row) in m.rows.iter().enumerate() {
                if keep.contains(&i) {
                    inner.insert(row.0.clone(), row.1.clone());
                } else {
                    outer.insert(row.0.clone(), row.1.clone());
                }
            }
            Value::func(FunctionValue::from_parts_unchecked(
                part_sig.clone(),
                DomainConstraint::any(),
                FnKind::Database,
                BTreeMap::from([
                    (vec![Value::text("inner")], Value::func(restricted(&m.rel, inner))),
                    (vec![Value::text("outer")], Value::func(restricted(&m.rel, outer))),
                ]),
            ))
        } else {
            Value::Func(m.rel.clone())
        };
        map.insert(vec![Value::text(m.name.as_str())], value);
    }
    Ok(FunctionValue::from_parts_unchecked(
        dbf.sig().clone(),
        dbf.codomain().clone(),
        dbf.kind(),
        map,
    ))
}

fn restricted(rel: &FunctionValue, rows: BTreeMap<Key, Value>) -> FunctionValue {
    FunctionValue::from_parts_unchecked(rel.sig().clone(), rel.codomain().clone(), rel.kind(), rows)
}
