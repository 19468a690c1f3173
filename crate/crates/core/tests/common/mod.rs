//! Seeded generators shared by the integration tests.
//!
//! `FQL_SEED` fixes the base seed; every generator stream is derived from it
//! so a failing case can be replayed by exporting the printed seed.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fql_core::expr::{Builtin, ColRef};
use fql_core::model::{Catalog, Float, Value};
use fql_core::persist::load_fdb;
use fql_core::{AggKind, AggSpec, BinOp, Expr, GroupBy, GroupingSet, JoinPair, Operator, SetOpKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 0x00f0_11da_7a5e_ed00;

pub fn base_seed() -> u64 {
    match std::env::var("FQL_SEED") {
        Ok(s) => s.trim().parse().expect("FQL_SEED must be an unsigned integer"),
        Err(_) => DEFAULT_SEED,
    }
}

pub fn rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed() ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn fixture(name: &str) -> String {
    let p = format!("{}/../cli/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{p}: {e}"))
}

pub fn shop() -> Catalog {
    load_fdb(&fixture("shop.fdb")).unwrap()
}

pub fn bank() -> Catalog {
    load_fdb(&fixture("bank.fdb")).unwrap()
}

// ---- databases ----

pub const RELATIONS: [&str; 4] = ["customers", "order", "products", "reviews"];
const NAMES: [&str; 5] = ["Alice", "Bob", "Carol", "Dora", "Eve"];
const STATES: [&str; 3] = ["NY", "CA", "TX"];
const ITEMS: [&str; 4] = ["ink", "pen", "pad", "cup"];

fn q(s: &str) -> String {
    format!("{s:?}")
}

fn pick<'a, T>(r: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(r).unwrap()
}

/// Text of a random database in the fdb format: up to four relations of up
/// to eight rows each, with the relationships their presence allows. With
/// `connected` the customers/order/products triangle is always present and
/// no view is declared.
pub fn random_fdb(r: &mut ChaCha8Rng, connected: bool) -> String {
    let mut present: Vec<&str> = RELATIONS
        .iter()
        .copied()
        .filter(|_| r.gen_bool(0.7))
        .collect();
    if connected {
        for n in ["customers", "order", "products"] {
            if !present.contains(&n) {
                present.push(n);
            }
        }
        present.sort();
    }
    if present.is_empty() {
        present.push("customers");
    }
    let mut out = String::from("fdb 1\n");
    for &rel in &present {
        let rows = r.gen_range(0..=8);
        let mut keys = BTreeSet::new();
        let header = match rel {
            "customers" => "relation customers(cid: int)",
            "order" => "relation order(cid: int, pid: int)",
            "products" => "relation products(pid: int)",
            _ => "relation reviews(pid: int, rid: int)",
        };
        writeln!(out, "{header}").unwrap();
        for _ in 0..rows {
            let (key, attrs) = match rel {
                "customers" => {
                    let mut attrs = vec![];
                    if !r.gen_ratio(1, 16) {
                        attrs.push(format!("age={}", pick(r, &[20, 30, 45, 60])));
                    }
                    attrs.push(format!("name={}", q(pick(r, &NAMES))));
                    if r.gen_bool(0.5) {
                        attrs.push(format!("score={:?}", pick(r, &[0.5, 1.25, 2.0, -3.5])));
                    }
                    attrs.push(format!("state={}", q(pick(r, &STATES))));
                    (format!("{}", r.gen_range(1..=10)), attrs)
                }
                "order" => (
                    format!("{} {}", r.gen_range(1..=10), r.gen_range(1..=8)),
                    vec![format!("qty={}", r.gen_range(1..=5))],
                ),
                "products" => (
                    format!("{}", r.gen_range(1..=8)),
                    vec![
                        format!("name={}", q(pick(r, &ITEMS))),
                        format!("price={}", r.gen_range(1..=9)),
                    ],
                ),
                _ => (
                    format!("{} {}", r.gen_range(1..=8), r.gen_range(1..=3)),
                    vec![format!("stars={}", r.gen_range(1..=5))],
                ),
            };
            if keys.insert(key.clone()) {
                writeln!(out, "row {key} -> {{{}}}", attrs.join(", ")).unwrap();
            }
        }
        out.push_str("end\n");
    }
    let has = |n: &str| present.contains(&n);
    if has("order") && has("customers") && has("products") {
        out.push_str("rel order links customers.cid, products.pid\n");
    }
    if has("reviews") && has("products") {
        out.push_str("rel reviews links products.pid\n");
    }
    if !connected && has("customers") && r.gen_ratio(1, 4) {
        out.push_str("view locals = filter(fn(c) => c.state == \"NY\", DB.customers)\n");
    }
    out
}

pub fn random_catalog(r: &mut ChaCha8Rng, connected: bool) -> Catalog {
    let text = random_fdb(r, connected);
    load_fdb(&text).unwrap_or_else(|e| panic!("generated database does not load: {e}\n{text}"))
}

// ---- query expressions ----

const ATTRS: [&str; 10] = [
    "age", "name", "state", "score", "price", "qty", "stars", "count", "customers.name", "total",
];
const BY: [&[&str]; 6] = [
    &["age"],
    &["state"],
    &["age", "state"],
    &[],
    &["name"],
    &["price"],
];

/// Random query expressions over the schema of [`random_fdb`]. Shapes the
/// rewrite rules look for are generated on purpose; so are failing ones
/// (missing relations, missing attributes, bad operands).
pub struct QueryGen<'a> {
    pub r: &'a mut ChaCha8Rng,
}

impl QueryGen<'_> {
    pub fn query(&mut self) -> Expr {
        match self.r.gen_range(0..10) {
            0..=5 => self.rel(3),
            6..=8 => self.db(3),
            _ => self.scalar(),
        }
    }

    fn var(&mut self) -> &'static str {
        pick(self.r, &["t", "t", "x", "r"])
    }

    fn lit_for(&mut self, attr: &str) -> Expr {
        match attr {
            "age" => Expr::lit(*pick(self.r, &[20i64, 30, 40, 45, 60])),
            "name" | "customers.name" => Expr::lit(*pick(self.r, &["Alice", "Bob", "ink", "pen"])),
            "state" => Expr::lit(*pick(self.r, &STATES)),
            "score" => Expr::lit(*pick(self.r, &[0.0, 1.25, -1.0])),
            _ => Expr::lit(self.r.gen_range(0i64..=6)),
        }
    }

    /// Body of a row predicate over parameter `v`.
    fn pred_body(&mut self, v: &str, attrs: &[&str], depth: u32) -> Expr {
        let attr = *pick(self.r, attrs);
        let read = Expr::attr(Expr::param(v), attr);
        let cmp = *pick(
            self.r,
            &[BinOp::Gt, BinOp::Ge, BinOp::Lt, BinOp::Le, BinOp::Eq, BinOp::Ne],
        );
        match self.r.gen_range(0..20) {
            0..=9 => {
                let c = self.lit_for(attr);
                Expr::bin(cmp, read, c)
            }
            10 | 11 if depth > 0 => {
                let op = *pick(self.r, &[BinOp::And, BinOp::Or]);
                let l = self.pred_body(v, attrs, depth - 1);
                let rr = self.pred_body(v, attrs, depth - 1);
                Expr::bin(op, l, rr)
            }
            12 if depth > 0 => Expr::not(self.pred_body(v, attrs, depth - 1)),
            13 => {
                let c = self.lit_for(attr);
                Expr::bin(cmp, Expr::bin(BinOp::Add, read, Expr::lit(1)), c)
            }
            14 => Expr::in_(
                read,
                Expr::List(vec![Expr::lit("NY"), Expr::lit("CA"), Expr::lit(45)]),
            ),
            15 => {
                let c = self.lit_for(attr);
                let k = Expr::bin(BinOp::Mul, Expr::lit(2), Expr::lit(3));
                Expr::bin(
                    BinOp::And,
                    Expr::bin(BinOp::Gt, k, Expr::lit(5)),
                    Expr::bin(cmp, read, c),
                )
            }
            16 => Expr::bin(BinOp::Gt, Expr::bin(BinOp::Div, read, Expr::lit(0)), Expr::lit(1)),
            17 => read,
            18 => Expr::bin(cmp, read, Expr::attr(Expr::param(v), attr)),
            _ => Expr::lit(self.r.gen_bool(0.8)),
        }
    }

    fn pred(&mut self, attrs: &[&str]) -> Expr {
        let v = self.var();
        let body = self.pred_body(v, attrs, 2);
        Expr::lambda([v], body)
    }

    fn specs(&mut self) -> Vec<AggSpec> {
        let n = self.r.gen_range(1..=2);
        let mut out = Vec::new();
        let outs = ["count", "total"];
        for i in 0..n {
            let spec = match self.r.gen_range(0..6) {
                0 | 1 => AggSpec::count(outs[i]),
                2 => AggSpec::over(outs[i], AggKind::Sum, *pick(self.r, &["price", "qty", "age", "score"])),
                3 => AggSpec::over(outs[i], AggKind::Min, *pick(self.r, &["age", "name"])),
                4 => AggSpec::over(outs[i], AggKind::Max, *pick(self.r, &["price", "stars"])),
                _ => AggSpec::over(outs[i], AggKind::Avg, *pick(self.r, &["age", "qty", "score"])),
            };
            out.push(spec);
        }
        out
    }

    fn by(&mut self) -> Vec<String> {
        pick(self.r, &BY).iter().map(|s| s.to_string()).collect()
    }

    fn base_rel(&mut self) -> Expr {
        let name = *pick(self.r, &["customers", "customers", "order", "products", "reviews", "locals"]);
        match self.r.gen_range(0..3) {
            0 => Expr::name(name),
            1 => Expr::path(["DB", name]),
            _ => Expr::apply(Expr::name("DB"), vec![Expr::lit(name)]),
        }
    }

    pub fn rel(&mut self, d: u32) -> Expr {
        if d == 0 {
            return self.base_rel();
        }
        match self.r.gen_range(0..16) {
            0 => self.base_rel(),
            1 | 2 => {
                let p = self.pred(&ATTRS[..7]);
                Expr::filter(p, self.rel(d - 1))
            }
            3 => {
                let p = self.pred(&["age", "state", "name"]);
                let q2 = self.pred(&["age", "state", "score"]);
                Expr::filter(p, Expr::filter(q2, self.rel(d - 1)))
            }
            4 => {
                let specs = self.specs();
                let by = self.by();
                Expr::Op(
                    Operator::Aggregate(specs),
                    vec![Expr::Op(Operator::Group(GroupBy::Attrs(by)), vec![self.rel(d - 1)])],
                )
            }
            5 => {
                let specs = self.specs();
                let by = self.by();
                let gaa = Expr::Op(
                    Operator::GroupAndAggregate(GroupBy::Attrs(by.clone()), specs),
                    vec![self.rel(d - 1)],
                );
                let mut attrs: Vec<&str> = by.iter().map(String::as_str).collect();
                if attrs.is_empty() || self.r.gen_ratio(1, 4) {
                    attrs.push("count");
                }
                let p = self.pred(&attrs);
                Expr::filter(p, gaa)
            }
            6 => {
                let v = self.var();
                let f = Expr::lambda([v], Expr::attr(Expr::param(v), "state"));
                let specs = self.specs();
                Expr::Op(
                    Operator::GroupAndAggregate(GroupBy::KeyFn, specs),
                    vec![f, self.rel(d - 1)],
                )
            }
            7 | 8 => Expr::Op(Operator::Join(None), vec![self.db(d - 1)]),
            9 => Expr::Op(
                Operator::Join(Some(vec![
                    JoinPair {
                        left: ColRef::new("customers", "cid"),
                        right: ColRef::new("order", "cid"),
                    },
                    JoinPair {
                        left: ColRef::new("order", "pid"),
                        right: ColRef::new("products", "pid"),
                    },
                ])),
                vec![self.db(d - 1)],
            ),
            10 | 11 => {
                let p = self.pred(&["age", "price", "qty", "state", "stars", "customers.name"]);
                let inner = if self.r.gen_bool(0.5) {
                    Expr::Op(Operator::ReduceDb, vec![self.db(d - 1)])
                } else {
                    self.db(d - 1)
                };
                Expr::filter(p, Expr::Op(Operator::Join(None), vec![inner]))
            }
            12 | 13 => {
                let m = *pick(self.r, &["customers", "order", "products"]);
                Expr::attr(self.db(d - 1), m)
            }
            14 => {
                let part = *pick(self.r, &["inner", "outer"]);
                let db = Expr::Op(Operator::OuterMark(vec!["products".into()]), vec![self.db(d - 1)]);
                Expr::attr(Expr::attr(db, "products"), part)
            }
            _ => {
                let v = self.var();
                let body = Expr::bin(
                    BinOp::Eq,
                    Expr::attr(Expr::param(v), "state"),
                    Expr::lit("NY"),
                );
                Expr::filter(Expr::lambda([v], body), self.rel(d - 1))
            }
        }
    }

    pub fn db(&mut self, d: u32) -> Expr {
        if d == 0 {
            return Expr::name("DB");
        }
        match self.r.gen_range(0..14) {
            0 | 1 => Expr::name("DB"),
            2 | 3 => {
                let mut names: Vec<&str> = RELATIONS.to_vec();
                names.shuffle(self.r);
                names.truncate(self.r.gen_range(1..=4));
                let list = Expr::List(names.iter().map(|n| Expr::lit(*n)).collect());
                let body = Expr::in_(Expr::apply(Expr::param("kv"), vec![Expr::lit(0)]), list);
                Expr::filter(Expr::lambda(["kv"], body), self.db(d - 1))
            }
            4 | 5 => {
                let m = *pick(self.r, &["customers", "products", "order"]);
                let p = self.pred(&["age", "state", "price", "qty"]);
                let f = Expr::lambda(["rel"], Expr::filter(p, Expr::param("rel")));
                Expr::Op(Operator::MapMember(m.into()), vec![self.db(d - 1), f])
            }
            6 | 7 => Expr::Op(Operator::ReduceDb, vec![self.db(d - 1)]),
            8 => {
                let by = self.by();
                Expr::Op(Operator::Group(GroupBy::Attrs(by)), vec![self.rel(d - 1)])
            }
            9 => {
                let sets = vec![
                    GroupingSet {
                        by: vec!["age".into()],
                        aggs: vec![AggSpec::count("count")],
                        name: "by_age".into(),
                    },
                    GroupingSet {
                        by: self.by(),
                        aggs: self.specs(),
                        name: "other".into(),
                    },
                ];
                Expr::Op(Operator::GroupingSets(sets), vec![self.rel(d - 1)])
            }
            10 => {
                let op = pick(self.r, &[Operator::DeepCopy, Operator::Copy]).clone();
                Expr::Op(op, vec![self.db(d - 1)])
            }
            11 | 12 => {
                let k = *pick(
                    self.r,
                    &[SetOpKind::Union, SetOpKind::Intersect, SetOpKind::Minus, SetOpKind::Difference],
                );
                Expr::Op(Operator::SetOp(k), vec![self.db(d - 1), self.db(d - 1)])
            }
            _ => Expr::Op(Operator::OuterMark(vec!["customers".into()]), vec![self.db(d - 1)]),
        }
    }

    fn scalar(&mut self) -> Expr {
        match self.r.gen_range(0..4) {
            0 => Expr::bin(
                BinOp::Add,
                Expr::lit(self.r.gen_range(-5i64..5)),
                Expr::bin(BinOp::Mul, Expr::lit(3), Expr::lit(self.r.gen_range(-2i64..3))),
            ),
            1 => Expr::bin(BinOp::Div, Expr::lit(7), Expr::lit(self.r.gen_range(0i64..2))),
            2 => {
                let rel = self.rel(1);
                let k = Expr::lit(self.r.gen_range(1i64..=8));
                let attr = *pick(self.r, &["age", "name", "price"]);
                Expr::attr(Expr::apply(rel, vec![k]), attr)
            }
            _ => Expr::not(Expr::bin(BinOp::Lt, Expr::lit(1), Expr::lit(2))),
        }
    }
}

// ---- arbitrary syntax trees ----

const HEADS: [&str; 6] = ["a", "b", "customers", "DB", "x1", "age"];
const PARAMS: [&str; 3] = ["p", "q", "t"];
const FIELDS: [&str; 4] = ["a", "b", "age", "name"];

/// Arbitrary (mostly ill-typed) trees within the printable subset of the
/// grammar: no function or set literals, finite floats, and names that
/// cannot be mistaken for keywords, operators or bound parameters.
pub struct AstGen<'a> {
    pub r: &'a mut ChaCha8Rng,
    scope: Vec<String>,
}

impl<'a> AstGen<'a> {
    pub fn new(r: &'a mut ChaCha8Rng) -> Self {
        AstGen { r, scope: Vec::new() }
    }

    fn lit(&mut self) -> Value {
        match self.r.gen_range(0..9) {
            0 => Value::Int(self.r.gen_range(-1000..1000)),
            1 => Value::Int(*pick(self.r, &[i64::MIN, i64::MAX, 0])),
            2 => Value::Float(Float(self.r.gen_range(-64i32..64) as f64 / 8.0)),
            3 => Value::Float(Float(*pick(self.r, &[-0.0, 1e-7, 123456.789, 0.1]))),
            4 => Value::text(*pick(self.r, &["", "x", "say \"hi\"", "a\\b", "line\nbreak", "$foo", "ünï"])),
            5 => Value::Bool(self.r.gen_bool(0.5)),
            _ => Value::Int(self.r.gen_range(0..50)),
        }
    }

    fn names(&mut self, max: usize) -> Vec<String> {
        let n = self.r.gen_range(0..=max);
        (0..n).map(|_| pick(self.r, &FIELDS).to_string()).collect()
    }

    fn specs(&mut self) -> Vec<AggSpec> {
        let n = self.r.gen_range(1..=3);
        (0..n)
            .map(|i| {
                let out = ["c", "s", "m"][i].to_string();
                let kind = *pick(
                    self.r,
                    &[AggKind::Count, AggKind::Sum, AggKind::Min, AggKind::Max, AggKind::Avg],
                );
                let attr = (kind != AggKind::Count).then(|| pick(self.r, &FIELDS).to_string());
                AggSpec { out, kind, attr }
            })
            .collect()
    }

    pub fn expr(&mut self, d: u32) -> Expr {
        let leaf = d == 0 || self.r.gen_ratio(1, 5);
        if leaf {
            return match self.r.gen_range(0..4) {
                0 | 1 => Expr::Lit(self.lit()),
                2 if !self.scope.is_empty() => Expr::Param(pick(self.r, &self.scope.clone()).clone()),
                _ => {
                    let n = self.r.gen_range(1..=3);
                    Expr::Ref((0..n).map(|_| pick(self.r, &HEADS).to_string()).collect())
                }
            };
        }
        let d = d - 1;
        match self.r.gen_range(0..16) {
            0 => {
                let n = self.r.gen_range(0..=2);
                let f = self.expr(d);
                Expr::apply(f, (0..n).map(|_| self.expr(d)).collect())
            }
            1 => {
                let f = self.expr(d);
                Expr::attr(f, *pick(self.r, &FIELDS))
            }
            2 => {
                let n = self.r.gen_range(1..=2);
                let first = self.r.gen_range(0..PARAMS.len());
                let ps: Vec<String> = (0..n).map(|i| PARAMS[(first + i) % PARAMS.len()].to_string()).collect();
                let mark = self.scope.len();
                self.scope.extend(ps.iter().cloned());
                let body = self.expr(d);
                self.scope.truncate(mark);
                Expr::Lambda(ps, Box::new(body))
            }
            3 | 4 => {
                let op = *pick(
                    self.r,
                    &[
                        BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Lt, BinOp::Le,
                        BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne, BinOp::And, BinOp::Or,
                    ],
                );
                Expr::bin(op, self.expr(d), self.expr(d))
            }
            5 => Expr::not(self.expr(d)),
            6 => Expr::in_(self.expr(d), self.expr(d)),
            7 => {
                let n = self.r.gen_range(0..=3);
                let mut used = BTreeSet::new();
                let mut fields = Vec::new();
                for _ in 0..n {
                    let f = pick(self.r, &FIELDS).to_string();
                    if used.insert(f.clone()) {
                        fields.push((f, self.expr(d)));
                    }
                }
                Expr::Record(fields)
            }
            8 => {
                let n = self.r.gen_range(0..=3);
                Expr::List((0..n).map(|_| self.expr(d)).collect())
            }
            9 => Expr::Builtin(Builtin::RndStr, vec![self.expr(d)]),
            _ => self.op(d),
        }
    }

    fn op(&mut self, d: u32) -> Expr {
        let (op, operands) = match self.r.gen_range(0..13) {
            0 => (Operator::Filter, 2),
            1 => (Operator::Group(GroupBy::Attrs(self.names(2))), 1),
            2 => (Operator::Group(GroupBy::KeyFn), 2),
            3 => (Operator::Aggregate(self.specs()), 1),
            4 => (Operator::GroupAndAggregate(GroupBy::Attrs(self.names(2)), self.specs()), 1),
            5 => (Operator::GroupAndAggregate(GroupBy::KeyFn, self.specs()), 2),
            6 => {
                let n = self.r.gen_range(1..=3);
                let sets = (0..n)
                    .map(|i| GroupingSet {
                        by: self.names(2),
                        aggs: self.specs(),
                        name: format!("g{i}"),
                    })
                    .collect();
                (Operator::GroupingSets(sets), 1)
            }
            7 => {
                let on = self.r.gen_bool(0.5).then(|| {
                    vec![JoinPair {
                        left: ColRef::new("customers", "cid"),
                        right: ColRef::new("order", "cid"),
                    }]
                });
                (Operator::Join(on), 1)
            }
            8 => {
                let mut names = self.names(2);
                if names.is_empty() {
                    names.push("products".into());
                }
                (Operator::OuterMark(names), 1)
            }
            9 => (Operator::ReduceDb, 1),
            10 => {
                let k = *pick(
                    self.r,
                    &[SetOpKind::Union, SetOpKind::Intersect, SetOpKind::Minus, SetOpKind::Difference],
                );
                (Operator::SetOp(k), 2)
            }
            11 => (pick(self.r, &[Operator::DeepCopy, Operator::Copy]).clone(), 1),
            _ => (Operator::MapMember(pick(self.r, &FIELDS).to_string()), 2),
        };
        let inputs = (0..operands).map(|_| self.expr(d)).collect();
        Expr::Op(op, inputs)
    }
}

/// Error class or value, for comparing two evaluation paths.
pub fn outcome(r: fql_core::Result<Value>) -> Result<Value, &'static str> {
    r.map_err(|e| e.class())
}
