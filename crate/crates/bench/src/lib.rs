//! Shared fixtures for the benchmarks.

use std::fmt::Write;

use fql_core::persist::load_fdb;
use fql_core::Catalog;

/// Shop database with `n` customers, `n / 2` products and `2 n` orders.
/// Deterministic: the same `n` always yields the same text.
pub fn shop_fdb(n: usize) -> String {
    let products = (n / 2).max(1);
    let mut out = String::from("fdb 1\nrelation customers(cid: int)\n");
    for i in 0..n {
        let state = ["CA", "NY", "TX"][i % 3];
        writeln!(out, "row {i} -> {{age={}, name=\"c{i}\", state=\"{state}\"}}", 20 + i % 50).unwrap();
    }
    out.push_str("end\nrelation order(cid: int, pid: int)\n");
    let mut pairs: Vec<(usize, usize)> = (0..2 * n).map(|i| ((i * 7) % n, (i * 13) % products)).collect();
    pairs.sort();
    pairs.dedup();
    for (c, p) in pairs {
        writeln!(out, "row {c} {p} -> {{qty={}}}", 1 + (c + p) % 5).unwrap();
    }
    out.push_str("end\nrelation products(pid: int)\n");
    for i in 0..products {
        writeln!(out, "row {i} -> {{name=\"p{i}\", price={}}}", 1 + i % 9).unwrap();
    }
    out.push_str("end\nrel order links customers.cid, products.pid\n");
    out
}

pub fn shop(n: usize) -> Catalog {
    load_fdb(&shop_fdb(n)).expect("generated fixture loads")
}

/// Queries whose optimized and plain evaluations are compared.
pub const QUERIES: [(&str, &str); 4] = [
    ("filter_join", "filter(fn(t) => t.state == \"NY\", join(DB))"),
    ("filter_aggregate", "filter(fn(g) => g.age > 60, group_and_aggregate(by=[\"age\"], count=Count(), DB.customers))"),
    ("group_then_aggregate", "aggregate(n=Count(), oldest=Max(\"age\"), group(by=[\"state\"], DB.customers))"),
    ("reduce_join", "join(reduce_DB(DB))"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic_and_loads() {
        assert_eq!(shop_fdb(40), shop_fdb(40));
        assert_eq!(shop(40).names().count(), 3);
    }

    #[test]
    fn queries_evaluate_alike() {
        use fql_core::engine::{ReadMode, Store};
        let session = Store::new(shop(40)).session();
        for (name, src) in QUERIES {
            let e = fql_core::surface::parse_expr(src).unwrap();
            let b = fql_core::Bindings::new();
            let plain = session.read(&e, &b, ReadMode::Plain);
            assert!(plain.is_ok(), "{name}: {plain:?}");
            assert_eq!(session.read(&e, &b, ReadMode::Optimized), plain, "{name}");
        }
    }
}
