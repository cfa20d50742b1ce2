//! Query objects, fixed-length vector encodings, workload generation, and
//! the distribution divergence metric.
//!
//! A query is a connected set of tables plus normalized range predicates on
//! non-key attributes. Its encoding is x = x_join ⊕ x_sel: an n-entry 0/1
//! table indicator followed by interleaved (lb, ub) pairs for the m
//! attributes in schema order. Attributes of absent tables carry exactly
//! (0, 1), and a (0, 1) pair on a joined table canonically means "no
//! predicate", which makes encode/decode a bijection on canonical queries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{connected_subset, true_cardinality, Database, Schema};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    /// Join predicate: indices of the joined tables.
    pub tables: BTreeSet<usize>,
    /// attribute name → normalized (lb, ub), both in [0, 1].
    pub predicates: BTreeMap<String, (f64, f64)>,
}

impl Query {
    pub fn table_mask(&self) -> u64 {
        self.tables.iter().fold(0u64, |m, t| m | 1 << t)
    }
}

/// Flattened attribute layout shared by encodings and models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub n: usize,
    pub m: usize,
    /// Global attribute order: (table index, attribute name).
    pub attrs: Vec<(usize, String)>,
    /// Per table, the [start, end) range of its attributes in `attrs`.
    pub table_ranges: Vec<(usize, usize)>,
    /// Join graph as table-index pairs.
    pub edges: Vec<(usize, usize)>,
}

impl EncodingLayout {
    pub fn from_schema(schema: &Schema) -> Self {
        let mut attrs = Vec::new();
        let mut table_ranges = Vec::new();
        for (ti, t) in schema.tables.iter().enumerate() {
            let start = attrs.len();
            for a in &t.attributes {
                if !t.key_attributes.contains(&a.name) {
                    attrs.push((ti, a.name.clone()));
                }
            }
            table_ranges.push((start, attrs.len()));
        }
        EncodingLayout {
            n: schema.n(),
            m: attrs.len(),
            attrs,
            table_ranges,
            edges: schema.edge_pairs(),
        }
    }

    pub fn encoding_dim(&self) -> usize {
        self.n + 2 * self.m
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|(_, a)| a == name)
    }

    /// Connectivity check on table subsets, mirroring the schema join graph.
    fn connected(&self, subset: &[usize]) -> bool {
        if subset.is_empty() {
            return false;
        }
        if subset.len() == 1 {
            return subset[0] < self.n;
        }
        let mut reach = vec![subset[0]];
        let mut frontier = vec![subset[0]];
        while let Some(t) = frontier.pop() {
            for &(a, b) in &self.edges {
                let other = if a == t {
                    b
                } else if b == t {
                    a
                } else {
                    continue;
                };
                if subset.contains(&other) && !reach.contains(&other) {
                    reach.push(other);
                    frontier.push(other);
                }
            }
        }
        reach.len() == subset.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryEncoding {
    pub x_join: Vec<f64>,
    pub x_sel: Vec<f64>,
}

impl QueryEncoding {
    pub fn dim(&self) -> usize {
        self.x_join.len() + self.x_sel.len()
    }

    /// Full vector x = x_join ⊕ x_sel.
    pub fn x(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.x_join);
        v.extend_from_slice(&self.x_sel);
        v
    }

    pub fn from_x(x: &[f64], layout: &EncodingLayout) -> Result<QueryEncoding> {
        if x.len() != layout.encoding_dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.encoding_dim(),
                got: x.len(),
            });
        }
        Ok(QueryEncoding {
            x_join: x[..layout.n].to_vec(),
            x_sel: x[layout.n..].to_vec(),
        })
    }

    pub fn validate(&self, layout: &EncodingLayout) -> Result<()> {
        if self.x_join.len() != layout.n || self.x_sel.len() != 2 * layout.m {
            return Err(Error::InvalidEncoding("encoding dimensions mismatch".into()));
        }
        for v in &self.x_join {
            if *v != 0.0 && *v != 1.0 {
                return Err(Error::InvalidEncoding(format!("non-binary join entry {v}")));
            }
        }
        if self.x_join.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidEncoding("empty join set".into()));
        }
        for (gi, (ti, name)) in layout.attrs.iter().enumerate() {
            let (lb, ub) = (self.x_sel[2 * gi], self.x_sel[2 * gi + 1]);
            if !(0.0..=1.0).contains(&lb) || !(0.0..=1.0).contains(&ub) || lb > ub {
                return Err(Error::InvalidEncoding(format!(
                    "bounds for '{name}' must satisfy 0 <= lb <= ub <= 1, got ({lb}, {ub})"
                )));
            }
            if self.x_join[*ti] == 0.0 && (lb, ub) != (0.0, 1.0) {
                return Err(Error::InvalidEncoding(format!(
                    "attribute '{name}' of absent table must carry exactly (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// True iff the selected table set is nonempty and induces a connected
/// subgraph of the join graph. Entries above 0.5 count as selected.
pub fn is_valid_join(x_join: &[f64], layout: &EncodingLayout) -> bool {
    if x_join.len() != layout.n {
        return false;
    }
    let subset: Vec<usize> = (0..layout.n).filter(|i| x_join[*i] > 0.5).collect();
    layout.connected(&subset)
}

pub fn encode(query: &Query, layout: &EncodingLayout) -> Result<QueryEncoding> {
    let subset: Vec<usize> = query.tables.iter().copied().collect();
    if !layout.connected(&subset) {
        return Err(Error::InvalidQuery(
            "query tables must be nonempty and connected".into(),
        ));
    }
    let mut x_join = vec![0.0; layout.n];
    for t in &query.tables {
        if *t >= layout.n {
            return Err(Error::InvalidQuery(format!("table index {t} out of range")));
        }
        x_join[*t] = 1.0;
    }
    let mut x_sel = Vec::with_capacity(2 * layout.m);
    for (ti, name) in &layout.attrs {
        let joined = query.tables.contains(ti);
        match query.predicates.get(name) {
            Some((lb, ub)) => {
                if !joined {
                    return Err(Error::InvalidQuery(format!(
                        "predicate on attribute '{name}' of non-joined table"
                    )));
                }
                if !(0.0..=1.0).contains(lb) || !(0.0..=1.0).contains(ub) || lb > ub {
                    return Err(Error::InvalidQuery(format!(
                        "predicate bounds for '{name}' must satisfy 0 <= lb <= ub <= 1"
                    )));
                }
                x_sel.push(*lb);
                x_sel.push(*ub);
            }
            None => {
                x_sel.push(0.0);
                x_sel.push(1.0);
            }
        }
    }
    // Predicates naming unknown attributes are invalid.
    for name in query.predicates.keys() {
        if layout.attr_index(name).is_none() {
            return Err(Error::InvalidQuery(format!("unknown attribute '{name}'")));
        }
    }
    Ok(QueryEncoding { x_join, x_sel })
}

pub fn decode(encoding: &QueryEncoding, layout: &EncodingLayout) -> Result<Query> {
    encoding.validate(layout)?;
    let tables: BTreeSet<usize> = (0..layout.n)
        .filter(|i| encoding.x_join[*i] == 1.0)
        .collect();
    let subset: Vec<usize> = tables.iter().copied().collect();
    if !layout.connected(&subset) {
        return Err(Error::InvalidEncoding("join vector is not connected".into()));
    }
    let mut predicates = BTreeMap::new();
    for (gi, (ti, name)) in layout.attrs.iter().enumerate() {
        let (lb, ub) = (encoding.x_sel[2 * gi], encoding.x_sel[2 * gi + 1]);
        if tables.contains(ti) && (lb, ub) != (0.0, 1.0) {
            predicates.insert(name.clone(), (lb, ub));
        }
    }
    Ok(Query { tables, predicates })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Historical,
    Train,
    Test,
    Probe,
    Poison,
}

#[derive(Clone, Debug)]
pub struct Workload {
    pub queries: Vec<Query>,
    pub labels: Vec<u64>,
    pub provenance: Provenance,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries.len() != self.labels.len() {
            return Err(Error::Config("workload queries/labels length mismatch".into()));
        }
        if matches!(self.provenance, Provenance::Train | Provenance::Historical)
            && self.labels.iter().any(|y| *y == 0)
        {
            return Err(Error::Config(
                "training-provenance workloads must have positive labels".into(),
            ));
        }
        Ok(())
    }

    pub fn encodings(&self, layout: &EncodingLayout) -> Result<Vec<QueryEncoding>> {
        self.queries.iter().map(|q| encode(q, layout)).collect()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Workload {
        Workload {
            queries: self.queries[range.clone()].to_vec(),
            labels: self.labels[range].to_vec(),
            provenance: self.provenance,
        }
    }
}

/// Sampling policy for synthetic workloads: which join patterns, how many
/// predicates per query, and how wide the ranges are (log-uniform widths
/// cover both narrow and broad filters).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkloadPolicy {
    /// Optional (pattern bitmask, weight) pairs; None = uniform over all
    /// connected patterns.
    pub pattern_weights: Option<Vec<(u64, f64)>>,
    /// Inclusive range for the number of predicates per query.
    pub predicate_count: (usize, usize),
    /// Log-uniform width range (fractions of the domain).
    pub width_range: (f64, f64),
    /// Abort when the zero-cardinality rejection rate exceeds this cap.
    pub rejection_cap: f64,
}

impl Default for WorkloadPolicy {
    fn default() -> Self {
        WorkloadPolicy {
            pattern_weights: None,
            predicate_count: (1, 3),
            width_range: (0.02, 1.0),
            rejection_cap: 0.99,
        }
    }
}

/// Generate `count` labeled queries with positive cardinalities.
pub fn generate_workload(
    db: &Database,
    count: usize,
    policy: &WorkloadPolicy,
    seed: u64,
    provenance: Provenance,
) -> Result<Workload> {
    let layout = EncodingLayout::from_schema(&db.schema);
    let patterns: Vec<(u64, f64)> = match &policy.pattern_weights {
        Some(w) => {
            for (mask, weight) in w {
                let subset: Vec<usize> =
                    (0..layout.n).filter(|i| mask >> i & 1 == 1).collect();
                if !connected_subset(&db.schema, &subset) || *weight < 0.0 {
                    return Err(Error::Config(format!(
                        "bad pattern weight entry ({mask:#b}, {weight})"
                    )));
                }
            }
            w.clone()
        }
        None => db
            .schema
            .connected_patterns()
            .into_iter()
            .map(|m| (m, 1.0))
            .collect(),
    };
    let total_weight: f64 = patterns.iter().map(|(_, w)| w).sum();
    if total_weight <= 0.0 {
        return Err(Error::Config("pattern weights sum to zero".into()));
    }
    let mut rng = rng_from(seed);
    let mut queries = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while queries.len() < count {
        attempts += 1;
        if attempts >= 1000 && (attempts - queries.len()) as f64 / attempts as f64 > policy.rejection_cap {
            return Err(Error::RejectionCap {
                cap: policy.rejection_cap,
                accepted: queries.len(),
                attempted: attempts,
            });
        }
        let query = sample_query(&layout, &patterns, total_weight, policy, &mut rng);
        let y = true_cardinality(db, &query)?;
        if y > 0 {
            queries.push(query);
            labels.push(y);
        }
    }
    let wl = Workload {
        queries,
        labels,
        provenance,
    };
    wl.validate()?;
    Ok(wl)
}

fn sample_query(
    layout: &EncodingLayout,
    patterns: &[(u64, f64)],
    total_weight: f64,
    policy: &WorkloadPolicy,
    rng: &mut impl Rng,
) -> Query {
    let mut pick = rng.gen::<f64>() * total_weight;
    let mut mask = patterns[patterns.len() - 1].0;
    for (m, w) in patterns {
        if pick < *w {
            mask = *m;
            break;
        }
        pick -= w;
    }
    let tables: BTreeSet<usize> = (0..layout.n).filter(|i| mask >> i & 1 == 1).collect();
    let avail: Vec<usize> = layout
        .attrs
        .iter()
        .enumerate()
        .filter(|(_, (ti, _))| tables.contains(ti))
        .map(|(gi, _)| gi)
        .collect();
    let (lo_k, hi_k) = policy.predicate_count;
    let k = if avail.is_empty() {
        0
    } else {
        rng.gen_range(lo_k.min(avail.len())..=hi_k.min(avail.len()))
    };
    let chosen: Vec<usize> = {
        let mut idx = avail.clone();
        idx.shuffle(rng);
        idx.into_iter().take(k).collect()
    };
    let mut predicates = BTreeMap::new();
    for gi in chosen {
        let (w_lo, w_hi) = policy.width_range;
        let ln_w = rng.gen_range(w_lo.ln()..=w_hi.ln());
        let w = ln_w.exp().min(1.0);
        if w >= 1.0 {
            continue; // full-range predicate canonicalizes to "no predicate"
        }
        let c = rng.gen_range(w / 2.0..=1.0 - w / 2.0);
        let lb = (c - w / 2.0).max(0.0);
        let ub = (c + w / 2.0).min(1.0);
        predicates.insert(layout.attrs[gi].1.clone(), (lb, ub));
    }
    Query { tables, predicates }
}

/// Mean per-dimension Jensen–Shannon divergence (base-2 logs, `bins`
/// equal-width buckets over [0, 1]) between two encoding samples.
pub fn js_divergence(a: &[QueryEncoding], b: &[QueryEncoding], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("js_divergence operands"));
    }
    let dim = a[0].dim();
    let rows_a: Vec<Vec<f64>> = a.iter().map(|e| e.x()).collect();
    let rows_b: Vec<Vec<f64>> = b.iter().map(|e| e.x()).collect();
    for r in rows_a.iter().chain(rows_b.iter()) {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
    }
    js_divergence_rows(&rows_a, &rows_b, bins)
}

/// JS divergence over raw row vectors; exposed for dimension-generic tests.
pub fn js_divergence_rows(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("js_divergence operands"));
    }
    if bins == 0 {
        return Err(Error::Config("js_divergence needs at least one bin".into()));
    }
    let dim = a[0].len();
    let mut total = 0.0;
    for d in 0..dim {
        let hist = |rows: &[Vec<f64>]| -> Vec<f64> {
            let mut h = vec![0.0; bins];
            for r in rows {
                let v = r[d].clamp(0.0, 1.0);
                let idx = ((v * bins as f64) as usize).min(bins - 1);
                h[idx] += 1.0;
            }
            let n: f64 = h.iter().sum();
            h.iter_mut().for_each(|x| *x /= n);
            h
        };
        let p = hist(a);
        let q = hist(b);
        let mut js = 0.0;
        for i in 0..bins {
            let m = 0.5 * (p[i] + q[i]);
            if p[i] > 0.0 {
                js += 0.5 * p[i] * (p[i] / m).log2();
            }
            if q[i] > 0.0 {
                js += 0.5 * q[i] * (q[i] / m).log2();
            }
        }
        total += js;
    }
    Ok(total / dim as f64)
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    tables: Vec<String>,
    predicates: BTreeMap<String, (f64, f64)>,
    cardinality: u64,
}

/// Write a workload as JSON-lines: {"tables":[..],"predicates":{..},"cardinality":N}.
pub fn save_workload(wl: &Workload, schema: &Schema, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (q, y) in wl.queries.iter().zip(wl.labels.iter()) {
        let rec = QueryRecord {
            tables: q.tables.iter().map(|t| schema.tables[*t].name.clone()).collect(),
            predicates: q.predicates.clone(),
            cardinality: *y,
        };
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_workload(schema: &Schema, path: &Path, provenance: Provenance) -> Result<Workload> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut queries = Vec::new();
    let mut labels = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(&line)?;
        let mut tables = BTreeSet::new();
        for name in &rec.tables {
            let ti = schema
                .table_index(name)
                .ok_or_else(|| Error::Format(format!("unknown table '{name}' in workload")))?;
            tables.insert(ti);
        }
        queries.push(Query {
            tables,
            predicates: rec.predicates,
        });
        labels.push(rec.cardinality);
    }
    Ok(Workload {
        queries,
        labels,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{generate_database, AttributeSpec, DistributionSpec, TableSpec};
    use proptest::prelude::*;

    /// n=2 schema: T1 holds attrs A, B; T2 holds attr C.
    fn two_table_layout() -> EncodingLayout {
        let schema = Schema {
            tables: vec![
                TableSpec {
                    name: "t1".into(),
                    row_count: 10,
                    attributes: vec![
                        AttributeSpec {
                            name: "a".into(),
                            domain: (0.0, 1.0),
                            distribution: DistributionSpec::Uniform,
                        },
                        AttributeSpec {
                            name: "b".into(),
                            domain: (0.0, 1.0),
                            distribution: DistributionSpec::Uniform,
                        },
                        AttributeSpec {
                            name: "k1".into(),
                            domain: (0.0, 8.0),
                            distribution: DistributionSpec::Uniform,
                        },
                    ],
                    key_attributes: vec!["k1".into()],
                },
                TableSpec {
                    name: "t2".into(),
                    row_count: 10,
                    attributes: vec![
                        AttributeSpec {
                            name: "c".into(),
                            domain: (0.0, 1.0),
                            distribution: DistributionSpec::Uniform,
                        },
                        AttributeSpec {
                            name: "k2".into(),
                            domain: (0.0, 8.0),
                            distribution: DistributionSpec::Uniform,
                        },
                    ],
                    key_attributes: vec!["k2".into()],
                },
            ],
            join_edges: vec![(0, "k1".into(), 1, "k2".into())],
        };
        EncodingLayout::from_schema(&schema)
    }

    #[test]
    fn encode_two_table_query() {
        let layout = two_table_layout();
        let q = Query {
            tables: [0, 1].into_iter().collect(),
            predicates: [("a".to_string(), (0.2, 0.5))].into_iter().collect(),
        };
        let e = encode(&q, &layout).unwrap();
        assert_eq!(e.x_join, vec![1.0, 1.0]);
        assert_eq!(e.x_sel, vec![0.2, 0.5, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn encode_masks_absent_tables() {
        let layout = two_table_layout();
        let q = Query {
            tables: [0].into_iter().collect(),
            predicates: BTreeMap::new(),
        };
        let e = encode(&q, &layout).unwrap();
        assert_eq!(e.x_join, vec![1.0, 0.0]);
        assert_eq!(e.x_sel, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn predicate_on_absent_table_rejected() {
        let layout = two_table_layout();
        let q = Query {
            tables: [0].into_iter().collect(),
            predicates: [("c".to_string(), (0.1, 0.2))].into_iter().collect(),
        };
        assert!(matches!(encode(&q, &layout), Err(Error::InvalidQuery(_))));
    }

    #[test]
    fn decode_inverts_encode() {
        let layout = two_table_layout();
        let e = QueryEncoding {
            x_join: vec![1.0, 1.0],
            x_sel: vec![0.2, 0.5, 0.0, 1.0, 0.0, 1.0],
        };
        let q = decode(&e, &layout).unwrap();
        assert_eq!(q.tables, [0, 1].into_iter().collect());
        assert_eq!(q.predicates.len(), 1);
        assert_eq!(q.predicates["a"], (0.2, 0.5));
        assert_eq!(encode(&q, &layout).unwrap(), e);
    }

    #[test]
    fn all_zero_join_vector_rejected() {
        let layout = two_table_layout();
        let e = QueryEncoding {
            x_join: vec![0.0, 0.0],
            x_sel: vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        };
        assert!(matches!(decode(&e, &layout), Err(Error::InvalidEncoding(_))));
    }

    fn chain3_layout() -> EncodingLayout {
        EncodingLayout {
            n: 3,
            m: 0,
            attrs: vec![],
            table_ranges: vec![(0, 0), (0, 0), (0, 0)],
            edges: vec![(0, 1), (1, 2)],
        }
    }

    #[test]
    fn join_validity_on_chain() {
        let layout = chain3_layout();
        assert!(!is_valid_join(&[1.0, 0.0, 1.0], &layout));
        assert!(is_valid_join(&[1.0, 1.0, 0.0], &layout));
        assert!(!is_valid_join(&[0.0, 0.0, 0.0], &layout));
        assert!(is_valid_join(&[1.0, 1.0, 1.0], &layout));
        assert!(is_valid_join(&[0.0, 1.0, 0.0], &layout));
    }

    #[test]
    fn js_identical_lists_is_zero() {
        let es: Vec<QueryEncoding> = (0..20)
            .map(|i| QueryEncoding {
                x_join: vec![1.0],
                x_sel: vec![i as f64 / 20.0, 1.0],
            })
            .collect();
        assert_eq!(js_divergence(&es, &es, 20).unwrap(), 0.0);
    }

    #[test]
    fn js_disjoint_single_dimension_is_one() {
        let a: Vec<Vec<f64>> = (0..10).map(|_| vec![0.01]).collect();
        let b: Vec<Vec<f64>> = (0..10).map(|_| vec![0.99]).collect();
        let js = js_divergence_rows(&a, &b, 20).unwrap();
        assert!((js - 1.0).abs() < 1e-12);
    }

    #[test]
    fn js_is_symmetric() {
        let mut rng = rng_from(5);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..50).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let ab = js_divergence_rows(&a, &b, 20).unwrap();
        let ba = js_divergence_rows(&b, &a, 20).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn workload_generation_contract() {
        let db = generate_database(&Schema::preset_single_table(), 3).unwrap();
        let wl = generate_workload(&db, 100, &WorkloadPolicy::default(), 9, Provenance::Train)
            .unwrap();
        assert_eq!(wl.len(), 100);
        assert!(wl.labels.iter().all(|y| *y > 0));
        let wl2 = generate_workload(&db, 100, &WorkloadPolicy::default(), 9, Provenance::Train)
            .unwrap();
        assert_eq!(wl.queries, wl2.queries);
        assert_eq!(wl.labels, wl2.labels);
        // labels match the oracle by construction; re-check a few
        for i in (0..100).step_by(17) {
            assert_eq!(true_cardinality(&db, &wl.queries[i]).unwrap(), wl.labels[i]);
        }
        let layout = EncodingLayout::from_schema(&db.schema);
        for q in &wl.queries {
            let e = encode(q, &layout).unwrap();
            assert!(is_valid_join(&e.x_join, &layout));
        }
    }

    #[test]
    fn workload_file_roundtrip() {
        let db = generate_database(&Schema::preset_multi_table(), 4).unwrap();
        let wl = generate_workload(&db, 30, &WorkloadPolicy::default(), 2, Provenance::Test)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wl.jsonl");
        save_workload(&wl, &db.schema, &path).unwrap();
        let back = load_workload(&db.schema, &path, Provenance::Test).unwrap();
        assert_eq!(wl.queries, back.queries);
        assert_eq!(wl.labels, back.labels);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn encode_decode_roundtrip(seed in 0u64..10_000) {
            let layout = EncodingLayout::from_schema(&Schema::preset_multi_table());
            let mut rng = rng_from(seed);
            // random connected pattern
            let patterns = Schema::preset_multi_table().connected_patterns();
            let mask = patterns[rng.gen_range(0..patterns.len())];
            let tables: BTreeSet<usize> = (0..layout.n).filter(|i| mask >> i & 1 == 1).collect();
            let mut predicates = BTreeMap::new();
            for (ti, name) in &layout.attrs {
                if tables.contains(ti) && rng.gen::<f64>() < 0.5 {
                    let lb = rng.gen::<f64>() * 0.9;
                    let ub = lb + rng.gen::<f64>() * (1.0 - lb - 1e-9);
                    predicates.insert(name.clone(), (lb, ub));
                }
            }
            let q = Query { tables, predicates };
            let e = encode(&q, &layout).unwrap();
            let q2 = decode(&e, &layout).unwrap();
            prop_assert_eq!(&q, &q2);
            let e2 = encode(&q2, &layout).unwrap();
            prop_assert_eq!(e, e2);
        }
    }
}
