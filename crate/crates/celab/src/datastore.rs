//! Synthetic relational databases with an exact cardinality oracle.
//!
//! A [`Schema`] declares tables, numeric attribute domains, and an
//! equi-join graph. [`generate_database`] materializes deterministic rows,
//! and [`true_cardinality`] answers exact COUNT(*) for conjunctive
//! range + equi-join queries. Join evaluation filters each table first and
//! then counts along the join tree with per-key multiplicity maps; the test
//! suite certifies it against a nested-loop oracle.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution as RandDistribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::querylang::Query;
use crate::rng::{derive_seed, derive_seed_n, rng_from};

/// Number of buckets used to discretize the zipf distribution over a domain.
const ZIPF_BUCKETS: u64 = 100;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Uniform,
    Zipf { s: f64 },
    Gaussian { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    /// Inclusive-exclusive numeric domain [lo, hi).
    pub domain: (f64, f64),
    pub distribution: DistributionSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableSpec {
    pub name: String,
    pub row_count: usize,
    pub attributes: Vec<AttributeSpec>,
    /// Attributes used only for equi-joins; excluded from predicate encoding.
    #[serde(default)]
    pub key_attributes: Vec<String>,
}

/// (left table index, left key attribute, right table index, right key attribute)
pub type JoinEdge = (usize, String, usize, String);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Schema {
    pub tables: Vec<TableSpec>,
    #[serde(default)]
    pub join_edges: Vec<JoinEdge>,
}

impl Schema {
    /// Number of tables.
    pub fn n(&self) -> usize {
        self.tables.len()
    }

    /// Total count of non-key attributes across all tables.
    pub fn m(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.attributes.iter().filter(|a| !t.key_attributes.contains(&a.name)).count())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tables.is_empty() {
            return Err(Error::Config("schema has no tables".into()));
        }
        let mut table_names = std::collections::HashSet::new();
        let mut attr_names = std::collections::HashSet::new();
        for t in &self.tables {
            if !table_names.insert(t.name.clone()) {
                return Err(Error::Config(format!("duplicate table name '{}'", t.name)));
            }
            if t.row_count == 0 {
                return Err(Error::Config(format!("table '{}' has row_count 0", t.name)));
            }
            for a in &t.attributes {
                if !attr_names.insert(a.name.clone()) {
                    return Err(Error::Config(format!("duplicate attribute name '{}'", a.name)));
                }
                let (lo, hi) = a.domain;
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!(
                        "attribute '{}' needs a finite domain with lo < hi",
                        a.name
                    )));
                }
                match a.distribution {
                    DistributionSpec::Uniform => {}
                    DistributionSpec::Zipf { s } => {
                        if !(s > 0.0) {
                            return Err(Error::Config(format!(
                                "attribute '{}': zipf exponent must be > 0",
                                a.name
                            )));
                        }
                    }
                    DistributionSpec::Gaussian { mu, sigma } => {
                        if !(sigma > 0.0) || mu < lo || mu > hi {
                            return Err(Error::Config(format!(
                                "attribute '{}': gaussian needs sigma > 0 and mu inside the domain",
                                a.name
                            )));
                        }
                    }
                }
            }
            for k in &t.key_attributes {
                if !t.attributes.iter().any(|a| &a.name == k) {
                    return Err(Error::Config(format!(
                        "key attribute '{}' not declared on table '{}'",
                        k, t.name
                    )));
                }
            }
        }
        for (lt, lk, rt, rk) in &self.join_edges {
            for (ti, key) in [(lt, lk), (rt, rk)] {
                let t = self
                    .tables
                    .get(*ti)
                    .ok_or_else(|| Error::Config(format!("join edge references table {ti}")))?;
                if !t.key_attributes.contains(key) {
                    return Err(Error::Config(format!(
                        "join edge key '{}' is not a key attribute of table '{}'",
                        key, t.name
                    )));
                }
            }
        }
        if !connected_subset(self, &(0..self.n()).collect::<Vec<_>>()) {
            return Err(Error::Config("join graph does not connect all tables".into()));
        }
        Ok(())
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    /// Table-index pairs of the join graph.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.join_edges.iter().map(|(a, _, b, _)| (*a, *b)).collect()
    }

    /// All connected table subsets, as bitmasks. Only practical for small n.
    pub fn connected_patterns(&self) -> Vec<u64> {
        let n = self.n();
        assert!(n <= 16, "pattern enumeration is for small schemas");
        let mut out = Vec::new();
        for mask in 1u64..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if connected_subset(self, &subset) {
                out.push(mask);
            }
        }
        out
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    /// Single-table preset: one 4000-row table with four numeric attributes
    /// of mixed distributions (registration-record flavor).
    pub fn preset_single_table() -> Schema {
        Schema {
            tables: vec![TableSpec {
                name: "vehicles".into(),
                row_count: 4000,
                attributes: vec![
                    AttributeSpec {
                        name: "model_year".into(),
                        domain: (0.0, 100.0),
                        distribution: DistributionSpec::Gaussian { mu: 55.0, sigma: 18.0 },
                    },
                    AttributeSpec {
                        name: "weight".into(),
                        domain: (0.0, 1000.0),
                        distribution: DistributionSpec::Zipf { s: 1.1 },
                    },
                    AttributeSpec {
                        name: "mileage".into(),
                        domain: (0.0, 200.0),
                        distribution: DistributionSpec::Uniform,
                    },
                    AttributeSpec {
                        name: "fee".into(),
                        domain: (0.0, 500.0),
                        distribution: DistributionSpec::Gaussian { mu: 120.0, sigma: 90.0 },
                    },
                ],
                key_attributes: vec![],
            }],
            join_edges: vec![],
        }
    }

    /// Multi-table preset: a 4-table chain with 8 non-key attributes total.
    pub fn preset_multi_table() -> Schema {
        let key = |name: &str| AttributeSpec {
            name: name.into(),
            domain: (0.0, 64.0),
            distribution: DistributionSpec::Uniform,
        };
        let attr = |name: &str, dist: DistributionSpec| AttributeSpec {
            name: name.into(),
            domain: (0.0, 100.0),
            distribution: dist,
        };
        Schema {
            tables: vec![
                TableSpec {
                    name: "orders".into(),
                    row_count: 1200,
                    attributes: vec![
                        attr("order_total", DistributionSpec::Zipf { s: 1.2 }),
                        attr("order_priority", DistributionSpec::Uniform),
                        key("o_ck"),
                    ],
                    key_attributes: vec!["o_ck".into()],
                },
                TableSpec {
                    name: "customers".into(),
                    row_count: 800,
                    attributes: vec![
                        attr("cust_balance", DistributionSpec::Gaussian { mu: 50.0, sigma: 20.0 }),
                        attr("cust_age", DistributionSpec::Uniform),
                        key("c_ck"),
                        key("c_rk"),
                    ],
                    key_attributes: vec!["c_ck".into(), "c_rk".into()],
                },
                TableSpec {
                    name: "regions".into(),
                    row_count: 400,
                    attributes: vec![
                        attr("region_tax", DistributionSpec::Uniform),
                        attr("region_pop", DistributionSpec::Zipf { s: 1.1 }),
                        key("r_rk"),
                        key("r_sk"),
                    ],
                    key_attributes: vec!["r_rk".into(), "r_sk".into()],
                },
                TableSpec {
                    name: "suppliers".into(),
                    row_count: 600,
                    attributes: vec![
                        attr("supp_rating", DistributionSpec::Gaussian { mu: 60.0, sigma: 25.0 }),
                        attr("supp_volume", DistributionSpec::Uniform),
                        key("s_sk"),
                    ],
                    key_attributes: vec!["s_sk".into()],
                },
            ],
            join_edges: vec![
                (0, "o_ck".into(), 1, "c_ck".into()),
                (1, "c_rk".into(), 2, "r_rk".into()),
                (2, "r_sk".into(), 3, "s_sk".into()),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Schema> {
        match name {
            "single_table" => Ok(Schema::preset_single_table()),
            "multi_table" => Ok(Schema::preset_multi_table()),
            other => Err(Error::Config(format!(
                "unknown schema preset '{other}' (expected single_table or multi_table)"
            ))),
        }
    }
}

/// True iff `subset` is nonempty and induces a connected subgraph of the
/// join graph.
pub fn connected_subset(schema: &Schema, subset: &[usize]) -> bool {
    if subset.is_empty() {
        return false;
    }
    if subset.len() == 1 {
        return subset[0] < schema.n();
    }
    let inset = |t: usize| subset.contains(&t);
    let mut reach = vec![subset[0]];
    let mut frontier = vec![subset[0]];
    while let Some(t) = frontier.pop() {
        for (a, b) in schema.edge_pairs() {
            let other = if a == t {
                b
            } else if b == t {
                a
            } else {
                continue;
            };
            if inset(other) && !reach.contains(&other) {
                reach.push(other);
                frontier.push(other);
            }
        }
    }
    reach.len() == subset.len()
}

/// Column-major table payload: one Vec per attribute, in TableSpec order.
#[derive(Clone, Debug)]
pub struct TableData {
    pub columns: Vec<Vec<f64>>,
}

/// Immutable generated database. Safe for concurrent reads.
#[derive(Clone, Debug)]
pub struct Database {
    pub schema: Schema,
    pub tables: Vec<TableData>,
    /// Unpredicated cardinality per connected join pattern (bitmask key).
    pattern_max: HashMap<u64, u64>,
}

fn sample_value(spec: &AttributeSpec, rng: &mut impl Rng) -> f64 {
    let (lo, hi) = spec.domain;
    let span = hi - lo;
    match spec.distribution {
        DistributionSpec::Uniform => lo + rng.gen::<f64>() * span,
        DistributionSpec::Zipf { s } => {
            let z = Zipf::new(ZIPF_BUCKETS, s).expect("validated zipf");
            let rank = z.sample(rng) as u64; // 1..=ZIPF_BUCKETS
            let jitter: f64 = rng.gen();
            lo + ((rank - 1) as f64 + jitter) / ZIPF_BUCKETS as f64 * span
        }
        DistributionSpec::Gaussian { mu, sigma } => {
            let normal = Normal::new(mu, sigma).expect("validated gaussian");
            for _ in 0..1000 {
                let v = normal.sample(rng);
                if v >= lo && v < hi {
                    return v;
                }
            }
            mu.clamp(lo, hi - span * 1e-9)
        }
    }
}

/// Key columns hold exact integers so equi-joins match.
fn quantize_key(v: f64, domain: (f64, f64)) -> f64 {
    let (lo, hi) = domain;
    v.round().clamp(lo.ceil(), (hi - 1.0).floor().max(lo.ceil()))
}

/// Deterministically generate rows for `schema`. Retries key sampling (with
/// derived seeds) until every connected join pattern has nonzero
/// unpredicated cardinality.
pub fn generate_database(schema: &Schema, seed: u64) -> Result<Database> {
    schema.validate()?;
    for attempt in 0..64u64 {
        let mut tables = Vec::with_capacity(schema.n());
        for (ti, t) in schema.tables.iter().enumerate() {
            let mut columns = Vec::with_capacity(t.attributes.len());
            for (ai, a) in t.attributes.iter().enumerate() {
                let mut rng = rng_from(derive_seed_n(
                    seed ^ attempt.wrapping_mul(0x5851_f42d_4c95_7f2d),
                    &format!("col/{ti}/{ai}"),
                    0,
                ));
                let is_key = t.key_attributes.contains(&a.name);
                let col: Vec<f64> = (0..t.row_count)
                    .map(|_| {
                        let v = sample_value(a, &mut rng);
                        if is_key {
                            quantize_key(v, a.domain)
                        } else {
                            v
                        }
                    })
                    .collect();
                columns.push(col);
            }
            tables.push(TableData { columns });
        }
        let mut db = Database {
            schema: schema.clone(),
            tables,
            pattern_max: HashMap::new(),
        };
        let patterns = schema.connected_patterns();
        let mut all_nonzero = true;
        let mut pattern_max = HashMap::new();
        for mask in patterns {
            let card = count_join(&db, mask, &HashMap::new())?;
            if card == 0 {
                all_nonzero = false;
                break;
            }
            pattern_max.insert(mask, card);
        }
        if all_nonzero {
            db.pattern_max = pattern_max;
            return Ok(db);
        }
    }
    Err(Error::Config(
        "could not draw join keys with nonzero cardinality for every pattern; \
         widen key domains or raise row counts"
            .into(),
    ))
}

impl Database {
    /// Row count of the full unpredicated join for a connected pattern.
    pub fn pattern_max_cardinality(&self, mask: u64) -> Result<u64> {
        self.pattern_max
            .get(&mask)
            .copied()
            .ok_or_else(|| Error::InvalidQuery(format!("pattern {mask:#b} is not connected")))
    }

    pub fn pattern_max_map(&self) -> &HashMap<u64, u64> {
        &self.pattern_max
    }

    pub fn row_count(&self, table: usize) -> usize {
        self.schema.tables[table].row_count
    }

    pub fn column(&self, table: usize, attr: &str) -> Option<&[f64]> {
        let idx = self.schema.tables[table]
            .attributes
            .iter()
            .position(|a| a.name == attr)?;
        Some(&self.tables[table].columns[idx])
    }
}

/// Exact result count for a conjunctive range + equi-join query.
///
/// Normalized predicate bounds (lb, ub) map to the half-open value interval
/// [lo + lb·(hi−lo), lo + ub·(hi−lo)).
pub fn true_cardinality(db: &Database, query: &Query) -> Result<u64> {
    let mask = query.table_mask();
    let subset: Vec<usize> = query.tables.iter().copied().collect();
    if subset.is_empty() || !connected_subset(&db.schema, &subset) {
        return Err(Error::InvalidQuery(
            "query join set must be nonempty and connected".into(),
        ));
    }
    // Predicates grouped per table, resolved to value ranges.
    let mut per_table: HashMap<usize, Vec<(usize, f64, f64)>> = HashMap::new();
    for (attr_name, (lb, ub)) in &query.predicates {
        let (ti, ai, spec) = resolve_attr(&db.schema, attr_name)?;
        if !query.tables.contains(&ti) {
            return Err(Error::InvalidQuery(format!(
                "predicate on attribute '{attr_name}' of non-joined table"
            )));
        }
        if !(0.0..=1.0).contains(lb) || !(0.0..=1.0).contains(ub) || lb > ub {
            return Err(Error::InvalidQuery(format!(
                "predicate bounds for '{attr_name}' must satisfy 0 <= lb <= ub <= 1"
            )));
        }
        let (lo, hi) = spec.domain;
        let span = hi - lo;
        per_table
            .entry(ti)
            .or_default()
            .push((ai, lo + lb * span, lo + ub * span));
    }
    count_join(db, mask, &per_table)
}

/// Unpredicated cardinality of a connected table subset.
pub fn join_pattern_cardinality(db: &Database, tables: &[usize]) -> Result<u64> {
    if tables.is_empty() || !connected_subset(&db.schema, tables) {
        return Err(Error::InvalidQuery(
            "pattern must be nonempty and connected".into(),
        ));
    }
    let mask = tables.iter().fold(0u64, |m, t| m | 1 << t);
    db.pattern_max_cardinality(mask)
}

fn resolve_attr<'a>(schema: &'a Schema, name: &str) -> Result<(usize, usize, &'a AttributeSpec)> {
    for (ti, t) in schema.tables.iter().enumerate() {
        if let Some(ai) = t.attributes.iter().position(|a| a.name == name) {
            if t.key_attributes.contains(&t.attributes[ai].name) {
                return Err(Error::InvalidQuery(format!(
                    "attribute '{name}' is a join key; predicates go on non-key attributes"
                )));
            }
            return Ok((ti, ai, &t.attributes[ai]));
        }
    }
    Err(Error::InvalidQuery(format!("unknown attribute '{name}'")))
}

/// Rows of `table` surviving the resolved predicates (attr index, lo, hi).
fn filter_rows(db: &Database, table: usize, preds: &[(usize, f64, f64)]) -> Vec<usize> {
    let n = db.row_count(table);
    (0..n)
        .filter(|&r| {
            preds.iter().all(|(ai, lo, hi)| {
                let v = db.tables[table].columns[*ai][r];
                v >= *lo && v < *hi
            })
        })
        .collect()
}

/// Count join results over the connected pattern `mask` with per-table
/// predicate lists. Dynamic programming over the induced join tree: each
/// subtree reports a key-value → multiplicity map toward its parent.
fn count_join(
    db: &Database,
    mask: u64,
    per_table: &HashMap<usize, Vec<(usize, f64, f64)>>,
) -> Result<u64> {
    let tables: Vec<usize> = (0..db.schema.n()).filter(|t| mask >> t & 1 == 1).collect();
    let survivors: HashMap<usize, Vec<usize>> = tables
        .iter()
        .map(|&t| {
            let preds = per_table.get(&t).map(|v| v.as_slice()).unwrap_or(&[]);
            (t, filter_rows(db, t, preds))
        })
        .collect();

    if tables.len() == 1 {
        return Ok(survivors[&tables[0]].len() as u64);
    }

    // Induced edges; connected patterns over a tree schema are subtrees.
    let induced: Vec<(usize, usize, usize, usize)> = db
        .schema
        .join_edges
        .iter()
        .filter(|(a, _, b, _)| mask >> *a & 1 == 1 && mask >> *b & 1 == 1)
        .map(|(a, ak, b, bk)| {
            let ai = db.schema.tables[*a].attributes.iter().position(|x| &x.name == ak).unwrap();
            let bi = db.schema.tables[*b].attributes.iter().position(|x| &x.name == bk).unwrap();
            (*a, ai, *b, bi)
        })
        .collect();
    if induced.len() != tables.len() - 1 {
        return Err(Error::InvalidQuery(
            "cyclic join patterns are not supported; only acyclic connected patterns".into(),
        ));
    }

    // Post-order DFS from the lowest-index table.
    let root = tables[0];
    let mut order = Vec::new(); // (table, parent, key col toward parent, parent key col)
    let mut stack = vec![(root, usize::MAX, usize::MAX, usize::MAX)];
    let mut seen = vec![root];
    while let Some(frame) = stack.pop() {
        order.push(frame);
        let (t, _, _, _) = frame;
        for (a, ai, b, bi) in &induced {
            let (child, ckey, pkey) = if *a == t {
                (*b, *bi, *ai)
            } else if *b == t {
                (*a, *ai, *bi)
            } else {
                continue;
            };
            if !seen.contains(&child) {
                seen.push(child);
                stack.push((child, t, ckey, pkey));
            }
        }
    }

    // child table → (parent key col, key value → multiplicity)
    let mut child_maps: HashMap<usize, Vec<(usize, HashMap<u64, u64>)>> = HashMap::new();
    for &(t, parent, ckey, pkey) in order.iter().rev() {
        let contributions = child_maps.remove(&t).unwrap_or_default();
        if parent == usize::MAX {
            // Root: total count.
            let mut total: u64 = 0;
            for &r in &survivors[&t] {
                let mut w: u64 = 1;
                for (col, map) in &contributions {
                    let key = db.tables[t].columns[*col][r].to_bits();
                    w = w.saturating_mul(*map.get(&key).unwrap_or(&0));
                    if w == 0 {
                        break;
                    }
                }
                total = total.saturating_add(w);
            }
            return Ok(total);
        }
        let mut up: HashMap<u64, u64> = HashMap::new();
        for &r in &survivors[&t] {
            let mut w: u64 = 1;
            for (col, map) in &contributions {
                let key = db.tables[t].columns[*col][r].to_bits();
                w = w.saturating_mul(*map.get(&key).unwrap_or(&0));
                if w == 0 {
                    break;
                }
            }
            if w > 0 {
                let key = db.tables[t].columns[ckey][r].to_bits();
                *up.entry(key).or_insert(0) += w;
            }
        }
        child_maps.entry(parent).or_default().push((pkey, up));
    }
    unreachable!("root handled inside the loop");
}

const DB_MAGIC: &[u8; 8] = b"CELABDB\x01";

/// Persist as a columnar binary container: magic, schema JSON, then per
/// table per attribute a little-endian f64 column.
pub fn save_database(db: &Database, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(DB_MAGIC)?;
    let schema_json = serde_json::to_vec(&db.schema)?;
    f.write_all(&(schema_json.len() as u64).to_le_bytes())?;
    f.write_all(&schema_json)?;
    for (ti, t) in db.tables.iter().enumerate() {
        for col in &t.columns {
            f.write_all(&(col.len() as u64).to_le_bytes())?;
            for v in col {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        let _ = ti;
    }
    Ok(())
}

pub fn load_database(path: &Path) -> Result<Database> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != DB_MAGIC {
        return Err(Error::Format("not a database container (bad magic)".into()));
    }
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)?;
    let schema_len = u64::from_le_bytes(len8) as usize;
    let mut schema_buf = vec![0u8; schema_len];
    f.read_exact(&mut schema_buf)?;
    let schema: Schema = serde_json::from_slice(&schema_buf)?;
    schema.validate()?;
    let mut tables = Vec::with_capacity(schema.n());
    for t in &schema.tables {
        let mut columns = Vec::with_capacity(t.attributes.len());
        for _ in &t.attributes {
            f.read_exact(&mut len8)?;
            let n = u64::from_le_bytes(len8) as usize;
            if n != t.row_count {
                return Err(Error::Format(format!(
                    "column length {n} does not match row_count {} of '{}'",
                    t.row_count, t.name
                )));
            }
            let mut col = Vec::with_capacity(n);
            let mut v8 = [0u8; 8];
            for _ in 0..n {
                f.read_exact(&mut v8)?;
                col.push(f64::from_le_bytes(v8));
            }
            columns.push(col);
        }
        tables.push(TableData { columns });
    }
    let mut db = Database {
        schema: schema.clone(),
        tables,
        pattern_max: HashMap::new(),
    };
    let mut pattern_max = HashMap::new();
    for mask in schema.connected_patterns() {
        pattern_max.insert(mask, count_join(&db, mask, &HashMap::new())?);
    }
    db.pattern_max = pattern_max;
    Ok(db)
}
