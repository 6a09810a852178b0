//! File formats and bundled datasets: ranked-list files, the poset text and
//! CSV matrix formats, DOT export, run configuration documents, and the
//! on-disk layout of a fitted run (trace.csv, posets.jsonl, pointwise.csv,
//! acceptance.csv, manifest.json).
//!
//! Actor labels are 1-based in every file and 0-based in memory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcmc::{
    AcceptanceStats, McmcConfig, McmcTrace, ModelTag, MoveStats, TraceRecord,
};
use crate::obs::{ObsError, ObservationSet};
use crate::poset::{
    transitive_closure, Partition, PosetError, RankList, Relation, TiedPartialOrder,
};
use crate::prior::PriorConfig;
use crate::summary::ConsensusOrder;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("line {line}: duplicate actor {actor}")]
    DuplicateActor { line: usize, actor: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Poset(#[from] PosetError),
    #[error(transparent)]
    Obs(#[from] ObsError),
}

/// Datasets and reference orders shipped with the crate.
pub mod datasets {
    /// Bishop witness lists, 1131-1133: 21 lists over 15 actors.
    pub const ROYAL_ACTA_1131_1133: &str =
        include_str!("../data/royal_acta_1131_1133.txt");
    /// Bishop witness lists, 1100-1103: 13 lists over 9 actors.
    pub const ROYAL_ACTA_1100_1103: &str =
        include_str!("../data/royal_acta_1100_1103.txt");
    /// Reference truth used by the synthetic reconstruction runs.
    pub const SIM_TRUTH_1131_1133: &str =
        include_str!("../data/sim_truth_1131_1133.poset");
    /// The five-actor example order.
    pub const EXAMPLE5: &str = include_str!("../data/example5.poset");
}

/// Parses a ranked-list file: one list per line, positive 1-based labels
/// separated by commas or whitespace, `#` comments, and optional `[k]` line
/// tags. The actor count is the largest label seen.
pub fn parse_lists(text: &str) -> Result<ObservationSet, IoError> {
    let mut lists: Vec<Vec<usize>> = Vec::new();
    let mut n = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line = match line.find(']') {
            Some(close) if line.starts_with('[') => line[close + 1..].trim(),
            _ => line,
        };
        if line.is_empty() {
            continue;
        }
        let mut members = Vec::new();
        for token in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if token.is_empty() {
                continue;
            }
            let label: usize = token.parse().map_err(|_| IoError::ParseError {
                line: lineno + 1,
                msg: format!("bad actor label {token:?}"),
            })?;
            if label == 0 {
                return Err(IoError::ParseError {
                    line: lineno + 1,
                    msg: "labels are 1-based".into(),
                });
            }
            let actor = label - 1;
            if members.contains(&actor) {
                return Err(IoError::DuplicateActor {
                    line: lineno + 1,
                    actor: label,
                });
            }
            members.push(actor);
            n = n.max(label);
        }
        if members.len() < 2 {
            return Err(IoError::ParseError {
                line: lineno + 1,
                msg: format!("a list needs at least 2 actors, got {}", members.len()),
            });
        }
        lists.push(members);
    }
    Ok(ObservationSet::new(
        n,
        lists.into_iter().map(RankList::new).collect(),
    )?)
}

pub fn parse_lists_file(path: &Path) -> Result<ObservationSet, IoError> {
    parse_lists(&fs::read_to_string(path)?)
}

/// Writes lists in the bundled layout: `[k] a b c`, 1-based.
pub fn lists_to_string(data: &ObservationSet) -> String {
    let mut out = String::new();
    for (i, list) in data.lists().iter().enumerate() {
        let labels: Vec<String> = list.members().iter().map(|&x| (x + 1).to_string()).collect();
        let _ = writeln!(out, "[{}] {}", i + 1, labels.join(" "));
    }
    out
}

/// Parses the poset text format: an `n=<int>` header, then one `i > j` or
/// `i ~ j` line per relation, 1-based, with transitive closure applied.
pub fn parse_poset(text: &str) -> Result<TiedPartialOrder, IoError> {
    let mut n: Option<usize> = None;
    let mut rel: Option<Relation> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if n.is_none() {
            let rest = line
                .strip_prefix("n=")
                .or_else(|| line.strip_prefix("n ="))
                .ok_or_else(|| IoError::ParseError {
                    line: lineno + 1,
                    msg: "expected header n=<actor count>".into(),
                })?;
            let count: usize = rest.trim().parse().map_err(|_| IoError::ParseError {
                line: lineno + 1,
                msg: format!("bad actor count {rest:?}"),
            })?;
            n = Some(count);
            rel = Some(Relation::new(count));
            continue;
        }
        let (op, tie) = if line.contains('>') {
            ('>', false)
        } else if line.contains('~') {
            ('~', true)
        } else {
            return Err(IoError::ParseError {
                line: lineno + 1,
                msg: "expected `i > j` or `i ~ j`".into(),
            });
        };
        let mut parts = line.splitn(2, op);
        let parse_label = |s: Option<&str>| -> Result<usize, IoError> {
            let s = s.map(str::trim).unwrap_or_default();
            let label: usize = s.parse().map_err(|_| IoError::ParseError {
                line: lineno + 1,
                msg: format!("bad actor label {s:?}"),
            })?;
            let limit = n.unwrap();
            if label == 0 || label > limit {
                return Err(IoError::ParseError {
                    line: lineno + 1,
                    msg: format!("label {label} outside 1..={limit}"),
                });
            }
            Ok(label - 1)
        };
        let i = parse_label(parts.next())?;
        let j = parse_label(parts.next())?;
        let rel = rel.as_mut().unwrap();
        rel.set(i, j, true);
        if tie {
            rel.set(j, i, true);
        }
    }
    let rel = rel.ok_or(IoError::ParseError {
        line: 0,
        msg: "missing n=<actor count> header".into(),
    })?;
    let closed = transitive_closure(&rel)?;
    Ok(TiedPartialOrder::from_relation(closed)?)
}

pub fn parse_poset_file(path: &Path) -> Result<TiedPartialOrder, IoError> {
    let text = fs::read_to_string(path)?;
    if looks_like_matrix(&text) {
        parse_poset_matrix_csv(&text)
    } else {
        parse_poset(&text)
    }
}

fn looks_like_matrix(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| {
            l.chars()
                .all(|c| c == '0' || c == '1' || c == ',' || c.is_whitespace())
        })
}

/// Dense 0/1 relation matrix, one row per line, comma separated; validated
/// as-is (the matrix must already be transitively closed).
pub fn parse_poset_matrix_csv(text: &str) -> Result<TiedPartialOrder, IoError> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for token in line.split(|c: char| c == ',' || c.is_whitespace()) {
            match token.trim() {
                "" => continue,
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(IoError::ParseError {
                        line: lineno + 1,
                        msg: format!("expected 0 or 1, got {other:?}"),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(TiedPartialOrder::from_matrix(&rows)?)
}

/// Serializes a poset as its transitive reduction plus tie chains; inverse
/// of [`parse_poset`] up to closure.
pub fn serialize_poset(h: &TiedPartialOrder) -> String {
    let (quotient, partition) = h.collapse_ties();
    let mut out = format!("n={}\n", h.n());
    for (a, b) in quotient.transitive_reduction() {
        let _ = writeln!(
            out,
            "{} > {}",
            partition.blocks()[a][0] + 1,
            partition.blocks()[b][0] + 1
        );
    }
    for block in partition.blocks() {
        for pair in block.windows(2) {
            let _ = writeln!(out, "{} ~ {}", pair[0] + 1, pair[1] + 1);
        }
    }
    out
}

/// DOT export of the transitive reduction with tie classes drawn as boxed
/// clusters.
pub fn poset_to_dot(h: &TiedPartialOrder) -> String {
    let (quotient, partition) = h.collapse_ties();
    let mut out = String::from("digraph poset {\n  rankdir=TB;\n  node [shape=circle];\n");
    for (c, block) in partition.blocks().iter().enumerate() {
        if block.len() < 2 {
            continue;
        }
        let members: Vec<String> = block.iter().map(|&x| format!("\"{}\";", x + 1)).collect();
        let _ = writeln!(
            out,
            "  subgraph cluster_{c} {{ style=rounded; color=blue; {} }}",
            members.join(" ")
        );
    }
    for i in 0..h.n() {
        let _ = writeln!(out, "  \"{}\";", i + 1);
    }
    for (a, b) in quotient.transitive_reduction() {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\";",
            partition.blocks()[a][0] + 1,
            partition.blocks()[b][0] + 1
        );
    }
    out.push_str("}\n");
    out
}

/// DOT export of a thresholded consensus relation (drawn as-is, even if the
/// raw edge set violates transitivity).
pub fn consensus_to_dot(c: &ConsensusOrder) -> String {
    let mut out = String::from("digraph consensus {\n  rankdir=TB;\n  node [shape=circle];\n");
    // Group tie pairs into connected components for the boxes.
    let mut class: Vec<usize> = (0..c.n).collect();
    fn find(class: &mut Vec<usize>, mut i: usize) -> usize {
        while class[i] != i {
            class[i] = class[class[i]];
            i = class[i];
        }
        i
    }
    for &(i, j) in &c.ties {
        let (a, b) = (find(&mut class, i), find(&mut class, j));
        if a != b {
            class[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); c.n];
    for i in 0..c.n {
        let r = find(&mut class, i);
        groups[r].push(i);
    }
    for (g, members) in groups.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        let names: Vec<String> = members.iter().map(|&x| format!("\"{}\";", x + 1)).collect();
        let _ = writeln!(
            out,
            "  subgraph cluster_{g} {{ style=rounded; color=blue; {} }}",
            names.join(" ")
        );
    }
    for i in 0..c.n {
        let _ = writeln!(out, "  \"{}\";", i + 1);
    }
    // Drop edges implied by transitivity of the drawn set for readability.
    let has = |a: usize, b: usize| c.edges.binary_search(&(a, b)).is_ok();
    for &(a, b) in &c.edges {
        let implied = (0..c.n).any(|k| k != a && k != b && has(a, k) && has(k, b));
        if !implied {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", a + 1, b + 1);
        }
    }
    out.push_str("}\n");
    out
}

/// Matrix CSV with a header row of 1-based labels.
pub fn matrix_csv(n: usize, value: impl Fn(usize, usize) -> f64) -> String {
    let mut out = String::from("actor");
    for j in 0..n {
        let _ = write!(out, ",{}", j + 1);
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{}", i + 1);
        for j in 0..n {
            let _ = write!(out, ",{}", value(i, j));
        }
        out.push('\n');
    }
    out
}

/// Sampler settings as they appear in configuration files; `thin` defaults
/// to twice the actor count at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub iterations: usize,
    pub thin: Option<usize>,
    pub burn_in_records: usize,
    pub seed: u64,
    pub w_rho: f64,
    pub theta_step: f64,
    pub p_step: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            iterations: 100_000,
            thin: None,
            burn_in_records: 500,
            seed: 0,
            w_rho: 0.9,
            theta_step: 0.5,
            p_step: 1.0,
        }
    }
}

impl McmcSettings {
    pub fn to_mcmc_config(&self, model: ModelTag, prior: PriorConfig, n: usize) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            thin: self.thin.unwrap_or_else(|| McmcConfig::default_thin(n)),
            burn_in_records: self.burn_in_records,
            seed: self.seed,
            model,
            prior,
            w_rho: self.w_rho,
            theta_step: self.theta_step,
            p_step: self.p_step,
        }
    }
}

/// The `--config` document for fitting and prior-predictive runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub prior: PriorConfig,
    pub mcmc: McmcSettings,
}

impl FitConfig {
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Everything needed to reproduce a run, stored in the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorConfig,
    pub mcmc: McmcSettings,
    pub model: ModelTag,
    pub data: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub n: usize,
    pub records: usize,
    pub config_hash: String,
    pub run: RunConfig,
}

/// FNV-1a of the canonical JSON encoding.
pub fn config_hash(run: &RunConfig) -> String {
    let text = serde_json::to_string(run).expect("config serializes");
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[derive(Serialize, Deserialize)]
struct PosetRow {
    iteration: usize,
    edges: Vec<(usize, usize)>,
    ties: Vec<(usize, usize)>,
    partition: Vec<Vec<usize>>,
}

/// Writes trace.csv, posets.jsonl, pointwise.csv, acceptance.csv and
/// manifest.json under the run directory.
pub fn write_run(dir: &Path, trace: &McmcTrace, run: &RunConfig) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;

    let mut trace_csv = String::from("iteration,loglik,K,C,rho,theta_or_p,depth\n");
    for r in &trace.records {
        let _ = writeln!(
            trace_csv,
            "{},{},{},{},{},{},{}",
            r.iteration, r.total_loglik, r.k, r.c, r.rho, r.noise_value, r.depth
        );
    }
    fs::write(dir.join("trace.csv"), trace_csv)?;

    let mut jsonl = String::new();
    for r in &trace.records {
        let row = PosetRow {
            iteration: r.iteration,
            edges: r
                .hstar
                .strict_edges()
                .into_iter()
                .map(|(i, j)| (i + 1, j + 1))
                .collect(),
            ties: r
                .hstar
                .tie_pairs()
                .into_iter()
                .map(|(i, j)| (i + 1, j + 1))
                .collect(),
            partition: r
                .partition
                .blocks()
                .iter()
                .map(|b| b.iter().map(|&x| x + 1).collect())
                .collect(),
        };
        jsonl.push_str(&serde_json::to_string(&row)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("posets.jsonl"), jsonl)?;

    let n_lists = trace.records.first().map_or(0, |r| r.pointwise.len());
    let mut pointwise = (1..=n_lists)
        .map(|i| format!("list_{i}"))
        .collect::<Vec<_>>()
        .join(",");
    pointwise.push('\n');
    for r in &trace.records {
        let row: Vec<String> = r.pointwise.iter().map(|v| v.to_string()).collect();
        pointwise.push_str(&row.join(","));
        pointwise.push('\n');
    }
    fs::write(dir.join("pointwise.csv"), pointwise)?;

    let mut acc = String::from("move,proposed,accepted\n");
    for (name, m) in [
        ("k", trace.stats.k),
        ("partition", trace.stats.partition),
        ("z", trace.stats.z),
        ("rho", trace.stats.rho),
        ("noise", trace.stats.noise),
    ] {
        let _ = writeln!(acc, "{},{},{}", name, m.proposed, m.accepted);
    }
    fs::write(dir.join("acceptance.csv"), acc)?;

    let manifest = Manifest {
        n: trace.n,
        records: trace.records.len(),
        config_hash: config_hash(run),
        run: run.clone(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(token: &str, line: usize) -> Result<T, IoError> {
    token.parse().map_err(|_| IoError::ParseError {
        line,
        msg: format!("bad field {token:?}"),
    })
}

/// Reconstructs the full trace from a run directory.
pub fn read_run(dir: &Path) -> Result<(McmcTrace, Manifest), IoError> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let n = manifest.n;

    let trace_text = fs::read_to_string(dir.join("trace.csv"))?;
    let poset_text = fs::read_to_string(dir.join("posets.jsonl"))?;
    let pointwise_text = fs::read_to_string(dir.join("pointwise.csv"))?;

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut poset_lines = poset_text.lines();
    let mut pointwise_lines = pointwise_text.lines().skip(1);
    for (lineno, line) in trace_text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(IoError::ParseError {
                line: lineno + 1,
                msg: format!("expected 7 columns, got {}", cols.len()),
            });
        }
        let row: PosetRow = serde_json::from_str(poset_lines.next().ok_or(
            IoError::ParseError {
                line: lineno + 1,
                msg: "posets.jsonl shorter than trace.csv".into(),
            },
        )?)?;
        let mut rel = Relation::new(n);
        let check = |x: usize| -> Result<usize, IoError> {
            if x == 0 || x > n {
                return Err(IoError::ParseError {
                    line: lineno + 1,
                    msg: format!("actor label {x} outside 1..={n}"),
                });
            }
            Ok(x - 1)
        };
        for &(i, j) in &row.edges {
            rel.set(check(i)?, check(j)?, true);
        }
        for &(i, j) in &row.ties {
            let (i, j) = (check(i)?, check(j)?);
            rel.set(i, j, true);
            rel.set(j, i, true);
        }
        let hstar = TiedPartialOrder::from_relation(rel)?;
        let blocks: Vec<Vec<usize>> = row
            .partition
            .iter()
            .map(|b| b.iter().map(|&x| x.wrapping_sub(1)).collect())
            .collect();
        let mut seen = vec![false; n];
        for &x in blocks.iter().flatten() {
            if x >= n || seen[x] {
                return Err(IoError::ParseError {
                    line: lineno + 1,
                    msg: "partition does not cover the actors exactly once".into(),
                });
            }
            seen[x] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(IoError::ParseError {
                line: lineno + 1,
                msg: "partition does not cover the actors exactly once".into(),
            });
        }
        let partition = Partition::new(n, blocks);
        let pointwise: Vec<f64> = match pointwise_lines.next() {
            Some(l) if !l.trim().is_empty() => l
                .split(',')
                .map(|t| parse_field::<f64>(t, lineno + 1))
                .collect::<Result<_, _>>()?,
            _ => Vec::new(),
        };
        records.push(TraceRecord {
            iteration: parse_field(cols[0], lineno + 1)?,
            total_loglik: parse_field(cols[1], lineno + 1)?,
            pointwise,
            k: parse_field(cols[2], lineno + 1)?,
            c: parse_field(cols[3], lineno + 1)?,
            rho: parse_field(cols[4], lineno + 1)?,
            noise_value: parse_field(cols[5], lineno + 1)?,
            depth: parse_field(cols[6], lineno + 1)?,
            hstar,
            partition,
        });
    }

    let acc_text = fs::read_to_string(dir.join("acceptance.csv"))?;
    let mut stats = AcceptanceStats::default();
    for (lineno, line) in acc_text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            continue;
        }
        let m = MoveStats {
            proposed: parse_field(cols[1], lineno + 1)?,
            accepted: parse_field(cols[2], lineno + 1)?,
        };
        match cols[0] {
            "k" => stats.k = m,
            "partition" => stats.partition = m,
            "z" => stats.z = m,
            "rho" => stats.rho = m,
            "noise" => stats.noise = m,
            _ => {}
        }
    }

    Ok((
        McmcTrace {
            n,
            model: manifest.run.model,
            records,
            stats,
        },
        manifest,
    ))
}
