//! Transition matrices over composite states: empirical estimation,
//! multi-step belief propagation and hard prediction.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::statespace::{Belief, StateSpace, Variant};
use crate::traffic::Trace;

/// Tolerance on row sums of a stochastic matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Spaces up to this size keep a dense matrix; larger ones store sparse rows.
pub const DENSE_LIMIT: usize = 4096;

const MODEL_MAGIC: &str = "specpred-markov 1";

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    Sparse(Vec<Vec<(usize, f64)>>),
}

/// Row-stochastic matrix, `P[i][j] = p(next = j | current = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    storage: Storage,
}

impl TransitionMatrix {
    /// Dense `n x n` matrix from row-major values. Rows must be stochastic.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: values.len(),
            });
        }
        let m = TransitionMatrix {
            n,
            storage: Storage::Dense(values),
        };
        m.validate()?;
        Ok(m)
    }

    /// Sparse matrix from per-row `(column, value)` lists.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rows.len(),
            });
        }
        if rows.iter().flatten().any(|&(j, _)| j >= n) {
            return Err(Error::invalid("column index out of range"));
        }
        let m = if n <= DENSE_LIMIT {
            let mut values = vec![0.0; n * n];
            for (i, row) in rows.iter().enumerate() {
                for &(j, v) in row {
                    values[i * n + j] += v;
                }
            }
            TransitionMatrix {
                n,
                storage: Storage::Dense(values),
            }
        } else {
            TransitionMatrix {
                n,
                storage: Storage::Sparse(rows),
            }
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[i * self.n + j],
            Storage::Sparse(rows) => rows[i]
                .iter()
                .filter(|&&(c, _)| c == j)
                .map(|&(_, v)| v)
                .sum(),
        }
    }

    /// Non-zero entries of row `i`.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        match &self.storage {
            Storage::Dense(v) => v[i * self.n..(i + 1) * self.n]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(j, &p)| (j, p))
                .collect(),
            Storage::Sparse(rows) => rows[i].clone(),
        }
    }

    /// Row-major dense values, if the matrix is stored densely.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(v) => Some(v),
            Storage::Sparse(_) => None,
        }
    }

    pub fn to_dense(&self) -> Result<Vec<f64>> {
        match &self.storage {
            Storage::Dense(v) => Ok(v.clone()),
            Storage::Sparse(_) => Err(Error::invalid(format!(
                "a {n}x{n} matrix is too large for dense operations",
                n = self.n
            ))),
        }
    }

    /// Every entry non-negative and finite, every row summing to one.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|&(_, p)| !p.is_finite() || p < 0.0) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {total}")));
            }
        }
        Ok(())
    }

    /// One step of the chain: `out = belief * P`.
    pub fn step(&self, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        match &self.storage {
            Storage::Dense(v) => {
                for (i, &b) in belief.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    let row = &v[i * self.n..(i + 1) * self.n];
                    for (o, &p) in out.iter_mut().zip(row) {
                        *o += b * p;
                    }
                }
            }
            Storage::Sparse(rows) => {
                for (i, &b) in belief.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    for &(j, p) in &rows[i] {
                        out[j] += b * p;
                    }
                }
            }
        }
        out
    }
}

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMeta {
    pub trace_name: String,
    pub max_states: Option<usize>,
    pub finetuned: bool,
}

/// A state space with its transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    space: StateSpace,
    matrix: TransitionMatrix,
    /// States occupied at least once in the training trace. Sensing
    /// candidates are restricted to these whenever one of them matches.
    visited: Vec<bool>,
    meta: ModelMeta,
}

/// Hard and soft prediction for one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub prob: f64,
    pub hard: u8,
}

impl Prediction {
    /// Ties at exactly 0.5 resolve to idle.
    pub fn from_prob(prob: f64) -> Self {
        Prediction {
            prob,
            hard: u8::from(prob > 0.5),
        }
    }
}

impl MarkovModel {
    pub fn new(
        space: StateSpace,
        matrix: TransitionMatrix,
        visited: Vec<bool>,
        meta: ModelMeta,
    ) -> Result<Self> {
        let n = space.size();
        if matrix.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: matrix.n(),
            });
        }
        if visited.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: visited.len(),
            });
        }
        Ok(MarkovModel {
            space,
            matrix,
            visited,
            meta,
        })
    }

    /// Build the state space's transition matrix from `trace` by counting.
    pub fn estimate(space: StateSpace, trace: &Trace) -> Result<Self> {
        let est = estimate_with_occupancy(&space, trace)?;
        let meta = ModelMeta {
            trace_name: trace.name().to_string(),
            max_states: None,
            finetuned: false,
        };
        MarkovModel::new(space, est.matrix, est.visited, meta)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }

    pub fn with_matrix(&self, matrix: TransitionMatrix) -> Result<Self> {
        MarkovModel::new(self.space.clone(), matrix, self.visited.clone(), self.meta.clone())
    }

    /// Encode a sensed vector (most recent slot first) into a belief.
    pub fn encode(&self, sensed: &[u8]) -> Result<Belief> {
        self.space.encode_within(sensed, Some(&self.visited))
    }

    /// `belief * P^horizon`, by repeated vector-matrix products.
    pub fn propagate(&self, belief: &Belief, horizon: usize) -> Result<Belief> {
        if belief.len() != self.matrix.n() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.n(),
                actual: belief.len(),
            });
        }
        let mut s = belief.as_slice().to_vec();
        for _ in 0..horizon {
            s = self.matrix.step(&s);
        }
        Ok(Belief::from_vec_unchecked(s))
    }

    /// Probability that the channel is active `T` slots after the last
    /// sensed slot, for every `T` in `1..=max_horizon`.
    pub fn active_curve(&self, sensed: &[u8], max_horizon: usize) -> Result<Vec<f64>> {
        let start = self.encode(sensed)?;
        let mut s = start.into_vec();
        let mut curve = Vec::with_capacity(max_horizon);
        for _ in 0..max_horizon {
            s = self.matrix.step(&s);
            curve.push(
                self.space
                    .active_probability(&Belief::from_vec_unchecked(s.clone())),
            );
        }
        Ok(curve)
    }

    pub fn predict(&self, sensed: &[u8], horizon: usize) -> Result<Prediction> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let belief = self.propagate(&self.encode(sensed)?, horizon)?;
        Ok(Prediction::from_prob(self.space.active_probability(&belief)))
    }

    /// Save as a text model file. Smart tables go to a `.states` sidecar
    /// next to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        writeln!(out, "{MODEL_MAGIC}").unwrap();
        writeln!(out, "variant {}", self.space.variant()).unwrap();
        writeln!(out, "order {}", self.space.order()).unwrap();
        writeln!(out, "states {}", self.space.size()).unwrap();
        writeln!(
            out,
            "max_states {}",
            self.meta
                .max_states
                .map_or_else(|| "none".to_string(), |m| m.to_string())
        )
        .unwrap();
        writeln!(out, "trace {}", self.meta.trace_name).unwrap();
        writeln!(out, "finetuned {}", self.meta.finetuned).unwrap();
        if self.space.variant() == Variant::Smart {
            let sidecar = sidecar_path(path);
            self.space.save_table(&sidecar)?;
            let name = sidecar
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            writeln!(out, "table {name}").unwrap();
        }
        let visited: Vec<String> = self
            .visited
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| i.to_string())
            .collect();
        writeln!(out, "visited {}", visited.join(" ")).unwrap();
        let n = self.matrix.n();
        match &self.matrix.storage {
            Storage::Dense(v) => {
                writeln!(out, "storage dense").unwrap();
                for i in 0..n {
                    let row: Vec<String> =
                        v[i * n..(i + 1) * n].iter().map(|p| format!("{p:e}")).collect();
                    writeln!(out, "{}", row.join(" ")).unwrap();
                }
            }
            Storage::Sparse(rows) => {
                writeln!(out, "storage sparse").unwrap();
                for row in rows {
                    let row: Vec<String> = row.iter().map(|(j, p)| format!("{j}:{p:e}")).collect();
                    writeln!(out, "{}", row.join(" ")).unwrap();
                }
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MODEL_MAGIC) {
            return Err(Error::Format(format!("{}: not a specpred model", path.display())));
        }

        let mut header: HashMap<&str, &str> = HashMap::new();
        for line in lines.by_ref() {
            let (key, value) = line.split_once(' ').unwrap_or((line, ""));
            header.insert(key, value.trim());
            if key == "storage" {
                break;
            }
        }
        let field = |key: &str| {
            header
                .get(key)
                .copied()
                .ok_or_else(|| Error::Format(format!("missing header field {key:?}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| Error::Format(format!("header field {key:?} is not an integer")))
        };

        let variant: Variant = field("variant")?.parse()?;
        let order = parse_usize("order")?;
        let n = parse_usize("states")?;
        let max_states = match field("max_states")? {
            "none" => None,
            m => Some(
                m.parse()
                    .map_err(|_| Error::Format("bad max_states".into()))?,
            ),
        };
        let meta = ModelMeta {
            trace_name: header.get("trace").copied().unwrap_or_default().to_string(),
            max_states,
            finetuned: field("finetuned")? == "true",
        };

        let space = match variant {
            Variant::Full => StateSpace::full(order)?,
            Variant::Simple => StateSpace::simple(order)?,
            Variant::Smart => {
                let sidecar = path
                    .parent()
                    .unwrap_or_else(|| Path::new(""))
                    .join(field("table")?);
                StateSpace::load_table(sidecar, order)?
            }
        };
        if space.size() != n {
            return Err(Error::Format(format!(
                "header declares {n} states, the state space has {}",
                space.size()
            )));
        }

        let mut visited = vec![false; n];
        for tok in field("visited")?.split_whitespace() {
            let i: usize = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad visited index {tok:?}")))?;
            *visited
                .get_mut(i)
                .ok_or_else(|| Error::Format(format!("visited index {i} out of range")))? = true;
        }

        let bad = |tok: &str| Error::Format(format!("bad matrix entry {tok:?}"));
        let rows: Vec<&str> = lines.collect();
        if rows.len() < n {
            return Err(Error::Format(format!("expected {n} matrix rows, found {}", rows.len())));
        }
        let matrix = match field("storage")? {
            "dense" => {
                let mut values = Vec::with_capacity(n * n);
                for row in &rows[..n] {
                    let before = values.len();
                    for tok in row.split_whitespace() {
                        values.push(tok.parse::<f64>().map_err(|_| bad(tok))?);
                    }
                    if values.len() - before != n {
                        return Err(Error::Format(format!("matrix row has {} entries", values.len() - before)));
                    }
                }
                TransitionMatrix::from_dense(n, values)?
            }
            "sparse" => {
                let mut parsed = Vec::with_capacity(n);
                for row in &rows[..n] {
                    let entries = row
                        .split_whitespace()
                        .map(|tok| {
                            let (j, p) = tok.split_once(':').ok_or_else(|| bad(tok))?;
                            Ok((
                                j.parse::<usize>().map_err(|_| bad(tok))?,
                                p.parse::<f64>().map_err(|_| bad(tok))?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    parsed.push(entries);
                }
                TransitionMatrix::from_rows(n, parsed)?
            }
            other => return Err(Error::Format(format!("unknown storage {other:?}"))),
        };
        MarkovModel::new(space, matrix, visited, meta)
    }
}

/// Sidecar file holding a smart table for the model at `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".states");
    path.with_file_name(name)
}

/// Result of counting transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub matrix: TransitionMatrix,
    pub visited: Vec<bool>,
}

/// Empirical transition matrix of `trace` over `space`.
pub fn estimate(space: &StateSpace, trace: &Trace) -> Result<TransitionMatrix> {
    Ok(estimate_with_occupancy(space, trace)?.matrix)
}

pub fn estimate_with_occupancy(space: &StateSpace, trace: &Trace) -> Result<Estimate> {
    let order = space.order();
    if trace.len() < order + 1 {
        return Err(Error::TraceTooShort {
            needed: order + 1,
            actual: trace.len(),
        });
    }
    let windows: Vec<Vec<u8>> = (order - 1..trace.len())
        .map(|t| trace.window(t, order))
        .collect();
    estimate_from_pairs(
        space,
        windows.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice())),
    )
}

/// Empirical estimate from consecutive `(window_t, window_t+1)` pairs.
///
/// Pairs are tallied as integer counts per distinct pair and folded into
/// the matrix in sorted order, so the result does not depend on the order
/// in which pairs are supplied.
pub fn estimate_from_pairs<'a>(
    space: &StateSpace,
    pairs: impl IntoIterator<Item = (&'a [u8], &'a [u8])>,
) -> Result<Estimate> {
    let order = space.order();
    let mut tally: HashMap<(&'a [u8], &'a [u8]), u64> = HashMap::new();
    for (from, to) in pairs {
        if from.len() != order || to.len() != order {
            return Err(Error::DimensionMismatch {
                expected: order,
                actual: from.len().max(to.len()),
            });
        }
        *tally.entry((from, to)).or_insert(0) += 1;
    }
    if tally.is_empty() {
        return Err(Error::invalid("no transitions to count"));
    }
    let mut tally: Vec<_> = tally.into_iter().collect();
    tally.sort_unstable();

    let n = space.size();
    let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut visited = vec![false; n];
    let mut cache: HashMap<&[u8], Vec<(usize, f64)>> = HashMap::new();
    for ((from, to), c) in tally {
        let a = cache
            .entry(from)
            .or_insert_with(|| space.window_states(from))
            .clone();
        let b = cache
            .entry(to)
            .or_insert_with(|| space.window_states(to))
            .clone();
        for &(i, wa) in &a {
            visited[i] = true;
            for &(j, wb) in &b {
                visited[j] = true;
                *counts[i].entry(j).or_insert(0.0) += c as f64 * wa * wb;
            }
        }
    }

    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.values().sum();
            if total > 0.0 {
                row.into_iter().map(|(j, c)| (j, c / total)).collect()
            } else {
                unobserved_row(space, i)
            }
        })
        .collect();
    Ok(Estimate {
        matrix: TransitionMatrix::from_rows(n, rows)?,
        visited,
    })
}

/// Fallback row for a state never seen leaving: uniform over structural
/// successors in the space, or over the Hamming-closest entries of the
/// shifted patterns when a smart table has none.
fn unobserved_row(space: &StateSpace, i: usize) -> Vec<(usize, f64)> {
    let mut succ: Vec<usize> = space.successors(i).into_iter().filter_map(|(_, j)| j).collect();
    succ.sort_unstable();
    succ.dedup();
    let mut row: HashMap<usize, f64> = HashMap::new();
    if !succ.is_empty() {
        let w = 1.0 / succ.len() as f64;
        for j in succ {
            *row.entry(j).or_insert(0.0) += w;
        }
    } else {
        let shifted = space.shifted_patterns(i).expect("only smart tables lack successors");
        for p in &shifted {
            let ties = space.match_hamming(p).expect("non-empty smart table");
            let w = 0.5 / ties.len() as f64;
            for j in ties {
                *row.entry(j).or_insert(0.0) += w;
            }
        }
    }
    let mut row: Vec<_> = row.into_iter().collect();
    row.sort_unstable_by_key(|&(j, _)| j);
    row
}
