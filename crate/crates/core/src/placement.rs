//! Repetitive Map/Reduce placement.
//!
//! Input files are cut into `C(K, r)` equal batches, one per `r`-subset of
//! nodes, and every node in a subset maps that subset's batch. Reduce
//! functions are dealt round-robin so node `k` reduces `k, k+K, k+2K, ...`.
//! Node, file and function ids are 1-based throughout.

use std::fmt;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::numeric::binomial;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("placement infeasible: {constraint} (nearest feasible: N={files}, Q={functions})")]
    Infeasible {
        constraint: String,
        files: usize,
        functions: usize,
    },
    #[error("malformed plan document: {0}")]
    Malformed(String),
}

/// Sorted set of node ids. Ordering is lexicographic on the member sequence,
/// which for equal-size sets is the usual combination order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeSet(Vec<NodeId>);

impl NodeSet {
    pub fn new(members: impl IntoIterator<Item = NodeId>) -> Self {
        let mut members: Vec<NodeId> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self(members)
    }

    pub fn members(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    /// Rank of `node` inside the set.
    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.0.binary_search(&node).ok()
    }

    pub fn without(&self, node: NodeId) -> NodeSet {
        NodeSet(self.0.iter().copied().filter(|&m| m != node).collect())
    }

    pub fn with(&self, node: NodeId) -> NodeSet {
        NodeSet::new(self.0.iter().copied().chain(std::iter::once(node)))
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    /// `"1,2,5"`, the key form used in plan documents.
    pub fn key(&self) -> String {
        self.0.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn parse_key(key: &str) -> Option<NodeSet> {
        if key.trim().is_empty() {
            return Some(NodeSet::default());
        }
        key.split(',')
            .map(|p| p.trim().parse::<NodeId>().ok())
            .collect::<Option<Vec<_>>>()
            .map(NodeSet::new)
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

/// All `size`-subsets of `{1..universe}` in lexicographic order.
pub fn enumerate_subsets(universe: usize, size: usize) -> Result<Vec<NodeSet>, PlacementError> {
    if size > universe {
        return Err(PlacementError::InvalidArgument(format!(
            "subset size {size} exceeds universe {universe}"
        )));
    }
    let mut out = Vec::with_capacity(binomial(universe, size) as usize);
    let mut current: Vec<NodeId> = (1..=size).collect();
    loop {
        out.push(NodeSet(current.clone()));
        // Rightmost position that can still advance.
        let Some(i) = (0..size).rev().find(|&i| current[i] < universe - size + i + 1) else {
            break;
        };
        current[i] += 1;
        for j in i + 1..size {
            current[j] = current[j - 1] + 1;
        }
    }
    Ok(out)
}

/// Parameters of a MapReduce job over `nodes` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JobSpec {
    /// K
    pub nodes: usize,
    /// N
    pub files: usize,
    /// Q
    pub functions: usize,
    /// Computation load r: how many nodes map each file.
    pub load: usize,
    /// T, size of one intermediate value in bits.
    pub value_bits: usize,
}

impl JobSpec {
    pub fn new(nodes: usize, files: usize, functions: usize, load: usize, value_bits: usize) -> Self {
        Self { nodes, files, functions, load, value_bits }
    }

    pub fn batch_count(&self) -> usize {
        binomial(self.nodes, self.load) as usize
    }

    /// η = N / C(K, r)
    pub fn files_per_batch(&self) -> usize {
        self.files / self.batch_count()
    }

    pub fn functions_per_node(&self) -> usize {
        self.functions / self.nodes
    }

    /// Smallest (N, Q) at or above the requested ones satisfying divisibility.
    pub fn nearest_feasible(&self) -> (usize, usize) {
        let batches = self.batch_count().max(1);
        let nodes = self.nodes.max(1);
        let files = self.files.max(1).div_ceil(batches) * batches;
        let functions = self.functions.max(1).div_ceil(nodes) * nodes;
        (files, functions)
    }

    pub fn validate(&self) -> Result<(), PlacementError> {
        if self.nodes < 2 {
            return Err(PlacementError::InvalidArgument(format!(
                "need at least 2 nodes, got {}",
                self.nodes
            )));
        }
        if self.load < 1 || self.load > self.nodes {
            return Err(PlacementError::InvalidArgument(format!(
                "computation load r={} outside 1..={}",
                self.load, self.nodes
            )));
        }
        if self.value_bits == 0 || self.value_bits % 8 != 0 {
            return Err(PlacementError::InvalidArgument(format!(
                "value size T={} bits is not a positive multiple of 8",
                self.value_bits
            )));
        }
        let (files, functions) = self.nearest_feasible();
        if self.files == 0 || self.files % self.batch_count() != 0 {
            return Err(PlacementError::Infeasible {
                constraint: format!(
                    "N={} is not a positive multiple of C({},{})={}",
                    self.files,
                    self.nodes,
                    self.load,
                    self.batch_count()
                ),
                files,
                functions,
            });
        }
        if self.functions == 0 || self.functions % self.nodes != 0 {
            return Err(PlacementError::Infeasible {
                constraint: format!(
                    "Q={} is not a positive multiple of K={}",
                    self.functions, self.nodes
                ),
                files,
                functions,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub hosts: NodeSet,
    pub files: Vec<usize>,
}

/// Which node maps which files and which node reduces which functions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementPlan {
    pub nodes: usize,
    pub files: usize,
    pub functions: usize,
    pub load: usize,
    pub files_per_batch: usize,
    /// Lexicographic in `hosts`.
    pub batches: Vec<Batch>,
    /// Indexed by node id - 1.
    pub reduce: Vec<Vec<usize>>,
    file_batch: Vec<usize>,
}

impl PlacementPlan {
    pub fn build(spec: &JobSpec) -> Result<Self, PlacementError> {
        spec.validate()?;
        let eta = spec.files_per_batch();
        let subsets = enumerate_subsets(spec.nodes, spec.load)?;
        let batches: Vec<Batch> = subsets
            .into_iter()
            .enumerate()
            .map(|(i, hosts)| Batch {
                hosts,
                files: (i * eta + 1..=(i + 1) * eta).collect(),
            })
            .collect();
        let reduce = (1..=spec.nodes)
            .map(|node| (node..=spec.functions).step_by(spec.nodes).collect())
            .collect();
        Self::assemble(spec.nodes, spec.files, spec.functions, spec.load, batches, reduce)
    }

    fn assemble(
        nodes: usize,
        files: usize,
        functions: usize,
        load: usize,
        batches: Vec<Batch>,
        reduce: Vec<Vec<usize>>,
    ) -> Result<Self, PlacementError> {
        let mut file_batch = vec![usize::MAX; files];
        for (i, batch) in batches.iter().enumerate() {
            for &f in &batch.files {
                if f == 0 || f > files {
                    return Err(PlacementError::Malformed(format!("file id {f} out of range")));
                }
                file_batch[f - 1] = i;
            }
        }
        let files_per_batch = batches.first().map_or(0, |b| b.files.len());
        let plan = Self { nodes, files, functions, load, files_per_batch, batches, reduce, file_batch };
        plan.check_invariants().map_err(PlacementError::Malformed)?;
        Ok(plan)
    }

    pub fn spec(&self, value_bits: usize) -> JobSpec {
        JobSpec::new(self.nodes, self.files, self.functions, self.load, value_bits)
    }

    pub fn batch_for(&self, hosts: &NodeSet) -> Option<&Batch> {
        self.batches
            .binary_search_by(|b| b.hosts.cmp(hosts))
            .ok()
            .map(|i| &self.batches[i])
    }

    /// Nodes that map `file`.
    pub fn holders(&self, file: usize) -> &NodeSet {
        &self.batches[self.file_batch[file - 1]].hosts
    }

    pub fn stores(&self, node: NodeId, file: usize) -> bool {
        self.holders(file).contains(node)
    }

    pub fn files_on(&self, node: NodeId) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .batches
            .iter()
            .filter(|b| b.hosts.contains(node))
            .flat_map(|b| b.files.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn functions_of(&self, node: NodeId) -> &[usize] {
        &self.reduce[node - 1]
    }

    pub fn reducer_of(&self, function: usize) -> NodeId {
        (function - 1) % self.nodes + 1
    }

    /// Verifies every structural invariant by direct counting.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.batches.len() as u64 != binomial(self.nodes, self.load) {
            return Err(format!("expected C({},{}) batches, found {}", self.nodes, self.load, self.batches.len()));
        }
        if !self.batches.windows(2).all(|w| w[0].hosts < w[1].hosts) {
            return Err("batch host sets are not distinct".into());
        }
        let mut seen = vec![0usize; self.files];
        for batch in &self.batches {
            if batch.hosts.iter().any(|m| m == 0 || m > self.nodes) {
                return Err(format!("batch {} names an unknown node", batch.hosts));
            }
            if batch.hosts.len() != self.load {
                return Err(format!("batch {} does not have {} hosts", batch.hosts, self.load));
            }
            if batch.files.len() != self.files_per_batch {
                return Err(format!("batch {} holds {} files", batch.hosts, batch.files.len()));
            }
            for &f in &batch.files {
                seen[f - 1] += 1;
            }
        }
        if let Some(f) = seen.iter().position(|&c| c != 1) {
            return Err(format!("file {} appears in {} batches", f + 1, seen[f]));
        }
        for node in 1..=self.nodes {
            let stored = self.files_on(node).len();
            if stored * self.nodes != self.load * self.files {
                return Err(format!("node {node} stores {stored} files, expected rN/K"));
            }
        }
        let mut owners = vec![0usize; self.functions];
        if self.reduce.len() != self.nodes {
            return Err("reduce assignment does not cover every node".into());
        }
        for list in &self.reduce {
            if list.len() * self.nodes != self.functions {
                return Err("reduce assignment is not even".into());
            }
            for &q in list {
                if q == 0 || q > self.functions {
                    return Err(format!("function id {q} out of range"));
                }
                owners[q - 1] += 1;
            }
        }
        if let Some(q) = owners.iter().position(|&c| c != 1) {
            return Err(format!("function {} has {} reducers", q + 1, owners[q]));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let batches: Map<String, Value> = self
            .batches
            .iter()
            .map(|b| (b.hosts.key(), json!(b.files)))
            .collect();
        let reduce: Map<String, Value> = self
            .reduce
            .iter()
            .enumerate()
            .map(|(i, fs)| ((i + 1).to_string(), json!(fs)))
            .collect();
        json!({
            "k": self.nodes,
            "n_files": self.files,
            "q_functions": self.functions,
            "r": self.load,
            "batches": batches,
            "reduce": reduce,
        })
    }

    pub fn from_json(doc: &Value) -> Result<Self, PlacementError> {
        let field = |name: &str| -> Result<usize, PlacementError> {
            doc.get(name)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| PlacementError::Malformed(format!("missing integer field `{name}`")))
        };
        let (nodes, files, functions, load) =
            (field("k")?, field("n_files")?, field("q_functions")?, field("r")?);
        let ids = |v: &Value| -> Result<Vec<usize>, PlacementError> {
            v.as_array()
                .and_then(|a| a.iter().map(|x| x.as_u64().map(|x| x as usize)).collect())
                .ok_or_else(|| PlacementError::Malformed("expected an array of ids".into()))
        };
        let batch_map = doc
            .get("batches")
            .and_then(Value::as_object)
            .ok_or_else(|| PlacementError::Malformed("missing `batches`".into()))?;
        let mut batches = batch_map
            .iter()
            .map(|(k, v)| {
                let hosts = NodeSet::parse_key(k)
                    .ok_or_else(|| PlacementError::Malformed(format!("bad subset key `{k}`")))?;
                Ok(Batch { hosts, files: ids(v)? })
            })
            .collect::<Result<Vec<_>, PlacementError>>()?;
        batches.sort_by(|a, b| a.hosts.cmp(&b.hosts));
        let reduce_map = doc
            .get("reduce")
            .and_then(Value::as_object)
            .ok_or_else(|| PlacementError::Malformed("missing `reduce`".into()))?;
        let mut reduce = vec![Vec::new(); nodes];
        for (k, v) in reduce_map {
            let node: usize = k
                .parse()
                .ok()
                .filter(|&n| n >= 1 && n <= nodes)
                .ok_or_else(|| PlacementError::Malformed(format!("bad node key `{k}`")))?;
            reduce[node - 1] = ids(v)?;
        }
        Self::assemble(nodes, files, functions, load, batches, reduce)
    }
}
