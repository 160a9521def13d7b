//! MDS-coded Map tasks on a repetitive placement.
//!
//! `m` source tasks are coded into `(K/q)·m` tasks, each run on `μq` nodes
//! (round-robin over the lexicographic `μq`-subsets). Map ends when the
//! fastest `q` nodes finish; those finishers then shuffle greedily with
//! coded multicasts. Small `q` gives short Map phases and heavy shuffles;
//! `q = K` is the plain coded-multicast scheme.
//!
//! Node ids are `1..=K`, task and function ids are 0-based. Internally node
//! sets are bitmasks with bit `i - 1` for node `i`, so `K <= 64`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::str::FromStr;

use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::erasure::{ErasureError, Field, MdsCode};
use crate::numeric::{binomial, fmt_fraction, fmt_sig, mix64, rational_to_f64, ratio, stream_rng, Rational};
use crate::placement::{enumerate_subsets, NodeId, NodeSet};
use crate::straggler::{exp_order_stat_mean, kth_smallest, monte_carlo, LatencyEstimate, ShiftedExponential, StragglerError};

/// Exhaustive coverage check up to this many nodes.
pub const COVERAGE_EXHAUSTIVE_MAX_NODES: usize = 10;
/// Finisher sets are enumerated when there are at most this many.
pub const FINISHER_EXHAUSTIVE_LIMIT: u64 = 1000;
pub const FINISHER_SAMPLES: usize = 64;
/// Upper bound on `coded tasks · functions · value length` for payload runs.
pub const EXECUTION_LIMIT: usize = 4_000_000;

pub const DEFAULT_ROWS: f64 = 1e6;
pub const DEFAULT_ENTRY_BITS: f64 = 16.0;
pub const DEFAULT_NETWORK_BPS: f64 = 10e6;

#[derive(Debug, Error, PartialEq)]
pub enum UnifiedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("plan infeasible: {constraint}")]
    Infeasible { constraint: String },
    #[error("shuffle infeasible: finishers {finishers} hold {available} distinct tasks, {needed} needed")]
    ShuffleInfeasible { finishers: String, available: usize, needed: usize },
    #[error("no feasible q for K={nodes}, mu={mu}, m={tasks}")]
    EmptySweep { nodes: usize, mu: String, tasks: usize },
    #[error("reducer {node} cannot decode function {function}: {reason}")]
    DecodeFailed { node: NodeId, function: usize, reason: String },
    #[error("instance too large for payload execution: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Erasure(#[from] ErasureError),
    #[error(transparent)]
    Straggler(#[from] StragglerError),
}

/// Who reduces after the Map phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DemandModel {
    /// Reduce functions reassigned round-robin over the sorted finishers.
    #[default]
    FinishersReduce,
    /// Function `φ` stays on node `φ mod K + 1`; unfinished nodes only receive.
    PeerReduce,
    /// Results go straight to the client; no peer shuffle.
    ClientCollects,
}

impl DemandModel {
    pub fn name(&self) -> &'static str {
        match self {
            DemandModel::FinishersReduce => "finishers-reduce",
            DemandModel::PeerReduce => "peer-reduce",
            DemandModel::ClientCollects => "client-collects",
        }
    }
}

impl fmt::Display for DemandModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemandModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "finishers-reduce" | "finishers" => Ok(DemandModel::FinishersReduce),
            "peer-reduce" | "peer" => Ok(DemandModel::PeerReduce),
            "client-collects" | "client" => Ok(DemandModel::ClientCollects),
            other => Err(format!("unknown demand model {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifiedSpec {
    pub nodes: usize,
    /// Fraction of the coded tasks each node runs.
    pub mu: Rational,
    /// Source Map tasks `m`.
    pub tasks: usize,
    /// Map ends once this many nodes finished.
    pub q: usize,
    /// Reduce functions `Q`.
    pub functions: usize,
}

impl UnifiedSpec {
    /// `Q` defaults to `K`.
    pub fn new(nodes: usize, mu: Rational, tasks: usize, q: usize) -> Self {
        Self { nodes, mu, tasks, q, functions: nodes }
    }

    pub fn with_functions(mut self, functions: usize) -> Self {
        self.functions = functions;
        self
    }

    /// `⌈1/μ⌉`.
    pub fn min_q(mu: &Rational) -> usize {
        let inv = mu.recip();
        inv.ceil().to_integer().to_usize().unwrap_or(usize::MAX)
    }

    /// `μq`; only meaningful after `validate`.
    pub fn hosts_per_task(&self) -> usize {
        (self.mu * Rational::from_integer(self.q as i128)).to_integer() as usize
    }

    /// `(K/q)·m`; only meaningful after `validate`.
    pub fn coded_task_count(&self) -> usize {
        self.nodes * self.tasks / self.q
    }

    /// `μ·m`, the coded tasks each node runs.
    pub fn tasks_per_node(&self) -> usize {
        (self.mu * Rational::from_integer(self.tasks as i128)).to_integer() as usize
    }

    fn infeasible(constraint: String) -> UnifiedError {
        UnifiedError::Infeasible { constraint }
    }

    pub fn validate(&self) -> Result<(), UnifiedError> {
        let (k, m, q) = (self.nodes, self.tasks, self.q);
        if k == 0 || k > 64 {
            return Err(UnifiedError::InvalidArgument(format!("K must be in 1..=64, got {k}")));
        }
        if m == 0 || self.functions == 0 {
            return Err(UnifiedError::InvalidArgument("m and Q must be >= 1".into()));
        }
        if self.mu < ratio(1, k as i128) || self.mu > Rational::from_integer(1) {
            return Err(UnifiedError::InvalidArgument(format!(
                "mu must lie in [1/K, 1], got {}",
                fmt_fraction(&self.mu)
            )));
        }
        let min_q = Self::min_q(&self.mu);
        if q < min_q || q > k {
            return Err(UnifiedError::InvalidArgument(format!("q must lie in [{min_q}, {k}], got {q}")));
        }
        let mu_q = self.mu * Rational::from_integer(q as i128);
        if !mu_q.is_integer() {
            return Err(Self::infeasible(format!("mu*q = {} is not an integer", fmt_fraction(&mu_q))));
        }
        if (k * m) % q != 0 {
            return Err(Self::infeasible(format!("(K/q)*m = {}*{m}/{q} is not an integer", k)));
        }
        let n = self.coded_task_count() as u64;
        let subsets = binomial(k, self.hosts_per_task());
        if n % subsets != 0 {
            return Err(Self::infeasible(format!(
                "(K/q)*m = {n} is not divisible by C({k},{}) = {subsets}",
                self.hosts_per_task()
            )));
        }
        let mu_m = self.mu * Rational::from_integer(m as i128);
        if !mu_m.is_integer() {
            return Err(Self::infeasible(format!("mu*m = {} is not an integer", fmt_fraction(&mu_m))));
        }
        let covered = self.coverage_closed_form();
        if covered < m {
            return Err(Self::infeasible(format!(
                "coverage: any {q} nodes hold only {covered} distinct tasks, m = {m}"
            )));
        }
        Ok(())
    }

    /// Distinct tasks held by any `q` nodes. Every `μq`-subset hosts the same
    /// number of tasks, so only subsets inside the `K − q` idle nodes are lost.
    fn coverage_closed_form(&self) -> usize {
        let a = self.hosts_per_task();
        let per_subset = self.coded_task_count() as u64 / binomial(self.nodes, a);
        ((binomial(self.nodes, a) - binomial(self.nodes - self.q, a)) * per_subset) as usize
    }
}

/// Every `q` in `[⌈1/μ⌉, K]` for which the spec is feasible.
pub fn feasible_q(nodes: usize, mu: Rational, tasks: usize, functions: usize) -> Vec<usize> {
    let lo = UnifiedSpec::min_q(&mu).max(1);
    (lo..=nodes)
        .filter(|&q| {
            UnifiedSpec { nodes, mu, tasks, q, functions }.validate().is_ok()
        })
        .collect()
}

/// Smallest `m` for which every `q` with integer `μq` is feasible.
pub fn default_tasks(nodes: usize, mu: Rational) -> Option<usize> {
    if nodes == 0 || nodes > 64 || mu <= Rational::zero() || mu > Rational::from_integer(1) {
        return None;
    }
    let mut m: u128 = *mu.denom() as u128;
    for q in UnifiedSpec::min_q(&mu)..=nodes {
        let mu_q = mu * Rational::from_integer(q as i128);
        if !mu_q.is_integer() {
            continue;
        }
        // K·m must be a multiple of q·C(K, μq).
        let step = q as u128 * binomial(nodes, mu_q.to_integer() as usize) as u128;
        m = m.lcm(&(step / step.gcd(&(nodes as u128))));
        if m > 1 << 40 {
            return None;
        }
    }
    usize::try_from(m).ok()
}

fn bit(node: NodeId) -> u64 {
    1u64 << (node - 1)
}

fn mask_of(set: &NodeSet) -> u64 {
    set.iter().fold(0, |acc, n| acc | bit(n))
}

fn nodes_of(mask: u64) -> NodeSet {
    NodeSet::new((0..64).filter(|i| mask >> i & 1 == 1).map(|i| i + 1))
}

fn members(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (mask != 0).then(|| {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            i
        })
    })
}

#[derive(Clone, Debug)]
pub struct UnifiedPlan {
    pub spec: UnifiedSpec,
    pub coded_tasks: usize,
    /// Coded tasks per host subset.
    pub tasks_per_host_set: usize,
    /// Lexicographic `μq`-subsets; task `t` runs on `host_sets[t mod len]`.
    pub host_sets: Vec<NodeSet>,
    host_masks: Vec<u64>,
    /// Fewest distinct tasks held by any `q` nodes.
    pub coverage_min: usize,
    pub coverage_exhaustive: bool,
}

impl UnifiedPlan {
    pub fn build(spec: &UnifiedSpec) -> Result<Self, UnifiedError> {
        spec.validate()?;
        let host_sets = enumerate_subsets(spec.nodes, spec.hosts_per_task())
            .map_err(|e| UnifiedError::InvalidArgument(e.to_string()))?;
        let host_masks = host_sets.iter().map(mask_of).collect();
        let coded_tasks = spec.coded_task_count();
        let mut plan = Self {
            spec: spec.clone(),
            coded_tasks,
            tasks_per_host_set: coded_tasks / host_sets.len(),
            host_sets,
            host_masks,
            coverage_min: spec.coverage_closed_form(),
            coverage_exhaustive: false,
        };
        if spec.nodes <= COVERAGE_EXHAUSTIVE_MAX_NODES {
            let brute = plan.coverage_bruteforce();
            if brute < spec.tasks {
                return Err(UnifiedSpec::infeasible(format!(
                    "coverage: some {} nodes hold only {brute} distinct tasks, m = {}",
                    spec.q, spec.tasks
                )));
            }
            plan.coverage_min = brute;
            plan.coverage_exhaustive = true;
        }
        Ok(plan)
    }

    pub fn hosts(&self, task: usize) -> &NodeSet {
        &self.host_sets[task % self.host_sets.len()]
    }

    pub fn tasks_on_count(&self, node: NodeId) -> usize {
        if node == 0 || node > self.spec.nodes {
            return 0;
        }
        let a = self.spec.hosts_per_task();
        self.tasks_per_host_set * binomial(self.spec.nodes - 1, a - 1) as usize
    }

    pub fn tasks_on(&self, node: NodeId) -> Vec<usize> {
        (0..self.coded_tasks).filter(|&t| self.hosts(t).contains(node)).collect()
    }

    /// Distinct coded tasks run by at least one node of `finishers`.
    pub fn available_tasks(&self, finishers: &NodeSet) -> usize {
        self.available_in(mask_of(finishers))
    }

    fn available_in(&self, fmask: u64) -> usize {
        self.host_masks.iter().filter(|&&h| h & fmask != 0).count() * self.tasks_per_host_set
    }

    /// Minimum of [`Self::available_tasks`] over every `q`-subset.
    pub fn coverage_bruteforce(&self) -> usize {
        enumerate_subsets(self.spec.nodes, self.spec.q)
            .expect("q <= K")
            .iter()
            .map(|f| self.available_in(mask_of(f)))
            .min()
            .unwrap_or(0)
    }

    /// The `((K/q)m, m)` code; the identity when no redundancy is added.
    pub fn mds_code(&self, field: Field, seed: u64) -> Result<MdsCode, UnifiedError> {
        if self.coded_tasks == self.spec.tasks {
            return Ok(MdsCode::identity(self.spec.tasks, field));
        }
        Ok(MdsCode::new(self.coded_tasks, self.spec.tasks, field, seed)?)
    }

    fn finisher_mask(&self, finishers: &NodeSet) -> Result<u64, UnifiedError> {
        if finishers.len() != self.spec.q || finishers.iter().any(|n| n == 0 || n > self.spec.nodes) {
            return Err(UnifiedError::InvalidArgument(format!(
                "finishers must be {} distinct nodes in 1..={}, got {finishers}",
                self.spec.q, self.spec.nodes
            )));
        }
        Ok(mask_of(finishers))
    }

    /// Selected tasks per host subset: highest availability first, then
    /// lowest task id.
    fn selection(&self, fmask: u64) -> Result<Vec<usize>, UnifiedError> {
        let a = self.spec.hosts_per_task();
        let c = self.tasks_per_host_set;
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); a + 1];
        for (h, &hm) in self.host_masks.iter().enumerate() {
            by_level[(hm & fmask).count_ones() as usize].push(h);
        }
        let mut counts = vec![0usize; self.host_masks.len()];
        let mut need = self.spec.tasks;
        for level in (1..=a).rev() {
            let hs = &by_level[level];
            if need == 0 || hs.is_empty() {
                continue;
            }
            if need >= hs.len() * c {
                hs.iter().for_each(|&h| counts[h] = c);
                need -= hs.len() * c;
            } else {
                // Task ids run round by round over the subsets.
                let (full, rem) = (need / hs.len(), need % hs.len());
                for (i, &h) in hs.iter().enumerate() {
                    counts[h] = full + usize::from(i < rem);
                }
                need = 0;
            }
        }
        if need > 0 {
            return Err(UnifiedError::ShuffleInfeasible {
                finishers: nodes_of(fmask).to_string(),
                available: self.spec.tasks - need,
                needed: self.spec.tasks,
            });
        }
        Ok(counts)
    }

    /// The `m` coded tasks whose results are used, ascending.
    pub fn decodable_set(&self, finishers: &NodeSet) -> Result<Vec<usize>, UnifiedError> {
        let fmask = self.finisher_mask(finishers)?;
        let counts = self.selection(fmask)?;
        let s = self.host_masks.len();
        let mut tasks: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(h, &d)| (0..d).map(move |i| h + i * s))
            .collect();
        tasks.sort_unstable();
        Ok(tasks)
    }

    /// Reduce functions of each node (index `node − 1`).
    pub fn reducers(&self, finishers: &NodeSet, demand: DemandModel) -> Result<Vec<Vec<usize>>, UnifiedError> {
        let fmask = self.finisher_mask(finishers)?;
        Ok(self.reducers_for(fmask, demand))
    }

    fn reducers_for(&self, fmask: u64, demand: DemandModel) -> Vec<Vec<usize>> {
        let k = self.spec.nodes;
        let mut out = vec![Vec::new(); k];
        match demand {
            DemandModel::ClientCollects => {}
            DemandModel::PeerReduce => (0..self.spec.functions).for_each(|f| out[f % k].push(f)),
            DemandModel::FinishersReduce => {
                let fin: Vec<usize> = members(fmask).collect();
                (0..self.spec.functions).for_each(|f| out[fin[f % fin.len()]].push(f));
            }
        }
        out
    }

    fn schedule(&self, fmask: u64, demand: DemandModel) -> Result<Schedule, UnifiedError> {
        let counts = self.selection(fmask)?;
        let mut known = MaskMap::default();
        for (h, &d) in counts.iter().enumerate() {
            if d > 0 {
                *known.entry(self.host_masks[h] & fmask).or_insert(0) += d as u64;
            }
        }
        let functions: Vec<u64> = self.reducers_for(fmask, demand).iter().map(|f| f.len() as u64).collect();
        let mut sched = Schedule { finishers: fmask, known, functions, coded: Vec::new() };

        // Group S = A ∪ {k} is visited once, from its lowest member with a demand.
        for &a in sched.known.keys() {
            if a.count_ones() < 2 {
                continue;
            }
            for k in members(fmask & !a) {
                if sched.functions[k] == 0 {
                    continue;
                }
                let s = a | 1 << k;
                let first = members(s).find(|&j| sched.demand(j, s & !(1 << j)) > 0);
                if first != Some(k) {
                    continue;
                }
                let group = sched.multicast_cost(s);
                let plain: u64 = members(s).map(|j| sched.demand(j, s & !(1 << j))).sum();
                if group.longest_sum < plain * group.receivers_minus_one {
                    sched.coded.push(group);
                }
            }
        }
        sched.coded.sort_by_key(|g| (Reverse(g.mask.count_ones()), g.mask));
        Ok(sched)
    }

    /// Greedy shuffle load for one finisher set, in exact value units.
    pub fn shuffle_load(&self, finishers: &NodeSet, demand: DemandModel) -> Result<ShuffleLoad, UnifiedError> {
        let fmask = self.finisher_mask(finishers)?;
        self.load_for(fmask, demand)
    }

    fn load_for(&self, fmask: u64, demand: DemandModel) -> Result<ShuffleLoad, UnifiedError> {
        let sched = self.schedule(fmask, demand)?;
        // Multicast cost per group size, as numerators over `|S| − 1`.
        let mut by_size = [0u64; 65];
        let mut multicasts = 0;
        for g in &sched.coded {
            by_size[g.receivers_minus_one as usize] += g.longest_sum;
            multicasts += g.senders;
        }
        let mut units: Rational = by_size
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(a, &n)| ratio(n as i128, a as i128))
            .sum();
        let coded: MaskMap<()> = sched.coded.iter().map(|g| (g.mask, ())).collect();
        let mut unicast_units = 0u64;
        for (&a, &cnt) in &sched.known {
            for k in 0..self.spec.nodes {
                let f = sched.functions[k];
                if f == 0 || a >> k & 1 == 1 {
                    continue;
                }
                if fmask >> k & 1 == 1 && coded.contains_key(&(a | 1 << k)) {
                    continue;
                }
                unicast_units += f * cnt;
            }
        }
        units += Rational::from_integer(unicast_units as i128);
        let total = (self.spec.functions * self.spec.tasks) as i128;
        Ok(ShuffleLoad {
            value_units: units,
            normalized_load: units / Rational::from_integer(total),
            multicasts,
            coded_groups: sched.coded.len() as u64,
            unicast_units,
        })
    }

    /// Load averaged exactly over [`finisher_sets`].
    pub fn average_load(&self, demand: DemandModel, seed: u64) -> Result<(Rational, usize), UnifiedError> {
        let sets = finisher_sets(self.spec.nodes, self.spec.q, seed);
        let loads: Vec<Rational> = sets
            .par_iter()
            .map(|&f| self.load_for(f, demand).map(|l| l.normalized_load))
            .collect::<Result<_, _>>()?;
        let sum = loads.iter().fold(Rational::zero(), |acc, l| acc + l);
        Ok((sum / Rational::from_integer(sets.len() as i128), sets.len()))
    }

    /// Runs the shuffle on real payloads and checks every reducer decodes
    /// all of its source results.
    pub fn execute_shuffle(
        &self,
        finishers: &NodeSet,
        demand: DemandModel,
        field: Field,
        value_len: usize,
        seed: u64,
    ) -> Result<ExecutionReport, UnifiedError> {
        let fmask = self.finisher_mask(finishers)?;
        if value_len == 0 {
            return Err(UnifiedError::InvalidArgument("value length must be >= 1".into()));
        }
        let size = self.coded_tasks.saturating_mul(self.spec.functions).saturating_mul(value_len);
        if size > EXECUTION_LIMIT {
            return Err(UnifiedError::TooLarge(format!("{size} symbols exceed {EXECUTION_LIMIT}")));
        }
        let code = self.mds_code(field, seed)?;
        let selected = self.decodable_set(finishers)?;
        let sched = self.schedule(fmask, demand)?;
        let reducers = self.reducers_for(fmask, demand);
        match field {
            Field::Gf256 => {
                let sources = source_values(self.spec.functions, self.spec.tasks, seed, |rng| rng.random::<u8>(), value_len);
                let coded = sources
                    .iter()
                    .map(|src| code.encode_bytes(src))
                    .collect::<Result<Vec<_>, _>>()?;
                let delivery = self.deliver(&sched, &selected, &reducers, &coded);
                let mut report = delivery.report(field, value_len);
                for (k, fs) in reducers.iter().enumerate() {
                    for &f in fs {
                        let avail = delivery.available(k, f, &selected, &coded, self)?;
                        let decoded = code.decode_bytes(&avail).map_err(|e| UnifiedError::DecodeFailed {
                            node: k + 1,
                            function: f,
                            reason: e.to_string(),
                        })?;
                        report.decoded_values += decoded.len();
                        report.mismatches += decoded.iter().zip(&sources[f]).filter(|(d, s)| d != s).count();
                    }
                }
                Ok(report)
            }
            Field::Real => {
                let sources =
                    source_values(self.spec.functions, self.spec.tasks, seed, |rng| rng.random_range(-1.0..1.0), value_len);
                let coded = sources
                    .iter()
                    .map(|src| code.encode_real(src))
                    .collect::<Result<Vec<_>, _>>()?;
                let delivery = self.deliver(&sched, &selected, &reducers, &coded);
                let mut report = delivery.report(field, value_len);
                for (k, fs) in reducers.iter().enumerate() {
                    for &f in fs {
                        let avail = delivery.available(k, f, &selected, &coded, self)?;
                        let decoded = code.decode_real(&avail).map_err(|e| UnifiedError::DecodeFailed {
                            node: k + 1,
                            function: f,
                            reason: e.to_string(),
                        })?;
                        if let Some(w) = decoded.warning {
                            report.warnings.push(format!("node {} function {f}: {w}", k + 1));
                        }
                        let scale = sources[f].iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                        for (d, s) in decoded.blocks.iter().zip(&sources[f]) {
                            report.decoded_values += 1;
                            let err = d.iter().zip(s).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale;
                            report.max_relative_error = report.max_relative_error.max(err);
                            if err > 1e-8 {
                                report.mismatches += 1;
                            }
                        }
                    }
                }
                Ok(report)
            }
        }
    }

    /// Moves coded results between finishers following `sched`. Every node
    /// reads only results it computed itself.
    fn deliver<T: Symbol>(
        &self,
        sched: &Schedule,
        selected: &[usize],
        reducers: &[Vec<usize>],
        coded: &[Vec<Vec<T>>],
    ) -> Delivery<T> {
        let k_nodes = self.spec.nodes;
        let fmask = sched.finishers;
        let known_of = |t: usize| self.host_masks[t % self.host_masks.len()] & fmask;
        let mut by_known: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for &t in selected {
            by_known.entry(known_of(t)).or_default().push(t);
        }
        // What each node holds locally.
        let local = |node: usize, f: usize, t: usize| -> &Vec<T> {
            assert!(known_of(t) >> node & 1 == 1, "node {} does not hold task {t}", node + 1);
            &coded[f][t]
        };
        let demand_of = |node: usize, a: u64, reader: usize| -> Vec<T> {
            let mut out = Vec::new();
            for &f in &reducers[node] {
                for &t in by_known.get(&a).map_or(&[][..], Vec::as_slice) {
                    out.extend_from_slice(local(reader, f, t));
                }
            }
            out
        };
        let mut received: Vec<HashMap<(usize, usize), Vec<T>>> = vec![HashMap::new(); k_nodes];
        let mut delivery = Delivery { finishers: fmask, received: Vec::new(), elements_sent: 0, multicasts: 0, unicasts: 0 };
        let store = |node: usize, a: u64, flat: Vec<T>, received: &mut Vec<HashMap<(usize, usize), Vec<T>>>| {
            let tasks = by_known.get(&a).map_or(&[][..], Vec::as_slice);
            let len = if tasks.is_empty() || reducers[node].is_empty() { 0 } else { flat.len() / (tasks.len() * reducers[node].len()) };
            let mut chunks = flat.chunks(len.max(1));
            for &f in &reducers[node] {
                for &t in tasks {
                    received[node].insert((f, t), chunks.next().expect("demand length").to_vec());
                }
            }
        };

        let coded_set: BTreeSet<u64> = sched.coded.iter().map(|g| g.mask).collect();
        for s in sched.coded.iter().map(|g| g.mask) {
            let group: Vec<usize> = members(s).collect();
            let a = group.len() - 1;
            let segment = |flat: &[T], pos: usize| -> Vec<T> {
                let seg = flat.len().div_ceil(a);
                flat[(pos * seg).min(flat.len())..((pos + 1) * seg).min(flat.len())].to_vec()
            };
            let position = |k: usize, j: usize| group.iter().filter(|&&x| x != k).position(|&x| x == j).expect("member");
            // Sender j's multicast: segment j of every other member's demand.
            let mut messages: HashMap<usize, Vec<T>> = HashMap::new();
            for &j in &group {
                let mut msg: Vec<T> = Vec::new();
                for &k in group.iter().filter(|&&k| k != j) {
                    let seg = segment(&demand_of(k, s & !(1 << k), j), position(k, j));
                    if msg.len() < seg.len() {
                        msg.resize(seg.len(), T::default());
                    }
                    for (m, x) in msg.iter_mut().zip(&seg) {
                        *m = m.plus(*x);
                    }
                }
                if !msg.is_empty() {
                    delivery.multicasts += 1;
                    delivery.elements_sent += msg.len() as u64;
                }
                messages.insert(j, msg);
            }
            for &k in &group {
                let a_k = s & !(1 << k);
                let want = demand_of(k, a_k, group.iter().copied().find(|&x| x != k).expect("group of 2+"));
                if want.is_empty() {
                    continue;
                }
                let mut flat = Vec::with_capacity(want.len());
                for &j in group.iter().filter(|&&j| j != k) {
                    let mut buf = messages[&j].clone();
                    for &other in group.iter().filter(|&&x| x != k && x != j) {
                        // `k` computed everything `other` is missing.
                        let side = segment(&demand_of(other, s & !(1 << other), k), position(other, j));
                        for (m, x) in buf.iter_mut().zip(&side) {
                            *m = m.minus(*x);
                        }
                    }
                    let own = segment(&want, position(k, j)).len();
                    buf.truncate(own);
                    flat.extend(buf);
                }
                store(k, a_k, flat, &mut received);
            }
        }
        for (&a, _) in &by_known {
            let sender = members(a).next().expect("known by a finisher");
            for k in 0..k_nodes {
                if reducers[k].is_empty() || a >> k & 1 == 1 {
                    continue;
                }
                if fmask >> k & 1 == 1 && coded_set.contains(&(a | 1 << k)) {
                    continue;
                }
                let flat = demand_of(k, a, sender);
                delivery.unicasts += (reducers[k].len() * by_known[&a].len()) as u64;
                delivery.elements_sent += flat.len() as u64;
                store(k, a, flat, &mut received);
            }
        }
        delivery.received = received;
        delivery
    }
}

/// Hasher for node bitmasks.
#[derive(Default)]
struct MaskHasher(u64);

impl Hasher for MaskHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = mix64(self.0 ^ b as u64);
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = mix64(self.0 ^ x);
    }
}

type MaskMap<V> = HashMap<u64, V, BuildHasherDefault<MaskHasher>>;

/// Tasks selected per known set, reduce-function counts, and the groups
/// served by coded multicast.
struct Schedule {
    finishers: u64,
    known: MaskMap<u64>,
    functions: Vec<u64>,
    coded: Vec<CodedGroup>,
}

struct CodedGroup {
    mask: u64,
    /// Sum over senders of the longest segment they carry, in units of
    /// `1 / receivers_minus_one` values.
    longest_sum: u64,
    receivers_minus_one: u64,
    senders: u64,
}

impl Schedule {
    /// Values node `k` (0-based) needs that exactly the nodes of `a` hold.
    fn demand(&self, k: usize, a: u64) -> u64 {
        self.functions[k] * self.known.get(&a).copied().unwrap_or(0)
    }

    /// Cost of serving every demand inside group `s` by coded multicast.
    /// Sender `j` carries the longest segment among the other members.
    fn multicast_cost(&self, s: u64) -> CodedGroup {
        let (mut top, mut top_at, mut second) = (0u64, usize::MAX, 0u64);
        for j in members(s) {
            let u = self.demand(j, s & !(1 << j));
            if u > top {
                second = top;
                top = u;
                top_at = j;
            } else if u > second {
                second = u;
            }
        }
        let (mut longest_sum, mut senders) = (0, 0);
        for j in members(s) {
            let longest = if j == top_at { second } else { top };
            if longest > 0 {
                senders += 1;
                longest_sum += longest;
            }
        }
        CodedGroup { mask: s, longest_sum, receivers_minus_one: (s.count_ones() - 1) as u64, senders }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShuffleLoad {
    /// Bits sent divided by bits per value.
    pub value_units: Rational,
    /// `value_units / (Q·m)`.
    pub normalized_load: Rational,
    pub multicasts: u64,
    pub coded_groups: u64,
    pub unicast_units: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionReport {
    pub field: Field,
    pub decoded_values: usize,
    pub mismatches: usize,
    pub max_relative_error: f64,
    /// Symbols on the wire divided by the value length.
    pub value_units_sent: Rational,
    pub multicasts: u64,
    pub unicasts: u64,
    pub warnings: Vec<String>,
}

impl ExecutionReport {
    pub fn ok(&self) -> bool {
        self.mismatches == 0
    }
}

trait Symbol: Copy + Default + Send + Sync {
    fn plus(self, other: Self) -> Self;
    fn minus(self, other: Self) -> Self;
}

impl Symbol for u8 {
    fn plus(self, other: Self) -> Self {
        self ^ other
    }
    fn minus(self, other: Self) -> Self {
        self ^ other
    }
}

impl Symbol for f64 {
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn minus(self, other: Self) -> Self {
        self - other
    }
}

struct Delivery<T> {
    finishers: u64,
    received: Vec<HashMap<(usize, usize), Vec<T>>>,
    elements_sent: u64,
    multicasts: u64,
    unicasts: u64,
}

impl<T: Symbol> Delivery<T> {
    fn report(&self, field: Field, value_len: usize) -> ExecutionReport {
        ExecutionReport {
            field,
            decoded_values: 0,
            mismatches: 0,
            max_relative_error: 0.0,
            value_units_sent: ratio(self.elements_sent as i128, value_len as i128),
            multicasts: self.multicasts,
            unicasts: self.unicasts,
            warnings: Vec::new(),
        }
    }

    /// Results reducer `k` has for function `f`: its own plus delivered ones.
    fn available(
        &self,
        k: usize,
        f: usize,
        selected: &[usize],
        coded: &[Vec<Vec<T>>],
        plan: &UnifiedPlan,
    ) -> Result<BTreeMap<usize, Vec<T>>, UnifiedError> {
        let mut out = BTreeMap::new();
        for &t in selected {
            let value = if plan.hosts(t).contains(k + 1) && self.finishers >> k & 1 == 1 {
                coded[f][t].clone()
            } else {
                self.received[k].get(&(f, t)).cloned().ok_or_else(|| UnifiedError::DecodeFailed {
                    node: k + 1,
                    function: f,
                    reason: format!("result of coded task {t} never arrived"),
                })?
            };
            out.insert(t, value);
        }
        Ok(out)
    }
}

fn source_values<T, F>(functions: usize, tasks: usize, seed: u64, mut draw: F, len: usize) -> Vec<Vec<Vec<T>>>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> T,
{
    (0..functions)
        .map(|f| {
            (0..tasks)
                .map(|j| {
                    let mut rng = stream_rng(seed, 0x5352_4300 ^ f as u64, j as u64);
                    (0..len).map(|_| draw(&mut rng)).collect()
                })
                .collect()
        })
        .collect()
}

/// Finisher sets a sweep point averages over: all of them when there are at
/// most [`FINISHER_EXHAUSTIVE_LIMIT`], else [`FINISHER_SAMPLES`] seeded draws.
fn finisher_sets(nodes: usize, q: usize, seed: u64) -> Vec<u64> {
    if binomial(nodes, q) <= FINISHER_EXHAUSTIVE_LIMIT {
        return enumerate_subsets(nodes, q).expect("q <= K").iter().map(mask_of).collect();
    }
    (0..FINISHER_SAMPLES)
        .map(|i| {
            let mut rng = stream_rng(seed, 0x4649_4E00 ^ q as u64, i as u64);
            rand::seq::index::sample(&mut rng, nodes, q).iter().fold(0u64, |acc, n| acc | 1 << n)
        })
        .collect()
}

/// Expected time until `q` of `nodes` finish, each running `work` units.
pub fn map_latency_analytic(nodes: usize, q: usize, work: f64, model: &ShiftedExponential) -> Result<f64, UnifiedError> {
    if work <= 0.0 {
        return Err(UnifiedError::InvalidArgument("work must be > 0".into()));
    }
    Ok(work * model.shift + exp_order_stat_mean(nodes, q, model.rate / work)?)
}

/// Map-phase latency of `spec` with the analytic mean and a Monte Carlo
/// estimate over `trials` runs. `job_work` is the time units the whole job
/// takes on one node; each node runs the fraction `μ` of it.
pub fn map_phase_latency(
    spec: &UnifiedSpec,
    model: &ShiftedExponential,
    job_work: f64,
    trials: u64,
    seed: u64,
) -> Result<LatencyEstimate, UnifiedError> {
    spec.validate()?;
    if trials == 0 {
        return Err(UnifiedError::InvalidArgument("trials must be >= 1".into()));
    }
    let work = rational_to_f64(&spec.mu) * job_work;
    let analytic_mean = map_latency_analytic(spec.nodes, spec.q, work, model)?;
    let (k, q) = (spec.nodes, spec.q);
    let (mc_mean, mc_stderr) = monte_carlo(trials, seed, 0x4D41_5000 ^ q as u64, |rng| {
        let mut d: Vec<f64> = (0..k).map(|_| model.sample(work, rng)).collect();
        kth_smallest(&mut d, q)
    });
    Ok(LatencyEstimate { analytic_mean, mc_mean, mc_stderr, trials })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub nodes: usize,
    pub mu: Rational,
    pub tasks: usize,
    pub functions: usize,
    pub model: ShiftedExponential,
    pub network_bps: f64,
    pub bits_per_value: f64,
    /// Time units of the whole job on a single node.
    pub job_work: f64,
    pub demand: DemandModel,
    /// Monte Carlo trials per point; 0 skips the cross-check.
    pub trials: u64,
    pub seed: u64,
}

impl SweepConfig {
    /// `rows` matrix rows of `entry_bits`-bit entries split over `m` tasks.
    pub fn bits_per_value_for(rows: f64, entry_bits: f64, tasks: usize) -> f64 {
        rows * entry_bits / tasks as f64
    }

    pub fn spec(&self, q: usize) -> UnifiedSpec {
        UnifiedSpec::new(self.nodes, self.mu, self.tasks, q).with_functions(self.functions)
    }

    /// Bits of all `Q·m` intermediate values.
    pub fn total_value_bits(&self) -> f64 {
        (self.functions * self.tasks) as f64 * self.bits_per_value
    }
}

impl Default for SweepConfig {
    /// 18 nodes, μ = 1/3, `Q = 18`, s = λ = 1, 10 Mbps, 10⁶ rows of 16-bit entries.
    fn default() -> Self {
        let (nodes, mu) = (18, ratio(1, 3));
        let tasks = default_tasks(nodes, mu).expect("default m exists");
        Self {
            nodes,
            mu,
            tasks,
            functions: nodes,
            model: ShiftedExponential { shift: 1.0, rate: 1.0 },
            network_bps: DEFAULT_NETWORK_BPS,
            bits_per_value: SweepConfig::bits_per_value_for(DEFAULT_ROWS, DEFAULT_ENTRY_BITS, tasks),
            job_work: nodes as f64,
            demand: DemandModel::FinishersReduce,
            trials: 0,
            seed: crate::numeric::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub q: usize,
    pub coded_tasks: usize,
    pub map_latency: f64,
    pub map_latency_mc: Option<LatencyEstimate>,
    pub normalized_load: Rational,
    pub shuffle_time: f64,
    pub total_time: f64,
    pub finisher_sets: usize,
}

pub fn evaluate_point(cfg: &SweepConfig, q: usize) -> Result<TradeoffPoint, UnifiedError> {
    let spec = cfg.spec(q);
    let plan = UnifiedPlan::build(&spec)?;
    let work = rational_to_f64(&cfg.mu) * cfg.job_work;
    let map_latency = map_latency_analytic(cfg.nodes, q, work, &cfg.model)?;
    let map_latency_mc = if cfg.trials > 0 {
        Some(map_phase_latency(&spec, &cfg.model, cfg.job_work, cfg.trials, cfg.seed)?)
    } else {
        None
    };
    let (normalized_load, finisher_sets) = plan.average_load(cfg.demand, cfg.seed)?;
    let shuffle_time = rational_to_f64(&normalized_load) * cfg.total_value_bits() / cfg.network_bps;
    Ok(TradeoffPoint {
        q,
        coded_tasks: plan.coded_tasks,
        map_latency,
        map_latency_mc,
        normalized_load,
        shuffle_time,
        total_time: map_latency + shuffle_time,
        finisher_sets,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tradeoff {
    pub config: SweepConfig,
    pub points: Vec<TradeoffPoint>,
    /// Minimizes total time; ties go to the smaller q.
    pub optimal_q: usize,
}

pub fn tradeoff_sweep(cfg: &SweepConfig) -> Result<Tradeoff, UnifiedError> {
    if !(cfg.network_bps > 0.0) || !(cfg.bits_per_value >= 0.0) || !(cfg.job_work > 0.0) {
        return Err(UnifiedError::InvalidArgument("network rate, value bits and job work must be positive".into()));
    }
    let qs = feasible_q(cfg.nodes, cfg.mu, cfg.tasks, cfg.functions);
    if qs.is_empty() {
        return Err(UnifiedError::EmptySweep { nodes: cfg.nodes, mu: fmt_fraction(&cfg.mu), tasks: cfg.tasks });
    }
    let points: Vec<TradeoffPoint> = qs.par_iter().map(|&q| evaluate_point(cfg, q)).collect::<Result<_, _>>()?;
    let optimal_q = points
        .iter()
        .fold(None::<&TradeoffPoint>, |best, p| match best {
            Some(b) if b.total_time <= p.total_time => Some(b),
            _ => Some(p),
        })
        .map(|p| p.q)
        .expect("non-empty sweep");
    Ok(Tradeoff { config: cfg.clone(), points, optimal_q })
}

pub const TRADEOFF_CSV_HEADER: &str =
    "q,map_latency_s,normalized_load,shuffle_time_s,total_time_s,is_optimal,normalized_load_exact";

impl Tradeoff {
    pub fn point(&self, q: usize) -> Option<&TradeoffPoint> {
        self.points.iter().find(|p| p.q == q)
    }

    pub fn optimal(&self) -> &TradeoffPoint {
        self.point(self.optimal_q).expect("optimal point present")
    }

    pub fn first(&self) -> &TradeoffPoint {
        self.points.first().expect("non-empty sweep")
    }

    pub fn last(&self) -> &TradeoffPoint {
        self.points.last().expect("non-empty sweep")
    }

    /// Percentage by which the optimum beats point `q` in total time.
    pub fn gain_over(&self, q: usize) -> Option<f64> {
        let p = self.point(q)?;
        Some(100.0 * (p.total_time - self.optimal().total_time) / p.total_time)
    }

    /// `scale` multiplies the normalized load column (1 for per-value
    /// normalization, `Q` for per-row).
    pub fn csv_rows(&self, scale: usize) -> Vec<String> {
        self.points
            .iter()
            .map(|p| {
                let load = p.normalized_load * Rational::from_integer(scale as i128);
                format!(
                    "{},{},{},{},{},{},{}",
                    p.q,
                    fmt_sig(p.map_latency),
                    fmt_sig(rational_to_f64(&load)),
                    fmt_sig(p.shuffle_time),
                    fmt_sig(p.total_time),
                    p.q == self.optimal_q,
                    fmt_fraction(&load)
                )
            })
            .collect()
    }

    pub fn summary_json(&self) -> Value {
        let (lo, hi) = (self.first().q, self.last().q);
        let points: Vec<Value> = self
            .points
            .iter()
            .map(|p| {
                let mut v = json!({
                    "q": p.q,
                    "coded_tasks": p.coded_tasks,
                    "map_latency_s": p.map_latency,
                    "normalized_load": fmt_fraction(&p.normalized_load),
                    "normalized_load_decimal": rational_to_f64(&p.normalized_load),
                    "shuffle_time_s": p.shuffle_time,
                    "total_time_s": p.total_time,
                    "finisher_sets": p.finisher_sets,
                });
                if let Some(mc) = &p.map_latency_mc {
                    v["map_latency_mc_s"] = json!(mc.mc_mean);
                    v["map_latency_mc_stderr"] = json!(mc.mc_stderr);
                }
                v
            })
            .collect();
        json!({
            "q_star": self.optimal_q,
            "total_time_star_s": self.optimal().total_time,
            "gain_over_min_q_pct": self.gain_over(lo),
            "gain_over_max_q_pct": self.gain_over(hi),
            "min_q": lo,
            "max_q": hi,
            "points": points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shuffle::load_formula;

    fn spec(k: usize, mu: (i128, i128), m: usize, q: usize) -> UnifiedSpec {
        UnifiedSpec::new(k, ratio(mu.0, mu.1), m, q)
    }

    #[test]
    fn worked_example_plan() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 4)).unwrap();
        assert_eq!(plan.coded_tasks, 30);
        assert_eq!(plan.host_sets.len(), 15);
        assert_eq!(plan.tasks_per_host_set, 2);
        for node in 1..=6 {
            assert_eq!(plan.tasks_on_count(node), 10);
            assert_eq!(plan.tasks_on(node).len(), 10);
        }
        assert!(plan.coverage_exhaustive);
        assert_eq!(plan.coverage_min, 28);
        let code = plan.mds_code(Field::Gf256, 1).unwrap();
        assert_eq!((code.n, code.k), (30, 20));
    }

    #[test]
    fn q_equal_k_is_identity_code() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 6)).unwrap();
        assert_eq!(plan.coded_tasks, 20);
        assert_eq!(plan.mds_code(Field::Real, 0).unwrap(), MdsCode::identity(20, Field::Real));
        assert_eq!(plan.host_sets, enumerate_subsets(6, 3).unwrap());
    }

    #[test]
    fn infeasible_specs_name_the_constraint() {
        let err = |s: UnifiedSpec| match s.validate() {
            Err(UnifiedError::Infeasible { constraint }) => constraint,
            other => panic!("expected infeasible, got {other:?}"),
        };
        assert!(err(spec(6, (1, 2), 20, 5)).contains("mu*q"));
        assert!(err(spec(6, (1, 2), 7, 4)).contains("(K/q)*m"));
        assert!(err(spec(6, (1, 2), 2, 4)).contains("C(6,2)"));
        assert!(matches!(spec(6, (1, 2), 20, 1).validate(), Err(UnifiedError::InvalidArgument(_))));
        assert!(matches!(spec(6, (1, 12), 20, 6).validate(), Err(UnifiedError::InvalidArgument(_))));
    }

    #[test]
    fn default_tasks_for_eighteen_nodes() {
        let m = default_tasks(18, ratio(1, 3)).unwrap();
        assert_eq!(m, 185_640);
        assert_eq!(feasible_q(18, ratio(1, 3), m, 18), vec![3, 6, 9, 12, 15, 18]);
        assert_eq!(default_tasks(6, ratio(1, 2)), Some(20));
    }

    #[test]
    fn endpoint_load_matches_formula() {
        for (k, mu, m) in [(6, (1, 2), 20), (4, (1, 2), 6), (5, (2, 5), 10), (6, (1, 3), 15)] {
            let s = spec(k, mu, m, k);
            let plan = UnifiedPlan::build(&s).unwrap();
            let r = s.hosts_per_task();
            let (_, coded) = load_formula(k, r).unwrap();
            let all = NodeSet::new(1..=k);
            for demand in [DemandModel::FinishersReduce, DemandModel::PeerReduce] {
                assert_eq!(plan.shuffle_load(&all, demand).unwrap().normalized_load, coded, "K={k} r={r}");
            }
        }
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 6)).unwrap();
        assert_eq!(plan.average_load(DemandModel::FinishersReduce, 0).unwrap().0, ratio(1, 6));
    }

    #[test]
    fn client_collects_has_no_peer_load() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 2)).unwrap();
        let load = plan.shuffle_load(&NodeSet::new([2, 5]), DemandModel::ClientCollects).unwrap();
        assert!(load.value_units.is_zero());
    }

    #[test]
    fn decodable_set_prefers_available_twice() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 4)).unwrap();
        let f = NodeSet::new([1, 2, 3, 4]);
        let d = plan.decodable_set(&f).unwrap();
        assert_eq!(d.len(), 20);
        // Six pairs inside F give 12 tasks held twice; the rest come from
        // the eight pairs with one finisher, in task-id order.
        let twice = d.iter().filter(|&&t| plan.hosts(t).iter().filter(|n| f.contains(*n)).count() == 2).count();
        assert_eq!(twice, 12);
        assert!(d.iter().all(|&t| plan.hosts(t).iter().any(|n| f.contains(n))));
    }

    #[test]
    fn wrong_finisher_count_rejected() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 4)).unwrap();
        assert!(plan.shuffle_load(&NodeSet::new([1, 2]), DemandModel::FinishersReduce).is_err());
        assert!(plan.shuffle_load(&NodeSet::new([1, 2, 3, 9]), DemandModel::FinishersReduce).is_err());
    }

    #[test]
    fn payload_execution_decodes_everywhere() {
        let plan = UnifiedPlan::build(&spec(6, (1, 2), 20, 4)).unwrap();
        for f in enumerate_subsets(6, 4).unwrap() {
            for demand in [DemandModel::FinishersReduce, DemandModel::PeerReduce] {
                let load = plan.shuffle_load(&f, demand).unwrap();
                for field in [Field::Gf256, Field::Real] {
                    let rep = plan.execute_shuffle(&f, demand, field, 4, 11).unwrap();
                    assert!(rep.ok(), "{f} {demand} {field:?}: {rep:?}");
                    assert!(rep.max_relative_error <= 1e-8);
                    assert_eq!(rep.decoded_values, 20 * 6);
                    assert_eq!(rep.value_units_sent, load.value_units, "{f} {demand}");
                }
            }
        }
    }

    #[test]
    fn payload_execution_at_the_bandwidth_endpoint() {
        let plan = UnifiedPlan::build(&spec(4, (1, 2), 6, 4)).unwrap();
        let rep = plan.execute_shuffle(&NodeSet::new(1..=4), DemandModel::PeerReduce, Field::Gf256, 2, 3).unwrap();
        assert!(rep.ok());
        // (1/2)(1 − 2/4) of Q·m = 24 values.
        assert_eq!(rep.value_units_sent, ratio(6, 1));
    }

    #[test]
    fn map_latency_grows_with_q() {
        let model = ShiftedExponential::new(1.0, 1.0).unwrap();
        let mut prev = 0.0;
        for q in 1..=18 {
            let t = map_latency_analytic(18, q, 6.0, &model).unwrap();
            assert!(t > prev);
            prev = t;
        }
        let all = map_latency_analytic(5, 5, 1.0, &model).unwrap();
        assert!((all - (1.0 + crate::straggler::harmonic(5))).abs() < 1e-12);
    }

    #[test]
    fn map_latency_mc_agrees() {
        let model = ShiftedExponential::new(1.0, 1.0).unwrap();
        let est = map_phase_latency(&spec(6, (1, 2), 20, 4), &model, 1.0, 20_000, 5).unwrap();
        assert!(est.within(4.0), "{est:?}");
    }

    #[test]
    fn small_sweep() {
        let cfg = SweepConfig {
            nodes: 6,
            mu: ratio(1, 2),
            tasks: 20,
            functions: 6,
            model: ShiftedExponential::new(1.0, 1.0).unwrap(),
            network_bps: 1e6,
            bits_per_value: 1e4,
            job_work: 6.0,
            demand: DemandModel::FinishersReduce,
            trials: 0,
            seed: 1,
        };
        let t = tradeoff_sweep(&cfg).unwrap();
        assert_eq!(t.points.iter().map(|p| p.q).collect::<Vec<_>>(), vec![2, 4, 6]);
        assert_eq!(t.point(4).unwrap().coded_tasks, 30);
        assert_eq!(t.last().normalized_load, ratio(1, 6));
        for w in t.points.windows(2) {
            assert!(w[0].map_latency < w[1].map_latency);
            assert!(w[0].normalized_load >= w[1].normalized_load);
        }
        for p in &t.points {
            assert_eq!(p.total_time, p.map_latency + p.shuffle_time);
        }
        assert_eq!(t.csv_rows(1).len(), 3);
        assert_eq!(t.summary_json()["q_star"], json!(t.optimal_q));
    }

    #[test]
    fn empty_sweep_is_an_error() {
        let mut cfg = SweepConfig::default();
        cfg.tasks = 7;
        assert!(matches!(tradeoff_sweep(&cfg), Err(UnifiedError::EmptySweep { .. })));
    }

    #[test]
    fn demand_model_names_round_trip() {
        for d in [DemandModel::FinishersReduce, DemandModel::PeerReduce, DemandModel::ClientCollects] {
            assert_eq!(d.name().parse::<DemandModel>().unwrap(), d);
        }
        assert!("nobody".parse::<DemandModel>().is_err());
    }
}
