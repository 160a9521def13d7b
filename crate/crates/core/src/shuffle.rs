//! Coded-multicast data shuffle over a repetitive placement.
//!
//! For every (r+1)-subset `S` of nodes and every `j` in `S`, node `j` sends one
//! packet to `S \ {j}`: the XOR over `k` in `S \ {j}` of segment `j` of
//! `V(k, S \ {k})`. `V(k, B)` is everything node `k` needs from batch `B`
//! (its reduce functions, then the batch files, in order), split into `r`
//! equal bit segments indexed by the sorted members of `B`. Every receiver
//! knows all terms but its own, so one packet serves `r` nodes at once.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bits::BitBuf;
use crate::numeric::{binomial, ratio, Rational};
use crate::placement::{enumerate_subsets, JobSpec, NodeId, NodeSet, PlacementError, PlacementPlan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShuffleError {
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("shuffle infeasible: {0}")]
    Infeasible(String),
    #[error("node {node} cannot decode {} demanded values, first {:?}", missing.len(), missing.first())]
    DecodeIncomplete {
        node: NodeId,
        /// (function, file) pairs that could not be recovered.
        missing: Vec<(usize, usize)>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntermediateValue {
    pub function: usize,
    pub file: usize,
    pub payload: Vec<u8>,
}

/// Synthetic Map output: `T/8` bytes of ChaCha8 keystream keyed by
/// `(seed, function, file)`. Stable across platforms.
pub fn map_value(function: usize, file: usize, seed: u64, value_bits: usize) -> IntermediateValue {
    debug_assert!(value_bits % 8 == 0);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(function as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(file as u64).to_le_bytes());
    key[24..].copy_from_slice(b"mapvalue");
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut payload = vec![0u8; value_bits / 8];
    rng.fill_bytes(&mut payload);
    IntermediateValue { function, file, payload }
}

/// One XOR term of a coded packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentRef {
    pub target: NodeId,
    pub batch: NodeSet,
    pub segment: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticastMessage {
    pub sender: NodeId,
    pub recipients: Vec<NodeId>,
    pub subset: NodeSet,
    /// Packed MSB-first; `payload_bits` may not be a multiple of 8.
    pub payload: Vec<u8>,
    pub payload_bits: usize,
    pub descriptors: Vec<SegmentRef>,
}

impl MulticastMessage {
    pub fn to_json(&self) -> Value {
        json!({
            "sender": self.sender,
            "recipients": self.recipients,
            "subset": self.subset.members(),
            "payload_bits": self.payload_bits,
            "payload": hex::encode(&self.payload),
            "descriptors": self.descriptors.iter().map(|d| json!({
                "target": d.target,
                "batch": d.batch.members(),
                "segment": d.segment,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Writes one JSON object per message, newline separated.
pub fn trace_jsonl(messages: &[MulticastMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.to_json().to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unicast {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub value: IntermediateValue,
}

/// How a packet addressed to several receivers is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CostModel {
    /// Shared medium: one packet costs its size once.
    #[default]
    Multicast,
    /// Charged once per recipient.
    PerRecipient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoadReport {
    pub total_bits: u64,
    pub message_count: u64,
    /// total_bits / (Q·N·T)
    pub normalized_load: Rational,
    pub value_bits: usize,
}

impl LoadReport {
    fn new(total_bits: u64, message_count: u64, spec: &JobSpec) -> Self {
        let denom = (spec.functions * spec.files * spec.value_bits) as i128;
        Self {
            total_bits,
            message_count,
            normalized_load: ratio(total_bits as i128, denom),
            value_bits: spec.value_bits,
        }
    }

    pub fn for_messages(messages: &[MulticastMessage], spec: &JobSpec, model: CostModel) -> Self {
        let bits = messages
            .iter()
            .map(|m| match model {
                CostModel::Multicast => m.payload_bits as u64,
                CostModel::PerRecipient => (m.payload_bits * m.recipients.len()) as u64,
            })
            .sum();
        Self::new(bits, messages.len() as u64, spec)
    }

    /// Load in units of whole intermediate values.
    pub fn value_units(&self) -> Rational {
        ratio(self.total_bits as i128, self.value_bits as i128)
    }
}

/// Bits of `V(target, batch)`: the target's reduce functions over the batch files.
fn demand_stream<F>(plan: &PlacementPlan, target: NodeId, batch: &NodeSet, mut value: F) -> BitBuf
where
    F: FnMut(usize, usize) -> Vec<u8>,
{
    let files = &plan
        .batch_for(batch)
        .expect("demand stream requested for an unknown batch")
        .files;
    let mut out = BitBuf::new();
    for &q in plan.functions_of(target) {
        for &n in files {
            out.push_bytes(&value(q, n));
        }
    }
    out
}

fn segment_bits(plan: &PlacementPlan, spec: &JobSpec) -> Result<usize, ShuffleError> {
    let stream = spec.functions_per_node() * plan.files_per_batch * spec.value_bits;
    if stream % spec.load != 0 {
        return Err(ShuffleError::Infeasible(format!(
            "(Q/K)·η·T = {stream} bits is not divisible by r = {}",
            spec.load
        )));
    }
    Ok(stream / spec.load)
}

fn check_plan(plan: &PlacementPlan, spec: &JobSpec) -> Result<(), ShuffleError> {
    spec.validate()?;
    if plan.nodes != spec.nodes
        || plan.files != spec.files
        || plan.functions != spec.functions
        || plan.load != spec.load
    {
        return Err(ShuffleError::InvalidArgument("plan does not match job spec".into()));
    }
    Ok(())
}

/// Builds the coded multicast packets, sorted by subset then sender.
pub fn coded_shuffle(
    plan: &PlacementPlan,
    spec: &JobSpec,
    seed: u64,
) -> Result<(Vec<MulticastMessage>, LoadReport), ShuffleError> {
    check_plan(plan, spec)?;
    let r = spec.load;
    if r == spec.nodes {
        return Ok((Vec::new(), LoadReport::new(0, 0, spec)));
    }
    let seg = segment_bits(plan, spec)?;
    let groups = enumerate_subsets(spec.nodes, r + 1)?;
    let messages: Vec<MulticastMessage> = groups
        .par_iter()
        .flat_map_iter(|subset| {
            let streams: Vec<(NodeId, NodeSet, BitBuf)> = subset
                .iter()
                .map(|k| {
                    let batch = subset.without(k);
                    let stream = demand_stream(plan, k, &batch, |q, n| {
                        map_value(q, n, seed, spec.value_bits).payload
                    });
                    (k, batch, stream)
                })
                .collect();
            subset
                .iter()
                .map(|sender| {
                    let mut payload = BitBuf::zeros(seg);
                    let mut descriptors = Vec::with_capacity(r);
                    for (k, batch, stream) in streams.iter().filter(|(k, _, _)| *k != sender) {
                        let idx = batch.position(sender).expect("sender belongs to every batch it serves");
                        payload.xor_assign(&stream.slice(idx * seg, seg));
                        descriptors.push(SegmentRef { target: *k, batch: batch.clone(), segment: idx });
                    }
                    MulticastMessage {
                        sender,
                        recipients: subset.without(sender).members().to_vec(),
                        subset: subset.clone(),
                        payload: payload.into_bytes(),
                        payload_bits: seg,
                        descriptors,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let report = LoadReport::for_messages(&messages, spec, CostModel::Multicast);
    Ok((messages, report))
}

/// Recovers every value node `node` must reduce, using only the files it
/// mapped and the packets addressed to it.
pub fn decode_shuffle(
    node: NodeId,
    messages: &[MulticastMessage],
    plan: &PlacementPlan,
    spec: &JobSpec,
    seed: u64,
) -> Result<Vec<IntermediateValue>, ShuffleError> {
    check_plan(plan, spec)?;
    if node == 0 || node > spec.nodes {
        return Err(ShuffleError::InvalidArgument(format!("node {node} out of range")));
    }
    let bytes = spec.value_bits / 8;
    // Map phase: everything this node can compute itself.
    let mut local: HashMap<(usize, usize), Vec<u8>> = HashMap::new();
    for n in plan.files_on(node) {
        for q in 1..=spec.functions {
            local.insert((q, n), map_value(q, n, seed, spec.value_bits).payload);
        }
    }

    let mut segments: BTreeMap<(NodeSet, usize), BitBuf> = BTreeMap::new();
    for msg in messages.iter().filter(|m| m.recipients.contains(&node)) {
        let Some(own) = msg.descriptors.iter().find(|d| d.target == node) else {
            continue;
        };
        let mut acc = BitBuf::from_packed(msg.payload.clone(), msg.payload_bits);
        for d in msg.descriptors.iter().filter(|d| d.target != node) {
            let stream = demand_stream(plan, d.target, &d.batch, |q, n| {
                local.get(&(q, n)).cloned().expect("interfering term not mapped locally")
            });
            acc.xor_assign(&stream.slice(d.segment * msg.payload_bits, msg.payload_bits));
        }
        segments.insert((own.batch.clone(), own.segment), acc);
    }

    let mut recovered: BTreeMap<(usize, usize), Vec<u8>> = BTreeMap::new();
    let mut missing = Vec::new();
    for &q in plan.functions_of(node) {
        for n in 1..=spec.files {
            if let Some(v) = local.get(&(q, n)) {
                recovered.insert((q, n), v.clone());
            }
        }
    }
    for batch in plan.batches.iter().filter(|b| !b.hosts.contains(node)) {
        let parts: Option<Vec<&BitBuf>> = (0..spec.load)
            .map(|i| segments.get(&(batch.hosts.clone(), i)))
            .collect();
        match parts {
            Some(parts) => {
                let mut stream = BitBuf::new();
                for p in parts {
                    stream.append(p);
                }
                let mut offset = 0;
                for &q in plan.functions_of(node) {
                    for &n in &batch.files {
                        let value = stream.slice(offset, bytes * 8).into_bytes();
                        offset += bytes * 8;
                        recovered.insert((q, n), value);
                    }
                }
            }
            None => {
                for &q in plan.functions_of(node) {
                    missing.extend(batch.files.iter().map(|&n| (q, n)));
                }
            }
        }
    }
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(ShuffleError::DecodeIncomplete { node, missing });
    }
    Ok(recovered
        .into_iter()
        .map(|((function, file), payload)| IntermediateValue { function, file, payload })
        .collect())
}

/// Baseline: every missing value is unicast from its lowest-id holder.
pub fn uncoded_shuffle(
    plan: &PlacementPlan,
    spec: &JobSpec,
    seed: u64,
) -> Result<(Vec<Unicast>, LoadReport), ShuffleError> {
    check_plan(plan, spec)?;
    let mut out = Vec::new();
    for receiver in 1..=spec.nodes {
        for &q in plan.functions_of(receiver) {
            for n in 1..=spec.files {
                let holders = plan.holders(n);
                if holders.contains(receiver) {
                    continue;
                }
                out.push(Unicast {
                    sender: holders.members()[0],
                    receiver,
                    value: map_value(q, n, seed, spec.value_bits),
                });
            }
        }
    }
    let bits = out.len() as u64 * spec.value_bits as u64;
    let report = LoadReport::new(bits, out.len() as u64, spec);
    Ok((out, report))
}

/// `(1 − r/K, (1/r)(1 − r/K))`.
pub fn load_formula(nodes: usize, load: usize) -> Result<(Rational, Rational), ShuffleError> {
    if nodes == 0 || load < 1 || load > nodes {
        return Err(ShuffleError::InvalidArgument(format!(
            "computation load r={load} outside 1..={nodes}"
        )));
    }
    let uncoded = Rational::from_integer(1) - ratio(load as i128, nodes as i128);
    Ok((uncoded, uncoded / Rational::from_integer(load as i128)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WirelessLoad {
    pub coded: Rational,
    pub uncoded: Rational,
    /// None when the coded load is zero (μ = 1).
    pub gain: Option<Rational>,
}

/// Loads for K users each storing a fraction μ of the dataset.
pub fn wireless_load(storage: Rational, users: usize) -> Result<WirelessLoad, ShuffleError> {
    let one = Rational::from_integer(1);
    if users == 0 || storage < ratio(1, users as i128) || storage > one {
        return Err(ShuffleError::InvalidArgument(format!(
            "storage fraction {storage} outside [1/{users}, 1]"
        )));
    }
    let coded = one / storage - one;
    let uncoded = Rational::from_integer(users as i128) * (one - storage);
    let gain = (!coded.is_zero()).then(|| uncoded / coded);
    Ok(WirelessLoad { coded, uncoded, gain })
}

/// Per-stage counts of one coded and one uncoded run at the same `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageAccounting {
    pub spec: JobSpec,
    pub map_evaluations: u64,
    pub encode_xor_terms: u64,
    pub coded: LoadReport,
    pub uncoded: LoadReport,
    pub decoded_values: u64,
    pub reduce_inputs: u64,
    pub formula_coded: Rational,
    pub formula_uncoded: Rational,
    /// Nodes whose decoded values matched the direct Map oracle bit for bit.
    pub nodes_verified: usize,
    pub mismatches: Vec<(NodeId, usize, usize)>,
}

impl StageAccounting {
    pub fn reconstruction_ok(&self) -> bool {
        self.mismatches.is_empty() && self.nodes_verified == self.spec.nodes
    }

    pub fn loads_match_formula(&self) -> bool {
        self.coded.normalized_load == self.formula_coded
            && self.uncoded.normalized_load == self.formula_uncoded
    }
}

/// Runs placement, both shuffles and every node's decode, checking the
/// decoded values against a direct evaluation of the Map function.
pub fn run_pipeline(spec: &JobSpec, seed: u64) -> Result<StageAccounting, ShuffleError> {
    let plan = PlacementPlan::build(spec)?;
    let (messages, coded) = coded_shuffle(&plan, spec, seed)?;
    let (_, uncoded) = uncoded_shuffle(&plan, spec, seed)?;
    let (formula_uncoded, formula_coded) = load_formula(spec.nodes, spec.load)?;

    let per_node: Vec<Result<(NodeId, Vec<IntermediateValue>), ShuffleError>> = (1..=spec.nodes)
        .into_par_iter()
        .map(|node| decode_shuffle(node, &messages, &plan, spec, seed).map(|v| (node, v)))
        .collect();
    let mut decoded_values = 0u64;
    let mut nodes_verified = 0;
    let mut mismatches = Vec::new();
    for entry in per_node {
        let (node, values) = entry?;
        decoded_values += values.len() as u64;
        let expected = plan.functions_of(node).len() * spec.files;
        let mut ok = values.len() == expected;
        for v in &values {
            if map_value(v.function, v.file, seed, spec.value_bits).payload != v.payload {
                mismatches.push((node, v.function, v.file));
                ok = false;
            }
        }
        if ok {
            nodes_verified += 1;
        }
    }
    let map_evaluations = (spec.load * spec.files * spec.functions) as u64;
    let encode_xor_terms = messages.iter().map(|m| m.descriptors.len() as u64).sum();
    Ok(StageAccounting {
        spec: *spec,
        map_evaluations,
        encode_xor_terms,
        coded,
        uncoded,
        decoded_values,
        reduce_inputs: (spec.functions * spec.files) as u64,
        formula_coded,
        formula_uncoded,
        nodes_verified,
        mismatches,
    })
}

/// (r+1)·C(K, r+1)
pub fn expected_message_count(nodes: usize, load: usize) -> u64 {
    if load >= nodes {
        0
    } else {
        (load as u64 + 1) * binomial(nodes, load + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED: u64 = 0xC0DE_DF06;

    #[test]
    fn map_values_are_deterministic() {
        let a = map_value(1, 1, SEED, 64);
        assert_eq!(a, map_value(1, 1, SEED, 64));
        assert_ne!(a.payload, map_value(1, 2, SEED, 64).payload);
        assert_eq!(map_value(3, 4, SEED, 8).payload.len(), 1);
    }

    #[test]
    fn three_node_example_loads() {
        let spec = JobSpec::new(3, 6, 3, 2, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, report) = coded_shuffle(&plan, &spec, SEED).unwrap();
        assert_eq!(messages.len(), 3);
        assert_eq!(report.total_bits, 24);
        assert_eq!(report.normalized_load, ratio(1, 6));
        assert_eq!(report.value_units(), Rational::from_integer(3));

        let (unicasts, report) = uncoded_shuffle(&plan, &spec, SEED).unwrap();
        assert_eq!(unicasts.len(), 6);
        assert_eq!(report.normalized_load, ratio(1, 3));

        let spec1 = JobSpec::new(3, 6, 3, 1, 8);
        let plan1 = PlacementPlan::build(&spec1).unwrap();
        let (unicasts, report) = uncoded_shuffle(&plan1, &spec1, SEED).unwrap();
        assert_eq!(unicasts.len(), 12);
        assert_eq!(report.normalized_load, ratio(2, 3));
    }

    #[test]
    fn node_two_recovers_its_two_missing_values() {
        let spec = JobSpec::new(3, 6, 3, 2, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, _) = coded_shuffle(&plan, &spec, SEED).unwrap();
        // Node 2 stores files 1,2,5,6; it is missing files 3,4 of function 2.
        let received: Vec<_> = messages.iter().filter(|m| m.recipients.contains(&2)).collect();
        assert_eq!(received.len(), 2);
        let values = decode_shuffle(2, &messages, &plan, &spec, SEED).unwrap();
        assert_eq!(values.len(), 6);
        for v in values {
            assert_eq!(v.function, 2);
            assert_eq!(v.payload, map_value(2, v.file, SEED, 8).payload);
        }
    }

    #[test]
    fn full_replication_needs_no_messages() {
        let spec = JobSpec::new(3, 1, 3, 3, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, report) = coded_shuffle(&plan, &spec, SEED).unwrap();
        assert!(messages.is_empty());
        assert!(report.normalized_load.is_zero());
        let values = decode_shuffle(1, &messages, &plan, &spec, SEED).unwrap();
        assert_eq!(values.len(), 1);
    }

    #[test]
    fn ten_nodes_sub_byte_segments() {
        let spec = JobSpec::new(10, 45, 10, 2, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, report) = coded_shuffle(&plan, &spec, SEED).unwrap();
        assert!(messages.iter().all(|m| m.payload_bits == 4));
        assert_eq!(report.message_count, expected_message_count(10, 2));
        assert_eq!(report.normalized_load, ratio(2, 5));
        let values = decode_shuffle(7, &messages, &plan, &spec, SEED).unwrap();
        assert!(values.iter().all(|v| v.payload == map_value(v.function, v.file, SEED, 8).payload));
    }

    #[test]
    fn missing_message_is_reported() {
        let spec = JobSpec::new(4, 6, 4, 2, 16);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (mut messages, _) = coded_shuffle(&plan, &spec, SEED).unwrap();
        let drop = messages.iter().position(|m| m.recipients.contains(&1)).unwrap();
        messages.remove(drop);
        match decode_shuffle(1, &messages, &plan, &spec, SEED) {
            Err(ShuffleError::DecodeIncomplete { node: 1, missing }) => assert!(!missing.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indivisible_segments_are_rejected() {
        // (Q/K)·η·T = 1·1·8 is not divisible by r = 3.
        let spec = JobSpec::new(5, 10, 5, 3, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        assert!(matches!(coded_shuffle(&plan, &spec, SEED), Err(ShuffleError::Infeasible(_))));
    }

    #[test]
    fn per_recipient_accounting_scales_by_r() {
        let spec = JobSpec::new(4, 6, 4, 2, 16);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, shared) = coded_shuffle(&plan, &spec, SEED).unwrap();
        let each = LoadReport::for_messages(&messages, &spec, CostModel::PerRecipient);
        assert_eq!(each.total_bits, 2 * shared.total_bits);
    }

    #[test]
    fn formula_values() {
        assert_eq!(load_formula(10, 2).unwrap(), (ratio(4, 5), ratio(2, 5)));
        assert_eq!(load_formula(10, 5).unwrap(), (ratio(1, 2), ratio(1, 10)));
        assert_eq!(load_formula(7, 7).unwrap(), (Rational::zero(), Rational::zero()));
        assert!(load_formula(4, 0).is_err());
        assert!(load_formula(4, 5).is_err());
    }

    #[test]
    fn wireless_values() {
        let w = wireless_load(ratio(1, 2), 10).unwrap();
        assert_eq!(
            (w.coded, w.uncoded, w.gain),
            (Rational::from_integer(1), Rational::from_integer(5), Some(Rational::from_integer(5)))
        );
        let full = wireless_load(Rational::from_integer(1), 7).unwrap();
        assert!(full.coded.is_zero() && full.gain.is_none());
        for users in [4, 10, 100] {
            assert_eq!(wireless_load(ratio(1, 4), users).unwrap().coded, Rational::from_integer(3));
        }
        assert!(wireless_load(ratio(1, 20), 10).is_err());
    }

    #[test]
    fn trace_lines_parse_back() {
        let spec = JobSpec::new(3, 6, 3, 2, 8);
        let plan = PlacementPlan::build(&spec).unwrap();
        let (messages, _) = coded_shuffle(&plan, &spec, SEED).unwrap();
        let trace = trace_jsonl(&messages);
        let lines: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["sender"], 1);
        assert_eq!(lines[0]["recipients"], json!([2, 3]));
        assert_eq!(lines[0]["descriptors"].as_array().unwrap().len(), 2);
    }
}
