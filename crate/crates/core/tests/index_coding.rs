//! Exhaustive linear index coding over GF(2) on tiny unified-scheme
//! instances, used as a lower bound for the greedy shuffle.

use codedfog::numeric::{ratio, Rational};
use codedfog::placement::NodeSet;
use codedfog::unified::{DemandModel, UnifiedPlan, UnifiedSpec};

struct Instance {
    /// Variables each sender can combine (bitmask over variables).
    senders: Vec<u64>,
    /// (side information, demanded variables) per receiver.
    receivers: Vec<(u64, u64)>,
    subpackets: usize,
}

/// Variables are `(function, task, subpacket)` triples a reducer lacks.
fn instance(plan: &UnifiedPlan, finishers: &NodeSet, demand: DemandModel, subpackets: usize) -> Instance {
    let selected = plan.decodable_set(finishers).unwrap();
    let reducers = plan.reducers(finishers, demand).unwrap();
    let holds = |node: usize, task: usize| finishers.contains(node) && plan.hosts(task).contains(node);
    let mut vars: Vec<(usize, usize, usize)> = Vec::new();
    for (k, fs) in reducers.iter().enumerate() {
        for &f in fs {
            for &t in &selected {
                if !holds(k + 1, t) {
                    vars.extend((0..subpackets).map(|p| (f, t, p)));
                }
            }
        }
    }
    assert!(vars.len() <= 64, "too many variables for the oracle");
    let mask = |pred: &dyn Fn(usize, usize) -> bool| {
        vars.iter().enumerate().filter(|(_, &(f, t, _))| pred(f, t)).fold(0u64, |m, (i, _)| m | 1 << i)
    };
    let senders = finishers.iter().map(|j| mask(&|_, t| holds(j, t))).collect();
    let receivers = reducers
        .iter()
        .enumerate()
        .filter(|(_, fs)| !fs.is_empty())
        .map(|(k, fs)| (mask(&|_, t| holds(k + 1, t)), mask(&|f, t| fs.contains(&f) && !holds(k + 1, t))))
        .collect();
    Instance { senders, receivers, subpackets }
}

/// Whether `target` lies in the GF(2) span of `rows`.
fn in_span(rows: &[u64], target: u64) -> bool {
    let mut basis = [0u64; 64];
    for &r in rows {
        let mut x = r;
        while x != 0 {
            let top = 63 - x.leading_zeros() as usize;
            if basis[top] == 0 {
                basis[top] = x;
                break;
            }
            x ^= basis[top];
        }
    }
    let mut x = target;
    while x != 0 {
        let top = 63 - x.leading_zeros() as usize;
        if basis[top] == 0 {
            return false;
        }
        x ^= basis[top];
    }
    true
}

fn decodable(inst: &Instance, sent: &[u64]) -> bool {
    inst.receivers.iter().all(|&(side, want)| {
        // Side information cancels its coordinates.
        let rows: Vec<u64> = sent.iter().map(|v| v & !side).collect();
        (0..64).filter(|i| want >> i & 1 == 1).all(|i| in_span(&rows, 1 << i))
    })
}

fn submasks(m: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = m;
    while s != 0 {
        out.push(s);
        s = (s - 1) & m;
    }
    out
}

fn combinations(pool: &[u64], size: usize, start: usize, chosen: &mut Vec<u64>, found: &mut dyn FnMut(&[u64]) -> bool) -> bool {
    if chosen.len() == size {
        return found(chosen);
    }
    for i in start..pool.len() {
        chosen.push(pool[i]);
        if combinations(pool, size, i + 1, chosen, found) {
            return true;
        }
        chosen.pop();
    }
    false
}

/// Fewest transmissions of one subpacket each, in value units.
fn optimal_load(inst: &Instance, limit: usize) -> Rational {
    let mut pool: Vec<u64> = inst.senders.iter().flat_map(|&m| submasks(m)).collect();
    pool.sort_unstable();
    pool.dedup();
    for size in 0..=limit {
        if combinations(&pool, size, 0, &mut Vec::new(), &mut |sent| decodable(inst, sent)) {
            return ratio(size as i128, inst.subpackets as i128);
        }
    }
    panic!("no scheme with at most {limit} transmissions");
}

#[test]
fn greedy_matches_optimum_on_four_nodes() {
    let spec = UnifiedSpec::new(4, ratio(1, 2), 2, 2);
    let plan = UnifiedPlan::build(&spec).unwrap();
    let finishers = NodeSet::new([1, 2]);
    let greedy = plan.shuffle_load(&finishers, DemandModel::PeerReduce).unwrap().value_units;
    let optimum = optimal_load(&instance(&plan, &finishers, DemandModel::PeerReduce, 1), 8);
    println!("K=4 mu=1/2 q=2 m=2: greedy {greedy}, optimum {optimum}, ratio {}", greedy / optimum);
    assert!(greedy >= optimum);
    assert_eq!(optimum, ratio(6, 1));
    assert_eq!(greedy, optimum);
}

#[test]
fn greedy_matches_optimum_with_two_subpackets() {
    let spec = UnifiedSpec::new(3, ratio(2, 3), 3, 3);
    let plan = UnifiedPlan::build(&spec).unwrap();
    let finishers = NodeSet::new([1, 2, 3]);
    let greedy = plan.shuffle_load(&finishers, DemandModel::PeerReduce).unwrap().value_units;
    let optimum = optimal_load(&instance(&plan, &finishers, DemandModel::PeerReduce, 2), 6);
    println!("K=3 mu=2/3 q=3 m=3: greedy {greedy}, optimum {optimum}, ratio {}", greedy / optimum);
    assert_eq!(optimum, ratio(3, 2));
    assert_eq!(greedy, optimum);
}

#[test]
fn every_finisher_pair_on_four_nodes() {
    let plan = UnifiedPlan::build(&UnifiedSpec::new(4, ratio(1, 2), 2, 2)).unwrap();
    for f in codedfog::placement::enumerate_subsets(4, 2).unwrap() {
        for demand in [DemandModel::PeerReduce, DemandModel::FinishersReduce] {
            let greedy = plan.shuffle_load(&f, demand).unwrap().value_units;
            let optimum = optimal_load(&instance(&plan, &f, demand, 1), 8);
            assert!(greedy >= optimum, "{f} {demand}: greedy {greedy} < optimum {optimum}");
        }
    }
}
