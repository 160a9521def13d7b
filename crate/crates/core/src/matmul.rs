//! Coded matrix multiplication on a worker pool: `A` is split row-wise into
//! `k` blocks, MDS-coded into `n`, each worker multiplies its block by `X`,
//! and the client decodes `A·X` from the first `k` results.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::erasure::{ErasureError, Field, MdsCode};
use crate::numeric::stream_rng;
use crate::straggler::{kth_smallest, ShiftedExponential};

/// Allowed makespan overhead of the coded job over the uncoded one when
/// delays are deterministic.
pub const OVERHEAD_BUDGET: f64 = 0.05;
const SLEEP_SLICE: Duration = Duration::from_millis(2);

#[derive(Debug, Error, PartialEq)]
pub enum MatMulError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("job failed: {survivors} workers survived, {needed} needed")]
    JobFailed { survivors: usize, needed: usize },
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error(transparent)]
    Erasure(#[from] ErasureError),
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatMulError> {
        if data.len() != rows * cols {
            return Err(MatMulError::Shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Entries uniform in [-1, 1).
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0x4D41_5452, (rows * 65_537 + cols) as u64);
        Self { rows, cols, data: (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, MatMulError> {
        if self.cols != other.rows {
            return Err(MatMulError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.data[i * self.cols..(i + 1) * self.cols].iter().enumerate() {
                if a != 0.0 {
                    for (o, &b) in row.iter_mut().zip(&other.data[k * other.cols..(k + 1) * other.cols]) {
                        *o += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Rows `[start, start + count)`.
    pub fn row_block(&self, start: usize, count: usize) -> Matrix {
        Matrix {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    pub fn vstack(blocks: &[Matrix]) -> Result<Matrix, MatMulError> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(MatMulError::Shape("blocks differ in width".into()));
        }
        Ok(Matrix {
            rows: blocks.iter().map(|b| b.rows).sum(),
            cols,
            data: blocks.iter().flat_map(|b| b.data.iter().copied()).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `max |self − other| / max |other|`.
    pub fn relative_error(&self, reference: &Matrix) -> f64 {
        if self.rows != reference.rows || self.cols != reference.cols {
            return f64::INFINITY;
        }
        let diff = self.data.iter().zip(&reference.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = reference.max_abs();
        if scale == 0.0 { diff } else { diff / scale }
    }
}

/// Splits `a` row-wise into `code.k` blocks and returns the `code.n` coded
/// blocks `Σ_j g_ij·A_j`.
pub fn split_encode(a: &Matrix, code: &MdsCode) -> Result<Vec<Matrix>, MatMulError> {
    if code.field() != Field::Real {
        return Err(MatMulError::Erasure(ErasureError::FieldMismatch { expected: Field::Real, got: Field::Gf256 }));
    }
    if a.rows == 0 || a.rows % code.k != 0 {
        return Err(MatMulError::Shape(format!("{} rows cannot be split into {} equal blocks", a.rows, code.k)));
    }
    let h = a.rows / code.k;
    let blocks: Vec<Vec<f64>> = (0..code.k).map(|j| a.row_block(j * h, h).data).collect();
    Ok(code
        .encode_real(&blocks)?
        .into_iter()
        .map(|data| Matrix { rows: h, cols: a.cols, data })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Clock {
    /// Virtual time: completion order follows the drawn delays exactly.
    Simulated,
    /// Workers really sleep `delay · seconds_per_unit`.
    Wall { seconds_per_unit: f64 },
}

impl Clock {
    pub fn name(&self) -> &'static str {
        match self {
            Clock::Simulated => "simulated",
            Clock::Wall { .. } => "wall",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatMulJob {
    pub a: Matrix,
    pub x: Matrix,
    pub code: MdsCode,
    pub model: ShiftedExponential,
    /// Coded indices that get `straggler_delay` added to their delay.
    pub stragglers: Vec<usize>,
    pub straggler_delay: f64,
    /// Coded indices whose workers never return.
    pub failures: Vec<usize>,
    pub clock: Clock,
    pub seed: u64,
}

impl MatMulJob {
    pub fn new(a: Matrix, x: Matrix, code: MdsCode, model: ShiftedExponential, seed: u64) -> Self {
        Self {
            a,
            x,
            code,
            model,
            stragglers: Vec::new(),
            straggler_delay: 10.0,
            failures: Vec::new(),
            clock: Clock::Simulated,
            seed,
        }
    }

    fn validate(&self) -> Result<(), MatMulError> {
        if self.a.cols != self.x.rows {
            return Err(MatMulError::Shape(format!(
                "A is {}x{}, X is {}x{}",
                self.a.rows, self.a.cols, self.x.rows, self.x.cols
            )));
        }
        if let Some(&bad) = self.stragglers.iter().chain(&self.failures).find(|&&i| i >= self.code.n) {
            return Err(MatMulError::InvalidJob(format!("worker {bad} does not exist (n = {})", self.code.n)));
        }
        if !(self.straggler_delay >= 0.0) {
            return Err(MatMulError::InvalidJob("straggler delay must be >= 0".into()));
        }
        if let Clock::Wall { seconds_per_unit } = self.clock {
            if !(seconds_per_unit >= 0.0 && seconds_per_unit.is_finite()) {
                return Err(MatMulError::InvalidJob("seconds per unit must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    /// Injected delay of every coded task, in model time units.
    pub fn delays(&self) -> Vec<f64> {
        let work = 1.0 / self.code.k as f64;
        (0..self.code.n)
            .map(|i| {
                let mut rng = stream_rng(self.seed, 0x4445_4C41, i as u64);
                let extra = if self.stragglers.contains(&i) { self.straggler_delay } else { 0.0 };
                self.model.sample(work, &mut rng) + extra
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Completed,
    Cancelled,
    Failed,
}

impl TaskStatus {
    pub fn name(&self) -> &'static str {
        match self {
            TaskStatus::Completed => "completed",
            TaskStatus::Cancelled => "cancelled",
            TaskStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskResult {
    pub coded_index: usize,
    /// Present only for completed tasks.
    pub product: Option<Matrix>,
    /// Injected delay in model units.
    pub delay: f64,
    /// Seconds from dispatch to the worker's report.
    pub wall_time: f64,
    pub status: TaskStatus,
}

#[derive(Clone, Debug)]
pub struct JobReport {
    pub result: Matrix,
    pub tasks: Vec<TaskResult>,
    /// Model time of the k-th completion (simulated clock) or wall seconds.
    pub makespan: f64,
    /// Coded indices fed to the decoder.
    pub decode_inputs: Vec<usize>,
    pub relative_error: f64,
    pub condition: f64,
    pub warning: Option<String>,
    pub clock: Clock,
    pub overhead_budget: f64,
}

impl JobReport {
    /// Every decoder input came from a completed task.
    pub fn audit(&self) -> bool {
        self.decode_inputs.iter().all(|&i| self.tasks[i].status == TaskStatus::Completed)
            && self.decode_inputs.len() == self.tasks.iter().filter(|t| t.status == TaskStatus::Completed).count()
    }

    pub fn to_json(&self) -> Value {
        let tasks: Vec<Value> = self
            .tasks
            .iter()
            .map(|t| {
                json!({
                    "coded_index": t.coded_index,
                    "status": t.status.name(),
                    "delay": t.delay,
                    "wall_time_s": t.wall_time,
                })
            })
            .collect();
        json!({
            "clock": self.clock.name(),
            "makespan": self.makespan,
            "decode_inputs": self.decode_inputs,
            "relative_error": self.relative_error,
            "condition": self.condition,
            "warning": self.warning,
            "overhead_budget": self.overhead_budget,
            "audit_ok": self.audit(),
            "tasks": tasks,
        })
    }
}

enum Report {
    Done { index: usize, product: Matrix, wall: f64 },
    Cancelled { index: usize, wall: f64 },
    Failed { index: usize, wall: f64 },
}

/// Runs the job and decodes `A·X` from the first `k` results.
pub fn run_job(job: &MatMulJob) -> Result<JobReport, MatMulError> {
    job.validate()?;
    let (n, k) = (job.code.n, job.code.k);
    let survivors = n - job.failures.iter().collect::<std::collections::BTreeSet<_>>().len();
    if survivors < k {
        return Err(MatMulError::JobFailed { survivors, needed: k });
    }
    let blocks = split_encode(&job.a, &job.code)?;
    let delays = job.delays();
    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel::<Report>();
    let start = Instant::now();

    let mut tasks: Vec<TaskResult> = (0..n)
        .map(|i| TaskResult { coded_index: i, product: None, delay: delays[i], wall_time: 0.0, status: TaskStatus::Cancelled })
        .collect();
    let mut accepted: Vec<usize> = Vec::new();
    let mut makespan = 0.0;

    thread::scope(|scope| {
        for (i, block) in blocks.iter().enumerate() {
            let tx = tx.clone();
            let cancel = Arc::clone(&cancel);
            let x = &job.x;
            let failed = job.failures.contains(&i);
            let clock = job.clock;
            let delay = delays[i];
            scope.spawn(move || {
                let wall = || start.elapsed().as_secs_f64();
                if failed {
                    let _ = tx.send(Report::Failed { index: i, wall: wall() });
                    return;
                }
                let product = block.mul(x).expect("shapes checked");
                if let Clock::Wall { seconds_per_unit } = clock {
                    let deadline = start + Duration::from_secs_f64(delay * seconds_per_unit);
                    loop {
                        if cancel.load(Ordering::Acquire) {
                            let _ = tx.send(Report::Cancelled { index: i, wall: wall() });
                            return;
                        }
                        let now = Instant::now();
                        if now >= deadline {
                            break;
                        }
                        thread::sleep((deadline - now).min(SLEEP_SLICE));
                    }
                }
                let _ = tx.send(Report::Done { index: i, product, wall: wall() });
            });
        }
        drop(tx);

        let mut reports: Vec<Report> = Vec::with_capacity(n);
        for report in rx.iter() {
            match (&report, job.clock) {
                (Report::Done { index, wall, .. }, Clock::Wall { .. }) if accepted.len() < k => {
                    accepted.push(*index);
                    if accepted.len() == k {
                        makespan = *wall;
                        cancel.store(true, Ordering::Release);
                    }
                }
                _ => {}
            }
            reports.push(report);
        }
        if job.clock == Clock::Simulated {
            // Virtual completion order: by injected delay, then index.
            let mut done: Vec<usize> = reports
                .iter()
                .filter_map(|r| match r {
                    Report::Done { index, .. } => Some(*index),
                    _ => None,
                })
                .collect();
            done.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]).then(a.cmp(&b)));
            accepted = done.into_iter().take(k).collect();
            let mut live: Vec<f64> = (0..n).filter(|i| !job.failures.contains(i)).map(|i| delays[i]).collect();
            makespan = kth_smallest(&mut live, k);
            cancel.store(true, Ordering::Release);
        }
        for report in reports {
            match report {
                Report::Done { index, product, wall } => {
                    tasks[index].wall_time = wall;
                    // Late completions after cancellation are discarded.
                    if accepted.contains(&index) {
                        tasks[index].status = TaskStatus::Completed;
                        tasks[index].product = Some(product);
                    }
                }
                Report::Cancelled { index, wall } => tasks[index].wall_time = wall,
                Report::Failed { index, wall } => {
                    tasks[index].wall_time = wall;
                    tasks[index].status = TaskStatus::Failed;
                }
            }
        }
    });

    if accepted.len() < k {
        return Err(MatMulError::JobFailed { survivors: accepted.len(), needed: k });
    }
    let available: BTreeMap<usize, Vec<f64>> = accepted
        .iter()
        .map(|&i| (i, tasks[i].product.as_ref().expect("completed task has a product").data.clone()))
        .collect();
    let decoded = job.code.decode_real(&available)?;
    let h = job.a.rows / k;
    let parts: Vec<Matrix> = decoded
        .blocks
        .into_iter()
        .map(|data| Matrix { rows: h, cols: job.x.cols, data })
        .collect();
    let result = Matrix::vstack(&parts)?;
    let direct = job.a.mul(&job.x)?;
    Ok(JobReport {
        relative_error: result.relative_error(&direct),
        result,
        tasks,
        makespan,
        decode_inputs: decoded.used,
        condition: decoded.condition,
        warning: decoded.warning,
        clock: job.clock,
        overhead_budget: OVERHEAD_BUDGET,
    })
}

/// The same job with the `(k, k)` identity code.
pub fn uncoded_baseline(job: &MatMulJob) -> MatMulJob {
    let mut base = job.clone();
    base.code = MdsCode::identity(job.code.k, Field::Real);
    base.stragglers.retain(|&i| i < job.code.k);
    base.failures.retain(|&i| i < job.code.k);
    base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::enumerate_subsets;

    fn unit() -> ShiftedExponential {
        ShiftedExponential::new(1.0, 1.0).unwrap()
    }

    fn job(n: usize, k: usize, rows: usize, seed: u64) -> MatMulJob {
        let code = if n == k + 1 && k == 2 {
            MdsCode::single_parity(2)
        } else {
            MdsCode::new(n, k, Field::Real, seed).unwrap()
        };
        MatMulJob::new(Matrix::random(rows, 5, seed), Matrix::random(5, 3, seed + 1), code, unit(), seed)
    }

    #[test]
    fn three_worker_parity_blocks() {
        let a = Matrix::new(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let blocks = split_encode(&a, &MdsCode::single_parity(2)).unwrap();
        assert_eq!(blocks[0], a.row_block(0, 2));
        assert_eq!(blocks[1], a.row_block(2, 2));
        assert_eq!(blocks[2].data, vec![4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn identity_split_is_raw() {
        let a = Matrix::random(6, 4, 3);
        let blocks = split_encode(&a, &MdsCode::identity(3, Field::Real)).unwrap();
        assert_eq!(Matrix::vstack(&blocks).unwrap(), a);
    }

    #[test]
    fn any_three_of_five_reassemble() {
        let a = Matrix::random(6, 4, 8);
        let code = MdsCode::new(5, 3, Field::Real, 8).unwrap();
        let blocks = split_encode(&a, &code).unwrap();
        for subset in enumerate_subsets(5, 3).unwrap() {
            let avail: BTreeMap<usize, Vec<f64>> = subset.iter().map(|i| (i - 1, blocks[i - 1].data.clone())).collect();
            let dec = code.decode_real(&avail).unwrap();
            let parts: Vec<Matrix> = dec.blocks.into_iter().map(|d| Matrix::new(2, 4, d).unwrap()).collect();
            assert!(Matrix::vstack(&parts).unwrap().relative_error(&a) <= 1e-10);
        }
    }

    #[test]
    fn split_rejects_bad_shapes() {
        let code = MdsCode::single_parity(2);
        assert!(matches!(split_encode(&Matrix::random(3, 2, 1), &code), Err(MatMulError::Shape(_))));
        assert!(split_encode(&Matrix::random(4, 2, 1), &MdsCode::new(3, 2, Field::Gf256, 0).unwrap()).is_err());
    }

    #[test]
    fn three_worker_parity_every_single_straggler() {
        for s in 0..3 {
            let mut j = job(3, 2, 4, 21);
            j.stragglers = vec![s];
            let rep = run_job(&j).unwrap();
            assert!(rep.relative_error <= 1e-8);
            assert_eq!(rep.tasks[s].status, TaskStatus::Cancelled);
            assert!(rep.audit());
            let mut d = j.delays();
            assert_eq!(rep.makespan, kth_smallest(&mut d, 2));
        }
    }

    #[test]
    fn every_pair_of_stragglers_on_four_workers() {
        for pair in enumerate_subsets(4, 2).unwrap() {
            let mut j = job(4, 2, 6, 5);
            j.stragglers = pair.iter().map(|i| i - 1).collect();
            let rep = run_job(&j).unwrap();
            assert!(rep.relative_error <= 1e-8, "{pair}");
            assert!(rep.audit());
            assert!(j.stragglers.iter().all(|&i| rep.tasks[i].status == TaskStatus::Cancelled));
        }
    }

    #[test]
    fn single_worker() {
        let j = MatMulJob::new(
            Matrix::random(3, 3, 1),
            Matrix::random(3, 2, 2),
            MdsCode::identity(1, Field::Real),
            unit(),
            4,
        );
        let rep = run_job(&j).unwrap();
        assert_eq!(rep.makespan, j.delays()[0]);
        assert!(rep.relative_error <= 1e-12);
    }

    #[test]
    fn failures_up_to_tolerance() {
        let mut j = job(5, 3, 6, 9);
        j.failures = vec![0, 4];
        let rep = run_job(&j).unwrap();
        assert!(rep.relative_error <= 1e-8);
        assert_eq!(rep.tasks[0].status, TaskStatus::Failed);
        assert_eq!(rep.decode_inputs, vec![1, 2, 3]);
        j.failures = vec![0, 1, 4];
        assert_eq!(run_job(&j).unwrap_err(), MatMulError::JobFailed { survivors: 2, needed: 3 });
    }

    #[test]
    fn deterministic_delays_cost_nothing() {
        let mut j = job(3, 2, 4, 2);
        j.model = ShiftedExponential::new(1.0, f64::INFINITY).unwrap();
        let coded = run_job(&j).unwrap();
        let plain = run_job(&uncoded_baseline(&j)).unwrap();
        assert_eq!(coded.result, plain.result);
        assert!(coded.makespan <= plain.makespan * (1.0 + coded.overhead_budget));
    }

    #[test]
    fn wall_clock_cancels_the_straggler() {
        let mut j = job(3, 2, 4, 13);
        j.stragglers = vec![1];
        j.straggler_delay = 1000.0;
        j.clock = Clock::Wall { seconds_per_unit: 0.01 };
        let t0 = Instant::now();
        let rep = run_job(&j).unwrap();
        assert!(t0.elapsed() < Duration::from_secs(5));
        assert_eq!(rep.tasks[1].status, TaskStatus::Cancelled);
        assert!(rep.relative_error <= 1e-8);
        assert!(rep.audit());
        assert_eq!(rep.to_json()["tasks"][1]["status"], "cancelled");
    }

    #[test]
    fn shape_mismatch() {
        let j = MatMulJob::new(Matrix::random(4, 3, 1), Matrix::random(2, 2, 1), MdsCode::single_parity(2), unit(), 0);
        assert!(matches!(run_job(&j), Err(MatMulError::Shape(_))));
    }
}
