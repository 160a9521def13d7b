//! Shifted-exponential task runtimes and the latency of uncoded, repetition
//! and MDS-coded execution.
//!
//! A task carrying a fraction `w` of the job takes `w·s + Exp(λ/w)`: both the
//! deterministic part and the mean of the random tail scale with the work.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::{fmt_sig, stream_rng};

const TRIALS_PER_CHUNK: u64 = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum StragglerError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("order statistic {q} out of range 1..={n}")]
    OrderOutOfRange { n: usize, q: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftedExponential {
    /// Seconds per unit of work that every task pays.
    pub shift: f64,
    /// Straggling rate per unit of work.
    pub rate: f64,
}

impl ShiftedExponential {
    pub fn new(shift: f64, rate: f64) -> Result<Self, StragglerError> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(StragglerError::InvalidModel(format!("shift must be finite and >= 0, got {shift}")));
        }
        if !(rate > 0.0) {
            return Err(StragglerError::InvalidModel(format!("rate must be > 0, got {rate}")));
        }
        Ok(Self { shift, rate })
    }

    pub fn sample<R: Rng + ?Sized>(&self, work: f64, rng: &mut R) -> f64 {
        debug_assert!(work > 0.0);
        let tail = if self.rate.is_infinite() {
            0.0
        } else {
            Exp::new(self.rate / work).expect("positive rate").sample(rng)
        };
        work * self.shift + tail
    }

    pub fn mean(&self, work: f64) -> f64 {
        work * (self.shift + 1.0 / self.rate)
    }
}

/// H_m = 1 + 1/2 + ... + 1/m, H_0 = 0.
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

/// Mean of the q-th smallest of n i.i.d. Exp(rate): (H_n − H_{n−q}) / rate.
pub fn exp_order_stat_mean(n: usize, q: usize, rate: f64) -> Result<f64, StragglerError> {
    if q < 1 || q > n {
        return Err(StragglerError::OrderOutOfRange { n, q });
    }
    Ok((harmonic(n) - harmonic(n - q)) / rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// n equal tasks, wait for all of them.
    Uncoded { n: usize },
    /// k tasks each run on n/k nodes; wait until every task finished once.
    Repetition { n: usize, k: usize },
    /// k tasks MDS-coded onto n nodes; wait for the fastest k.
    Mds { n: usize, k: usize },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Uncoded { .. } => "uncoded",
            Scheme::Repetition { .. } => "repetition",
            Scheme::Mds { .. } => "mds",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Scheme::Uncoded { n } | Scheme::Repetition { n, .. } | Scheme::Mds { n, .. } => n,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            Scheme::Uncoded { n } => n,
            Scheme::Repetition { k, .. } | Scheme::Mds { k, .. } => k,
        }
    }

    /// Fraction of the job each task carries.
    pub fn work_per_task(&self) -> f64 {
        1.0 / self.k() as f64
    }

    pub fn validate(&self) -> Result<(), StragglerError> {
        let (n, k) = (self.n(), self.k());
        if n == 0 {
            return Err(StragglerError::InvalidScheme("n must be >= 1".into()));
        }
        match self {
            Scheme::Uncoded { .. } => Ok(()),
            Scheme::Repetition { .. } if k == 0 || n % k != 0 => {
                Err(StragglerError::InvalidScheme(format!("repetition needs k | n, got n={n}, k={k}")))
            }
            Scheme::Mds { .. } if k == 0 || k > n => {
                Err(StragglerError::InvalidScheme(format!("mds needs 1 <= k <= n, got n={n}, k={k}")))
            }
            _ => Ok(()),
        }
    }

    /// Completion time of one trial given per-node durations.
    fn completion(&self, durations: &mut [f64]) -> f64 {
        match *self {
            Scheme::Uncoded { .. } => durations.iter().copied().fold(0.0, f64::max),
            Scheme::Repetition { k, .. } => (0..k)
                .map(|g| durations.iter().skip(g).step_by(k).copied().fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max),
            Scheme::Mds { k, .. } => kth_smallest(durations, k),
        }
    }
}

/// k-th smallest (1-based); reorders the slice.
pub fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Expected completion time in closed form.
pub fn scheme_latency_analytic(scheme: &Scheme, model: &ShiftedExponential) -> Result<f64, StragglerError> {
    scheme.validate()?;
    let (s, lambda) = (model.shift, model.rate);
    Ok(match *scheme {
        Scheme::Uncoded { n } => s / n as f64 + harmonic(n) / (lambda * n as f64),
        Scheme::Repetition { n, k } => s / k as f64 + harmonic(k) / (lambda * n as f64),
        Scheme::Mds { n, k } => s / k as f64 + exp_order_stat_mean(n, k, lambda * k as f64)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyEstimate {
    pub analytic_mean: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub trials: u64,
}

impl LatencyEstimate {
    /// |analytic − MC| measured in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.mc_stderr == 0.0 {
            if self.analytic_mean == self.mc_mean { 0.0 } else { f64::INFINITY }
        } else {
            (self.analytic_mean - self.mc_mean).abs() / self.mc_stderr
        }
    }

    pub fn within(&self, standard_errors: f64) -> bool {
        self.z_score() <= standard_errors
    }
}

/// Sample mean and standard error of `trial` over `trials` runs. Trial `i`
/// draws from its own generator derived from `(seed, stream, i)`, and chunk
/// sums are combined in a fixed order, so the result does not depend on
/// how rayon schedules the chunks.
pub fn monte_carlo<F>(trials: u64, seed: u64, stream: u64, trial: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    assert!(trials >= 1, "at least one trial");
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut sum, mut sq) = (0.0, 0.0);
            for i in c * TRIALS_PER_CHUNK..((c + 1) * TRIALS_PER_CHUNK).min(trials) {
                let mut rng = stream_rng(seed, stream, i);
                let x = trial(&mut rng);
                sum += x;
                sq += x * x;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Draws the per-node durations for one trial of `scheme`.
pub fn sample_durations<R: Rng + ?Sized>(scheme: &Scheme, model: &ShiftedExponential, rng: &mut R) -> Vec<f64> {
    let w = scheme.work_per_task();
    (0..scheme.n()).map(|_| model.sample(w, rng)).collect()
}

pub fn scheme_latency_mc(
    scheme: &Scheme,
    model: &ShiftedExponential,
    trials: u64,
    seed: u64,
) -> Result<LatencyEstimate, StragglerError> {
    let analytic_mean = scheme_latency_analytic(scheme, model)?;
    if trials == 0 {
        return Err(StragglerError::InvalidScheme("trials must be >= 1".into()));
    }
    let stream = ((scheme.n() as u64) << 32) ^ (scheme.k() as u64) ^ ((scheme.name().len() as u64) << 56);
    let (mc_mean, mc_stderr) = monte_carlo(trials, seed, stream, |rng| {
        let mut d = sample_durations(scheme, model, rng);
        scheme.completion(&mut d)
    });
    Ok(LatencyEstimate { analytic_mean, mc_mean, mc_stderr, trials })
}

/// Best MDS dimension for `n` nodes and its speedup over uncoded execution.
/// Ties go to the larger k.
pub fn optimal_mds_k(n: usize, model: &ShiftedExponential) -> Result<(usize, f64), StragglerError> {
    let uncoded = scheme_latency_analytic(&Scheme::Uncoded { n }, model)?;
    let mut best = (n, f64::INFINITY);
    for k in 1..=n {
        let t = scheme_latency_analytic(&Scheme::Mds { n, k }, model)?;
        if t <= best.1 {
            best = (k, t);
        }
    }
    Ok((best.0, uncoded / best.1))
}

pub const CSV_HEADER: &str = "scheme,n,k,s,lambda,analytic_mean,mc_mean,mc_stderr,trials,seed";

pub fn csv_row(scheme: &Scheme, model: &ShiftedExponential, est: &LatencyEstimate, seed: u64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        scheme.name(),
        scheme.n(),
        scheme.k(),
        fmt_sig(model.shift),
        fmt_sig(model.rate),
        fmt_sig(est.analytic_mean),
        fmt_sig(est.mc_mean),
        fmt_sig(est.mc_stderr),
        est.trials,
        seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn unit() -> ShiftedExponential {
        ShiftedExponential::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn order_stat_small_cases() {
        assert_eq!(exp_order_stat_mean(1, 1, 1.0).unwrap(), 1.0);
        assert_eq!(exp_order_stat_mean(2, 1, 1.0).unwrap(), 0.5);
        assert!((exp_order_stat_mean(10, 5, 1.0).unwrap() - 0.645_634_920_634_920_6).abs() < 1e-15);
        assert!(exp_order_stat_mean(3, 0, 1.0).is_err());
        assert!(exp_order_stat_mean(3, 4, 1.0).is_err());
    }

    #[test]
    fn order_stat_monotone() {
        for n in 1..15 {
            for q in 1..n {
                let a = exp_order_stat_mean(n, q, 2.0).unwrap();
                assert!(exp_order_stat_mean(n, q + 1, 2.0).unwrap() > a);
                assert!(exp_order_stat_mean(n + 1, q, 2.0).unwrap() < a);
            }
        }
    }

    #[test]
    fn analytic_examples() {
        let m = unit();
        let un = scheme_latency_analytic(&Scheme::Uncoded { n: 10 }, &m).unwrap();
        assert!((un - 0.392_896_825_396_825_4).abs() < 1e-12);
        let mds = scheme_latency_analytic(&Scheme::Mds { n: 10, k: 5 }, &m).unwrap();
        assert!((mds - 0.329_126_984_126_984_1).abs() < 1e-12);
        for n in 1..12 {
            let a = scheme_latency_analytic(&Scheme::Mds { n, k: n }, &m).unwrap();
            let b = scheme_latency_analytic(&Scheme::Uncoded { n }, &m).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(ShiftedExponential::new(-1.0, 1.0).is_err());
        assert!(ShiftedExponential::new(1.0, 0.0).is_err());
        assert!(scheme_latency_analytic(&Scheme::Repetition { n: 6, k: 4 }, &unit()).is_err());
        assert!(scheme_latency_analytic(&Scheme::Mds { n: 3, k: 4 }, &unit()).is_err());
    }

    #[test]
    fn samples_respect_the_shift() {
        let m = ShiftedExponential::new(2.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in [0.1, 0.5, 1.0, 3.0] {
            for _ in 0..1000 {
                assert!(m.sample(w, &mut rng) >= w * 2.0);
            }
        }
    }

    #[test]
    fn mc_is_reproducible_under_any_thread_count() {
        let scheme = Scheme::Mds { n: 6, k: 3 };
        let a = scheme_latency_mc(&scheme, &unit(), 5000, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| scheme_latency_mc(&scheme, &unit(), 5000, 42).unwrap());
        assert_eq!(a.mc_mean.to_bits(), b.mc_mean.to_bits());
        assert_eq!(a.mc_stderr.to_bits(), b.mc_stderr.to_bits());
    }

    #[test]
    fn single_node_mc() {
        let m = ShiftedExponential::new(0.5, 2.0).unwrap();
        let est = scheme_latency_mc(&Scheme::Uncoded { n: 1 }, &m, 100_000, 7).unwrap();
        assert!((est.analytic_mean - 1.0).abs() < 1e-15);
        assert!(est.within(3.0), "{est:?}");
    }

    #[test]
    fn optimal_k_edge_cases() {
        assert_eq!(optimal_mds_k(1, &unit()).unwrap(), (1, 1.0));
        let (_, s10) = optimal_mds_k(10, &unit()).unwrap();
        let (_, s100) = optimal_mds_k(100, &unit()).unwrap();
        assert!(s10 > 1.0 && s100 > s10);
    }

    #[test]
    fn csv_row_layout() {
        let est = LatencyEstimate { analytic_mean: 0.5, mc_mean: 0.49, mc_stderr: 0.01, trials: 10 };
        assert_eq!(
            csv_row(&Scheme::Mds { n: 2, k: 1 }, &unit(), &est, 3),
            "mds,2,1,1,1,0.5,0.49,0.01,10,3"
        );
        assert_eq!(CSV_HEADER.split(',').count(), 10);
    }
}
