//! Choosing the computation load `r` when Map time grows like `r·tTask` and
//! shuffle time shrinks like `tData/r`.

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadChoice {
    /// Unclamped `√(tData / tTask)`.
    pub continuous: f64,
    /// Best integer load in `[1, K]`.
    pub r_star: usize,
    pub total_coded: f64,
    pub total_uncoded: f64,
}

impl LoadChoice {
    pub fn speedup(&self) -> f64 {
        self.total_uncoded / self.total_coded
    }

    pub fn to_json(&self) -> Value {
        json!({
            "r_continuous": self.continuous,
            "r_star": self.r_star,
            "total_coded_s": self.total_coded,
            "total_uncoded_s": self.total_uncoded,
            "speedup": self.speedup(),
        })
    }
}

fn total(r: usize, t_task: f64, t_data: f64) -> f64 {
    r as f64 * t_task + t_data / r as f64
}

pub fn optimal_computation_load(t_task: f64, t_data: f64, nodes: usize) -> Result<LoadChoice, AnalysisError> {
    if !(t_task > 0.0 && t_task.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!("tTask must be > 0, got {t_task}")));
    }
    if !(t_data >= 0.0 && t_data.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!("tData must be >= 0, got {t_data}")));
    }
    if nodes == 0 {
        return Err(AnalysisError::InvalidArgument("K must be >= 1".into()));
    }
    let continuous = (t_data / t_task).sqrt();
    let clamped = continuous.clamp(1.0, nodes as f64);
    let lo = clamped.floor() as usize;
    let hi = (clamped.ceil() as usize).min(nodes);
    let r_star = if total(hi, t_task, t_data) < total(lo, t_task, t_data) { hi } else { lo };
    Ok(LoadChoice {
        continuous,
        r_star,
        total_coded: total(r_star, t_task, t_data),
        total_uncoded: t_task + t_data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_one_hundred() {
        let c = optimal_computation_load(1.0, 100.0, 50).unwrap();
        assert_eq!(c.continuous, 10.0);
        assert_eq!(c.r_star, 10);
        assert!((c.speedup() - 5.05).abs() < 1e-12);
    }

    #[test]
    fn equal_times_need_no_redundancy() {
        let c = optimal_computation_load(3.0, 3.0, 10).unwrap();
        assert_eq!(c.r_star, 1);
        assert_eq!(c.speedup(), 1.0);
    }

    #[test]
    fn closed_form_total() {
        let c = optimal_computation_load(2.0, 50.0, 10).unwrap();
        assert_eq!((c.r_star, c.total_coded, c.total_uncoded), (5, 20.0, 52.0));
    }

    #[test]
    fn clamped_to_cluster_size() {
        let c = optimal_computation_load(1.0, 10_000.0, 8).unwrap();
        assert_eq!(c.r_star, 8);
        let c = optimal_computation_load(1.0, 0.0, 8).unwrap();
        assert_eq!(c.r_star, 1);
    }

    #[test]
    fn integer_choice_beats_neighbours() {
        for &(t, d, k) in &[(1.0, 30.0, 20), (0.5, 7.0, 6), (3.0, 1000.0, 12)] {
            let c = optimal_computation_load(t, d, k).unwrap();
            for r in 1..=k {
                assert!(c.total_coded <= total(r, t, d) + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(optimal_computation_load(0.0, 1.0, 3).is_err());
        assert!(optimal_computation_load(1.0, -1.0, 3).is_err());
        assert!(optimal_computation_load(1.0, 1.0, 0).is_err());
    }
}
