//! Physics-informed neural network engine for a reinforced-concrete beam
//! surrogate, plus the supporting numerics: a scalar autodiff tape with
//! forward-mode jets, small dense networks, Adam and L-BFGS optimizers,
//! harmonic-oscillator and plane-stress elasticity residuals, analytic
//! verification oracles, and synthetic sensor-data generation.
//!
//! Two model families are covered:
//! - a **temporal** reduced model `ε̃(t)` trained against strain-sensor
//!   time series under a harmonic-oscillator residual, optionally
//!   identifying the squared natural frequency from data;
//! - a **spatial** reduced model `(ũ, σ̃)(x, y)` for a beam cross-section
//!   under four-point bending in a mixed displacement/stress formulation
//!   with hard boundary constraints and fiber-sensor data losses.
//!
//! Loss evaluation over point sets is chunked; with the default `parallel`
//! feature the chunks are evaluated by rayon, without it sequentially. The
//! chunk partition and reduction order are identical in both modes, so
//! results are bit-for-bit the same either way.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};

/// How chunked loss evaluations are scheduled.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EvalMode {
    /// One chunk after another on the calling thread.
    Sequential,
    /// Chunks distributed over the rayon thread pool.
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for EvalMode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            EvalMode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            EvalMode::Sequential
        }
    }
}

/// Split `0..n` into chunks of `chunk` items, apply `f` to each index range,
/// and return the results in chunk order. The chunk boundaries depend only
/// on `n` and `chunk`, never on the scheduling mode, which is what makes
/// parallel and sequential evaluation bit-identical after an in-order
/// reduction.
pub fn map_chunks<R, F>(mode: EvalMode, n: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(chunk)
        .map(|s| s..(s + chunk).min(n))
        .collect();
    match mode {
        EvalMode::Sequential => ranges.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        EvalMode::Parallel => {
            use rayon::prelude::*;
            ranges.into_par_iter().map(f).collect()
        }
    }
}

/// Relative L2 error ‖pred − truth‖ / ‖truth‖ over paired samples.
///
/// Returns NaN for mismatched lengths and infinity when `truth` is all zero
/// but `pred` is not.
pub fn rel_l2(pred: &[f64], truth: &[f64]) -> f64 {
    if pred.len() != truth.len() {
        return f64::NAN;
    }
    let num: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Median of a sample (mean of the central pair for even lengths); NaN for
/// an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of non-NaN values"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_l2_measures_relative_deviation() {
        assert_eq!(rel_l2(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let e = rel_l2(&[1.1, 2.0], &[1.0, 2.0]);
        let expect = (0.01_f64 / 5.0).sqrt();
        assert!((e - expect).abs() < 1e-15);
        assert!(rel_l2(&[1.0], &[1.0, 2.0]).is_nan());
        assert_eq!(rel_l2(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(rel_l2(&[1.0], &[0.0]), f64::INFINITY);
    }

    #[test]
    fn median_handles_odd_even_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn map_chunks_preserves_order() {
        let out = map_chunks(EvalMode::Sequential, 10, 3, |r| (r.start, r.end));
        assert_eq!(out, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let work = |r: std::ops::Range<usize>| -> f64 {
            r.map(|i| ((i as f64) * 0.1).sin()).sum()
        };
        let seq: Vec<f64> = map_chunks(EvalMode::Sequential, 1000, 7, work);
        let par: Vec<f64> = map_chunks(EvalMode::Parallel, 1000, 7, work);
        let fold = |v: Vec<f64>| v.into_iter().fold(0.0, |a, b| a + b);
        assert_eq!(fold(seq).to_bits(), fold(par).to_bits());
    }
}
