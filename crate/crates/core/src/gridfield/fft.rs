//! Two-dimensional FFT on square grids.
//!
//! Forward transform is unnormalized, the inverse carries `1/n²`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> PlanPair {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose_in_place(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn transform_rows(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    data.par_chunks_mut(n).for_each(|row| fft.process(row));
}

fn transform(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    transform_rows(data, n, fft);
    transpose_in_place(data, n);
    transform_rows(data, n, fft);
    transpose_in_place(data, n);
}

/// Unnormalized forward 2D transform of row-major `n × n` data.
pub fn forward(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let (fwd, _) = plans(n);
    transform(data, n, &fwd);
}

/// Inverse 2D transform including the `1/n²` factor.
pub fn inverse(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let (_, inv) = plans(n);
    transform(data, n, &inv);
    let scale = 1.0 / (n * n) as f64;
    data.par_iter_mut().for_each(|c| *c *= scale);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_data() {
        let n = 16;
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let orig = data.clone();
        forward(&mut data, n);
        inverse(&mut data, n);
        let err = data
            .iter()
            .zip(&orig)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let n = 8;
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let phase = std::f64::consts::TAU * (2.0 * i as f64 + 3.0 * j as f64) / n as f64;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        forward(&mut data, n);
        for (k, c) in data.iter().enumerate() {
            if k == 2 * n + 3 {
                assert!((c.re - (n * n) as f64).abs() < 1e-10);
            } else {
                assert!(c.norm() < 1e-10);
            }
        }
    }
}
