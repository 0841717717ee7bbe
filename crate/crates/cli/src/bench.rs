//! Decode timing as a function of the set difference.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use erlay_core::gf::Field;
use erlay_core::Sketch;

use crate::CliError;

pub const DEFAULT_SIZES: [usize; 8] = [1, 5, 10, 20, 50, 100, 150, 200];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPoint {
    pub difference: usize,
    /// Median decode time of a full-capacity sketch.
    pub micros: f64,
}

/// Decode `reps` random differences of each size at capacity equal to the
/// size, and report the median time of each. Sizes are interleaved within
/// each repetition so slow drift in machine state hits them all alike.
pub fn bench_decode(bits: u32, sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchPoint>, CliError> {
    let field = Field::new(bits).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(&d) = sizes.iter().find(|&&d| d == 0 || (d as u128) >= field.order()) {
        return Err(CliError::Usage(format!("cannot bench a difference of {d} at {bits} bits")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![Vec::with_capacity(reps); sizes.len()];
    // One untimed round first to warm caches and clocks.
    for rep in 0..=reps.max(1) {
        for (i, &d) in sizes.iter().enumerate() {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < d {
                let v = rng.gen::<u64>() & field.mask();
                if v != 0 {
                    set.insert(v);
                }
            }
            let sketch = Sketch::from_elements(field, d, set.iter().copied()).expect("nonzero elements");
            let start = Instant::now();
            let found = sketch.decode();
            let elapsed = start.elapsed();
            // A full-capacity decode must succeed; anything else is a bug.
            if found.as_deref().ok() != Some(&set.iter().copied().collect::<Vec<_>>()[..]) {
                return Err(CliError::Runtime(format!("decode of {d} elements failed")));
            }
            if rep > 0 {
                times[i].push(elapsed.as_secs_f64() * 1e6);
            }
        }
    }
    Ok(sizes
        .iter()
        .zip(times)
        .map(|(&difference, mut t)| {
            t.sort_by(f64::total_cmp);
            BenchPoint { difference, micros: t[t.len() / 2] }
        })
        .collect())
}

/// `time(hi) / time(lo)` from a benchmark that covered both sizes.
pub fn growth_ratio(points: &[BenchPoint], lo: usize, hi: usize) -> Option<f64> {
    let at = |d| points.iter().find(|p| p.difference == d).map(|p| p.micros);
    Some(at(hi)? / at(lo)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_runs_and_grows() {
        let points = bench_decode(64, &[5, 40], 5, 1).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.micros > 0.0));
        assert!(growth_ratio(&points, 5, 40).unwrap() > 1.0);
        assert_eq!(growth_ratio(&points, 5, 7), None);
    }

    #[test]
    fn impossible_sizes_are_usage_errors() {
        assert!(matches!(bench_decode(8, &[300], 1, 1), Err(CliError::Usage(_))));
        assert!(matches!(bench_decode(64, &[0], 1, 1), Err(CliError::Usage(_))));
        assert!(matches!(bench_decode(12, &[1], 1, 1), Err(CliError::Usage(_))));
    }
}
