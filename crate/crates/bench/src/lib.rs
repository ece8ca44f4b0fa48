//! Seeded synthetic inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrtensor_core::mrencode::build_tensor;
use mrtensor_core::{BetaRule, EventTable, PassEvent, Replicate, SolverConfig, SparseCountTensor};

/// `replicates` games with `events_per` uniformly placed passes each, on
/// standardized coordinates.
pub fn uniform_events(seed: u64, replicates: usize, events_per: usize) -> EventTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps = (0..replicates)
        .map(|n| Replicate {
            id: format!("g{n}"),
            team: format!("T{}", n % 16),
            minutes_played: 90.0,
        })
        .collect();
    let events = (0..replicates * events_per)
        .map(|k| PassEvent {
            replicate: k / events_per,
            x_o: rng.random(),
            y_o: rng.random(),
            x_d: rng.random(),
            y_d: rng.random(),
        })
        .collect();
    EventTable::new(events, reps).expect("generated table is valid")
}

pub fn uniform_tensor(
    seed: u64,
    replicates: usize,
    events_per: usize,
    scales: usize,
) -> SparseCountTensor {
    build_tensor(&uniform_events(seed, replicates, events_per), scales).expect("encodable")
}

/// A positive `m × k` design with counts drawn around its column sums.
pub fn regression_instance(seed: u64, m: usize, k: usize) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((m, k), |_| rng.random_range(0.01..1.0));
    let x = (0..m).map(|_| rng.random_range(0..20) as f64).collect();
    (a, x)
}

pub fn small_fit_config(seed: u64) -> SolverConfig {
    SolverConfig {
        n_terms: 8,
        rank: 2,
        beta: BetaRule::PerPositive(0.001),
        max_outer: 5,
        seed,
        ..SolverConfig::default()
    }
}
