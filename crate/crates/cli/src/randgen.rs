//! Seeded random instance generation for the property and acceptance
//! suites: up to 5 contestants, 4 designers, 8 contests, with efforts,
//! rewards, and biases log-uniform over [1e-2, 1e2].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plc_core::model::{ContestConfig, DesignerProfile, Instance};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(rng.gen_range(lo_exp..hi_exp))
}

/// One random instance with every designer's budget matching the rewards
/// she hands out.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Instance, DesignerProfile) {
    let n = rng.gen_range(2..=5usize);
    let m = rng.gen_range(1..=4usize);
    let k = rng.gen_range(1..=8usize);
    let efforts: Vec<f64> = (0..n).map(|_| log_uniform(rng, -2.0, 2.0)).collect();
    let mut per_designer: Vec<Vec<ContestConfig>> = (0..m).map(|_| Vec::new()).collect();
    for c in 0..k {
        let designer = rng.gen_range(0..m);
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n);
        while b == a {
            b = rng.gen_range(0..n);
        }
        per_designer[designer].push(ContestConfig::new(
            format!("r{c}"),
            designer,
            [a, b],
            log_uniform(rng, -2.0, 2.0),
            [log_uniform(rng, -2.0, 2.0), log_uniform(rng, -2.0, 2.0)],
        ));
    }
    let budgets: Vec<f64> = per_designer
        .iter()
        .map(|held| {
            let total: f64 = held.iter().map(|c| c.reward).sum();
            if total > 0.0 {
                total
            } else {
                1.0
            }
        })
        .collect();
    (
        Instance::new(efforts, budgets),
        DesignerProfile::new(per_designer),
    )
}

/// Moderate-scale instance without contests, for designer-stage
/// construction suites.
pub fn random_stage_instance(
    rng: &mut ChaCha8Rng,
    max_contestants: usize,
    max_designers: usize,
) -> Instance {
    let n = rng.gen_range(2..=max_contestants.max(2));
    let m = rng.gen_range(1..=max_designers.max(1));
    let efforts = (0..n).map(|_| log_uniform(rng, -0.3, 0.3)).collect();
    let budgets = (0..m).map(|_| log_uniform(rng, -0.3, 0.3)).collect();
    Instance::new(efforts, budgets)
}

/// Like [`random_stage_instance`] but resampled until no contestant holds
/// more than half the total effort.
pub fn random_dpm_instance(
    rng: &mut ChaCha8Rng,
    max_contestants: usize,
    max_designers: usize,
) -> Instance {
    loop {
        let instance = random_stage_instance(rng, max_contestants, max_designers);
        let total: f64 = instance.contestant_efforts.iter().sum();
        let max = instance
            .contestant_efforts
            .iter()
            .fold(0.0f64, |m, t| m.max(*t));
        if max <= total / 2.0 {
            return instance;
        }
    }
}
