//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line. Run with `cargo test -p plc-cli --test
//! acceptance -- --nocapture` to see the lines.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;

use plc_cli::commands::{solve_random_batch, SolverFlags};
use plc_cli::randgen::{self, rng_from_seed};
use plc_cli::repro;
use plc_core::dpm::{build_dpm_spe, equilibrium_utilities};
use plc_core::emv::{
    box_bounds, hat_t, regularization_vector, solve_emv, solve_emv_observed, InitMode,
    SolverConfig, StepMode,
};
use plc_core::ipm::{build_wde, lex_greater};
use plc_core::model::{csf_f, ContestConfig, Instance, MultiplierVector};
use plc_core::numeric::ksum;
use plc_core::oracle::{best_response, demand_jacobian, marginal_payoff};

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

fn within_budget(start: Instant, budget: Duration, label: &str) -> String {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= budget,
        "{label} took {elapsed:?}, budget {budget:?}"
    );
    format!(
        "{:.2}s of {:.0}s budget",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    )
}

#[test]
fn criterion_01_bias_counterexample_reproduction() {
    let start = Instant::now();
    let run = repro::repro_bias_counterexample().unwrap();
    let timing = within_budget(start, Duration::from_secs(10), "thm4.4 repro");
    for check in &run.outcome.checks {
        assert!(
            check.pass,
            "{}: got {:.17e} want {:.17e}",
            check.name, check.got, check.want
        );
    }
    report(
        "criterion 1 (indivisible bias counterexample)",
        run.outcome.passed,
        &format!("{} checks, {timing}", run.outcome.checks.len()),
    );
}

#[test]
fn criterion_02_divisible_counterexample_reproduction() {
    let start = Instant::now();
    let run = repro::repro_divisible_counterexample().unwrap();
    let timing = within_budget(start, Duration::from_secs(30), "thm5.1 repro");
    for check in &run.outcome.checks {
        assert!(
            check.pass,
            "{}: got {:.17e} want {:.17e}",
            check.name, check.got, check.want
        );
    }
    report(
        "criterion 2 (divisible bias counterexample)",
        run.outcome.passed,
        &format!("{} checks, {timing}", run.outcome.checks.len()),
    );
}

#[test]
fn criterion_03_no_equilibrium_reproduction() {
    let start = Instant::now();
    let run = repro::repro_no_spe().unwrap();
    let timing = within_budget(start, Duration::from_secs(5), "thm4.1 repro");
    for check in &run.outcome.checks {
        assert!(
            check.pass,
            "{}: got {:.17e} want {:.17e}",
            check.name, check.got, check.want
        );
    }
    report(
        "criterion 3 (no designer equilibrium)",
        run.outcome.passed,
        &format!("{} checks, {timing}", run.outcome.checks.len()),
    );
}

const RANDOM_SUITE_SEED: u64 = 20240817;

#[test]
fn criterion_04_epsilon_equilibrium_guarantee() {
    let start = Instant::now();
    let flags = SolverFlags {
        epsilon: 1e-3,
        ..Default::default()
    };
    let lines = solve_random_batch(50, RANDOM_SUITE_SEED, &flags);
    let timing = within_budget(start, Duration::from_secs(120), "random suite");
    let mut worst: f64 = 1.0;
    for line in &lines {
        assert!(
            line.pass,
            "instance {} failed: ratio {:?} error {:?}",
            line.index, line.min_ratio, line.error
        );
        worst = worst.min(line.min_ratio.unwrap());
    }
    assert!(worst >= 1.0 - 1e-3);
    report(
        "criterion 4 (epsilon-equilibrium guarantee)",
        true,
        &format!("50 instances, worst ratio {worst:.9}, {timing}"),
    );
}

#[test]
fn criterion_05_uniqueness_across_inits() {
    let eps = 1e-3;
    let eps_prime = eps / 4.0;
    let mut rng = rng_from_seed(RANDOM_SUITE_SEED);
    let mut worst: f64 = 0.0;
    for index in 0..50 {
        let (instance, profile) = randgen::random_instance(&mut rng);
        let contests = profile.all_contests();
        let ones = SolverConfig {
            epsilon: eps,
            step_mode: StepMode::Adaptive,
            max_iterations: 100_000,
            init_mode: InitMode::Ones,
        };
        let scale = SolverConfig {
            init_mode: InitMode::ScaleAware,
            ..ones.clone()
        };
        let a = solve_emv(&instance, &contests, &ones, None).unwrap();
        let b = solve_emv(&instance, &contests, &scale, None).unwrap();
        for (x, y) in a.lambda.values().iter().zip(b.lambda.values()) {
            let denom = x.abs().max(y.abs());
            if denom > 0.0 {
                let rel = (x - y).abs() / denom;
                worst = worst.max(rel);
                assert!(
                    rel <= 10.0 * eps_prime,
                    "instance {index}: init modes disagree by {rel:.3e} ({x} vs {y})"
                );
            }
        }
    }
    report(
        "criterion 5 (uniqueness across initializations)",
        true,
        &format!(
            "50 instances, worst entrywise gap {worst:.3e} <= {:.1e}",
            10.0 * eps_prime
        ),
    );
}

#[test]
fn criterion_06_monotonicity_and_jacobian() {
    use plc_core::oracle::monotonicity_probe;
    let mut rng = rng_from_seed(0x6215);
    let mut worst_ip: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (instance, profile) = randgen::random_instance(&mut rng);
        let contests = profile.all_contests();
        let n = instance.contestants();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            MultiplierVector::new(
                (0..n)
                    .map(|_| 10f64.powf(rng.gen_range(-2.0..2.0)))
                    .collect(),
            )
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let ip = monotonicity_probe(&instance, &contests, &a, &b).unwrap();
        let mut scale = 0.0f64;
        for i in 0..n {
            let d = (b.get(i) - a.get(i)).abs();
            scale += d
                * (hat_t(&a, &contests, i).unwrap().abs() + hat_t(&b, &contests, i).unwrap().abs());
        }
        let bound = 1e-12 * scale.max(1e-300);
        assert!(ip <= bound, "inner product {ip} above {bound}");
        worst_ip = worst_ip.max(ip - bound);
    }

    // Jacobian antisymmetry (exact) and finite-difference agreement.
    let mut checked = 0usize;
    for _ in 0..60 {
        let (instance, profile) = randgen::random_instance(&mut rng);
        let contests = profile.all_contests();
        let n = instance.contestants();
        let lambda = MultiplierVector::new(
            (0..n)
                .map(|_| 10f64.powf(rng.gen_range(-1.0..1.0)))
                .collect(),
        );
        let jac = demand_jacobian(&instance, &contests, &lambda).unwrap();
        for i in 0..n {
            assert!(jac[i][i] <= 0.0);
            for k in 0..n {
                if i != k {
                    assert_eq!(jac[i][k], -jac[k][i], "antisymmetry must be exact");
                }
            }
        }
        for k in 0..n {
            let h = 1e-6 * lambda.get(k);
            let mut up = lambda.clone();
            up.0[k] += h;
            let mut down = lambda.clone();
            down.0[k] -= h;
            for i in 0..n {
                let fd = (hat_t(&up, &contests, i).unwrap() - hat_t(&down, &contests, i).unwrap())
                    / (2.0 * h);
                let want = jac[i][k];
                let scale = want.abs().max(fd.abs());
                if scale > 1e-9 {
                    assert!(
                        (fd - want).abs() <= 1e-5 * scale,
                        "J[{i}][{k}] {want} vs finite difference {fd}"
                    );
                    checked += 1;
                }
            }
        }
    }
    report(
        "criterion 6 (monotone demand and Jacobian)",
        true,
        &format!("1000 probe pairs, {checked} finite-difference entries"),
    );
}

#[test]
fn criterion_07_wde_construction() {
    let mut rng = rng_from_seed(0x7315);
    let grid: Vec<f64> = (0..21).map(|k| 10f64.powf(-2.0 + 0.2 * k as f64)).collect();
    let config = SolverConfig {
        epsilon: 1e-11,
        ..Default::default()
    };
    let mut total_steps = 0usize;
    let mut worst_improvement: f64 = f64::NEG_INFINITY;
    for index in 0..20 {
        let instance = randgen::random_stage_instance(&mut rng, 6, 4);
        let out = build_wde(&instance, &grid, &config).unwrap();
        assert!(out.pne.certified, "instance {index}: pair deviation found");
        for step in &out.pne.trace {
            assert!(
                lex_greater(&step.potential_after, &step.potential_before),
                "instance {index}: potential did not increase"
            );
        }
        total_steps += out.pne.trace.len();
        assert!(out.emv_check.certified);
        assert!(out.probability_gap <= 1e-15);
        for summary in &out.bias_deviations {
            worst_improvement = worst_improvement.max(summary.improvement);
            assert!(
                summary.improvement <= 1e-9,
                "instance {index}, designer {}: bias deviation improves by {:.3e}",
                summary.designer,
                summary.improvement
            );
        }
    }
    report(
        "criterion 7 (weak designer equilibrium)",
        true,
        &format!(
            "20 instances, {total_steps} improvement steps, max grid improvement {worst_improvement:+.3e}"
        ),
    );
}

#[test]
fn criterion_08_dpm_construction() {
    let mut rng = rng_from_seed(0x8472);
    for index in 0..20 {
        let instance = randgen::random_dpm_instance(&mut rng, 6, 4);
        let out = build_dpm_spe(&instance).unwrap();
        assert!(
            out.emv_check.certified,
            "instance {index}: {:?}",
            out.emv_check.violations
        );
        assert!(
            out.proportional.pass,
            "instance {index}: {:?} {:?}",
            out.proportional.prize_share_violations, out.proportional.probability_violations
        );
        let (want_contestants, want_designers) = equilibrium_utilities(&instance);
        for (got, want) in out.contestant_utilities.iter().zip(&want_contestants) {
            assert!(
                (got - want).abs() <= 1e-10 * want,
                "instance {index}: contestant utility {got} vs {want}"
            );
        }
        for (got, want) in out.designer_utilities.iter().zip(&want_designers) {
            assert!(
                (got - want).abs() <= 1e-10 * want,
                "instance {index}: designer utility {got} vs {want}"
            );
        }
        for (j, held) in out.profile.contests.iter().enumerate() {
            let spent = ksum(held.iter().map(|c| c.reward));
            assert_eq!(
                spent, instance.designer_budgets[j],
                "instance {index}: designer {j} budget not exactly exhausted"
            );
        }
    }
    report(
        "criterion 8 (divisible-prize designer equilibrium)",
        true,
        "20 instances: proportional at 1e-12, utilities at 1e-10, budgets exact",
    );
}

#[test]
fn criterion_09_oracle_soundness() {
    let mut rng = rng_from_seed(0x9123);
    let mut grid_points = 0usize;
    let mut solved = 0usize;
    while solved < 25 {
        // Small sub-problems: n <= 4, contests <= 5.
        let n = rng.gen_range(2..=4usize);
        let k = rng.gen_range(1..=5usize);
        let efforts: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.gen_range(-1.0..1.0)))
            .collect();
        let budget_holder = Instance::new(efforts, vec![1e9]);
        let mut contests = Vec::new();
        for c in 0..k {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            contests.push(ContestConfig::new(
                format!("g{c}"),
                0,
                [a, b],
                10f64.powf(rng.gen_range(-1.0..1.0)),
                [
                    10f64.powf(rng.gen_range(-1.0..1.0)),
                    10f64.powf(rng.gen_range(-1.0..1.0)),
                ],
            ));
        }
        let i = rng.gen_range(0..n);
        let mine: Vec<ContestConfig> = contests.iter().filter(|c| c.involves(i)).cloned().collect();
        if mine.is_empty() {
            continue;
        }
        solved += 1;
        let mut opp = BTreeMap::new();
        for c in &mine {
            opp.insert(c.id.clone(), 10f64.powf(rng.gen_range(-1.0..1.0)));
        }
        let br = best_response(&budget_holder, &contests, i, &opp).unwrap();
        let effort = br.effort.expect("opponents all positive");
        let mu = br.multiplier.unwrap();

        // KKT equal-marginal certificate.
        for c in &mine {
            let pos = c.position(i).unwrap();
            let y = c.biases[1 - pos] * opp[&c.id];
            let x = effort[&c.id];
            let marginal = marginal_payoff(c.reward, c.biases[pos], x, y);
            if x > 1e-12 * budget_holder.contestant_efforts[i] {
                assert!(
                    (marginal - mu).abs() <= 1e-8 * mu,
                    "marginal {marginal} vs mu {mu}"
                );
            } else {
                assert!(marginal <= mu * (1.0 + 1e-8));
            }
        }

        // 1e4 random feasible points never beat the supremum.
        let budget = budget_holder.contestant_efforts[i];
        for _ in 0..10_000 {
            let mut weights: Vec<f64> = (0..mine.len()).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let spend: f64 = rng.gen::<f64>();
            let mut value = 0.0;
            for (c, w) in mine.iter().zip(&mut weights) {
                *w *= budget * spend / total;
                let pos = c.position(i).unwrap();
                let y = c.biases[1 - pos] * opp[&c.id];
                value += c.reward * csf_f(c.biases[pos] * *w, y).unwrap();
            }
            grid_points += 1;
            assert!(
                br.sup_value >= value - 1e-9 * value.abs().max(1.0),
                "grid point {value} beats supremum {}",
                br.sup_value
            );
        }
    }
    report(
        "criterion 9 (best-response oracle soundness)",
        true,
        &format!("{grid_points} grid points dominated, KKT certified at 1e-8"),
    );
}

#[test]
fn criterion_10_guaranteed_mode_box_invariant() {
    let mut rng = rng_from_seed(0xa001);
    let mut total_iterates = 0usize;
    for index in 0..10 {
        // Small, moderately scaled instances.
        let n = rng.gen_range(2..=4usize);
        let k = rng.gen_range(1..=4usize);
        let efforts: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.gen_range(-0.3..0.3)))
            .collect();
        let mut contests = Vec::new();
        for c in 0..k {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            contests.push(ContestConfig::new(
                format!("b{c}"),
                0,
                [a, b],
                10f64.powf(rng.gen_range(-0.3..0.3)),
                [
                    10f64.powf(rng.gen_range(-0.3..0.3)),
                    10f64.powf(rng.gen_range(-0.3..0.3)),
                ],
            ));
        }
        let instance = Instance::new(efforts, vec![1e9]);
        let config = SolverConfig {
            epsilon: 0.04,
            step_mode: StepMode::Guaranteed,
            max_iterations: 2000,
            init_mode: InitMode::Ones,
        };
        let a = regularization_vector(&instance, &contests, config.epsilon_prime()).unwrap();
        let (lower, upper) = box_bounds(&instance, &contests, &a).unwrap();
        let active: Vec<bool> = (0..n)
            .map(|i| contests.iter().any(|c| c.involves(i)))
            .collect();
        let mut prev_sumsq: Option<f64> = None;
        let mut iterates = 0usize;
        let mut observer = |lambda: &[f64], z: &[f64]| {
            iterates += 1;
            let mut sumsq = 0.0;
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                assert!(
                    lambda[i] >= lower[i] && lambda[i] <= upper[i],
                    "instance {index}: iterate {} outside [{}, {}]",
                    lambda[i],
                    lower[i],
                    upper[i]
                );
                sumsq += z[i] * z[i];
            }
            if let Some(prev) = prev_sumsq {
                assert!(
                    sumsq <= prev,
                    "instance {index}: residual norm rose {prev} -> {sumsq}"
                );
            }
            prev_sumsq = Some(sumsq);
        };
        // Convergence is not required here; the box and descent invariants
        // must hold on whatever prefix of the iteration we see.
        match solve_emv_observed(&instance, &contests, &config, None, &mut observer) {
            Ok(_) => {}
            Err(plc_core::Error::NonConvergence { .. }) => {}
            Err(e) => panic!("unexpected failure: {e}"),
        }
        total_iterates += iterates;
    }
    report(
        "criterion 10 (guaranteed-mode box invariant)",
        true,
        &format!(
            "10 instances, {total_iterates} iterates inside the box with monotone residual norm"
        ),
    );
}
