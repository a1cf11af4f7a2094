//! Property tests for the closed forms and oracles: probability partition,
//! homogeneity, the monotone demand inequality, Jacobian consistency, and
//! best-response optimality on random instances.

use std::collections::BTreeMap;

use proptest::prelude::*;

use plc_core::emv::{hat_p_q, hat_t, hat_x, solve_emv, InitMode, SolverConfig, StepMode};
use plc_core::model::{csf_f, ContestConfig, Instance, MultiplierVector};
use plc_core::oracle::{best_response, demand_jacobian, marginal_payoff, monotonicity_probe};

fn pos() -> impl Strategy<Value = f64> {
    // Log-uniform over roughly four decades.
    (-2.0..2.0f64).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn csf_partition_and_scale(x in 0.0..1e6f64, y in 0.0..1e6f64, k in -40i32..40) {
        let p = csf_f(x, y).unwrap();
        let q = csf_f(y, x).unwrap();
        prop_assert_eq!(p + q, 1.0);
        prop_assert!((0.0..=1.0).contains(&p));
        // Powers of two scale without rounding, so invariance is exact.
        let c = (2.0f64).powi(k);
        prop_assert_eq!(csf_f(c * x, c * y).unwrap(), p);
    }

    #[test]
    fn csf_scale_invariance_general(x in 1e-3..1e3f64, y in 1e-3..1e3f64, c in 1e-3..1e3f64) {
        let p = csf_f(x, y).unwrap();
        let pc = csf_f(c * x, c * y).unwrap();
        prop_assert!((p - pc).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn contest_identities(
        reward in pos(),
        b0 in pos(),
        b1 in pos(),
        l0 in pos(),
        l1 in pos(),
        c in pos(),
    ) {
        let contest = ContestConfig::new("C", 0, [0, 1], reward, [b0, b1]);
        let lambda = MultiplierVector::new(vec![l0, l1]);
        let x0 = hat_x(&lambda, &contest, 0).unwrap();
        let x1 = hat_x(&lambda, &contest, 1).unwrap();
        let ([p0, p1], q) = hat_p_q(&lambda, &contest).unwrap();

        // Antisymmetric product identity: l_i x_i = l_opp x_opp = R Q.
        let scale = (l0 * x0).abs().max(1e-300);
        prop_assert!((l0 * x0 - l1 * x1).abs() <= 1e-12 * scale);
        prop_assert!((l0 * x0 - reward * q).abs() <= 1e-12 * scale.max(reward * q));

        // Probability partition and the Q bound.
        prop_assert_eq!(p0 + p1, 1.0);
        prop_assert!(q <= 0.25 + 1e-16);

        // Homogeneity: probabilities invariant, efforts scale by 1/c.
        let scaled = lambda.scaled(c);
        let ([p0c, _], qc) = hat_p_q(&scaled, &contest).unwrap();
        prop_assert!((p0 - p0c).abs() <= 1e-12);
        prop_assert!((q - qc).abs() <= 1e-12);
        let x0c = hat_x(&scaled, &contest, 0).unwrap();
        prop_assert!((x0c * c - x0).abs() <= 1e-10 * x0.max(1e-300));
    }

    #[test]
    fn equal_bias_aggregate(reward in pos(), bias in pos(), l0 in pos(), l1 in pos()) {
        let contest = ContestConfig::new("C", 0, [0, 1], reward, [bias, bias]);
        let lambda = MultiplierVector::new(vec![l0, l1]);
        let x0 = hat_x(&lambda, &contest, 0).unwrap();
        let x1 = hat_x(&lambda, &contest, 1).unwrap();
        let want = reward / (l0 + l1);
        prop_assert!((x0 + x1 - want).abs() <= 1e-12 * want);
    }
}

/// Deterministic xorshift generator so the random-instance suites are
/// reproducible without extra dependencies in the test.
struct Rng(u64);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(seed.max(1))
    }

    fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn log_uniform(&mut self, lo_exp: f64, hi_exp: f64) -> f64 {
        10f64.powf(lo_exp + (hi_exp - lo_exp) * self.uniform())
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

fn random_instance(rng: &mut Rng) -> (Instance, Vec<ContestConfig>) {
    let n = 2 + rng.below(4);
    let m = 1 + rng.below(4);
    let k = 1 + rng.below(8);
    let efforts: Vec<f64> = (0..n).map(|_| rng.log_uniform(-2.0, 2.0)).collect();
    let mut contests = Vec::new();
    for c in 0..k {
        let a = rng.below(n);
        let mut b = rng.below(n);
        while b == a {
            b = rng.below(n);
        }
        contests.push(ContestConfig::new(
            format!("r{c}"),
            rng.below(m),
            [a, b],
            rng.log_uniform(-2.0, 2.0),
            [rng.log_uniform(-2.0, 2.0), rng.log_uniform(-2.0, 2.0)],
        ));
    }
    let mut budgets = vec![0.0; m];
    for c in &contests {
        budgets[c.designer] += c.reward;
    }
    for b in &mut budgets {
        if *b == 0.0 {
            *b = 1.0;
        }
    }
    (Instance::new(efforts, budgets), contests)
}

fn random_valid_lambda(rng: &mut Rng, n: usize) -> MultiplierVector {
    MultiplierVector::new((0..n).map(|_| rng.log_uniform(-2.0, 2.0)).collect())
}

#[test]
fn monotone_demand_inequality_random_pairs() {
    let mut rng = Rng::new(0x5eed);
    for _ in 0..1000 {
        let (instance, contests) = random_instance(&mut rng);
        let n = instance.contestants();
        let a = random_valid_lambda(&mut rng, n);
        let b = random_valid_lambda(&mut rng, n);
        let ip = monotonicity_probe(&instance, &contests, &a, &b).unwrap();
        let mut scale = 0.0f64;
        for i in 0..n {
            let da = (b.get(i) - a.get(i)).abs();
            let ta = hat_t(&a, &contests, i).unwrap().abs();
            let tb = hat_t(&b, &contests, i).unwrap().abs();
            scale += da * (ta + tb);
        }
        assert!(
            ip <= 1e-12 * scale.max(1e-300),
            "inner product {ip} above tolerance at scale {scale}"
        );
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = Rng::new(0xd1ff);
    for _ in 0..50 {
        let (instance, contests) = random_instance(&mut rng);
        let n = instance.contestants();
        // Moderate multipliers keep the difference quotient well scaled.
        let lambda = MultiplierVector::new((0..n).map(|_| rng.log_uniform(-1.0, 1.0)).collect());
        let jac = demand_jacobian(&instance, &contests, &lambda).unwrap();
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
                        "J[{i}][{k}] = {want}, finite difference {fd}"
                    );
                }
            }
        }
    }
}

#[test]
fn monotone_probe_agrees_with_quadrature() {
    // The probe equals the line integral of v' J v along the segment.
    let mut rng = Rng::new(0xacc0);
    for _ in 0..20 {
        let (instance, contests) = random_instance(&mut rng);
        let n = instance.contestants();
        let a = MultiplierVector::new((0..n).map(|_| rng.log_uniform(-0.5, 0.5)).collect());
        let b = MultiplierVector::new((0..n).map(|_| rng.log_uniform(-0.5, 0.5)).collect());
        let probe = monotonicity_probe(&instance, &contests, &a, &b).unwrap();
        let v: Vec<f64> = (0..n).map(|i| b.get(i) - a.get(i)).collect();
        let steps = 2000;
        let mut integral = 0.0;
        for s in 0..steps {
            let t = (s as f64 + 0.5) / steps as f64;
            let point = MultiplierVector::new((0..n).map(|i| a.get(i) + t * v[i]).collect());
            let jac = demand_jacobian(&instance, &contests, &point).unwrap();
            let mut quad = 0.0;
            for i in 0..n {
                for k in 0..n {
                    quad += v[i] * jac[i][k] * v[k];
                }
            }
            integral += quad / steps as f64;
        }
        let scale = probe.abs().max(integral.abs()).max(1e-12);
        assert!(
            (probe - integral).abs() <= 1e-3 * scale,
            "probe {probe} vs quadrature {integral}"
        );
        assert!(integral <= 1e-12 * scale);
    }
}

#[test]
fn best_response_dominates_random_grid() {
    let mut rng = Rng::new(0xbeef);
    for _ in 0..25 {
        // Small sub-problems: n <= 4, contests <= 5.
        let n = 2 + rng.below(3);
        let k = 1 + rng.below(5);
        let efforts: Vec<f64> = (0..n).map(|_| rng.log_uniform(-1.0, 1.0)).collect();
        let mut contests = Vec::new();
        for c in 0..k {
            let a = rng.below(n);
            let mut b = rng.below(n);
            while b == a {
                b = rng.below(n);
            }
            contests.push(ContestConfig::new(
                format!("g{c}"),
                0,
                [a, b],
                rng.log_uniform(-1.0, 1.0),
                [rng.log_uniform(-1.0, 1.0), rng.log_uniform(-1.0, 1.0)],
            ));
        }
        let instance = Instance::new(efforts, vec![1e9]);
        let i = rng.below(n);
        let mine: Vec<ContestConfig> = contests.iter().filter(|c| c.involves(i)).cloned().collect();
        if mine.is_empty() {
            continue;
        }
        let mut opp = BTreeMap::new();
        for c in &mine {
            opp.insert(c.id.clone(), rng.log_uniform(-1.0, 1.0));
        }
        let br = best_response(&instance, &contests, i, &opp).unwrap();
        let effort = br.effort.expect("all opponents positive");

        // KKT certificate: equal marginals on supported contests, no larger
        // on the others.
        if let Some(mu) = br.multiplier {
            for c in &mine {
                let pos = c.position(i).unwrap();
                let y = c.biases[1 - pos] * opp[&c.id];
                let x = effort[&c.id];
                let marginal = marginal_payoff(c.reward, c.biases[pos], x, y);
                if x > 1e-12 * instance.contestant_efforts[i] {
                    assert!(
                        (marginal - mu).abs() <= 1e-8 * mu,
                        "supported marginal {marginal} vs mu {mu}"
                    );
                } else {
                    assert!(marginal <= mu * (1.0 + 1e-8));
                }
            }
        }

        // Grid dominance over random feasible deviations.
        let budget = instance.contestant_efforts[i];
        let value_of = |x: &[f64]| -> f64 {
            let mut v = 0.0;
            for (c, xi) in mine.iter().zip(x) {
                let pos = c.position(i).unwrap();
                let y = c.biases[1 - pos] * opp[&c.id];
                v += c.reward * csf_f(c.biases[pos] * xi, y).unwrap();
            }
            v
        };
        for _ in 0..400 {
            let mut weights: Vec<f64> = (0..mine.len()).map(|_| rng.uniform()).collect();
            let total: f64 = weights.iter().sum();
            let spend = rng.uniform();
            for w in &mut weights {
                *w *= budget * spend / total.max(1e-300);
            }
            let val = value_of(&weights);
            assert!(
                br.sup_value >= val - 1e-9 * val.abs().max(1.0),
                "grid point beats best response: {val} > {}",
                br.sup_value
            );
        }

        // Budget exhaustion at the attained optimum.
        let spent: f64 = effort.values().sum();
        assert!((spent - budget).abs() <= 1e-9 * budget);
    }
}

#[test]
fn solver_certified_against_regularized_conditions() {
    use plc_core::emv::check_emv_regularized;
    let mut rng = Rng::new(0xcafe);
    for _ in 0..40 {
        let (instance, contests) = random_instance(&mut rng);
        let config = SolverConfig::with_epsilon(1e-6);
        let trace = solve_emv(&instance, &contests, &config, None).unwrap();
        let check = check_emv_regularized(
            &instance,
            &contests,
            &trace.lambda,
            &trace.a_vector,
            config.epsilon_prime(),
        )
        .unwrap();
        assert!(check.certified, "{:?}", check.violations);
    }
}

#[test]
fn init_modes_agree_on_moderate_instances() {
    let mut rng = Rng::new(0x1117);
    for _ in 0..30 {
        let (instance, contests) = random_instance(&mut rng);
        let eps = 1e-6;
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
            if denom > 1e-200 {
                assert!(
                    (x - y).abs() / denom <= 10.0 * eps / 4.0,
                    "init modes disagree: {x} vs {y}"
                );
            }
        }
    }
}
