//! Indivisible-prize designer stage: balancing biases, bias assignment for
//! arbitrary target winning probabilities, the variant weighted congestion
//! game over participant pairs, and weak-designer-equilibrium assembly.

use serde::{Deserialize, Serialize};

use crate::emv::{check_emv, hat_p_q, solve_emv, EmvCheck, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{
    utilities, ContestConfig, ContestId, DesignerProfile, EffortProfile, Instance, MultiplierVector,
};
use crate::numeric::KahanSum;
use crate::oracle::{designer_deviation_search, DeviationGrid};

/// First-stage choice of a designer: prize and participant pair, biases
/// still unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstStageChoice {
    pub reward: f64,
    pub participants: [usize; 2],
}

/// The full first-stage strategy profile, one choice per designer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstStageStrategy {
    pub choices: Vec<FirstStageChoice>,
}

/// Balanced second-substage equilibrium: contests with normalized biases,
/// the closed-form multiplier vector, and the proportional efforts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalancedEquilibrium {
    pub contests: Vec<ContestConfig>,
    pub lambda: MultiplierVector,
    pub efforts: EffortProfile,
}

/// Balancing biases for a fixed first-stage profile: every contest ends at
/// winning probability one half, and each contestant splits her budget in
/// proportion to the prizes inviting her.
///
/// Closed forms: `lambda_i = sum of rewards over A(i) / (4 T_i)`, biases
/// `alpha_i = lambda_i / (lambda_i + lambda_opp)`, efforts
/// `x_{i,C} = T_i R_C / sum of rewards over A(i)`.
pub fn balancing_biases(
    instance: &Instance,
    first_stage: &FirstStageStrategy,
) -> Result<BalancedEquilibrium> {
    let n = instance.contestants();
    if first_stage.choices.len() != instance.designers() {
        return Err(Error::Domain(format!(
            "first stage lists {} designers, instance has {}",
            first_stage.choices.len(),
            instance.designers()
        )));
    }
    for (j, choice) in first_stage.choices.iter().enumerate() {
        let [a, b] = choice.participants;
        if a == b || a >= n || b >= n {
            return Err(Error::Domain(format!(
                "designer {j}: invalid participant pair {:?}",
                choice.participants
            )));
        }
        if !(choice.reward > 0.0) || choice.reward > instance.designer_budgets[j] * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "designer {j}: reward {} outside (0, budget]",
                choice.reward
            )));
        }
    }

    let mut reward_sum = vec![KahanSum::new(); n];
    for choice in &first_stage.choices {
        for &p in &choice.participants {
            reward_sum[p].add(choice.reward);
        }
    }
    let lambda: Vec<f64> = (0..n)
        .map(|i| reward_sum[i].value() / (4.0 * instance.contestant_efforts[i]))
        .collect();

    let mut contests = Vec::new();
    let mut efforts = EffortProfile::new();
    for (j, choice) in first_stage.choices.iter().enumerate() {
        let [a, b] = choice.participants;
        let (la, lb) = (lambda[a], lambda[b]);
        let denom = la + lb;
        let contest = ContestConfig::new(
            format!("c{j}"),
            j,
            choice.participants,
            choice.reward,
            [la / denom, lb / denom],
        );
        for &p in &choice.participants {
            let share = instance.contestant_efforts[p] * choice.reward / reward_sum[p].value();
            efforts.set(p, &contest.id, share);
        }
        contests.push(contest);
    }
    Ok(BalancedEquilibrium {
        contests,
        lambda: MultiplierVector::new(lambda),
        efforts,
    })
}

/// A contest whose biases are still free, with the target equilibrium
/// winning probabilities of its two participants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableContest {
    pub id: ContestId,
    pub designer: usize,
    pub participants: [usize; 2],
    pub reward: f64,
    /// Target winning probabilities, aligned with `participants`; both in
    /// (0,1) and summing to one.
    pub targets: [f64; 2],
}

/// Bias assignment realizing target probabilities on the variable contests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasAssignment {
    /// The variable contests with their normalized biases filled in.
    pub contests: Vec<ContestConfig>,
    /// Multiplier vector of the mixed fixed/regularized system.
    pub lambda: MultiplierVector,
}

/// Assigns biases to the variable contests so that the equilibrium winning
/// probabilities hit the targets, leaving the fixed contests untouched.
/// The variable contests enter the solve through the regularization
/// `a_i = sum R_C ptilde_i ptilde_opp`; biases come out normalized to sum
/// one per contest.
pub fn biases_for_targets(
    instance: &Instance,
    fixed_contests: &[ContestConfig],
    variable_contests: &[VariableContest],
    config: &SolverConfig,
) -> Result<BiasAssignment> {
    let n = instance.contestants();
    let mut a = vec![0.0; n];
    for vc in variable_contests {
        let [p, q] = vc.participants;
        if p == q || p >= n || q >= n {
            return Err(Error::Domain(format!(
                "contest {}: invalid participant pair",
                vc.id
            )));
        }
        let sum = vc.targets[0] + vc.targets[1];
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "contest {}: targets must sum to one, got {sum}",
                vc.id
            )));
        }
        for (&t, &who) in vc.targets.iter().zip(&vc.participants) {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::TargetOutOfRange {
                    contestant: who,
                    contest: vc.id.clone(),
                    value: t,
                });
            }
        }
        let q_c = vc.targets[0] * vc.targets[1];
        a[p] += vc.reward * q_c;
        a[q] += vc.reward * q_c;
    }
    let trace = solve_emv(instance, fixed_contests, config, Some(&a))?;
    let lambda = trace.lambda;
    let contests = variable_contests
        .iter()
        .map(|vc| {
            let [p, q] = vc.participants;
            let wp = vc.targets[0] * lambda.get(p);
            let wq = vc.targets[1] * lambda.get(q);
            ContestConfig::new(
                vc.id.clone(),
                vc.designer,
                vc.participants,
                vc.reward,
                [wp / (wp + wq), wq / (wp + wq)],
            )
        })
        .collect();
    Ok(BiasAssignment { contests, lambda })
}

/// State of the variant weighted congestion game: designers are agents
/// weighted by budget, contestants are resources valued by effort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CongestionState {
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub strategies: Vec<[usize; 2]>,
}

impl CongestionState {
    /// Load on resource `i`: total weight of agents using it.
    pub fn load(&self, i: usize) -> f64 {
        let mut acc = KahanSum::new();
        for (j, s) in self.strategies.iter().enumerate() {
            if s.contains(&i) {
                acc.add(self.weights[j]);
            }
        }
        acc.value()
    }

    fn load_excluding(&self, i: usize, agent: usize) -> f64 {
        let mut acc = KahanSum::new();
        for (j, s) in self.strategies.iter().enumerate() {
            if j != agent && s.contains(&i) {
                acc.add(self.weights[j]);
            }
        }
        acc.value()
    }

    /// Reward agent `j` collects from resource `i` if she uses it.
    pub fn prospective_reward(&self, i: usize, agent: usize) -> f64 {
        self.values[i] / (self.weights[agent] + self.load_excluding(i, agent))
    }

    /// Total reward of agent `j` under the current strategies.
    pub fn agent_utility(&self, j: usize) -> f64 {
        let [a, b] = self.strategies[j];
        self.prospective_reward(a, j) + self.prospective_reward(b, j)
    }

    /// Rewards of all resources sorted ascending; unused resources count
    /// as infinite.
    pub fn potential(&self) -> Vec<f64> {
        let n = self.values.len();
        let mut rewards: Vec<f64> = (0..n)
            .map(|i| {
                let c = self.load(i);
                if c > 0.0 {
                    self.values[i] / c
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        rewards.sort_by(|x, y| x.partial_cmp(y).unwrap());
        rewards
    }
}

/// Lexicographic comparison of two potential vectors.
pub fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    false
}

/// Exact best response of one agent: the two resources with the highest
/// prospective reward, ties broken by lowest index. The agent's utility is
/// a sum of two independent per-resource terms, so this maximizes it.
pub fn congestion_best_response(state: &CongestionState, j: usize) -> [usize; 2] {
    let n = state.values.len();
    debug_assert!(n >= 2);
    let mut first = 0usize;
    let mut first_r = state.prospective_reward(0, j);
    for i in 1..n {
        let r = state.prospective_reward(i, j);
        if r > first_r {
            first = i;
            first_r = r;
        }
    }
    let mut second = usize::MAX;
    let mut second_r = f64::NEG_INFINITY;
    for i in 0..n {
        if i == first {
            continue;
        }
        let r = state.prospective_reward(i, j);
        if r > second_r {
            second = i;
            second_r = r;
        }
    }
    let mut pair = [first, second];
    pair.sort_unstable();
    pair
}

/// One accepted improvement move of the best-response dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementStep {
    pub agent: usize,
    pub from: [usize; 2],
    pub to: [usize; 2],
    pub utility_before: f64,
    pub utility_after: f64,
    pub potential_before: Vec<f64>,
    pub potential_after: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PneOutcome {
    pub state: CongestionState,
    pub trace: Vec<ImprovementStep>,
    /// Exhaustive pair-deviation check at termination.
    pub certified: bool,
}

/// Iterated best response from the all-`{0,1}` profile, agents in index
/// order, until no agent improves. The sorted reward vector strictly
/// increases lexicographically at every accepted move, so the dynamics
/// terminate; the result is certified by checking every pair deviation.
pub fn first_substage_pne(instance: &Instance) -> Result<PneOutcome> {
    let n = instance.contestants();
    let m = instance.designers();
    if n < 2 {
        return Err(Error::Domain("need at least two contestants".to_owned()));
    }
    let mut state = CongestionState {
        weights: instance.designer_budgets.clone(),
        values: instance.contestant_efforts.clone(),
        strategies: vec![[0, 1]; m],
    };
    let mut trace = Vec::new();
    let bound = 1000 + 64 * m * n * n;
    let mut steps = 0usize;
    loop {
        let mut moved = false;
        for j in 0..m {
            let cur = state.agent_utility(j);
            let br = congestion_best_response(&state, j);
            if br == state.strategies[j] {
                continue;
            }
            let mut candidate = state.clone();
            candidate.strategies[j] = br;
            let new = candidate.agent_utility(j);
            if new > cur {
                let step = ImprovementStep {
                    agent: j,
                    from: state.strategies[j],
                    to: br,
                    utility_before: cur,
                    utility_after: new,
                    potential_before: state.potential(),
                    potential_after: candidate.potential(),
                };
                state = candidate;
                trace.push(step);
                moved = true;
                steps += 1;
                if steps > bound {
                    return Err(Error::ImprovementBound(bound));
                }
            }
        }
        if !moved {
            break;
        }
    }
    let mut certified = true;
    for j in 0..m {
        let cur = state.agent_utility(j);
        for a in 0..n {
            for b in a + 1..n {
                let mut candidate = state.clone();
                candidate.strategies[j] = [a, b];
                if candidate.agent_utility(j) > cur + 1e-12 {
                    certified = false;
                }
            }
        }
    }
    Ok(PneOutcome {
        state,
        trace,
        certified,
    })
}

/// Second-substage no-deviation summary for one designer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasDeviationSummary {
    pub designer: usize,
    pub base_utility: f64,
    pub best_grid_utility: f64,
    /// Best grid utility minus base, both solved at the same precision.
    pub improvement: f64,
}

/// Weak designer equilibrium: full-prize contests on the congestion PNE
/// with balancing biases, plus its certification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WdeOutcome {
    pub profile: DesignerProfile,
    pub lambda: MultiplierVector,
    pub efforts: EffortProfile,
    pub designer_utilities: Vec<f64>,
    pub contestant_utilities: Vec<f64>,
    pub pne: PneOutcome,
    pub emv_check: EmvCheck,
    /// Max deviation of the balanced winning probabilities from one half.
    pub probability_gap: f64,
    /// Present when a bias grid was supplied.
    pub bias_deviations: Vec<BiasDeviationSummary>,
}

/// Builds a weak designer equilibrium: each designer stakes her whole
/// budget, participants come from the congestion-game PNE, biases balance
/// every contest. When `bias_grid` is nonempty, a grid of bias-ratio
/// deviations is re-solved per designer as a spot check.
pub fn build_wde(
    instance: &Instance,
    bias_grid: &[f64],
    config: &SolverConfig,
) -> Result<WdeOutcome> {
    let violations = crate::model::validate_instance(instance);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    let pne = first_substage_pne(instance)?;
    let first_stage = FirstStageStrategy {
        choices: (0..instance.designers())
            .map(|j| FirstStageChoice {
                reward: instance.designer_budgets[j],
                participants: pne.state.strategies[j],
            })
            .collect(),
    };
    let balanced = balancing_biases(instance, &first_stage)?;
    let profile = DesignerProfile::new(balanced.contests.iter().map(|c| vec![c.clone()]).collect());

    let emv_check = check_emv(instance, &balanced.contests, &balanced.lambda, 1e-12)?;
    let mut probability_gap: f64 = 0.0;
    for contest in &balanced.contests {
        let ([pa, pb], _) = hat_p_q(&balanced.lambda, contest)?;
        probability_gap = probability_gap.max((pa - 0.5).abs()).max((pb - 0.5).abs());
    }
    let (contestant_utilities, designer_utilities) =
        utilities(instance, &profile, &balanced.efforts)?;

    let mut bias_deviations = Vec::new();
    if !bias_grid.is_empty() {
        for j in 0..instance.designers() {
            let grid = DeviationGrid::bias_ratio_multipliers(&profile.contests[j], bias_grid);
            let result = designer_deviation_search(instance, &profile, j, &grid, config)?;
            let best = result
                .best
                .as_ref()
                .map(|b| b.utility)
                .unwrap_or(result.base_utility);
            bias_deviations.push(BiasDeviationSummary {
                designer: j,
                base_utility: result.base_utility,
                best_grid_utility: best,
                improvement: best - result.base_utility,
            });
        }
    }

    Ok(WdeOutcome {
        profile,
        lambda: balanced.lambda,
        efforts: balanced.efforts,
        designer_utilities,
        contestant_utilities,
        pne,
        emv_check,
        probability_gap,
        bias_deviations,
    })
}
