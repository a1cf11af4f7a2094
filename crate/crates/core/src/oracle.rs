//! Independent verification: exact best responses via the water-filling
//! characterization, approximate-equilibrium certification, monotonicity
//! probes, the closed-form demand Jacobian, and grid-based designer
//! deviation search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::emv::{hat_t, is_valid_multiplier, reconstruct_equilibrium, solve_emv, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{
    csf_f, utilities, ContestConfig, ContestId, DesignerProfile, EffortProfile, Instance,
    MultiplierVector,
};
use crate::numeric::KahanSum;

/// Result of maximizing one contestant's payoff against fixed opponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestResponseResult {
    /// Supremum of attainable utility.
    pub sup_value: f64,
    /// Maximizer, present exactly when the supremum is attained.
    pub effort: Option<BTreeMap<ContestId, f64>>,
    /// Contests where the opponent exerts zero biased effort; winning there
    /// is approached by vanishing positive effort, so no maximizer exists.
    pub open_contests: Vec<ContestId>,
    /// KKT multiplier found by bisection over the water-filling allocation.
    pub multiplier: Option<f64>,
}

struct ClosedContest {
    id: ContestId,
    reward: f64,
    bias: f64,
    opp_biased: f64,
}

/// Water-filling allocation at multiplier `mu`.
fn allocation(closed: &[ClosedContest], mu: f64) -> Vec<f64> {
    closed
        .iter()
        .map(|c| {
            let root = (c.reward * c.bias * c.opp_biased / mu).sqrt();
            ((root - c.opp_biased) / c.bias).max(0.0)
        })
        .collect()
}

fn total(closed: &[ClosedContest], mu: f64) -> f64 {
    let mut acc = KahanSum::new();
    for x in allocation(closed, mu) {
        acc.add(x);
    }
    acc.value()
}

/// Exact best response of contestant `i` given the biased efforts of her
/// opponents. `opponent_efforts` maps each contest inviting `i` to the raw
/// effort of the opponent there.
pub fn best_response(
    instance: &Instance,
    contests: &[ContestConfig],
    i: usize,
    opponent_efforts: &BTreeMap<ContestId, f64>,
) -> Result<BestResponseResult> {
    let budget = instance.contestant_efforts[i];
    let mut open = Vec::new();
    let mut closed = Vec::new();
    let mut open_reward = KahanSum::new();
    for contest in contests.iter().filter(|c| c.involves(i)) {
        let pos = contest.position(i).unwrap();
        let opp = contest.participants[1 - pos];
        let x_opp = *opponent_efforts
            .get(&contest.id)
            .ok_or(Error::MissingEffort {
                contestant: opp,
                contest: contest.id.clone(),
            })?;
        let y = contest.biases[1 - pos] * x_opp;
        if y > 0.0 {
            closed.push(ClosedContest {
                id: contest.id.clone(),
                reward: contest.reward,
                bias: contest.biases[pos],
                opp_biased: y,
            });
        } else {
            open.push(contest.id.clone());
            open_reward.add(contest.reward);
        }
    }

    if closed.is_empty() {
        return Ok(BestResponseResult {
            sup_value: open_reward.value(),
            effort: None,
            open_contests: open,
            multiplier: None,
        });
    }

    // Marginal payoff at zero effort bounds the binding multiplier from
    // above; demand grows without bound as mu drops to zero.
    let mut mu_hi = closed
        .iter()
        .map(|c| c.reward * c.bias / c.opp_biased)
        .fold(0.0_f64, f64::max);
    if !mu_hi.is_finite() || mu_hi <= 0.0 {
        return Err(Error::BisectionBracket { contestant: i });
    }
    let mut mu_lo = mu_hi;
    let mut guard = 0;
    while total(&closed, mu_lo) < budget {
        mu_lo /= 2.0;
        guard += 1;
        if guard > 4200 {
            return Err(Error::BisectionBracket { contestant: i });
        }
    }
    let mut mu = mu_lo;
    for _ in 0..200 {
        mu = 0.5 * (mu_lo + mu_hi);
        let spent = total(&closed, mu);
        if (spent - budget).abs() <= 1e-12 * budget {
            break;
        }
        if spent >= budget {
            mu_lo = mu;
        } else {
            mu_hi = mu;
        }
        if (mu_hi - mu_lo) <= f64::EPSILON * mu_hi {
            break;
        }
    }
    let mut x = allocation(&closed, mu);
    let spent = {
        let mut acc = KahanSum::new();
        for v in &x {
            acc.add(*v);
        }
        acc.value()
    };
    if spent > budget {
        for v in &mut x {
            *v *= budget / spent;
        }
    }

    let mut value = open_reward;
    for (c, &xi) in closed.iter().zip(&x) {
        value.add(c.reward * csf_f(c.bias * xi, c.opp_biased)?);
    }
    let sup_value = value.value();

    if open.is_empty() {
        let effort = closed
            .iter()
            .zip(&x)
            .map(|(c, &xi)| (c.id.clone(), xi))
            .collect();
        Ok(BestResponseResult {
            sup_value,
            effort: Some(effort),
            open_contests: open,
            multiplier: Some(mu),
        })
    } else {
        Ok(BestResponseResult {
            sup_value,
            effort: None,
            open_contests: open,
            multiplier: Some(mu),
        })
    }
}

/// Marginal payoff of contestant `i` in a contest at efforts `(x, y_biased)`.
pub fn marginal_payoff(reward: f64, bias: f64, x: f64, opp_biased: f64) -> f64 {
    let d = bias * x + opp_biased;
    reward * bias * opp_biased / (d * d)
}

/// Per-contestant comparison of achieved utility against the deviation
/// supremum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationRatio {
    pub contestant: usize,
    pub achieved: f64,
    pub sup_deviation: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub per_contestant: Vec<DeviationRatio>,
    pub min_ratio: f64,
    pub pass: bool,
}

/// Certifies that `x` is an approximate equilibrium: every contestant
/// achieves at least `1 - eps` of her best-deviation utility.
pub fn verify_epsilon_equilibrium(
    instance: &Instance,
    profile: &DesignerProfile,
    x: &EffortProfile,
    eps: f64,
) -> Result<EpsilonReport> {
    let contests = profile.all_contests();
    let (contestant_utilities, _) = utilities(instance, profile, x)?;
    let mut per_contestant = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for i in 0..instance.contestants() {
        let mine: Vec<&ContestConfig> = contests.iter().filter(|c| c.involves(i)).collect();
        if mine.is_empty() {
            continue;
        }
        let mut opponent_efforts = BTreeMap::new();
        for contest in &mine {
            let opp = contest.opponent(i).unwrap();
            opponent_efforts.insert(contest.id.clone(), x.require(opp, &contest.id)?);
        }
        let br = best_response(instance, &contests, i, &opponent_efforts)?;
        let achieved = contestant_utilities[i];
        let ratio = if br.sup_value > 0.0 {
            achieved / br.sup_value
        } else {
            1.0
        };
        min_ratio = min_ratio.min(ratio);
        per_contestant.push(DeviationRatio {
            contestant: i,
            achieved,
            sup_deviation: br.sup_value,
            ratio,
        });
    }
    if per_contestant.is_empty() {
        min_ratio = 1.0;
    }
    Ok(EpsilonReport {
        epsilon: eps,
        pass: min_ratio >= 1.0 - eps,
        min_ratio,
        per_contestant,
    })
}

/// The monotonicity inner product `sum_i (l'_i - l_i)(T_hat_i(l') -
/// T_hat_i(l))`; nonpositive for any two valid vectors.
pub fn monotonicity_probe(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
    lambda_prime: &MultiplierVector,
) -> Result<f64> {
    for (name, v) in [("first", lambda), ("second", lambda_prime)] {
        if v.len() != instance.contestants() {
            return Err(Error::MultiplierLength {
                got: v.len(),
                want: instance.contestants(),
            });
        }
        if !is_valid_multiplier(v, contests) {
            return Err(Error::Domain(format!(
                "{name} multiplier vector is not valid"
            )));
        }
    }
    let mut acc = KahanSum::new();
    for i in 0..instance.contestants() {
        let d_lambda = lambda_prime.get(i) - lambda.get(i);
        let d_demand = hat_t(lambda_prime, contests, i)? - hat_t(lambda, contests, i)?;
        acc.add(d_lambda * d_demand);
    }
    Ok(acc.value())
}

/// Closed-form Jacobian `J[i][k] = d T_hat_i / d lambda_k` at a strictly
/// positive vector. Off-diagonal entries are exactly antisymmetric by
/// construction; diagonal entries are nonpositive.
pub fn demand_jacobian(
    instance: &Instance,
    contests: &[ContestConfig],
    lambda: &MultiplierVector,
) -> Result<Vec<Vec<f64>>> {
    let n = instance.contestants();
    if lambda.len() != n {
        return Err(Error::MultiplierLength {
            got: lambda.len(),
            want: n,
        });
    }
    for (i, &v) in lambda.values().iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveMultiplier { index: i, value: v });
        }
    }
    let mut jac = vec![vec![0.0; n]; n];
    for contest in contests {
        let [p, q] = contest.participants;
        let (ap, aq) = (contest.biases[0], contest.biases[1]);
        let (lp, lq) = (lambda.get(p) / ap, lambda.get(q) / aq);
        let d = lp + lq;
        let d3 = d * d * d;
        let off = contest.reward * (lp - lq) / (ap * aq * d3);
        jac[p][q] += off;
        jac[q][p] += -off;
        jac[p][p] += contest.reward * (-2.0 * lq) / (ap * ap * d3);
        jac[q][q] += contest.reward * (-2.0 * lp) / (aq * aq * d3);
    }
    Ok(jac)
}

/// One candidate replacement for a designer's contest set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationCandidate {
    pub label: String,
    pub contests: Vec<ContestConfig>,
}

/// Explicit list of deviations to evaluate; grids are always supplied by
/// the caller so reproductions stay auditable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationGrid {
    pub candidates: Vec<DeviationCandidate>,
}

impl DeviationGrid {
    pub fn explicit(candidates: Vec<DeviationCandidate>) -> Self {
        DeviationGrid { candidates }
    }

    /// Single-contest grid over participant pairs, rewards, and bias pairs.
    pub fn single_contest(
        id: &ContestId,
        designer: usize,
        pairs: &[[usize; 2]],
        rewards: &[f64],
        biases: &[[f64; 2]],
    ) -> Self {
        let mut candidates = Vec::new();
        for pair in pairs {
            for &reward in rewards {
                for bias in biases {
                    candidates.push(DeviationCandidate {
                        label: format!(
                            "S={{{},{}}} R={} alpha=({},{})",
                            pair[0], pair[1], reward, bias[0], bias[1]
                        ),
                        contests: vec![ContestConfig::new(
                            id.clone(),
                            designer,
                            *pair,
                            reward,
                            *bias,
                        )],
                    });
                }
            }
        }
        DeviationGrid { candidates }
    }

    /// Rescales the bias ratio of every contest a designer holds by each
    /// multiplier, keeping rewards and participants fixed.
    pub fn bias_ratio_multipliers(base: &[ContestConfig], multipliers: &[f64]) -> Self {
        let candidates = multipliers
            .iter()
            .map(|&r| {
                let contests = base
                    .iter()
                    .map(|c| {
                        let s = r.sqrt();
                        let b0 = c.biases[0] * s;
                        let b1 = c.biases[1] / s;
                        let norm = b0 + b1;
                        let mut out = c.clone();
                        out.biases = [b0 / norm, b1 / norm];
                        out
                    })
                    .collect();
                DeviationCandidate {
                    label: format!("ratio x{r}"),
                    contests,
                }
            })
            .collect();
        DeviationGrid { candidates }
    }
}

/// Evaluation record for one candidate, in grid order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationAudit {
    pub index: usize,
    pub label: String,
    pub converged: bool,
    pub utility: Option<f64>,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationOutcome {
    pub index: usize,
    pub label: String,
    pub utility: f64,
    pub lambda: MultiplierVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationSearchResult {
    /// Designer utility at the unmodified profile, solved with the same
    /// configuration as the candidates.
    pub base_utility: f64,
    pub best: Option<DeviationOutcome>,
    pub audit: Vec<DeviationAudit>,
}

fn designer_utility_of(
    instance: &Instance,
    profile: &DesignerProfile,
    designer: usize,
    config: &SolverConfig,
) -> Result<(f64, MultiplierVector, f64)> {
    let contests = profile.all_contests();
    let trace = solve_emv(instance, &contests, config, None)?;
    let scale = 1.0 + config.epsilon_prime();
    let x = reconstruct_equilibrium(instance, &contests, &trace.lambda, Some(scale))?;
    let (_, designers) = utilities(instance, profile, &x)?;
    let residual = trace.max_residual();
    Ok((designers[designer], trace.lambda, residual))
}

/// Re-solves the contestant stage for every candidate deviation of designer
/// `j` and returns the best utility found. Candidates that fail validation
/// or do not converge are skipped and recorded in the audit trail; ties are
/// broken by first occurrence.
pub fn designer_deviation_search(
    instance: &Instance,
    profile: &DesignerProfile,
    j: usize,
    grid: &DeviationGrid,
    config: &SolverConfig,
) -> Result<DeviationSearchResult> {
    let (base_utility, _, _) = designer_utility_of(instance, profile, j, config)?;
    let mut audit = Vec::new();
    let mut best: Option<DeviationOutcome> = None;
    for (index, candidate) in grid.candidates.iter().enumerate() {
        let trial = profile.with_designer_contests(j, candidate.contests.clone());
        let budget = instance.designer_budgets[j];
        let spent: f64 = candidate.contests.iter().map(|c| c.reward).sum();
        if spent > budget * (1.0 + 1e-12) {
            audit.push(DeviationAudit {
                index,
                label: candidate.label.clone(),
                converged: false,
                utility: None,
                residual: None,
            });
            continue;
        }
        match designer_utility_of(instance, &trial, j, config) {
            Ok((utility, lambda, residual)) => {
                audit.push(DeviationAudit {
                    index,
                    label: candidate.label.clone(),
                    converged: true,
                    utility: Some(utility),
                    residual: Some(residual),
                });
                let improves = match &best {
                    Some(b) => utility > b.utility,
                    None => true,
                };
                if improves {
                    best = Some(DeviationOutcome {
                        index,
                        label: candidate.label.clone(),
                        utility,
                        lambda,
                    });
                }
            }
            Err(Error::NonConvergence { achieved, .. }) => {
                audit.push(DeviationAudit {
                    index,
                    label: candidate.label.clone(),
                    converged: false,
                    utility: None,
                    residual: Some(achieved),
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(DeviationSearchResult {
        base_utility,
        best,
        audit,
    })
}
