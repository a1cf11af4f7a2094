//! Divisible-prize designer stage: the interval-matching effort
//! decomposition, the proportional-allocation designer equilibrium, its
//! condition verification, and the closed-form equilibrium utilities.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::emv::{check_emv, hat_p_q, reconstruct_equilibrium, solve_emv, EmvCheck, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{
    utilities, ContestConfig, DesignerProfile, EffortProfile, Instance, MultiplierVector,
};
use crate::numeric::KahanSum;

/// One matched block of effort mass between two contestants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub row: usize,
    pub col: usize,
    pub amount: f64,
}

/// Pairing of contestant effort mass obtained by folding the effort line at
/// its midpoint: every contestant's matched mass equals her total effort,
/// and at most `n` pairs appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortMatching {
    /// Sparse entries with `row < col`, lexicographically ordered.
    pub entries: Vec<MatchEntry>,
    /// Half the total effort, the fold point.
    pub total_half: f64,
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite effort")
}

/// Builds the interval matching for the given efforts.
///
/// Intervals `I_k` of length `T_k` are laid end to end; each point `x` of
/// the first half is matched with `x + M`. Segment lengths are exact
/// differences of prefix sums, computed in rational arithmetic, so the
/// row/column sum identity holds exactly before the final rounding to
/// `f64`.
pub fn effort_matching(efforts: &[f64]) -> Result<EffortMatching> {
    let n = efforts.len();
    if n < 2 {
        return Err(Error::Domain("need at least two contestants".to_owned()));
    }
    for (i, t) in efforts.iter().enumerate() {
        if !(*t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!(
                "contestant {i} effort must be positive, got {t}"
            )));
        }
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(BigRational::zero());
    for t in efforts {
        let last = prefix.last().unwrap().clone();
        prefix.push(last + rational(*t));
    }
    let midpoint = prefix[n].clone() / BigRational::from_integer(BigInt::from(2));
    for (i, t) in efforts.iter().enumerate() {
        if rational(*t) > midpoint {
            return Err(Error::DominantContestant {
                index: i,
                effort: *t,
                half_total: midpoint.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    // Breakpoints of the fold: interval edges in [0, M] plus edges shifted
    // back from [M, 2M].
    let mut cuts: Vec<BigRational> = vec![BigRational::zero(), midpoint.clone()];
    for p in &prefix[1..n] {
        if p > &BigRational::zero() && p < &midpoint {
            cuts.push(p.clone());
        }
        let shifted = p - &midpoint;
        if shifted > BigRational::zero() && shifted < midpoint {
            cuts.push(shifted);
        }
    }
    cuts.sort();
    cuts.dedup();

    let interval_of = |point: &BigRational| -> usize {
        // First k with prefix[k+1] > point; `point` is strictly interior.
        for k in 0..n {
            if &prefix[k + 1] > point {
                return k;
            }
        }
        n - 1
    };

    let two = BigRational::from_integer(BigInt::from(2));
    let mut entries: Vec<(usize, usize, BigRational)> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        if hi <= lo {
            continue;
        }
        let mid = (lo + hi) / &two;
        let row = interval_of(&mid);
        let col = interval_of(&(&mid + &midpoint));
        debug_assert!(row < col, "fold produced a diagonal block");
        entries.push((row, col, hi - lo));
    }

    // Exactness of the construction: matched mass telescopes back to the
    // raw efforts.
    for i in 0..n {
        let mut mass = BigRational::zero();
        for (r, c, a) in &entries {
            if *r == i || *c == i {
                mass += a;
            }
        }
        assert!(
            (&mass - rational(efforts[i])).is_zero(),
            "matched mass for contestant {i} drifted"
        );
    }
    assert!(entries.len() <= n, "fold produced more than n blocks");

    Ok(EffortMatching {
        entries: entries
            .into_iter()
            .map(|(row, col, a)| MatchEntry {
                row,
                col,
                amount: a.to_f64().expect("representable segment"),
            })
            .collect(),
        total_half: midpoint.to_f64().expect("representable midpoint"),
    })
}

/// Verification result for the proportional-allocation conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProportionalCheck {
    /// Per-(designer, contestant) prize shares off the proportional target.
    pub prize_share_violations: Vec<String>,
    /// Contests whose equilibrium winning probability is off one half.
    pub probability_violations: Vec<String>,
    pub pass: bool,
}

/// Checks the two designer-equilibrium conditions: prize shares
/// proportional to efforts per designer, and balanced equilibrium winning
/// probabilities. When `lambda` is omitted the multiplier vector is solved
/// with `config`.
pub fn verify_proportional_conditions(
    instance: &Instance,
    profile: &DesignerProfile,
    lambda: Option<&MultiplierVector>,
    tol: f64,
    config: &SolverConfig,
) -> Result<ProportionalCheck> {
    let contests = profile.all_contests();
    let total_effort = {
        let mut acc = KahanSum::new();
        for t in &instance.contestant_efforts {
            acc.add(*t);
        }
        acc.value()
    };
    let mut prize_share_violations = Vec::new();
    for (j, held) in profile.contests.iter().enumerate() {
        for i in 0..instance.contestants() {
            let mut share = KahanSum::new();
            for c in held.iter().filter(|c| c.involves(i)) {
                share.add(c.reward);
            }
            let target =
                2.0 * instance.designer_budgets[j] * instance.contestant_efforts[i] / total_effort;
            if (share.value() - target).abs() > tol * target {
                prize_share_violations.push(format!(
                    "designer {j}, contestant {i}: prize share {} vs proportional target {target}",
                    share.value()
                ));
            }
        }
    }

    let solved;
    let lambda = match lambda {
        Some(l) => l,
        None => {
            solved = solve_emv(instance, &contests, config, None)?.lambda;
            &solved
        }
    };
    let mut probability_violations = Vec::new();
    for contest in &contests {
        let ([pa, pb], _) = hat_p_q(lambda, contest)?;
        if (pa - 0.5).abs() > tol || (pb - 0.5).abs() > tol {
            probability_violations.push(format!(
                "contest {}: winning probabilities ({pa}, {pb})",
                contest.id
            ));
        }
    }
    Ok(ProportionalCheck {
        pass: prize_share_violations.is_empty() && probability_violations.is_empty(),
        prize_share_violations,
        probability_violations,
    })
}

/// Constructed designer equilibrium under the divisible prize model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpmOutcome {
    pub profile: DesignerProfile,
    pub matching: EffortMatching,
    pub lambda: MultiplierVector,
    pub efforts: EffortProfile,
    pub designer_utilities: Vec<f64>,
    pub contestant_utilities: Vec<f64>,
    pub emv_check: EmvCheck,
    pub proportional: ProportionalCheck,
}

/// Builds the proportional-allocation designer equilibrium: every designer
/// mirrors the effort matching with prizes `2 B_j A_{ik} / sum T`, all
/// biases equal, budgets exactly exhausted, and every multiplier equal to
/// `sum B / (2 sum T)`.
pub fn build_dpm_spe(instance: &Instance) -> Result<DpmOutcome> {
    let violations = crate::model::validate_instance(instance);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    let matching = effort_matching(&instance.contestant_efforts)?;
    let total_effort = {
        let mut acc = KahanSum::new();
        for t in &instance.contestant_efforts {
            acc.add(*t);
        }
        acc.value()
    };
    let total_budget = {
        let mut acc = KahanSum::new();
        for b in &instance.designer_budgets {
            acc.add(*b);
        }
        acc.value()
    };
    let lambda_bar = total_budget / (2.0 * total_effort);
    let lambda = MultiplierVector::new(vec![lambda_bar; instance.contestants()]);

    let mut per_designer = Vec::new();
    for (j, budget) in instance.designer_budgets.iter().enumerate() {
        let mut contests = Vec::new();
        for (idx, entry) in matching.entries.iter().enumerate() {
            let reward = if idx + 1 == matching.entries.len() {
                // Remainder assignment: the last prize absorbs the rounding
                // so the designer's budget is exhausted bit-exactly.
                let resummed = |r: f64| -> f64 {
                    let mut check = KahanSum::new();
                    for c in &contests {
                        let c: &ContestConfig = c;
                        check.add(c.reward);
                    }
                    check.add(r);
                    check.value()
                };
                let mut spent = KahanSum::new();
                for c in &contests {
                    let c: &ContestConfig = c;
                    spent.add(c.reward);
                }
                let mut r = *budget - spent.value();
                if resummed(r) != *budget {
                    // Scan the adjacent floats for the one that lands the
                    // compensated sum exactly on the budget.
                    let (mut up, mut down) = (r, r);
                    for _ in 0..16 {
                        up = up.next_up();
                        if resummed(up) == *budget {
                            r = up;
                            break;
                        }
                        down = down.next_down();
                        if resummed(down) == *budget {
                            r = down;
                            break;
                        }
                    }
                }
                r
            } else {
                2.0 * budget * entry.amount / total_effort
            };
            if !(reward > 0.0) {
                return Err(Error::Domain(format!(
                    "designer {j}: degenerate prize {reward} for block ({}, {})",
                    entry.row, entry.col
                )));
            }
            contests.push(ContestConfig::new(
                format!("d{j}-{}-{}", entry.row, entry.col),
                j,
                [entry.row, entry.col],
                reward,
                [1.0, 1.0],
            ));
        }
        per_designer.push(contests);
    }
    let profile = DesignerProfile::new(per_designer);
    let contests = profile.all_contests();

    let efforts = reconstruct_equilibrium(instance, &contests, &lambda, None)?;
    let (contestant_utilities, designer_utilities) = utilities(instance, &profile, &efforts)?;
    let emv_check = check_emv(instance, &contests, &lambda, 1e-12)?;
    let proportional = verify_proportional_conditions(
        instance,
        &profile,
        Some(&lambda),
        1e-12,
        &SolverConfig::default(),
    )?;
    Ok(DpmOutcome {
        profile,
        matching,
        lambda,
        efforts,
        designer_utilities,
        contestant_utilities,
        emv_check,
        proportional,
    })
}

/// Closed-form equilibrium utilities of the proportional allocation:
/// contestants earn budget shares, designers earn effort shares.
pub fn equilibrium_utilities(instance: &Instance) -> (Vec<f64>, Vec<f64>) {
    let total_effort = {
        let mut acc = KahanSum::new();
        for t in &instance.contestant_efforts {
            acc.add(*t);
        }
        acc.value()
    };
    let total_budget = {
        let mut acc = KahanSum::new();
        for b in &instance.designer_budgets {
            acc.add(*b);
        }
        acc.value()
    };
    let contestants = instance
        .contestant_efforts
        .iter()
        .map(|t| t / total_effort * total_budget)
        .collect();
    let designers = instance
        .designer_budgets
        .iter()
        .map(|b| b / total_budget * total_effort)
        .collect();
    (contestants, designers)
}
