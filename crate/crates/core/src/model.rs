//! Core domain types for pairwise lottery contest games: instances, contest
//! configurations, effort profiles, the lottery success function, utilities,
//! and feasibility validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Opaque, stable contest identifier. All effort/probability maps are keyed
/// by `(contestant index, contest id)` so profiles survive reordering and
/// designer deviations that add or remove contests.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContestId(pub String);

impl ContestId {
    pub fn new(s: impl Into<String>) -> Self {
        ContestId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ContestId {
    fn from(s: &str) -> Self {
        ContestId(s.to_owned())
    }
}

impl From<String> for ContestId {
    fn from(s: String) -> Self {
        ContestId(s)
    }
}

/// Whether each designer may hold one contest or split her budget freely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrizeMode {
    /// One contest per designer, whole prize decision.
    Indivisible,
    /// Budget divisible across arbitrarily many contests.
    Divisible,
}

/// Problem data: contestant effort budgets and designer prize budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Total effort `T_i` of each contestant; all positive, at least two.
    pub contestant_efforts: Vec<f64>,
    /// Prize budget `B_j` of each designer; all positive, at least one.
    pub designer_budgets: Vec<f64>,
}

impl Instance {
    pub fn new(contestant_efforts: Vec<f64>, designer_budgets: Vec<f64>) -> Self {
        Instance {
            contestant_efforts,
            designer_budgets,
        }
    }

    pub fn contestants(&self) -> usize {
        self.contestant_efforts.len()
    }

    pub fn designers(&self) -> usize {
        self.designer_budgets.len()
    }
}

/// One pairwise lottery contest: owner, two participants, prize, biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestConfig {
    pub id: ContestId,
    /// Index of the designer holding this contest.
    pub designer: usize,
    /// Ordered pair of distinct contestant indices.
    pub participants: [usize; 2],
    /// Prize for the winner.
    pub reward: f64,
    /// Multiplicative biases, aligned with `participants`.
    pub biases: [f64; 2],
}

impl ContestConfig {
    pub fn new(
        id: impl Into<ContestId>,
        designer: usize,
        participants: [usize; 2],
        reward: f64,
        biases: [f64; 2],
    ) -> Self {
        ContestConfig {
            id: id.into(),
            designer,
            participants,
            reward,
            biases,
        }
    }

    /// Position (0 or 1) of contestant `i` in this contest, if invited.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.participants.iter().position(|&p| p == i)
    }

    pub fn involves(&self, i: usize) -> bool {
        self.position(i).is_some()
    }

    /// The opponent of contestant `i`; `None` when `i` is not invited.
    pub fn opponent(&self, i: usize) -> Option<usize> {
        self.position(i).map(|p| self.participants[1 - p])
    }

    pub fn bias_of(&self, i: usize) -> Option<f64> {
        self.position(i).map(|p| self.biases[p])
    }
}

/// First-stage strategy profile: the contests of every designer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignerProfile {
    /// One sub-list per designer, indexed like `Instance::designer_budgets`.
    pub contests: Vec<Vec<ContestConfig>>,
}

impl DesignerProfile {
    pub fn new(contests: Vec<Vec<ContestConfig>>) -> Self {
        DesignerProfile { contests }
    }

    /// Flattens all designers' contests into one list (designer order, then
    /// declaration order).
    pub fn all_contests(&self) -> Vec<ContestConfig> {
        self.contests.iter().flatten().cloned().collect()
    }

    pub fn iter_contests(&self) -> impl Iterator<Item = &ContestConfig> {
        self.contests.iter().flatten()
    }

    /// Contests inviting contestant `i`.
    pub fn contests_of(&self, i: usize) -> Vec<&ContestConfig> {
        self.iter_contests().filter(|c| c.involves(i)).collect()
    }

    /// Replaces designer `j`'s contest list, leaving the others untouched.
    pub fn with_designer_contests(&self, j: usize, contests: Vec<ContestConfig>) -> Self {
        let mut out = self.clone();
        out.contests[j] = contests;
        out
    }
}

/// Second-stage strategy profile: effort per (contestant, contest) incidence.
///
/// Serialized as a list of `(contestant, contest, effort)` triples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(
    into = "Vec<(usize, ContestId, f64)>",
    from = "Vec<(usize, ContestId, f64)>"
)]
pub struct EffortProfile {
    pub efforts: BTreeMap<(usize, ContestId), f64>,
}

impl From<EffortProfile> for Vec<(usize, ContestId, f64)> {
    fn from(x: EffortProfile) -> Self {
        x.efforts.into_iter().map(|((i, c), v)| (i, c, v)).collect()
    }
}

impl From<Vec<(usize, ContestId, f64)>> for EffortProfile {
    fn from(rows: Vec<(usize, ContestId, f64)>) -> Self {
        EffortProfile {
            efforts: rows.into_iter().map(|(i, c, v)| ((i, c), v)).collect(),
        }
    }
}

impl EffortProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, contestant: usize, contest: &ContestId, effort: f64) {
        self.efforts.insert((contestant, contest.clone()), effort);
    }

    pub fn get(&self, contestant: usize, contest: &ContestId) -> Option<f64> {
        self.efforts.get(&(contestant, contest.clone())).copied()
    }

    pub fn require(&self, contestant: usize, contest: &ContestId) -> Result<f64> {
        self.get(contestant, contest).ok_or(Error::MissingEffort {
            contestant,
            contest: contest.clone(),
        })
    }

    /// Total effort spent by contestant `i`, compensated.
    pub fn spent(&self, i: usize) -> f64 {
        let mut acc = KahanSum::new();
        for ((c, _), x) in &self.efforts {
            if *c == i {
                acc.add(*x);
            }
        }
        acc.value()
    }
}

/// One nonnegative multiplier per contestant (the dual of her effort budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiplierVector(pub Vec<f64>);

impl MultiplierVector {
    pub fn new(values: Vec<f64>) -> Self {
        MultiplierVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Entrywise scaling, used for the `(1 + eps')` reconstruction rule.
    pub fn scaled(&self, factor: f64) -> Self {
        MultiplierVector(self.0.iter().map(|v| v * factor).collect())
    }
}

/// Lottery contest success function: `x / (x + y)` with the 0/0 case defined
/// as one half.
///
/// The complement is computed from the smaller ratio so that
/// `csf_f(x, y) + csf_f(y, x)` partitions 1 exactly in floating point.
pub fn csf_f(x: f64, y: f64) -> Result<f64> {
    if x < 0.0 || y < 0.0 {
        return Err(Error::NegativeCsfInput { x, y });
    }
    if x == 0.0 && y == 0.0 {
        return Ok(0.5);
    }
    if x <= y {
        Ok(x / (x + y))
    } else {
        Ok(1.0 - y / (y + x))
    }
}

/// Winning probability of every participant in every contest, from raw
/// (unbiased) efforts. Biases are applied internally through `csf_f`.
pub fn winning_probabilities(
    profile: &DesignerProfile,
    x: &EffortProfile,
) -> Result<BTreeMap<(usize, ContestId), f64>> {
    let mut out = BTreeMap::new();
    for contest in profile.iter_contests() {
        let [a, b] = contest.participants;
        let xa = x.require(a, &contest.id)?;
        let xb = x.require(b, &contest.id)?;
        let pa = csf_f(contest.biases[0] * xa, contest.biases[1] * xb)?;
        let pb = csf_f(contest.biases[1] * xb, contest.biases[0] * xa)?;
        out.insert((a, contest.id.clone()), pa);
        out.insert((b, contest.id.clone()), pb);
    }
    Ok(out)
}

/// Expected prize per contestant and total exerted effort per designer.
pub fn utilities(
    instance: &Instance,
    profile: &DesignerProfile,
    x: &EffortProfile,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let probs = winning_probabilities(profile, x)?;
    let mut contestant = vec![KahanSum::new(); instance.contestants()];
    let mut designer = vec![KahanSum::new(); instance.designers()];
    for contest in profile.iter_contests() {
        for &p in &contest.participants {
            let prob = probs[&(p, contest.id.clone())];
            contestant[p].add(contest.reward * prob);
            designer[contest.designer].add(x.require(p, &contest.id)?);
        }
    }
    Ok((
        contestant.iter().map(KahanSum::value).collect(),
        designer.iter().map(KahanSum::value).collect(),
    ))
}

/// Checks the instance invariants; an empty list means the instance is valid.
pub fn validate_instance(instance: &Instance) -> Vec<String> {
    let mut violations = Vec::new();
    if instance.contestants() < 2 {
        violations.push(format!(
            "need at least 2 contestants, got {}",
            instance.contestants()
        ));
    }
    if instance.designers() < 1 {
        violations.push("need at least 1 designer".to_owned());
    }
    for (i, t) in instance.contestant_efforts.iter().enumerate() {
        if !(*t > 0.0) || !t.is_finite() {
            violations.push(format!("contestant {i} effort must be positive, got {t}"));
        }
    }
    for (j, b) in instance.designer_budgets.iter().enumerate() {
        if !(*b > 0.0) || !b.is_finite() {
            violations.push(format!("designer {j} budget must be positive, got {b}"));
        }
    }
    violations
}

/// Checks the profile invariants against an instance under the given prize
/// mode; an empty list means the profile is valid.
pub fn validate_profile(
    instance: &Instance,
    profile: &DesignerProfile,
    mode: PrizeMode,
) -> Vec<String> {
    let mut violations = Vec::new();
    if profile.contests.len() != instance.designers() {
        violations.push(format!(
            "profile lists {} designers, instance has {}",
            profile.contests.len(),
            instance.designers()
        ));
        return violations;
    }
    let n = instance.contestants();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (j, contests) in profile.contests.iter().enumerate() {
        if mode == PrizeMode::Indivisible && contests.len() != 1 {
            violations.push(format!(
                "designer {j} must hold exactly one contest under the indivisible prize model, holds {}",
                contests.len()
            ));
        }
        let mut spent = KahanSum::new();
        for contest in contests {
            if !seen_ids.insert(contest.id.clone()) {
                violations.push(format!("duplicate contest id {}", contest.id));
            }
            if contest.designer != j {
                violations.push(format!(
                    "contest {} listed under designer {j} but owned by {}",
                    contest.id, contest.designer
                ));
            }
            let [a, b] = contest.participants;
            if a == b {
                violations.push(format!("contest {}: participants must differ", contest.id));
            }
            for &p in &contest.participants {
                if p >= n {
                    violations.push(format!(
                        "contest {}: participant index {p} out of range (n = {n})",
                        contest.id
                    ));
                }
            }
            if !(contest.reward > 0.0) || !contest.reward.is_finite() {
                violations.push(format!(
                    "contest {}: reward must be positive, got {}",
                    contest.id, contest.reward
                ));
            }
            for (&alpha, &p) in contest.biases.iter().zip(&contest.participants) {
                if !(alpha > 0.0) || !alpha.is_finite() {
                    violations.push(format!(
                        "contest {}: bias for contestant {p} must be positive, got {alpha}",
                        contest.id
                    ));
                }
            }
            spent.add(contest.reward);
        }
        let budget = instance.designer_budgets[j];
        if spent.value() > budget * (1.0 + 1e-12) {
            violations.push(format!(
                "designer {j} spends {} of budget {budget}",
                spent.value()
            ));
        }
    }
    violations
}

/// Convenience: validates instance and profile, returning an error on any
/// violation.
pub fn require_valid(
    instance: &Instance,
    profile: &DesignerProfile,
    mode: PrizeMode,
) -> Result<()> {
    let iv = validate_instance(instance);
    if !iv.is_empty() {
        return Err(Error::InvalidInstance(iv));
    }
    let pv = validate_profile(instance, profile, mode);
    if !pv.is_empty() {
        return Err(Error::InvalidProfile(pv));
    }
    Ok(())
}
