//! Instance and report documents: human-editable JSON with explicit ids,
//! emitted with 17 significant digits so every number round-trips exactly.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use plc_core::model::{
    validate_instance, validate_profile, ContestConfig, DesignerProfile, EffortProfile, Instance,
    PrizeMode,
};

/// JSON formatter printing every float with 17 significant digits.
struct SigDigitsPretty<'a>(PrettyFormatter<'a>);

impl Formatter for SigDigitsPretty<'_> {
    fn write_f64<W: io::Write + ?Sized>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: io::Write + ?Sized>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: io::Write + ?Sized>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: io::Write + ?Sized>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any document with the 17-digit float convention.
pub fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut out = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut out, SigDigitsPretty(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContestantEntry {
    pub id: String,
    pub effort: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignerEntry {
    pub id: String,
    pub budget: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContestEntry {
    pub id: String,
    pub designer: String,
    pub participants: [String; 2],
    pub reward: f64,
    /// Bias per participant id.
    pub biases: BTreeMap<String, f64>,
}

/// On-disk instance document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    /// "ipm" or "dpm".
    pub mode: String,
    pub contestants: Vec<ContestantEntry>,
    pub designers: Vec<DesignerEntry>,
    #[serde(default)]
    pub contests: Vec<ContestEntry>,
}

/// Index maps recovered while loading an instance file.
#[derive(Debug, Clone)]
pub struct Names {
    pub contestants: Vec<String>,
    pub designers: Vec<String>,
}

impl Names {
    pub fn contestant_index(&self, id: &str) -> Option<usize> {
        self.contestants.iter().position(|s| s == id)
    }

    pub fn designer_index(&self, id: &str) -> Option<usize> {
        self.designers.iter().position(|s| s == id)
    }
}

/// Parse failure (malformed document or dangling reference) versus a
/// well-formed document violating a model invariant.
#[derive(Debug)]
pub enum LoadError {
    Parse(String),
    Validation(Vec<String>),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Parse(msg) => write!(f, "parse: {msg}"),
            LoadError::Validation(violations) => {
                write!(f, "validation: {}", violations.join("; "))
            }
        }
    }
}

impl std::error::Error for LoadError {}

pub struct Loaded {
    pub instance: Instance,
    pub profile: DesignerProfile,
    pub mode: PrizeMode,
    pub names: Names,
}

impl InstanceFile {
    pub fn parse_str(text: &str) -> Result<InstanceFile, LoadError> {
        serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))
    }

    /// Resolves ids to indices and checks all invariants.
    pub fn resolve(&self) -> Result<Loaded, LoadError> {
        self.resolve_inner(true)
    }

    /// Like [`resolve`](Self::resolve), but tolerates designers without
    /// contests; construction commands fill those in.
    pub fn resolve_for_build(&self) -> Result<Loaded, LoadError> {
        self.resolve_inner(false)
    }

    fn resolve_inner(&self, enforce_contest_count: bool) -> Result<Loaded, LoadError> {
        let mode = match self.mode.as_str() {
            "ipm" => PrizeMode::Indivisible,
            "dpm" => PrizeMode::Divisible,
            other => return Err(LoadError::Parse(format!("unknown mode {other:?}"))),
        };
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.contestants {
            if !seen.insert(&c.id) {
                return Err(LoadError::Parse(format!(
                    "duplicate contestant id {}",
                    c.id
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.designers {
            if !seen.insert(&d.id) {
                return Err(LoadError::Parse(format!("duplicate designer id {}", d.id)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.contests {
            if !seen.insert(&c.id) {
                return Err(LoadError::Parse(format!("duplicate contest id {}", c.id)));
            }
        }
        let names = Names {
            contestants: self.contestants.iter().map(|c| c.id.clone()).collect(),
            designers: self.designers.iter().map(|d| d.id.clone()).collect(),
        };
        let instance = Instance::new(
            self.contestants.iter().map(|c| c.effort).collect(),
            self.designers.iter().map(|d| d.budget).collect(),
        );
        let mut per_designer: Vec<Vec<ContestConfig>> =
            (0..instance.designers()).map(|_| Vec::new()).collect();
        for entry in &self.contests {
            let designer = names.designer_index(&entry.designer).ok_or_else(|| {
                LoadError::Parse(format!(
                    "contest {}: unknown designer {}",
                    entry.id, entry.designer
                ))
            })?;
            let mut participants = [0usize; 2];
            let mut biases = [0f64; 2];
            for (k, pid) in entry.participants.iter().enumerate() {
                participants[k] = names.contestant_index(pid).ok_or_else(|| {
                    LoadError::Parse(format!("contest {}: unknown contestant {pid}", entry.id))
                })?;
                biases[k] = *entry.biases.get(pid).ok_or_else(|| {
                    LoadError::Parse(format!("contest {}: missing bias for {pid}", entry.id))
                })?;
            }
            per_designer[designer].push(ContestConfig::new(
                entry.id.as_str(),
                designer,
                participants,
                entry.reward,
                biases,
            ));
        }
        let profile = DesignerProfile::new(per_designer);
        let check_mode = if enforce_contest_count {
            mode
        } else {
            PrizeMode::Divisible
        };
        let mut violations = validate_instance(&instance);
        violations.extend(validate_profile(&instance, &profile, check_mode));
        if !violations.is_empty() {
            return Err(LoadError::Validation(violations));
        }
        Ok(Loaded {
            instance,
            profile,
            mode,
            names,
        })
    }

    /// Rebuilds a document from resolved data.
    pub fn from_parts(
        instance: &Instance,
        profile: &DesignerProfile,
        mode: PrizeMode,
        names: &Names,
    ) -> InstanceFile {
        InstanceFile {
            mode: match mode {
                PrizeMode::Indivisible => "ipm".to_owned(),
                PrizeMode::Divisible => "dpm".to_owned(),
            },
            contestants: names
                .contestants
                .iter()
                .zip(&instance.contestant_efforts)
                .map(|(id, e)| ContestantEntry {
                    id: id.clone(),
                    effort: *e,
                })
                .collect(),
            designers: names
                .designers
                .iter()
                .zip(&instance.designer_budgets)
                .map(|(id, b)| DesignerEntry {
                    id: id.clone(),
                    budget: *b,
                })
                .collect(),
            contests: profile
                .iter_contests()
                .map(|c| ContestEntry {
                    id: c.id.to_string(),
                    designer: names.designers[c.designer].clone(),
                    participants: [
                        names.contestants[c.participants[0]].clone(),
                        names.contestants[c.participants[1]].clone(),
                    ],
                    reward: c.reward,
                    biases: c
                        .participants
                        .iter()
                        .zip(&c.biases)
                        .map(|(&p, &b)| (names.contestants[p].clone(), b))
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffortRow {
    pub contestant: String,
    pub contest: String,
    pub effort: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub contestant: String,
    pub contest: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub step_mode: String,
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub iterations: u64,
    pub final_residual: f64,
    pub floor_clamps: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certification {
    pub emv_certified: bool,
    pub epsilon_pass: bool,
    pub min_deviation_ratio: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// On-disk report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub mode: String,
    pub lambda: BTreeMap<String, f64>,
    pub efforts: Vec<EffortRow>,
    pub probabilities: Vec<ProbabilityRow>,
    pub contestant_utilities: BTreeMap<String, f64>,
    pub designer_utilities: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solver: Option<SolverSummary>,
    pub residual_history: Vec<f64>,
    pub certification: Certification,
    /// Present on construction reports: the full constructed profile.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub profile: Option<InstanceFile>,
}

impl ReportFile {
    pub fn parse_str(text: &str) -> Result<ReportFile, LoadError> {
        serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))
    }

    /// Recovers the effort profile keyed by indices from `names`.
    pub fn effort_profile(&self, names: &Names) -> Result<EffortProfile, LoadError> {
        let mut x = EffortProfile::new();
        for row in &self.efforts {
            let i = names.contestant_index(&row.contestant).ok_or_else(|| {
                LoadError::Parse(format!("unknown contestant {}", row.contestant))
            })?;
            x.set(i, &row.contest.as_str().into(), row.effort);
        }
        Ok(x)
    }
}
