//! Command implementations shared by the binary and the test suites.

use std::fs;
use std::path::{Path, PathBuf};

use plc_core::dpm::build_dpm_spe;
use plc_core::emv::{
    check_emv_regularized, reconstruct_equilibrium, solve_emv, InitMode, SolverConfig, SolverTrace,
    StepMode,
};
use plc_core::ipm::build_wde;
use plc_core::model::{
    utilities, winning_probabilities, DesignerProfile, EffortProfile, Instance, MultiplierVector,
    PrizeMode,
};
use plc_core::oracle::{
    designer_deviation_search, verify_epsilon_equilibrium, DeviationGrid, DeviationSearchResult,
};
use plc_core::Error;

use crate::format::{
    to_json, Certification, EffortRow, InstanceFile, LoadError, Loaded, Names, ProbabilityRow,
    ReportFile, SolverSummary,
};
use crate::randgen;
use crate::repro;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// Solver flags shared by most commands.
#[derive(Debug, Clone)]
pub struct SolverFlags {
    pub epsilon: f64,
    pub step_mode: StepMode,
    pub max_iterations: u64,
    pub init_mode: InitMode,
}

impl Default for SolverFlags {
    fn default() -> Self {
        SolverFlags {
            epsilon: 1e-6,
            step_mode: StepMode::Adaptive,
            max_iterations: 100_000,
            init_mode: InitMode::Ones,
        }
    }
}

impl SolverFlags {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            step_mode: self.step_mode,
            max_iterations: self.max_iterations,
            init_mode: self.init_mode,
        }
    }
}

pub fn parse_step_mode(text: &str) -> Result<StepMode, String> {
    match text {
        "adaptive" => Ok(StepMode::Adaptive),
        "guaranteed" => Ok(StepMode::Guaranteed),
        other => {
            if let Some(gamma) = other.strip_prefix("fixed:") {
                let gamma: f64 = gamma
                    .parse()
                    .map_err(|e| format!("bad fixed step {gamma:?}: {e}"))?;
                Ok(StepMode::Fixed(gamma))
            } else {
                Err(format!(
                    "unknown step mode {other:?} (adaptive, guaranteed, fixed:<gamma>)"
                ))
            }
        }
    }
}

pub fn parse_init_mode(text: &str) -> Result<InitMode, String> {
    match text {
        "ones" => Ok(InitMode::Ones),
        "scale" => Ok(InitMode::ScaleAware),
        other => Err(format!("unknown init mode {other:?} (ones, scale)")),
    }
}

fn step_mode_label(mode: StepMode) -> String {
    match mode {
        StepMode::Adaptive => "adaptive".to_owned(),
        StepMode::Guaranteed => "guaranteed".to_owned(),
        StepMode::Fixed(g) => format!("fixed:{g}"),
    }
}

fn read_file(path: &Path) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_USAGE
    })
}

fn load_with(path: &Path, for_build: bool) -> Result<Loaded, i32> {
    let text = read_file(path)?;
    let file = InstanceFile::parse_str(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_USAGE
    })?;
    let resolved = if for_build {
        file.resolve_for_build()
    } else {
        file.resolve()
    };
    resolved.map_err(|e| match e {
        LoadError::Parse(msg) => {
            eprintln!("error: {}: parse: {msg}", path.display());
            EXIT_USAGE
        }
        LoadError::Validation(violations) => {
            for v in &violations {
                eprintln!("validation: {v}");
            }
            EXIT_VALIDATION
        }
    })
}

fn load_instance(path: &Path) -> Result<Loaded, i32> {
    load_with(path, false)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), i32> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            EXIT_USAGE
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Builds a report from a solved profile.
pub fn report_from_solution(
    instance: &Instance,
    profile: &DesignerProfile,
    names: &Names,
    mode: PrizeMode,
    efforts: &EffortProfile,
    lambda: &MultiplierVector,
    trace: Option<(&SolverTrace, &SolverConfig)>,
    certification: Certification,
    embed_profile: bool,
) -> Result<ReportFile, Error> {
    let probabilities = winning_probabilities(profile, efforts)?;
    let (contestant_utilities, designer_utilities) = utilities(instance, profile, efforts)?;
    let mut effort_rows = Vec::new();
    let mut probability_rows = Vec::new();
    for contest in profile.iter_contests() {
        for &p in &contest.participants {
            effort_rows.push(EffortRow {
                contestant: names.contestants[p].clone(),
                contest: contest.id.to_string(),
                effort: efforts.require(p, &contest.id)?,
            });
            probability_rows.push(ProbabilityRow {
                contestant: names.contestants[p].clone(),
                contest: contest.id.to_string(),
                probability: probabilities[&(p, contest.id.clone())],
            });
        }
    }
    Ok(ReportFile {
        mode: match mode {
            PrizeMode::Indivisible => "ipm".to_owned(),
            PrizeMode::Divisible => "dpm".to_owned(),
        },
        lambda: names
            .contestants
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), lambda.get(i)))
            .collect(),
        efforts: effort_rows,
        probabilities: probability_rows,
        contestant_utilities: names
            .contestants
            .iter()
            .zip(&contestant_utilities)
            .map(|(id, u)| (id.clone(), *u))
            .collect(),
        designer_utilities: names
            .designers
            .iter()
            .zip(&designer_utilities)
            .map(|(id, u)| (id.clone(), *u))
            .collect(),
        solver: trace.map(|(t, c)| SolverSummary {
            step_mode: step_mode_label(c.step_mode),
            epsilon: c.epsilon,
            epsilon_prime: c.epsilon_prime(),
            iterations: t.iterations,
            final_residual: t.max_residual(),
            floor_clamps: t.floor_clamps,
        }),
        residual_history: trace
            .map(|(t, _)| t.residual_history.clone())
            .unwrap_or_default(),
        certification,
        profile: embed_profile.then(|| InstanceFile::from_parts(instance, profile, mode, names)),
    })
}

fn solve_once(loaded: &Loaded, flags: &SolverFlags) -> Result<(ReportFile, bool), i32> {
    let config = flags.config();
    let contests = loaded.profile.all_contests();
    let trace = match solve_emv(&loaded.instance, &contests, &config, None) {
        Ok(t) => t,
        Err(Error::NonConvergence {
            target,
            achieved,
            iterations,
            trace,
        }) => {
            eprintln!(
                "non-convergence: residual {achieved:.3e} after {iterations} evaluations (target {target:.3e})"
            );
            eprintln!("lambda at stop: {:?}", trace.lambda.values());
            let tail: Vec<String> = trace
                .residual_history
                .iter()
                .rev()
                .take(8)
                .rev()
                .map(|r| format!("{r:.3e}"))
                .collect();
            eprintln!("residual history tail: {}", tail.join(" "));
            return Err(EXIT_NONCONVERGENCE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return Err(EXIT_VALIDATION);
        }
    };
    let scale = 1.0 + config.epsilon_prime();
    let run = (|| -> Result<(ReportFile, bool), Error> {
        let efforts =
            reconstruct_equilibrium(&loaded.instance, &contests, &trace.lambda, Some(scale))?;
        let eps_report = verify_epsilon_equilibrium(
            &loaded.instance,
            &loaded.profile,
            &efforts,
            config.epsilon,
        )?;
        let emv = check_emv_regularized(
            &loaded.instance,
            &contests,
            &trace.lambda,
            &trace.a_vector,
            config.epsilon_prime(),
        )?;
        let mut notes = emv.violations.clone();
        if trace
            .lambda
            .values()
            .iter()
            .enumerate()
            .any(|(i, &l)| l == 0.0 && contests.iter().any(|c| c.involves(i)))
        {
            // The equilibrium set is only unique up to slack of
            // zero-multiplier contestants; flag it rather than resolve it.
            notes.push("zero multiplier present: canonical minimal efforts reported".to_owned());
        }
        let certification = Certification {
            emv_certified: emv.certified,
            epsilon_pass: eps_report.pass,
            min_deviation_ratio: eps_report.min_ratio,
            notes,
        };
        let report = report_from_solution(
            &loaded.instance,
            &loaded.profile,
            &loaded.names,
            loaded.mode,
            &efforts,
            &trace.lambda,
            Some((&trace, &config)),
            certification,
            false,
        )?;
        Ok((report, eps_report.pass))
    })();
    run.map_err(|e| {
        eprintln!("error: {e}");
        EXIT_VALIDATION
    })
}

/// `solve`: compute, reconstruct, verify, report.
pub fn cmd_solve(instance_path: &Path, flags: &SolverFlags, out: Option<&Path>) -> i32 {
    let loaded = match load_instance(instance_path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let (report, pass) = match solve_once(&loaded, flags) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let text = match to_json(&report) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(code) = write_or_print(out, &text) {
        return code;
    }
    if pass {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// One line of a random-batch run.
#[derive(Debug, Clone)]
pub struct RandomSolveLine {
    pub index: usize,
    pub pass: bool,
    pub min_ratio: Option<f64>,
    pub error: Option<String>,
}

/// Solves and verifies `count` seeded random instances; shared by the
/// `solve --random` command and the acceptance suite.
pub fn solve_random_batch(count: usize, seed: u64, flags: &SolverFlags) -> Vec<RandomSolveLine> {
    let mut rng = randgen::rng_from_seed(seed);
    let config = flags.config();
    let mut lines = Vec::new();
    for index in 0..count {
        let (instance, profile) = randgen::random_instance(&mut rng);
        let contests = profile.all_contests();
        let result = solve_emv(&instance, &contests, &config, None).and_then(|trace| {
            let scale = 1.0 + config.epsilon_prime();
            let efforts =
                reconstruct_equilibrium(&instance, &contests, &trace.lambda, Some(scale))?;
            verify_epsilon_equilibrium(&instance, &profile, &efforts, config.epsilon)
        });
        lines.push(match result {
            Ok(report) => RandomSolveLine {
                index,
                pass: report.pass,
                min_ratio: Some(report.min_ratio),
                error: None,
            },
            Err(e) => RandomSolveLine {
                index,
                pass: false,
                min_ratio: None,
                error: Some(e.to_string()),
            },
        });
    }
    lines
}

/// `solve --random`: seeded batch over random instances; passes iff every
/// instance verifies at the requested precision.
pub fn cmd_solve_random(count: usize, seed: u64, flags: &SolverFlags) -> i32 {
    let mut failures = 0usize;
    for line in solve_random_batch(count, seed, flags) {
        let verdict = if line.pass { "PASS" } else { "FAIL" };
        match (&line.min_ratio, &line.error) {
            (Some(r), _) => println!(
                "[{verdict}] instance {}: min deviation ratio {r:.12}",
                line.index
            ),
            (None, Some(e)) => println!("[{verdict}] instance {}: {e}", line.index),
            _ => unreachable!(),
        }
        if !line.pass {
            failures += 1;
        }
    }
    if failures == 0 {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// `build`: construct the designer equilibrium for the instance's prize
/// mode and emit profile plus certification report.
pub fn cmd_build(
    instance_path: &Path,
    mode_override: Option<PrizeMode>,
    flags: &SolverFlags,
    out: Option<&Path>,
    profile_out: Option<&Path>,
) -> i32 {
    let loaded = match load_with(instance_path, true) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mode = mode_override.unwrap_or(loaded.mode);
    let result = match mode {
        PrizeMode::Indivisible => {
            // 21-point bias-ratio grid over two decades for the
            // second-substage spot check.
            let grid: Vec<f64> = (0..21).map(|k| 10f64.powf(-2.0 + 0.2 * k as f64)).collect();
            let config = SolverConfig {
                epsilon: 1e-11,
                ..flags.config()
            };
            match build_wde(&loaded.instance, &grid, &config) {
                Ok(wde) => {
                    let names = Names {
                        contestants: loaded.names.contestants.clone(),
                        designers: loaded.names.designers.clone(),
                    };
                    let mut notes: Vec<String> = wde.emv_check.violations.clone();
                    notes.push(format!(
                        "congestion equilibrium certified: {} ({} improvement steps)",
                        wde.pne.certified,
                        wde.pne.trace.len()
                    ));
                    notes.push(format!(
                        "balanced probability gap {:.3e}",
                        wde.probability_gap
                    ));
                    for d in &wde.bias_deviations {
                        notes.push(format!(
                            "designer {} bias-grid improvement {:+.3e}",
                            names.designers[d.designer], d.improvement
                        ));
                    }
                    let ok = wde.emv_check.certified && wde.pne.certified;
                    let certification = Certification {
                        emv_certified: wde.emv_check.certified,
                        epsilon_pass: ok,
                        min_deviation_ratio: 1.0,
                        notes,
                    };
                    report_from_solution(
                        &loaded.instance,
                        &wde.profile,
                        &names,
                        PrizeMode::Indivisible,
                        &wde.efforts,
                        &wde.lambda,
                        None,
                        certification,
                        true,
                    )
                    .map(|r| (r, ok))
                }
                Err(e) => Err(e),
            }
        }
        PrizeMode::Divisible => match build_dpm_spe(&loaded.instance) {
            Ok(out) => {
                let mut notes = out.emv_check.violations.clone();
                notes.extend(out.proportional.prize_share_violations.clone());
                notes.extend(out.proportional.probability_violations.clone());
                let ok = out.emv_check.certified && out.proportional.pass;
                let certification = Certification {
                    emv_certified: out.emv_check.certified,
                    epsilon_pass: ok,
                    min_deviation_ratio: 1.0,
                    notes,
                };
                report_from_solution(
                    &loaded.instance,
                    &out.profile,
                    &loaded.names,
                    PrizeMode::Divisible,
                    &out.efforts,
                    &out.lambda,
                    None,
                    certification,
                    true,
                )
                .map(|r| (r, ok))
            }
            Err(e) => Err(e),
        },
    };
    let (report, ok) = match result {
        Ok(r) => r,
        Err(Error::DominantContestant {
            index,
            effort,
            half_total,
        }) => {
            eprintln!(
                "validation: contestant {} holds {effort}, more than half the total effort {half_total}",
                loaded.names.contestants[index]
            );
            return EXIT_VALIDATION;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    if let Some(path) = profile_out {
        if let Some(profile) = &report.profile {
            let text = match to_json(profile) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            if let Err(code) = write_or_print(Some(path), &text) {
                return code;
            }
        }
    }
    let text = match to_json(&report) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(code) = write_or_print(out, &text) {
        return code;
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

/// `repro`: run an embedded counterexample and compare against the
/// published digits.
pub fn cmd_repro(case: &str, out: Option<&Path>) -> i32 {
    let run = match repro::run_case(case) {
        Ok(r) => r,
        Err(Error::NonConvergence { .. }) => {
            eprintln!("non-convergence while reproducing {case}");
            return EXIT_NONCONVERGENCE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    for check in &run.outcome.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {case} {}: got {:.17e} want {:.17e} (tol {:.1e})",
            check.name, check.got, check.want, check.tolerance
        );
    }
    if let Some(path) = out {
        // Emit the full report of every solved sub-instance plus the
        // check table.
        let mut reports = Vec::new();
        for (label, instance, profile, names, solved) in &run.solved {
            let certification = Certification {
                emv_certified: true,
                epsilon_pass: run.outcome.passed,
                min_deviation_ratio: 1.0,
                notes: vec![format!("repro sub-case {label}")],
            };
            match report_from_solution(
                instance,
                profile,
                names,
                repro::fixture_mode(case),
                &solved.efforts,
                &solved.lambda,
                None,
                certification,
                true,
            ) {
                Ok(r) => reports.push((label.clone(), r)),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            }
        }
        #[derive(serde::Serialize)]
        struct ReproDocument<'a> {
            case: &'a str,
            passed: bool,
            checks: &'a [repro::Check],
            reports: Vec<(String, ReportFile)>,
        }
        let doc = ReproDocument {
            case,
            passed: run.outcome.passed,
            checks: &run.outcome.checks,
            reports,
        };
        let text = match to_json(&doc) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        if let Err(code) = write_or_print(Some(path), &text) {
            return code;
        }
    }
    if run.outcome.passed {
        println!("[PASS] {case}: all {} checks", run.outcome.checks.len());
        EXIT_OK
    } else {
        println!("[FAIL] {case}");
        EXIT_MISMATCH
    }
}

/// `verify`: recheck a report's efforts against the instance.
pub fn cmd_verify(instance_path: &Path, report_path: &Path, epsilon: Option<f64>) -> i32 {
    let loaded = match load_instance(instance_path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let text = match read_file(report_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let report = match ReportFile::parse_str(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", report_path.display());
            return EXIT_USAGE;
        }
    };
    let eps = epsilon
        .or(report.solver.as_ref().map(|s| s.epsilon))
        .unwrap_or(1e-6);
    let efforts = match report.effort_profile(&loaded.names) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match verify_epsilon_equilibrium(&loaded.instance, &loaded.profile, &efforts, eps) {
        Ok(result) => {
            println!(
                "min deviation ratio {:.15} at epsilon {eps:e}: {}",
                result.min_ratio,
                if result.pass { "PASS" } else { "FAIL" }
            );
            if result.pass {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    }
}

/// Grid specification for `deviate`.
#[derive(Debug, Clone, Default)]
pub struct DeviateSpec {
    pub designer: String,
    pub bias_ratios: Vec<f64>,
    pub rewards: Vec<f64>,
    pub pairs: Vec<[String; 2]>,
}

/// `deviate`: evaluate a designer's deviation grid and dump the audit
/// trail as CSV (candidate, utility, solver residual).
pub fn cmd_deviate(
    instance_path: &Path,
    spec: &DeviateSpec,
    flags: &SolverFlags,
    out: Option<&Path>,
) -> i32 {
    let loaded = match load_instance(instance_path) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let designer = match loaded.names.designer_index(&spec.designer) {
        Some(j) => j,
        None => {
            eprintln!("error: unknown designer {}", spec.designer);
            return EXIT_USAGE;
        }
    };
    let held = &loaded.profile.contests[designer];
    let grid = if spec.pairs.is_empty() && spec.rewards.is_empty() {
        if spec.bias_ratios.is_empty() {
            eprintln!("error: supply --bias-ratios (and optionally --pairs/--rewards)");
            return EXIT_USAGE;
        }
        DeviationGrid::bias_ratio_multipliers(held, &spec.bias_ratios)
    } else {
        if held.len() != 1 {
            eprintln!("error: pair/reward grids need a single-contest designer");
            return EXIT_USAGE;
        }
        let base = &held[0];
        let mut pairs = Vec::new();
        if spec.pairs.is_empty() {
            pairs.push(base.participants);
        }
        for pair in &spec.pairs {
            let a = loaded.names.contestant_index(&pair[0]);
            let b = loaded.names.contestant_index(&pair[1]);
            match (a, b) {
                (Some(a), Some(b)) if a != b => pairs.push([a, b]),
                _ => {
                    eprintln!("error: bad pair {}:{}", pair[0], pair[1]);
                    return EXIT_USAGE;
                }
            }
        }
        let rewards = if spec.rewards.is_empty() {
            vec![base.reward]
        } else {
            spec.rewards.clone()
        };
        let ratios = if spec.bias_ratios.is_empty() {
            vec![base.biases[0] / base.biases[1]]
        } else {
            spec.bias_ratios.clone()
        };
        let biases: Vec<[f64; 2]> = ratios
            .iter()
            .map(|r| [r / (r + 1.0), 1.0 / (r + 1.0)])
            .collect();
        DeviationGrid::single_contest(&base.id, designer, &pairs, &rewards, &biases)
    };
    let result: DeviationSearchResult = match designer_deviation_search(
        &loaded.instance,
        &loaded.profile,
        designer,
        &grid,
        &flags.config(),
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let mut csv = String::from("index,label,converged,utility,residual\n");
    for row in &result.audit {
        csv.push_str(&format!(
            "{},{:?},{},{},{}\n",
            row.index,
            row.label,
            row.converged,
            row.utility.map(|u| format!("{u:.17e}")).unwrap_or_default(),
            row.residual.map(|r| format!("{r:.3e}")).unwrap_or_default(),
        ));
    }
    if let Err(code) = write_or_print(out, &csv) {
        return code;
    }
    println!("base utility {:.17e}", result.base_utility);
    if let Some(best) = &result.best {
        println!(
            "best candidate #{} {}: utility {:.17e} ({:+.3e} vs base)",
            best.index,
            best.label,
            best.utility,
            best.utility - result.base_utility
        );
    } else {
        println!("no candidate converged");
    }
    EXIT_OK
}

/// `emit-plotdata`: deterministic CSV extracts of a report.
pub fn cmd_emit_plotdata(report_path: &Path, out_dir: &Path) -> i32 {
    let text = match read_file(report_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let report = match ReportFile::parse_str(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", report_path.display());
            return EXIT_USAGE;
        }
    };
    if let Err(e) = fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return EXIT_USAGE;
    }
    let mut residuals = String::from("iteration,max_relative_residual\n");
    for (i, r) in report.residual_history.iter().enumerate() {
        residuals.push_str(&format!("{i},{r:.17e}\n"));
    }
    let mut efforts = String::from("contestant,contest,effort\n");
    for row in &report.efforts {
        efforts.push_str(&format!(
            "{},{},{:.17e}\n",
            row.contestant, row.contest, row.effort
        ));
    }
    let mut utilities_csv = String::from("kind,id,utility\n");
    for (id, u) in &report.contestant_utilities {
        utilities_csv.push_str(&format!("contestant,{id},{u:.17e}\n"));
    }
    for (id, u) in &report.designer_utilities {
        utilities_csv.push_str(&format!("designer,{id},{u:.17e}\n"));
    }
    for (name, content) in [
        ("residual_history.csv", residuals),
        ("efforts.csv", efforts),
        ("utilities.csv", utilities_csv),
    ] {
        let path: PathBuf = out_dir.join(name);
        if let Err(e) = fs::write(&path, content) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    EXIT_OK
}

/// Case-insensitive prize-mode flag.
pub fn parse_mode(text: &str) -> Result<PrizeMode, String> {
    match text {
        "ipm" => Ok(PrizeMode::Indivisible),
        "dpm" => Ok(PrizeMode::Divisible),
        other => Err(format!("unknown mode {other:?} (ipm, dpm)")),
    }
}

/// Parses a comma-separated float list.
pub fn parse_float_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

/// Parses "a:b,c:d" into id pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<[String; 2]>, String> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            let mut it = s.split(':');
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => Ok([a.trim().to_owned(), b.trim().to_owned()]),
                _ => Err(format!("bad pair {s:?}, expected a:b")),
            }
        })
        .collect()
}

/// Fixture export used by tests: the published counterexample instances as
/// instance files.
pub fn fixture_instance_file(case: &str, deviation: bool) -> Option<InstanceFile> {
    let (instance, profile, names, mode) = match (case, deviation) {
        ("thm4.4", false) => {
            let (i, p, n) = repro::fixture_bias_counterexample(1000.0);
            (i, p, n, PrizeMode::Indivisible)
        }
        ("thm4.4", true) => {
            let (i, p, n) = repro::fixture_bias_counterexample(990.0);
            (i, p, n, PrizeMode::Indivisible)
        }
        ("thm5.1", false) => {
            let (i, p, n) = repro::fixture_divisible_counterexample(1.0);
            (i, p, n, PrizeMode::Divisible)
        }
        ("thm5.1", true) => {
            let (i, p, n) = repro::fixture_divisible_counterexample(2.0);
            (i, p, n, PrizeMode::Divisible)
        }
        ("thm4.1", false) => {
            let (i, p, n) = repro::fixture_no_spe(repro::NoSpeVariant::SymmetricBase);
            (i, p, n, PrizeMode::Indivisible)
        }
        ("thm4.1", true) => {
            let (i, p, n) = repro::fixture_no_spe(repro::NoSpeVariant::ParticipantDeviation);
            (i, p, n, PrizeMode::Indivisible)
        }
        _ => return None,
    };
    Some(InstanceFile::from_parts(&instance, &profile, mode, &names))
}
