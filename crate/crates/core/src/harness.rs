//! Seeded Monte Carlo experiments: trial generation, solving, scoring,
//! aggregation and persistence.
//!
//! Trial `i` of cell `c` draws everything from
//! `derive_seed(master_seed, [c, i])`, so any single trial can be replayed
//! in isolation and results do not depend on thread scheduling.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{coherence_profile, CoherenceProfile};
use crate::ensembles::{alltop_gabor, gaussian_matrix, generate_signal, SignalProfile};
use crate::guarantees::{
    certify, reconstruction_bound, success_probability, GuaranteeReport, OmpVariant, ProbabilityBound,
};
use crate::io::read_matrix;
use crate::model::{synthesize_measurement, CMatrix, MeasurementInstance, NoiseModel, SensingMatrix};
use crate::rng::derive_seed;
use crate::solvers::{least_squares_debias, omp_fixed, omp_stopping, sost, stopping_threshold};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixSource {
    Gaussian { n: usize, p: usize, seed: u64 },
    Gabor { n: usize },
    Identity { n: usize },
    /// Matrix file; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl MatrixSource {
    pub fn build(&self) -> Result<SensingMatrix> {
        match self {
            MatrixSource::Gaussian { n, p, seed } => gaussian_matrix(*n, *p, *seed),
            MatrixSource::Gabor { n } => alltop_gabor(*n),
            MatrixSource::Identity { n } => SensingMatrix::new(CMatrix::identity(*n, *n), format!("identity n={n}")),
            MatrixSource::File { path } => read_matrix(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    OmpFixed,
    OmpStopping,
    Sost,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::OmpFixed => "omp-fixed",
            SolverKind::OmpStopping => "omp-stopping",
            SolverKind::Sost => "sost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `sigma sqrt((1 + alpha) ln p)`.
    #[default]
    NoiseLevel,
    Explicit { delta: f64 },
}

fn default_alpha() -> f64 {
    1.0
}

/// One cell of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub matrix: MatrixSource,
    pub k: usize,
    pub signal: SignalProfile,
    /// Noise variance per entry.
    pub sigma2: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub solver: SolverKind,
    /// Used by `omp-stopping` only.
    #[serde(default)]
    pub threshold: ThresholdRule,
    pub trials: usize,
    /// Overrides the experiment-wide seed for this cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

impl TrialConfig {
    fn validate(&self, matrix: &SensingMatrix) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be finite and >= 0, got {}", self.sigma2)));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        let cap = matrix.n().min(matrix.p());
        if self.k == 0 || self.k > cap {
            return Err(Error::invalid(format!("k must satisfy 1 <= k <= min(n, p) = {cap}, got {}", self.k)));
        }
        if let ThresholdRule::Explicit { delta } = self.threshold {
            if !(delta >= 0.0) {
                return Err(Error::invalid(format!("explicit threshold must be >= 0, got {delta}")));
            }
        }
        self.signal.magnitudes(self.k)?;
        Ok(())
    }
}

/// A grid of cells sharing one master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(rename = "cell")]
    pub cells: Vec<TrialConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a TOML config, resolving relative matrix paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for cell in &mut config.cells {
            if let MatrixSource::File { path: p } = &mut cell.matrix {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }
}

/// A validated cell with its matrix built once.
#[derive(Debug, Clone)]
pub struct PreparedCell {
    pub id: usize,
    pub config: TrialConfig,
    pub matrix: Arc<SensingMatrix>,
    pub master_seed: u64,
    /// Stopping threshold actually used, for `omp-stopping`.
    pub delta: Option<f64>,
}

impl PreparedCell {
    pub fn new(id: usize, config: TrialConfig, master_seed: u64) -> Result<Self> {
        let matrix = config.matrix.build()?;
        Self::with_matrix(id, config, Arc::new(matrix), master_seed)
    }

    pub fn with_matrix(id: usize, config: TrialConfig, matrix: Arc<SensingMatrix>, master_seed: u64) -> Result<Self> {
        config.validate(&matrix)?;
        let delta = match config.threshold {
            ThresholdRule::NoiseLevel => noise_level_delta(&config, matrix.p())?,
            ThresholdRule::Explicit { delta } => delta,
        };
        Ok(Self {
            id,
            master_seed: config.master_seed.unwrap_or(master_seed),
            delta: (config.solver == SolverKind::OmpStopping).then_some(delta),
            config,
            matrix,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.master_seed, &[self.id as u64, trial as u64])
    }

    /// The measurement seen by trial `trial`, shared by every solver.
    pub fn instance(&self, trial: usize) -> Result<MeasurementInstance> {
        let seed = self.trial_seed(trial);
        let signal = generate_signal(self.matrix.p(), self.config.k, &self.config.signal, derive_seed(seed, &[0]))?;
        let noise = NoiseModel::new(self.config.sigma2)?;
        let mut inst = synthesize_measurement(self.matrix.clone(), signal, noise, derive_seed(seed, &[1]))?;
        inst.seed = seed;
        Ok(inst)
    }
}

fn noise_level_delta(config: &TrialConfig, p: usize) -> Result<f64> {
    if p < 2 {
        return Ok(0.0);
    }
    stopping_threshold(config.sigma2.sqrt(), p, config.alpha)
}

/// Scored result of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub cell_id: usize,
    pub trial: usize,
    pub seed: u64,
    pub exact: bool,
    /// Selected indices inside the true support.
    pub partial_count: usize,
    /// Entry `k' - 1`: the first `k'` selections are `k'` largest entries.
    pub topk_flags: Vec<bool>,
    /// Largest `k'` whose flag is set, 0 if none.
    pub topk_detected: usize,
    /// `||beta_hat - beta||^2` after debiasing on the recovered support.
    pub error_sq: Option<f64>,
    pub iterations: usize,
    pub termination: String,
    /// A solver error ended the trial; counts as unsuccessful.
    pub failed: bool,
}

impl TrialOutcome {
    fn failed(cell_id: usize, trial: usize, seed: u64) -> Self {
        Self {
            cell_id,
            trial,
            seed,
            exact: false,
            partial_count: 0,
            topk_flags: Vec::new(),
            topk_detected: 0,
            error_sq: None,
            iterations: 0,
            termination: "failed".into(),
            failed: true,
        }
    }
}

struct Selection {
    order: Vec<usize>,
    iterations: usize,
    termination: &'static str,
}

fn solve(solver: SolverKind, inst: &MeasurementInstance, k: usize, delta: Option<f64>) -> Result<Selection> {
    let (x, y) = (inst.matrix.as_ref(), &inst.observation);
    let from = |r: crate::solvers::RecoveryResult| Selection {
        order: r.support.order().to_vec(),
        iterations: r.iterations,
        termination: r.termination.as_str(),
    };
    Ok(match solver {
        SolverKind::OmpFixed => from(omp_fixed(x, y, k)?),
        SolverKind::OmpStopping => from(omp_stopping(x, y, delta.unwrap_or(0.0), None)?),
        SolverKind::Sost => Selection {
            order: sost(x, y, k)?.order().to_vec(),
            iterations: k,
            termination: "one-step",
        },
    })
}

fn score(cell_id: usize, trial: usize, inst: &MeasurementInstance, sel: &Selection) -> TrialOutcome {
    let signal = &inst.signal;
    let truth = signal.support();
    let k = signal.k();
    let magnitude = |j: usize| truth.binary_search(&j).ok().map(|pos| signal.values()[pos].norm());
    let partial_count = sel.order.iter().filter(|&&j| magnitude(j).is_some()).count();
    let mut sorted: Vec<usize> = sel.order.clone();
    sorted.sort_unstable();
    let exact = sorted == truth;
    // Tie-aware: the first k' picks are all on the support with magnitude
    // at least the k'-th largest.
    let mags = signal.sorted_magnitudes();
    let topk_flags: Vec<bool> = (1..=k.min(sel.order.len()))
        .map(|kp| {
            sel.order[..kp]
                .iter()
                .all(|&j| magnitude(j).is_some_and(|m| m >= mags[kp - 1]))
        })
        .collect();
    let topk_detected = topk_flags.iter().rposition(|&f| f).map_or(0, |i| i + 1);
    let error_sq = if sel.order.is_empty() {
        Some(signal.norm_sq())
    } else {
        least_squares_debias(&inst.matrix, &sel.order, &inst.observation)
            .ok()
            .map(|b| (b - signal.to_dense()).norm_squared())
    };
    TrialOutcome {
        cell_id,
        trial,
        seed: inst.seed,
        exact,
        partial_count,
        topk_flags,
        topk_detected,
        error_sq,
        iterations: sel.iterations,
        termination: sel.termination.into(),
        failed: false,
    }
}

/// Runs and scores trial `trial`; solver errors become failed outcomes.
pub fn run_trial(cell: &PreparedCell, trial: usize) -> TrialOutcome {
    let seed = cell.trial_seed(trial);
    let outcome = cell.instance(trial).and_then(|inst| {
        let sel = solve(cell.config.solver, &inst, cell.config.k, cell.delta)?;
        Ok(score(cell.id, trial, &inst, &sel))
    });
    outcome.unwrap_or_else(|_| TrialOutcome::failed(cell.id, trial, seed))
}

pub fn run_trials(cell: &PreparedCell) -> Vec<TrialOutcome> {
    (0..cell.config.trials)
        .into_par_iter()
        .map(|t| run_trial(cell, t))
        .collect()
}

pub const CSV_HEADER: [&str; 15] = [
    "cell_id",
    "trial",
    "seed",
    "solver",
    "n",
    "p",
    "k",
    "sigma2",
    "alpha",
    "exact",
    "partial_count",
    "topk_detected",
    "iterations",
    "error_sq",
    "termination",
];

fn csv_row(cell: &PreparedCell, o: &TrialOutcome) -> [String; 15] {
    [
        o.cell_id.to_string(),
        o.trial.to_string(),
        o.seed.to_string(),
        cell.config.solver.as_str().into(),
        cell.matrix.n().to_string(),
        cell.matrix.p().to_string(),
        cell.config.k.to_string(),
        format!("{:e}", cell.config.sigma2),
        format!("{:e}", cell.config.alpha),
        o.exact.to_string(),
        o.partial_count.to_string(),
        o.topk_detected.to_string(),
        o.iterations.to_string(),
        o.error_sq.map_or(String::new(), |e| format!("{e:.17e}")),
        o.termination.clone(),
    ]
}

/// Bound values and hypothesis flags attached to each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBounds {
    pub coherence: Option<CoherenceProfile>,
    /// Full certification against the trial-0 signal; magnitudes, and so
    /// every signal statistic, are the same in all trials of a cell.
    pub guarantees: Option<GuaranteeReport>,
    pub success_probability: ProbabilityBound,
    pub reconstruction_bound: f64,
    pub stopping_threshold: Option<f64>,
    pub strong_coherence: bool,
    pub p_at_least_128: bool,
    /// All hypotheses of the probability bound hold and it is non-vacuous.
    pub bound_asserted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_id: usize,
    pub matrix: String,
    pub solver: SolverKind,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub sigma2: f64,
    pub alpha: f64,
    pub trials: usize,
    pub successes: usize,
    pub failed: usize,
    pub success_rate: f64,
    pub standard_error: f64,
    pub mean_error_sq: Option<f64>,
    pub p95_error_sq: Option<f64>,
    pub mean_iterations: f64,
    /// Among exact recoveries, the fraction within the reconstruction
    /// bound.
    pub reconstruction_fraction: Option<f64>,
    pub bounds: CellBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub master_seed: u64,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub total_cells: usize,
    pub completed_cells: Vec<usize>,
    pub complete: bool,
}

/// `(rate, binomial standard error)`.
pub fn binomial_rate(successes: usize, trials: usize) -> (f64, f64) {
    let rate = successes as f64 / trials as f64;
    (rate, (rate * (1.0 - rate) / trials as f64).sqrt())
}

/// Nearest-rank percentile of a non-empty sample.
fn percentile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn cell_bounds(cell: &PreparedCell) -> CellBounds {
    let cfg = &cell.config;
    let p = cell.matrix.p();
    let sigma = cfg.sigma2.sqrt();
    let coherence = coherence_profile(&cell.matrix).ok();
    let guarantees = coherence.as_ref().and_then(|prof| {
        let inst = cell.instance(0).ok()?;
        certify(prof, &inst.signal, sigma, cfg.alpha).ok()
    });
    let variant = match cfg.solver {
        SolverKind::OmpStopping => OmpVariant::Stopping,
        _ => OmpVariant::Fixed,
    };
    let success = success_probability(cfg.k, p, cfg.alpha, variant);
    let strong = guarantees.as_ref().is_some_and(|g| g.strong_coherence.satisfied);
    CellBounds {
        coherence,
        success_probability: success,
        reconstruction_bound: reconstruction_bound(cfg.k, sigma, cfg.alpha, p),
        stopping_threshold: cell.delta,
        strong_coherence: strong,
        p_at_least_128: success.applicable,
        bound_asserted: strong && success.applicable && !success.vacuous && cfg.solver != SolverKind::Sost,
        guarantees,
    }
}

pub fn summarize(cell: &PreparedCell, outcomes: &[TrialOutcome]) -> CellSummary {
    let cfg = &cell.config;
    let trials = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.exact).count();
    let (success_rate, standard_error) = binomial_rate(successes, trials);
    let mut errors: Vec<f64> = outcomes.iter().filter_map(|o| o.error_sq).collect();
    let mean_error_sq = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    let p95_error_sq = (!errors.is_empty()).then(|| percentile(&mut errors, 0.95));
    let bounds = cell_bounds(cell);
    let exact_errors: Vec<f64> = outcomes.iter().filter(|o| o.exact).filter_map(|o| o.error_sq).collect();
    let reconstruction_fraction = (!exact_errors.is_empty()).then(|| {
        exact_errors.iter().filter(|&&e| e <= bounds.reconstruction_bound).count() as f64 / exact_errors.len() as f64
    });
    CellSummary {
        cell_id: cell.id,
        matrix: cell.matrix.label().into(),
        solver: cfg.solver,
        n: cell.matrix.n(),
        p: cell.matrix.p(),
        k: cfg.k,
        sigma2: cfg.sigma2,
        alpha: cfg.alpha,
        trials,
        successes,
        failed: outcomes.iter().filter(|o| o.failed).count(),
        success_rate,
        standard_error,
        mean_error_sq,
        p95_error_sq,
        mean_iterations: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>() / trials as f64,
        reconstruction_fraction,
        bounds,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn thread_pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match workers {
        None => Ok(None),
        Some(0) => Err(Error::invalid("workers must be >= 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(Some)
            .map_err(|e| Error::invalid(format!("thread pool: {e}"))),
    }
}

/// Runs every cell in order, writing `trials.csv`, `summary.json` and
/// `manifest.json` to `out_dir`. The CSV and manifest are flushed after
/// each cell, so an I/O failure leaves the completed cells on disk.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
    workers: Option<usize>,
) -> Result<ExperimentSummary> {
    if config.cells.is_empty() {
        return Err(Error::invalid("experiment has no cells"));
    }
    let cells: Vec<PreparedCell> = config
        .cells
        .iter()
        .enumerate()
        .map(|(id, c)| PreparedCell::new(id, c.clone(), config.master_seed))
        .collect::<Result<_>>()?;
    let pool = thread_pool(workers)?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut writer = csv::Writer::from_path(out_dir.join("trials.csv"))?;
    writer.write_record(CSV_HEADER)?;
    writer.flush()?;
    let mut manifest = Manifest {
        master_seed: config.master_seed,
        total_cells: cells.len(),
        completed_cells: Vec::new(),
        complete: false,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    let mut summary = ExperimentSummary {
        master_seed: config.master_seed,
        cells: Vec::with_capacity(cells.len()),
    };
    for cell in &cells {
        let outcomes = match &pool {
            Some(pool) => pool.install(|| run_trials(cell)),
            None => run_trials(cell),
        };
        for o in &outcomes {
            writer.write_record(csv_row(cell, o))?;
        }
        writer.flush()?;
        summary.cells.push(summarize(cell, &outcomes));
        manifest.completed_cells.push(cell.id);
        write_json(&manifest_path, &manifest)?;
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    manifest.complete = true;
    write_json(&manifest_path, &manifest)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRate {
    pub solver: SolverKind,
    pub successes: usize,
    pub rate: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTrial {
    pub trial: usize,
    pub seed: u64,
    pub fixed: TrialOutcome,
    pub stopping: TrialOutcome,
    pub sost: TrialOutcome,
    /// `omp-stopping` ran exactly `k` iterations and selected the same
    /// sequence as `omp-fixed`.
    pub stopping_matches_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverComparison {
    pub trials: usize,
    pub stopping_threshold: f64,
    pub rates: Vec<SolverRate>,
    pub identical_in_k_fraction: f64,
    pub paired: Vec<PairedTrial>,
}

/// Runs all three solvers on the same measurement per trial. The
/// configured `solver` is ignored; the threshold rule sets `omp-stopping`'s
/// threshold.
pub fn compare_solvers(config: &TrialConfig, master_seed: u64) -> Result<SolverComparison> {
    let base = PreparedCell::new(0, config.clone(), master_seed)?;
    let delta = match config.threshold {
        ThresholdRule::NoiseLevel => noise_level_delta(config, base.matrix.p())?,
        ThresholdRule::Explicit { delta } => delta,
    };
    let k = config.k;
    let paired: Vec<PairedTrial> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = base.trial_seed(trial);
            let inst = base.instance(trial);
            let run = |solver: SolverKind| -> (TrialOutcome, Option<Vec<usize>>) {
                let sel = inst.as_ref().map_err(|_| ()).and_then(|inst| {
                    solve(solver, inst, k, Some(delta))
                        .map(|s| (score(0, trial, inst, &s), s.order))
                        .map_err(|_| ())
                });
                match sel {
                    Ok((o, order)) => (o, Some(order)),
                    Err(()) => (TrialOutcome::failed(0, trial, seed), None),
                }
            };
            let (fixed, fixed_order) = run(SolverKind::OmpFixed);
            let (stopping, stopping_order) = run(SolverKind::OmpStopping);
            let (sost, _) = run(SolverKind::Sost);
            let stopping_matches_fixed =
                stopping.iterations == k && fixed_order.is_some() && fixed_order == stopping_order;
            PairedTrial {
                trial,
                seed,
                fixed,
                stopping,
                sost,
                stopping_matches_fixed,
            }
        })
        .collect();
    let trials = paired.len();
    let rate = |solver: SolverKind, pick: fn(&PairedTrial) -> &TrialOutcome| {
        let successes = paired.iter().filter(|t| pick(t).exact).count();
        let (rate, standard_error) = binomial_rate(successes, trials);
        SolverRate {
            solver,
            successes,
            rate,
            standard_error,
        }
    };
    Ok(SolverComparison {
        trials,
        stopping_threshold: delta,
        rates: vec![
            rate(SolverKind::OmpFixed, |t| &t.fixed),
            rate(SolverKind::OmpStopping, |t| &t.stopping),
            rate(SolverKind::Sost, |t| &t.sost),
        ],
        identical_in_k_fraction: paired.iter().filter(|t| t.stopping_matches_fixed).count() as f64 / trials as f64,
        paired,
    })
}
