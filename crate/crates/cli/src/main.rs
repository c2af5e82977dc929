use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use omp_coherence::coherence::{check_strong_coherence, coherence_profile, welch_bound, wiggle};
use omp_coherence::diagnostics::{noise_sup_check, noise_tau, stoc_epsilon, submatrix_conditioning, verify_stoc, StocVector};
use omp_coherence::ensembles::{alltop_gabor, gaussian_matrix, generate_signal, AmplitudeProfile, PhaseRule, SignalProfile};
use omp_coherence::guarantees::certify;
use omp_coherence::harness::{compare_solvers, run_experiment, ExperimentConfig};
use omp_coherence::io::{read_matrix, read_signal, read_vector, write_matrix, write_signal, write_vector};
use omp_coherence::solvers::{least_squares_debias, omp_fixed, omp_stopping, sost, stopping_threshold};
use omp_coherence::{synthesize_measurement, NoiseModel};

#[derive(Parser)]
#[command(name = "ompc", version, about = "Orthogonal Matching Pursuit toolkit with coherence diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coherence profile and strong-coherence check of a matrix file.
    Analyze { matrix: PathBuf },
    /// Write a generated matrix, signal or observation.
    #[command(subcommand)]
    Generate(Generate),
    /// Flip column signs to reduce average coherence.
    Wiggle {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a support from an observation.
    Solve(SolveArgs),
    /// Evaluate every recovery guarantee for a signal.
    Certify {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Monte Carlo check of the statistical orthogonality condition.
    Stoc {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Test vector, observation format; all ones when absent.
        #[arg(long)]
        z_file: Option<PathBuf>,
        /// Defaults to `10 mu sqrt(2 ln p)`.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Monte Carlo conditioning of random column subsets.
    Conditioning {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Monte Carlo check of the correlated noise sup bound.
    NoiseSup {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Run an experiment grid from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Paired comparison of all solvers on one cell of a config.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        cell: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    Gaussian,
    Gabor,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    Flat,
    Linear,
    Geometric,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phase {
    Unit,
    RandomSign,
    RandomUniform,
}

#[derive(Subcommand)]
enum Generate {
    Matrix {
        #[arg(long, value_enum)]
        kind: MatrixKind,
        #[arg(long)]
        n: usize,
        /// Ignored for Gabor frames, which have `p = n^2`.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Signal {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "flat")]
        profile: ProfileKind,
        #[arg(long, default_value_t = 1.0)]
        min: f64,
        /// Decay ratio for the geometric profile.
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
        /// Increment for the linear profile.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, value_enum, default_value = "unit")]
        phase: Phase,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// `y = X beta + eta` with `eta ~ CN(0, sigma2 I)`.
    Observation {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    observation: PathBuf,
    /// Fixed number of iterations.
    #[arg(long, conflicts_with_all = ["delta", "sigma"])]
    k: Option<usize>,
    /// Explicit stopping threshold.
    #[arg(long, conflicts_with = "sigma")]
    delta: Option<f64>,
    /// Noise level for the threshold `sigma sqrt((1 + alpha) ln p)`.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// One-step thresholding instead of OMP; needs `--k`.
    #[arg(long)]
    sost: bool,
    #[arg(long)]
    debias: bool,
    /// Write the debiased signal here.
    #[arg(long, requires = "debias")]
    out: Option<PathBuf>,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn phase_rule(p: Phase) -> PhaseRule {
    match p {
        Phase::Unit => PhaseRule::Unit,
        Phase::RandomSign => PhaseRule::RandomSign,
        Phase::RandomUniform => PhaseRule::RandomUniform,
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let x = read_matrix(&args.matrix)?;
    let y = read_vector(&args.observation)?;
    let (order, iterations, termination) = if args.sost {
        let Some(k) = args.k else { bail!("--sost needs --k") };
        let s = sost(&x, &y, k)?;
        (s.order().to_vec(), k, "one-step")
    } else {
        let r = match (args.k, args.delta, args.sigma) {
            (Some(k), _, _) => omp_fixed(&x, &y, k)?,
            (None, Some(delta), _) => omp_stopping(&x, &y, delta, None)?,
            (None, None, Some(sigma)) => omp_stopping(&x, &y, stopping_threshold(sigma, x.p(), args.alpha)?, None)?,
            _ => bail!("one of --k, --delta or --sigma is required"),
        };
        (r.support.order().to_vec(), r.iterations, r.termination.as_str())
    };
    let mut report = json!({
        "support": order.iter().map(|j| j + 1).collect::<Vec<_>>(),
        "iterations": iterations,
        "termination": termination,
    });
    if args.debias && !order.is_empty() {
        let beta = least_squares_debias(&x, &order, &y)?;
        let signal = omp_coherence::SparseSignal::from_dense(&beta)?;
        report["coefficients"] = json!(signal
            .support()
            .iter()
            .zip(signal.values())
            .map(|(j, v)| json!([j + 1, v.re, v.im]))
            .collect::<Vec<_>>());
        if let Some(out) = &args.out {
            write_signal(&signal, out)?;
        }
    }
    print_json(&report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { matrix } => {
            let x = read_matrix(&matrix)?;
            let prof = coherence_profile(&x)?;
            let strong = check_strong_coherence(&prof);
            print_json(&json!({
                "n": prof.n,
                "p": prof.p,
                "mu": prof.mu,
                "nu": prof.nu,
                "spectral_norm": prof.spectral_norm,
                "mu_threshold": strong.mu_threshold,
                "nu_threshold": strong.nu_threshold,
                "satisfied": strong.satisfied,
                "welch_bound": welch_bound(prof.n, prof.p),
            }))
        }
        Command::Generate(Generate::Matrix { kind, n, p, seed, out }) => {
            let x = match kind {
                MatrixKind::Gaussian => {
                    let Some(p) = p else { bail!("--p is required for gaussian matrices") };
                    gaussian_matrix(n, p, seed)?
                }
                MatrixKind::Gabor => alltop_gabor(n)?,
            };
            write_matrix(&x, &out)?;
            print_json(&json!({ "n": x.n(), "p": x.p(), "label": x.label() }))
        }
        Command::Generate(Generate::Signal {
            p,
            k,
            profile,
            min,
            ratio,
            step,
            phase,
            seed,
            out,
        }) => {
            let amplitudes = match profile {
                ProfileKind::Flat => AmplitudeProfile::Flat { min },
                ProfileKind::Linear => AmplitudeProfile::LinearDecay { min, step },
                ProfileKind::Geometric => AmplitudeProfile::GeometricDecay { min, ratio },
            };
            let profile = SignalProfile {
                amplitudes,
                phase: phase_rule(phase),
            };
            let s = generate_signal(p, k, &profile, seed)?;
            write_signal(&s, &out)?;
            print_json(&json!({ "p": p, "k": k, "support": s.support().iter().map(|j| j + 1).collect::<Vec<_>>() }))
        }
        Command::Generate(Generate::Observation {
            matrix,
            signal,
            sigma2,
            seed,
            out,
        }) => {
            let x = Arc::new(read_matrix(&matrix)?);
            let s = read_signal(&signal)?;
            let inst = synthesize_measurement(x, s, NoiseModel::new(sigma2)?, seed)?;
            write_vector(&inst.observation, &out)?;
            print_json(&json!({ "n": inst.observation.len(), "noise_norm": inst.noise.norm() }))
        }
        Command::Wiggle { matrix, out } => {
            let x = read_matrix(&matrix)?;
            let before = coherence_profile(&x)?;
            let w = wiggle(&x);
            let after = coherence_profile(&w.matrix)?;
            write_matrix(&w.matrix, &out)?;
            print_json(&json!({
                "nu_before": before.nu,
                "nu_after": after.nu,
                "mu": after.mu,
                "sweeps": w.sweeps,
                "flipped": w.signs.iter().enumerate().filter(|(_, &s)| s < 0).map(|(j, _)| j + 1).collect::<Vec<_>>(),
            }))
        }
        Command::Solve(args) => solve(args),
        Command::Certify {
            matrix,
            signal,
            sigma,
            alpha,
        } => {
            let x = read_matrix(&matrix)?;
            let s = read_signal(&signal)?;
            print_json(&certify(&coherence_profile(&x)?, &s, sigma, alpha)?)
        }
        Command::Stoc {
            matrix,
            k,
            trials,
            seed,
            z_file,
            epsilon,
        } => {
            let x = read_matrix(&matrix)?;
            let z = match z_file {
                Some(path) => StocVector::Explicit(read_vector(&path)?.iter().copied().collect()),
                None => StocVector::Ones,
            };
            let epsilon = match epsilon {
                Some(e) => e,
                None => stoc_epsilon(coherence_profile(&x)?.mu, x.p()),
            };
            print_json(&verify_stoc(&x, k, &z, epsilon, trials, seed)?)
        }
        Command::Conditioning { matrix, k, trials, seed } => {
            let x = read_matrix(&matrix)?;
            print_json(&submatrix_conditioning(&x, k, trials, seed)?)
        }
        Command::NoiseSup {
            matrix,
            sigma,
            alpha,
            trials,
            seed,
        } => {
            let x = read_matrix(&matrix)?;
            let tau = noise_tau(sigma, alpha, x.p());
            print_json(&noise_sup_check(&x, sigma, tau, trials, seed, None)?)
        }
        Command::Experiment {
            config,
            out_dir,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let summary = run_experiment(&cfg, &out_dir, workers)?;
            print_json(&json!({
                "cells": summary.cells.iter().map(|c| json!({
                    "cell_id": c.cell_id,
                    "solver": c.solver,
                    "success_rate": c.success_rate,
                    "standard_error": c.standard_error,
                })).collect::<Vec<_>>(),
                "out_dir": out_dir,
            }))
        }
        Command::Compare { config, cell } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let Some(c) = cfg.cells.get(cell) else {
                bail!("config has {} cells, no cell {cell}", cfg.cells.len())
            };
            let cmp = compare_solvers(c, c.master_seed.unwrap_or(cfg.master_seed))?;
            print_json(&json!({
                "trials": cmp.trials,
                "stopping_threshold": cmp.stopping_threshold,
                "rates": cmp.rates,
                "identical_in_k_fraction": cmp.identical_in_k_fraction,
            }))
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
