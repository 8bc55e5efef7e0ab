//! Command-line front end.
//!
//! Flags resolve into a [`RunConfig`], which is echoed on stderr as one
//! JSON line (`config: {...}`) and can be replayed with `run --config`.
//! Results go to stdout, or to the `--out` file for table outputs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytic::PhotonBudget;
use crate::ba::{fock_capacity, CutoffPolicy, SolverConfig};
use crate::channel::Transmission;
use crate::continuous::{poisson_capacity, ContinuousSolverConfig};
use crate::error::Error;
use crate::experiments::{capacity_ratio_grid, prior_profile, ExperimentConfig, GridAxis, SolverSet, SweepGrid};
use crate::negbin::{negbin_best_rate, negbin_mutual_info};
use crate::report::{self, to_rounded_json, AnalyticRow, CapacityReport};

/// Default output directory for relative `--out` paths.
pub const OUT_DIR_ENV: &str = "PHOTON_CAPACITY_OUT_DIR";

/// Points in a grid spec that gives no count.
pub const DEFAULT_GRID_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 2,
    NotConverged = 3,
    Io = 4,
}

#[derive(Debug, Parser)]
#[command(name = "photon-capacity", version, about = "Capacity of the lossy photon channel with photon-number-resolving detection")]
pub struct Cli {
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity of the Fock or coherent-state ensemble.
    #[command(subcommand)]
    Capacity(CapacityKind),
    /// Rate of the negative-binomial Fock ensemble.
    RateNegbin(NegbinArgs),
    /// Closed-form reference rates.
    Analytic(AnalyticArgs),
    /// Capacity table over an (eta, nbar) grid.
    Sweep(SweepArgs),
    /// Optimal Fock prior profile.
    Prior(PriorArgs),
    /// Replay an echoed configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CapacityKind {
    Fock(FockArgs),
    Poisson(PoissonArgs),
}

#[derive(Debug, Args)]
pub struct FockArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub nbar: f64,
    /// Stop once the capacity gap is below this (bits).
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Fixed largest photon number; adaptive when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub full_prior: bool,
    /// Also write the prior as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoissonArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub output_mean: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Outer (point-moving) cycles.
    #[arg(long, default_value_t = 400)]
    pub max_iter: usize,
    /// Initial number of mass points.
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Fixed output cutoff; grows with the points when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub full_prior: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NegbinArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub nbar: f64,
    /// Fixed shape; optimized when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    /// Value or grid spec.
    #[arg(long, value_parser = grid_arg, allow_negative_numbers = true)]
    pub eta: GridValues,
    #[arg(long, value_parser = grid_arg, allow_negative_numbers = true)]
    pub nbar: GridValues,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Values `a,b,c` or grid `start:stop[:count][:log10]`.
    #[arg(long, value_parser = grid_arg)]
    pub etas: GridValues,
    #[arg(long, value_parser = grid_arg, required_unless_present = "output_means", conflicts_with = "output_means")]
    pub nbars: Option<GridValues>,
    /// Hold `eta nbar` fixed instead of `nbar`.
    #[arg(long, value_parser = grid_arg)]
    pub output_means: Option<GridValues>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub poisson_tol: f64,
    #[arg(long)]
    pub skip_fock: bool,
    #[arg(long)]
    pub skip_poisson: bool,
    #[arg(long)]
    pub skip_negbin: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub nbar: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed grid flag.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValues(pub Vec<f64>);

fn grid_arg(spec: &str) -> Result<GridValues, String> {
    parse_grid(spec).map(GridValues)
}

/// Grid flag: `a`, `a,b,c`, or `start:stop[:count][:log10]`. A missing
/// count means [`DEFAULT_GRID_COUNT`]; `log10` spaces points evenly in
/// `log10`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    if !spec.contains(':') {
        return spec.split(',').map(num).collect();
    }
    let mut parts: Vec<&str> = spec.split(':').collect();
    let log = parts.last() == Some(&"log10");
    if log {
        parts.pop();
    }
    let (start, stop, count) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, DEFAULT_GRID_COUNT),
        [a, b, n] => (num(a)?, num(b)?, n.trim().parse::<usize>().map_err(|_| format!("`{n}` is not a count"))?),
        _ => return Err(format!("`{spec}` is not start:stop[:count][:log10]")),
    };
    if count == 0 {
        return Err("grid count must be positive".into());
    }
    if log && !(start > 0.0 && stop > 0.0) {
        return Err("log10 grids need positive ends".into());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let t = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                start
            } else if i == count - 1 {
                stop
            } else if log {
                10f64.powf(start.log10() + t(i) * (stop.log10() - start.log10()))
            } else {
                start + t(i) * (stop - start)
            }
        })
        .collect())
}

/// Fully resolved run: every science parameter, the output path after
/// applying [`OUT_DIR_ENV`], and the thread cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    CapacityFock {
        eta: f64,
        nbar: f64,
        full_prior: bool,
        solver: SolverConfig,
    },
    CapacityPoisson {
        output_mean: f64,
        full_prior: bool,
        solver: ContinuousSolverConfig,
    },
    RateNegbin {
        eta: f64,
        nbar: f64,
        r: Option<f64>,
    },
    Analytic {
        etas: Vec<f64>,
        nbars: Vec<f64>,
    },
    Sweep {
        grid: SweepGrid,
        experiment: ExperimentConfig,
    },
    Prior {
        eta: f64,
        nbar: f64,
        solver: SolverConfig,
    },
}

fn resolve_out(out: Option<PathBuf>, out_dir: Option<&Path>) -> Option<PathBuf> {
    match (out, out_dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (p, _) => p,
    }
}

/// Why a run could not produce its result.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Solver(String),
    Io(String),
}

impl Failure {
    pub fn status(&self) -> ExitStatus {
        match self {
            Failure::Usage(_) => ExitStatus::Usage,
            Failure::Solver(_) => ExitStatus::NotConverged,
            Failure::Io(_) => ExitStatus::Io,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Solver(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::Infeasible { .. } | Error::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Cli {
    /// Resolve flags into a run. `run --config` reads the file here.
    pub fn resolve(self, out_dir: Option<&Path>) -> Result<RunConfig, Failure> {
        let jobs = self.jobs;
        let (out, task) = match self.command {
            Command::Run { config } => {
                let text = std::fs::read_to_string(&config).map_err(|e| Failure::Io(format!("{}: {e}", config.display())))?;
                return serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())));
            }
            Command::Capacity(CapacityKind::Fock(a)) => {
                let cutoff_policy = match a.cutoff {
                    Some(k_max) => CutoffPolicy::Fixed { k_max },
                    None => CutoffPolicy::default(),
                };
                let solver = SolverConfig {
                    tolerance: a.tol,
                    max_iterations: a.max_iter,
                    cutoff_policy,
                    ..SolverConfig::default()
                };
                (a.out, Task::CapacityFock {
                    eta: a.eta,
                    nbar: a.nbar,
                    full_prior: a.full_prior,
                    solver,
                })
            }
            Command::Capacity(CapacityKind::Poisson(a)) => {
                let out_cutoff = match a.cutoff {
                    Some(out_cutoff) => crate::continuous::OutCutoffPolicy::Fixed { out_cutoff },
                    None => crate::continuous::OutCutoffPolicy::Auto,
                };
                let solver = ContinuousSolverConfig {
                    tolerance: a.tol,
                    max_outer_iterations: a.max_iter,
                    n_points: a.points,
                    out_cutoff,
                    ..ContinuousSolverConfig::default()
                };
                (a.out, Task::CapacityPoisson {
                    output_mean: a.output_mean,
                    full_prior: a.full_prior,
                    solver,
                })
            }
            Command::RateNegbin(a) => (None, Task::RateNegbin {
                eta: a.eta,
                nbar: a.nbar,
                r: a.r,
            }),
            Command::Analytic(a) => (a.out, Task::Analytic {
                etas: a.eta.0,
                nbars: a.nbar.0,
            }),
            Command::Sweep(a) => {
                let axis = match (a.nbars, a.output_means) {
                    (_, Some(s)) => GridAxis::OutputMean(s.0),
                    (Some(n), None) => GridAxis::Nbar(n.0),
                    (None, None) => return Err(Failure::Usage("one of --nbars or --output-means is required".into())),
                };
                let experiment = ExperimentConfig {
                    fock: SolverConfig {
                        tolerance: a.tol,
                        max_iterations: a.max_iter,
                        ..SolverConfig::default()
                    },
                    poisson: ContinuousSolverConfig {
                        tolerance: a.poisson_tol,
                        ..ContinuousSolverConfig::default()
                    },
                    solvers: SolverSet {
                        fock: !a.skip_fock,
                        poisson: !a.skip_poisson,
                        negbin: !a.skip_negbin,
                    },
                    jobs,
                };
                (a.out, Task::Sweep {
                    grid: SweepGrid {
                        etas: a.etas.0,
                        axis,
                    },
                    experiment,
                })
            }
            Command::Prior(a) => (a.out, Task::Prior {
                eta: a.eta,
                nbar: a.nbar,
                solver: SolverConfig {
                    tolerance: a.tol,
                    max_iterations: a.max_iter,
                    ..SolverConfig::default()
                },
            }),
        };
        Ok(RunConfig {
            jobs,
            out: resolve_out(out, out_dir),
            task,
        })
    }
}

fn open_out(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn print_json(stdout: &mut dyn Write, value: &serde_json::Value) -> Result<(), Failure> {
    writeln!(stdout, "{}", serde_json::to_string_pretty(value).expect("json"))?;
    Ok(())
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Run the task, writing results to `stdout` (and the `out` file).
    /// Returns [`ExitStatus::NotConverged`] when a solver stopped on its
    /// iteration budget; the result is still written.
    pub fn execute(&self, stdout: &mut dyn Write) -> Result<ExitStatus, Failure> {
        let meta = [("config", self.to_json())];
        let mut status = ExitStatus::Success;
        match &self.task {
            Task::CapacityFock {
                eta,
                nbar,
                full_prior,
                solver,
            } => {
                let r = fock_capacity(Transmission::new(*eta)?, PhotonBudget::new(*nbar)?, solver)?;
                let rep = CapacityReport::fock(&r, *full_prior);
                print_json(stdout, &to_rounded_json(&rep))?;
                if let Some(p) = &self.out {
                    report::write_capacity_csv(open_out(p)?, &rep, r.prior.values(), r.prior.probs(), &meta)?;
                }
                if !r.converged {
                    status = ExitStatus::NotConverged;
                }
            }
            Task::CapacityPoisson {
                output_mean,
                full_prior,
                solver,
            } => {
                let r = poisson_capacity(*output_mean, solver)?;
                let rep = CapacityReport::poisson(&r, *full_prior);
                print_json(stdout, &to_rounded_json(&rep))?;
                if let Some(p) = &self.out {
                    report::write_capacity_csv(open_out(p)?, &rep, r.prior.intensities(), r.prior.weights(), &meta)?;
                }
                if !r.capacity.converged {
                    status = ExitStatus::NotConverged;
                }
            }
            Task::RateNegbin { eta, nbar, r } => {
                let (e, n) = (Transmission::new(*eta)?, PhotonBudget::new(*nbar)?);
                let body = match r {
                    Some(r) => json!({ "rate_bits": negbin_mutual_info(e, n, *r)?, "r": r }),
                    None => {
                        let (rate, r_star) = negbin_best_rate(e, n)?;
                        json!({ "rate_bits": rate, "r_star": r_star })
                    }
                };
                print_json(stdout, &to_rounded_json(&body))?;
            }
            Task::Analytic { etas, nbars } => {
                let mut rows = Vec::new();
                for &e in etas {
                    for &n in nbars {
                        rows.push(AnalyticRow::new(Transmission::new(e)?, PhotonBudget::new(n)?));
                    }
                }
                match &self.out {
                    Some(p) => report::write_analytic_csv(open_out(p)?, &rows, &meta)?,
                    None => report::write_analytic_csv(&mut *stdout, &rows, &meta)?,
                }
            }
            Task::Sweep { grid, experiment } => {
                let grid = SweepGrid::new(grid.etas.clone(), grid.axis.clone())?;
                let experiment = ExperimentConfig {
                    jobs: self.jobs,
                    ..*experiment
                };
                experiment.fock.validate()?;
                experiment.poisson.validate()?;
                let records = capacity_ratio_grid(&grid, &experiment)?;
                match &self.out {
                    Some(p) => report::write_sweep_csv(open_out(p)?, &records, &meta)?,
                    None => report::write_sweep_csv(&mut *stdout, &records, &meta)?,
                }
                let flagged = records.iter().any(|r| {
                    !r.errors.is_empty()
                        || (experiment.solvers.fock && !r.fock_converged)
                        || (experiment.solvers.poisson && !r.poisson_converged)
                });
                if flagged {
                    status = ExitStatus::NotConverged;
                }
            }
            Task::Prior { eta, nbar, solver } => {
                let cfg = ExperimentConfig {
                    fock: *solver,
                    ..ExperimentConfig::default()
                };
                let profile = prior_profile(*eta, *nbar, &cfg)?;
                match &self.out {
                    Some(p) => report::write_prior_csv(open_out(p)?, &profile, &meta)?,
                    None => report::write_prior_csv(&mut *stdout, &profile, &meta)?,
                }
                if !profile.converged {
                    status = ExitStatus::NotConverged;
                }
            }
        }
        stdout.flush()?;
        Ok(status)
    }
}

/// Entry point behind the binary: parse, echo the config on stderr, run.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
        }
    };
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let run = cli.resolve(out_dir.as_deref()).and_then(|cfg| {
        let _ = writeln!(stderr, "config: {}", cfg.to_json());
        cfg.execute(stdout)
    });
    match run {
        Ok(status) => {
            if status == ExitStatus::NotConverged {
                let _ = writeln!(stderr, "warning: solver did not converge within its budget");
            }
            status
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.status()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0.1,0.3").unwrap(), vec![0.1, 0.3]);
        assert_eq!(parse_grid("0:1:5").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid("1:100:3:log10").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
        assert_eq!(parse_grid("1:50:log10").unwrap().len(), DEFAULT_GRID_COUNT);
        assert!(parse_grid("0:1:log10").is_err());
        assert!(parse_grid("1:2:0").is_err());
        assert!(parse_grid("a:b").is_err());
    }

    #[test]
    fn out_dir_applies_to_relative_paths_only() {
        let dir = Path::new("/tmp/x");
        assert_eq!(resolve_out(Some("a.csv".into()), Some(dir)), Some(PathBuf::from("/tmp/x/a.csv")));
        assert_eq!(resolve_out(Some("/a.csv".into()), Some(dir)), Some(PathBuf::from("/a.csv")));
        assert_eq!(resolve_out(None, Some(dir)), None);
    }

    #[test]
    fn config_round_trips() {
        let cli = Cli::try_parse_from(["photon-capacity", "sweep", "--etas", "0.9", "--nbars", "1:50:log10"]).unwrap();
        let cfg = cli.resolve(None).unwrap();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }
}
