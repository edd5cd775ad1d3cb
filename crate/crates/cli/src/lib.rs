//! Command-line front end of the porous-media flow solver: the experiment
//! cases, run configuration, file output and the subcommand workflows.

pub mod cases;
pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{CaseName, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "porous-flow", version, about = "Lagrange-Galerkin solver for flow in non-homogeneous porous media")]
pub struct Cli {
    /// TOML file overriding the case defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub show_config: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Disable data-parallel assembly.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convergence study on the manufactured solution.
    Eoc {
        /// Ascending resolutions, e.g. 8,16,32.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        t_final: Option<f64>,
        /// Exit with status 1 when a slope leaves its band.
        #[arg(long)]
        strict: bool,
    },
    /// Runs one case and writes VTK snapshots and logs.
    Simulate {
        case: CaseName,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Checks the porosity of a case against the gradient hypothesis.
    ValidatePorosity {
        case: CaseName,
        /// Grid resolution of the check.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        d_p: Option<f64>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Runs the invariant suite.
    Check,
}

#[derive(Debug, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long)]
    pub d_p: Option<f64>,
    /// Skip the energy monitor.
    #[arg(long)]
    pub no_energy: bool,
}

impl Cli {
    fn case(&self) -> Option<CaseName> {
        match &self.command {
            Command::Eoc { .. } => Some(CaseName::MmsEoc),
            Command::Simulate { case, .. } | Command::ValidatePorosity { case, .. } => Some(*case),
            Command::Check => None,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = RunConfig::load(self.case(), self.config.as_deref())?;
        if let Some(dir) = &self.output {
            c.output_dir = dir.clone();
        }
        if self.sequential {
            c.parallel = false;
        }
        match &self.command {
            Command::Eoc { n_list, t_final, .. } => {
                if let Some(l) = n_list {
                    c.n_list = l.clone();
                }
                if let Some(t) = t_final {
                    c.t_final = *t;
                }
            }
            Command::Simulate { run, .. } => {
                if let Some(n) = run.n {
                    c.n = n;
                }
                if run.tau.is_some() {
                    c.tau = run.tau;
                }
                if let Some(t) = run.t_final {
                    c.t_final = t;
                }
                if let Some(s) = run.snapshot_every {
                    c.snapshot_every = s;
                }
                if let Some(d) = run.d_p {
                    c.d_p = d;
                }
                if run.no_energy {
                    c.energy = false;
                }
            }
            Command::ValidatePorosity { resolution, d_p, .. } => {
                if let Some(r) = resolution {
                    c.porosity_resolution = *r;
                }
                if let Some(d) = d_p {
                    c.d_p = *d;
                }
            }
            Command::Check => {}
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let config = cli.resolve()?;
    if cli.show_config {
        write!(out, "{}", config.to_toml())?;
        return Ok(0);
    }
    match &cli.command {
        Command::Eoc { strict, .. } => {
            let outcome = commands::eoc(&config, out)?;
            writeln!(out, "table written to {}", config.output_dir.join("eoc.csv").display())?;
            Ok(if *strict && outcome.bands.iter().any(|b| !b.pass) { 1 } else { 0 })
        }
        Command::Simulate { .. } => {
            let s = commands::simulate(&config, &mut [])?;
            writeln!(
                out,
                "{}: {} steps (h = {}, tau = {}) on {} triangles in {:.1} s",
                s.case,
                s.steps,
                output::sci(s.h),
                output::sci(s.tau),
                s.triangles,
                s.total_seconds
            )?;
            writeln!(out, "max divergence residual {}", output::sci(s.max_divergence_residual))?;
            if let Some(v) = &s.verdicts {
                for (name, verdict) in [("uniform bound", v.uniform), ("decay bound", v.decay)] {
                    writeln!(
                        out,
                        "{name}: {} (lhs {}, rhs {}, worst k = {})",
                        if verdict.pass { "holds" } else { "violated" },
                        output::sci(verdict.lhs),
                        output::sci(verdict.rhs),
                        verdict.worst_k
                    )?;
                }
            }
            writeln!(out, "{} snapshots written to {}", s.snapshots, s.output_dir.display())?;
            Ok(0)
        }
        Command::ValidatePorosity { json, .. } => {
            let report = commands::validate_porosity(&config)?;
            if *json {
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
            } else {
                writeln!(out, "{report}")?;
            }
            Ok(0)
        }
        Command::Check => {
            let outcomes = commands::check(&config);
            for o in &outcomes {
                writeln!(out, "{o}")?;
            }
            Ok(if outcomes.iter().all(|o| o.pass) { 0 } else { 1 })
        }
    }
}
