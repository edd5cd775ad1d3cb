//! The workflows behind the subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use porous_flow::lg_scheme::{Scheme, SchemeOptions, StepObserver};
use porous_flow::par::Execution;
use porous_flow::porous_media::{validate_hypothesis2, Hypothesis2Report, PorosityField};
use porous_flow::verification::{
    invariant_suite, korn_estimate_coarse, run_eoc, CheckOutcome, EnergyMonitor, EnergyVerdicts, EocOptions,
    EocRecord, MmsCase,
};
use serde::Serialize;

use crate::cases::build_setup;
use crate::config::RunConfig;
use crate::output::{sci, Cell, CsvWriter, JsonLines, RunWriter};

pub const CONFIG_FILE: &str = "config.toml";

pub fn execution(config: &RunConfig) -> Execution {
    if config.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

pub fn scheme_options(config: &RunConfig) -> SchemeOptions {
    SchemeOptions {
        quadrature_degree: config.quadrature_degree,
        execution: execution(config),
        forchheimer: config.forchheimer,
    }
}

fn prepare_output(config: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join(CONFIG_FILE), config.to_toml()).with_context(|| format!("writing into {}", dir.display()))?;
    Ok(dir)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub case: String,
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub vertices: usize,
    pub triangles: usize,
    pub snapshots: usize,
    pub max_divergence_residual: f64,
    pub max_relative_residual: f64,
    pub beta0: Option<f64>,
    pub alpha: Option<f64>,
    pub verdicts: Option<EnergyVerdicts>,
    #[serde(skip)]
    pub total_seconds: f64,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// Runs the configured case, writing the resolved config, VTK snapshots,
/// the stats table, the diagnostics log and (optionally) the energy log
/// into `config.output_dir`. `extra` observers see every time level too.
pub fn simulate(config: &RunConfig, extra: &mut [&mut dyn StepObserver]) -> anyhow::Result<SimulationSummary> {
    let setup = build_setup(config)?;
    let dir = prepare_output(config)?;
    let case = config.case.as_str();
    let exec = execution(config);
    let domain = config.domain();
    let mut scheme = Scheme::new(setup, scheme_options(config))?;
    let (vertices, triangles) = (scheme.setup().mesh.n_vertices(), scheme.setup().mesh.n_triangles());
    let mut writer = RunWriter::new(&dir, case, config.snapshot_every, exec)?;
    let mut monitor = if config.energy {
        let beta0 = korn_estimate_coarse(&domain, scheme.setup(), exec)?;
        Some(EnergyMonitor::new(beta0, scheme.setup().forcing.clone())?)
    } else {
        None
    };

    let summary = {
        let mut observers: Vec<&mut dyn StepObserver> = vec![&mut writer];
        if let Some(m) = monitor.as_mut() {
            observers.push(m);
        }
        for o in extra.iter_mut() {
            observers.push(&mut **o);
        }
        scheme.run(&mut observers)?
    };
    let snapshots = writer.finish()?.len();

    let (mut beta0, mut alpha, mut verdicts) = (None, None, None);
    if let Some(m) = &monitor {
        let mut log = JsonLines::create(&dir.join(format!("{case}_energy.jsonl")))?;
        for r in m.records() {
            log.write(r)?;
        }
        log.finish()?;
        beta0 = Some(m.beta0());
        alpha = m.alpha();
        verdicts = m.verdicts();
    }
    let out = SimulationSummary {
        case: case.to_string(),
        n: config.n,
        h: config.h(),
        tau: config.tau(),
        steps: summary.steps.len(),
        vertices,
        triangles,
        snapshots,
        max_divergence_residual: summary.max_divergence_residual,
        max_relative_residual: summary.max_relative_residual,
        beta0,
        alpha,
        verdicts,
        total_seconds: summary.total_seconds,
        output_dir: dir.clone(),
    };
    std::fs::write(dir.join(format!("{case}_summary.json")), serde_json::to_string_pretty(&out)? + "\n")?;
    Ok(out)
}

/// Slope band of one pair of resolutions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCheck {
    pub quantity: &'static str,
    pub from: usize,
    pub to: usize,
    pub slope: f64,
    pub band: (f64, f64),
    pub pass: bool,
}

pub const ER1_BAND: (f64, f64) = (1.7, 2.4);
pub const ER2_BAND: (f64, f64) = (1.7, 2.6);

/// Band checks for every consecutive pair starting at `N >= 16`.
pub fn slope_bands(records: &[EocRecord]) -> Vec<BandCheck> {
    let mut out = Vec::new();
    for w in records.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        if prev.n < 16 {
            continue;
        }
        for (quantity, slope, band) in [("Er1", cur.slope1, ER1_BAND), ("Er2", cur.slope2, ER2_BAND)] {
            let slope = slope.unwrap_or(f64::NAN);
            out.push(BandCheck {
                quantity,
                from: prev.n,
                to: cur.n,
                slope,
                band,
                pass: slope >= band.0 && slope <= band.1,
            });
        }
    }
    out
}

pub const EOC_HEADER: [&str; 13] = [
    "N",
    "h",
    "tau",
    "steps",
    "Er1",
    "slope1",
    "Er2",
    "slope2",
    "Er1_final",
    "slope1_final",
    "Er2_final",
    "slope2_final",
    "max_divergence_residual",
];

pub fn write_eoc_csv(path: &Path, records: &[EocRecord]) -> anyhow::Result<()> {
    let mut csv = CsvWriter::create(path, &EOC_HEADER)?;
    for r in records {
        csv.row(&[
            Cell::Int(r.n),
            Cell::Num(r.h),
            Cell::Num(r.tau),
            Cell::Int(r.steps),
            Cell::Num(r.er1),
            Cell::Opt(r.slope1),
            Cell::Num(r.er2),
            Cell::Opt(r.slope2),
            Cell::Num(r.er1_final),
            Cell::Opt(r.slope1_final),
            Cell::Num(r.er2_final),
            Cell::Opt(r.slope2_final),
            Cell::Num(r.max_divergence_residual),
        ])?;
    }
    csv.finish()?;
    Ok(())
}

pub struct EocOutcome {
    pub records: Vec<EocRecord>,
    pub bands: Vec<BandCheck>,
}

/// Convergence study of the manufactured problem; writes `eoc.csv`.
pub fn eoc(config: &RunConfig, out: &mut dyn Write) -> anyhow::Result<EocOutcome> {
    config.validate()?;
    if let Some(tau) = config.tau {
        anyhow::bail!("the convergence study couples tau = h; drop tau = {tau} from the configuration");
    }
    let dir = prepare_output(config)?;
    let options = EocOptions {
        case: MmsCase {
            params: config.params(),
            t_final: config.t_final,
        },
        scheme: scheme_options(config),
        error_degree: 9,
    };
    let records = run_eoc(&config.n_list, &options)?;
    write_eoc_csv(&dir.join("eoc.csv"), &records)?;
    let opt = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    writeln!(out, "{:>5} {:>12} {:>12} {:>6} {:>12} {:>6}", "N", "h", "Er1", "slope", "Er2", "slope")?;
    for r in &records {
        writeln!(
            out,
            "{:>5} {:>12} {:>12} {:>6} {:>12} {:>6}",
            r.n,
            sci(r.h),
            sci(r.er1),
            opt(r.slope1),
            sci(r.er2),
            opt(r.slope2)
        )?;
    }
    let bands = slope_bands(&records);
    for b in &bands {
        writeln!(
            out,
            "[{}] {} slope N={}->{}: {:.3} (band [{}, {}])",
            if b.pass { "PASS" } else { "FAIL" },
            b.quantity,
            b.from,
            b.to,
            b.slope,
            b.band.0,
            b.band.1
        )?;
    }
    Ok(EocOutcome { records, bands })
}

/// Hypothesis check of the configured porosity on the configured domain.
pub fn validate_porosity(config: &RunConfig) -> anyhow::Result<Hypothesis2Report> {
    config.validate()?;
    let field = PorosityField::new(std::sync::Arc::new(config.porosity_model()?), config.domain());
    Ok(validate_hypothesis2(&field, &config.params(), config.porosity_resolution))
}

pub fn check(config: &RunConfig) -> Vec<CheckOutcome> {
    invariant_suite(execution(config))
}
