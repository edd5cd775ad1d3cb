//! File output: CSV tables, JSON lines and the snapshot observer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use porous_flow::assembly::FormContext;
use porous_flow::fem_space::{norm_parts, FeField};
use porous_flow::lg_scheme::{StepDiagnostics, StepObserver};
use porous_flow::porous_media::PorosityField;
use porous_flow::quadrature::QuadratureRule;
use porous_flow::vtk::write_snapshot_file;
use porous_flow::par::Execution;
use serde::Serialize;

/// C-style `%.6e`: six fraction digits, signed exponent of at least two
/// digits.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// Comma-separated table with a header row; numbers are written with
/// [`sci`], missing values as empty cells.
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    pub fn row(&mut self, cells: &[Cell]) -> std::io::Result<()> {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Cell {
    Int(usize),
    Num(f64),
    Opt(Option<f64>),
}

impl Cell {
    fn render(&self) -> String {
        match *self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => sci(x),
            Cell::Opt(Some(x)) => sci(x),
            Cell::Opt(None) => String::new(),
        }
    }
}

pub struct JsonLines {
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        writeln!(self.out)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Step diagnostics without wall-clock timing, so log files are
/// reproducible.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiagnosticsLine {
    pub k: usize,
    pub t: f64,
    pub relative_residual: f64,
    pub divergence_residual: f64,
    pub clamped_feet: usize,
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

impl From<&StepDiagnostics> for DiagnosticsLine {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            k: d.k,
            t: d.t,
            relative_residual: d.relative_residual,
            divergence_residual: d.divergence_residual,
            clamped_feet: d.clamped_feet,
            velocity_l2: d.velocity_l2,
            velocity_h1: d.velocity_h1,
            pressure_l2: d.pressure_l2,
        }
    }
}

pub const STATS_HEADER: [&str; 7] = ["k", "t", "min_speed", "max_speed", "velocity_l2", "velocity_h1", "pressure_l2"];

/// `(min |u|, max |u|)` over the velocity nodes.
pub fn speed_range(u: &FeField) -> (f64, f64) {
    let n = u.space().n_nodes();
    (0..n)
        .map(|i| u.node_vector(i).norm())
        .fold((f64::INFINITY, 0.0), |(lo, hi), s| (lo.min(s), hi.max(s)))
}

/// Writes `<case>_<step:06>.vtk` every `cadence` steps (including the
/// initial state), one stats row per time level, and the diagnostics log.
pub struct RunWriter {
    dir: PathBuf,
    case: String,
    cadence: usize,
    exec: Execution,
    rule: QuadratureRule,
    porosity: Option<PorosityField>,
    stats: CsvWriter,
    diagnostics: JsonLines,
    snapshots: Vec<PathBuf>,
}

impl RunWriter {
    pub fn new(dir: &Path, case: &str, cadence: usize, exec: Execution) -> std::io::Result<Self> {
        Ok(Self {
            dir: dir.to_path_buf(),
            case: case.to_string(),
            cadence,
            exec,
            rule: QuadratureRule::default(),
            porosity: None,
            stats: CsvWriter::create(&dir.join(format!("{case}_stats.csv")), &STATS_HEADER)?,
            diagnostics: JsonLines::create(&dir.join(format!("{case}_diagnostics.jsonl")))?,
            snapshots: Vec::new(),
        })
    }

    pub fn snapshots(&self) -> &[PathBuf] {
        &self.snapshots
    }

    pub fn finish(self) -> std::io::Result<Vec<PathBuf>> {
        self.stats.finish()?;
        self.diagnostics.finish()?;
        Ok(self.snapshots)
    }

    fn level(&mut self, k: usize, t: f64, u: &FeField, p: &FeField) -> porous_flow::Result<()> {
        let (lo, hi) = speed_range(u);
        let up = norm_parts(u, &self.rule, self.exec);
        let pp = norm_parts(p, &self.rule, self.exec);
        self.stats.row(&[
            Cell::Int(k),
            Cell::Num(t),
            Cell::Num(lo),
            Cell::Num(hi),
            Cell::Num(up.l2()),
            Cell::Num(up.h1()),
            Cell::Num(pp.l2()),
        ])?;
        if k.is_multiple_of(self.cadence) {
            let phi = self
                .porosity
                .as_ref()
                .ok_or_else(|| porous_flow::Error::InvalidInput("run writer used before on_start".into()))?;
            let path = self.dir.join(format!("{}_{k:06}.vtk", self.case));
            write_snapshot_file(&path, u, p, phi, t)?;
            self.snapshots.push(path);
        }
        Ok(())
    }
}

impl StepObserver for RunWriter {
    fn on_start(&mut self, u0: &FeField, p0: &FeField, ctx: &FormContext) -> porous_flow::Result<()> {
        self.porosity = Some(ctx.porosity().clone());
        self.level(0, 0.0, u0, p0)
    }

    fn on_step(&mut self, k: usize, t: f64, u: &FeField, p: &FeField, diag: &StepDiagnostics) -> porous_flow::Result<()> {
        self.diagnostics.write(&DiagnosticsLine::from(diag))?;
        self.level(k, t, u, p)
    }
}
