//! Run configuration.
//!
//! A configuration is a flat TOML table. Values are resolved in three
//! layers: the defaults of the selected case, then the file given with
//! `--config`, then command-line flags. Unknown keys are rejected.
//!
//! | key | type | meaning |
//! |-----|------|---------|
//! | `case` | string | `mms-eoc`, `two-layer`, `sinusoidal` or `custom` |
//! | `n` | integer | divisions along the longer side of the domain |
//! | `tau` | float | time step; omitted means `tau = h` |
//! | `t_final` | float | final time (s) |
//! | `mu`, `rho`, `d_p` | float | viscosity, density, particle diameter (CGS) |
//! | `ergun_a`, `ergun_b` | float | Ergun constants |
//! | `porosity` | string | `constant:<c>`, `mms-sine`, `two-layer[:eps]`, `sinusoidal[:g0,g1]` |
//! | `x_min`, `x_max`, `y_min`, `y_max` | float | domain |
//! | `outflow` | bool | traction-free outflow on the right edge |
//! | `inflow_scale` | float | `c` in `u0 = eta(x) c ((H/2)^2 - (y - y_c)^2, 0)` |
//! | `layer_y` | float | height of the refined mesh line |
//! | `layer_ratio` | float | `h` over the mesh size on the refined line; omitted means no grading |
//! | `snapshot_every` | integer | steps between VTK snapshots |
//! | `energy` | bool | record the energy balance |
//! | `forchheimer` | bool | include the Forchheimer drag term |
//! | `quadrature_degree` | integer | degree of the assembly quadrature |
//! | `parallel` | bool | data-parallel assembly |
//! | `n_list` | integer array | resolutions of the convergence study |
//! | `porosity_resolution` | integer | grid used by the porosity validator |
//! | `output_dir` | string | where outputs are written |

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use porous_flow::mesh::Rect;
use porous_flow::porous_media::{BuiltinPorosity, PhysicalParams};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CaseName {
    /// Manufactured solution on (0, pi)^2.
    MmsEoc,
    /// Two porosity layers on (0, 3) x (0, 1).
    TwoLayer,
    /// Sinusoidal porosity on (0, 3 pi) x (0, pi).
    Sinusoidal,
    /// Starts from the two-layer settings; everything is overridable.
    Custom,
}

impl CaseName {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::MmsEoc => "mms-eoc",
            CaseName::TwoLayer => "two-layer",
            CaseName::Sinusoidal => "sinusoidal",
            CaseName::Custom => "custom",
        }
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseName,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub t_final: f64,
    pub mu: f64,
    pub rho: f64,
    pub d_p: f64,
    pub ergun_a: f64,
    pub ergun_b: f64,
    pub porosity: String,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub outflow: bool,
    pub inflow_scale: f64,
    pub layer_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_ratio: Option<f64>,
    pub snapshot_every: usize,
    pub energy: bool,
    pub forchheimer: bool,
    pub quadrature_degree: usize,
    pub parallel: bool,
    pub n_list: Vec<usize>,
    pub porosity_resolution: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn defaults(case: CaseName) -> Self {
        let params = PhysicalParams::default();
        let mut c = RunConfig {
            case,
            n: 120,
            tau: None,
            t_final: 5.0,
            mu: params.mu,
            rho: params.rho,
            d_p: params.d_p,
            ergun_a: params.a,
            ergun_b: params.b,
            porosity: BuiltinPorosity::two_layer().name(),
            x_min: 0.0,
            x_max: 3.0,
            y_min: 0.0,
            y_max: 1.0,
            outflow: true,
            inflow_scale: 1.0,
            layer_y: 0.5,
            layer_ratio: Some(18.0),
            snapshot_every: 10,
            energy: true,
            forchheimer: true,
            quadrature_degree: 5,
            parallel: cfg!(feature = "parallel"),
            n_list: vec![8, 16, 32],
            porosity_resolution: 512,
            output_dir: PathBuf::from("output").join(case.as_str()),
        };
        match case {
            CaseName::TwoLayer | CaseName::Custom => {}
            CaseName::Sinusoidal => {
                c.n = 300;
                c.porosity = BuiltinPorosity::sinusoidal().name();
                c.x_max = 3.0 * PI;
                c.y_max = PI;
                c.inflow_scale = 0.01;
                c.layer_y = 0.5 * PI;
                c.layer_ratio = None;
            }
            CaseName::MmsEoc => {
                c.n = 32;
                c.t_final = 1.0;
                c.porosity = BuiltinPorosity::MmsSine.name();
                c.x_max = PI;
                c.y_max = PI;
                c.outflow = false;
                c.inflow_scale = 0.0;
                c.layer_y = 0.5 * PI;
                c.layer_ratio = None;
            }
        }
        c
    }

    /// Case defaults overlaid with the file, if any. `case` wins over the
    /// file's `case` key.
    pub fn load(case: Option<CaseName>, file: Option<&Path>) -> anyhow::Result<Self> {
        let table: toml::Table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                text.parse().with_context(|| format!("parsing {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        let file_case = match table.get("case") {
            Some(v) => Some(
                CaseName::deserialize(v.clone()).with_context(|| format!("bad case {v} in the config file"))?,
            ),
            None => None,
        };
        let case = case.or(file_case).unwrap_or(CaseName::TwoLayer);
        let mut merged = toml::Table::try_from(RunConfig::defaults(case))?;
        merged.extend(table);
        merged.insert("case".into(), toml::Value::String(case.as_str().into()));
        let config = RunConfig::deserialize(merged).context("invalid configuration")?;
        Ok(config)
    }

    pub fn params(&self) -> PhysicalParams {
        PhysicalParams {
            mu: self.mu,
            rho: self.rho,
            d_p: self.d_p,
            a: self.ergun_a,
            b: self.ergun_b,
        }
    }

    pub fn domain(&self) -> Rect {
        Rect::new((self.x_min, self.x_max), (self.y_min, self.y_max))
    }

    pub fn porosity_model(&self) -> anyhow::Result<BuiltinPorosity> {
        BuiltinPorosity::from_str(&self.porosity).map_err(Into::into)
    }

    /// Cell size: the longer side over `n`.
    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min) / self.n as f64
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| self.h())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params().validate()?;
        let positive = [
            ("t_final", self.t_final),
            ("tau", self.tau()),
            ("x_max - x_min", self.x_max - self.x_min),
            ("y_max - y_min", self.y_max - self.y_min),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if self.n < 2 {
            bail!("n must be at least 2, got {}", self.n);
        }
        if self.snapshot_every == 0 {
            bail!("snapshot_every must be positive");
        }
        if !self.inflow_scale.is_finite() {
            bail!("inflow_scale must be finite");
        }
        if let Some(r) = self.layer_ratio {
            if !(r.is_finite() && r >= 1.0) {
                bail!("layer_ratio must be at least 1, got {r}");
            }
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            bail!("n_list must be non-empty and ascending, got {:?}", self.n_list);
        }
        self.porosity_model()?;
        if self.case == CaseName::MmsEoc {
            let fixed = RunConfig::defaults(CaseName::MmsEoc);
            if self.domain() != fixed.domain() || self.porosity != fixed.porosity {
                bail!("the mms-eoc case fixes the domain to (0, pi)^2 and the porosity to mms-sine");
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let mut out = toml::to_string(self).expect("configuration serializes");
        if self.tau.is_none() {
            out.push_str(&format!("# tau = h = {}\n", self.h()));
        }
        if self.layer_ratio.is_none() {
            out.push_str("# layer_ratio unset: uniform rows\n");
        }
        out
    }
}
