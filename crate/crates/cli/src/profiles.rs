use std::path::Path;

use abplab::grid::{norm, sup_norm, Grid, GridFunction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Named data generators. In a config they are tables tagged by `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    /// `value + slope . x`.
    Affine {
        #[serde(default)]
        value: f64,
        slope: Vec<f64>,
    },
    /// `-amplitude (radius^2 - |x|^2)`.
    QuadraticBowl {
        amplitude: f64,
        #[serde(default = "one")]
        radius: f64,
    },
    /// `offset + slope |x|`.
    Cone {
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        slope: f64,
    },
    /// `c max(|x|_inf, floor)^(-n / eps0)`; the floor defaults to a quarter
    /// cell so the center node stays finite.
    SupPower {
        #[serde(default = "one")]
        c: f64,
        eps0: f64,
        floor: Option<f64>,
    },
    /// `|x_1|^(1/2)`.
    SqrtAbs,
    /// `1.5 + x_1 + x_1 x_2 + cos(4 x_2) / 2`, positive on the unit cube.
    Mixed,
    /// A grid file in the core text format, on exactly the scenario grid.
    File {
        path: String,
    },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    /// Static checks that need no grid; returns a message for the `data` key.
    pub fn validate(&self, dim: usize, base_dir: &Path) -> Result<(), String> {
        match self {
            Profile::Affine { slope, .. } if slope.len() != dim => Err(format!("slope needs {dim} components")),
            Profile::QuadraticBowl { radius, .. } if !(*radius > 0.0) => Err("radius must be positive".into()),
            Profile::SupPower { eps0, .. } if !(*eps0 > 0.0) => Err("eps0 must be positive".into()),
            Profile::SupPower { floor: Some(f), .. } if !(*f > 0.0) => Err("floor must be positive".into()),
            Profile::File { path } if !base_dir.join(path).is_file() => {
                Err(format!("grid file '{path}' does not exist"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, grid: &Grid, base_dir: &Path) -> CliResult<GridFunction> {
        let n = grid.dim() as f64;
        let u = match self {
            Profile::Zero => GridFunction::constant(grid, "u", 0.0)?,
            Profile::Constant { value } => GridFunction::constant(grid, "u", *value)?,
            Profile::Affine { value, slope } => {
                GridFunction::from_fn(grid, "u", |x| value + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>())?
            }
            Profile::QuadraticBowl { amplitude, radius } => {
                GridFunction::from_fn(grid, "u", |x| -amplitude * (radius * radius - norm(x).powi(2)))?
            }
            Profile::Cone { offset, slope } => GridFunction::from_fn(grid, "u", |x| offset + slope * norm(x))?,
            Profile::SupPower { c, eps0, floor } => {
                let floor = floor.unwrap_or(grid.spacing() / 4.0);
                GridFunction::from_fn(grid, "u", |x| c * sup_norm(x).max(floor).powf(-n / eps0))?
            }
            Profile::SqrtAbs => GridFunction::from_fn(grid, "u", |x| x[0].abs().sqrt())?,
            Profile::Mixed => GridFunction::from_fn(grid, "u", |x| {
                let y = x.get(1).copied().unwrap_or(0.0);
                1.5 + x[0] + x[0] * y + 0.5 * (4.0 * y).cos()
            })?,
            Profile::File { path } => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Io { path: full.clone(), message: e.to_string() })?;
                let u = GridFunction::from_text(&text)?;
                if !u.grid().same_layout(grid) {
                    return Err(CliError::invalid(
                        "data.path",
                        format!("grid file '{path}' does not match the scenario grid"),
                    ));
                }
                u
            }
        };
        Ok(u)
    }
}
