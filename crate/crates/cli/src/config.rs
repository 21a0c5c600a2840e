//! JSON plant configuration.

use std::fs;
use std::path::Path;

use pcdlqr::model::{fit_from_grid, scale_param, CostWeights, GridPoint, ParamScale, UncertainLti};
use pcdlqr::{Matrix, Vector};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Rows of a matrix, outer index is the row.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BasisConfig {
    pub family: String,
    #[serde(rename = "nOrd")]
    pub n_ord: usize,
    #[serde(rename = "N")]
    pub order: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ScaleConfig {
    pub vmin: f64,
    pub vmax: f64,
}

/// One gridded model. Exactly one of `delta` and `v` locates it; `v` is
/// mapped through `param_scale`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub n: usize,
    pub m: usize,
    pub basis: BasisConfig,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Rows>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridEntry>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(rename = "Qy", default, skip_serializing_if = "Option::is_none")]
    pub qy: Option<Rows>,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_scale: Option<ScaleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
}

/// A validated configuration ready for the library.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: Config,
    pub sys: UncertainLti,
    pub weights: CostWeights,
    pub scale: Option<ParamScale>,
}

impl Problem {
    pub fn order(&self) -> usize {
        self.config.basis.order
    }

    pub fn x0(&self) -> Option<Vector> {
        self.config.x0.as_ref().map(|v| Vector::from_column_slice(v))
    }

    pub fn output_matrix(&self) -> Option<&Matrix> {
        self.weights.output().map(|o| &o.c)
    }
}

pub fn matrix(rows: &Rows, field: &str) -> Result<Matrix, CliError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(CliError::Input(format!("`{field}` is empty")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != nc) {
        return Err(CliError::Input(format!(
            "`{field}` row {bad} has {} entries, expected {nc}",
            rows[bad].len()
        )));
    }
    Ok(Matrix::from_row_iterator(nr, nc, rows.iter().flatten().copied()))
}

pub fn rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn shaped(rows_: &Rows, field: &str, shape: (usize, usize)) -> Result<Matrix, CliError> {
    let m = matrix(rows_, field)?;
    if m.shape() != shape {
        return Err(CliError::Input(format!(
            "`{field}` is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            shape.0,
            shape.1
        )));
    }
    Ok(m)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn problem(self) -> Result<Problem, CliError> {
        let (n, m) = (self.n, self.m);
        if !self.basis.family.eq_ignore_ascii_case("legendre") {
            return Err(CliError::Input(format!(
                "`basis.family` must be \"legendre\", got {:?}",
                self.basis.family
            )));
        }
        let scale = self
            .param_scale
            .map(|s| ParamScale::new(s.vmin, s.vmax))
            .transpose()?;

        let sys = match (&self.a, &self.b, &self.grid) {
            (Some(a), Some(b), None) => {
                let n_coef = self.basis.n_ord + 1;
                if a.len() != n_coef || b.len() != n_coef {
                    return Err(CliError::Input(format!(
                        "`A` and `B` need nOrd + 1 = {n_coef} coefficients, got {} and {}",
                        a.len(),
                        b.len()
                    )));
                }
                let a = a
                    .iter()
                    .enumerate()
                    .map(|(i, r)| shaped(r, &format!("A[{i}]"), (n, n)))
                    .collect::<Result<Vec<_>, _>>()?;
                let b = b
                    .iter()
                    .enumerate()
                    .map(|(i, r)| shaped(r, &format!("B[{i}]"), (n, m)))
                    .collect::<Result<Vec<_>, _>>()?;
                UncertainLti::new(self.name.clone(), a, b, self.basis.order)?
            }
            (None, None, Some(grid)) => {
                let mut points = Vec::with_capacity(grid.len());
                for (j, e) in grid.iter().enumerate() {
                    let delta = match (e.delta, e.v, scale.as_ref()) {
                        (Some(d), None, _) => d,
                        (None, Some(v), Some(s)) => scale_param(v, s)?,
                        (None, Some(_), None) => {
                            return Err(CliError::Input(format!(
                                "`grid[{j}].v` needs `param_scale`"
                            )))
                        }
                        _ => {
                            return Err(CliError::Input(format!(
                                "`grid[{j}]` needs exactly one of `delta` and `v`"
                            )))
                        }
                    };
                    points.push(GridPoint {
                        delta,
                        a: shaped(&e.a, &format!("grid[{j}].A"), (n, n))?,
                        b: shaped(&e.b, &format!("grid[{j}].B"), (n, m))?,
                    });
                }
                fit_from_grid(self.name.clone(), &points, self.basis.n_ord, self.basis.order)?
            }
            _ => {
                return Err(CliError::Input(
                    "give either `A` and `B` coefficient lists or a `grid`".into(),
                ))
            }
        };

        let r = matrix(&self.r, "R")?;
        let weights = match (&self.q, &self.c, &self.qy) {
            (Some(q), None, None) => CostWeights::new(matrix(q, "Q")?, r)?,
            (None, Some(c), Some(qy)) => CostWeights::from_output(matrix(c, "C")?, matrix(qy, "Qy")?, r)?,
            _ => return Err(CliError::Input("give either `Q` or both `C` and `Qy`".into())),
        };
        weights.check_dims(n, m)?;

        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(CliError::Input(format!("`x0` has {} entries, expected {n}", x0.len())));
            }
        }
        Ok(Problem {
            config: self,
            sys,
            weights,
            scale,
        })
    }
}

pub fn load_problem(path: &Path) -> Result<Problem, CliError> {
    Config::load(path)?.problem()
}
