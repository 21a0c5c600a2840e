//! Gain documents written by `synth` and read by the analysis commands.

use std::fs;
use std::path::Path;

use pcdlqr::stability::StabilityCertificate;
use pcdlqr::synthesis::GainResult;
use pcdlqr::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::{matrix, rows, Rows};
use crate::CliError;

pub const FORMAT: &str = "pcdlqr-gain/1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateSummary {
    pub feasible: bool,
    pub infeasible: bool,
    pub lmi_feasible: bool,
    pub margin: f64,
    pub pbar_min_eig: f64,
    pub sampled_radius: f64,
    pub iterations: usize,
}

impl From<&StabilityCertificate> for CertificateSummary {
    fn from(c: &StabilityCertificate) -> Self {
        Self {
            feasible: c.feasible,
            infeasible: c.infeasible,
            lmi_feasible: c.lmi_feasible,
            margin: c.margin,
            pbar_min_eig: c.pbar_min_eig,
            sampled_radius: c.sampled_radius,
            iterations: c.iterations,
        }
    }
}

/// Floats are written in shortest round-trip form, so `K` reloads bit-equal.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainDocument {
    pub format: String,
    pub name: String,
    pub order: usize,
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "P_pc")]
    pub p_pc: Rows,
    pub riccati_residual: f64,
    pub value_lmi_min_eig: f64,
    pub value_lmi_norm: f64,
    pub gain_objective: f64,
    pub gain_lmi_min_eig: f64,
    pub descent_min_eig: f64,
    pub closed_loop_radius: f64,
    pub sampled_radius: f64,
    pub certificate: Option<CertificateSummary>,
    pub warnings: Vec<String>,
    pub manifest: String,
}

impl GainDocument {
    pub fn new(name: &str, res: &GainResult, manifest: String) -> Self {
        Self {
            format: FORMAT.into(),
            name: name.into(),
            order: res.order,
            k: rows(&res.k),
            p_pc: rows(&res.p_pc),
            riccati_residual: res.riccati_residual,
            value_lmi_min_eig: res.lmi1.min_eig,
            value_lmi_norm: res.lmi1.norm,
            gain_objective: res.lmi2_gap,
            gain_lmi_min_eig: res.lmi2.min_eig,
            descent_min_eig: res.descent.min_eig,
            closed_loop_radius: res.closed_loop_radius,
            sampled_radius: res.sampled_radius,
            certificate: res.ems_certificate.as_ref().map(CertificateSummary::from),
            warnings: res.warnings.iter().map(|w| w.to_string()).collect(),
            manifest,
        }
    }

    pub fn gain(&self) -> Result<Matrix, CliError> {
        matrix(&self.k, "K")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read gain file {}: {e}", path.display())))?;
        let doc: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if doc.format != FORMAT {
            return Err(CliError::Input(format!(
                "{}: unsupported format {:?}",
                path.display(),
                doc.format
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Input(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Loads `K` and checks it against the plant dimensions.
pub fn load_gain(path: &Path, n: usize, m: usize) -> Result<Matrix, CliError> {
    let k = GainDocument::load(path)?.gain()?;
    if k.shape() != (m, n) {
        return Err(CliError::Input(format!(
            "gain in {} is {}x{}, plant needs {m}x{n}",
            path.display(),
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(k)
}
