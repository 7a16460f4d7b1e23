//! The JSON model file: a structured document carrying an SDE and any
//! number of named transformations and symmetry candidates. Every
//! coefficient entry is an expression string in the grammar of
//! [`crate::expr`].
//!
//! Schema (all expression entries are strings):
//!
//! ```json
//! {
//!   "n": 2, "m": 2,
//!   "domain": { "box": [[-5,5],[-5,5]], "exclusions": ["x^2+y^2"], "margin": 0.0141 },
//!   "mu": ["...", "..."],
//!   "sigma": [["...","..."],["...","..."]],
//!   "transformations": {
//!     "T": { "phi": [...], "phi_inverse": [...], "B": [[...]], "eta": "..." }
//!   },
//!   "symmetries": {
//!     "V1": { "Y": [...], "C": [[...]], "tau": "..." }
//!   }
//! }
//! ```
//!
//! `mu`/`sigma` may be omitted for files that only carry triads; `margin`
//! defaults to 1e-3 of the box diagonal; a transformation may override the
//! file domain with its own.

use super::{FiniteTransformation, InfinitesimalTransformation, ModelError, Sde};
use crate::expr::{Domain, Expression};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub m: usize,
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub transformations: BTreeMap<String, TransformationSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub symmetries: BTreeMap<String, SymmetrySpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformationSpec {
    pub phi: Vec<String>,
    pub phi_inverse: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<String>>,
    pub eta: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetrySpec {
    #[serde(rename = "Y")]
    pub y: Vec<String>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<String>>,
    pub tau: String,
}

fn parse_expr(text: &str, dim: usize) -> Result<Expression, ModelError> {
    Expression::parse(text, dim).map_err(|source| ModelError::Parse { text: text.to_string(), source })
}

fn parse_vec(texts: &[String], dim: usize) -> Result<Vec<Expression>, ModelError> {
    texts.iter().map(|t| parse_expr(t, dim)).collect()
}

fn parse_mat(texts: &[Vec<String>], dim: usize) -> Result<Vec<Vec<Expression>>, ModelError> {
    texts.iter().map(|row| parse_vec(row, dim)).collect()
}

fn print_vec(fields: &[Expression]) -> Vec<String> {
    fields.iter().map(|e| e.to_string()).collect()
}

fn print_mat(mat: &[Vec<Expression>]) -> Vec<Vec<String>> {
    mat.iter().map(|row| print_vec(row)).collect()
}

impl DomainSpec {
    pub fn build(&self, dim: usize) -> Result<Domain, ModelError> {
        if self.bounds.len() != dim {
            return Err(ModelError::Dimension(format!(
                "domain box has {} axes, expected {dim}",
                self.bounds.len()
            )));
        }
        let bounds: Vec<(f64, f64)> = self.bounds.iter().map(|b| (b[0], b[1])).collect();
        let exclusions = parse_vec(&self.exclusions, dim)?;
        let domain = match self.margin {
            Some(margin) => Domain::with_margin(bounds, exclusions, margin)?,
            None => Domain::new(bounds, exclusions)?,
        };
        Ok(domain)
    }

    pub fn from_domain(domain: &Domain) -> DomainSpec {
        DomainSpec {
            bounds: domain.bounds().iter().map(|&(lo, hi)| [lo, hi]).collect(),
            exclusions: domain.exclusions().iter().map(|e| e.to_string()).collect(),
            margin: Some(domain.margin()),
        }
    }
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::File(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<ModelFile, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::File(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| ModelError::File(format!("cannot write {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("model file serializes");
        out.push('\n');
        out
    }

    /// Builds the SDE carried by this file.
    pub fn sde(&self) -> Result<Sde, ModelError> {
        let (Some(mu), Some(sigma)) = (&self.mu, &self.sigma) else {
            return Err(ModelError::File("file carries no SDE (mu/sigma missing)".into()));
        };
        let domain = self.domain.build(self.n)?;
        Sde::new(self.n, self.m, parse_vec(mu, self.n)?, parse_mat(sigma, self.n)?, domain)
    }

    /// Builds the named finite transformation.
    pub fn transformation(&self, name: &str) -> Result<FiniteTransformation, ModelError> {
        let spec = self
            .transformations
            .get(name)
            .ok_or_else(|| ModelError::UnknownName(name.to_string()))?;
        let domain = match &spec.domain {
            Some(d) => d.build(self.n)?,
            None => self.domain.build(self.n)?,
        };
        FiniteTransformation::new(
            self.n,
            self.m,
            parse_vec(&spec.phi, self.n)?,
            parse_vec(&spec.phi_inverse, self.n)?,
            parse_mat(&spec.b, self.n)?,
            parse_expr(&spec.eta, self.n)?,
            domain,
        )
    }

    /// Builds the named infinitesimal transformation.
    pub fn symmetry(&self, name: &str) -> Result<InfinitesimalTransformation, ModelError> {
        let spec =
            self.symmetries.get(name).ok_or_else(|| ModelError::UnknownName(name.to_string()))?;
        InfinitesimalTransformation::new(
            self.n,
            self.m,
            parse_vec(&spec.y, self.n)?,
            parse_mat(&spec.c, self.n)?,
            parse_expr(&spec.tau, self.n)?,
        )
    }

    /// A file carrying just an SDE, printed from its expressions.
    pub fn from_sde(sde: &Sde) -> ModelFile {
        ModelFile {
            n: sde.n(),
            m: sde.m(),
            domain: DomainSpec::from_domain(&sde.domain),
            mu: Some(print_vec(&sde.mu)),
            sigma: Some(print_mat(&sde.sigma)),
            transformations: BTreeMap::new(),
            symmetries: BTreeMap::new(),
        }
    }
}

impl TransformationSpec {
    pub fn from_transformation(t: &FiniteTransformation) -> TransformationSpec {
        TransformationSpec {
            phi: print_vec(&t.phi),
            phi_inverse: print_vec(&t.phi_inverse),
            b: print_mat(&t.b),
            eta: t.eta.to_string(),
            domain: Some(DomainSpec::from_domain(&t.domain)),
        }
    }
}

impl SymmetrySpec {
    pub fn from_symmetry(v: &InfinitesimalTransformation) -> SymmetrySpec {
        SymmetrySpec { y: print_vec(&v.y), c: print_mat(&v.c), tau: v.tau.to_string() }
    }
}
