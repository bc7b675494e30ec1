//! Versioned JSON problem files.
//!
//! ```json
//! { "schema_version": 1, "n": 2, "omega": [0.0, 1.0], "lambda": 0.1,
//!   "v_entries": [ {"i": 1, "j": 1, "abs": 0.5, "arg": "pi"},
//!                  {"i": 1, "j": 2, "abs": 1.0, "arg": 0.3},
//!                  {"i": 2, "j": 2, "abs": 0.0, "arg": 0} ] }
//! ```
//!
//! The interaction is given either as its upper triangle in polar form
//! (`v_entries`) or as a full matrix of `[re, im]` pairs (`v_rect`).

use std::path::Path;

use anyhow::{bail, ensure, Context};
use feenberg::{hermitian_from_polar, ComplexMatrix, HermitianMatrix, PolarEntry, Problem, C};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest conjugate-symmetry deviation accepted in `v_rect`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A phase in radians, or the literal `"pi"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Radians(f64),
    Named(NamedArg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedArg {
    #[serde(rename = "pi")]
    Pi,
}

impl Arg {
    pub fn radians(self) -> f64 {
        match self {
            Arg::Radians(x) => x,
            Arg::Named(NamedArg::Pi) => std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub i: usize,
    pub j: usize,
    pub abs: f64,
    pub arg: Arg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema_version: u32,
    pub n: usize,
    pub omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_entries: Option<Vec<EntryRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_rect: Option<Vec<Vec<[f64; 2]>>>,
}

impl ProblemFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("malformed problem file {}", path.display()))
    }

    fn validate(&self) -> anyhow::Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "field `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        ensure!(
            self.omega.len() == self.n,
            "field `omega`: has {} values but `n` is {}",
            self.omega.len(),
            self.n
        );
        match (&self.v_entries, &self.v_rect) {
            (Some(_), Some(_)) => bail!("fields `v_entries` and `v_rect` are mutually exclusive"),
            (None, None) => bail!("one of `v_entries` or `v_rect` is required"),
            (None, Some(rows)) => {
                ensure!(rows.len() == self.n, "field `v_rect`: has {} rows but `n` is {}", rows.len(), self.n);
                for (k, r) in rows.iter().enumerate() {
                    ensure!(
                        r.len() == self.n,
                        "field `v_rect`: row {} has {} entries but `n` is {}",
                        k + 1,
                        r.len(),
                        self.n
                    );
                }
            }
            (Some(_), None) => {}
        }
        Ok(())
    }

    /// Interaction matrix `V`.
    pub fn interaction(&self) -> anyhow::Result<HermitianMatrix<f64>> {
        if let Some(entries) = &self.v_entries {
            let polar: Vec<PolarEntry<f64>> = entries
                .iter()
                .map(|e| PolarEntry {
                    i: e.i,
                    j: e.j,
                    abs: e.abs,
                    arg: e.arg.radians(),
                })
                .collect();
            return hermitian_from_polar(&polar, self.n).context("field `v_entries`");
        }
        let rows = self.v_rect.as_ref().expect("validated");
        let m = ComplexMatrix::from_fn(self.n, |i, j| C::new(rows[i][j][0], rows[i][j][1]));
        HermitianMatrix::new(m, HERMITIAN_TOL).context("field `v_rect`")
    }

    /// The problem at `lambda`, falling back to the file's default and then 0.
    pub fn problem(&self, lambda: Option<f64>) -> anyhow::Result<Problem> {
        let lambda = lambda.or(self.lambda).unwrap_or(0.0);
        Ok(Problem::new(self.omega.clone(), self.interaction()?, lambda)?)
    }

    /// Rectangular form of an in-memory problem.
    pub fn from_problem(p: &Problem) -> Self {
        let n = p.n();
        let v = p.v();
        ProblemFile {
            schema_version: SCHEMA_VERSION,
            n,
            omega: p.omega().to_vec(),
            lambda: Some(p.lambda()),
            v_entries: None,
            v_rect: Some((0..n).map(|i| (0..n).map(|j| [v[(i, j)].re, v[(i, j)].im]).collect()).collect()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}
