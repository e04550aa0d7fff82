//! User-defined models loaded from JSON.
//!
//! ```json
//! {
//!   "name": "surface_blowup",
//!   "bulk_species": ["u"],
//!   "surface_species": ["v"],
//!   "diffusivity": [1.0],
//!   "surface_diffusivity": [1.0],
//!   "parameters": {"c": 1.0},
//!   "H": ["0"],
//!   "F": ["c*v^2"],
//!   "G": ["0"]
//! }
//! ```
//!
//! Expressions may name species, `u1..uk`, `v1..vm`, parameters and `pi`.
//! Grammar: `+ - * / ^`, unary minus, parentheses, and the functions
//! `max min pos abs exp log sqrt sin cos`. `H` may only read bulk species.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::{self, Expr};
use super::{
    species_resolver, ConservedCombination, DeclaredPair, ExprKinetics, ExprSources, FieldSpec,
    InitialData, Kinetics, ReactionSystem, MAX_EXPR_SPECIES,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub bulk_species: Vec<String>,
    pub surface_species: Vec<String>,
    pub diffusivity: Vec<f64>,
    pub surface_diffusivity: Vec<f64>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(rename = "H")]
    pub h: Vec<String>,
    #[serde(rename = "F")]
    pub f: Vec<String>,
    #[serde(rename = "G")]
    pub g: Vec<String>,
    /// Asserted by the author; the checker verifies it independently.
    #[serde(default = "truthy")]
    pub quasi_positive: bool,
    #[serde(default)]
    pub conserved: Vec<ConservedCombination>,
    #[serde(default)]
    pub declared: Vec<DeclaredPair>,
    #[serde(default)]
    pub initial: Option<ModelInitial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInitial {
    pub bulk: Vec<FieldSpec>,
    pub surface: Vec<FieldSpec>,
}

fn truthy() -> bool {
    true
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("model file at `{}`: {}", e.path(), e.inner())))
    }

    /// Compiles the expressions. Default initial data is all ones.
    pub fn compile(&self) -> Result<(ReactionSystem, InitialData)> {
        let (k, m) = (self.bulk_species.len(), self.surface_species.len());
        if k == 0 || m == 0 {
            return Err(Error::Config(format!("model `{}` needs at least one bulk and one surface species", self.name)));
        }
        if k + m > MAX_EXPR_SPECIES {
            return Err(Error::Config(format!(
                "model `{}` has {} species; at most {MAX_EXPR_SPECIES} are supported",
                self.name,
                k + m
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in self.bulk_species.iter().chain(&self.surface_species).chain(self.parameters.keys()) {
            if !seen.insert(s.as_str()) {
                return Err(Error::Config(format!("model `{}`: name `{s}` is declared twice", self.name)));
            }
        }
        let sources = ExprSources { h: self.h.clone(), f: self.f.clone(), g: self.g.clone() };
        let sys = ReactionSystem {
            name: self.name.clone(),
            bulk_species: self.bulk_species.clone(),
            surface_species: self.surface_species.clone(),
            diffusivity: self.diffusivity.clone(),
            surface_diffusivity: self.surface_diffusivity.clone(),
            rates: self.parameters.clone(),
            kinetics: Kinetics::Expression(compile_sources(
                &sources,
                &self.bulk_species,
                &self.surface_species,
                &self.parameters,
            )?),
            quasi_positive: self.quasi_positive,
            conserved: self.conserved.clone(),
            declared: self.declared.clone(),
        };
        sys.validate()?;
        let init = match &self.initial {
            Some(i) => InitialData { bulk: i.bulk.clone(), surface: i.surface.clone() },
            None => InitialData::uniform(k, m, 1.0, 1.0),
        };
        Ok((sys, init))
    }
}

fn compile_sources(
    sources: &ExprSources,
    bulk: &[String],
    surface: &[String],
    params: &BTreeMap<String, f64>,
) -> Result<ExprKinetics> {
    let (k, m) = (bulk.len(), surface.len());
    let check_len = |label: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Config(format!("`{label}` has {got} components, expected {want}")))
        }
    };
    check_len("H", sources.h.len(), k)?;
    check_len("F", sources.f.len(), m)?;
    check_len("G", sources.g.len(), k)?;
    let resolve = species_resolver(bulk, surface, params);
    let compile = |label: &str, idx: usize, src: &str| -> Result<Expr> {
        expr::parse(src, &resolve).map_err(|e| Error::Expr(format!("{label}{}: {e}", idx + 1)))
    };
    let h = sources
        .h
        .iter()
        .enumerate()
        .map(|(i, s)| compile("H", i, s))
        .collect::<Result<Vec<_>>>()?;
    for (i, e) in h.iter().enumerate() {
        if (k..k + m).any(|var| e.references(var)) {
            return Err(Error::Expr(format!("H{} may not depend on surface species", i + 1)));
        }
    }
    let f = sources
        .f
        .iter()
        .enumerate()
        .map(|(i, s)| compile("F", i, s))
        .collect::<Result<Vec<_>>>()?;
    let g = sources
        .g
        .iter()
        .enumerate()
        .map(|(i, s)| compile("G", i, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExprKinetics { h, f, g, sources: sources.clone() })
}

/// Recompiles an expression system after a parameter change.
pub(super) fn recompile(sys: &ReactionSystem) -> Result<ReactionSystem> {
    let Kinetics::Expression(ex) = &sys.kinetics else {
        return Ok(sys.clone());
    };
    let mut out = sys.clone();
    out.kinetics = Kinetics::Expression(compile_sources(
        &ex.sources,
        &sys.bulk_species,
        &sys.surface_species,
        &sys.rates,
    )?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BLOWUP: &str = r#"{
        "name": "surface_blowup",
        "bulk_species": ["u"],
        "surface_species": ["v"],
        "diffusivity": [1.0],
        "surface_diffusivity": [1.0],
        "parameters": {"c": 1.0},
        "H": ["0"],
        "F": ["c*v^2"],
        "G": ["0"],
        "initial": {"bulk": [[1.0]], "surface": ["2"]}
    }"#;

    #[test]
    fn loads_and_evaluates() {
        let (sys, init) = ModelFile::from_json(BLOWUP).unwrap().compile().unwrap();
        let r = sys.eval_reactions(&[1.0], &[3.0]).unwrap();
        assert_eq!(r.f[0], 9.0);
        assert_eq!(r.g[0], 0.0);
        assert_eq!(init.surface, vec![FieldSpec::Expr("2".into())]);
    }

    #[test]
    fn parameter_override_recompiles() {
        let (sys, _) = ModelFile::from_json(BLOWUP).unwrap().compile().unwrap();
        let mut o = BTreeMap::new();
        o.insert("c".to_string(), 2.0);
        let s2 = sys.with_overrides(&o).unwrap();
        assert_eq!(s2.eval_reactions(&[1.0], &[3.0]).unwrap().f[0], 18.0);
    }

    #[test]
    fn matches_builtin_toy() {
        let text = r#"{"name":"t","bulk_species":["u"],"surface_species":["v"],
            "diffusivity":[1],"surface_diffusivity":[1],
            "H":["0"],"F":["u^2*v^2"],"G":["-u1^2*v1^2"]}"#;
        let (sys, _) = ModelFile::from_json(text).unwrap().compile().unwrap();
        let (toy, _) = super::super::builtin("toy_conserving").unwrap();
        for (u, v) in [(0.5f64, 2.0f64), (3.0, 0.1), (0.0, 7.0)] {
            let (a, b) = (sys.eval_reactions(&[u], &[v]).unwrap(), toy.eval_reactions(&[u], &[v]).unwrap());
            assert!((a.f[0] - b.f[0]).abs() <= 1e-15 * b.f[0].abs());
            assert!((a.g[0] - b.g[0]).abs() <= 1e-15 * b.g[0].abs());
        }
    }

    #[test]
    fn rejects_bad_files() {
        let unknown = BLOWUP.replace("\"parameters\"", "\"params\"");
        assert!(matches!(ModelFile::from_json(&unknown), Err(Error::Config(_))));
        let bad_expr = BLOWUP.replace("c*v^2", "c*w^2");
        assert!(ModelFile::from_json(&bad_expr).unwrap().compile().is_err());
        let h_reads_v = BLOWUP.replace("\"H\": [\"0\"]", "\"H\": [\"v\"]");
        assert!(matches!(ModelFile::from_json(&h_reads_v).unwrap().compile(), Err(Error::Expr(_))));
        let wrong_len = BLOWUP.replace("\"G\": [\"0\"]", "\"G\": [\"0\", \"1\"]");
        assert!(ModelFile::from_json(&wrong_len).unwrap().compile().is_err());
    }
}
