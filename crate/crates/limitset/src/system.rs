//! JSON system specifications: the ODE right-hand side, an optional
//! candidate function `V`, named regions, and integrator overrides. Built-in
//! examples are compiled into the binary so analyses run without fixture
//! paths.

use crate::expr::{Expression, ExprError};
use crate::odeint::IntegratorConfig;
use crate::regions::{Region, RegionError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Raw JSON shape of a system specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpecFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub dimension: usize,
    /// Right-hand side expressions, one per state component.
    pub f: Vec<String>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionSpec>,
    #[serde(default)]
    pub integrator: IntegratorOverrides,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<Vec<[f64; 2]>>,
}

/// Region JSON fragment, e.g.
/// `{"kind":"zero_set","g":"x2","tol":1e-6,"box":[[-10,10],[-10,10]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    ZeroSet {
        g: String,
        #[serde(default)]
        tol: Option<f64>,
        #[serde(rename = "box", default)]
        bounds: Option<Vec<[f64; 2]>>,
    },
    Sublevel {
        g: String,
        #[serde(default)]
        tol: Option<f64>,
        #[serde(rename = "box", default)]
        bounds: Option<Vec<[f64; 2]>>,
    },
    PointSet {
        points: Vec<Vec<f64>>,
        #[serde(default)]
        tol: Option<f64>,
    },
    WholeSpace,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntegratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
}

impl IntegratorOverrides {
    pub fn apply(&self, mut config: IntegratorConfig) -> IntegratorConfig {
        if let Some(v) = self.rel_tol {
            config.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            config.abs_tol = v;
        }
        if let Some(v) = self.t_end {
            config.t_end = v;
        }
        if let Some(v) = self.blowup_norm {
            config.blowup_norm = v;
        }
        if let Some(v) = self.max_steps {
            config.max_steps = v;
        }
        if let Some(v) = self.initial_step {
            config.initial_step = Some(v);
        }
        if let Some(v) = self.max_step {
            config.max_step = Some(v);
        }
        if let Some(v) = self.min_step {
            config.min_step = v;
        }
        config
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {source}")]
    Expr { field: String, source: ExprError },
    #[error("field `f` has {got} components but `dimension` is {expected}")]
    FieldArity { expected: usize, got: usize },
    #[error("`dimension` must be positive")]
    ZeroDimension,
    #[error("region `{name}`: {source}")]
    Region { name: String, source: RegionError },
    #[error("region `{name}`: bounding box has {got} axes, expected {expected}")]
    RegionBox {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("bounding box has {got} axes, expected {expected}")]
    BoundingBox { expected: usize, got: usize },
    #[error("no region named `{0}` in this system")]
    UnknownRegion(String),
    #[error("`{0}` is neither a readable file nor a built-in system")]
    UnknownSystem(String),
    #[error("system `{0}` declares no V; pass one explicitly")]
    MissingV(String),
}

/// A fully validated system: every expression parsed eagerly against the
/// declared dimension.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    name: String,
    description: String,
    dimension: usize,
    field: Vec<Expression>,
    field_text: Vec<String>,
    v: Option<Expression>,
    v_text: Option<String>,
    regions: BTreeMap<String, Region>,
    integrator: IntegratorOverrides,
    bounding_box: Option<Vec<[f64; 2]>>,
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<SystemSpec, SpecError> {
        let raw: SystemSpecFile = serde_json::from_str(text)?;
        SystemSpec::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<SystemSpec, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SystemSpec::from_json(&text)
    }

    pub fn from_raw(raw: SystemSpecFile) -> Result<SystemSpec, SpecError> {
        let n = raw.dimension;
        if n == 0 {
            return Err(SpecError::ZeroDimension);
        }
        if raw.f.len() != n {
            return Err(SpecError::FieldArity {
                expected: n,
                got: raw.f.len(),
            });
        }
        let mut field = Vec::with_capacity(n);
        for (i, text) in raw.f.iter().enumerate() {
            field.push(Expression::parse(text, n).map_err(|source| SpecError::Expr {
                field: format!("f[{i}]"),
                source,
            })?);
        }
        let v = raw
            .v
            .as_ref()
            .map(|text| {
                Expression::parse(text, n).map_err(|source| SpecError::Expr {
                    field: "V".into(),
                    source,
                })
            })
            .transpose()?;
        if let Some(bb) = &raw.bounding_box {
            if bb.len() != n {
                return Err(SpecError::BoundingBox {
                    expected: n,
                    got: bb.len(),
                });
            }
        }
        let mut regions = BTreeMap::new();
        for (name, spec) in &raw.regions {
            let region = build_region(name, spec, n)?;
            regions.insert(name.clone(), region);
        }
        Ok(SystemSpec {
            name: raw.name,
            description: raw.description,
            dimension: n,
            field,
            field_text: raw.f,
            v,
            v_text: raw.v,
            regions,
            integrator: raw.integrator,
            bounding_box: raw.bounding_box,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn field(&self) -> &[Expression] {
        &self.field
    }

    pub fn field_text(&self) -> &[String] {
        &self.field_text
    }

    pub fn v(&self) -> Option<&Expression> {
        self.v.as_ref()
    }

    pub fn v_text(&self) -> Option<&str> {
        self.v_text.as_deref()
    }

    pub fn region(&self, name: &str) -> Result<&Region, SpecError> {
        self.regions
            .get(name)
            .ok_or_else(|| SpecError::UnknownRegion(name.to_string()))
    }

    pub fn region_names(&self) -> impl Iterator<Item = &str> {
        self.regions.keys().map(|s| s.as_str())
    }

    pub fn bounding_box(&self) -> Option<&[[f64; 2]]> {
        self.bounding_box.as_deref()
    }

    /// Integrator defaults with this system's overrides applied.
    pub fn config(&self) -> IntegratorConfig {
        self.integrator.apply(IntegratorConfig::default())
    }
}

fn build_region(name: &str, spec: &RegionSpec, dimension: usize) -> Result<Region, SpecError> {
    let expr = |g: &str, field: String| {
        Expression::parse(g, dimension).map_err(|source| SpecError::Expr { field, source })
    };
    let check_box = |bounds: &Option<Vec<[f64; 2]>>| -> Result<(), SpecError> {
        if let Some(b) = bounds {
            if b.len() != dimension {
                return Err(SpecError::RegionBox {
                    name: name.to_string(),
                    expected: dimension,
                    got: b.len(),
                });
            }
        }
        Ok(())
    };
    let region = match spec {
        RegionSpec::ZeroSet { g, tol, bounds } => {
            check_box(bounds)?;
            let mut r = Region::zero_set(expr(g, format!("regions.{name}.g"))?);
            if let Some(t) = tol {
                r = r.with_tol(*t);
            }
            if let Some(b) = bounds {
                r = r.with_bounds(b.clone());
            }
            r
        }
        RegionSpec::Sublevel { g, tol, bounds } => {
            check_box(bounds)?;
            let mut r = Region::sublevel(expr(g, format!("regions.{name}.g"))?);
            if let Some(t) = tol {
                r = r.with_tol(*t);
            }
            if let Some(b) = bounds {
                r = r.with_bounds(b.clone());
            }
            r
        }
        RegionSpec::PointSet { points, tol } => {
            let mut r = Region::point_set(points.clone(), dimension).map_err(|source| {
                SpecError::Region {
                    name: name.to_string(),
                    source,
                }
            })?;
            if let Some(t) = tol {
                r = r.with_tol(*t);
            }
            r
        }
        RegionSpec::WholeSpace => Region::whole_space(dimension),
    };
    Ok(region)
}

const BUILTIN_SOURCES: [(&str, &str); 3] = [
    ("eq4", include_str!("builtin/eq4.json")),
    ("harmonic", include_str!("builtin/harmonic.json")),
    ("blowup", include_str!("builtin/blowup.json")),
];

/// Names of the compiled-in example systems.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN_SOURCES.iter().map(|(name, _)| *name).collect()
}

pub fn load_builtin(name: &str) -> Option<SystemSpec> {
    BUILTIN_SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| SystemSpec::from_json(text).expect("built-in systems are valid"))
}

pub fn builtins() -> Vec<SystemSpec> {
    BUILTIN_SOURCES
        .iter()
        .map(|(_, text)| SystemSpec::from_json(text).expect("built-in systems are valid"))
        .collect()
}

/// Resolve a `--system` argument: an existing file path wins, otherwise a
/// built-in name.
pub fn resolve(name_or_path: &str) -> Result<SystemSpec, SpecError> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        return SystemSpec::from_path(path);
    }
    load_builtin(name_or_path).ok_or_else(|| SpecError::UnknownSystem(name_or_path.to_string()))
}
