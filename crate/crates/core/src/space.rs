//! Bounded hyperparameter boxes and concrete assignments within them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub low: f64,
    pub high: f64,
    /// Default inside the box. Parameters whose library default is "None"
    /// carry the range maximum here; see `unbounded_default`.
    pub default: f64,
    /// True when the untuned default means "unconstrained".
    #[serde(default)]
    pub unbounded_default: bool,
}

impl ParamSpec {
    pub fn integer(name: &str, low: f64, high: f64, default: f64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Integer,
            low,
            high,
            default,
            unbounded_default: false,
        }
    }

    pub fn real(name: &str, low: f64, high: f64, default: f64) -> Self {
        ParamSpec {
            kind: ParamKind::Real,
            ..ParamSpec::integer(name, low, high, default)
        }
    }

    pub fn unbounded(mut self) -> Self {
        self.unbounded_default = true;
        self
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }

    pub fn materialize(&self, v: f64) -> f64 {
        let v = self.clip(v);
        match self.kind {
            ParamKind::Integer => v.round(),
            ParamKind::Real => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    specs: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new(specs: Vec<ParamSpec>) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            if !(s.low.is_finite() && s.high.is_finite() && s.low <= s.high) {
                return Err(Error::InvalidConfig(format!(
                    "bounds of {:?} are not an interval",
                    s.name
                )));
            }
            if !(s.low <= s.default && s.default <= s.high) {
                return Err(Error::InvalidConfig(format!(
                    "default of {:?} lies outside its range",
                    s.name
                )));
            }
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::InvalidConfig(format!("duplicate parameter {:?}", s.name)));
            }
        }
        Ok(ParamSpace { specs })
    }

    /// Unnamed real box, mostly for benchmark functions.
    pub fn real_box(bounds: &[(f64, f64)]) -> Result<Self> {
        ParamSpace::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| ParamSpec::real(&format!("x{i}"), lo, hi, lo))
                .collect(),
        )
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn dims(&self) -> usize {
        self.specs.len()
    }

    pub fn defaults(&self) -> ParamVector {
        self.vector(self.specs.iter().map(|s| s.default).collect())
    }

    /// Pairs `values` with the parameter names, in order.
    pub fn vector(&self, values: Vec<f64>) -> ParamVector {
        debug_assert_eq!(values.len(), self.specs.len());
        ParamVector {
            names: self.specs.iter().map(|s| s.name.clone()).collect(),
            values,
        }
    }

    pub fn contains(&self, v: &ParamVector) -> bool {
        v.values.len() == self.specs.len()
            && self
                .specs
                .iter()
                .zip(&v.values)
                .all(|(s, &x)| s.low <= x && x <= s.high)
    }

    /// Clips to the box and rounds integer dimensions.
    pub fn materialize(&self, v: &ParamVector) -> ParamVector {
        self.vector(
            self.specs
                .iter()
                .zip(&v.values)
                .map(|(s, &x)| s.materialize(x))
                .collect(),
        )
    }
}

/// One value per dimension of a [`ParamSpace`], addressable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

impl std::fmt::Display for ParamVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("{")?;
        for (i, (n, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        f.write_str("}")
    }
}
