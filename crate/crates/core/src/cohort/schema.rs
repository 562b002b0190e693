//! Attribute schema: the ordered explanatory variables, their families and
//! value kinds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CohortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Protected,
    FacialHair,
    Makeup,
    Accessory,
    Orientation,
    Occlusion,
    Distortion,
    Emotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariableKind {
    /// Real value in [0, 1].
    ContinuousUnit,
    ContinuousRange {
        lo: f64,
        hi: f64,
    },
    /// Stored as 0 or 1.
    Boolean,
    /// Stored as the level index.
    Categorical {
        levels: Vec<String>,
    },
}

impl VariableKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, VariableKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            VariableKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    /// Bounds a valid value must respect.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            VariableKind::ContinuousUnit | VariableKind::Boolean => (0.0, 1.0),
            VariableKind::ContinuousRange { lo, hi } => (*lo, *hi),
            VariableKind::Categorical { levels } => (0.0, levels.len() as f64 - 1.0),
        }
    }

    pub fn accepts(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        let (lo, hi) = self.bounds();
        match self {
            VariableKind::Boolean => v == 0.0 || v == 1.0,
            VariableKind::Categorical { .. } => v.fract() == 0.0 && v >= lo && v <= hi,
            _ => v >= lo && v <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub family: Family,
    pub kind: VariableKind,
}

impl Variable {
    fn new(name: &str, family: Family, kind: VariableKind) -> Self {
        Self {
            name: name.to_string(),
            family,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub variables: Vec<Variable>,
    pub protected: Vec<String>,
}

impl AttributeSchema {
    pub fn new(variables: Vec<Variable>, protected: Vec<String>) -> Result<Self, CohortError> {
        let schema = Self {
            variables,
            protected,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The 20-variable schema in eight families: protected (3), facial hair
    /// (3), make-up (2), accessories (2), orientation (3), occlusion (4),
    /// distortion (2) and emotion (1).
    pub fn standard() -> Self {
        use Family::*;
        use VariableKind::*;
        let unit = || ContinuousUnit;
        let angle = || ContinuousRange {
            lo: -180.0,
            hi: 180.0,
        };
        let levels = |v: &[&str]| Categorical {
            levels: v.iter().map(|s| s.to_string()).collect(),
        };
        let variables = vec![
            Variable::new("gender", Protected, levels(&["Man", "Woman"])),
            Variable::new(
                "ethnicity",
                Protected,
                levels(&["Asian", "Black", "Caucasian"]),
            ),
            Variable::new("age", Protected, ContinuousRange { lo: 1.0, hi: 100.0 }),
            Variable::new("mustache", FacialHair, unit()),
            Variable::new("beard", FacialHair, unit()),
            Variable::new("sideburns", FacialHair, unit()),
            Variable::new("eye_makeup", Makeup, unit()),
            Variable::new("lip_makeup", Makeup, unit()),
            Variable::new("head_wear", Accessory, unit()),
            Variable::new("glasses", Accessory, unit()),
            Variable::new("roll", Orientation, angle()),
            Variable::new("yaw", Orientation, angle()),
            Variable::new("pitch", Orientation, angle()),
            Variable::new("forehead_occluded", Occlusion, Boolean),
            Variable::new("eye_occluded", Occlusion, Boolean),
            Variable::new("mouth_occluded", Occlusion, Boolean),
            Variable::new("exposure", Occlusion, unit()),
            Variable::new("blur", Distortion, unit()),
            Variable::new("noise", Distortion, unit()),
            Variable::new("smile", Emotion, unit()),
        ];
        let protected = ["gender", "ethnicity", "age"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Self {
            variables,
            protected,
        }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let invalid = |m: String| Err(CohortError::InvalidSchema(m));
        if self.variables.is_empty() {
            return invalid("schema declares no variables".into());
        }
        for (i, v) in self.variables.iter().enumerate() {
            if v.name.is_empty() || v.name == "image_id" {
                return invalid(format!("invalid variable name `{}`", v.name));
            }
            if self.variables[..i].iter().any(|w| w.name == v.name) {
                return invalid(format!("duplicate variable `{}`", v.name));
            }
            match &v.kind {
                VariableKind::ContinuousRange { lo, hi } if !(lo < hi) => {
                    return invalid(format!("`{}` has empty range [{lo}, {hi}]", v.name));
                }
                VariableKind::Categorical { levels } if levels.len() < 2 => {
                    return invalid(format!("`{}` needs at least two levels", v.name));
                }
                _ => {}
            }
        }
        for p in &self.protected {
            if self.index_of(p).is_none() {
                return invalid(format!("protected attribute `{p}` is not a variable"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn is_protected(&self, name: &str) -> bool {
        self.protected.iter().any(|p| p == name)
    }

    pub fn family_sizes(&self) -> Vec<(Family, usize)> {
        let mut out: Vec<(Family, usize)> = Vec::new();
        for v in &self.variables {
            match out.iter_mut().find(|(f, _)| *f == v.family) {
                Some((_, n)) => *n += 1,
                None => out.push((v.family, 1)),
            }
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CohortError> {
        let schema: Self =
            toml::from_str(text).map_err(|e| CohortError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CohortError> {
        let text = std::fs::read_to_string(path).map_err(|e| CohortError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}

impl Default for AttributeSchema {
    fn default() -> Self {
        Self::standard()
    }
}
