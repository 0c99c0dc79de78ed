//! JSON form of a [`DensitySpec`]:
//!
//! ```json
//! {"family": "laplace",   "params": {"loc": 0.0, "scale": 1.0}}
//! {"family": "gaussian",  "params": {"mean": 0.0, "std": 1.0}}
//! {"family": "uniform",   "params": {"lo": 0.0, "hi": 1.0}}
//! {"family": "staircase", "params": {"ratio": 0.5, "width": 1.0}}
//! {"family": "piecewise", "segments": [{"lo": 0.0, "hi": "inf", "expr": "(* 0.5 z (exp (- z)))"}]}
//! ```
//!
//! Unbounded segment ends are the strings `"inf"` / `"-inf"`.

use serde::{Deserialize, Serialize};

use super::{DensityError, DensitySpec, Expr, Family, Segment};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub(super) enum DensityDoc {
    Laplace { params: LaplaceParams },
    Gaussian { params: GaussianParams },
    Uniform { params: UniformParams },
    Staircase { params: StaircaseParams },
    Piecewise { segments: Vec<SegmentDoc> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct LaplaceParams {
    loc: f64,
    scale: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct GaussianParams {
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct UniformParams {
    lo: f64,
    hi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct StaircaseParams {
    ratio: f64,
    width: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct SegmentDoc {
    lo: Bound,
    hi: Bound,
    expr: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Bound {
    Num(f64),
    Text(String),
}

impl Bound {
    fn value(&self, field: &'static str, index: usize) -> Result<f64, DensityError> {
        match self {
            Bound::Num(v) => Ok(*v),
            Bound::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(DensityError::InvalidSegment {
                    index,
                    reason: format!("`{field}` must be a number, \"inf\" or \"-inf\", got {t:?}"),
                }),
            },
        }
    }

    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            Bound::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Bound::Text("-inf".into())
        } else {
            Bound::Num(v)
        }
    }
}

impl TryFrom<DensityDoc> for DensitySpec {
    type Error = DensityError;

    fn try_from(doc: DensityDoc) -> Result<Self, Self::Error> {
        match doc {
            DensityDoc::Laplace { params: p } => DensitySpec::laplace(p.loc, p.scale),
            DensityDoc::Gaussian { params: p } => DensitySpec::gaussian(p.mean, p.std),
            DensityDoc::Uniform { params: p } => DensitySpec::uniform(p.lo, p.hi),
            DensityDoc::Staircase { params: p } => DensitySpec::staircase(p.ratio, p.width),
            DensityDoc::Piecewise { segments } => {
                let segments = segments
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let expr = Expr::parse(&s.expr).map_err(|e| DensityError::InvalidSegment {
                            index: i,
                            reason: format!("`expr`: {e}"),
                        })?;
                        Ok(Segment::new(s.lo.value("lo", i)?, s.hi.value("hi", i)?, expr))
                    })
                    .collect::<Result<Vec<_>, DensityError>>()?;
                DensitySpec::piecewise(segments)
            }
        }
    }
}

impl From<&DensitySpec> for DensityDoc {
    fn from(spec: &DensitySpec) -> Self {
        match spec.family() {
            Family::Laplace { loc, scale } => DensityDoc::Laplace {
                params: LaplaceParams { loc: *loc, scale: *scale },
            },
            Family::Gaussian { mean, std } => DensityDoc::Gaussian {
                params: GaussianParams { mean: *mean, std: *std },
            },
            Family::Uniform { lo, hi } => DensityDoc::Uniform {
                params: UniformParams { lo: *lo, hi: *hi },
            },
            Family::Staircase { ratio, width } => DensityDoc::Staircase {
                params: StaircaseParams { ratio: *ratio, width: *width },
            },
            Family::Piecewise(segments) => DensityDoc::Piecewise {
                segments: segments
                    .iter()
                    .map(|s| SegmentDoc {
                        lo: Bound::from_value(s.lo),
                        hi: Bound::from_value(s.hi),
                        expr: s.expr.to_string(),
                    })
                    .collect(),
            },
        }
    }
}

impl Serialize for DensitySpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DensityDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensitySpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = DensityDoc::deserialize(deserializer)?;
        DensitySpec::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl DensitySpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serializes")
    }
}
