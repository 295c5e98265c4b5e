//! Objective expression language.
//!
//! An [`ObjectiveSpec`] is a weighted sum of one to five cost components over
//! the assignment variables `y[v][p]`. `PairLinear` components carry an
//! expression over per-(taxi, passenger) features; the other forms are fixed
//! quadratic shapes over per-taxi loads or chained trips.
//!
//! Serialized form:
//!
//! ```json
//! {"components":[{"form":"PairLinear","expr":"TR_origin_start + TR_dest_start"},
//!                {"form":"LoadQuadratic"}],
//!  "weights":[1.0, 0.5]}
//! ```

mod builtin;
mod eval;
pub(crate) mod parse;
mod validate;

use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

pub use builtin::{builtin, BUILTIN_NAMES};
pub use eval::{evaluate, feature_value, EvalError};
pub use parse::{parse, parse_expr, MAX_PARSE_DEPTH};
pub use validate::{classify, validate, ObjectiveClass, Violation, MAX_COEFF, MAX_COMPONENTS, MAX_DEPTH};

/// Default value of the `big_m` feature, in seconds.
pub const DEFAULT_BIG_M: f64 = 1e6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    /// TR(O^p, S^v)
    TrOriginStart,
    /// TR(D^p, S^v)
    TrDestStart,
    /// TR(O^p, D^p)
    TrTrip,
    /// T^p - t_S
    TimeGap,
    RequestTime,
    AvailTime,
    BigM,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::TrOriginStart,
        Feature::TrDestStart,
        Feature::TrTrip,
        Feature::TimeGap,
        Feature::RequestTime,
        Feature::AvailTime,
        Feature::BigM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::TrOriginStart => "TR_origin_start",
            Feature::TrDestStart => "TR_dest_start",
            Feature::TrTrip => "TR_trip",
            Feature::TimeGap => "time_gap",
            Feature::RequestTime => "request_time",
            Feature::AvailTime => "avail_time",
            Feature::BigM => "big_m",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree over features. Products are only ever by a constant.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Feature(Feature),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Relu(Box<Expr>),
}

impl Expr {
    pub fn feature(f: Feature) -> Self {
        Expr::Feature(f)
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn scale(c: f64, e: Expr) -> Self {
        Expr::Scale(c, Box::new(e))
    }

    pub fn abs(e: Expr) -> Self {
        Expr::Abs(Box::new(e))
    }

    pub fn relu(e: Expr) -> Self {
        Expr::Relu(Box::new(e))
    }

    /// Leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Const(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) => 1 + a.depth().max(b.depth()),
            Expr::Scale(_, e) | Expr::Neg(e) | Expr::Abs(e) | Expr::Relu(e) => 1 + e.depth(),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Feature(_) | Expr::Const(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Expr::Scale(_, e) | Expr::Neg(e) | Expr::Abs(e) | Expr::Relu(e) => e.walk(f),
        }
    }

    fn is_sum(&self) -> bool {
        matches!(self, Expr::Add(..) | Expr::Sub(..))
    }

    fn fmt_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Add(..) | Expr::Sub(..) | Expr::Scale(..) => write!(f, "({self})"),
            Expr::Const(c) if *c < 0.0 => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Feature(x) => f.write_str(x.name()),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { '+' } else { '-' };
                write!(f, "{a} {op} ")?;
                if b.is_sum() {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Scale(c, e) => {
                write!(f, "{c} * ")?;
                e.fmt_atom(f)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_atom(f)
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Relu(e) => write!(f, "relu({e})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostComponent {
    /// Σ_v Σ_p y[v][p] · expr(v, p)
    PairLinear(Expr),
    /// Σ_v load_v²
    LoadQuadratic,
    /// Σ_v (load_v − P/C)²
    LoadDeviation,
    /// Σ_v Σ_{p≠p'} y[v][p] · y[v][p'] · TR(D^p, O^p')
    ChainQuadratic,
}

impl CostComponent {
    pub fn form(&self) -> &'static str {
        match self {
            CostComponent::PairLinear(_) => "PairLinear",
            CostComponent::LoadQuadratic => "LoadQuadratic",
            CostComponent::LoadDeviation => "LoadDeviation",
            CostComponent::ChainQuadratic => "ChainQuadratic",
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            CostComponent::PairLinear(e) => json!({"form": self.form(), "expr": e.to_string()}),
            _ => json!({"form": self.form()}),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub components: Vec<CostComponent>,
    pub weights: Vec<f64>,
    pub big_m: f64,
}

impl ObjectiveSpec {
    pub fn new(components: Vec<CostComponent>, weights: Vec<f64>) -> Self {
        Self {
            components,
            weights,
            big_m: DEFAULT_BIG_M,
        }
    }

    pub fn with_big_m(mut self, big_m: f64) -> Self {
        self.big_m = big_m;
        self
    }

    pub fn to_value(&self) -> Value {
        let mut v = json!({
            "components": self.components.iter().map(CostComponent::to_value).collect::<Vec<_>>(),
            "weights": self.weights,
        });
        if self.big_m != DEFAULT_BIG_M {
            v["big_m"] = json!(self.big_m);
        }
        v
    }

    /// Single-line JSON.
    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("objective serializes")
    }
}

impl serde::Serialize for ObjectiveSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for ObjectiveSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        parse::from_value(&v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("expression syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("unknown component form {0:?}")]
    UnknownForm(String),
    #[error("{0} components given, expected between 1 and 5")]
    ComponentCount(usize),
    #[error("{weights} weights for {components} components")]
    WeightCount { components: usize, weights: usize },
    #[error("weight {0} is not finite")]
    NonFiniteWeight(usize),
    #[error("unknown builtin objective {0:?}")]
    UnknownBuiltin(String),
    #[error("objective violates restrictions: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Parses then validates.
pub fn parse_valid(text: &str) -> Result<ObjectiveSpec, ObjectiveError> {
    let spec = parse(text)?;
    let violations = validate(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(ObjectiveError::Invalid(violations))
    }
}
