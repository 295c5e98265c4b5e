use serde_json::Value;

use super::{CostComponent, Expr, Feature, ObjectiveError, ObjectiveSpec, DEFAULT_BIG_M};

/// Nesting guard for the recursive-descent parser.
pub const MAX_PARSE_DEPTH: usize = 64;

/// Parses the JSON objective schema. Structural rules (component count,
/// weight count, finite weights) are checked here; the expression
/// restrictions are left to [`super::validate`].
pub fn parse(text: &str) -> Result<ObjectiveSpec, ObjectiveError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ObjectiveError::Json(e.to_string()))?;
    from_value(&value)
}

pub(crate) fn from_value(value: &Value) -> Result<ObjectiveSpec, ObjectiveError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ObjectiveError::Schema("top level must be an object".into()))?;
    let comps = obj
        .get("components")
        .and_then(Value::as_array)
        .ok_or_else(|| ObjectiveError::Schema("missing \"components\" array".into()))?;
    let weights = obj
        .get("weights")
        .and_then(Value::as_array)
        .ok_or_else(|| ObjectiveError::Schema("missing \"weights\" array".into()))?;
    if comps.is_empty() || comps.len() > super::MAX_COMPONENTS {
        return Err(ObjectiveError::ComponentCount(comps.len()));
    }
    if weights.len() != comps.len() {
        return Err(ObjectiveError::WeightCount {
            components: comps.len(),
            weights: weights.len(),
        });
    }

    let mut components = Vec::with_capacity(comps.len());
    for (i, c) in comps.iter().enumerate() {
        let form = c
            .get("form")
            .and_then(Value::as_str)
            .ok_or_else(|| ObjectiveError::Schema(format!("component {i} has no \"form\"")))?;
        let comp = match form {
            "PairLinear" => {
                let expr = c.get("expr").and_then(Value::as_str).ok_or_else(|| {
                    ObjectiveError::Schema(format!("component {i} (PairLinear) has no \"expr\" string"))
                })?;
                CostComponent::PairLinear(parse_expr(expr)?)
            }
            "LoadQuadratic" => CostComponent::LoadQuadratic,
            "LoadDeviation" => CostComponent::LoadDeviation,
            "ChainQuadratic" => CostComponent::ChainQuadratic,
            other => return Err(ObjectiveError::UnknownForm(other.to_string())),
        };
        components.push(comp);
    }

    let mut ws = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let w = w
            .as_f64()
            .ok_or_else(|| ObjectiveError::Schema(format!("weight {i} is not a number")))?;
        if !w.is_finite() {
            return Err(ObjectiveError::NonFiniteWeight(i));
        }
        ws.push(w);
    }

    let big_m = match obj.get("big_m") {
        None | Some(Value::Null) => DEFAULT_BIG_M,
        Some(v) => v
            .as_f64()
            .filter(|m| m.is_finite())
            .ok_or_else(|| ObjectiveError::Schema("\"big_m\" must be a finite number".into()))?,
    };

    Ok(ObjectiveSpec {
        components,
        weights: ws,
        big_m,
    })
}

/// Parses a `PairLinear` expression. Constant subtrees are folded, so every
/// non-leaf node of the result contains at least one feature.
pub fn parse_expr(text: &str) -> Result<Expr, ObjectiveError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ObjectiveError {
        ObjectiveError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<(), ObjectiveError> {
        self.depth += 1;
        if self.depth > MAX_PARSE_DEPTH {
            Err(self.err("expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Expr, ObjectiveError> {
        self.enter()?;
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                acc = fold_add(acc, rhs, false);
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                acc = fold_add(acc, rhs, true);
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, ObjectiveError> {
        let mut acc = self.unary()?;
        while self.eat(b'*') {
            let at = self.pos;
            let rhs = self.unary()?;
            acc = match (acc, rhs) {
                (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
                (Expr::Const(c), e) | (e, Expr::Const(c)) => Expr::Scale(c, Box::new(e)),
                _ => {
                    return Err(ObjectiveError::Syntax {
                        pos: at,
                        msg: "product of two non-constant terms".into(),
                    })
                }
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ObjectiveError> {
        self.enter()?;
        let e = if self.eat(b'-') {
            match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            }
        } else {
            self.atom()?
        };
        self.depth -= 1;
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ObjectiveError> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
                match name {
                    "abs" | "relu" => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let inner = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.err("expected ')'"));
                        }
                        Ok(match (name, inner) {
                            ("abs", Expr::Const(c)) => Expr::Const(c.abs()),
                            ("relu", Expr::Const(c)) => Expr::Const(c.max(0.0)),
                            ("abs", e) => Expr::Abs(Box::new(e)),
                            (_, e) => Expr::Relu(Box::new(e)),
                        })
                    }
                    _ => Feature::from_name(name)
                        .map(Expr::Feature)
                        .ok_or_else(|| ObjectiveError::UnknownFeature(name.to_string())),
                }
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ObjectiveError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            digits(self);
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
            _ => Err(ObjectiveError::Syntax {
                pos: start,
                msg: format!("bad number {s:?}"),
            }),
        }
    }
}

fn fold_add(a: Expr, b: Expr, minus: bool) -> Expr {
    match (a, b, minus) {
        (Expr::Const(x), Expr::Const(y), false) => Expr::Const(x + y),
        (Expr::Const(x), Expr::Const(y), true) => Expr::Const(x - y),
        (a, b, false) => Expr::Add(Box::new(a), Box::new(b)),
        (a, b, true) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Feature::*;

    fn f(x: Feature) -> Expr {
        Expr::Feature(x)
    }

    #[test]
    fn distance_objective() {
        let spec = parse(
            r#"{"components":[{"form":"PairLinear","expr":"TR_origin_start + TR_dest_start"}],"weights":[1]}"#,
        )
        .unwrap();
        assert_eq!(spec.components.len(), 1);
        assert_eq!(
            spec.components[0],
            CostComponent::PairLinear(Expr::add(f(TrOriginStart), f(TrDestStart)))
        );
        assert_eq!(spec.weights, vec![1.0]);
    }

    #[test]
    fn weight_length_mismatch() {
        let r = parse(r#"{"components":[{"form":"LoadQuadratic"}],"weights":[1,2]}"#);
        assert_eq!(
            r,
            Err(ObjectiveError::WeightCount {
                components: 1,
                weights: 2
            })
        );
    }

    #[test]
    fn six_components() {
        let c = r#"{"form":"LoadQuadratic"}"#;
        let text = format!(r#"{{"components":[{c},{c},{c},{c},{c},{c}],"weights":[1,1,1,1,1,1]}}"#);
        assert_eq!(parse(&text), Err(ObjectiveError::ComponentCount(6)));
    }

    #[test]
    fn unknown_feature_and_form() {
        assert!(matches!(parse_expr("TR_origin + 1"), Err(ObjectiveError::UnknownFeature(_))));
        let r = parse(r#"{"components":[{"form":"Cubic"}],"weights":[1]}"#);
        assert!(matches!(r, Err(ObjectiveError::UnknownForm(_))));
    }

    #[test]
    fn products_and_folding() {
        assert_eq!(parse_expr("2 * 3").unwrap(), Expr::Const(6.0));
        assert_eq!(parse_expr("TR_trip * 2").unwrap(), Expr::scale(2.0, f(TrTrip)));
        assert_eq!(parse_expr("-(1 + 2)").unwrap(), Expr::Const(-3.0));
        assert!(matches!(
            parse_expr("TR_trip * time_gap"),
            Err(ObjectiveError::Syntax { .. })
        ));
        assert_eq!(
            parse_expr("abs(time_gap) - relu(-4)").unwrap(),
            Expr::sub(Expr::abs(f(TimeGap)), Expr::Const(0.0))
        );
        assert_eq!(parse_expr("1.5e2").unwrap(), Expr::Const(150.0));
    }

    #[test]
    fn syntax_errors_do_not_panic() {
        for bad in ["", "(", "abs(", "1 +", "x)", "TR_trip )", "abs time_gap", "3..4", "@", "1e999"] {
            assert!(parse_expr(bad).is_err(), "{bad:?}");
        }
        let deep = "(".repeat(500) + "1" + &")".repeat(500);
        assert!(parse_expr(&deep).is_err());
        let negs = "-".repeat(500) + "1";
        assert!(parse_expr(&negs).is_err());
    }

    #[test]
    fn extra_keys_and_big_m() {
        let spec = parse(
            r#"{"note":"x","components":[{"form":"PairLinear","expr":"big_m"}],"weights":[0.5],"big_m":1000}"#,
        )
        .unwrap();
        assert_eq!(spec.big_m, 1000.0);
        assert_eq!(parse(&spec.to_json()).unwrap(), spec);
    }
}
