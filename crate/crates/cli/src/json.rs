//! JSON values with the 6-significant-digit convention.

use acdesign::text::format_sig;
use acdesign::{Design, Point};
use serde_json::{json, Value};

/// Rounds to 6 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    format_sig(x, 6)
        .parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// `[{"dose": .., "arm": 0, "weight": ..}, .., {"dose": "C", "arm": 1, ..}]`
pub fn design(design: &Design) -> Value {
    Value::Array(
        design
            .points()
            .into_iter()
            .map(|(p, w)| match p {
                Point::Drug(d) => json!({ "dose": num(d), "arm": 0, "weight": num(w) }),
                Point::Control => json!({ "dose": "C", "arm": 1, "weight": num(w) }),
            })
            .collect(),
    )
}

pub fn point(p: Point) -> Value {
    match p {
        Point::Drug(d) => num(d),
        Point::Control => Value::String("C".into()),
    }
}
