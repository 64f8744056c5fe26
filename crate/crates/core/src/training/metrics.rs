use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::model::PipnModel;

/// Relative L2 error of one field; falls back to the absolute error when the
/// reference norm is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub value: f64,
    pub absolute: bool,
}

/// `||pred - reference|| / ||reference||`.
pub fn relative_l2(pred: &[f64], reference: &[f64]) -> FieldError {
    assert_eq!(pred.len(), reference.len());
    let diff = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum::<f64>().sqrt();
    let norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm > 0.0 {
        FieldError { value: diff / norm, absolute: false }
    } else {
        FieldError { value: diff, absolute: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryError {
    pub id: String,
    pub u: FieldError,
    pub v: FieldError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(Self { min, mean, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub geometries: Vec<GeometryError>,
    pub u: Summary,
    pub v: Summary,
}

/// Errors of `(u, v)` for each geometry given its predictions.
pub fn geometry_error(id: &str, pred: &[[f64; 2]], reference: &[[f64; 2]]) -> GeometryError {
    let field = |c: usize, xs: &[[f64; 2]]| xs.iter().map(|x| x[c]).collect::<Vec<_>>();
    GeometryError {
        id: id.to_string(),
        u: relative_l2(&field(0, pred), &field(0, reference)),
        v: relative_l2(&field(1, pred), &field(1, reference)),
    }
}

/// Aggregates per-geometry errors into min/mean/max.
pub fn summarize(geometries: Vec<GeometryError>) -> Result<EvaluationReport, TrainingError> {
    let us: Vec<f64> = geometries.iter().map(|g| g.u.value).collect();
    let vs: Vec<f64> = geometries.iter().map(|g| g.v.value).collect();
    let (Some(u), Some(v)) = (Summary::of(&us), Summary::of(&vs)) else {
        return Err(TrainingError::EmptyDataset);
    };
    Ok(EvaluationReport { geometries, u, v })
}

/// Evaluates `model` on every `(id, coords, reference)` triple.
pub fn evaluate<'a, I>(model: &PipnModel, items: I) -> Result<EvaluationReport, TrainingError>
where
    I: IntoIterator<Item = (&'a str, &'a [[f64; 2]], Option<&'a [[f64; 2]]>)>,
{
    let mut out = Vec::new();
    for (id, coords, reference) in items {
        let reference = reference.ok_or_else(|| TrainingError::MissingField { id: id.to_string(), field: "reference" })?;
        let pred = model.forward_values(coords)?;
        out.push(geometry_error(id, &pred, reference));
    }
    summarize(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_zero_predictions() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(relative_l2(&r, &r), FieldError { value: 0.0, absolute: false });
        assert_eq!(relative_l2(&[0.0; 3], &r).value, 1.0);
        let flagged = relative_l2(&[3.0, 4.0], &[0.0, 0.0]);
        assert_eq!(flagged, FieldError { value: 5.0, absolute: true });
    }

    #[test]
    fn summary_orders() {
        let s = Summary::of(&[0.3, 0.1, 0.2]).unwrap();
        assert_eq!((s.min, s.max), (0.1, 0.3));
        assert!(s.min <= s.mean && s.mean <= s.max);
        assert!(Summary::of(&[]).is_none());
        assert_eq!(summarize(vec![]), Err(TrainingError::EmptyDataset));
    }
}
