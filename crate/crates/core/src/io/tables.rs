use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{file_error, write_atomic, IoError};
use crate::training::HistoryRow;

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_error(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_error(path))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    write_atomic(path, &bytes)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    if !path.exists() {
        return Err(IoError::Missing(vec![path.to_path_buf()]));
    }
    let file = std::fs::File::open(path).map_err(file_error(path))?;
    csv::Reader::from_reader(file).deserialize().collect::<Result<_, _>>().map_err(csv_error(path))
}

/// `epoch,loss,omega_sensor,seconds`
pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), IoError> {
    write_csv(path, rows, &["epoch", "loss", "omega_sensor", "seconds"])
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, IoError> {
    read_csv(path)
}

/// Prediction and reference at one cloud point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub x: f64,
    pub y: f64,
    pub u_pred: f64,
    pub v_pred: f64,
    pub u_ref: f64,
    pub v_ref: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<(), IoError> {
    write_csv(path, rows, &["x", "y", "u_pred", "v_pred", "u_ref", "v_ref"])
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, IoError> {
    read_csv(path)
}

#[derive(Serialize)]
struct ErrorRow {
    x: f64,
    y: f64,
    abs_err_u: f64,
    abs_err_v: f64,
}

/// `x,y,abs_err_u,abs_err_v` per point.
pub fn write_error_map(path: &Path, rows: &[PredictionRow]) -> Result<(), IoError> {
    let rows: Vec<ErrorRow> = rows
        .iter()
        .map(|r| ErrorRow { x: r.x, y: r.y, abs_err_u: (r.u_pred - r.u_ref).abs(), abs_err_v: (r.v_pred - r.v_ref).abs() })
        .collect();
    write_csv(path, &rows, &["x", "y", "abs_err_u", "abs_err_v"])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let rows = vec![
            HistoryRow { epoch: 0, loss: 0.1 + 0.2, omega_sensor: 50.0, seconds: 0.0 },
            HistoryRow { epoch: 1, loss: 1.0 / 3.0, omega_sensor: 49.937_5, seconds: 1.25 },
        ];
        write_history(&path, &rows).unwrap();
        assert_eq!(read_history(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,loss,omega_sensor,seconds\n0,"));
    }

    #[test]
    fn error_map_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("err.csv");
        let row = PredictionRow { x: 0.5, y: -0.5, u_pred: 0.25, v_pred: 0.0, u_ref: 0.5, v_ref: -0.125 };
        write_error_map(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x,y,abs_err_u,abs_err_v\n0.5,-0.5,0.25,0.125\n");
    }

    #[test]
    fn missing_file_is_named() {
        let err = read_history(Path::new("/nonexistent/history.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/history.csv"));
    }
}
