//! Versioned per-species report CSV. Numbers use the shortest decimal that
//! round-trips the f64 exactly; absent values are empty fields.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};

pub const REPORT_VERSION_LINE: &str = "# holospeck-report v1";

pub const REPORT_COLUMNS: [&str; 14] = [
    "experiment_id",
    "scene_hash",
    "species",
    "c_true_mg_per_ml",
    "c_est_mg_per_ml",
    "fidelity_percent",
    "mae",
    "rmse",
    "r2",
    "rcv_percent",
    "noise_level",
    "mean_exposure",
    "frames",
    "wall_time_s",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment_id: String,
    pub scene_hash: String,
    pub species: String,
    pub c_true: f64,
    pub c_est: f64,
    /// Undefined when `c_true` is 0.
    pub fidelity_percent: Option<f64>,
    /// Over the rows sharing this row's experiment id.
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub rcv_percent: Option<f64>,
    pub noise_level: Option<f64>,
    /// Mean recorded intensity (sensor counts when a sensor is modelled).
    pub mean_exposure: f64,
    pub frames: usize,
    /// Only filled on request, so default reports stay byte-reproducible.
    pub wall_time_s: Option<f64>,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn encode_report(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(REPORT_VERSION_LINE.as_bytes());
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format {
        offset: 0,
        message: format!("report encoding: {e}"),
    };
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.experiment_id.clone(),
            r.scene_hash.clone(),
            r.species.clone(),
            num(r.c_true),
            num(r.c_est),
            opt(r.fidelity_percent),
            num(r.mae),
            num(r.rmse),
            opt(r.r2),
            opt(r.rcv_percent),
            opt(r.noise_level),
            num(r.mean_exposure),
            r.frames.to_string(),
            opt(r.wall_time_s),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format {
        offset: 0,
        message: format!("report encoding: {e}"),
    })
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_atomic(path, &encode_report(rows)?)
}

pub fn decode_report(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let first = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
    if &bytes[..first] != REPORT_VERSION_LINE.as_bytes() {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected '{REPORT_VERSION_LINE}'"),
        });
    }
    let body_start = (first + 1).min(bytes.len());
    let mut r = csv::Reader::from_reader(&bytes[body_start..]);
    let at = |pos: Option<&csv::Position>| body_start as u64 + pos.map_or(0, |p| p.byte());
    let headers = r.headers().map_err(|e| Error::Format {
        offset: at(e.position()),
        message: e.to_string(),
    })?;
    if headers.iter().ne(REPORT_COLUMNS) {
        return Err(Error::Format {
            offset: body_start as u64,
            message: "report header does not match v1 columns".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format {
            offset: at(e.position()),
            message: e.to_string(),
        })?;
        let offset = at(rec.position());
        let bad = |col: usize| Error::Format {
            offset,
            message: format!("bad value in column '{}'", REPORT_COLUMNS[col]),
        };
        let f = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let o = |col: usize| {
            if rec[col].is_empty() {
                Ok(None)
            } else {
                f(col).map(Some)
            }
        };
        rows.push(ReportRow {
            experiment_id: rec[0].to_string(),
            scene_hash: rec[1].to_string(),
            species: rec[2].to_string(),
            c_true: f(3)?,
            c_est: f(4)?,
            fidelity_percent: o(5)?,
            mae: f(6)?,
            rmse: f(7)?,
            r2: o(8)?,
            rcv_percent: o(9)?,
            noise_level: o(10)?,
            mean_exposure: f(11)?,
            frames: rec[12].parse().map_err(|_| bad(12))?,
            wall_time_s: o(13)?,
        });
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    decode_report(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ReportRow {
        ReportRow {
            experiment_id: "mix,1".into(),
            scene_hash: "abc".into(),
            species: "tio2".into(),
            c_true: 0.1,
            c_est: 1.0 / 3.0,
            fidelity_percent: Some(99.25),
            mae: 1e-17,
            rmse: 2.5,
            r2: None,
            rcv_percent: None,
            noise_level: Some(0.004),
            mean_exposure: 2000.0,
            frames: 64,
            wall_time_s: None,
        }
    }

    #[test]
    fn header_and_precision() {
        let bytes = encode_report(&[row()]).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_VERSION_LINE));
        assert_eq!(lines.next(), Some(REPORT_COLUMNS.join(",").as_str()));
        assert_eq!(
            lines.next(),
            Some("\"mix,1\",abc,tio2,0.1,0.3333333333333333,99.25,1e-17,2.5,,,0.004,2000.0,64,")
        );
        assert_eq!(decode_report(&bytes).unwrap(), vec![row()]);
    }

    #[test]
    fn wrong_version_or_header_is_a_format_error() {
        let bytes = encode_report(&[row()]).unwrap();
        let mut v2 = bytes.clone();
        v2[REPORT_VERSION_LINE.len() - 1] = b'2';
        assert!(matches!(decode_report(&v2), Err(Error::Format { offset: 0, .. })));
        let text = String::from_utf8(bytes).unwrap().replace("rmse", "rms");
        assert!(matches!(decode_report(text.as_bytes()), Err(Error::Format { .. })));
    }
}
