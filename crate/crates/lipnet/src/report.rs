//! CSV output.
//!
//! History files have the header `epoch,loss,accuracy,cra36,cra72,cra108,cra255`;
//! accuracy and CRA fields are empty for regression runs. Certification
//! files have one row per example with header
//! `index,label,predicted,correct,radius,cert36,cert72,cert108,cert255`,
//! where `certN` is 1 when the example is correct and its radius exceeds
//! `N / 255`. A final row with index `all` holds the accuracy under `correct`
//! and the certified robust accuracies under the `certN` columns.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use lipnet_core::nn::{CertReport, History};

use crate::error::{Error, Result};

pub const HISTORY_HEADER: [&str; 7] = ["epoch", "loss", "accuracy", "cra36", "cra72", "cra108", "cra255"];
pub const CERT_HEADER: [&str; 9] =
    ["index", "label", "predicted", "correct", "radius", "cert36", "cert72", "cert108", "cert255"];

pub fn write_history<W: Write>(out: W, history: &History) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in &history.records {
        let mut row = vec![r.epoch.to_string(), r.loss.to_string()];
        row.push(r.accuracy.map(|a| a.to_string()).unwrap_or_default());
        match r.cra {
            Some(cra) => row.extend(cra.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))
}

pub fn write_cert_report<W: Write>(out: W, report: &CertReport) -> Result<()> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CERT_HEADER)?;
    for (i, e) in report.examples.iter().enumerate() {
        let mut row = vec![i.to_string(), e.label.to_string(), e.predicted.to_string(), flag(e.correct), e.radius.to_string()];
        row.extend((0..4).map(|k| flag(e.certified(k))));
        w.write_record(&row)?;
    }
    let mut row = vec!["all".into(), String::new(), String::new(), report.accuracy.to_string(), String::new()];
    row.extend(report.cra.iter().map(f64::to_string));
    w.write_record(&row)?;
    w.flush().map_err(|e| Error::io("<certificates>", e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn save_history(path: &Path, history: &History) -> Result<()> {
    write_history(create(path)?, history)
}

pub fn save_cert_report(path: &Path, report: &CertReport) -> Result<()> {
    write_cert_report(create(path)?, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lipnet_core::nn::{CertExample, EpochRecord};

    #[test]
    fn history_columns() {
        let history = History {
            records: vec![
                EpochRecord { epoch: 1, loss: 0.5, accuracy: None, cra: None },
                EpochRecord { epoch: 2, loss: 0.25, accuracy: Some(0.75), cra: Some([0.5, 0.25, 0.125, 0.0]) },
            ],
        };
        let mut buf = Vec::new();
        write_history(&mut buf, &history).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,loss,accuracy,cra36,cra72,cra108,cra255\n1,0.5,,,,,\n2,0.25,0.75,0.5,0.25,0.125,0\n"
        );
    }

    #[test]
    fn aggregate_is_mean_of_flags() {
        let examples = vec![
            CertExample::from_scores(&[3.0, 0.0], 0, 2f64.sqrt()).unwrap(),
            CertExample::from_scores(&[0.1, 0.0], 0, 2f64.sqrt()).unwrap(),
            CertExample::from_scores(&[3.0, 0.0], 1, 2f64.sqrt()).unwrap(),
            CertExample::from_scores(&[0.0, 0.5], 1, 2f64.sqrt()).unwrap(),
        ];
        let report = CertReport::from_examples(examples);
        let mut buf = Vec::new();
        write_cert_report(&mut buf, &report).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 5);
        for col in 5..9 {
            let flags: f64 = rows[..4].iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / 4.0;
            assert_eq!(rows[4][col].parse::<f64>().unwrap(), flags);
        }
        assert_eq!(&rows[4][0], "all");
        assert_eq!(rows[4][3].parse::<f64>().unwrap(), 0.75);
    }
}
