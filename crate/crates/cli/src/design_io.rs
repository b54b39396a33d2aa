//! Design tables: CSV with columns `dose,arm,weight`; the control row is
//! `C,1,weight`.

use std::path::Path;

use acdesign::{Design, Point};

use crate::error::CliError;

/// Weights read from text may carry rounding; sums within this distance
/// of one are renormalised.
const SUM_SLACK: f64 = 1e-3;

pub fn from_points(points: &[(Point, f64)]) -> Result<Design, String> {
    if points.is_empty() {
        return Err("design has no points".into());
    }
    let total: f64 = points.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > SUM_SLACK {
        return Err(format!("weights sum to {total}, not 1"));
    }
    Design::normalized(points).map_err(|e| e.to_string())
}

pub fn read(path: &Path) -> Result<Design, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|message| CliError::DesignFile {
        path: path.display().to_string(),
        message,
    })
}

pub fn parse(text: &str) -> Result<Design, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != ["dose", "arm", "weight"] {
        return Err(format!("header must be `dose,arm,weight`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| format!("row {row}: {e}"))?;
        let weight: f64 = record[2]
            .parse()
            .map_err(|_| format!("row {row}: `{}` is not a weight", &record[2]))?;
        let point = match (&record[0], &record[1]) {
            ("C", "1") => Point::Control,
            (dose, "0") => Point::Drug(dose.parse().map_err(|_| format!("row {row}: `{dose}` is not a dose"))?),
            (dose, arm) => return Err(format!("row {row}: `{dose},{arm}` is neither a drug row (arm 0) nor `C,1`")),
        };
        points.push((point, weight));
    }
    from_points(&points)
}

/// Values are written in their shortest exact form, not rounded: a
/// target-dose design supported at `d*` alone stops being estimable once
/// `d*` is rounded.
pub fn to_csv(design: &Design) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["dose", "arm", "weight"]).expect("in-memory write");
    for (point, weight) in design.points() {
        let w = weight.to_string();
        match point {
            Point::Drug(d) => writer.write_record([d.to_string(), "0".into(), w]),
            Point::Control => writer.write_record(["C".into(), "1".into(), w]),
        }
        .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write(path: &Path, design: &Design) -> Result<(), CliError> {
    std::fs::write(path, to_csv(design)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let d = Design::new(&[(Point::Drug(0.0), 0.25), (Point::Drug(8.17832), 0.5), (Point::Control, 0.25)]).unwrap();
        let text = to_csv(&d);
        assert_eq!(text, "dose,arm,weight\n0,0,0.25\n8.17832,0,0.5\nC,1,0.25\n");
        assert_eq!(parse(&text).unwrap(), d);
        let odd = Design::new(&[(Point::Drug(35.59296123456789), 0.5), (Point::Drug(1.0 / 3.0), 0.25), (Point::Control, 0.25)]).unwrap();
        assert_eq!(parse(&to_csv(&odd)).unwrap().doses(), odd.doses());
    }

    #[test]
    fn rounded_weights_are_renormalised() {
        let d = parse("dose,arm,weight\n1,0,0.333333\n2,0,0.333333\nC,1,0.333333\n").unwrap();
        assert!((d.control_weight() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse("").is_err());
        assert!(parse("dose,arm,weight\n").unwrap_err().contains("no points"));
        assert!(parse("dose,weight\n1,1\n").unwrap_err().contains("header"));
        assert!(parse("dose,arm,weight\nC,0,1\n").unwrap_err().contains("row 2"));
        assert!(parse("dose,arm,weight\n1,0,0.5\n").unwrap_err().contains("sum"));
    }
}
