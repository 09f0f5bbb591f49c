//! CSV datasets with a one-line header.
//!
//! | model    | columns                                          |
//! |----------|--------------------------------------------------|
//! | logistic | `y,x0,x1,…`                                      |
//! | ar1      | `t,y`                                            |
//! | weibull  | `subject,period,t_start,t_end,y,x0,x1,…` (long)  |
//! | normal   | `y`                                              |

use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::{LogisticModel, SubjectPanel};
use crate::error::{Error, Result};

fn ingest(line: u64, message: impl Into<String>) -> Error {
    Error::Ingest {
        line,
        message: message.into(),
    }
}

fn io_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => ingest(line, e.to_string()),
    }
}

/// Reads all records, returning the header and `(line, record)` pairs.
fn records<R: Read>(input: R) -> Result<(StringRecord, Vec<(u64, StringRecord)>)> {
    let mut reader = ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(io_err)?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(io_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(ingest(1, "no data rows"));
    }
    Ok((header, rows))
}

fn parse_f64(rec: &StringRecord, line: u64, col: usize, name: &str) -> Result<f64> {
    let field = rec.get(col).ok_or_else(|| ingest(line, format!("missing column `{name}`")))?;
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| ingest(line, format!("column `{name}`: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(ingest(line, format!("column `{name}` is not finite")));
    }
    Ok(v)
}

fn parse_binary(rec: &StringRecord, line: u64, col: usize, name: &str) -> Result<u8> {
    match rec.get(col).map(str::trim) {
        Some("0") => Ok(0),
        Some("1") => Ok(1),
        Some(other) => Err(ingest(line, format!("column `{name}`: `{other}` is not 0 or 1"))),
        None => Err(ingest(line, format!("missing column `{name}`"))),
    }
}

fn parse_usize(rec: &StringRecord, line: u64, col: usize, name: &str) -> Result<usize> {
    let field = rec.get(col).ok_or_else(|| ingest(line, format!("missing column `{name}`")))?;
    field
        .trim()
        .parse()
        .map_err(|_| ingest(line, format!("column `{name}`: `{field}` is not a nonnegative integer")))
}

fn expect_header(header: &StringRecord, prefix: &[&str]) -> Result<()> {
    for (i, name) in prefix.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(ingest(
                1,
                format!("expected header to start with `{}`", prefix.join(",")),
            ));
        }
    }
    Ok(())
}

fn float(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

pub fn write_logistic<W: Write>(model: &LogisticModel, out: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    let p = model.covariate_dim();
    let mut header = vec!["y".to_string()];
    header.extend((0..p).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(io_err)?;
    for k in 0..model.n() {
        let mut row = vec![model.response(k).to_string()];
        row.extend(model.row(k).iter().map(|&v| float(v)));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_logistic<R: Read>(input: R) -> Result<LogisticModel> {
    let (header, rows) = records(input)?;
    expect_header(&header, &["y"])?;
    let p = header.len() - 1;
    if p == 0 {
        return Err(ingest(1, "no covariate columns"));
    }
    let mut x = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        if rec.len() != p + 1 {
            return Err(ingest(*line, format!("expected {} fields, found {}", p + 1, rec.len())));
        }
        y.push(parse_binary(rec, *line, 0, "y")?);
        for j in 0..p {
            x.push(parse_f64(rec, *line, j + 1, &header[j + 1])?);
        }
    }
    LogisticModel::new(x, y, p)
}

pub fn write_series<W: Write>(series: &[f64], out: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(["t", "y"]).map_err(io_err)?;
    for (t, &v) in series.iter().enumerate() {
        w.write_record([(t + 1).to_string(), float(v)]).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t,y` series; rows must be in time order.
pub fn read_series<R: Read>(input: R) -> Result<Vec<f64>> {
    let (header, rows) = records(input)?;
    expect_header(&header, &["t", "y"])?;
    let mut series = Vec::with_capacity(rows.len());
    let mut last_t = None;
    for (line, rec) in &rows {
        let t = parse_f64(rec, *line, 0, "t")?;
        if last_t.is_some_and(|prev| t <= prev) {
            return Err(ingest(*line, "time index is not increasing"));
        }
        last_t = Some(t);
        series.push(parse_f64(rec, *line, 1, "y")?);
    }
    Ok(series)
}

pub fn write_panels<W: Write>(panels: &[SubjectPanel], out: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    let d = panels.first().and_then(|p| p.covariates.first()).map_or(0, Vec::len);
    let mut header: Vec<String> = ["subject", "period", "t_start", "t_end", "y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..d).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(io_err)?;
    for p in panels {
        for j in 0..p.periods() {
            let mut row = vec![
                p.id.to_string(),
                (j + 1).to_string(),
                float(p.endpoints[j]),
                float(p.endpoints[j + 1]),
                p.responses[j].to_string(),
            ];
            row.extend(p.covariates[j].iter().map(|&v| float(v)));
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads long-format panels. Rows of a subject must be contiguous and in
/// period order, and each period must start where the previous one ended.
pub fn read_panels<R: Read>(input: R) -> Result<Vec<SubjectPanel>> {
    let (header, rows) = records(input)?;
    expect_header(&header, &["subject", "period", "t_start", "t_end", "y"])?;
    let d = header.len() - 5;
    let mut panels: Vec<SubjectPanel> = Vec::new();
    for (line, rec) in &rows {
        let line = *line;
        if rec.len() != d + 5 {
            return Err(ingest(line, format!("expected {} fields, found {}", d + 5, rec.len())));
        }
        let subject = parse_usize(rec, line, 0, "subject")?;
        let period = parse_usize(rec, line, 1, "period")?;
        let t_start = parse_f64(rec, line, 2, "t_start")?;
        let t_end = parse_f64(rec, line, 3, "t_end")?;
        let y = parse_binary(rec, line, 4, "y")?;
        let x = (0..d)
            .map(|j| parse_f64(rec, line, j + 5, &header[j + 5]))
            .collect::<Result<Vec<_>>>()?;
        let continuing = panels.last().is_some_and(|p| p.id == subject);
        if continuing {
            let p = panels.last_mut().expect("checked above");
            if period != p.periods() + 1 {
                return Err(ingest(line, format!("subject {subject}: period {period} out of order")));
            }
            if t_start != *p.endpoints.last().expect("nonempty") {
                return Err(ingest(line, format!("subject {subject}: gap between periods")));
            }
            p.endpoints.push(t_end);
            p.responses.push(y);
            p.covariates.push(x);
        } else {
            if panels.iter().any(|p| p.id == subject) {
                return Err(ingest(line, format!("subject {subject} rows are not contiguous")));
            }
            if period != 1 {
                return Err(ingest(line, format!("subject {subject} does not start at period 1")));
            }
            panels.push(SubjectPanel {
                id: subject,
                endpoints: vec![t_start, t_end],
                responses: vec![y],
                covariates: vec![x],
            });
        }
    }
    Ok(panels)
}

pub fn write_observations<W: Write>(y: &[f64], out: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    w.write_record(["y"]).map_err(io_err)?;
    for &v in y {
        w.write_record([float(v)]).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(input: R) -> Result<Vec<f64>> {
    let (header, rows) = records(input)?;
    expect_header(&header, &["y"])?;
    rows.iter()
        .map(|(line, rec)| parse_f64(rec, *line, 0, "y"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::WeibullModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = LogisticModel::generate(&[0.1, -0.4, 0.9], 40, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_logistic(&model, &mut buf).unwrap();
        let back = read_logistic(buf.as_slice()).unwrap();
        assert_eq!(back.responses(), model.responses());
        for k in 0..40 {
            assert_eq!(back.row(k), model.row(k));
        }
    }

    #[test]
    fn panel_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = WeibullModel::generate(&[-1.0, 0.5, 0.2, -0.1, 0.0], 15, 4, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_panels(model.panels(), &mut buf).unwrap();
        assert_eq!(read_panels(buf.as_slice()).unwrap(), model.panels());
    }

    #[test]
    fn series_round_trip() {
        let s = vec![0.1, -2.5, 1e-300, 3.0];
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert_eq!(read_series(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn corrupt_row_names_its_line() {
        let text = "y,x0,x1\n1,1.0,0.5\n0,1.0,abc\n";
        match read_logistic(text.as_bytes()) {
            Err(Error::Ingest { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "y,x0\n1,1.0\n2,1.0\n";
        assert!(matches!(read_logistic(text.as_bytes()), Err(Error::Ingest { line: 3, .. })));
        let text = "y,x0\n1,1.0\n0\n";
        assert!(matches!(read_logistic(text.as_bytes()), Err(Error::Ingest { line: 3, .. })));
    }

    #[test]
    fn panels_reject_gaps() {
        let text = "subject,period,t_start,t_end,y,x0\n0,1,0,1,0,1.0\n0,2,1.5,2,1,1.0\n";
        assert!(matches!(read_panels(text.as_bytes()), Err(Error::Ingest { line: 3, .. })));
    }
}
