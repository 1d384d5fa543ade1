//! CSV layout: header row, then one row per unit with columns
//! `y, t, r, <covariates...>` and optional `y0, y1, tau, e, t_true`.
//! An empty `t` cell marks a missing treatment.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

const RESERVED: [&str; 8] = ["y", "t", "r", "y0", "y1", "tau", "e", "t_true"];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(cell: &str, line: usize, col: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("column {col}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("column {col}: non-finite value")));
    }
    Ok(v)
}

fn parse_bin(cell: &str, line: usize, col: &str) -> Result<bool> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(line, format!("column {col}: '{other}' is not 0 or 1"))),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "missing header row")),
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let (Some(iy), Some(it), Some(ir)) = (find("y"), find("t"), find("r")) else {
        return Err(parse_err(1, "header must contain y, t and r"));
    };
    let cov: Vec<usize> = (0..header.len())
        .filter(|&j| !RESERVED.contains(&header[j].as_str()))
        .collect();
    if cov.is_empty() {
        return Err(parse_err(1, "no covariate columns"));
    }
    let (iy0, iy1, itau, ie, itt) = (find("y0"), find("y1"), find("tau"), find("e"), find("t_true"));

    let mut xs = Vec::new();
    let (mut t, mut r, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let (mut y0, mut y1, mut tau, mut e, mut tt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        y.push(parse_f64(&rec[iy], line, "y")?);
        let ri = parse_bin(&rec[ir], line, "r")?;
        let ti = match rec[it].trim() {
            "" => None,
            cell => Some(parse_bin(cell, line, "t")?),
        };
        match (ri, ti) {
            (true, None) => return Err(parse_err(line, "r = 1 but treatment is empty")),
            (false, Some(_)) => return Err(parse_err(line, "r = 0 but treatment is present")),
            _ => {}
        }
        r.push(ri);
        t.push(ti);
        for &j in &cov {
            xs.push(parse_f64(&rec[j], line, &header[j])?);
        }
        if let Some(j) = iy0 {
            y0.push(parse_f64(&rec[j], line, "y0")?);
        }
        if let Some(j) = iy1 {
            y1.push(parse_f64(&rec[j], line, "y1")?);
        }
        if let Some(j) = itau {
            tau.push(parse_f64(&rec[j], line, "tau")?);
        }
        if let Some(j) = ie {
            e.push(parse_bin(&rec[j], line, "e")?);
        }
        if let Some(j) = itt {
            tt.push(parse_bin(&rec[j], line, "t_true")?);
        }
    }
    let n = y.len();
    let data = Dataset {
        x: Matrix::new(n, cov.len(), xs)?,
        t,
        r,
        y,
        y0: iy0.map(|_| y0),
        y1: iy1.map(|_| y1),
        tau: itau.map(|_| tau),
        e: ie.map(|_| e),
        t_true: itt.map(|_| tt),
        names: cov.iter().map(|&j| header[j].clone()).collect(),
    };
    data.validate()?;
    Ok(data)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = vec!["y".into(), "t".into(), "r".into()];
    header.extend(data.names.iter().cloned());
    let extras = [
        ("y0", data.y0.is_some()),
        ("y1", data.y1.is_some()),
        ("tau", data.tau.is_some()),
        ("e", data.e.is_some()),
        ("t_true", data.t_true.is_some()),
    ];
    header.extend(extras.iter().filter(|(_, on)| *on).map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = vec![
            data.y[i].to_string(),
            data.t[i].map(|v| bit(v).to_string()).unwrap_or_default(),
            bit(data.r[i]).to_string(),
        ];
        rec.extend(data.x.row(i).iter().map(|v| v.to_string()));
        for col in [&data.y0, &data.y1, &data.tau].into_iter().flatten() {
            rec.push(col[i].to_string());
        }
        for col in [&data.e, &data.t_true].into_iter().flatten() {
            rec.push(bit(col[i]).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(data, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{apply_missingness, generate, MissingnessSpec, SyntheticDgpSpec};

    #[test]
    fn parses_missing_treatment_row() {
        let d = read_csv("y,t,r,x1,x2\n2.5,,0,0.1,0.2\n1,1,1,3,4\n".as_bytes()).unwrap();
        assert_eq!(d.y, vec![2.5, 1.0]);
        assert_eq!(d.t, vec![None, Some(true)]);
        assert_eq!(d.r, vec![false, true]);
        assert_eq!(d.x.row(0), &[0.1, 0.2]);
    }

    #[test]
    fn roundtrip_keeps_missingness_pattern() {
        let mut spec = SyntheticDgpSpec::shifted(120, 4, 5);
        spec.rct = true;
        let data = generate(&spec).unwrap();
        let data = apply_missingness(&data, &MissingnessSpec { m: 0.4, q: 0.8, seed: 2 }).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("y,t,r,x1\n1,,1,0\n", 2),
            ("y,t,r,x1\n1,1,1,0\n1,2,1,0\n", 3),
            ("y,t,r,x1\n1,1,1,0\n1,1,1\n", 3),
            ("y,t,r,x1\n1,1,1,abc\n", 2),
            ("y,t,r,x1\n1,1,7,0\n", 2),
            ("y,t,r,x1\n1,0,0,0\n", 2),
        ];
        for (text, expected) in cases {
            match read_csv(text.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }
}
