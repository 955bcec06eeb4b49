use std::path::Path;

use overparam::Error;

/// Parses one finite value per line; blank lines and `#` comments are skipped.
pub fn parse_csv(text: &str) -> Result<Vec<f64>, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("expected one number, found {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("value {line} is not finite"),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            msg: "no values found".into(),
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<f64>, Error> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// Shortest representation that reads back exactly, with an exponent for very small or large values.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One value per line.
pub fn format_csv(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 12);
    for &v in values {
        s.push_str(&num(v));
        s.push('\n');
    }
    s
}

/// Comma-separated table with a commented header line.
pub fn format_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = format!("# {}\n", header.join(","));
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
