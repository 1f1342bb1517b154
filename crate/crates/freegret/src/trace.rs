//! The CSV trace format: header `t,g1,...,gd`, one row per round, values in
//! shortest round-trip decimal so write-then-read preserves every gradient
//! bit-exactly.

use crate::core::Point;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn format_trace(gradients: &[Point]) -> String {
    let dim = gradients.first().map(|g| g.dim()).unwrap_or(1);
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",g{i}");
    }
    out.push('\n');
    for (idx, g) in gradients.iter().enumerate() {
        let _ = write!(out, "{}", idx + 1);
        for c in g.coords() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, gradients: &[Point]) -> Result<(), TraceError> {
    std::fs::write(path, format_trace(gradients)).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_trace(text: &str) -> Result<Vec<Point>, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceError::Parse {
        line: 1,
        message: "empty trace".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(TraceError::Parse {
            line: 1,
            message: format!("expected header `t,g1,...`, got `{header}`"),
        });
    }
    let dim = cols.len() - 1;
    let mut gradients = Vec::new();
    let mut expected_t = 1u64;
    for (i, row) in lines {
        let line = i + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(TraceError::Parse {
                line,
                message: format!("expected {} columns, got {}", dim + 1, fields.len()),
            });
        }
        let t: u64 = fields[0].parse().map_err(|_| TraceError::Parse {
            line,
            message: format!("bad round index `{}`", fields[0]),
        })?;
        if t != expected_t {
            return Err(TraceError::Parse {
                line,
                message: format!("round index {t} out of order (expected {expected_t})"),
            });
        }
        expected_t += 1;
        let mut coords = Vec::with_capacity(dim);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| TraceError::Parse {
                line,
                message: format!("bad gradient value `{f}`"),
            })?;
            if !v.is_finite() {
                return Err(TraceError::Parse {
                    line,
                    message: format!("non-finite gradient `{f}`"),
                });
            }
            coords.push(v);
        }
        gradients.push(Point::new(coords).map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?);
    }
    if gradients.is_empty() {
        return Err(TraceError::Parse {
            line: 1,
            message: "trace has no rounds".into(),
        });
    }
    Ok(gradients)
}

pub fn read_trace(path: &Path) -> Result<Vec<Point>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let gradients = vec![
            Point::new(vec![0.1, -1.0 / 3.0]).unwrap(),
            Point::new(vec![f64::MIN_POSITIVE, 1e300]).unwrap(),
            Point::new(vec![-0.0, 2.2250738585072014e-308]).unwrap(),
        ];
        let text = format_trace(&gradients);
        let back = parse_trace(&text).unwrap();
        assert_eq!(back.len(), gradients.len());
        for (a, b) in gradients.iter().zip(&back) {
            for (x, y) in a.coords().iter().zip(b.coords()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "t,g1\n1,0.5\n3,0.25\n";
        match parse_trace(text) {
            Err(TraceError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("out of order"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_trace("t,g1\n1,abc\n") {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_trace("").is_err());
        assert!(parse_trace("t,g1\n").is_err());
    }

    #[test]
    fn column_count_enforced() {
        match parse_trace("t,g1,g2\n1,0.5\n") {
            Err(TraceError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("columns"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
