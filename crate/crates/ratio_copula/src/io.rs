//! File formats: CSV for data and metrics, plain PGM (P2/P5) for images.
//!
//! Floats are written with 17 significant digits so every CSV emitted by
//! the library parses back to bit-identical values.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::marginals::DataMatrix;
use crate::metrics::ImageDensity;

/// Read a numeric CSV. A first line whose fields do not all parse as
/// numbers is treated as a header; every row must have the same number of
/// fields.
pub fn read_csv<R: Read>(r: R) -> Result<DataMatrix> {
    let reader = BufReader::new(r);
    let mut names: Option<Vec<String>> = None;
    let mut d = 0usize;
    let mut values = Vec::new();
    let mut data_rows = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if d == 0 {
            d = fields.len();
        } else if fields.len() != d {
            return Err(Error::format(format!(
                "line {}: expected {d} fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::format(format!("line {}: missing field", lineno + 1)));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                values.extend(row);
                data_rows += 1;
            }
            Err(_) => {
                if data_rows == 0 && names.is_none() {
                    names = Some(fields.iter().map(|s| s.to_string()).collect());
                } else {
                    return Err(Error::format(format!(
                        "line {}: non-numeric field in data row",
                        lineno + 1
                    )));
                }
            }
        }
    }
    if data_rows == 0 {
        return Err(Error::format("csv contains no data rows"));
    }
    match names {
        Some(n) => DataMatrix::new(values, d, n),
        None => DataMatrix::with_default_names(values, d),
    }
}

pub fn read_csv_path(path: &Path) -> Result<DataMatrix> {
    read_csv(std::fs::File::open(path)?)
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a header row and the matrix body.
pub fn write_csv<W: Write>(w: &mut W, names: &[String], values: &[f64], d: usize) -> Result<()> {
    writeln!(w, "{}", names.join(","))?;
    for row in values.chunks(d) {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_data_csv<W: Write>(w: &mut W, data: &DataMatrix) -> Result<()> {
    write_csv(w, data.column_names(), data.values(), data.n_cols())
}

/// `metric,value` rows with a header.
pub fn write_metrics_csv<W: Write>(w: &mut W, metrics: &[(String, f64)]) -> Result<()> {
    writeln!(w, "metric,value")?;
    for (name, value) in metrics {
        writeln!(w, "{name},{}", format_float(*value))?;
    }
    Ok(())
}

/// Read a plain grayscale PGM image, ASCII (P2) or binary (P5), with
/// maxval up to 65535. Comments (#) in the header are skipped.
pub fn read_pgm<R: Read>(r: R) -> Result<ImageDensity> {
    let mut bytes = Vec::new();
    BufReader::new(r).read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let magic = next_token(&bytes, &mut pos)?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        m => return Err(Error::format(format!("not a grayscale PGM (magic {m:?})"))),
    };
    let width: usize = parse_header_int(&bytes, &mut pos, "width")?;
    let height: usize = parse_header_int(&bytes, &mut pos, "height")?;
    let maxval: usize = parse_header_int(&bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!("pgm maxval {maxval} out of range 1..=65535")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format("pgm dimensions overflow"))?;
    let mut raw = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let wide = maxval > 255;
        let per = if wide { 2 } else { 1 };
        if bytes.len() < pos + n * per {
            return Err(Error::format("pgm raster truncated"));
        }
        for k in 0..n {
            let v = if wide {
                // Big-endian per the PGM specification.
                ((bytes[pos + 2 * k] as usize) << 8) | bytes[pos + 2 * k + 1] as usize
            } else {
                bytes[pos + k] as usize
            };
            if v > maxval {
                return Err(Error::format(format!("pixel value {v} exceeds maxval {maxval}")));
            }
            raw.push(v as f64);
        }
    } else {
        for _ in 0..n {
            let v: usize = next_token(&bytes, &mut pos)?
                .parse()
                .map_err(|_| Error::format("non-numeric pixel in P2 raster"))?;
            if v > maxval {
                return Err(Error::format(format!("pixel value {v} exceeds maxval {maxval}")));
            }
            raw.push(v as f64);
        }
    }
    ImageDensity::new(width, height, raw).map_err(|e| Error::format(e.to_string()))
}

pub fn read_pgm_path(path: &Path) -> Result<ImageDensity> {
    read_pgm(std::fs::File::open(path)?)
}

/// Next whitespace-delimited token, skipping `#` comments to end of line.
/// Leaves `pos` one byte past the token's trailing whitespace when that
/// whitespace is a single separator (as required before a P5 raster).
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return Err(Error::format("unexpected end of pgm header"));
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let token = String::from_utf8_lossy(&bytes[start..*pos]).into_owned();
    // Consume the single separator byte after the token.
    if *pos < bytes.len() {
        *pos += 1;
    }
    Ok(token)
}

fn parse_header_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    next_token(bytes, pos)?
        .parse()
        .map_err(|_| Error::format(format!("invalid pgm {what}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let data = DataMatrix::new(
            vec![0.1, -2.5e-13, std::f64::consts::PI, 1.0 / 3.0, 1e300, -0.0],
            2,
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_data_csv(&mut buf, &data).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), data.values());
        assert_eq!(back.column_names(), data.column_names());
    }

    #[test]
    fn headerless_csv_gets_default_names() {
        let back = read_csv("1.0,2.0\n3.0,4.0\n".as_bytes()).unwrap();
        assert_eq!(back.n_rows(), 2);
        assert_eq!(back.column_names(), ["x0", "x1"]);
    }

    #[test]
    fn ragged_and_missing_fields_rejected() {
        assert!(matches!(read_csv("1.0,2.0\n3.0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("1.0,\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("a,b\nc,1.0\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(read_csv("".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn metrics_table_format() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[("avg_loglik".into(), 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value\navg_loglik,"));
    }

    #[test]
    fn p2_image_parses() {
        let pgm = "P2\n# a comment\n2 2\n255\n0 255\n128 64\n";
        let img = read_pgm(pgm.as_bytes()).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        let total: f64 = 255.0 + 128.0 + 64.0;
        assert!((img.intensities()[1] - 255.0 / total).abs() < 1e-15);
    }

    #[test]
    fn p5_image_parses() {
        let mut pgm: Vec<u8> = b"P5 2 2 255\n".to_vec();
        pgm.extend_from_slice(&[10, 20, 30, 40]);
        let img = read_pgm(pgm.as_slice()).unwrap();
        assert_eq!(img.width(), 2);
        assert!((img.intensities()[3] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn p5_sixteen_bit_is_big_endian() {
        let mut pgm: Vec<u8> = b"P5 1 2 65535\n".to_vec();
        pgm.extend_from_slice(&[0x01, 0x00, 0x00, 0x02]); // 256 and 2
        let img = read_pgm(pgm.as_slice()).unwrap();
        assert!((img.intensities()[0] - 256.0 / 258.0).abs() < 1e-12);
    }

    #[test]
    fn bad_pgm_rejected() {
        assert!(read_pgm("P3\n1 1\n255\n1 2 3\n".as_bytes()).is_err());
        assert!(read_pgm("P2\n2 2\n255\n0 0 0\n".as_bytes()).is_err()); // short raster
        assert!(read_pgm("P5 2 2 70000\n".as_bytes()).is_err());
        assert!(read_pgm("P2\n1 1\n255\n300\n".as_bytes()).is_err());
    }
}
