//! Signal, report and program file formats.
//!
//! Signals are CSV (one sample per line, `value` or `re,im`; blank lines
//! and `#` comments ignored) or raw little-endian `i16` when the file
//! extension is `.bin` or `.raw`. Complex lines flatten to interleaved
//! `re, im` elements, matching the machine's complex layout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sigdla_core::engine::CycleReport;
use sigdla_core::isa::{assemble, disassemble, Program};
use sigdla_core::mapper::quantize;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_to_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(io(path))
}

pub fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, data).map_err(io(path))
}

fn is_raw(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "raw"))
}

/// A parsed signal and the number of samples clamped during quantization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signal {
    pub values: Vec<i64>,
    pub saturated: usize,
}

/// Read a signal, quantizing real samples to `bits`-bit integers
/// (round half to even, saturating).
pub fn read_signal(path: &Path, bits: u32) -> Result<Signal, FormatError> {
    if is_raw(path) {
        let bytes = fs::read(path).map_err(io(path))?;
        if bytes.len() % 2 != 0 {
            return Err(FormatError::Invalid {
                path: path.display().to_string(),
                msg: "raw signal has an odd byte count".into(),
            });
        }
        let raw: Vec<f64> = bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect();
        let q = quantize(&raw, bits, 0);
        return Ok(Signal {
            values: q.values,
            saturated: q.saturated,
        });
    }
    let text = read_to_string(path)?;
    parse_signal(&text, bits).map_err(|(line, msg)| FormatError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    })
}

pub fn parse_signal(text: &str, bits: u32) -> Result<Signal, (usize, String)> {
    let mut real = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() > 2 {
            return Err((
                i + 1,
                format!("expected `value` or `re,im`, got {} fields", fields.len()),
            ));
        }
        for f in fields {
            let v: f64 = f.parse().map_err(|_| (i + 1, format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err((i + 1, format!("non-finite sample `{f}`")));
            }
            real.push(v);
        }
    }
    let q = quantize(&real, bits, 0);
    Ok(Signal {
        values: q.values,
        saturated: q.saturated,
    })
}

/// One element per line.
pub fn signal_csv(values: &[i64]) -> String {
    let mut s = String::with_capacity(values.len() * 6);
    for v in values {
        writeln!(s, "{v}").expect("string write");
    }
    s
}

pub fn report_json(r: &CycleReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes") + "\n"
}

/// Header line plus one value line.
pub fn report_csv(r: &CycleReport) -> String {
    let values: Vec<String> = r.values().iter().map(u64::to_string).collect();
    format!("{}\n{}\n", CycleReport::FIELDS.join(","), values.join(","))
}

/// Assembly text, or a binary image for `.bin` files.
pub fn read_program(path: &Path) -> Result<Program, FormatError> {
    let invalid = |msg: String| FormatError::Invalid {
        path: path.display().to_string(),
        msg,
    };
    if is_raw(path) {
        let bytes = fs::read(path).map_err(io(path))?;
        Program::from_bytes(&bytes).map_err(|e| invalid(e.to_string()))
    } else {
        let text = read_to_string(path)?;
        assemble(&text).map_err(|e| FormatError::Parse {
            path: path.display().to_string(),
            line: e.line,
            msg: e.to_string(),
        })
    }
}

pub fn program_text(p: &Program) -> String {
    disassemble(p) + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_real_and_complex_lines() {
        let s = parse_signal("# header\n1\n2.5, -3\n\n 4 \n", 8).unwrap();
        assert_eq!(s.values, [1, 2, -3, 4]);
        assert_eq!(s.saturated, 0);
    }

    #[test]
    fn saturation_is_counted() {
        let s = parse_signal("200\n-200\n5\n", 8).unwrap();
        assert_eq!(s.values, [127, -128, 5]);
        assert_eq!(s.saturated, 2);
    }

    #[test]
    fn reports_bad_lines() {
        assert_eq!(parse_signal("1\nabc\n", 8).unwrap_err().0, 2);
        assert_eq!(parse_signal("1,2,3\n", 8).unwrap_err().0, 1);
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let bytes: Vec<u8> = [-5i16, 300, 7].iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&p, bytes).unwrap();
        assert_eq!(read_signal(&p, 16).unwrap().values, [-5, 300, 7]);
        assert_eq!(read_signal(&p, 8).unwrap().saturated, 1);
    }

    #[test]
    fn report_csv_shape() {
        let csv = report_csv(&CycleReport::default());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }
}
