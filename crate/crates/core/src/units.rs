//! Quantities with explicit unit suffixes.
//!
//! Internal values are always canonical: seconds, packets/s, requests/s,
//! bits/s, bits, bytes and meters. Text such as `"20 ms"` or `"10 Gbit/s"` is
//! converted at the boundary, and a suffix belonging to another dimension is
//! rejected instead of guessed.

use std::fmt;

use thiserror::Error;

/// Physical dimension a quantity is expected to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    Time,
    PacketRate,
    RequestRate,
    Bandwidth,
    DataVolume,
    Bytes,
    Length,
}

impl Dimension {
    /// Suffix used when formatting a canonical value.
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Dimension::Time => "s",
            Dimension::PacketRate => "pkt/s",
            Dimension::RequestRate => "req/s",
            Dimension::Bandwidth => "bit/s",
            Dimension::DataVolume => "bit",
            Dimension::Bytes => "B",
            Dimension::Length => "m",
        }
    }

    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("ns", 1e-9),
                ("min", 60.0),
            ],
            Dimension::PacketRate => &[
                ("pkt/s", 1.0),
                ("packets/s", 1.0),
                ("kpkt/s", 1e3),
                ("Mpkt/s", 1e6),
            ],
            Dimension::RequestRate => &[("req/s", 1.0), ("requests/s", 1.0), ("/s", 1.0)],
            Dimension::Bandwidth => &[
                ("bit/s", 1.0),
                ("bps", 1.0),
                ("kbit/s", 1e3),
                ("kb/s", 1e3),
                ("Mbit/s", 1e6),
                ("Mb/s", 1e6),
                ("Gbit/s", 1e9),
                ("Gb/s", 1e9),
            ],
            Dimension::DataVolume => &[
                ("bit", 1.0),
                ("kbit", 1e3),
                ("kb", 1e3),
                ("Mbit", 1e6),
                ("Mb", 1e6),
                ("Gbit", 1e9),
                ("Gb", 1e9),
            ],
            Dimension::Bytes => &[
                ("B", 1.0),
                ("kB", 1e3),
                ("KB", 1e3),
                ("MB", 1e6),
                ("GB", 1e9),
                ("TB", 1e12),
                ("KiB", 1024.0),
                ("MiB", 1048576.0),
                ("GiB", 1073741824.0),
                ("TiB", 1099511627776.0),
            ],
            Dimension::Length => &[("m", 1.0), ("km", 1e3)],
        }
    }

    fn all() -> [Dimension; 7] {
        [
            Dimension::Time,
            Dimension::PacketRate,
            Dimension::RequestRate,
            Dimension::Bandwidth,
            Dimension::DataVolume,
            Dimension::Bytes,
            Dimension::Length,
        ]
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Time => "time",
            Dimension::PacketRate => "packet rate",
            Dimension::RequestRate => "request rate",
            Dimension::Bandwidth => "bandwidth",
            Dimension::DataVolume => "data volume",
            Dimension::Bytes => "bytes",
            Dimension::Length => "length",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("`{0}` has no numeric value")]
    MissingNumber(String),
    #[error("`{0}` has no unit suffix")]
    MissingUnit(String),
    #[error("`{text}` is a {found} quantity, expected {expected}")]
    WrongDimension {
        text: String,
        expected: Dimension,
        found: Dimension,
    },
    #[error("unknown unit `{unit}` for {expected}")]
    UnknownUnit { unit: String, expected: Dimension },
    #[error("`{0}` is not a finite non-negative quantity")]
    OutOfRange(String),
}

/// Parses `"<number> <unit>"` into the canonical unit of `dimension`.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, UnitError> {
    let trimmed = text.trim();
    let split = trimmed
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(trimmed.len());
    let (number, unit) = trimmed.split_at(split);
    let unit = unit.trim();
    let value: f64 = number
        .parse()
        .map_err(|_| UnitError::MissingNumber(text.to_string()))?;
    if unit.is_empty() {
        return Err(UnitError::MissingUnit(text.to_string()));
    }
    if let Some(&(_, scale)) = dimension.units().iter().find(|(u, _)| *u == unit) {
        let canonical = value * scale;
        if !canonical.is_finite() || canonical < 0.0 {
            return Err(UnitError::OutOfRange(text.to_string()));
        }
        return Ok(canonical);
    }
    if let Some(found) = Dimension::all()
        .into_iter()
        .find(|d| d.units().iter().any(|(u, _)| *u == unit))
    {
        return Err(UnitError::WrongDimension {
            text: text.to_string(),
            expected: dimension,
            found,
        });
    }
    Err(UnitError::UnknownUnit {
        unit: unit.to_string(),
        expected: dimension,
    })
}

/// Formats a canonical value with its canonical suffix. The number uses the
/// shortest representation that parses back to the same `f64`.
pub fn format_quantity(value: f64, dimension: Dimension) -> String {
    format!("{} {}", value, dimension.canonical_unit())
}
