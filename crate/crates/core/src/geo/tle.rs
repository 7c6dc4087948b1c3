//! NORAD two-line element sets.
//!
//! Records are the usual three lines (name, line 1, line 2); bare two-line
//! records without a name line are accepted too. Every data line must be at
//! least 69 columns and carry a valid modulo-10 checksum in column 69.

use thiserror::Error;

use super::orbit::{check_eccentricity, OrbitalElements};

const LINE_LEN: usize = 69;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TleError {
    #[error("record {record} (line {line}): truncated record")]
    Truncated { record: usize, line: usize },
    #[error("record {record} (line {line}): checksum {found} != computed {expected}")]
    Checksum {
        record: usize,
        line: usize,
        expected: u32,
        found: char,
    },
    #[error("record {record} (line {line}): bad {field} field {value:?}")]
    Field {
        record: usize,
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("record {record} (line {line}): catalog numbers of line 1 and line 2 differ")]
    CatalogMismatch { record: usize, line: usize },
}

impl TleError {
    pub fn record(&self) -> usize {
        match *self {
            TleError::Truncated { record, .. }
            | TleError::Checksum { record, .. }
            | TleError::Field { record, .. }
            | TleError::CatalogMismatch { record, .. } => record,
        }
    }
}

/// Accepted element sets plus the records rejected with a diagnostic.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct TleParse {
    pub elements: Vec<OrbitalElements>,
    pub rejected: Vec<TleError>,
}

pub(crate) fn checksum(line: &str) -> u32 {
    line.bytes()
        .take(LINE_LEN - 1)
        .map(|b| match b {
            b'0'..=b'9' => (b - b'0') as u32,
            b'-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

fn is_data_line(line: &str, tag: char) -> bool {
    line.starts_with(tag) && line.as_bytes().get(1) == Some(&b' ')
}

/// Parses a TLE text. Truncated records abort the parse; records with a bad
/// checksum or unreadable fields are skipped and listed in `rejected`.
pub fn parse_tle(text: &str) -> Result<TleParse, TleError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut out = TleParse::default();
    let mut i = 0;
    let mut record = 0;
    while i < lines.len() {
        let (name_line, name) = if is_data_line(lines[i].1, '1') {
            (lines[i].0, None)
        } else {
            let n = (lines[i].0, Some(lines[i].1.trim()));
            i += 1;
            n
        };
        let (Some(&(n1, l1)), Some(&(n2, l2))) = (lines.get(i), lines.get(i + 1)) else {
            return Err(TleError::Truncated {
                record,
                line: name_line,
            });
        };
        if !is_data_line(l1, '1') || !is_data_line(l2, '2') {
            return Err(TleError::Truncated {
                record,
                line: if is_data_line(l1, '1') { n2 } else { n1 },
            });
        }
        for (n, l) in [(n1, l1), (n2, l2)] {
            if l.len() < LINE_LEN || !l.is_ascii() {
                return Err(TleError::Truncated { record, line: n });
            }
        }
        i += 2;

        match parse_record(record, name, (n1, l1), (n2, l2)) {
            Ok(e) => {
                check_eccentricity(&e);
                out.elements.push(e);
            }
            Err(err) => {
                log::warn!("rejected TLE {err}");
                out.rejected.push(err);
            }
        }
        record += 1;
    }
    Ok(out)
}

fn parse_record(
    record: usize,
    name: Option<&str>,
    (n1, l1): (usize, &str),
    (n2, l2): (usize, &str),
) -> Result<OrbitalElements, TleError> {
    for (n, l) in [(n1, l1), (n2, l2)] {
        let found = l.as_bytes()[LINE_LEN - 1] as char;
        let expected = checksum(l);
        if found.to_digit(10) != Some(expected) {
            return Err(TleError::Checksum {
                record,
                line: n,
                expected,
                found,
            });
        }
    }

    let field = |line: usize, text: &str, range: std::ops::Range<usize>, what: &'static str| {
        let raw = text[range].trim();
        raw.parse::<f64>().map_err(|_| TleError::Field {
            record,
            line,
            field: what,
            value: raw.to_string(),
        })
    };

    let cat1 = field(n1, l1, 2..7, "catalog number")? as u32;
    let cat2 = field(n2, l2, 2..7, "catalog number")? as u32;
    if cat1 != cat2 {
        return Err(TleError::CatalogMismatch { record, line: n2 });
    }
    let yy = field(n1, l1, 18..20, "epoch year")? as i64;
    let day = field(n1, l1, 20..32, "epoch day")?;
    let ecc_digits = l2[26..33].trim();
    let eccentricity = format!("0.{ecc_digits}")
        .parse::<f64>()
        .map_err(|_| TleError::Field {
            record,
            line: n2,
            field: "eccentricity",
            value: ecc_digits.to_string(),
        })?;

    let year = if yy < 57 { 2000 + yy } else { 1900 + yy };
    let epoch = days_from_civil(year, 1, 1) as f64 * 86_400.0 + (day - 1.0) * 86_400.0;

    Ok(OrbitalElements {
        sat_id: name
            .map(str::to_string)
            .unwrap_or_else(|| format!("{cat1:05}")),
        catalog_number: cat1,
        inclination_deg: field(n2, l2, 8..16, "inclination")?,
        raan_deg: field(n2, l2, 17..25, "raan")?,
        eccentricity,
        arg_perigee_deg: field(n2, l2, 34..42, "argument of perigee")?,
        mean_anomaly_deg: field(n2, l2, 43..51, "mean anomaly")?,
        mean_motion: field(n2, l2, 52..63, "mean motion")?,
        epoch,
        plane: None,
    })
}

/// Renders an element set as a three-line TLE with valid checksums.
/// Drag terms are written as zero.
pub fn format_tle(e: &OrbitalElements) -> String {
    let days = (e.epoch / 86_400.0).floor() as i64;
    let (year, _, _) = civil_from_days(days);
    let day_of_year = e.epoch / 86_400.0 - days_from_civil(year, 1, 1) as f64 + 1.0;
    let cat = e.catalog_number % 100_000;

    let mut l1 = format!(
        "1 {cat:05}U {:<8} {:02}{:012.8} {:>10} {:>8} {:>8} 0 {:>4}",
        "00000A",
        year % 100,
        day_of_year,
        ".00000000",
        "00000-0",
        "00000-0",
        999
    );
    let ecc = format!("{:.7}", e.eccentricity.clamp(0.0, 0.999_999_9));
    let mut l2 = format!(
        "2 {cat:05} {:8.4} {:8.4} {} {:8.4} {:8.4} {:11.8}{:>5}",
        e.inclination_deg,
        e.raan_deg.rem_euclid(360.0),
        &ecc[2..9],
        e.arg_perigee_deg.rem_euclid(360.0),
        e.mean_anomaly_deg.rem_euclid(360.0),
        e.mean_motion,
        0
    );
    for l in [&mut l1, &mut l2] {
        debug_assert_eq!(l.len(), LINE_LEN - 1, "{l}");
        let c = checksum(l);
        l.push(char::from_digit(c, 10).unwrap());
    }
    format!("{}\n{l1}\n{l2}\n", e.sat_id)
}

// Proleptic Gregorian calendar <-> days since 1970-01-01.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (yoe + era * 400 + i64::from(m <= 2), m, d)
}
