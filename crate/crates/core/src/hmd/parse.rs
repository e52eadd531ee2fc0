//! Reader for HMD-style 1x1 period tables (`Mx_1x1`, `Deaths_1x1`, `Exposures_1x1`).

use std::collections::BTreeMap;

use super::{DataError, Sex};

/// Which HMD table a text stream holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableKind {
    Rates,
    Deaths,
    Exposures,
}

impl TableKind {
    /// File-name stem used by the HMD downloads.
    pub fn file_stem(self) -> &'static str {
        match self {
            TableKind::Rates => "Mx_1x1",
            TableKind::Deaths => "Deaths_1x1",
            TableKind::Exposures => "Exposures_1x1",
        }
    }
}

/// Label attached to the last HMD age row ("110+").
pub const HMD_OPEN_AGE: u32 = 110;

/// One sex column of an HMD table, keyed by `(age, year)`. `None` marks a "." cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HmdTable {
    pub kind: TableKind,
    pub sex: Sex,
    pub cells: BTreeMap<(u32, i32), Option<f64>>,
    /// True when an age token carried a trailing `+`.
    pub open_top: bool,
}

impl HmdTable {
    pub fn get(&self, age: u32, year: i32) -> Option<Option<f64>> {
        self.cells.get(&(age, year)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn parse_age(token: &str) -> Option<(u32, bool)> {
    match token.strip_suffix('+') {
        Some(stem) => stem.parse().ok().map(|a| (a, true)),
        None => token.parse().ok().map(|a| (a, false)),
    }
}

fn parse_value(token: &str) -> Option<Option<f64>> {
    if token == "." {
        return Some(None);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Some(v)),
        _ => None,
    }
}

/// Parse the body of an HMD 1x1 table, keeping the column for `sex`.
///
/// Leading lines whose first token is not an integer year are treated as the
/// header block. After the first data row every non-blank line must be a
/// well-formed `Year Age Female Male Total` row.
pub fn parse_hmd_table(text: &str, kind: TableKind, sex: Sex) -> Result<HmdTable, DataError> {
    let column = match sex {
        Sex::Female => 2,
        Sex::Male => 3,
    };
    let mut cells = BTreeMap::new();
    let mut open_top = false;
    let mut in_body = false;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !in_body {
            if tokens[0].parse::<i32>().is_err() {
                continue;
            }
            in_body = true;
        }
        let malformed = |reason: &str| DataError::MalformedRow {
            line: lineno,
            reason: reason.to_string(),
            content: line.trim().to_string(),
        };
        if tokens.len() != 5 {
            return Err(malformed(&format!(
                "expected 5 columns, found {}",
                tokens.len()
            )));
        }
        let year: i32 = tokens[0]
            .parse()
            .map_err(|_| malformed("year is not an integer"))?;
        let (age, plus) = parse_age(tokens[1]).ok_or_else(|| malformed("bad age label"))?;
        let mut values = [None; 3];
        for (slot, token) in values.iter_mut().zip(&tokens[2..]) {
            *slot = parse_value(token).ok_or_else(|| malformed("non-numeric value"))?;
        }
        if let Some(v) = values[column - 2] {
            if v < 0.0 {
                return Err(malformed("negative value"));
            }
        }
        open_top |= plus;
        if cells.insert((age, year), values[column - 2]).is_some() {
            return Err(DataError::InconsistentYears { age, year });
        }
    }

    if cells.is_empty() {
        return Err(DataError::EmptyInput);
    }
    Ok(HmdTable {
        kind,
        sex,
        cells,
        open_top,
    })
}
