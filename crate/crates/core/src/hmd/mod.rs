//! Mortality data ingestion: HMD table parsing, surface construction,
//! age truncation, open-age aggregation and rate cleaning.

mod clean;
mod countries;
mod parse;
mod surface;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use clean::{clean_rates, Repair};
pub use countries::{Country, COUNTRIES};
pub use parse::{parse_hmd_table, HmdTable, TableKind, HMD_OPEN_AGE};
pub use surface::{
    aggregate_open_age, build_surface, load_surface, read_surface_csv, truncate_ages,
    write_surface_csv, AgeRange, MortalitySurface,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub const BOTH: [Sex; 2] = [Sex::Female, Sex::Male];

    pub fn code(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Sex {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" => Ok(Sex::Female),
            "m" | "male" => Ok(Sex::Male),
            _ => Err(DataError::BadMetadata(format!("unknown sex '{s}'"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed row at line {line} ({reason}): '{content}'")]
    MalformedRow {
        line: usize,
        reason: String,
        content: String,
    },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("age {age}, year {year} appears more than once")]
    InconsistentYears { age: u32, year: i32 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("no data at or after start year {start_year} (last year {last_year})")]
    NoYearsAfterStart { start_year: i32, last_year: i32 },
    #[error("open-age top {top} outside surface ages {lower}..={upper}")]
    TopOutOfRange { top: u32, lower: u32, upper: u32 },
    #[error("age range {requested} not contained in surface ages {available}")]
    RangeOutOfBounds {
        requested: String,
        available: String,
    },
    #[error("year {year} has no positive rate to repair from")]
    UnrepairableColumn { year: i32 },
    #[error("bad surface metadata: {0}")]
    BadMetadata(String),
    #[error("missing data file {}", .0.display())]
    MissingFile(std::path::PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
