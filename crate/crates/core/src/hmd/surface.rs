use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::clean::Repair;
use super::parse::{parse_hmd_table, HmdTable, TableKind};
use super::{Country, DataError, Sex};

/// Inclusive band of single-year ages, optionally closed by an open group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgeRange {
    pub lower: u32,
    pub upper: u32,
    /// The top label aggregates every age at or above `upper`.
    pub open_upper: bool,
}

impl AgeRange {
    /// Ages 60..99 plus 100+.
    pub const RETIREE: AgeRange = AgeRange {
        lower: 60,
        upper: 100,
        open_upper: true,
    };
    /// Ages 0..99 plus 100+.
    pub const FULL: AgeRange = AgeRange {
        lower: 0,
        upper: 100,
        open_upper: true,
    };

    pub fn new(lower: u32, upper: u32, open_upper: bool) -> Self {
        assert!(
            lower <= upper,
            "age range lower {lower} exceeds upper {upper}"
        );
        AgeRange {
            lower,
            upper,
            open_upper,
        }
    }

    pub fn len(&self) -> usize {
        (self.upper - self.lower + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, other: &AgeRange) -> bool {
        other.lower >= self.lower && other.upper <= self.upper
    }
}

impl fmt::Display for AgeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}..{}{}",
            self.lower,
            self.upper,
            if self.open_upper { "+" } else { "" }
        )
    }
}

/// Age by year grid of central death rates for one population.
///
/// Rows are ages, columns are calendar years. Missing cells are NaN until
/// [`clean_rates`](super::clean_rates) repairs them.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalitySurface {
    country: String,
    sex: Sex,
    ages: Vec<u32>,
    open_top: bool,
    years: Vec<i32>,
    rates: DMatrix<f64>,
    deaths: Option<DMatrix<f64>>,
    exposures: Option<DMatrix<f64>>,
    pub(crate) repairs: Vec<Repair>,
    notes: Vec<String>,
}

fn check_consecutive<T>(values: &[T], what: &str) -> Result<(), DataError>
where
    T: Copy + Into<i64>,
{
    if values.is_empty() {
        return Err(DataError::GridMismatch(format!("no {what}")));
    }
    for w in values.windows(2) {
        if w[1].into() != w[0].into() + 1 {
            return Err(DataError::GridMismatch(format!(
                "{what} are not consecutive ({} then {})",
                w[0].into(),
                w[1].into()
            )));
        }
    }
    Ok(())
}

impl MortalitySurface {
    /// Assemble a surface from already-aligned matrices.
    pub fn new(
        country: impl Into<String>,
        sex: Sex,
        ages: Vec<u32>,
        open_top: bool,
        years: Vec<i32>,
        rates: DMatrix<f64>,
        deaths: Option<DMatrix<f64>>,
        exposures: Option<DMatrix<f64>>,
    ) -> Result<Self, DataError> {
        check_consecutive(&ages, "ages")?;
        check_consecutive(&years, "years")?;
        let shape = (ages.len(), years.len());
        let named = [
            ("rates", Some(&rates)),
            ("deaths", deaths.as_ref()),
            ("exposures", exposures.as_ref()),
        ];
        for (name, m) in named {
            if let Some(m) = m {
                if m.shape() != shape {
                    return Err(DataError::GridMismatch(format!(
                        "{name} is {}x{}, expected {}x{}",
                        m.nrows(),
                        m.ncols(),
                        shape.0,
                        shape.1
                    )));
                }
                if m.iter().any(|v| v.is_infinite() || *v < 0.0) {
                    return Err(DataError::GridMismatch(format!(
                        "{name} has negative or infinite entries"
                    )));
                }
            }
        }
        Ok(MortalitySurface {
            country: country.into(),
            sex,
            ages,
            open_top,
            years,
            rates,
            deaths,
            exposures,
            repairs: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn sex(&self) -> Sex {
        self.sex
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn open_top(&self) -> bool {
        self.open_top
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn deaths(&self) -> Option<&DMatrix<f64>> {
        self.deaths.as_ref()
    }

    pub fn exposures(&self) -> Option<&DMatrix<f64>> {
        self.exposures.as_ref()
    }

    /// Cells changed by cleaning, in the order they were repaired.
    pub fn repairs(&self) -> &[Repair] {
        &self.repairs
    }

    /// Free-form provenance notes (e.g. lower-fidelity aggregation).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn age_range(&self) -> AgeRange {
        AgeRange {
            lower: self.ages[0],
            upper: *self.ages.last().unwrap(),
            open_upper: self.open_top,
        }
    }

    pub fn rate(&self, age: u32, year: i32) -> Option<f64> {
        let i = self.age_index(age)?;
        let j = self.year_index(year)?;
        Some(self.rates[(i, j)])
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        age.checked_sub(self.ages[0])
            .map(|d| d as usize)
            .filter(|&i| i < self.ages.len())
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        let d = year - self.years[0];
        (d >= 0 && (d as usize) < self.years.len()).then_some(d as usize)
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Keep the first `n` years.
    pub fn first_years(&self, n: usize) -> Result<MortalitySurface, DataError> {
        if n == 0 || n > self.n_years() {
            return Err(DataError::GridMismatch(format!(
                "cannot keep {n} of {} years",
                self.n_years()
            )));
        }
        self.select(0..self.n_ages(), 0..n)
    }

    /// Keep years up to and including `last`.
    pub fn until_year(&self, last: i32) -> Result<MortalitySurface, DataError> {
        let first = self.years[0];
        if last < first {
            return Err(DataError::NoYearsAfterStart {
                start_year: first,
                last_year: last,
            });
        }
        let n = ((last - first + 1) as usize).min(self.n_years());
        self.first_years(n)
    }

    pub(crate) fn select(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<MortalitySurface, DataError> {
        let cut = |m: &DMatrix<f64>| {
            m.view((rows.start, cols.start), (rows.len(), cols.len()))
                .into_owned()
        };
        let open_top = self.open_top && rows.end == self.n_ages();
        let repairs = self
            .repairs
            .iter()
            .filter(|r| {
                self.age_index(r.age).is_some_and(|i| rows.contains(&i))
                    && self.year_index(r.year).is_some_and(|j| cols.contains(&j))
            })
            .cloned()
            .collect();
        Ok(MortalitySurface {
            country: self.country.clone(),
            sex: self.sex,
            ages: self.ages[rows.clone()].to_vec(),
            open_top,
            years: self.years[cols.clone()].to_vec(),
            rates: cut(&self.rates),
            deaths: self.deaths.as_ref().map(cut),
            exposures: self.exposures.as_ref().map(cut),
            repairs,
            notes: self.notes.clone(),
        })
    }

    pub(crate) fn with_rates(&self, rates: DMatrix<f64>, repairs: Vec<Repair>) -> MortalitySurface {
        let mut out = self.clone();
        out.rates = rates;
        out.repairs.extend(repairs);
        out
    }
}

fn table_years(table: &HmdTable) -> BTreeSet<i32> {
    table.cells.keys().map(|&(_, y)| y).collect()
}

fn table_ages(table: &HmdTable) -> BTreeSet<u32> {
    table.cells.keys().map(|&(a, _)| a).collect()
}

fn to_matrix(table: &HmdTable, ages: &[u32], years: &[i32]) -> Result<DMatrix<f64>, DataError> {
    let mut m = DMatrix::from_element(ages.len(), years.len(), f64::NAN);
    for (i, &age) in ages.iter().enumerate() {
        for (j, &year) in years.iter().enumerate() {
            match table.get(age, year) {
                Some(v) => m[(i, j)] = v.unwrap_or(f64::NAN),
                None => {
                    return Err(DataError::GridMismatch(format!(
                        "{:?} table has no entry for age {age}, year {year}",
                        table.kind
                    )))
                }
            }
        }
    }
    Ok(m)
}

/// Build a surface from parsed tables, keeping years from `start_year` on.
///
/// When both deaths and exposures are supplied the rate of every cell with
/// positive exposure is recomputed as their ratio, so rates and counts agree
/// to machine precision (HMD rate files are rounded to six decimals).
pub fn build_surface(
    rates: &HmdTable,
    deaths: Option<&HmdTable>,
    exposures: Option<&HmdTable>,
    country: &str,
    sex: Sex,
    start_year: i32,
) -> Result<MortalitySurface, DataError> {
    let all_years = table_years(rates);
    let last_year = *all_years.iter().next_back().ok_or(DataError::EmptyInput)?;
    let years: Vec<i32> = all_years.range(start_year..).copied().collect();
    if years.is_empty() {
        return Err(DataError::NoYearsAfterStart {
            start_year,
            last_year,
        });
    }
    let ages: Vec<u32> = table_ages(rates).into_iter().collect();

    for (name, table) in [("deaths", deaths), ("exposures", exposures)] {
        let Some(table) = table else { continue };
        let other_years: Vec<i32> = table_years(table).range(start_year..).copied().collect();
        if other_years != years {
            let missing: Vec<_> = years.iter().filter(|y| !other_years.contains(y)).collect();
            let extra: Vec<_> = other_years.iter().filter(|y| !years.contains(y)).collect();
            return Err(DataError::GridMismatch(format!(
                "{name} years differ from rates (missing {missing:?}, extra {extra:?})"
            )));
        }
        if table_ages(table).into_iter().collect::<Vec<_>>() != ages {
            return Err(DataError::GridMismatch(format!(
                "{name} ages differ from rates"
            )));
        }
    }

    let mut rate_m = to_matrix(rates, &ages, &years)?;
    let death_m = deaths.map(|t| to_matrix(t, &ages, &years)).transpose()?;
    let expo_m = exposures.map(|t| to_matrix(t, &ages, &years)).transpose()?;
    if let (Some(d), Some(e)) = (&death_m, &expo_m) {
        for ((r, &d), &e) in rate_m.iter_mut().zip(d.iter()).zip(e.iter()) {
            if e > 0.0 && d.is_finite() && e.is_finite() {
                *r = d / e;
            }
        }
    }
    let open_top = rates.open_top;
    MortalitySurface::new(country, sex, ages, open_top, years, rate_m, death_m, expo_m)
}

/// Collapse every age at or above `top` into a single open group.
///
/// With counts, the open rate is summed deaths over summed exposures (missing
/// cells are skipped). Rates-only surfaces fall back to the unweighted mean of
/// the collapsed rates and the surface is annotated.
pub fn aggregate_open_age(
    surface: &MortalitySurface,
    top: u32,
) -> Result<MortalitySurface, DataError> {
    let range = surface.age_range();
    let Some(k) = surface.age_index(top) else {
        return Err(DataError::TopOutOfRange {
            top,
            lower: range.lower,
            upper: range.upper,
        });
    };
    let n = surface.n_years();
    let mut out = surface.select(0..k + 1, 0..n)?;
    out.open_top = true;
    if k + 1 == surface.n_ages() {
        return Ok(out);
    }
    let block = k..surface.n_ages();
    let sum_block = |m: &DMatrix<f64>, j: usize| -> f64 {
        block
            .clone()
            .map(|i| m[(i, j)])
            .filter(|v| v.is_finite())
            .sum()
    };
    match (&surface.deaths, &surface.exposures) {
        (Some(d), Some(e)) => {
            let (od, oe) = (
                out.deaths.as_mut().unwrap(),
                out.exposures.as_mut().unwrap(),
            );
            for j in 0..n {
                let (sd, se) = (sum_block(d, j), sum_block(e, j));
                od[(k, j)] = sd;
                oe[(k, j)] = se;
                out.rates[(k, j)] = if se > 0.0 { sd / se } else { f64::NAN };
            }
        }
        _ => {
            for j in 0..n {
                let vals: Vec<f64> = block
                    .clone()
                    .map(|i| surface.rates[(i, j)])
                    .filter(|v| v.is_finite())
                    .collect();
                out.rates[(k, j)] = if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                };
            }
            // Partial counts cannot be collapsed consistently with the fallback rate.
            out.deaths = None;
            out.exposures = None;
            out.notes.push(format!(
                "open age {top}+ rate is the unweighted mean of ages {top}..{} (no counts available)",
                range.upper
            ));
        }
    }
    Ok(out)
}

/// Restrict a surface to `range`. Years and metadata are kept.
pub fn truncate_ages(
    surface: &MortalitySurface,
    range: AgeRange,
) -> Result<MortalitySurface, DataError> {
    let available = surface.age_range();
    let out_of_bounds = || DataError::RangeOutOfBounds {
        requested: range.to_string(),
        available: available.to_string(),
    };
    if !available.contains(&range) {
        return Err(out_of_bounds());
    }
    // An open request must end exactly at the surface's own open group.
    if range.open_upper && !(available.open_upper && range.upper == available.upper) {
        return Err(out_of_bounds());
    }
    let lo = (range.lower - available.lower) as usize;
    let hi = (range.upper - available.lower) as usize + 1;
    surface.select(lo..hi, 0..surface.n_years())
}

fn read_file(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Read `<dir>/<HMD code>.{Mx,Deaths,Exposures}_1x1.txt` for one population.
///
/// The rate file is required; count files are used when present. Years after
/// the country's default last year are dropped.
pub fn load_surface(
    dir: &Path,
    country: &Country,
    sex: Sex,
    start_year: i32,
    last_year: Option<i32>,
) -> Result<MortalitySurface, DataError> {
    let path_for = |kind: TableKind| {
        let primary = dir.join(format!("{}.{}.txt", country.hmd_code, kind.file_stem()));
        if primary.exists() {
            primary
        } else {
            dir.join(format!("{}.{}.txt", country.code, kind.file_stem()))
        }
    };
    let rates_path = path_for(TableKind::Rates);
    let rates = parse_hmd_table(&read_file(&rates_path)?, TableKind::Rates, sex)?;
    let optional = |kind: TableKind| -> Result<Option<HmdTable>, DataError> {
        let path = path_for(kind);
        if path.exists() {
            Ok(Some(parse_hmd_table(&read_file(&path)?, kind, sex)?))
        } else {
            Ok(None)
        }
    };
    let deaths = optional(TableKind::Deaths)?;
    let exposures = optional(TableKind::Exposures)?;
    let surface = build_surface(
        &rates,
        deaths.as_ref(),
        exposures.as_ref(),
        country.code,
        sex,
        start_year,
    )?;
    surface.until_year(last_year.unwrap_or(country.last_year))
}

/// Write a surface as `age,year,rate[,deaths][,exposures]` with a metadata comment line.
pub fn write_surface_csv<W: Write>(surface: &MortalitySurface, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# country={} sex={} start={} open_top={}",
        surface.country, surface.sex, surface.years[0], surface.open_top
    )?;
    let mut header = String::from("age,year,rate");
    if surface.deaths.is_some() {
        header.push_str(",deaths");
    }
    if surface.exposures.is_some() {
        header.push_str(",exposures");
    }
    writeln!(out, "{header}")?;
    for (i, age) in surface.ages.iter().enumerate() {
        for (j, year) in surface.years.iter().enumerate() {
            write!(out, "{age},{year},{}", surface.rates[(i, j)])?;
            if let Some(d) = &surface.deaths {
                write!(out, ",{}", d[(i, j)])?;
            }
            if let Some(e) = &surface.exposures {
                write!(out, ",{}", e[(i, j)])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Inverse of [`write_surface_csv`].
pub fn read_surface_csv(text: &str) -> Result<MortalitySurface, DataError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, meta) = lines.next().ok_or(DataError::EmptyInput)?;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| DataError::BadMetadata("first line must start with '#'".into()))?;
    let mut country = None;
    let mut sex = None;
    let mut open_top = false;
    for kv in meta.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| DataError::BadMetadata(format!("expected key=value, got '{kv}'")))?;
        match k {
            "country" => country = Some(v.to_string()),
            "sex" => sex = Some(v.parse::<Sex>()?),
            "open_top" => open_top = v == "true",
            "start" => {}
            _ => return Err(DataError::BadMetadata(format!("unknown key '{k}'"))),
        }
    }
    let country = country.ok_or_else(|| DataError::BadMetadata("missing country".into()))?;
    let sex = sex.ok_or_else(|| DataError::BadMetadata("missing sex".into()))?;

    let (_, header) = lines.next().ok_or(DataError::EmptyInput)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[..3] != ["age", "year", "rate"] {
        return Err(DataError::BadMetadata(format!(
            "unexpected header '{header}'"
        )));
    }
    let has_deaths = columns.contains(&"deaths");
    let has_exposures = columns.contains(&"exposures");

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let malformed = |reason: &str| DataError::MalformedRow {
            line: lineno + 1,
            reason: reason.to_string(),
            content: line.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(malformed("wrong column count"));
        }
        let age: u32 = fields[0].trim().parse().map_err(|_| malformed("bad age"))?;
        let year: i32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| malformed("bad year"))?;
        let values = fields[2..]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| malformed("bad value")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((age, year, values));
    }
    let ages: Vec<u32> = rows
        .iter()
        .map(|r| r.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let years: Vec<i32> = rows
        .iter()
        .map(|r| r.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ages.is_empty() {
        return Err(DataError::EmptyInput);
    }
    if rows.len() != ages.len() * years.len() {
        return Err(DataError::GridMismatch(
            "surface CSV is not a full age-by-year grid".into(),
        ));
    }
    let mut mats = vec![DMatrix::zeros(ages.len(), years.len()); columns.len() - 2];
    for (age, year, values) in rows {
        let i = (age - ages[0]) as usize;
        let j = (year - years[0]) as usize;
        for (m, v) in mats.iter_mut().zip(values) {
            m[(i, j)] = v;
        }
    }
    let mut mats = mats.into_iter();
    let rates = mats.next().unwrap();
    let deaths = if has_deaths { mats.next() } else { None };
    let exposures = if has_exposures { mats.next() } else { None };
    MortalitySurface::new(
        country, sex, ages, open_top, years, rates, deaths, exposures,
    )
}
