use std::collections::BTreeMap;
use std::io::Write;

use super::{ForecastError, ForecastResult, RNG_NAME};

/// Write `age,horizon,point,lower,upper` rows after a metadata comment line.
/// Values use the shortest round-trip formatting.
pub fn write_forecast_csv<W: Write>(f: &ForecastResult, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# model={} alpha={} n_sims={} seed={} rng={}",
        f.model, f.alpha, f.n_sims, f.seed, RNG_NAME
    )?;
    writeln!(out, "age,horizon,point,lower,upper")?;
    for (i, age) in f.ages.iter().enumerate() {
        for (j, h) in f.horizons.iter().enumerate() {
            writeln!(
                out,
                "{age},{h},{},{},{}",
                f.point[i][j], f.lower[i][j], f.upper[i][j]
            )?;
        }
    }
    Ok(())
}

pub fn read_forecast_csv(text: &str) -> Result<ForecastResult, ForecastError> {
    let err = |m: String| ForecastError::Parse(m);
    let mut lines = text.lines();
    let meta_line = lines.next().ok_or_else(|| err("empty input".into()))?;
    let meta: BTreeMap<&str, &str> = meta_line
        .strip_prefix('#')
        .ok_or_else(|| err("missing metadata line".into()))?
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let get = |k: &str| {
        meta.get(k)
            .copied()
            .ok_or_else(|| err(format!("metadata lacks '{k}'")))
    };
    if get("rng")? != RNG_NAME {
        return Err(err(format!("unsupported generator '{}'", get("rng")?)));
    }
    let alpha: f64 = get("alpha")?.parse().map_err(|_| err("bad alpha".into()))?;
    let n_sims: usize = get("n_sims")?
        .parse()
        .map_err(|_| err("bad n_sims".into()))?;
    let seed: u64 = get("seed")?.parse().map_err(|_| err("bad seed".into()))?;
    if lines.next().map(str::trim) != Some("age,horizon,point,lower,upper") {
        return Err(err("missing column header".into()));
    }

    let mut ages: Vec<u32> = Vec::new();
    let mut rows: Vec<Vec<(usize, [f64; 3])>> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || err(format!("line {}: '{line}'", n + 3));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        let age: u32 = cols[0].parse().map_err(|_| bad())?;
        let h: usize = cols[1].parse().map_err(|_| bad())?;
        let mut v = [0.0; 3];
        for (slot, c) in v.iter_mut().zip(&cols[2..]) {
            *slot = c.parse().map_err(|_| bad())?;
        }
        if ages.last() != Some(&age) {
            if ages.contains(&age) {
                return Err(err(format!("age {age} rows are not contiguous")));
            }
            ages.push(age);
            rows.push(Vec::new());
        }
        rows.last_mut().unwrap().push((h, v));
    }
    let horizon = rows.first().map_or(0, Vec::len);
    if horizon == 0 {
        return Err(err("no forecast rows".into()));
    }
    let mut f = ForecastResult {
        model: get("model")?.to_string(),
        ages,
        horizons: (1..=horizon).collect(),
        point: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        alpha,
        n_sims,
        seed,
    };
    for r in rows {
        if r.len() != horizon || r.iter().enumerate().any(|(j, (h, _))| *h != j + 1) {
            return Err(err("every age needs horizons 1..H in order".into()));
        }
        f.point.push(r.iter().map(|x| x.1[0]).collect());
        f.lower.push(r.iter().map(|x| x.1[1]).collect());
        f.upper.push(r.iter().map(|x| x.1[2]).collect());
    }
    Ok(f)
}
