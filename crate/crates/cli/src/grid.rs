//! Grid specifications and the CSV form of density grids.

use std::io::{Read, Write};
use std::str::FromStr;

use laplace_core::quadrature::log_trapezoid;
use laplace_core::DensityGrid;

use crate::error::{CliError, CliResult};
use crate::report::full;

pub const CSV_HEADER: [&str; 3] = ["abscissa", "density", "log_density"];
const MAX_POINTS: usize = 1_000_000;

/// `LO:HI:STEP`. The points are `LO + i STEP` up to `HI`; a final point
/// within a millionth of a step of `HI` is snapped onto it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` is not LO:HI:STEP"));
        }
        let mut v = [0.0f64; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| format!("`{p}` in grid `{s}` is not a number"))?;
            if !slot.is_finite() {
                return Err(format!("grid `{s}` has a non-finite entry"));
            }
        }
        let [lo, hi, step] = v;
        if !(hi > lo) || !(step > 0.0) {
            return Err(format!("grid `{s}` needs LO < HI and STEP > 0"));
        }
        if (hi - lo) / step > MAX_POINTS as f64 {
            return Err(format!("grid `{s}` has more than {MAX_POINTS} points"));
        }
        Ok(Self { lo, hi, step })
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        let span = (self.hi - self.lo) / self.step;
        let mut n = span.floor() as usize;
        if span - n as f64 > 1.0 - 1e-6 {
            n += 1;
        }
        let mut xs: Vec<f64> = (0..=n).map(|i| self.lo + i as f64 * self.step).collect();
        if let Some(last) = xs.last_mut() {
            if (*last - self.hi).abs() <= 1e-6 * self.step {
                *last = self.hi;
            }
        }
        xs
    }
}

/// Header `abscissa,density,log_density`, 17 significant digits, LF line
/// endings. Grid gaps are written as `NaN`.
pub fn write_csv(grid: &DensityGrid, out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for (x, lv) in grid.abscissae.iter().zip(&grid.log_densities) {
        w.write_record([full(*x), full(lv.exp()), full(*lv)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of a grid CSV written by [`write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvGrid {
    pub abscissae: Vec<f64>,
    pub densities: Vec<f64>,
    pub log_densities: Vec<f64>,
}

impl CsvGrid {
    /// Trapezoid mass recomputed from the log densities, as reported.
    pub fn mass(&self) -> f64 {
        log_trapezoid(&self.abscissae, &self.log_densities).exp()
    }
}

pub fn read_csv(input: impl Read) -> CliResult<CsvGrid> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |m: String| CliError::usage(format!("grid csv: {m}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut g = CsvGrid { abscissae: Vec::new(), densities: Vec::new(), log_densities: Vec::new() };
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> CliResult<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("bad field {i} in {rec:?}")))
        };
        g.abscissae.push(field(0)?);
        g.densities.push(field(1)?);
        g.log_densities.push(field(2)?);
    }
    Ok(g)
}
