//! Zero-rate panels and single-date curves, with CSV ingestion and export.
//!
//! Files carry a header row `date,<maturity>,<maturity>,...` followed by one
//! row per observation date. Rates are read either as percent (the usual
//! market quotation) or as decimals, and held internally as continuously
//! compounded decimals.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};

use crate::{Error, Result};

const DAYS_PER_YEAR: f64 = 365.25;
/// Maximum deviation of any date gap from the panel step, in calendar days.
const SPACING_TOLERANCE_DAYS: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Rates in the file are quoted in percent (4.2 means 4.2%).
    pub rates_in_percent: bool,
    pub date_column: String,
    /// Restrict ingestion to these maturity columns (in years). `None` keeps
    /// every column.
    pub maturities: Option<Vec<f64>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { rates_in_percent: true, date_column: "date".to_string(), maturities: None }
    }
}

/// Time-indexed panel of zero rates on a fixed maturity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCurvePanel {
    dates: Vec<NaiveDate>,
    maturities: Vec<f64>,
    rates: Vec<Vec<f64>>,
    step: f64,
}

impl ZeroCurvePanel {
    /// Builds a panel and checks every invariant. `rates[i][j]` is the rate
    /// at `dates[i]` for `maturities[j]`, as a decimal.
    pub fn new(dates: Vec<NaiveDate>, maturities: Vec<f64>, rates: Vec<Vec<f64>>) -> Result<Self> {
        if maturities.is_empty() {
            return Err(Error::invalid("panel has no maturity columns"));
        }
        if maturities.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid("maturities must be positive and finite"));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("maturities must be strictly increasing"));
        }
        if dates.len() < 2 {
            return Err(Error::invalid("panel needs at least two dates"));
        }
        if rates.len() != dates.len() {
            return Err(Error::invalid(format!("{} rate rows for {} dates", rates.len(), dates.len())));
        }
        for (row, date) in rates.iter().zip(&dates) {
            if row.len() != maturities.len() {
                return Err(Error::invalid(format!(
                    "row {} has {} rates for {} maturities",
                    date,
                    row.len(),
                    maturities.len()
                )));
            }
            for (&r, &m) in row.iter().zip(&maturities) {
                if !r.is_finite() {
                    return Err(Error::invalid(format!("non-finite rate at {}, {:.1}", date.format("%Y-%m"), m)));
                }
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("dates not strictly increasing: {} followed by {}", w[0], w[1])));
        }
        let gaps: Vec<f64> = dates.windows(2).map(|w| year_fraction(w[0], w[1])).collect();
        let step = median(&gaps);
        if let Some((i, g)) =
            gaps.iter().enumerate().find(|(_, &g)| (g - step).abs() * DAYS_PER_YEAR > SPACING_TOLERANCE_DAYS)
        {
            return Err(Error::invalid(format!(
                "dates not equally spaced: gap {} -> {} is {:.1} days against a step of {:.1} days",
                dates[i],
                dates[i + 1],
                g * DAYS_PER_YEAR,
                step * DAYS_PER_YEAR
            )));
        }
        Ok(Self { dates, maturities, rates, step })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Year fraction between consecutive observations.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Number of transitions, i.e. rows minus one.
    pub fn transitions(&self) -> usize {
        self.dates.len() - 1
    }

    fn column_of(&self, maturity: f64) -> Option<usize> {
        self.maturities.iter().position(|&m| (m - maturity).abs() <= 1e-9 * maturity.max(1.0))
    }

    fn missing_maturity(&self, maturity: f64) -> Error {
        let available: Vec<String> = self.maturities.iter().map(|m| format_maturity(*m)).collect();
        Error::invalid(format!(
            "maturity {} not in panel; available: {}",
            format_maturity(maturity),
            available.join(", ")
        ))
    }

    /// Two-column view in `(short, long)` order.
    pub fn select_pair(&self, pair: MaturityPair) -> Result<PairView> {
        let i = self.column_of(pair.short()).ok_or_else(|| self.missing_maturity(pair.short()))?;
        let j = self.column_of(pair.long()).ok_or_else(|| self.missing_maturity(pair.long()))?;
        let rows = self.rates.iter().map(|r| [r[i], r[j]]).collect();
        Ok(PairView { pair, step: self.step, dates: self.dates.clone(), rows })
    }

    pub fn snapshot(&self, date: NaiveDate) -> Result<CurveSnapshot> {
        let i = self
            .dates
            .iter()
            .position(|&d| d == date)
            .ok_or_else(|| Error::invalid(format!("date {date} not in panel")))?;
        CurveSnapshot::new(date, self.maturities.iter().copied().zip(self.rates[i].iter().copied()).collect())
    }

    /// Snapshot of the last row.
    pub fn last_snapshot(&self) -> CurveSnapshot {
        let i = self.dates.len() - 1;
        CurveSnapshot {
            date: self.dates[i],
            points: self.maturities.iter().copied().zip(self.rates[i].iter().copied()).collect(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, opts: &IngestOptions) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let date_idx = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(&opts.date_column))
            .ok_or_else(|| Error::invalid(format!("no '{}' column in header", opts.date_column)))?;

        let mut columns: Vec<(usize, f64)> = Vec::new();
        for (idx, h) in headers.iter().enumerate() {
            if idx == date_idx {
                continue;
            }
            let m = parse_maturity(h).ok_or_else(|| Error::invalid(format!("header '{h}' is not a maturity")))?;
            columns.push((idx, m));
        }
        if let Some(keep) = &opts.maturities {
            for &k in keep {
                if !columns.iter().any(|&(_, m)| (m - k).abs() < 1e-9) {
                    return Err(Error::invalid(format!("maturity {} requested but not in file", format_maturity(k))));
                }
            }
            columns.retain(|&(_, m)| keep.iter().any(|&k| (m - k).abs() < 1e-9));
        }
        if columns.len() < 2 {
            return Err(Error::invalid("need at least 2 maturity columns"));
        }

        let maturities: Vec<f64> = columns.iter().map(|&(_, m)| m).collect();
        let mut dates = Vec::new();
        let mut rates = Vec::new();
        let mut unit_seen: Option<Unit> = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let raw_date = record.get(date_idx).unwrap_or("");
            let date = parse_date(raw_date)
                .ok_or_else(|| Error::invalid(format!("line {}: bad date '{raw_date}'", line + 2)))?;
            let mut row = Vec::with_capacity(columns.len());
            for &(idx, m) in &columns {
                let cell = record.get(idx).unwrap_or("").trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell == "." {
                    return Err(Error::invalid(format!("missing rate at {}, {:.1}", date.format("%Y-%m"), m)));
                }
                let (value, unit) = parse_rate(cell).ok_or_else(|| {
                    Error::invalid(format!("unparseable rate '{cell}' at {}, {:.1}", date.format("%Y-%m"), m))
                })?;
                match unit_seen {
                    None => unit_seen = Some(unit),
                    Some(u) if u != unit => {
                        return Err(Error::invalid(format!(
                            "mixed units: '{cell}' at {}, {:.1} is {} but earlier cells are {}",
                            date.format("%Y-%m"),
                            m,
                            unit.describe(),
                            u.describe()
                        )))
                    }
                    _ => {}
                }
                let decimal = match unit {
                    Unit::Percent => value / 100.0,
                    Unit::BasisPoints => value / 10_000.0,
                    Unit::Bare if opts.rates_in_percent => value / 100.0,
                    Unit::Bare => value,
                };
                row.push(decimal);
            }
            dates.push(date);
            rates.push(row);
        }
        if dates.len() < 3 {
            return Err(Error::invalid(format!("need at least 3 dates, found {}", dates.len())));
        }
        Self::new(dates, maturities, rates)
    }

    pub fn read_csv_path(path: &Path, opts: &IngestOptions) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::read_csv(file, opts)
    }

    /// Writes the panel in the ingestion format. Decimal output round-trips
    /// bit-for-bit through [`ZeroCurvePanel::read_csv`] with
    /// `rates_in_percent = false`.
    pub fn write_csv<W: Write>(&self, writer: W, rates_in_percent: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.maturities.iter().map(|m| format_maturity(*m)));
        wtr.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.rates) {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|&r| if rates_in_percent { format!("{}", r * 100.0) } else { format!("{r}") }));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Ordered pair of maturities `0 < short < long`, in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaturityPair {
    short: f64,
    long: f64,
}

impl MaturityPair {
    pub fn new(short: f64, long: f64) -> Result<Self> {
        if !(short > 0.0) || !short.is_finite() || !long.is_finite() {
            return Err(Error::invalid(format!("maturities must be positive: ({short}, {long})")));
        }
        if !(short < long) {
            return Err(Error::invalid(format!("maturity pair requires t1 < t2, got ({short}, {long})")));
        }
        Ok(Self { short, long })
    }

    pub fn short(&self) -> f64 {
        self.short
    }

    pub fn long(&self) -> f64 {
        self.long
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.short, self.long]
    }
}

/// Two-column slice of a panel: `rows[t] = [z_t(short), z_t(long)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairView {
    pub pair: MaturityPair,
    pub step: f64,
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<[f64; 2]>,
}

impl PairView {
    /// View without dates, for data generated in memory.
    pub fn from_rows(pair: MaturityPair, step: f64, rows: Vec<[f64; 2]>) -> Self {
        Self { pair, step, dates: Vec::new(), rows }
    }

    pub fn transitions(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }
}

/// A single curve observed on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSnapshot {
    pub date: NaiveDate,
    pub points: Vec<(f64, f64)>,
}

impl CurveSnapshot {
    pub fn new(date: NaiveDate, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("curve has no points"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("curve maturities must be strictly increasing"));
        }
        if points.iter().any(|p| !p.1.is_finite() || !(p.0 > 0.0)) {
            return Err(Error::invalid("curve has non-finite rates or non-positive maturities"));
        }
        Ok(Self { date, points })
    }

    pub fn rate_at(&self, maturity: f64) -> Result<f64> {
        self.points.iter().find(|p| (p.0 - maturity).abs() <= 1e-9 * maturity.max(1.0)).map(|p| p.1).ok_or_else(|| {
            Error::invalid(format!("maturity {} not on curve dated {}", format_maturity(maturity), self.date))
        })
    }

    /// Points with maturity at or below `max_maturity`.
    pub fn up_to(&self, max_maturity: f64) -> Vec<(f64, f64)> {
        self.points.iter().copied().filter(|p| p.0 <= max_maturity + 1e-9).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Bare,
    Percent,
    BasisPoints,
}

impl Unit {
    fn describe(self) -> &'static str {
        match self {
            Unit::Bare => "unsuffixed",
            Unit::Percent => "percent (%)",
            Unit::BasisPoints => "basis points (bp)",
        }
    }
}

fn parse_rate(cell: &str) -> Option<(f64, Unit)> {
    let lower = cell.to_ascii_lowercase();
    let (num, unit) = if let Some(s) = lower.strip_suffix('%') {
        (s.trim(), Unit::Percent)
    } else if let Some(s) = lower.strip_suffix("bp") {
        (s.trim(), Unit::BasisPoints)
    } else {
        (lower.as_str(), Unit::Bare)
    };
    num.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| (v, unit))
}

fn parse_maturity(header: &str) -> Option<f64> {
    let h = header.trim().to_ascii_lowercase();
    let h = h.strip_suffix('y').unwrap_or(&h);
    h.trim().parse::<f64>().ok().filter(|m| *m > 0.0 && m.is_finite())
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok())
}

pub fn format_maturity(m: f64) -> String {
    if m.fract() == 0.0 && m.abs() < 1e15 {
        format!("{}", m as i64)
    } else {
        format!("{m}")
    }
}

fn is_month_end(d: NaiveDate) -> bool {
    d.succ_opt().is_none_or(|n| n.month() != d.month())
}

/// Calendar-aware year fraction: whole months count as 1/12 each, remaining
/// days as 1/365.25. Month-end to month-end gaps are whole months.
pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    let months = (to.year() - from.year()) * 12 + to.month() as i32 - from.month() as i32;
    let anchor = if months >= 0 {
        from.checked_add_months(Months::new(months as u32))
    } else {
        from.checked_sub_months(Months::new((-months) as u32))
    };
    let residual_days = match anchor {
        Some(_) if is_month_end(from) && is_month_end(to) => 0,
        Some(a) => (to - a).num_days(),
        None => return (to - from).num_days() as f64 / DAYS_PER_YEAR,
    };
    months as f64 / 12.0 + residual_days as f64 / DAYS_PER_YEAR
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn percent_mode_converts_to_decimals() {
        let csv = "date,5,20\n2002-01-01,1.0,2.0\n2002-02-01,1.0,2.0\n2002-03-01,1.0,2.0\n";
        let p = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(p.rates()[0], vec![0.01, 0.02]);
        assert_eq!(p.maturities(), &[5.0, 20.0]);
    }

    #[test]
    fn hole_is_reported_with_date_and_maturity() {
        let csv = "date,5,20\n2005-01-01,1.0,2.0\n2005-02-01,1.0,2.0\n2005-03-01,1.0,\n2005-04-01,1.0,2.0\n";
        let err = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("2005-03, 20.0"), "{err}");
    }

    #[test]
    fn non_monotone_dates_rejected() {
        let csv = "date,5,20\n2005-01-01,1,2\n2005-03-01,1,2\n2005-02-01,1,2\n";
        let err = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("not strictly increasing"), "{err}");
    }

    #[test]
    fn mixed_units_rejected() {
        let csv = "date,5,20\n2005-01-01,1%,2%\n2005-02-01,1%,200bp\n2005-03-01,1%,2%\n";
        let err = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("mixed units"), "{err}");
        let csv = "date,5,20\n2005-01-01,1%,2%\n2005-02-01,1,2\n2005-03-01,1%,2%\n";
        assert!(ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).is_err());
    }

    #[test]
    fn uneven_spacing_rejected() {
        let csv = "date,5,20\n2005-01-01,1,2\n2005-02-01,1,2\n2005-04-15,1,2\n2005-05-01,1,2\n2005-06-01,1,2\n";
        let err = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert!(err.to_string().contains("equally spaced"), "{err}");
    }

    #[test]
    fn monthly_step_over_141_rows() {
        // Oracle: Jan 2002 .. Sep 2013 spans 140 calendar months.
        let start = d(2002, 1, 1);
        let dates: Vec<NaiveDate> = (0..141).map(|i| start.checked_add_months(Months::new(i)).unwrap()).collect();
        assert_eq!(*dates.last().unwrap(), d(2013, 9, 1));
        let months = (2013 - 2002) * 12 + (9 - 1);
        assert_eq!(months, 140);
        let rates = vec![vec![0.02, 0.03]; 141];
        let p = ZeroCurvePanel::new(dates, vec![5.0, 20.0], rates).unwrap();
        let oracle_h = months as f64 / 12.0 / 140.0;
        assert!((p.step() - oracle_h).abs() < 1e-3);
        assert!((p.step() - 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(p.transitions(), 140);
    }

    #[test]
    fn month_end_dates_have_monthly_step() {
        let dates = vec![d(2013, 1, 31), d(2013, 2, 28), d(2013, 3, 31), d(2013, 4, 30)];
        let p = ZeroCurvePanel::new(dates, vec![5.0, 20.0], vec![vec![0.01, 0.02]; 4]).unwrap();
        assert!((p.step() - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn select_pair_orders_and_validates() {
        let csv = "date,5,10,20\n2002-01-01,1,2,3\n2002-02-01,1.5,2.5,3.5\n2002-03-01,1,2,3\n";
        let p = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        let v = p.select_pair(MaturityPair::new(5.0, 20.0).unwrap()).unwrap();
        assert_eq!(v.rows[1], [p.rates()[1][0], p.rates()[1][2]]);
        let v = p.select_pair(MaturityPair::new(10.0, 20.0).unwrap()).unwrap();
        assert_eq!(v.rows[0], [0.02, 0.03]);
        assert!(MaturityPair::new(20.0, 5.0).is_err());
        let err = p.select_pair(MaturityPair::new(7.0, 20.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("available: 5, 10, 20"), "{err}");
    }

    #[test]
    fn yyyy_mm_dates_accepted() {
        let csv = "date,5y,20y\n2002-01,1,2\n2002-02,1,2\n2002-03,1,2\n";
        let p = ZeroCurvePanel::read_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(p.dates()[2], d(2002, 3, 1));
    }
}
