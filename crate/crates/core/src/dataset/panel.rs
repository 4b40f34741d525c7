//! Panel dataset: units × outcome periods plus static covariates.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// An outcome period. Periods are ordered `pre1 < pre2 < pre3 < post`;
/// which column maps to which period is fixed by the schema, not parsed
/// from column names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    #[serde(rename = "pre1")]
    Pre1,
    #[serde(rename = "pre2")]
    Pre2,
    #[serde(rename = "pre3")]
    Pre3,
    #[serde(rename = "post")]
    Post,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Period::Pre1 => "pre1",
            Period::Pre2 => "pre2",
            Period::Pre3 => "pre3",
            Period::Post => "post",
        };
        f.write_str(s)
    }
}

/// Time-varying covariates: one n × J matrix per available period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeVarying {
    /// Logical variable names (length J).
    pub names: Vec<String>,
    /// Parallel to the panel's period list.
    pub per_period: Vec<Matrix>,
}

/// Units × periods outcomes plus static covariates. Immutable after
/// construction; safe to share across parallel workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub unit_ids: Vec<String>,
    /// n × T outcome matrix, columns parallel to `periods`.
    pub outcomes: Matrix,
    /// Chronologically ordered period labels.
    pub periods: Vec<Period>,
    /// n × K static covariates.
    pub covariates: Matrix,
    pub covariate_names: Vec<String>,
    pub time_varying: Option<TimeVarying>,
}

impl PanelDataset {
    pub fn new(
        unit_ids: Vec<String>,
        outcomes: Matrix,
        periods: Vec<Period>,
        covariates: Matrix,
        covariate_names: Vec<String>,
        time_varying: Option<TimeVarying>,
    ) -> Result<Self> {
        let panel = Self {
            unit_ids,
            outcomes,
            periods,
            covariates,
            covariate_names,
            time_varying,
        };
        panel.validate()?;
        Ok(panel)
    }

    fn validate(&self) -> Result<()> {
        let n = self.unit_ids.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if self.outcomes.n_rows() != n || self.outcomes.n_cols() != self.periods.len() {
            return Err(Error::Internal("outcome matrix shape mismatch".into()));
        }
        if self.covariates.n_rows() != n {
            return Err(Error::Internal("covariate matrix shape mismatch".into()));
        }
        if self.covariates.n_cols() != self.covariate_names.len() {
            return Err(Error::Internal(
                "covariate column count does not match covariate_names".into(),
            ));
        }
        if self.periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadSchema("period labels must be strictly ordered".into()));
        }
        if self.periods.is_empty() && self.covariates.n_cols() == 0 {
            return Err(Error::BadSchema(
                "panel needs at least one outcome period or covariate".into(),
            ));
        }
        if let Some(tv) = &self.time_varying {
            if tv.per_period.len() != self.periods.len() {
                return Err(Error::Internal(
                    "time-varying matrices must cover every period".into(),
                ));
            }
            for m in &tv.per_period {
                if m.n_rows() != n || m.n_cols() != tv.names.len() {
                    return Err(Error::Internal("time-varying matrix shape mismatch".into()));
                }
            }
        }
        let all_finite = self.outcomes.data().iter().all(|v| v.is_finite())
            && self.covariates.data().iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Internal("non-finite value in panel".into()));
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_cols()
    }

    pub fn n_pre_periods(&self) -> usize {
        self.periods.iter().filter(|p| **p != Period::Post).count()
    }

    pub fn has_period(&self, p: Period) -> bool {
        self.periods.contains(&p)
    }

    fn period_index(&self, p: Period) -> Result<usize> {
        self.periods
            .iter()
            .position(|q| *q == p)
            .ok_or_else(|| Error::BadSchema(format!("panel has no `{p}` period")))
    }

    /// Outcome column for a period.
    pub fn outcome(&self, p: Period) -> Result<Vec<f64>> {
        Ok(self.outcomes.column(self.period_index(p)?))
    }

    /// Time-varying covariate matrix for a period, if present.
    pub fn time_varying_at(&self, p: Period) -> Result<Option<&Matrix>> {
        match &self.time_varying {
            None => Ok(None),
            Some(tv) => Ok(Some(&tv.per_period[self.period_index(p)?])),
        }
    }

    /// A new panel containing only the given units, in the given order.
    pub fn subset(&self, idx: &[usize]) -> PanelDataset {
        PanelDataset {
            unit_ids: idx.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            outcomes: self.outcomes.rows_subset(idx),
            periods: self.periods.clone(),
            covariates: self.covariates.rows_subset(idx),
            covariate_names: self.covariate_names.clone(),
            time_varying: self.time_varying.as_ref().map(|tv| TimeVarying {
                names: tv.names.clone(),
                per_period: tv.per_period.iter().map(|m| m.rows_subset(idx)).collect(),
            }),
        }
    }

    /// A view of the panel with one period's outcomes removed. The placebo
    /// harness uses this to withhold the evaluation period from design
    /// procedures.
    pub fn without_period(&self, p: Period) -> Result<PanelDataset> {
        let drop = self.period_index(p)?;
        let keep: Vec<usize> = (0..self.periods.len()).filter(|&j| j != drop).collect();
        Ok(PanelDataset {
            unit_ids: self.unit_ids.clone(),
            outcomes: self.outcomes.columns_subset(&keep),
            periods: keep.iter().map(|&j| self.periods[j]).collect(),
            covariates: self.covariates.clone(),
            covariate_names: self.covariate_names.clone(),
            time_varying: self.time_varying.as_ref().map(|tv| TimeVarying {
                names: tv.names.clone(),
                per_period: keep.iter().map(|&j| tv.per_period[j].clone()).collect(),
            }),
        })
    }

    /// Stable content hash, used to stamp reports.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for id in &self.unit_ids {
            eat(id.as_bytes());
        }
        for v in self.outcomes.data() {
            eat(&v.to_le_bytes());
        }
        for v in self.covariates.data() {
            eat(&v.to_le_bytes());
        }
        h
    }
}

/// Column-role mapping for [`load_panel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    /// Column holding the opaque unit identifier.
    pub unit_id: String,
    /// Absent only for covariate-only panels (the zero-pre fallback).
    #[serde(default)]
    pub pre1: Option<String>,
    #[serde(default)]
    pub pre2: Option<String>,
    #[serde(default)]
    pub pre3: Option<String>,
    #[serde(default)]
    pub post: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub time_varying: Option<TimeVaryingSchema>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeVaryingSchema {
    /// Logical variable names, length J.
    pub names: Vec<String>,
    /// Column names per period, each of length J.
    pub pre1: Vec<String>,
    #[serde(default)]
    pub pre2: Option<Vec<String>>,
    #[serde(default)]
    pub pre3: Option<Vec<String>>,
    #[serde(default)]
    pub post: Option<Vec<String>>,
}

impl PanelSchema {
    fn period_columns(&self) -> Result<Vec<(Period, String)>> {
        if self.pre1.is_none() && (self.pre2.is_some() || self.pre3.is_some() || self.post.is_some()) {
            return Err(Error::BadSchema("later periods given without pre1".into()));
        }
        if self.pre2.is_none() && self.pre3.is_some() {
            return Err(Error::BadSchema("pre3 given without pre2".into()));
        }
        let mut out = Vec::new();
        if let Some(c) = &self.pre1 {
            out.push((Period::Pre1, c.clone()));
        }
        if let Some(c) = &self.pre2 {
            out.push((Period::Pre2, c.clone()));
        }
        if let Some(c) = &self.pre3 {
            out.push((Period::Pre3, c.clone()));
        }
        if let Some(c) = &self.post {
            out.push((Period::Post, c.clone()));
        }
        Ok(out)
    }

    fn time_varying_columns(&self, periods: &[Period]) -> Result<Option<(Vec<String>, Vec<Vec<String>>)>> {
        let Some(tv) = &self.time_varying else {
            return Ok(None);
        };
        let j = tv.names.len();
        if j == 0 {
            return Err(Error::BadSchema("time_varying.names is empty".into()));
        }
        let mut per_period = Vec::new();
        for p in periods {
            let cols = match p {
                Period::Pre1 => Some(&tv.pre1),
                Period::Pre2 => tv.pre2.as_ref(),
                Period::Pre3 => tv.pre3.as_ref(),
                Period::Post => tv.post.as_ref(),
            };
            let cols = cols.ok_or_else(|| {
                Error::BadSchema(format!("time_varying columns missing for period `{p}`"))
            })?;
            if cols.len() != j {
                return Err(Error::BadSchema(format!(
                    "time_varying columns for `{p}` must have length {j}"
                )));
            }
            per_period.push(cols.clone());
        }
        Ok(Some((tv.names.clone(), per_period)))
    }
}

/// Load and validate a panel from a CSV file (header row required, UTF-8,
/// `.` decimal separator). Rows with a missing required cell are rejected
/// with their row numbers reported; no imputation.
pub fn load_panel(path: &Path, schema: &PanelSchema) -> Result<PanelDataset> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaMismatch(name.to_owned()))
    };

    let unit_col = col(&schema.unit_id)?;
    let period_cols = schema.period_columns()?;
    let period_idx: Vec<usize> = period_cols
        .iter()
        .map(|(_, c)| col(c))
        .collect::<Result<_>>()?;
    let cov_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let periods: Vec<Period> = period_cols.iter().map(|(p, _)| *p).collect();
    let tv_cols = schema.time_varying_columns(&periods)?;
    let tv_idx: Option<Vec<Vec<usize>>> = match &tv_cols {
        None => None,
        Some((_, per_period)) => Some(
            per_period
                .iter()
                .map(|cols| cols.iter().map(|c| col(c)).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
        ),
    };

    let mut unit_ids = Vec::new();
    let mut outcome_rows: Vec<Vec<f64>> = Vec::new();
    let mut cov_rows: Vec<Vec<f64>> = Vec::new();
    let mut tv_rows: Vec<Vec<Vec<f64>>> = Vec::new(); // per period, per row
    if let Some(idx) = &tv_idx {
        tv_rows = vec![Vec::new(); idx.len()];
    }
    let mut missing_rows: Vec<usize> = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_no + 1; // 1-based data row, header excluded
        let mut row_missing = false;
        let mut parse = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("").trim();
            if raw.is_empty() {
                row_missing = true;
                return Ok(f64::NAN);
            }
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row: line,
                column: headers[j].clone(),
                value: raw.to_owned(),
            })
        };

        let mut orow = Vec::with_capacity(period_idx.len());
        for &j in &period_idx {
            orow.push(parse(j)?);
        }
        let mut crow = Vec::with_capacity(cov_idx.len());
        for &j in &cov_idx {
            crow.push(parse(j)?);
        }
        let mut trow: Vec<Vec<f64>> = Vec::new();
        if let Some(idx) = &tv_idx {
            for cols in idx {
                let mut vals = Vec::with_capacity(cols.len());
                for &j in cols {
                    vals.push(parse(j)?);
                }
                trow.push(vals);
            }
        }
        let id = record.get(unit_col).unwrap_or("").trim().to_owned();
        if id.is_empty() {
            row_missing = true;
        }
        if row_missing {
            missing_rows.push(line);
            continue;
        }
        unit_ids.push(id);
        outcome_rows.push(orow);
        cov_rows.push(crow);
        for (t, vals) in trow.into_iter().enumerate() {
            tv_rows[t].push(vals);
        }
    }

    if !missing_rows.is_empty() {
        return Err(Error::MissingData { rows: missing_rows });
    }
    if unit_ids.is_empty() {
        return Err(Error::EmptyInput);
    }

    let n = unit_ids.len();
    let outcomes = Matrix::from_rows(&outcome_rows);
    let covariates = if cov_idx.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_rows(&cov_rows)
    };
    let time_varying = tv_cols.map(|(names, _)| TimeVarying {
        names,
        per_period: tv_rows.iter().map(|rows| Matrix::from_rows(rows)).collect(),
    });

    PanelDataset::new(
        unit_ids,
        outcomes,
        periods,
        covariates,
        schema.covariates.clone(),
        time_varying,
    )
}
