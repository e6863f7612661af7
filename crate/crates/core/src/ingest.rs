//! Reading and validating long-format household data.
//!
//! One row per unit with columns `household,unit,z,d,y` and an optional
//! discrete covariate `x`. Rows are paired by household key.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::estimators::EstimandError;
use crate::model::{Cell, Statistic};
use crate::moments::{compute_moments, delta_method, HBlock, Scope};

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` must be 0 or 1, got `{value}`")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("household `{group_id}` has {count} rows, expected 2")]
    GroupSizeNot2 { group_id: String, count: usize },
    #[error("row {row}: outcome `{value}` is not finite")]
    NonFiniteOutcome { row: usize, value: String },
    #[error("row {row}: cannot parse column `{column}` value `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("household `{group_id}` lists unit `{unit}` twice")]
    DuplicateUnit { group_id: String, unit: String },
    #[error("row {row}: covariate column present but value missing")]
    MissingCovariate { row: usize },
    #[error("household `{group_id}` has covariate values `{a}` and `{b}`")]
    StratumMismatch { group_id: String, a: String, b: String },
    #[error("dataset has no households")]
    EmptyDataset,
    #[error("malformed table: {0}")]
    Csv(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            IngestError::Io(e.to_string())
        } else {
            IngestError::Csv(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitObs {
    pub y: f64,
    pub d: bool,
    pub z: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdRecord {
    pub group_id: String,
    pub unit_labels: [String; 2],
    pub units: [UnitObs; 2],
    pub x: Option<String>,
}

impl HouseholdRecord {
    /// Record with default unit labels "1" and "2".
    pub fn new(group_id: &str, units: [UnitObs; 2], x: Option<String>) -> Self {
        Self {
            group_id: group_id.to_string(),
            unit_labels: ["1".into(), "2".into()],
            units,
            x,
        }
    }

    /// Same household with the two units' roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            group_id: self.group_id.clone(),
            unit_labels: [self.unit_labels[1].clone(), self.unit_labels[0].clone()],
            units: [self.units[1], self.units[0]],
            x: self.x.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<HouseholdRecord>,
    strata: BTreeSet<String>,
}

impl Dataset {
    /// Validate records. Order is preserved; [`load`] sorts by key.
    pub fn new(records: Vec<HouseholdRecord>) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let mut strata = BTreeSet::new();
        let has_x = records[0].x.is_some();
        for (i, r) in records.iter().enumerate() {
            for u in &r.units {
                if !u.y.is_finite() {
                    return Err(IngestError::NonFiniteOutcome {
                        row: 2 * i + 1,
                        value: u.y.to_string(),
                    });
                }
            }
            match (&r.x, has_x) {
                (Some(x), true) => {
                    strata.insert(x.clone());
                }
                (None, false) => {}
                _ => return Err(IngestError::MissingCovariate { row: 2 * i + 1 }),
            }
        }
        Ok(Self { records, strata })
    }

    pub fn records(&self) -> &[HouseholdRecord] {
        &self.records
    }

    pub fn n_groups(&self) -> usize {
        self.records.len()
    }

    pub fn strata(&self) -> &BTreeSet<String> {
        &self.strata
    }

    pub fn has_covariate(&self) -> bool {
        !self.strata.is_empty()
    }

    /// Unit-perspective counts of `(Z_own, Z_peer)` in [`Cell::ALL`] order;
    /// sums to `2G`.
    pub fn cell_counts(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for r in &self.records {
            out[Cell::new(r.units[0].z, r.units[1].z).index()] += 1;
            out[Cell::new(r.units[1].z, r.units[0].z).index()] += 1;
        }
        out
    }

    /// Household counts keyed by (unit 1, unit 2) assignment; sums to `G`.
    pub fn group_cell_counts(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for r in &self.records {
            out[Cell::new(r.units[0].z, r.units[1].z).index()] += 1;
        }
        out
    }

    /// Households per stratum.
    pub fn stratum_sizes(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let Some(x) = &r.x {
                *out.entry(x.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Units with `d = 1` while unassigned.
    pub fn osn_hard_count(&self) -> usize {
        self.records
            .iter()
            .flat_map(|r| r.units.iter())
            .filter(|u| u.d && !u.z)
            .count()
    }

    /// Map every outcome through `a + b * y`.
    pub fn map_outcome(&self, a: f64, b: f64) -> Dataset {
        let mut out = self.clone();
        for r in &mut out.records {
            for u in &mut r.units {
                u.y = a + b * u.y;
            }
        }
        out
    }

    /// Keep only records satisfying the predicate.
    pub fn filter<F: Fn(&HouseholdRecord) -> bool>(&self, f: F) -> Result<Dataset, IngestError> {
        Dataset::new(self.records.iter().filter(|r| f(r)).cloned().collect())
    }
}

fn parse_bit(row: usize, column: &str, raw: &str) -> Result<bool, IngestError> {
    let bad = || IngestError::NonBinaryValue {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    };
    let v: f64 = raw.trim().parse().map_err(|_| bad())?;
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(bad())
    }
}

struct RawUnit {
    row: usize,
    unit: String,
    obs: UnitObs,
    x: Option<String>,
}

/// Parse a table from any reader.
pub fn load_from_reader<R: Read>(reader: R) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let (c_hh, c_unit, c_z, c_d, c_y) = (
        need("household")?,
        need("unit")?,
        need("z")?,
        need("d")?,
        need("y")?,
    );
    let c_x = col("x");

    let mut groups: BTreeMap<String, Vec<RawUnit>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // 1-based data row, header excluded.
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let y_raw = field(c_y);
        let y: f64 = y_raw.parse().map_err(|_| IngestError::Parse {
            row,
            column: "y".into(),
            value: y_raw.to_string(),
        })?;
        if !y.is_finite() {
            return Err(IngestError::NonFiniteOutcome {
                row,
                value: y_raw.to_string(),
            });
        }
        let obs = UnitObs {
            y,
            d: parse_bit(row, "d", field(c_d))?,
            z: parse_bit(row, "z", field(c_z))?,
        };
        let x = match c_x {
            Some(c) => {
                let v = field(c);
                if v.is_empty() {
                    return Err(IngestError::MissingCovariate { row });
                }
                Some(v.to_string())
            }
            None => None,
        };
        groups.entry(field(c_hh).to_string()).or_default().push(RawUnit {
            row,
            unit: field(c_unit).to_string(),
            obs,
            x,
        });
    }

    let mut records = Vec::with_capacity(groups.len());
    for (group_id, mut units) in groups {
        if units.len() != 2 {
            return Err(IngestError::GroupSizeNot2 {
                group_id,
                count: units.len(),
            });
        }
        units.sort_by(|a, b| a.unit.cmp(&b.unit).then(a.row.cmp(&b.row)));
        if units[0].unit == units[1].unit {
            return Err(IngestError::DuplicateUnit {
                group_id,
                unit: units[0].unit.clone(),
            });
        }
        if units[0].x != units[1].x {
            return Err(IngestError::StratumMismatch {
                group_id,
                a: units[0].x.clone().unwrap_or_default(),
                b: units[1].x.clone().unwrap_or_default(),
            });
        }
        let [a, b]: [RawUnit; 2] = units.try_into().ok().expect("two units");
        records.push(HouseholdRecord {
            group_id,
            unit_labels: [a.unit, b.unit],
            units: [a.obs, b.obs],
            x: a.x,
        });
    }
    Dataset::new(records)
}

/// Load a comma-separated file.
pub fn load(path: &Path) -> Result<Dataset, IngestError> {
    let f = std::fs::File::open(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    load_from_reader(std::io::BufReader::new(f))
}

/// Write in the canonical schema, rows sorted by (household, unit).
pub fn write_to<W: Write>(ds: &Dataset, writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let has_x = ds.has_covariate();
    let mut header = vec!["household", "unit", "z", "d", "y"];
    if has_x {
        header.push("x");
    }
    w.write_record(&header)?;
    let mut order: Vec<&HouseholdRecord> = ds.records.iter().collect();
    order.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    for r in order {
        let mut idx = [0usize, 1];
        if r.unit_labels[1] < r.unit_labels[0] {
            idx = [1, 0];
        }
        for k in idx {
            let u = &r.units[k];
            let mut fields = vec![
                r.group_id.clone(),
                r.unit_labels[k].clone(),
                (u.z as u8).to_string(),
                (u.d as u8).to_string(),
                // Shortest representation that round-trips exactly.
                format!("{}", u.y),
            ];
            if has_x {
                fields.push(r.x.clone().unwrap_or_default());
            }
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write(ds: &Dataset, path: &Path) -> Result<(), IngestError> {
    let f = std::fs::File::create(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    write_to(ds, std::io::BufWriter::new(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsnVerdict {
    Consistent,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsnCheck {
    pub p_at: f64,
    pub p_at_se: f64,
    pub p_sc: f64,
    pub p_sc_se: f64,
    /// Units observed with `d = 1` and `z = 0`.
    pub hard_count: usize,
    pub verdict: OsnVerdict,
}

/// Testable implications of one-sided noncompliance.
pub fn check_osn(ds: &Dataset) -> Result<OsnCheck, EstimandError> {
    let (mu, sigma) = compute_moments(ds, HBlock::Full8);
    let l = &mu.layout;
    let d00 = l.cond_mean(Statistic::Di, Cell::C00, Scope::Pooled)?;
    let d01 = l.cond_mean(Statistic::Di, Cell::C01, Scope::Pooled)?;
    let at = delta_method(&mu, &sigma, &d00, "p_at", "E[D|Z=(0,0)]", 0.95)?;
    let sc = delta_method(&mu, &sigma, &(d01 - d00), "p_sc", "E[D|Z=(0,1)]-E[D|Z=(0,0)]", 0.95)?;
    let hard_count = ds.osn_hard_count();
    Ok(OsnCheck {
        p_at: at.value,
        p_at_se: at.std_error,
        p_sc: sc.value,
        p_sc_se: sc.std_error,
        hard_count,
        verdict: if hard_count == 0 {
            OsnVerdict::Consistent
        } else {
            OsnVerdict::Violated
        },
    })
}
