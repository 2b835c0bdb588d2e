use std::io::{Read, Write};
use std::str::FromStr;

use super::schema::FeatureSchema;
use super::OUTCOME_COLUMN;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Patients × features with a binary one-year mortality outcome.
///
/// A `None` cell is missing. Outcomes are never missing.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortTable<T> {
    schema: FeatureSchema,
    rows: Vec<Vec<Option<T>>>,
    outcomes: Vec<bool>,
}

impl<T: Scalar> CohortTable<T> {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<Option<T>>>, outcomes: Vec<bool>) -> Result<Self> {
        if rows.len() != outcomes.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} outcomes",
                rows.len(),
                outcomes.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} cells, schema has {}",
                    row.len(),
                    schema.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    let f = schema.get(j);
                    if !f.admits(v.as_f64()) {
                        return Err(Error::InvalidInput(format!(
                            "row {i}: value {v} outside range of `{}`",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(CohortTable { schema, rows, outcomes })
    }

    /// Builds a fully observed table.
    pub fn from_dense(schema: FeatureSchema, rows: Vec<Vec<T>>, outcomes: Vec<bool>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::new(schema, rows, outcomes)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Option<T>>] {
        &self.rows
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.rows.len() * self.schema.len()
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().flatten().all(Option::is_some)
    }

    pub fn prevalence(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|&&o| o).count() as f64 / self.outcomes.len() as f64
    }

    /// Dense feature matrix; fails if any cell is missing.
    pub fn dense(&self) -> Result<Vec<Vec<T>>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, c)| {
                        c.ok_or_else(|| {
                            Error::InvalidInput(format!(
                                "cohort not imputed: row {i} `{}` missing",
                                self.schema.get(j).name
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        CohortTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
        }
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<Option<T>>] {
        &mut self.rows
    }

    /// Writes the CSV form: header of feature names then `death_1yr`; missing cells empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = self.schema.names().chain([OUTCOME_COLUMN]).collect();
        w.write_record(&header).map_err(csv_err)?;
        for (row, &died) in self.rows.iter().zip(&self.outcomes) {
            let mut rec: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            rec.push(if died { "1" } else { "0" }.to_owned());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads the CSV form against a schema. Header names must match schema order.
    pub fn read_csv<R: Read>(schema: FeatureSchema, input: R) -> Result<Self>
    where
        T: FromStr,
    {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let expected: Vec<&str> = schema.names().chain([OUTCOME_COLUMN]).collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse("CSV header does not match schema".into()));
        }
        let mut rows = Vec::new();
        let mut outcomes = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let mut row = Vec::with_capacity(schema.len());
            for j in 0..schema.len() {
                let field = rec.get(j).unwrap_or("");
                row.push(if field.is_empty() {
                    None
                } else {
                    Some(field.parse::<T>().map_err(|_| {
                        Error::Parse(format!("line {}: bad value `{field}`", line + 2))
                    })?)
                });
            }
            let died = match rec.get(schema.len()) {
                Some("1") => true,
                Some("0") => false,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: bad outcome {other:?}",
                        line + 2
                    )))
                }
            };
            rows.push(row);
            outcomes.push(died);
        }
        Self::new(schema, rows, outcomes)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
