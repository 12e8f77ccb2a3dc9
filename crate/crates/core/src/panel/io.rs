use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use super::{PanelDataset, Schema, Trajectory};
use crate::error::{Error, Result};

struct Row {
    line: usize,
    t: usize,
    a: u8,
    y: Option<f64>,
    x: Vec<f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::InvalidPanel(format!("missing column '{name}'")))
}

fn parse_real(field: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Panel {
        row: line,
        msg: format!("{what} '{field}' is not a number"),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Panel { row: line, msg: format!("{what} '{field}' is not finite") })
    }
}

pub fn load_long_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset> {
    read_long_csv(std::fs::File::open(path)?, schema)
}

/// Parses a long-format panel. Row numbers in errors count data rows from 1
/// (the header is not counted).
pub fn read_long_csv<R: Read>(reader: R, schema: &Schema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, &schema.id)?;
    let t_col = column(&headers, &schema.time)?;
    let a_col = column(&headers, &schema.treatment)?;
    let y_col = column(&headers, &schema.outcome)?;

    let mut cov_cols: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<Row>> = HashMap::new();

    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1;
        let rec = rec.map_err(|e| Error::Panel { row: line, msg: e.to_string() })?;
        let get = |c: usize| rec.get(c).unwrap_or("").trim();
        let id = get(id_col).to_string();
        if id.is_empty() {
            return Err(Error::Panel { row: line, msg: "empty id".into() });
        }
        let t: usize = get(t_col).parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
            Error::Panel {
                row: line,
                msg: format!("time '{}' is not a positive integer", get(t_col)),
            }
        })?;
        let a = match get(a_col) {
            "0" | "0.0" => 0,
            "1" | "1.0" => 1,
            other => {
                return Err(Error::Panel {
                    row: line,
                    msg: format!("treatment value '{other}' is not 0 or 1"),
                })
            }
        };
        let y = match get(y_col) {
            "" | "NA" => None,
            s => Some(parse_real(s, "outcome", line)?),
        };
        if !cov_cols.contains_key(&t) {
            let cols = schema
                .columns_at(t)
                .iter()
                .map(|name| column(&headers, name))
                .collect::<Result<Vec<_>>>()?;
            cov_cols.insert(t, cols);
        }
        let x = cov_cols[&t]
            .iter()
            .zip(schema.columns_at(t))
            .map(|(&c, name)| parse_real(get(c), &format!("covariate {name}"), line))
            .collect::<Result<Vec<_>>>()?;
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        by_id.entry(id).or_default().push(Row { line, t, a, y, x });
    }

    if order.is_empty() {
        return Err(Error::InvalidPanel("no data rows".into()));
    }
    if order.iter().all(|id| id.parse::<i64>().is_ok()) {
        order.sort_by_key(|id| id.parse::<i64>().unwrap());
    } else {
        order.sort();
    }

    let mut horizon: Option<(usize, String)> = None;
    let mut trajectories = Vec::with_capacity(order.len());
    for id in &order {
        let mut rows = by_id.remove(id).unwrap();
        rows.sort_by_key(|r| (r.t, r.line));
        let first_line = rows.iter().map(|r| r.line).min().unwrap();
        for (j, r) in rows.iter().enumerate() {
            if r.t != j + 1 {
                let msg = if j > 0 && rows[j - 1].t == r.t {
                    format!("duplicate time {} for subject {id}", r.t)
                } else {
                    format!("subject {id} skips time {}", j + 1)
                };
                return Err(Error::Panel { row: r.line, msg });
            }
        }
        let t_i = rows.len();
        match &horizon {
            None => horizon = Some((t_i, id.clone())),
            Some((h, other)) if *h != t_i => {
                return Err(Error::Panel {
                    row: first_line,
                    msg: format!("subject {id} has T={t_i} but subject {other} has T={h}"),
                })
            }
            _ => {}
        }
        let last = rows.last().unwrap();
        let outcome = last.y.ok_or_else(|| Error::Panel {
            row: last.line,
            msg: format!("missing outcome on final row of subject {id}"),
        })?;
        if let Some(r) = rows[..t_i - 1].iter().find(|r| r.y.is_some()) {
            return Err(Error::Panel {
                row: r.line,
                msg: format!("outcome given at t={} before the final time", r.t),
            });
        }
        let treatments = rows.iter().map(|r| r.a).collect();
        let covariates = rows.into_iter().map(|r| r.x).collect();
        trajectories.push(Trajectory { covariates, treatments, outcome });
    }

    let t = horizon.unwrap().0;
    let names = (1..=t).map(|s| schema.columns_at(s).to_vec()).collect();
    PanelDataset::with_ids(order, trajectories, Some(names))
}

/// Writes the long format read by [`read_long_csv`] together with the
/// matching schema. Covariate columns not used at a timepoint are left empty.
pub fn write_long_csv(data: &PanelDataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let schema = Schema::for_names(data.covariate_names());
    let mut all: Vec<&String> = Vec::new();
    let mut seen = BTreeSet::new();
    for name in data.covariate_names().iter().flatten() {
        if seen.insert(name) {
            all.push(name);
        }
    }
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["id".to_string(), "t".into(), "a".into(), "y".into()];
    header.extend(all.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let t_max = data.horizon();
    for (i, tr) in data.trajectories().iter().enumerate() {
        for t in 1..=t_max {
            let mut rec = vec![
                data.ids()[i].clone(),
                t.to_string(),
                tr.treatments[t - 1].to_string(),
                if t == t_max { tr.outcome.to_string() } else { String::new() },
            ];
            let names = &data.covariate_names()[t - 1];
            for col in &all {
                match names.iter().position(|n| n == *col) {
                    Some(j) => rec.push(tr.covariates[t - 1][j].to_string()),
                    None => rec.push(String::new()),
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    std::fs::write(schema_path, schema.to_toml())?;
    Ok(())
}

/// One row per subject: `id, x<t>_<name>..., a<t>..., y`. For inspection only.
pub fn write_wide_csv<W: Write>(data: &PanelDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    for t in 1..=data.horizon() {
        for name in &data.covariate_names()[t - 1] {
            header.push(format!("x{t}_{name}"));
        }
        header.push(format!("a{t}"));
    }
    header.push("y".into());
    w.write_record(&header)?;
    for (i, tr) in data.trajectories().iter().enumerate() {
        let mut rec = vec![data.ids()[i].clone()];
        for t in 0..data.horizon() {
            rec.extend(tr.covariates[t].iter().map(|v| v.to_string()));
            rec.push(tr.treatments[t].to_string());
        }
        rec.push(tr.outcome.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
