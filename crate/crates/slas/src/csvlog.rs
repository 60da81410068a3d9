//! CSV form of episode logs and Monte Carlo tables.
//!
//! `episode.csv` has one row per simulator tick:
//!
//! | column | meaning |
//! |---|---|
//! | `time_s` | simulation time |
//! | `ego_s_m`, `ego_v_mps`, `ego_lateral_m` | ego arc length, speed, lateral offset from the lane 0 centre |
//! | `ego_lane` | lane indicator |
//! | `target_lane`, `ref_speed_mps` | command in force |
//! | `planner_tick` | `true` on ticks where the policy was consulted |
//! | `solve_status` ... `fallback` | solver diagnostics, empty when not solved this tick |
//! | `vehicles` | `id:s:v:lane` entries joined by `;` |
//!
//! Floats are written with the shortest representation that reads back to
//! the same value, so parsing an emitted file reproduces the log exactly.

use std::io::{Read, Write};

use slas_core::sim::{Sample, SolverSample, TableRow, VehicleSample, TABLE_COLUMNS};
use slas_core::SolveStatus;

pub const EPISODE_HEADER: [&str; 17] = [
    "time_s",
    "ego_s_m",
    "ego_v_mps",
    "ego_lateral_m",
    "ego_lane",
    "target_lane",
    "ref_speed_mps",
    "planner_tick",
    "solve_status",
    "objective",
    "solve_time_s",
    "first_incumbent_s",
    "nodes",
    "lazy_cuts",
    "hint_accepted",
    "fallback",
    "vehicles",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Field { row: usize, column: &'static str, value: String },
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn vehicles_field(vs: &[VehicleSample]) -> String {
    vs.iter()
        .map(|v| format!("{}:{}:{}:{}", v.id, v.s, v.v, v.lane))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_episode<W: Write>(out: W, samples: &[Sample]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_HEADER)?;
    for s in samples {
        let sv = s.solver.as_ref();
        w.write_record([
            s.time.to_string(),
            s.ego_s.to_string(),
            s.ego_v.to_string(),
            s.ego_lateral.to_string(),
            s.ego_lane.to_string(),
            s.target_lane.to_string(),
            s.ref_speed.to_string(),
            s.planner_tick.to_string(),
            opt(sv.map(|x| x.status.name())),
            opt(sv.map(|x| x.objective)),
            opt(sv.map(|x| x.solve_time)),
            opt(sv.and_then(|x| x.first_incumbent_time)),
            opt(sv.map(|x| x.nodes)),
            opt(sv.map(|x| x.lazy_cuts)),
            opt(sv.map(|x| x.hint_accepted)),
            opt(sv.map(|x| x.fallback)),
            vehicles_field(&s.vehicles),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

struct Row<'a> {
    index: usize,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn raw(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn get<T: std::str::FromStr>(&self, col: usize) -> Result<T, CsvError> {
        let raw = self.raw(col);
        raw.parse().map_err(|_| CsvError::Field {
            row: self.index,
            column: EPISODE_HEADER[col],
            value: raw.to_string(),
        })
    }

    fn get_opt<T: std::str::FromStr>(&self, col: usize) -> Result<Option<T>, CsvError> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.get(col).map(Some)
        }
    }

    fn bad(&self, col: usize) -> CsvError {
        CsvError::Field {
            row: self.index,
            column: EPISODE_HEADER[col],
            value: self.raw(col).to_string(),
        }
    }
}

fn parse_vehicles(row: &Row, col: usize) -> Result<Vec<VehicleSample>, CsvError> {
    let raw = row.raw(col);
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(';')
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').collect();
            let [id, s, v, lane] = parts[..] else {
                return Err(row.bad(col));
            };
            Ok(VehicleSample {
                id: id.parse().map_err(|_| row.bad(col))?,
                s: s.parse().map_err(|_| row.bad(col))?,
                v: v.parse().map_err(|_| row.bad(col))?,
                lane: lane.parse().map_err(|_| row.bad(col))?,
            })
        })
        .collect()
}

pub fn read_episode<R: Read>(input: R) -> Result<Vec<Sample>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(EPISODE_HEADER) {
        return Err(CsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut samples = Vec::new();
    for (index, record) in r.records().enumerate() {
        let record = record?;
        let row = Row { index, record: &record };
        let solver = match row.get_opt::<String>(8)? {
            None => None,
            Some(name) => Some(SolverSample {
                status: SolveStatus::from_name(&name).ok_or_else(|| row.bad(8))?,
                objective: row.get(9)?,
                solve_time: row.get(10)?,
                first_incumbent_time: row.get_opt(11)?,
                nodes: row.get(12)?,
                lazy_cuts: row.get(13)?,
                hint_accepted: row.get(14)?,
                fallback: row.get(15)?,
            }),
        };
        samples.push(Sample {
            time: row.get(0)?,
            ego_s: row.get(1)?,
            ego_v: row.get(2)?,
            ego_lateral: row.get(3)?,
            ego_lane: row.get(4)?,
            target_lane: row.get(5)?,
            ref_speed: row.get(6)?,
            planner_tick: row.get(7)?,
            solver,
            vehicles: parse_vehicles(&row, 16)?,
        });
    }
    Ok(samples)
}

/// `montecarlo.csv` header: policy, run counts, then a mean and a std
/// column per reported figure.
pub fn table_header() -> Vec<String> {
    let mut h = vec!["policy".to_string(), "runs".to_string(), "excluded".to_string()];
    let names = TABLE_COLUMNS.iter().copied().chain(["long_jerk", "mean_headway"]);
    for name in names {
        h.push(format!("{name}_mean"));
        h.push(format!("{name}_std"));
    }
    h.push("min_distance_to_closest".to_string());
    h
}

pub fn write_table<W: Write>(out: W, rows: &[(String, TableRow)]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header())?;
    for (policy, row) in rows {
        let mut rec = vec![policy.clone(), row.runs.to_string(), row.excluded.to_string()];
        for stat in row.columns.iter().chain([&row.long_jerk, &row.mean_headway]) {
            rec.push(stat.mean.to_string());
            rec.push(stat.std.to_string());
        }
        rec.push(row.min_distance_to_closest.to_string());
        w.write_record(rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Vec<(String, TableRow)>, CsvError> {
    use slas_core::sim::Stat;
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let expected = table_header();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for (index, record) in r.records().enumerate() {
        let record = record?;
        let num = |col: usize| -> Result<f64, CsvError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse().map_err(|_| CsvError::Field {
                row: index,
                column: "table",
                value: raw.to_string(),
            })
        };
        let stat = |col: usize| -> Result<Stat, CsvError> {
            Ok(Stat {
                mean: num(col)?,
                std: num(col + 1)?,
            })
        };
        let mut columns = [Stat::default(); 7];
        for (c, slot) in columns.iter_mut().enumerate() {
            *slot = stat(3 + 2 * c)?;
        }
        rows.push((
            record.get(0).unwrap_or("").to_string(),
            TableRow {
                runs: num(1)? as usize,
                excluded: num(2)? as usize,
                columns,
                long_jerk: stat(17)?,
                mean_headway: stat(19)?,
                min_distance_to_closest: num(21)?,
            },
        ));
    }
    Ok(rows)
}
