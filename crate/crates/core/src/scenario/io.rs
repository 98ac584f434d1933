use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Scenario, WeightSource};
use crate::error::{Error, Result};
use crate::model::{CesSpec, TimeGrid, UserKind, UserProfile};
use crate::network::{Feeder, FeederSpec};
use crate::optimizer::WeightSpec;

/// Paths of the files making up a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub feeder: PathBuf,
    pub users: PathBuf,
    pub demand: PathBuf,
    pub pv: PathBuf,
    pub reactive: Option<PathBuf>,
    pub prices: PathBuf,
    pub ces: Option<PathBuf>,
    pub run: Option<PathBuf>,
}

impl ScenarioFiles {
    /// Standard file names inside `dir`; optional files are picked up only
    /// when present.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let optional = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        Self {
            feeder: dir.join("feeder.json"),
            users: dir.join("users.csv"),
            demand: dir.join("demand.csv"),
            pv: dir.join("pv.csv"),
            reactive: optional("reactive.csv"),
            prices: dir.join("prices.csv"),
            ces: optional("ces.json"),
            run: optional("run.json"),
        }
    }
}

/// Optional run settings stored next to the scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_t_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairwise: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Deserialize, Serialize)]
struct UserRow {
    user_id: String,
    bus: usize,
    kind: UserKind,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, None, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::load(path, Some(e.line()), e.to_string()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::load(path, None, e.to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize);
    Error::load(path, row, e.to_string())
}

/// Wide time-series table: a time-index column followed by named columns.
struct Table {
    columns: Vec<String>,
    /// Column-major values.
    values: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("t") {
        return Err(Error::load(
            path,
            Some(1),
            "first column must be the interval index `t`",
        ));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut values = vec![Vec::new(); columns.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let t: usize = rec[0].parse().map_err(|_| {
            Error::load(
                path,
                Some(line),
                format!("interval index `{}` is not an integer", &rec[0]),
            )
        })?;
        if t != i {
            return Err(Error::load(
                path,
                Some(line),
                format!("expected interval {i}, found {t}"),
            ));
        }
        for (c, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::load(
                    path,
                    Some(line),
                    format!("`{field}` in column {} is not a number", columns[c]),
                )
            })?;
            values[c].push(v);
        }
    }
    Ok(Table { columns, values })
}

impl Table {
    fn rows(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Columns by user id, rejecting unknown ids and wrong lengths.
    fn by_user(self, path: &Path, known: &HashMap<String, usize>, h: usize) -> Result<HashMap<String, Vec<f64>>> {
        if self.rows() != h && !self.columns.is_empty() {
            return Err(Error::load(
                path,
                None,
                format!("length mismatch: {} intervals, expected {h}", self.rows()),
            ));
        }
        let mut out = HashMap::new();
        for (name, col) in self.columns.into_iter().zip(self.values) {
            if !known.contains_key(&name) {
                return Err(Error::load(path, Some(1), format!("column `{name}` names no user")));
            }
            if out.insert(name.clone(), col).is_some() {
                return Err(Error::load(path, Some(1), format!("duplicate column `{name}`")));
            }
        }
        Ok(out)
    }
}

/// Reads and validates a scenario. Errors name the offending file and, where
/// known, the line.
pub fn load_scenario(files: &ScenarioFiles) -> Result<Scenario> {
    let feeder_spec: FeederSpec = read_json(&files.feeder)?;
    let feeder = Feeder::new(feeder_spec.clone()).map_err(|e| Error::load(&files.feeder, None, e.to_string()))?;

    let mut rdr = csv_reader(&files.users)?;
    let mut rows: Vec<UserRow> = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: UserRow = rec.map_err(|e| csv_error(&files.users, e))?;
        if row.bus == 0 || !feeder.contains_bus(row.bus) {
            return Err(Error::load(
                &files.users,
                Some(i + 2),
                format!("unknown bus {} for user {}", row.bus, row.user_id),
            ));
        }
        rows.push(row);
    }
    let known: HashMap<String, usize> = rows.iter().enumerate().map(|(i, r)| (r.user_id.clone(), i)).collect();
    if known.len() != rows.len() {
        return Err(Error::load(&files.users, None, "duplicate user id"));
    }

    let demand_table = read_table(&files.demand)?;
    let h = demand_table.rows();
    let run: RunFile = match &files.run {
        Some(p) => read_json(p)?,
        None => RunFile::default(),
    };
    let run_path = files.run.clone().unwrap_or_default();
    let grid = match run.delta_t_h {
        Some(dt) => TimeGrid::new(h, dt),
        None => TimeGrid::full_day(h),
    }
    .map_err(|e| Error::load(&files.demand, None, e.to_string()))?;
    let mut demand = demand_table.by_user(&files.demand, &known, h)?;
    let mut pv = read_table(&files.pv)?.by_user(&files.pv, &known, h)?;
    let mut reactive = match &files.reactive {
        Some(p) => read_table(p)?.by_user(p, &known, h)?,
        None => HashMap::new(),
    };

    let mut users = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let d = demand
            .remove(&row.user_id)
            .ok_or_else(|| Error::load(&files.demand, None, format!("missing column for user {}", row.user_id)))?;
        let g = match pv.remove(&row.user_id) {
            Some(g) => g,
            None if row.kind == UserKind::NonParticipant => vec![0.0; h],
            None => {
                return Err(Error::load(
                    &files.pv,
                    None,
                    format!("missing column for participant {}", row.user_id),
                ))
            }
        };
        let q = reactive.remove(&row.user_id);
        let user = UserProfile::new(row.user_id, row.bus, row.kind, d, g, q)
            .map_err(|e| Error::load(&files.users, Some(i + 2), e.to_string()))?;
        users.push(user);
    }

    let mut rdr = csv_reader(&files.prices)?;
    let mut prices = Vec::with_capacity(h);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&files.prices, e))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::load(&files.prices, Some(i + 2), "expected `t,price_per_kwh`"))?;
        prices.push(v);
    }
    if prices.len() != h {
        return Err(Error::load(
            &files.prices,
            None,
            format!("length mismatch: {} intervals, expected {h}", prices.len()),
        ));
    }

    let ces = match &files.ces {
        Some(p) => {
            let c: CesSpec = read_json(p)?;
            c.validate().map_err(|e| Error::load(p, None, e.to_string()))?;
            if c.bus == 0 || !feeder.contains_bus(c.bus) {
                return Err(Error::load(p, None, format!("unknown bus {} for the storage", c.bus)));
            }
            Some(c)
        }
        None => None,
    };

    let weights = match (run.weights, run.pairwise) {
        (Some(w), _) => WeightSource::Explicit(WeightSpec { w1: w[0], w2: w[1] }),
        (None, Some(m)) => WeightSource::Pairwise(m),
        (None, None) => WeightSource::default(),
    };
    weights
        .resolve()
        .map_err(|e| Error::load(&run_path, None, e.to_string()))?;

    Scenario::new(feeder_spec, users, prices, ces, grid, weights)
        .map_err(|e| Error::load(&files.users, None, e.to_string()))
}

fn emit_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Emit {
        path: path.to_owned(),
        source,
    }
}

fn csv_emit_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Emit {
        path: path.to_owned(),
        source: e.into(),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Emit {
        path: path.to_owned(),
        source: e.into(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(emit_err(path))
}

/// Writes `header` then one record per row.
pub(crate) fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_emit_err(path))?;
    w.write_record(header).map_err(csv_emit_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_emit_err(path))?;
    }
    w.flush().map_err(emit_err(path))
}

fn write_wide(path: &Path, users: &[UserProfile], pick: impl Fn(&UserProfile) -> &[f64], h: usize) -> Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(users.iter().map(|u| u.id.clone()))
        .collect();
    write_csv(
        path,
        &header,
        (0..h).map(|t| {
            std::iter::once(t.to_string())
                .chain(users.iter().map(|u| pick(u)[t].to_string()))
                .collect::<Vec<_>>()
        }),
    )
}

/// Writes `scenario` in the layout read by [`ScenarioFiles::in_dir`].
pub fn write_scenario(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<ScenarioFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(emit_err(dir))?;
    let h = scenario.intervals();
    let files = ScenarioFiles {
        feeder: dir.join("feeder.json"),
        users: dir.join("users.csv"),
        demand: dir.join("demand.csv"),
        pv: dir.join("pv.csv"),
        reactive: scenario
            .users
            .iter()
            .any(|u| u.reactive.iter().any(|q| *q != 0.0))
            .then(|| dir.join("reactive.csv")),
        prices: dir.join("prices.csv"),
        ces: scenario.ces.map(|_| dir.join("ces.json")),
        run: Some(dir.join("run.json")),
    };
    write_json(&files.feeder, scenario.feeder.spec())?;
    write_csv(
        &files.users,
        &["user_id".into(), "bus".into(), "kind".into()],
        scenario
            .users
            .iter()
            .map(|u| vec![u.id.clone(), u.bus.to_string(), u.kind.to_string()]),
    )?;
    write_wide(&files.demand, &scenario.users, |u| &u.demand, h)?;
    let participants: Vec<UserProfile> = scenario.participants().cloned().collect();
    write_wide(&files.pv, &participants, |u| &u.pv, h)?;
    if let Some(p) = &files.reactive {
        write_wide(p, &scenario.users, |u| &u.reactive, h)?;
    }
    write_csv(
        &files.prices,
        &["t".into(), "price_per_kwh".into()],
        scenario
            .prices
            .iter()
            .enumerate()
            .map(|(t, p)| vec![t.to_string(), p.to_string()]),
    )?;
    if let (Some(c), Some(p)) = (&scenario.ces, &files.ces) {
        write_json(p, c)?;
    }
    let mut run = RunFile {
        delta_t_h: Some(scenario.grid.delta_t_h()),
        ..RunFile::default()
    };
    match scenario.weights {
        WeightSource::Explicit(w) => run.weights = Some([w.w1, w.w2]),
        WeightSource::Pairwise(m) => run.pairwise = Some(m),
    }
    write_json(files.run.as_ref().expect("set above"), &run)?;
    Ok(files)
}
