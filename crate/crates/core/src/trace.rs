//! Queue-length traces on a uniform time grid, their CSV form, and datasets
//! of traces described by a JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Conservation tolerance for simulated or predicted traces (absolute).
pub const TRACE_CONSERVATION_TOL: f64 = 1e-6;

/// Conservation tolerance for measured traces, relative to `N`.
pub const MEASURED_CONSERVATION_TOL: f64 = 1e-3;

/// A uniform time grid `t_h = h * dt`, `h = 0..H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    #[serde(rename = "H")]
    pub points: usize,
}

impl GridSpec {
    pub fn new(dt: f64, points: usize) -> Result<Self> {
        let g = GridSpec { dt, points };
        g.check()?;
        Ok(g)
    }

    /// Grid covering `[0, horizon]`; `horizon` must be a multiple of `dt`
    /// up to rounding.
    pub fn from_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::config(format!("bad grid: dt = {dt}, T = {horizon}")));
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::config(format!("T = {horizon} is not a multiple of dt = {dt}")));
        }
        GridSpec::new(dt, steps as usize + 1)
    }

    /// Grid from `dt` and either `H` or `T`; both may be given if they agree.
    pub fn resolve(dt: f64, points: Option<usize>, horizon: Option<f64>) -> Result<Self> {
        match (points, horizon) {
            (Some(h), None) => GridSpec::new(dt, h),
            (None, Some(t)) => GridSpec::from_horizon(dt, t),
            (Some(h), Some(t)) => {
                let g = GridSpec::new(dt, h)?;
                if (g.horizon() - t).abs() > 1e-9 * t.max(1.0) {
                    return Err(Error::config(format!(
                        "T = {t} disagrees with (H - 1) dt = {}",
                        g.horizon()
                    )));
                }
                Ok(g)
            }
            (None, None) => Err(Error::config("a grid needs H or T")),
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.points < 2 {
            return Err(Error::config(format!("H must be at least 2, got {}", self.points)));
        }
        Ok(())
    }

    /// `T = (H - 1) dt`.
    pub fn horizon(&self) -> f64 {
        (self.points - 1) as f64 * self.dt
    }

    pub fn time(&self, h: usize) -> f64 {
        h as f64 * self.dt
    }
}

/// `H` queue-length vectors sampled every `dt` time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub dt: f64,
    pub samples: Vec<Vec<f64>>,
}

impl Trace {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            dt: self.dt,
            points: self.samples.len(),
        }
    }

    pub fn points(&self) -> usize {
        self.samples.len()
    }

    pub fn stations(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Total population, read off the first sample.
    pub fn population(&self) -> f64 {
        self.samples.first().map_or(0.0, |r| r.iter().sum())
    }

    pub fn initial(&self) -> &[f64] {
        &self.samples[0]
    }

    /// Checks shape, non-negativity and that each row sums to `N` within
    /// `tol`. `name` labels errors; rows are reported 1-based.
    pub fn check(&self, name: &str, tol: f64) -> Result<()> {
        self.grid().check()?;
        let m = self.stations();
        if m == 0 {
            return Err(Error::config(format!("{name}: trace has no stations")));
        }
        let n = self.population();
        if !(n > 0.0) {
            return Err(Error::config(format!("{name}: total population must be positive")));
        }
        for (h, row) in self.samples.iter().enumerate() {
            check_len("trace row", row.len(), m)?;
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::config(format!("{name}: row {} has entry {v}", h + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - n).abs() > tol {
                return Err(Error::Conservation {
                    source_name: name.to_string(),
                    row: h + 1,
                    sum,
                    expected: n,
                });
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let m = self.stations();
        let mut out = String::from("t");
        for i in 1..=m {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        let grid = self.grid();
        for (h, row) in self.samples.iter().enumerate() {
            out.push_str(&grid.time(h).to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trace::from_csv_str(&text).map_err(|message| Error::Parse {
            path: path.to_owned(),
            message,
        })
    }

    /// Parses `t,x1,...,xM` CSV. `dt` is read from the time column, which
    /// must be uniform and start at zero.
    pub fn from_csv_str(text: &str) -> std::result::Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        let m = header.len().saturating_sub(1);
        if m == 0 || &header[0] != "t" {
            return Err("header must be t,x1,...,xM".into());
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("x{}", i + 1) {
                return Err(format!("unexpected column {name:?}, expected x{}", i + 1));
            }
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let vals = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("row {}: {e}", line + 1))?;
            if vals.len() != m + 1 {
                return Err(format!("row {}: expected {} fields", line + 1, m + 1));
            }
            times.push(vals[0]);
            samples.push(vals[1..].to_vec());
        }
        if times.len() < 2 {
            return Err("a trace needs at least 2 rows".into());
        }
        let dt = times[1] - times[0];
        if times[0].abs() > 1e-12 || !(dt > 0.0) {
            return Err("time column must start at 0 and increase".into());
        }
        for (h, &t) in times.iter().enumerate() {
            if (t - h as f64 * dt).abs() > 1e-6 * dt {
                return Err(format!("row {}: time {t} is off the uniform grid", h + 1));
            }
        }
        Ok(Trace { dt, samples })
    }
}

/// Traces sharing station count, concurrency levels, `dt` and `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub s: Vec<u32>,
    pub dt: f64,
    pub traces: Vec<Trace>,
}

/// On-disk dataset description; trace paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "M")]
    pub stations: usize,
    pub s: Vec<u32>,
    pub dt: f64,
    #[serde(rename = "H")]
    pub points: usize,
    /// Largest total population among the traces.
    #[serde(rename = "N")]
    pub population: f64,
    pub traces: Vec<String>,
}

pub const MANIFEST_FILE: &str = "dataset.json";

impl Dataset {
    pub fn stations(&self) -> usize {
        self.s.len()
    }

    pub fn points(&self) -> usize {
        self.traces.first().map_or(0, Trace::points)
    }

    /// Checks that all traces agree on `M`, `dt` and `H` and conserve their
    /// population within `tol` (absolute, scaled by `N` when `relative`).
    pub fn check(&self, tol: f64, relative: bool) -> Result<()> {
        if self.traces.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let m = self.stations();
        let h = self.points();
        for (k, tr) in self.traces.iter().enumerate() {
            let name = format!("trace {}", k + 1);
            if tr.stations() != m {
                return Err(Error::Dimension {
                    what: "trace stations",
                    got: tr.stations(),
                    expected: m,
                });
            }
            if tr.points() != h {
                return Err(Error::GridMismatch(format!(
                    "{name} has {} points, expected {h}",
                    tr.points()
                )));
            }
            if (tr.dt - self.dt).abs() > 1e-9 * self.dt {
                return Err(Error::GridMismatch(format!(
                    "{name} has dt = {}, expected {}",
                    tr.dt, self.dt
                )));
            }
            let tol = if relative { tol * tr.population() } else { tol };
            tr.check(&name, tol)?;
        }
        if self.s.iter().any(|&s| s < 1) {
            return Err(Error::config("concurrency levels must be at least 1"));
        }
        Ok(())
    }

    pub fn manifest(&self, files: Vec<String>) -> Manifest {
        Manifest {
            stations: self.stations(),
            s: self.s.clone(),
            dt: self.dt,
            points: self.points(),
            population: self.traces.iter().map(Trace::population).fold(0.0, f64::max),
            traces: files,
        }
    }

    /// Writes `trace_XXX.csv` files and the manifest into `dir`, returning the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let width = self.traces.len().to_string().len().max(3);
        let mut files = Vec::with_capacity(self.traces.len());
        for (k, tr) in self.traces.iter().enumerate() {
            let name = format!("trace_{k:0width$}.csv");
            tr.save_csv(dir.join(&name))?;
            files.push(name);
        }
        let path = dir.join(MANIFEST_FILE);
        let manifest = self.manifest(files);
        write_json(&path, &manifest)?;
        Ok(path)
    }

    /// Loads a dataset from its manifest. `path` may name the manifest or the
    /// directory holding `dataset.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MANIFEST_FILE);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        check_len("manifest s", manifest.s.len(), manifest.stations)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let traces = manifest
            .traces
            .iter()
            .map(|f| Trace::load_csv(base.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset {
            s: manifest.s,
            dt: manifest.dt,
            traces,
        };
        if ds.points() != manifest.points {
            return Err(Error::GridMismatch(format!(
                "manifest says H = {}, traces have {}",
                manifest.points,
                ds.points()
            )));
        }
        ds.check(MEASURED_CONSERVATION_TOL, true)?;
        Ok(ds)
    }
}

/// Reads externally measured traces (already averaged, in trace CSV form)
/// into a dataset. Rows may deviate from the trace population by up to
/// 0.1% of `N`.
pub fn ingest_external_traces(files: &[PathBuf], s: Vec<u32>, grid: Option<GridSpec>) -> Result<Dataset> {
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut traces = Vec::with_capacity(files.len());
    for f in files {
        let tr = Trace::load_csv(f)?;
        let name = f.display().to_string();
        tr.check(&name, MEASURED_CONSERVATION_TOL * tr.population())?;
        traces.push(tr);
    }
    let dt = match grid {
        Some(g) => {
            g.check()?;
            if let Some((k, tr)) = traces.iter().enumerate().find(|(_, t)| t.points() != g.points) {
                return Err(Error::GridMismatch(format!(
                    "{} has {} rows, expected H = {}",
                    files[k].display(),
                    tr.points(),
                    g.points
                )));
            }
            g.dt
        }
        None => traces[0].dt,
    };
    let ds = Dataset { s, dt, traces };
    ds.check(MEASURED_CONSERVATION_TOL, true)?;
    Ok(ds)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Trace {
        Trace {
            dt: 0.5,
            samples: vec![vec![2.0, 1.0], vec![1.5, 1.5], vec![1.25, 1.75]],
        }
    }

    #[test]
    fn grid_horizon() {
        let g = GridSpec::from_horizon(0.01, 10.0).unwrap();
        assert_eq!(g.points, 1001);
        assert!((g.horizon() - 10.0).abs() < 1e-12);
        assert!(GridSpec::new(0.0, 3).is_err());
        assert!(GridSpec::new(0.1, 1).is_err());
        assert!(GridSpec::from_horizon(0.3, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let tr = small();
        let text = tr.to_csv_string();
        assert!(text.starts_with("t,x1,x2\n0,2,1\n0.5,"));
        let back = Trace::from_csv_str(&text).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(Trace::from_csv_str("time,x1\n0,1\n1,1\n").is_err());
        assert!(Trace::from_csv_str("t,x2\n0,1\n1,1\n").is_err());
        assert!(Trace::from_csv_str("t,x1\n0,1\n").is_err());
        assert!(Trace::from_csv_str("t,x1\n0,1\n1,1\n3,1\n").is_err());
    }

    #[test]
    fn conservation_violation_names_row() {
        let mut tr = small();
        tr.samples[2] = vec![0.75, 0.75];
        let err = tr.check("a.csv", 1e-6).unwrap_err();
        match err {
            Error::Conservation { row, sum, .. } => {
                assert_eq!(row, 3);
                assert_eq!(sum, 1.5);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn dataset_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            s: vec![1, 2],
            dt: 0.5,
            traces: vec![small(), small()],
        };
        let manifest = ds.save(dir.path()).unwrap();
        let back = Dataset::load(&manifest).unwrap();
        assert_eq!(back, ds);
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.traces.len(), 2);
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
        assert_eq!(m.points, 3);
        assert_eq!(m.population, 3.0);
        assert_eq!(m.traces, vec!["trace_000.csv", "trace_001.csv"]);
    }

    #[test]
    fn ingest_checks() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_external_traces(&[], vec![1, 1], None),
            Err(Error::EmptyDataset)
        ));

        let good = dir.path().join("good.csv");
        small().save_csv(&good).unwrap();
        let ds = ingest_external_traces(std::slice::from_ref(&good), vec![1, 1], None).unwrap();
        assert_eq!(ds.traces.len(), 1);

        // within 0.1% of N = 3 is tolerated
        let mut tr = small();
        tr.samples[1] = vec![1.5, 1.502];
        let near = dir.path().join("near.csv");
        tr.save_csv(&near).unwrap();
        assert!(ingest_external_traces(&[near], vec![1, 1], None).is_ok());

        let mut tr = small();
        tr.samples[1] = vec![0.75, 0.75];
        let bad = dir.path().join("bad.csv");
        tr.save_csv(&bad).unwrap();
        let err = ingest_external_traces(&[good.clone(), bad], vec![1, 1], None).unwrap_err();
        assert!(matches!(err, Error::Conservation { row: 2, .. }), "{err}");

        let err = ingest_external_traces(&[good], vec![1, 1], Some(GridSpec::new(0.5, 4).unwrap()));
        assert!(matches!(err, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn dataset_rejects_mixed_stations() {
        let mut other = small();
        other.samples.iter_mut().for_each(|r| r.push(0.0));
        let ds = Dataset {
            s: vec![1, 1],
            dt: 0.5,
            traces: vec![small(), other],
        };
        assert!(matches!(ds.check(1e-6, false), Err(Error::Dimension { .. })));
    }
}
