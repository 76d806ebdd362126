//! Files in and out: trajectory heatmaps, measurement tables, external
//! datasets, run configuration and manifests.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so every export round-trips exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::TorusGrid;
use crate::error::{Error, Result};
use crate::estimator::{
    augmented_mle, fd_laplacian_measurements, intervals_from_parts, realized_variation, EstimateReport, IntervalInputs,
};
use crate::experiments::{CampaignResults, InitialProfile, RepolStats};
use crate::matrix::Matrix;
use crate::measurement::{bump_kernel, KernelSummary, MeasurementLayout, MeasurementSet};
use crate::model::ModelParams;
use crate::solver::{Reaction, Scheme, SolverConfig, Trajectory};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

fn write_heatmap<'a>(
    path: &Path,
    grid: &TorusGrid,
    times: &[f64],
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend(grid.coords().map(|x| x.to_string()));
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(rows) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(t.to_string());
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata written next to a trajectory heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub length: f64,
    pub points: usize,
    pub params: ModelParams,
    pub config: SolverConfig,
    pub seed: u64,
    pub discarded: bool,
    pub recorded_frames: usize,
}

/// Paths written by [`write_trajectory`].
#[derive(Debug, Clone)]
pub struct TrajectoryFiles {
    pub activator: PathBuf,
    pub inhibitor: PathBuf,
    pub meta: PathBuf,
}

/// Writes `<stem>_activator.csv`, `<stem>_inhibitor.csv` (one row per
/// recorded time, header `t, x_0, ..., x_{m-1}`) and `<stem>.json`.
pub fn write_trajectory(traj: &Trajectory, dir: &Path, stem: &str) -> Result<TrajectoryFiles> {
    let files = TrajectoryFiles {
        activator: dir.join(format!("{stem}_activator.csv")),
        inhibitor: dir.join(format!("{stem}_inhibitor.csv")),
        meta: dir.join(format!("{stem}.json")),
    };
    write_heatmap(&files.activator, &traj.grid, &traj.times, traj.states.iter().map(|s| s.activator.as_slice()))?;
    write_heatmap(&files.inhibitor, &traj.grid, &traj.times, traj.states.iter().map(|s| s.inhibitor.as_slice()))?;
    let meta = TrajectoryMeta {
        length: traj.grid.length(),
        points: traj.grid.len(),
        params: traj.params,
        config: traj.config,
        seed: traj.config.seed,
        discarded: traj.discarded,
        recorded_frames: traj.times.len(),
    };
    write_json(&files.meta, &meta)?;
    Ok(files)
}

/// Reads a heatmap written by [`write_trajectory`]: times and one row per
/// time.
pub fn read_heatmap(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Matrix)> {
    let table = read_numeric_table(path, HeaderMode::Present)?;
    let header = table.header.ok_or_else(|| Error::Format(format!("{}: missing header", path.display())))?;
    let positions =
        header[1..].iter().enumerate().map(|(c, h)| parse_cell(path, 1, c + 2, h)).collect::<Result<Vec<f64>>>()?;
    let times = table.values.column(0);
    let rows: Vec<Vec<f64>> = table.values.iter_rows().map(|r| r[1..].to_vec()).collect();
    let matrix = Matrix::from_rows(rows).expect("table rows are rectangular");
    Ok((times, positions, matrix))
}

pub fn read_trajectory_meta(path: &Path) -> Result<TrajectoryMeta> {
    read_json(path)
}

/// Sidecar of a measurement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub delta: f64,
    #[serde(rename = "M")]
    pub channels: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub centers: Vec<f64>,
    pub kernel: Option<KernelSummary>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Long-format table with columns `t, k, A_loc, A_lap` plus a JSON sidecar
/// at the same path with extension `json`.
pub fn write_measurements(ms: &MeasurementSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "k", "A_loc", "A_lap"])?;
    for (j, t) in ms.times.iter().enumerate() {
        for k in 0..ms.channels() {
            let lap = ms.a_lap.as_ref().map(|l| l.get(j, k).to_string()).unwrap_or_default();
            w.write_record([t.to_string(), k.to_string(), ms.a_loc.get(j, k).to_string(), lap])?;
        }
    }
    w.flush()?;
    let meta = MeasurementMeta {
        delta: ms.layout.delta,
        channels: ms.channels(),
        length: ms.layout.length,
        centers: ms.layout.centers.clone(),
        kernel: ms.kernel.clone(),
    };
    write_json(&sidecar(path), &meta)
}

fn parse_cell(path: &Path, row: usize, col: usize, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::NonNumeric {
        path: path.to_path_buf(),
        row,
        col,
        value: raw.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteCell { path: path.to_path_buf(), row, col });
    }
    Ok(v)
}

/// Reads a table written by [`write_measurements`]. `A_lap` may be empty
/// throughout (external data), in which case the set carries none.
pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let meta: MeasurementMeta = read_json(&sidecar(path))?;
    let m = meta.channels;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut loc = Vec::new();
    let mut lap = Vec::new();
    let mut lap_present = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 4 {
            return Err(Error::RaggedRow { path: path.to_path_buf(), row, expected: 4, found: rec.len() });
        }
        let t = parse_cell(path, row, 1, &rec[0])?;
        let k: usize = rec[1].trim().parse().map_err(|_| Error::NonNumeric {
            path: path.to_path_buf(),
            row,
            col: 2,
            value: rec[1].to_string(),
        })?;
        let expected_k = loc.len() % m;
        if k != expected_k {
            return Err(Error::Format(format!(
                "{}: row {row}: expected channel {expected_k}, found {k}",
                path.display()
            )));
        }
        if expected_k == 0 {
            times.push(t);
        } else if t != *times.last().expect("time pushed at channel 0") {
            return Err(Error::Format(format!("{}: row {row}: time changes within a frame", path.display())));
        }
        loc.push(parse_cell(path, row, 3, &rec[2])?);
        let has_lap = !rec[3].trim().is_empty();
        match lap_present {
            None => lap_present = Some(has_lap),
            Some(p) if p != has_lap => {
                return Err(Error::Format(format!("{}: row {row}: A_lap present only in some rows", path.display())))
            }
            _ => {}
        }
        if has_lap {
            lap.push(parse_cell(path, row, 4, &rec[3])?);
        }
    }
    if loc.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    if loc.len() % m != 0 {
        return Err(Error::Format(format!("{}: last frame is incomplete", path.display())));
    }
    let n = times.len();
    let layout = MeasurementLayout::new(meta.centers, meta.delta, meta.length)?;
    let a_lap = (lap_present == Some(true)).then(|| Matrix::from_raw(n, m, lap));
    MeasurementSet::new(layout, times, Matrix::from_raw(n, m, loc), a_lap, meta.kernel)
}

/// Whether the first CSV row holds column labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// A first row with any non-numeric cell is a header.
    #[default]
    Auto,
    Present,
    Absent,
}

struct NumericTable {
    header: Option<Vec<String>>,
    values: Matrix,
}

fn read_numeric_table(path: &Path, mode: HeaderMode) -> Result<NumericTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut records = rdr.records();
    let Some(first) = records.next().transpose()? else {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    };
    let header_present = match mode {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => first.iter().any(|c| c.parse::<f64>().is_err()),
    };
    let width = first.len();
    let mut data = Vec::new();
    let mut rows = 0;
    let mut push_row = |rec: &csv::StringRecord, row: usize| -> Result<()> {
        if rec.len() != width {
            return Err(Error::RaggedRow { path: path.to_path_buf(), row, expected: width, found: rec.len() });
        }
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_cell(path, row, c + 1, cell)?);
        }
        rows += 1;
        Ok(())
    };
    if !header_present {
        push_row(&first, 1)?;
    }
    for (i, rec) in records.enumerate() {
        push_row(&rec?, i + 2)?;
    }
    if rows == 0 {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(NumericTable {
        header: header_present.then(|| first.iter().map(str::to_string).collect()),
        values: Matrix::from_raw(rows, width, data),
    })
}

/// Local measurements from an external source: `N + 1` frames of `M`
/// channels on a regular layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalDataset {
    pub values: Matrix,
    pub length: f64,
    pub frame_dt: f64,
    /// Channel positions, when the header row is numeric.
    pub positions: Option<Vec<f64>>,
}

/// Assumed circumference of external data when none is given.
pub const DEFAULT_EXTERNAL_LENGTH: f64 = 20.0;

impl ExternalDataset {
    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    /// Number of frame intervals `N`.
    pub fn intervals(&self) -> usize {
        self.values.rows().saturating_sub(1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.rows()).map(|j| j as f64 * self.frame_dt).collect()
    }

    /// Regular layout. The kernel width of external data is unknown; the
    /// nominal `delta = L / (2M)` only fills the layout field.
    pub fn to_measurement_set(&self) -> Result<MeasurementSet> {
        let m = self.channels();
        let layout = MeasurementLayout::regular(m, self.length / (2.0 * m as f64), self.length)?;
        MeasurementSet::new(layout, self.times(), self.values.clone(), None, None)
    }
}

/// Options for [`ingest_csv`].
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub header: HeaderMode,
    pub length: f64,
    pub frame_dt: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { header: HeaderMode::Auto, length: DEFAULT_EXTERNAL_LENGTH, frame_dt: 1.0 }
    }
}

/// Reads a rectangular numeric CSV (rows = frames, columns = channels).
pub fn ingest_csv(path: &Path) -> Result<ExternalDataset> {
    ingest_csv_with(path, IngestOptions::default())
}

pub fn ingest_csv_with(path: &Path, opts: IngestOptions) -> Result<ExternalDataset> {
    if !(opts.length > 0.0 && opts.frame_dt > 0.0) {
        return Err(Error::InvalidParameter("length and frame_dt must be positive".into()));
    }
    let table = read_numeric_table(path, opts.header)?;
    let positions = table.header.and_then(|h| h.iter().map(|c| c.parse::<f64>().ok()).collect());
    Ok(ExternalDataset { values: table.values, length: opts.length, frame_dt: opts.frame_dt, positions })
}

/// Writes a frame-by-channel matrix with an optional header of positions.
pub fn export_dataset_csv(values: &Matrix, positions: Option<&[f64]>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if let Some(p) = positions {
        if p.len() != values.cols() {
            return Err(Error::LengthMismatch { expected: values.cols(), found: p.len() });
        }
        w.write_record(p.iter().map(f64::to_string))?;
    }
    for row in values.iter_rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Augmented MLE for local measurements alone: Laplacian measurements from
/// second differences across channels, the noise level from the realized
/// variation, and only the data-driven interval (the kernel width is
/// unknown). `||K||` defaults to the built-in bump; only the product
/// `sigma_A ||K||` enters the interval.
pub fn estimate_from_dataset(ds: &ExternalDataset, alpha: f64) -> Result<EstimateReport> {
    if ds.channels() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 channels, got {}", ds.channels())));
    }
    let mut ms = ds.to_measurement_set()?;
    ms.a_lap = Some(fd_laplacian_measurements(&ms.a_loc, &ms.layout)?);
    let fit = augmented_mle(&ms)?;
    let kernel = bump_kernel();
    let inputs = IntervalInputs {
        channels: ms.channels(),
        horizon: ms.horizon(),
        delta: None,
        norm_k: kernel.norm_k(),
        kernel_sigma: kernel.sigma(),
        realized_variation: realized_variation(&ms)?,
    };
    intervals_from_parts(&fit, inputs, None, alpha)
}

/// Simulation settings read from a TOML file: model coefficients by their
/// symbols plus the solver keys `m`, `L`, `T`, `n_steps` or `dt`, `scheme`,
/// `record_stride`, `seed`, `reaction` and `initial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub length: f64,
    pub points: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub record_stride: usize,
    pub seed: u64,
    pub reaction: Reaction,
    pub initial: InitialProfile,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            length: 20.0,
            points: 500,
            horizon: 100.0,
            n_steps: 10_000,
            scheme: Scheme::SemiImplicitDiffusion,
            record_stride: 10,
            seed: 0,
            reaction: Reaction::Meinhardt,
            initial: InitialProfile::Polarised,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverKeys {
    #[serde(rename = "m")]
    points: Option<usize>,
    #[serde(rename = "L")]
    length: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    n_steps: Option<usize>,
    dt: Option<f64>,
    scheme: Option<Scheme>,
    record_stride: Option<usize>,
    seed: Option<u64>,
    reaction: Option<Reaction>,
    initial: Option<InitialProfile>,
}

const SOLVER_KEYS: [&str; 10] =
    ["m", "L", "T", "n_steps", "dt", "scheme", "record_stride", "seed", "reaction", "initial"];

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut model = toml::Table::try_from(ModelParams::default())?;
        let mut solver = toml::Table::new();
        for (k, v) in table {
            if SOLVER_KEYS.contains(&k.as_str()) {
                solver.insert(k, v);
            } else {
                model.insert(k, v);
            }
        }
        let params: ModelParams = model.try_into()?;
        let keys: SolverKeys = solver.try_into()?;
        let mut cfg = Self { params, ..Self::default() };
        if let Some(v) = keys.points {
            cfg.points = v;
        }
        if let Some(v) = keys.length {
            cfg.length = v;
        }
        if let Some(v) = keys.horizon {
            cfg.horizon = v;
        }
        match (keys.n_steps, keys.dt) {
            (Some(_), Some(_)) => return Err(Error::InvalidParameter("give either n_steps or dt, not both".into())),
            (Some(n), None) => cfg.n_steps = n,
            (None, Some(dt)) => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
                }
                cfg.n_steps = (cfg.horizon / dt).ceil().max(1.0) as usize;
            }
            (None, None) => cfg.n_steps = (cfg.horizon / 0.01).ceil().max(1.0) as usize,
        }
        if let Some(v) = keys.scheme {
            cfg.scheme = v;
        }
        if let Some(v) = keys.record_stride {
            cfg.record_stride = v;
        }
        if let Some(v) = keys.seed {
            cfg.seed = v;
        }
        if let Some(v) = keys.reaction {
            cfg.reaction = v;
        }
        if let Some(v) = keys.initial {
            cfg.initial = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Flat TOML in the same key layout that [`RunConfig::from_toml_str`]
    /// reads.
    pub fn to_toml_string(&self) -> Result<String> {
        let mut table = toml::Table::try_from(self.params)?;
        table.insert("m".into(), toml::Value::Integer(self.points as i64));
        table.insert("L".into(), toml::Value::Float(self.length));
        table.insert("T".into(), toml::Value::Float(self.horizon));
        table.insert("n_steps".into(), toml::Value::Integer(self.n_steps as i64));
        table.insert("scheme".into(), toml::Value::try_from(self.scheme)?);
        table.insert("record_stride".into(), toml::Value::Integer(self.record_stride as i64));
        table.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        table.insert("reaction".into(), toml::Value::try_from(self.reaction)?);
        table.insert("initial".into(), toml::Value::try_from(self.initial)?);
        Ok(toml::to_string(&table)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid()?;
        self.solver_config().validate(&self.params, &self.grid()?)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.length, self.points)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig::new(self.horizon, self.n_steps, self.scheme)
            .seed(self.seed)
            .record_stride(self.record_stride)
            .reaction(self.reaction)
    }
}

/// Record of how an output directory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(command: Vec<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

fn level_label(alpha: f64) -> String {
    format!("{}", (100.0 * (1.0 - alpha)).round() as i64)
}

/// One row per (delta, policy): channel count, RMSE, coverages, mean
/// interval widths and the fitted slope of the policy.
pub fn write_campaign_table(results: &[CampaignResults], path: &Path) -> Result<()> {
    let alphas = results.first().map(|r| r.campaign.alphas.clone()).unwrap_or_default();
    if results.iter().any(|r| r.campaign.alphas != alphas) {
        return Err(Error::InvalidParameter("campaigns in one table must share alphas".into()));
    }
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> =
        ["scenario", "delta", "policy", "M", "n", "rmse", "mean"].iter().map(|s| s.to_string()).collect();
    for a in &alphas {
        header.push(format!("coverage_{}", level_label(*a)));
    }
    for a in &alphas {
        header.push(format!("coverage_datadriven_{}", level_label(*a)));
    }
    header.push("mean_width".into());
    header.push("mean_width_datadriven".into());
    header.push("spectral_rmse".into());
    header.push("slope".into());
    w.write_record(&header)?;
    for r in results {
        let scenario = serde_json::to_value(r.campaign.scenario)?.as_str().unwrap_or_default().to_string();
        for s in &r.per_delta {
            let mut rec = vec![
                scenario.clone(),
                s.delta.to_string(),
                r.campaign.policy.label(),
                s.channels.to_string(),
                s.n.to_string(),
                s.rmse.to_string(),
                s.mean.to_string(),
            ];
            rec.extend(s.coverage_plugin.iter().map(f64::to_string));
            rec.extend(s.coverage_datadriven.iter().map(f64::to_string));
            rec.push(s.mean_width_plugin.first().map(f64::to_string).unwrap_or_default());
            rec.push(s.mean_width_datadriven.first().map(f64::to_string).unwrap_or_default());
            rec.push(s.spectral_rmse.map(|v| v.to_string()).unwrap_or_default());
            rec.push(r.rmse_slope.map(|v| v.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Boxplot-ready long table `sigma, tau` of kept repolarisation times.
pub fn write_repol_samples(stats: &[RepolStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["sigma", "tau"])?;
    for s in stats {
        for t in &s.tau_samples {
            w.write_record([s.sigma.to_string(), t.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-noise-level summary: counts, mean, variance and boxplot numbers.
pub fn write_repol_summary(stats: &[RepolStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "sigma",
        "gamma",
        "kept",
        "discarded",
        "never",
        "mean",
        "variance",
        "whisker_low",
        "q1",
        "median",
        "q3",
        "whisker_high",
    ])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for s in stats {
        let b = s.boxplot();
        w.write_record([
            s.sigma.to_string(),
            s.gamma.to_string(),
            s.tau_samples.len().to_string(),
            s.n_discarded_negative.to_string(),
            s.n_never.to_string(),
            opt(s.mean()),
            opt(s.variance()),
            opt(b.map(|b| b.whisker_low)),
            opt(b.map(|b| b.q1)),
            opt(b.map(|b| b.median)),
            opt(b.map(|b| b.q3)),
            opt(b.map(|b| b.whisker_high)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `sigma, tau` table back into per-sigma groups (in order of first
/// appearance).
pub fn read_repol_samples(path: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let table = read_numeric_table(path, HeaderMode::Auto)?;
    if table.values.cols() != 2 {
        return Err(Error::Format(format!("{}: expected columns sigma, tau", path.display())));
    }
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for row in table.values.iter_rows() {
        match groups.iter_mut().find(|(s, _)| *s == row[0]) {
            Some((_, v)) => v.push(row[1]),
            None => groups.push((row[0], vec![row[1]])),
        }
    }
    Ok(groups)
}

/// Reads the `delta, rmse` columns of a campaign table grouped by policy.
pub fn read_campaign_rmse(path: &Path) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: no column {name}", path.display())))
    };
    let (cd, cp, cr, cs) = (col("delta")?, col("policy")?, col("rmse")?, col("scenario")?);
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label = format!("{} {}", &rec[cs], &rec[cp]);
        let point = (parse_cell(path, i + 2, cd + 1, &rec[cd])?, parse_cell(path, i + 2, cr + 1, &rec[cr])?);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(point),
            None => groups.push((label, vec![point])),
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::measurement::measure_trajectory;
    use crate::model::default_params;
    use crate::solver::simulate;

    fn small_trajectory() -> Trajectory {
        let g = TorusGrid::new(20.0, 64).unwrap();
        let p = default_params();
        let init = crate::model::default_initial_condition(&g, &p, 1.0);
        let cfg = SolverConfig::new(1.0, 20, Scheme::SemiImplicitDiffusion).seed(3).record_stride(5);
        simulate(&p, &init, &cfg, &g).unwrap()
    }

    #[test]
    fn heatmap_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let traj = small_trajectory();
        let files = write_trajectory(&traj, dir.path(), "run").unwrap();
        let (times, xs, a) = read_heatmap(&files.activator).unwrap();
        assert_eq!(times, traj.times);
        assert_eq!(xs, traj.grid.coords().collect::<Vec<_>>());
        for (row, s) in a.iter_rows().zip(&traj.states) {
            assert_eq!(row, s.activator.as_slice());
        }
        let meta = read_trajectory_meta(&files.meta).unwrap();
        assert_eq!(meta.params, traj.params);
        assert_eq!(meta.config, traj.config);
        assert_eq!(meta.recorded_frames, 5);
    }

    #[test]
    fn measurement_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let traj = small_trajectory();
        let lay = MeasurementLayout::regular(4, 1.0, 20.0).unwrap();
        let ms = measure_trajectory(&traj, &lay, &bump_kernel(), 1).unwrap();
        let path = dir.path().join("m.csv");
        write_measurements(&ms, &path).unwrap();
        let back = read_measurements(&path).unwrap();
        assert_eq!(back, ms);

        let mut no_lap = ms.clone();
        no_lap.a_lap = None;
        write_measurements(&no_lap, &path).unwrap();
        assert_eq!(read_measurements(&path).unwrap().a_lap, None);
    }

    #[test]
    fn ingest_examples_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("toy.csv");
        fs::write(&p, "1,2\n3,4\n5,6\n").unwrap();
        let ds = ingest_csv(&p).unwrap();
        assert_eq!((ds.intervals(), ds.channels()), (2, 2));
        assert_eq!(ds.values.row(2), &[5.0, 6.0]);
        assert_eq!(ds.frame_dt, 1.0);
        assert_eq!(ds.length, 20.0);

        fs::write(&p, "x0,x1\n3,4\n").unwrap();
        let ds = ingest_csv(&p).unwrap();
        assert_eq!(ds.values.rows(), 1);

        fs::write(&p, "0.0,10.0\n3,4\n").unwrap();
        let ds = ingest_csv_with(&p, IngestOptions { header: HeaderMode::Present, ..Default::default() }).unwrap();
        assert_eq!(ds.positions, Some(vec![0.0, 10.0]));

        fs::write(&p, "").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::EmptyFile { .. })));
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::RaggedRow { row: 2, .. })));
        fs::write(&p, "1,2\n3,abc\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::NonNumeric { row: 2, col: 2, .. })));
        fs::write(&p, "1,2\n3,NaN\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::NonFiniteCell { .. })));
        fs::write(&p, "a,b\n").unwrap();
        assert!(matches!(ingest_csv(&p), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn dataset_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let values = Matrix::from_rows(vec![vec![0.1, 1.0 / 3.0, 2e-300], vec![PI, -0.0, 1e17]]).unwrap();
        export_dataset_csv(&values, Some(&[0.0, 1.0, 2.0]), &p).unwrap();
        let ds = ingest_csv_with(&p, IngestOptions { header: HeaderMode::Present, ..Default::default() }).unwrap();
        assert_eq!(ds.values, values);
        export_dataset_csv(&values, None, &p).unwrap();
        assert_eq!(ingest_csv(&p).unwrap().values, values);
    }

    #[test]
    fn constant_dataset_is_degenerate() {
        let ds = ExternalDataset {
            values: Matrix::from_rows(vec![vec![2.0; 10]; 30]).unwrap(),
            length: 20.0,
            frame_dt: 1.0,
            positions: None,
        };
        assert!(matches!(estimate_from_dataset(&ds, 0.05), Err(Error::DegenerateData(_))));
        let narrow = ExternalDataset { values: Matrix::from_rows(vec![vec![1.0, 2.0]; 5]).unwrap(), ..ds };
        assert!(matches!(estimate_from_dataset(&narrow, 0.05), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn dataset_report_has_no_plugin_interval() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|j| {
                (0..12)
                    .map(|k| {
                        (-(j as f64) * 0.01).exp() * (2.0 * PI * k as f64 / 12.0).cos()
                            + 0.001 * ((j * 7 + k * 3) % 5) as f64
                    })
                    .collect()
            })
            .collect();
        let ds =
            ExternalDataset { values: Matrix::from_rows(rows).unwrap(), length: 20.0, frame_dt: 1.0, positions: None };
        let r = estimate_from_dataset(&ds, 0.05).unwrap();
        assert!(r.ci_plugin.is_none());
        assert!(r.delta.is_none());
        assert_eq!(r.M, 12);
        assert_eq!(r.T, 39.0);
        assert!(r.ci_datadriven[0] <= r.D_hat && r.D_hat <= r.ci_datadriven[1]);
    }

    #[test]
    fn config_parsing() {
        let cfg = RunConfig::from_toml_str(
            "D_A = 0.05\nm = 200\nT = 10.0\ndt = 0.1\nscheme = \"explicit-euler-maruyama\"\nrecord_stride = 5\n",
        )
        .unwrap_err();
        // explicit at dt = 0.1, dx = 0.1 violates the step limit
        assert!(matches!(cfg, Error::Cfl { .. }));
        let cfg = RunConfig::from_toml_str("D_A = 0.05\nm = 200\nT = 10.0\ndt = 0.01\nrecord_stride = 5\nseed = 9\n")
            .unwrap();
        assert_eq!(cfg.params.D_A, 0.05);
        assert_eq!(cfg.params.D_I, default_params().D_I);
        assert_eq!(cfg.points, 200);
        assert_eq!(cfg.n_steps, 1000);
        assert_eq!(cfg.seed, 9);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("n_steps = 10\ndt = 0.1\n").is_err());
        let cosine = RunConfig::from_toml_str("initial = { cosine = { peak = 2.0 } }\n").unwrap();
        assert_eq!(cosine.initial, InitialProfile::Cosine { peak: 2.0 });
    }

    #[test]
    fn manifest_echoes_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let m = Manifest::new(vec!["simulate".into()], Some(7), serde_json::to_value(&cfg).unwrap());
        let path = m.write(dir.path()).unwrap();
        let back: Manifest = read_json(&path).unwrap();
        assert_eq!(back, m);
        let cfg_back: RunConfig = serde_json::from_value(back.config).unwrap();
        assert_eq!(cfg_back, cfg);
    }
}
