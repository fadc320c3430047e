//! Scenario files, channel-matrix (CFR) files, and CSV exporters.
//!
//! Angles live in degrees, delays in nanoseconds and amplitudes in dB in
//! every file; conversion to the internal radians/seconds/linear units
//! happens here at the boundary.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::beamform::{PadpGrid, Window};
use crate::estimator::{CancellationConfig, EstimationTrace, PathEstimate, RpSample};
use crate::numerics::Mat;
use crate::scene::{
    ElementChannelMatrix, FrequencyGrid, NoiseSpec, PathTruth, ScattererLocation, UcaGeometry,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

/// One path as written in a scenario file (file units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPath {
    pub amp_db: f64,
    pub phase_deg: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub distance_m: f64,
    pub delay_ns: f64,
}

impl ScenarioPath {
    pub fn to_path_truth(&self) -> Result<PathTruth> {
        let amplitude =
            Complex64::from_polar(10f64.powf(self.amp_db / 20.0), self.phase_deg.to_radians());
        let location = ScattererLocation::new(
            self.distance_m,
            self.elevation_deg.to_radians(),
            self.azimuth_deg.rem_euclid(360.0).to_radians(),
        )?;
        PathTruth::new(amplitude, self.delay_ns * 1e-9, location)
    }
}

/// Parsed scenario: geometry, frequency grid, ground-truth paths and the
/// estimator/noise blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: UcaGeometry,
    pub grid: FrequencyGrid,
    pub paths: Vec<ScenarioPath>,
    pub estimator: CancellationConfig,
    pub noise: Option<NoiseSpec>,
}

impl Scenario {
    pub fn path_truths(&self) -> Result<Vec<PathTruth>> {
        self.paths.iter().map(ScenarioPath::to_path_truth).collect()
    }
}

fn scenario_err(line: usize, message: impl Into<String>) -> Error {
    Error::Scenario {
        line: line + 1,
        message: message.into(),
    }
}

struct Block {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Block {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let at = self.entries.iter().position(|(_, k, _)| k == key)?;
        let (line, _, value) = self.entries.remove(at);
        Some((line, value))
    }

    fn required_f64(&mut self, key: &str) -> Result<f64> {
        let (line, value) = self.take(key).ok_or_else(|| {
            scenario_err(self.line, format!("[{}] is missing `{key}`", self.name))
        })?;
        value
            .parse::<f64>()
            .map_err(|_| scenario_err(line, format!("`{key}` is not a number: `{value}`")))
    }

    fn optional_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse::<f64>()
                .map(Some)
                .map_err(|_| scenario_err(line, format!("`{key}` is not a number: `{value}`"))),
        }
    }

    fn optional_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<usize>().map(Some).map_err(|_| {
                scenario_err(
                    line,
                    format!("`{key}` is not a non-negative integer: `{value}`"),
                )
            }),
        }
    }

    fn required_usize(&mut self, key: &str) -> Result<usize> {
        let (line, value) = self.take(key).ok_or_else(|| {
            scenario_err(self.line, format!("[{}] is missing `{key}`", self.name))
        })?;
        value.parse::<usize>().map_err(|_| {
            scenario_err(
                line,
                format!("`{key}` is not a non-negative integer: `{value}`"),
            )
        })
    }

    fn reject_leftovers(&self) -> Result<()> {
        if let Some((line, key, _)) = self.entries.first() {
            return Err(scenario_err(
                *line,
                format!("unknown key `{key}` in [{}]", self.name),
            ));
        }
        Ok(())
    }
}

/// Parses the sectioned key=value scenario format. Unknown sections or keys
/// are rejected with a line-addressed diagnostic.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| scenario_err(idx, format!("malformed section header `{line}`")))?
                .trim()
                .to_string();
            if !["geometry", "frequency", "path", "estimator", "noise"].contains(&name.as_str()) {
                return Err(scenario_err(idx, format!("unknown section [{name}]")));
            }
            blocks.push(Block {
                name,
                line: idx,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| scenario_err(idx, format!("expected `key = value`, got `{line}`")))?;
        let block = blocks
            .last_mut()
            .ok_or_else(|| scenario_err(idx, "key outside of any [section]".to_string()))?;
        let key = key.trim().to_string();
        if block.entries.iter().any(|(_, k, _)| *k == key) {
            return Err(scenario_err(
                idx,
                format!("duplicate key `{key}` in [{}]", block.name),
            ));
        }
        block.entries.push((idx, key, value.trim().to_string()));
    }

    let mut geometry = None;
    let mut grid = None;
    let mut paths = Vec::new();
    let mut estimator = CancellationConfig::default();
    let mut noise = None;
    let mut seen_estimator = false;

    for mut block in blocks {
        match block.name.as_str() {
            "geometry" => {
                if geometry.is_some() {
                    return Err(scenario_err(block.line, "duplicate [geometry] section"));
                }
                let radius = block.required_f64("radius_m")?;
                let elements = block.required_usize("elements")?;
                block.reject_leftovers()?;
                geometry = Some(
                    UcaGeometry::new(radius, elements)
                        .map_err(|e| scenario_err(block.line, e.to_string()))?,
                );
            }
            "frequency" => {
                if grid.is_some() {
                    return Err(scenario_err(block.line, "duplicate [frequency] section"));
                }
                let f_start = block.required_f64("f_start_hz")?;
                let f_stop = block.required_f64("f_stop_hz")?;
                let points = block.required_usize("points")?;
                block.reject_leftovers()?;
                grid = Some(
                    FrequencyGrid::new(f_start, f_stop, points)
                        .map_err(|e| scenario_err(block.line, e.to_string()))?,
                );
            }
            "path" => {
                let path = ScenarioPath {
                    amp_db: block.required_f64("amp_db")?,
                    phase_deg: block.optional_f64("phase_deg")?.unwrap_or(0.0),
                    azimuth_deg: block.required_f64("azimuth_deg")?,
                    elevation_deg: block.required_f64("elevation_deg")?,
                    distance_m: block.required_f64("distance_m")?,
                    delay_ns: block.required_f64("delay_ns")?,
                };
                block.reject_leftovers()?;
                path.to_path_truth()
                    .map_err(|e| scenario_err(block.line, e.to_string()))?;
                paths.push((block.line, path));
            }
            "estimator" => {
                if seen_estimator {
                    return Err(scenario_err(block.line, "duplicate [estimator] section"));
                }
                seen_estimator = true;
                if let Some(v) = block.optional_f64("dynamic_range_db")? {
                    estimator.dynamic_range_db = v;
                }
                if let Some(v) = block.optional_f64("label_threshold_db")? {
                    estimator.label_threshold_db = v;
                }
                if let Some(v) = block.optional_usize("zero_pad")? {
                    estimator.zero_pad_factor = v;
                }
                if let Some(v) = block.optional_usize("azimuth_count")? {
                    estimator.azimuth_count = v;
                }
                if let Some(v) = block.optional_usize("max_iterations")? {
                    estimator.max_iterations = v;
                }
                estimator.mode_cap = block.optional_usize("mode_cap")?;
                if let Some((line, value)) = block.take("window") {
                    estimator.window = parse_window(&value)
                        .ok_or_else(|| scenario_err(line, format!("unknown window `{value}`")))?;
                }
                block.reject_leftovers()?;
                estimator
                    .validate()
                    .map_err(|e| scenario_err(block.line, e.to_string()))?;
            }
            "noise" => {
                if noise.is_some() {
                    return Err(scenario_err(block.line, "duplicate [noise] section"));
                }
                let snr_db = block.required_f64("snr_db")?;
                let seed = block.required_usize("seed")? as u64;
                block.reject_leftovers()?;
                noise = Some(NoiseSpec { snr_db, seed });
            }
            _ => unreachable!("section names are validated above"),
        }
    }

    let geometry = geometry.ok_or_else(|| scenario_err(0, "missing [geometry] section"))?;
    let grid = grid.ok_or_else(|| scenario_err(0, "missing [frequency] section"))?;
    if paths.is_empty() {
        return Err(scenario_err(0, "at least one path required"));
    }
    let limit_ns = grid.unambiguous_delay_s() * 1e9;
    for (line, path) in &paths {
        if path.delay_ns * 1e-9 >= grid.unambiguous_delay_s() {
            return Err(scenario_err(
                *line,
                format!(
                    "delay_ns = {} exceeds the unambiguous delay range {:.3} ns \
                     of the frequency grid",
                    path.delay_ns, limit_ns
                ),
            ));
        }
        if path.distance_m <= geometry.radius_m() {
            return Err(scenario_err(
                *line,
                format!(
                    "distance_m = {} must exceed the array radius {} m",
                    path.distance_m,
                    geometry.radius_m()
                ),
            ));
        }
    }

    Ok(Scenario {
        geometry,
        grid,
        paths: paths.into_iter().map(|(_, p)| p).collect(),
        estimator,
        noise,
    })
}

fn parse_window(value: &str) -> Option<Window> {
    match value {
        "rectangular" => Some(Window::Rectangular),
        "raised-cosine" => Some(Window::RaisedCosine),
        _ => None,
    }
}

fn window_name(window: Window) -> &'static str {
    match window {
        Window::Rectangular => "rectangular",
        Window::RaisedCosine => "raised-cosine",
    }
}

/// Canonical text form; `parse(serialize(parse(x)))` equals `parse(x)`.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let mut out = String::new();
    out.push_str("[geometry]\n");
    out.push_str(&format!("radius_m = {}\n", scenario.geometry.radius_m()));
    out.push_str(&format!(
        "elements = {}\n",
        scenario.geometry.element_count()
    ));
    out.push_str("\n[frequency]\n");
    out.push_str(&format!("f_start_hz = {}\n", scenario.grid.f_start_hz()));
    out.push_str(&format!("f_stop_hz = {}\n", scenario.grid.f_stop_hz()));
    out.push_str(&format!("points = {}\n", scenario.grid.len()));
    for path in &scenario.paths {
        out.push_str("\n[path]\n");
        out.push_str(&format!("amp_db = {}\n", path.amp_db));
        if path.phase_deg != 0.0 {
            out.push_str(&format!("phase_deg = {}\n", path.phase_deg));
        }
        out.push_str(&format!("azimuth_deg = {}\n", path.azimuth_deg));
        out.push_str(&format!("elevation_deg = {}\n", path.elevation_deg));
        out.push_str(&format!("distance_m = {}\n", path.distance_m));
        out.push_str(&format!("delay_ns = {}\n", path.delay_ns));
    }
    let est = &scenario.estimator;
    out.push_str("\n[estimator]\n");
    out.push_str(&format!("dynamic_range_db = {}\n", est.dynamic_range_db));
    out.push_str(&format!(
        "label_threshold_db = {}\n",
        est.label_threshold_db
    ));
    out.push_str(&format!("zero_pad = {}\n", est.zero_pad_factor));
    out.push_str(&format!("azimuth_count = {}\n", est.azimuth_count));
    out.push_str(&format!("max_iterations = {}\n", est.max_iterations));
    if let Some(cap) = est.mode_cap {
        out.push_str(&format!("mode_cap = {cap}\n"));
    }
    out.push_str(&format!("window = {}\n", window_name(est.window)));
    if let Some(noise) = &scenario.noise {
        out.push_str("\n[noise]\n");
        out.push_str(&format!("snr_db = {}\n", noise.snr_db));
        out.push_str(&format!("seed = {}\n", noise.seed));
    }
    out
}

// ---------------------------------------------------------------------------
// CFR matrix files
// ---------------------------------------------------------------------------

const CFR_MAGIC: &str = "#uca-cfr v1";

fn cfr_err(message: impl Into<String>) -> Error {
    Error::FileFormat {
        context: "CFR file".into(),
        message: message.into(),
    }
}

/// Writes the `#uca-cfr v1` format: magic line, five metadata lines, then
/// one line per element with `2L` comma-separated decimal fields
/// (re,im per frequency). Floats use shortest round-trip formatting, so
/// `write -> read` is bit-exact.
pub fn write_cfr<W: Write>(writer: &mut W, ch: &ElementChannelMatrix) -> Result<()> {
    writeln!(writer, "{CFR_MAGIC}")?;
    writeln!(writer, "radius_m={}", ch.geometry.radius_m())?;
    writeln!(writer, "elements={}", ch.geometry.element_count())?;
    writeln!(writer, "f_start_hz={}", ch.grid.f_start_hz())?;
    writeln!(writer, "f_stop_hz={}", ch.grid.f_stop_hz())?;
    writeln!(writer, "points={}", ch.grid.len())?;
    let mut line = String::new();
    for p in 0..ch.values.rows() {
        line.clear();
        for (i, z) in ch.values.row(p).iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{},{}", z.re, z.im));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn write_cfr_path(path: &std::path::Path, ch: &ElementChannelMatrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::FileFormat {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut writer = std::io::BufWriter::new(file);
    write_cfr(&mut writer, ch)
}

/// Reads the `#uca-cfr v1` format back into an [`ElementChannelMatrix`].
pub fn read_cfr<R: BufRead>(reader: R) -> Result<ElementChannelMatrix> {
    let mut lines = reader.lines();
    let magic = lines
        .next()
        .ok_or_else(|| cfr_err("empty file"))?
        .map_err(Error::Io)?;
    if magic.trim_end() != CFR_MAGIC {
        return Err(cfr_err(format!(
            "expected `{CFR_MAGIC}` header, got `{magic}`"
        )));
    }

    let mut radius = None;
    let mut elements = None;
    let mut f_start = None;
    let mut f_stop = None;
    let mut points = None;
    for _ in 0..5 {
        let line = lines
            .next()
            .ok_or_else(|| cfr_err("truncated metadata header"))?
            .map_err(Error::Io)?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfr_err(format!("malformed metadata line `{line}`")))?;
        match key {
            "radius_m" => radius = Some(parse_meta_f64(key, value)?),
            "elements" => elements = Some(parse_meta_usize(key, value)?),
            "f_start_hz" => f_start = Some(parse_meta_f64(key, value)?),
            "f_stop_hz" => f_stop = Some(parse_meta_f64(key, value)?),
            "points" => points = Some(parse_meta_usize(key, value)?),
            _ => return Err(cfr_err(format!("unknown metadata key `{key}`"))),
        }
    }
    let radius = radius.ok_or_else(|| cfr_err("missing radius_m"))?;
    let elements = elements.ok_or_else(|| cfr_err("missing elements"))?;
    let f_start = f_start.ok_or_else(|| cfr_err("missing f_start_hz"))?;
    let f_stop = f_stop.ok_or_else(|| cfr_err("missing f_stop_hz"))?;
    let points = points.ok_or_else(|| cfr_err("missing points"))?;

    let geometry = UcaGeometry::new(radius, elements).map_err(|e| cfr_err(e.to_string()))?;
    let grid = FrequencyGrid::new(f_start, f_stop, points).map_err(|e| cfr_err(e.to_string()))?;

    let mut values = Mat::filled(elements, points, Complex64::new(0.0, 0.0));
    let mut row = 0usize;
    for line in lines {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        if row >= elements {
            return Err(cfr_err(format!("more than {elements} data rows")));
        }
        let mut fields = line.split(',');
        let dst = values.row_mut(row);
        for (l, slot) in dst.iter_mut().enumerate() {
            let re = next_field(&mut fields, row, l, "re")?;
            let im = next_field(&mut fields, row, l, "im")?;
            if !re.is_finite() || !im.is_finite() {
                return Err(cfr_err(format!("non-finite value in data row {}", row + 1)));
            }
            *slot = Complex64::new(re, im);
        }
        if fields.next().is_some() {
            return Err(cfr_err(format!(
                "data row {} has more than {} fields",
                row + 1,
                2 * points
            )));
        }
        row += 1;
    }
    if row != elements {
        return Err(cfr_err(format!(
            "header says elements={elements} but found {row} data rows"
        )));
    }
    ElementChannelMatrix::new(values, geometry, grid)
}

pub fn read_cfr_path(path: &std::path::Path) -> Result<ElementChannelMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::FileFormat {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_cfr(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::FileFormat { message, .. } => Error::FileFormat {
            context: path.display().to_string(),
            message,
        },
        other => other,
    })
}

fn parse_meta_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| cfr_err(format!("metadata `{key}` is not a number: `{value}`")))
}

fn parse_meta_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| cfr_err(format!("metadata `{key}` is not an integer: `{value}`")))
}

fn next_field<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    row: usize,
    l: usize,
    part: &str,
) -> Result<f64> {
    let field = fields.next().ok_or_else(|| {
        cfr_err(format!(
            "data row {} is truncated at frequency index {l}",
            row + 1
        ))
    })?;
    field.trim().parse().map_err(|_| {
        cfr_err(format!(
            "data row {}: `{field}` ({part} of frequency {l}) is not a number",
            row + 1
        ))
    })
}

// ---------------------------------------------------------------------------
// CSV exporters
// ---------------------------------------------------------------------------

fn db_or_floor(magnitude: f64, floor_db: f64) -> f64 {
    if magnitude <= 0.0 {
        return floor_db;
    }
    (20.0 * magnitude.log10()).max(floor_db)
}

/// PADP magnitude as CSV: azimuth axis (degrees) across the header row,
/// delay axis (ns) down the first column, cells in dB clipped at
/// `floor_db`.
pub fn export_padp<W: Write>(writer: &mut W, padp: &PadpGrid, floor_db: f64) -> Result<()> {
    let mut header = String::from("delay_ns/azimuth_deg");
    let a_count = padp.azimuths.len();
    for a in 0..a_count {
        header.push_str(&format!(",{}", 360.0 * a as f64 / a_count as f64));
    }
    writeln!(writer, "{header}")?;
    let mut line = String::new();
    for row in 0..padp.values.rows() {
        line.clear();
        line.push_str(&format!("{:.6}", padp.delays.delay_s(row) * 1e9));
        for z in padp.values.row(row) {
            line.push_str(&format!(",{:.1}", db_or_floor(z.norm(), floor_db)));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Detected paths as CSV (`path,power_db,azimuth_deg,delay_ns,phase_deg`),
/// full float precision so estimates survive a round trip through the file.
pub fn export_estimates<W: Write>(writer: &mut W, estimates: &[PathEstimate]) -> Result<()> {
    writeln!(writer, "path,power_db,azimuth_deg,delay_ns,phase_deg")?;
    for est in estimates {
        writeln!(
            writer,
            "{},{},{},{},{}",
            est.iteration,
            est.power_db(),
            est.azimuth_rad.to_degrees(),
            est.delay_s * 1e9,
            est.phase_rad.to_degrees()
        )?;
    }
    Ok(())
}

/// Reads an estimates CSV back (the inverse of [`export_estimates`]).
pub fn read_estimates<R: BufRead>(reader: R) -> Result<Vec<PathEstimate>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::FileFormat {
                context: "estimates CSV".into(),
                message: format!("row {} has {} fields, expected 5", idx + 1, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::FileFormat {
                context: "estimates CSV".into(),
                message: format!("row {}: `{s}` is not a number", idx + 1),
            })
        };
        out.push(PathEstimate {
            iteration: parse(fields[0])? as usize,
            amplitude: 10f64.powf(parse(fields[1])? / 20.0),
            azimuth_rad: parse(fields[2])?.to_radians(),
            delay_s: parse(fields[3])? * 1e-9,
            phase_rad: parse(fields[4])?.to_radians(),
        });
    }
    Ok(out)
}

/// Residual-power-rate sweep as CSV.
pub fn export_rp_table<W: Write>(writer: &mut W, samples: &[RpSample]) -> Result<()> {
    writeln!(writer, "bandwidth_hz,distance_m,elevation_deg,rp_percent")?;
    for s in samples {
        writeln!(
            writer,
            "{},{},{},{}",
            s.bandwidth_hz, s.distance_m, s.elevation_deg, s.rp_percent
        )?;
    }
    Ok(())
}

/// Per-element CIR magnitudes as CSV (elements down, delay bins across),
/// in dB clipped at `floor_db`.
pub fn export_cir<W: Write>(
    writer: &mut W,
    cir_magnitude: &Mat<f64>,
    trace: &EstimationTrace,
    floor_db: f64,
) -> Result<()> {
    let mut header = String::from("element/delay_ns");
    for i in 0..cir_magnitude.cols() {
        header.push_str(&format!(",{:.6}", trace.delays.delay_s(i) * 1e9));
    }
    writeln!(writer, "{header}")?;
    let mut line = String::new();
    for p in 0..cir_magnitude.rows() {
        line.clear();
        line.push_str(&format!("{}", p + 1));
        for &v in cir_magnitude.row(p) {
            line.push_str(&format!(",{:.1}", db_or_floor(v, floor_db)));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// PADP-magnitude snapshot from a trace, same layout as [`export_padp`].
pub fn export_padp_snapshot<W: Write>(
    writer: &mut W,
    magnitude: &Mat<f64>,
    trace: &EstimationTrace,
    floor_db: f64,
) -> Result<()> {
    let mut header = String::from("delay_ns/azimuth_deg");
    let a_count = trace.azimuths.len();
    for a in 0..a_count {
        header.push_str(&format!(",{}", 360.0 * a as f64 / a_count as f64));
    }
    writeln!(writer, "{header}")?;
    let mut line = String::new();
    for row in 0..magnitude.rows() {
        line.clear();
        line.push_str(&format!("{:.6}", trace.delays.delay_s(row) * 1e9));
        for &v in magnitude.row(row) {
            line.push_str(&format!(",{:.1}", db_or_floor(v, floor_db)));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
