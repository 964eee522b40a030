//! Experiment configuration, output files and plots.
//!
//! A configuration is one JSON document. Command-line flags override fields
//! by dotted path (`grid.points=1024`). Every output directory receives a
//! `config.json` echoing the resolved configuration and its SHA-256 hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exponents::{ExponentOptions, SystemParams};
use crate::harness::{
    BlowupConfig, ConvergenceConfig, DecayConfig, LifespanConfig, LifespanSweep, Tolerances,
};
use crate::solver::{ComponentData, DtPolicy, GridSpec, InitialData, NormRecord, Norms};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DOUBLEDAMP_OUT";

/// Output root when neither a flag, the config nor [`OUT_ENV`] names one.
pub const DEFAULT_OUT_ROOT: &str = "doubledamp-out";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exponents,
    Kernels,
    #[default]
    Simulate,
    Decay,
    Blowup,
    Lifespan,
    Testfunc,
    Convergence,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Exponents => "exponents",
            ExperimentKind::Kernels => "kernels",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Decay => "decay",
            ExperimentKind::Blowup => "blowup",
            ExperimentKind::Lifespan => "lifespan",
            ExperimentKind::Testfunc => "testfunc",
            ExperimentKind::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub t_end: f64,
    pub dt: DtPolicy,
    pub per_decade: usize,
    pub nonlinear: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            t_end: 100.0,
            dt: DtPolicy::adaptive(0.1),
            per_decade: 40,
            nonlinear: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestfuncConfig {
    pub nus: Vec<f64>,
    pub radii: Vec<f64>,
    /// Coarse grid of the scaling check has `base_points * R` points.
    pub base_points: usize,
    /// Coarse grid of the decay-ratio check; the fine grid doubles it.
    pub ratio_points: usize,
    pub ratio_half_length: f64,
    pub mu: u32,
}

impl Default for TestfuncConfig {
    fn default() -> Self {
        TestfuncConfig {
            nus: vec![0.5, 1.0, 1.5],
            radii: vec![2.0, 4.0, 8.0],
            base_points: 512,
            ratio_points: 1024,
            ratio_half_length: 64.0,
            mu: crate::testfunc::DEFAULT_MU,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub params: SystemParams,
    pub grid: GridSpec,
    pub data: InitialData,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
    /// Recorded for provenance; no experiment draws random numbers.
    pub seed: u64,
    pub exponents: ExponentOptions,
    pub simulate: SimulateConfig,
    pub decay: DecayConfig,
    pub blowup: BlowupConfig,
    pub lifespan: LifespanConfig,
    pub convergence: ConvergenceConfig,
    pub testfunc: TestfuncConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(ExperimentKind::Simulate)
    }
}

/// Blow-up data shape: `A = 0.25`, unit width for `u_0` and `u_1`.
pub fn blowup_data(eps: f64, k: usize) -> InitialData {
    InitialData {
        eps,
        components: vec![ComponentData::gaussian(0.25, 0.25, 1.0); k],
    }
}

impl ExperimentConfig {
    /// Defaults tuned to each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let sub = SystemParams {
            n: 1,
            sigma: 1.0,
            p: vec![2.0, 2.0],
        };
        let sup = SystemParams {
            n: 1,
            sigma: 1.0,
            p: vec![3.0, 4.0],
        };
        let (params, grid, data) = match kind {
            ExperimentKind::Decay => (sup, GridSpec::default(), InitialData::uniform(1e-3, 2, 1.0)),
            ExperimentKind::Convergence => (
                sup,
                GridSpec {
                    n: 1,
                    points: 256,
                    half_length: 20.0,
                },
                InitialData::uniform(1.0, 2, 1.0),
            ),
            ExperimentKind::Blowup | ExperimentKind::Lifespan => (
                sub,
                GridSpec {
                    n: 1,
                    points: 1024,
                    half_length: 100.0,
                },
                blowup_data(0.3, 2),
            ),
            _ => (sub, GridSpec::default(), InitialData::uniform(0.3, 2, 1.0)),
        };
        ExperimentConfig {
            kind,
            params,
            grid,
            data,
            tolerances: Tolerances::default(),
            output_dir: None,
            seed: 0,
            exponents: ExponentOptions::default(),
            simulate: SimulateConfig::default(),
            decay: DecayConfig::default(),
            blowup: BlowupConfig::default(),
            lifespan: LifespanConfig::default(),
            convergence: ConvergenceConfig::default(),
            testfunc: TestfuncConfig::default(),
        }
    }

    /// Parses a configuration, or the `{"hash", "config"}` echo written next to outputs.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        if let Some(inner) = value
            .get_mut("config")
            .filter(|_| text.contains("\"hash\""))
        {
            value = inner.take();
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the compact JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Sets the field at a dotted path; `raw` is read as JSON, else as a string.
    pub fn set_path(&mut self, path: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let new_value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => {
                    let known: Vec<String> = map.keys().cloned().collect();
                    map.get_mut(key).ok_or_else(|| {
                        Error::Config(format!(
                            "unknown field `{key}` in `{path}`; expected one of {}",
                            known.join(", ")
                        ))
                    })?
                }
                Value::Array(items) => {
                    let len = items.len();
                    let idx: usize = key.parse().map_err(|_| {
                        Error::Config(format!("`{key}` in `{path}` must be an index"))
                    })?;
                    items.get_mut(idx).ok_or_else(|| {
                        Error::Config(format!("index {idx} in `{path}` exceeds length {len}"))
                    })?
                }
                Value::Null if key.is_empty() => slot,
                _ => {
                    return Err(Error::Config(format!(
                        "`{path}` descends into a scalar at `{key}`"
                    )))
                }
            };
        }
        *slot = new_value;
        *self = serde_json::from_value(root)
            .map_err(|e| Error::Config(format!("override `{path}={raw}`: {e}")))?;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (path, raw) = o.split_once('=').ok_or_else(|| {
                Error::Config(format!("override `{o}` must look like path=value"))
            })?;
            self.set_path(path.trim(), raw.trim())?;
        }
        Ok(())
    }

    /// Repeats the first data component until there is one per equation.
    pub fn fit_data_to_params(&mut self) {
        let k = self.params.p.len();
        if let Some(first) = self.data.components.first().cloned() {
            self.data.components.resize(k, first);
        }
    }

    /// Output directory: explicit, configured, `$DOUBLEDAMP_OUT/<kind>-<hash>`, or `doubledamp-out/<kind>-<hash>`.
    pub fn resolve_output(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        let root = std::env::var_os(OUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
        root.join(format!("{}-{}", self.kind.name(), &self.hash()[..12]))
    }
}

/// Parses `"2,3.5"` into exponents.
pub fn parse_exponents(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!(
                    "exponent `{s}` is not a number (expected e.g. --p 2,3)"
                ))
            })
        })
        .collect()
}

/// A directory that collects the files of one experiment.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_config(&mut self, config: &ExperimentConfig) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Echo<'a> {
            hash: String,
            config: &'a ExperimentConfig,
        }
        self.write_json(
            "config.json",
            &Echo {
                hash: config.hash(),
                config,
            },
        )
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

/// `t,l2_1..l2_k,hs_1..hs_k,sup_1..sup_k,mean_1..mean_k`, shortest round-trip decimals.
pub fn norms_csv(records: &[NormRecord], k: usize) -> String {
    let mut out = String::from("t");
    for name in ["l2", "hs", "sup", "mean"] {
        for l in 1..=k {
            let _ = write!(out, ",{name}_{l}");
        }
    }
    out.push('\n');
    for r in records {
        let n = &r.norms;
        push_row(
            &mut out,
            std::iter::once(r.t)
                .chain(n.l2.iter().copied())
                .chain(n.hs.iter().copied())
                .chain(n.sup.iter().copied())
                .chain(n.mean.iter().copied()),
        );
    }
    out
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("line {lineno}: `{s}` is not a number")))
        })
        .collect()
}

/// Inverse of [`norms_csv`].
pub fn parse_norms_csv(text: &str) -> Result<Vec<NormRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?;
    let cols = header.split(',').count();
    if cols < 5 || (cols - 1) % 4 != 0 || !header.starts_with("t,l2_1") {
        return Err(Error::Config(format!("unexpected norms header `{header}`")));
    }
    let k = (cols - 1) / 4;
    lines
        .enumerate()
        .map(|(i, line)| {
            let v = parse_row(line, i + 2)?;
            if v.len() != cols {
                return Err(Error::Config(format!(
                    "line {}: {} fields, expected {cols}",
                    i + 2,
                    v.len()
                )));
            }
            Ok(NormRecord {
                t: v[0],
                norms: Norms {
                    l2: v[1..1 + k].to_vec(),
                    hs: v[1 + k..1 + 2 * k].to_vec(),
                    sup: v[1 + 2 * k..1 + 3 * k].to_vec(),
                    mean: v[1 + 3 * k..1 + 4 * k].to_vec(),
                },
            })
        })
        .collect()
}

/// `epsilon,T`; `T` is `NaN` where no blow-up occurred before the cap.
pub fn lifespan_csv(sweep: &LifespanSweep) -> String {
    let mut out = String::from("epsilon,T\n");
    for p in &sweep.points {
        push_row(&mut out, [p.epsilon, p.lifespan.unwrap_or(f64::NAN)]);
    }
    out
}

/// Header plus rows of equal length.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        push_row(&mut out, r.iter().copied());
    }
    out
}

#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// `y = exp(intercept) x^slope` drawn over `[x0, x1]`.
#[derive(Clone, Debug)]
pub struct PlotLine {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    pub x0: f64,
    pub x1: f64,
    pub dashed: bool,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Static log-log plot. Non-positive points are dropped.
pub fn loglog_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[PlotSeries],
    lines: &[PlotLine],
) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (80.0, 170.0, 40.0, 55.0);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
                xs.push(x.log10());
                ys.push(y.log10());
            }
        }
    }
    let bounds = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |lx: f64| ml + (lx - x_lo) / (x_hi - x_lo) * (w - ml - mr);
    let py = |ly: f64| h - mb - (ly - y_lo) / (y_hi - y_lo) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (ml + w - mr) / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        w - ml - mr,
        h - mt - mb
    );
    for d in (x_lo.ceil() as i64)..=(x_hi.floor() as i64) {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"##,
            h - mb,
            h - mb + 16.0
        );
    }
    for d in (y_lo.ceil() as i64)..=(y_hi.floor() as i64) {
        let y = py(d as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            w - mr,
            ml - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ml + w - mr) / 2.0,
        h - 12.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        xml_escape(y_label)
    );
    let mut legend = 0;
    let mut legend_entry = |svg: &mut String, color: &str, label: &str, dashed: bool| {
        let y = mt + 14.0 + 18.0 * legend as f64;
        let dash = if dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            w - mr + 10.0,
            w - mr + 34.0,
            w - mr + 40.0,
            y + 4.0,
            xml_escape(label)
        );
        legend += 1;
    };
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10())))
                .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        legend_entry(&mut svg, color, &s.label, false);
    }
    for (i, l) in lines.iter().enumerate() {
        let color = if l.dashed {
            "#555"
        } else {
            PALETTE[(series.len() + i) % PALETTE.len()]
        };
        let at = |x: f64| (l.intercept + l.slope * x.ln()) / std::f64::consts::LN_10;
        if l.x0 > 0.0 && l.x1 > 0.0 {
            let dash = if l.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
                px(l.x0.log10()),
                py(at(l.x0)),
                px(l.x1.log10()),
                py(at(l.x1))
            );
        }
        legend_entry(&mut svg, color, &l.label, l.dashed);
    }
    svg.push_str("</svg>\n");
    svg
}
