//! Config-driven experiment harness behind the `fairdd` binary.
//!
//! A run directory holds everything needed to audit it:
//!
//! ```text
//! <output root>/<run id>/<mode>/
//!     config.toml      snapshot of the experiment config
//!     epochs.jsonl     one EpochLog per line
//!     stages.json      per-stage reports (checksums, fine-tuning)
//!     predictions.csv  test-split prediction dump
//!     metrics.json     MetricsReport recomputable from predictions.csv
//!     params.json      final network parameters
//!     buffer.csv       replay buffer contents (fairdd only)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate, Criterion, FateReport, MetricsReport, PredictionDump, DEFAULT_FATE_LAMBDA,
};
use crate::trainer::{run_incremental, run_vanilla, TrainConfig, TrainOutcome};

/// Overrides `output_dir` from the config when set.
pub const OUTPUT_ROOT_ENV: &str = "FAIRDD_OUTPUT_ROOT";

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Dataset CSV to load instead of generating `dataset`.
    pub data_csv: Option<PathBuf>,
    pub split_seed: u64,
    pub fate_lambda: f64,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            output_dir: PathBuf::from("runs"),
            data_csv: None,
            split_seed: 0,
            fate_lambda: DEFAULT_FATE_LAMBDA,
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!(
                "run_id {:?} is not a plain name",
                self.run_id
            )));
        }
        if !(self.fate_lambda >= 0.0) {
            return Err(Error::InvalidConfig(
                "fate_lambda must be nonnegative".into(),
            ));
        }
        if self.data_csv.is_none() {
            self.dataset.validate()?;
        }
        self.train.validate()
    }

    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }

    pub fn run_dir(&self, mode: Mode) -> PathBuf {
        self.output_root().join(&self.run_id).join(mode.as_str())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data_csv {
            Some(path) => Dataset::from_csv(path, None, self.split_seed),
            None => Dataset::generate(&self.dataset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FairDD,
    Vanilla,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FairDD => "fairdd",
            Mode::Vanilla => "vanilla",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fairdd" => Ok(Mode::FairDD),
            "vanilla" => Ok(Mode::Vanilla),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?} (fairdd | vanilla)"
            ))),
        }
    }
}

/// Machine-readable error line for stderr.
pub fn error_record(err: &Error) -> String {
    serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

pub fn generate_data(spec: &DatasetSpec, path: &Path) -> Result<Dataset> {
    let data = Dataset::generate(spec)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    data.write_csv(path)?;
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: MetricsReport,
    pub outcome: TrainOutcome,
}

/// Trains on the config's dataset and writes a run directory.
pub fn train(config: &ExperimentConfig, mode: Mode) -> Result<RunArtifacts> {
    let data = config.load_dataset()?;
    train_on(config, &data, mode, &config.run_dir(mode))
}

/// [`train`] with an explicit dataset and run directory.
pub fn train_on(
    config: &ExperimentConfig,
    data: &Dataset,
    mode: Mode,
    dir: &Path,
) -> Result<RunArtifacts> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;

    let outcome = match mode {
        Mode::FairDD => run_incremental(&config.train, data)?,
        Mode::Vanilla => run_vanilla(&config.train, data)?,
    };

    let mut log = fs::File::create(dir.join("epochs.jsonl"))?;
    for line in outcome.epoch_logs() {
        writeln!(log, "{}", serde_json::to_string(line)?)?;
    }
    fs::write(
        dir.join("stages.json"),
        serde_json::to_string_pretty(&outcome.stages)?,
    )?;
    outcome.network.snapshot().save(&dir.join("params.json"))?;
    if mode == Mode::FairDD {
        outcome.buffer.dump_csv(&dir.join("buffer.csv"))?;
    }

    let dump = PredictionDump::from_network(&outcome.network, &data.test())?;
    dump.write_csv(&dir.join(PREDICTIONS_FILE))?;
    let metrics = evaluate(&dump)?;
    write_json(&dir.join(METRICS_FILE), &metrics)?;
    log::info!(
        "{} run written to {}: accuracy {:.4}, EOpp1 {:.4}",
        mode.as_str(),
        dir.display(),
        metrics.accuracy,
        metrics.eopp1
    );
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        metrics,
        outcome,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn predictions_in(dir_or_file: &Path) -> PathBuf {
    if dir_or_file.is_dir() || dir_or_file.extension().is_none_or(|e| e != "csv") {
        dir_or_file.join(PREDICTIONS_FILE)
    } else {
        dir_or_file.to_path_buf()
    }
}

fn read_dump(dir_or_file: &Path) -> Result<PredictionDump> {
    let path = predictions_in(dir_or_file);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    PredictionDump::read_csv(&path)
}

/// Recomputes a MetricsReport from a prediction dump (file or run directory).
pub fn evaluate_dump(dir_or_file: &Path, out: Option<&Path>) -> Result<MetricsReport> {
    let metrics = evaluate(&read_dump(dir_or_file)?)?;
    if let Some(out) = out {
        write_json(out, &metrics)?;
    }
    Ok(metrics)
}

/// Compares two prediction dumps and writes `fate.json` and `fate.csv` into `out_dir`.
pub fn fate(enhanced: &Path, baseline: &Path, lambda: f64, out_dir: &Path) -> Result<FateReport> {
    let baseline = read_dump(baseline)?;
    let enhanced = read_dump(enhanced)?;
    let report = FateReport::compare(&evaluate(&enhanced)?, &evaluate(&baseline)?, lambda)?;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("fate.json"), &report)?;
    let mut csv = csv::Writer::from_path(out_dir.join("fate.csv"))?;
    csv.write_record([
        "criterion",
        "acc_e",
        "fc_e",
        "acc_b",
        "fc_b",
        "lambda",
        "fate",
    ])?;
    for e in &report.entries {
        csv.write_record([
            e.criterion.to_string(),
            e.acc_e.to_string(),
            e.fc_e.to_string(),
            e.acc_b.to_string(),
            e.fc_b.to_string(),
            e.lambda.to_string(),
            e.fate.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Order,
    Mixup,
    SupCon,
    Alpha,
    Beta,
    Buffer,
}

impl Sweep {
    pub const ALL: [Sweep; 6] = [
        Sweep::Order,
        Sweep::Mixup,
        Sweep::SupCon,
        Sweep::Alpha,
        Sweep::Beta,
        Sweep::Buffer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sweep::Order => "order",
            Sweep::Mixup => "mixup",
            Sweep::SupCon => "supcon",
            Sweep::Alpha => "alpha",
            Sweep::Beta => "beta",
            Sweep::Buffer => "buffer",
        }
    }

    fn default_values(self, domains: &[u8]) -> Vec<String> {
        let strs = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        match self {
            Sweep::Order => {
                let forward: Vec<String> = domains.iter().map(u8::to_string).collect();
                let backward: Vec<String> = domains.iter().rev().map(u8::to_string).collect();
                vec![forward.join(":"), backward.join(":")]
            }
            Sweep::Mixup | Sweep::SupCon => strs(&["on", "off"]),
            Sweep::Alpha => strs(&["0.2", "0.4", "0.6", "0.8", "1.0"]),
            Sweep::Beta => strs(&["0", "0.5", "1", "2"]),
            Sweep::Buffer => strs(&["0", "100", "300", "600"]),
        }
    }

    /// The training config for one sweep value.
    pub fn apply(self, base: &TrainConfig, value: &str) -> Result<TrainConfig> {
        let bad =
            || Error::InvalidConfig(format!("invalid {} sweep value {value:?}", self.as_str()));
        let switch = |v: &str| match v {
            "on" | "true" | "1" => Ok(true),
            "off" | "false" | "0" => Ok(false),
            _ => Err(bad()),
        };
        let mut cfg = base.clone();
        match self {
            Sweep::Order => {
                cfg.stage_order = value
                    .split([':', '-', ' '])
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
            }
            Sweep::Mixup => cfg.mixup.enabled = switch(value)?,
            Sweep::SupCon => cfg.use_supcon = switch(value)?,
            Sweep::Alpha => cfg.weights.alpha = value.parse().map_err(|_| bad())?,
            Sweep::Beta => cfg.weights.beta = value.parse().map_err(|_| bad())?,
            Sweep::Buffer => cfg.buffer_capacity = value.parse().map_err(|_| bad())?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Sweep::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub metrics: MetricsReport,
    /// FATE per criterion against the vanilla baseline; `None` when the
    /// baseline gap is zero and the relative change is undefined.
    pub fate: Vec<(Criterion, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub sweep: String,
    pub baseline: MetricsReport,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "sweep",
            "value",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "eopp0",
            "eopp1",
            "eodd",
            "fate_eopp0",
            "fate_eopp1",
            "fate_eodd",
        ])?;
        let fmt_opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut push =
            |label: &str, m: &MetricsReport, fate: &[(Criterion, Option<f64>)]| -> Result<()> {
                let get = |c| fate.iter().find(|(k, _)| *k == c).and_then(|(_, v)| *v);
                w.write_record([
                    self.sweep.clone(),
                    label.to_string(),
                    m.accuracy.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.f1.to_string(),
                    m.eopp0.to_string(),
                    m.eopp1.to_string(),
                    m.eodd.to_string(),
                    fmt_opt(get(Criterion::EOpp0)),
                    fmt_opt(get(Criterion::EOpp1)),
                    fmt_opt(get(Criterion::EOdd)),
                ])?;
                Ok(())
            };
        push("vanilla", &self.baseline, &[])?;
        for row in &self.rows {
            push(&row.label, &row.metrics, &row.fate)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Grouped bar chart of accuracy, EOpp1 and EOdd per variant.
    pub fn to_svg(&self) -> String {
        let series = [
            ("accuracy", "#4c72b0"),
            ("EOpp1", "#dd8452"),
            ("EOdd", "#55a868"),
        ];
        let mut groups: Vec<(&str, [f64; 3])> = vec![(
            "vanilla",
            [
                self.baseline.accuracy,
                self.baseline.eopp1,
                self.baseline.eodd,
            ],
        )];
        for r in &self.rows {
            groups.push((
                &r.label,
                [r.metrics.accuracy, r.metrics.eopp1, r.metrics.eodd],
            ));
        }
        let ymax = groups
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(1.0_f64, f64::max);
        let (left, top, plot_h, group_w, bar_w) = (50.0, 30.0, 220.0, 90.0, 22.0);
        let width = left + group_w * groups.len() as f64 + 20.0;
        let height = top + plot_h + 70.0;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="18" font-size="13">ablation: {}</text>"#,
            xml_escape(&self.sweep)
        );
        let base = top + plot_h;
        for tick in 0..=4 {
            let v = ymax * tick as f64 / 4.0;
            let y = base - plot_h * tick as f64 / 4.0;
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
                width - 20.0,
                left - 4.0,
                y + 4.0
            );
        }
        for (gi, (label, values)) in groups.iter().enumerate() {
            let gx = left + group_w * gi as f64 + 10.0;
            for (si, v) in values.iter().enumerate() {
                let h = plot_h * v / ymax;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w}" height="{h:.1}" fill="{}"/>"#,
                    gx + bar_w * si as f64,
                    base - h,
                    series[si].1
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                gx + bar_w * 1.5,
                base + 15.0,
                xml_escape(label)
            );
        }
        for (si, (name, color)) in series.iter().enumerate() {
            let x = left + 110.0 * si as f64;
            let y = base + 40.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{y:.1}">{name}</text>"#,
                y - 9.0,
                x + 14.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Runs the vanilla baseline plus one FairDD run per sweep value, writing
/// `comparison.csv` and `summary.svg` under `<root>/<run id>/ablate-<sweep>/`.
pub fn ablate(
    config: &ExperimentConfig,
    sweep: Sweep,
    values: Option<&[String]>,
) -> Result<AblationTable> {
    config.validate()?;
    let data = config.load_dataset()?;
    let domains: Vec<u8> = config.train.stage_order.clone();
    let values: Vec<String> = match values {
        Some(v) if !v.is_empty() => v.to_vec(),
        _ => sweep.default_values(&domains),
    };
    let configs: Vec<TrainConfig> = values
        .iter()
        .map(|v| sweep.apply(&config.train, v))
        .collect::<Result<_>>()?;

    let root = config
        .output_root()
        .join(&config.run_id)
        .join(format!("ablate-{}", sweep.as_str()));
    let baseline = train_on(config, &data, Mode::Vanilla, &root.join("vanilla"))?.metrics;

    let results: Vec<Result<MetricsReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .zip(&configs)
            .map(|(value, train)| {
                let run = ExperimentConfig {
                    train: train.clone(),
                    ..config.clone()
                };
                let dir = root.join(format!("{}-{}", sweep.as_str(), sanitize(value)));
                let data = &data;
                scope.spawn(move || train_on(&run, data, Mode::FairDD, &dir).map(|a| a.metrics))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Protocol("ablation worker panicked".into())))
            })
            .collect()
    });

    let mut rows = Vec::new();
    for (value, metrics) in values.iter().zip(results) {
        let metrics = metrics?;
        let fate = Criterion::ALL
            .iter()
            .map(|&c| {
                let f = crate::metrics::fate(
                    metrics.accuracy,
                    metrics.criterion(c),
                    baseline.accuracy,
                    baseline.criterion(c),
                    config.fate_lambda,
                )
                .ok();
                (c, f)
            })
            .collect();
        rows.push(AblationRow {
            label: value.clone(),
            metrics,
            fate,
        });
    }
    let table = AblationTable {
        sweep: sweep.as_str().to_string(),
        baseline,
        rows,
    };
    fs::write(root.join("comparison.csv"), table.to_csv()?)?;
    fs::write(root.join("summary.svg"), table.to_svg())?;
    Ok(table)
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Text table of run metrics. Fairness gaps and FATE are printed ×100.
pub fn report(runs: &[PathBuf], baseline: Option<&Path>, lambda: f64) -> Result<String> {
    let base = match baseline {
        Some(b) => Some(evaluate(&read_dump(b)?)?),
        None => None,
    };
    let mut out = String::new();
    let _ = write!(
        out,
        "{:<32} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "run", "ACC", "F1", "EOpp0", "EOpp1", "EOdd", "n"
    );
    if base.is_some() {
        let _ = write!(out, " {:>8} {:>8} {:>8}", "FATE0", "FATE1", "FATEodd");
    }
    out.push('\n');
    for run in runs {
        let m = evaluate(&read_dump(run)?)?;
        let _ = write!(
            out,
            "{:<32} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7}",
            run.display().to_string(),
            m.accuracy * 100.0,
            m.f1 * 100.0,
            m.eopp0 * 100.0,
            m.eopp1 * 100.0,
            m.eodd * 100.0,
            m.num_samples
        );
        if let Some(b) = &base {
            for c in Criterion::ALL {
                match crate::metrics::fate(
                    m.accuracy,
                    m.criterion(c),
                    b.accuracy,
                    b.criterion(c),
                    lambda,
                ) {
                    Ok(f) => {
                        let _ = write!(out, " {:>8.2}", f * 100.0);
                    }
                    Err(_) => {
                        let _ = write!(out, " {:>8}", "n/a");
                    }
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("run_id = \"x\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\nlearning_rat = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml("[train.weights]\ntau = -1.0\n").is_err());
        let partial = ExperimentConfig::from_toml("[train.weights]\nalpha = 0.6\n").unwrap();
        assert_eq!(partial.train.weights.alpha, 0.6);
        assert_eq!(partial.train.weights.tau, 0.07);
    }

    #[test]
    fn sweep_values_apply() {
        let base = TrainConfig::default();
        assert_eq!(
            Sweep::Order.apply(&base, "0:1").unwrap().stage_order,
            vec![0, 1]
        );
        assert!(!Sweep::Mixup.apply(&base, "off").unwrap().mixup.enabled);
        assert!(!Sweep::SupCon.apply(&base, "off").unwrap().use_supcon);
        assert_eq!(Sweep::Alpha.apply(&base, "0.4").unwrap().weights.alpha, 0.4);
        assert_eq!(Sweep::Buffer.apply(&base, "0").unwrap().buffer_capacity, 0);
        assert!(Sweep::Alpha.apply(&base, "lots").is_err());
        assert!(Sweep::Beta.apply(&base, "-1").is_err());
        assert_eq!(Sweep::Order.default_values(&[1, 0]), vec!["1:0", "0:1"]);
        assert_eq!("alpha".parse::<Sweep>().unwrap(), Sweep::Alpha);
        assert!("gamma".parse::<Sweep>().is_err());
    }

    #[test]
    fn error_record_is_json() {
        let rec = error_record(&Error::MissingFile("runs/x/vanilla/predictions.csv".into()));
        let v: serde_json::Value = serde_json::from_str(&rec).unwrap();
        assert_eq!(v["error"], "missing_file");
        assert!(v["message"]
            .as_str()
            .unwrap()
            .contains("vanilla/predictions.csv"));
    }

    #[test]
    fn svg_has_one_group_per_variant() {
        let m = MetricsReport {
            accuracy: 0.9,
            precision: 0.9,
            recall: 0.9,
            f1: 0.9,
            eopp0: 0.1,
            eopp1: 0.2,
            eodd: 0.3,
            num_samples: 10,
            skipped_classes: vec![],
        };
        let table = AblationTable {
            sweep: "alpha".into(),
            baseline: m.clone(),
            rows: vec![AblationRow {
                label: "0.6".into(),
                metrics: m,
                fate: vec![],
            }],
        };
        let svg = table.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect x=").count(), 6 + 3);
        let csv = table.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
