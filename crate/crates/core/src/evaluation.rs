//! Accuracy metrics over a set of estimated reports.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::phantom::PhantomTruth;
use crate::report::StenosisReport;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no case carries ground truth for {0}")]
    NoEligibleCase(Metric),
    #[error("case {0} has no ground truth at all")]
    NoTruth(String),
    #[error("unknown case '{0}' in pair")]
    UnknownCase(String),
    #[error("{path}: {msg}")]
    Read { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Psa,
    Psd,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Psa => "PSA",
            Metric::Psd => "PSD",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub sequence_id: String,
    pub gt_psa: Option<f64>,
    pub gt_psd: Option<f64>,
    /// Closed interval of acceptable keyframes.
    pub gt_keyframe_interval: Option<(usize, usize)>,
    pub estimate: StenosisReport,
}

impl EvalCase {
    pub fn new(
        sequence_id: impl Into<String>,
        gt_psa: Option<f64>,
        gt_psd: Option<f64>,
        gt_keyframe_interval: Option<(usize, usize)>,
        estimate: StenosisReport,
    ) -> Result<Self, EvalError> {
        let sequence_id = sequence_id.into();
        if gt_psa.is_none() && gt_psd.is_none() && gt_keyframe_interval.is_none() {
            return Err(EvalError::NoTruth(sequence_id));
        }
        Ok(Self {
            sequence_id,
            gt_psa,
            gt_psd,
            gt_keyframe_interval,
            estimate,
        })
    }

    fn pair(&self, metric: Metric) -> Option<(f64, f64)> {
        match metric {
            Metric::Psa => self.gt_psa.map(|g| (g, self.estimate.psa())),
            Metric::Psd => self.gt_psd.map(|g| (g, self.estimate.psd())),
        }
    }

    /// None when the case has no interval.
    pub fn keyframe_correct(&self) -> Option<bool> {
        self.gt_keyframe_interval
            .map(|(a, b)| (a..=b).contains(&self.estimate.keyframe_index))
    }
}

/// `|GT − estimate|` for every case carrying the metric.
pub fn absolute_errors(cases: &[EvalCase], metric: Metric) -> Vec<(String, f64)> {
    cases
        .iter()
        .filter_map(|c| {
            c.pair(metric)
                .map(|(g, e)| (c.sequence_id.clone(), (g - e).abs()))
        })
        .collect()
}

/// Mean absolute error over the cases carrying the metric.
pub fn mae(cases: &[EvalCase], metric: Metric) -> Result<f64, EvalError> {
    let errors = absolute_errors(cases, metric);
    if errors.is_empty() {
        return Err(EvalError::NoEligibleCase(metric));
    }
    Ok(errors.iter().map(|e| e.1).sum::<f64>() / errors.len() as f64)
}

/// Percentage of cases with an interval whose keyframe lies inside it.
pub fn correct_keyframe_rate(cases: &[EvalCase]) -> Option<f64> {
    let verdicts: Vec<bool> = cases
        .iter()
        .filter_map(EvalCase::keyframe_correct)
        .collect();
    if verdicts.is_empty() {
        return None;
    }
    let hits = verdicts.iter().filter(|v| **v).count();
    Some(100.0 * hits as f64 / verdicts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub min: f64,
    pub max: f64,
    pub diff: f64,
}

impl fmt::Display for Consistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}-{:.2} ({:.2})", self.min, self.max, self.diff)
    }
}

pub fn consistency_of(a: f64, b: f64) -> Consistency {
    Consistency {
        min: a.min(b),
        max: a.max(b),
        diff: (a - b).abs(),
    }
}

/// Range and difference of two reports of the same airway.
pub fn consistency(a: &StenosisReport, b: &StenosisReport, metric: Metric) -> Consistency {
    match metric {
        Metric::Psa => consistency_of(a.psa(), b.psa()),
        Metric::Psd => consistency_of(a.psd(), b.psd()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedT {
    pub t: f64,
    pub dof: usize,
    pub mean_diff: f64,
}

/// Paired t statistic of estimate minus truth. None below two pairs or
/// when every difference is identical.
pub fn paired_t(cases: &[EvalCase], metric: Metric) -> Option<PairedT> {
    let d: Vec<f64> = cases
        .iter()
        .filter_map(|c| c.pair(metric))
        .map(|(g, e)| e - g)
        .collect();
    let n = d.len();
    if n < 2 {
        return None;
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var > 0.0).then(|| PairedT {
        t: mean / (var / n as f64).sqrt(),
        dof: n - 1,
        mean_diff: mean,
    })
}

/// Case list on disk. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    pub cases: Vec<ManifestCase>,
    /// Pairs of sequence ids reported for consistency.
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCase {
    pub sequence_id: String,
    pub report: PathBuf,
    #[serde(default)]
    pub gt_psa: Option<f64>,
    #[serde(default)]
    pub gt_psd: Option<f64>,
    #[serde(default)]
    pub gt_keyframe_interval: Option<(usize, usize)>,
    /// Phantom truth file filling whichever ground truth is not given inline.
    #[serde(default)]
    pub truth: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| EvalError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub cases: Vec<EvalCase>,
    pub pairs: Vec<(String, String)>,
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest, EvalError> {
    let manifest: EvalManifest = parse_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for c in manifest.cases {
        let estimate: StenosisReport = parse_json(&base.join(&c.report))?;
        let truth: Option<PhantomTruth> = c
            .truth
            .as_ref()
            .map(|t| parse_json(&base.join(t)))
            .transpose()?;
        cases.push(EvalCase::new(
            c.sequence_id,
            c.gt_psa.or(truth.map(|t| t.psa_true)),
            c.gt_psd.or(truth.map(|t| t.psd_true)),
            c.gt_keyframe_interval
                .or(truth.and_then(|t| t.keyframe_interval)),
            estimate,
        )?);
    }
    for (a, b) in &manifest.pairs {
        for id in [a, b] {
            if !cases.iter().any(|c| &c.sequence_id == id) {
                return Err(EvalError::UnknownCase(id.clone()));
            }
        }
    }
    Ok(LoadedManifest {
        cases,
        pairs: manifest.pairs,
    })
}

/// Per-case errors, MAE over all cases and over correct-keyframe cases,
/// keyframe rate, t statistics and pair consistency as plain text.
pub fn summary(loaded: &LoadedManifest) -> String {
    use std::fmt::Write as _;
    let cases = &loaded.cases;
    let mut s = String::new();
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    writeln!(
        s,
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "sequence", "PSA", "AE", "PSD", "AE", "KF"
    )
    .unwrap();
    for c in cases {
        let kf = match c.keyframe_correct() {
            Some(true) => "ok",
            Some(false) => "miss",
            None => "-",
        };
        writeln!(
            s,
            "{:<24} {:>8.2} {:>8} {:>8.2} {:>8} {:>6}",
            c.sequence_id,
            c.estimate.psa(),
            cell(c.pair(Metric::Psa).map(|(g, e)| (g - e).abs())),
            c.estimate.psd(),
            cell(c.pair(Metric::Psd).map(|(g, e)| (g - e).abs())),
            kf
        )
        .unwrap();
    }
    let correct: Vec<EvalCase> = cases
        .iter()
        .filter(|c| c.keyframe_correct() != Some(false))
        .cloned()
        .collect();
    for metric in [Metric::Psa, Metric::Psd] {
        let all = mae(cases, metric).ok();
        let ok = mae(&correct, metric).ok();
        writeln!(
            s,
            "{metric} MAE: all tests {}, correct KF only {}",
            cell(all),
            cell(ok)
        )
        .unwrap();
        if let Some(t) = paired_t(cases, metric) {
            writeln!(
                s,
                "{metric} paired t: {:.4} (dof {}, mean diff {:.2})",
                t.t, t.dof, t.mean_diff
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        "correct keyframes: {}%",
        cell(correct_keyframe_rate(cases))
    )
    .unwrap();
    for (a, b) in &loaded.pairs {
        let ra = &cases
            .iter()
            .find(|c| &c.sequence_id == a)
            .expect("checked on load")
            .estimate;
        let rb = &cases
            .iter()
            .find(|c| &c.sequence_id == b)
            .expect("checked on load")
            .estimate;
        writeln!(
            s,
            "{a} / {b}: PSA {}  PSD {}",
            consistency(ra, rb, Metric::Psa),
            consistency(ra, rb, Metric::Psd)
        )
        .unwrap();
    }
    s
}
