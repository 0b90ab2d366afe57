use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::imageio::DatasetManifest;
use crate::metrics::{fit_logistic5, pearson, raw_rmse, srcc, Logistic5Params, MetricsError};
use crate::model::{score_image, Checkpoint};
use crate::pipeline::{sample_entry, PipelineError};
use crate::sampling::SamplerConfig;
use crate::Real;

/// Smallest group that gets a logistic fit; smaller groups use raw predictions.
pub const MIN_FIT_POINTS: usize = 5;

/// One scored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePrediction {
    pub image: String,
    pub prediction: f64,
    pub mos: f64,
    pub distortion_label: String,
    pub n_viewports: usize,
}

/// Metrics for one set of images. Undefined metrics are `None` with a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub rmse: Option<f64>,
    /// RMSE of predictions before remapping.
    pub raw_rmse: Option<f64>,
    pub logistic: Option<Logistic5Params>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl GroupMetrics {
    pub fn compute(preds: &[f64], labels: &[f64]) -> Self {
        let mut notes = Vec::new();
        let srcc = keep(&mut notes, "srcc", srcc(preds, labels));
        let raw = keep(&mut notes, "raw_rmse", raw_rmse(preds, labels));
        let (plcc, rmse, logistic) = if preds.len() < MIN_FIT_POINTS {
            notes.push(format!(
                "fewer than {MIN_FIT_POINTS} images: plcc and rmse use unmapped predictions"
            ));
            (keep(&mut notes, "plcc", pearson(preds, labels)), raw, None)
        } else {
            match fit_logistic5(preds, labels) {
                Ok(fit) => {
                    let mapped = fit.apply_all(preds);
                    (
                        keep(&mut notes, "plcc", pearson(&mapped, labels)),
                        raw_rmse(&mapped, labels).ok(),
                        Some(fit),
                    )
                }
                Err(e) => {
                    notes.push(format!("logistic fit: {e}"));
                    (None, None, None)
                }
            }
        };
        Self {
            n: preds.len(),
            srcc,
            plcc,
            rmse,
            raw_rmse: raw,
            logistic,
            notes,
        }
    }
}

fn keep(notes: &mut Vec<String>, what: &str, r: Result<f64, MetricsError>) -> Option<f64> {
    r.map_err(|e| notes.push(format!("{what}: {e}"))).ok()
}

/// Overall and per-distortion metrics plus every image prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: GroupMetrics,
    /// Keyed by distortion label; the logistic map is fitted within each group.
    pub per_distortion: BTreeMap<String, GroupMetrics>,
    /// Sorted by image path.
    pub predictions: Vec<ImagePrediction>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialise")
    }

    /// `image,prediction,mos,distortion_label` rows with a header.
    pub fn predictions_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image", "prediction", "mos", "distortion_label"])
            .expect("in-memory write");
        for p in &self.predictions {
            w.write_record([
                p.image.as_str(),
                &p.prediction.to_string(),
                &p.mos.to_string(),
                p.distortion_label.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Builds a report from per-image predictions; input order is irrelevant.
pub fn report_from_predictions(mut predictions: Vec<ImagePrediction>) -> EvalReport {
    predictions.sort_by(|a, b| a.image.cmp(&b.image));
    let split = |items: &[&ImagePrediction]| -> (Vec<f64>, Vec<f64>) {
        (
            items.iter().map(|p| p.prediction).collect(),
            items.iter().map(|p| p.mos).collect(),
        )
    };
    let all: Vec<&ImagePrediction> = predictions.iter().collect();
    let (p, l) = split(&all);
    let overall = GroupMetrics::compute(&p, &l);
    let mut groups: BTreeMap<String, Vec<&ImagePrediction>> = BTreeMap::new();
    for item in &predictions {
        groups.entry(item.distortion_label.clone()).or_default().push(item);
    }
    let per_distortion = groups
        .into_iter()
        .map(|(k, items)| {
            let (p, l) = split(&items);
            (k, GroupMetrics::compute(&p, &l))
        })
        .collect();
    EvalReport {
        overall,
        per_distortion,
        predictions,
    }
}

/// Scores every manifest image (mean over its viewports) and reports metrics.
///
/// Keys seen in training keep their source row; others use the unknown row.
pub fn evaluate<T: Real>(
    manifest: &DatasetManifest,
    checkpoint: &Checkpoint<T>,
    sampler: &SamplerConfig,
) -> Result<EvalReport, PipelineError> {
    if manifest.is_empty() {
        return Err(PipelineError::Invalid("evaluation manifest is empty".into()));
    }
    checkpoint.params.config.validate_resolution(sampler.resolution)?;
    let mut predictions = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let source = checkpoint.entry_source(entry);
        let sampled = sample_entry::<T>(manifest, entry, sampler, source)?;
        let score = score_image(&sampled.viewports, &checkpoint.params)?;
        predictions.push(ImagePrediction {
            image: entry.image_path.clone(),
            prediction: score.to_f64_lossy(),
            mos: entry.mos,
            distortion_label: entry.distortion_label.clone(),
            n_viewports: sampled.viewports.len(),
        });
    }
    let report = report_from_predictions(predictions);
    for note in &report.overall.notes {
        warn!("overall: {note}");
    }
    Ok(report)
}
