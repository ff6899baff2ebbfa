//! Score-level late fusion.
//!
//! Each backend emits a posterior probability of relevance per post. Fusion
//! takes a convex combination of those posteriors: equal weights give the
//! arithmetic mean, validation-F1 weights give merit-based fusion. A single
//! threshold then turns fused scores into labels.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::metrics::MetricsReport;

pub const FUSION_MODEL_ID: &str = "fusion";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("score sets cover different posts; symmetric difference: {0:?}")]
    Alignment(Vec<String>),
    #[error("invalid fusion config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("score {score} for post {post_id:?} is outside [0, 1]")]
    Range { post_id: String, score: f64 },
    #[error("duplicate post id {0:?} in score set")]
    Duplicate(String),
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
}

pub type Result<T, E = FusionError> = std::result::Result<T, E>;

/// Per-post relevance probabilities from one model, in post order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorScores {
    model_id: String,
    entries: Vec<(String, f64)>,
}

impl PosteriorScores {
    pub fn new(model_id: impl Into<String>, entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (id, s) in &entries {
            if !(0.0..=1.0).contains(s) {
                return Err(FusionError::Range {
                    post_id: id.clone(),
                    score: *s,
                });
            }
            if !seen.insert(id.as_str()) {
                return Err(FusionError::Duplicate(id.clone()));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            entries,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Writes `post_id,score` CSV with 6-decimal fixed-point scores.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file_err = |e: std::io::Error| FusionError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        let mut w = BufWriter::new(File::create(path).map_err(file_err)?);
        self.write_csv_to(&mut w).map_err(file_err)?;
        w.flush().map_err(file_err)
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["post_id", "score"])?;
        for (id, s) in &self.entries {
            wtr.write_record([id.as_str(), &format!("{s:.6}")])?;
        }
        wtr.flush()
    }

    pub fn read_csv(path: &Path, model_id: impl Into<String>) -> Result<Self> {
        let file_err = |reason: String| FusionError::File {
            path: path.display().to_string(),
            reason,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| file_err(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| file_err(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["post_id", "score"] {
            return Err(file_err(format!(
                "expected header post_id,score, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| file_err(e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let score: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| file_err(format!("line {line}: bad score {:?}", &rec[1])))?;
            entries.push((rec[0].to_string(), score));
        }
        Self::new(model_id, entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub weights: BTreeMap<String, f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl FusionConfig {
    pub fn equal<I, S>(model_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            weights: model_ids.into_iter().map(|m| (m.into(), 1.0)).collect(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn weighted<I, S>(weights: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self {
            weights: weights.into_iter().map(|(m, w)| (m.into(), w)).collect(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((m, w)) = self
            .weights
            .iter()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(FusionError::Config(format!(
                "weight for {m:?} must be finite and non-negative, got {w}"
            )));
        }
        if !self.weights.values().any(|w| *w > 0.0) {
            return Err(FusionError::Config("all weights are zero".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(FusionError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn normalized(&self) -> Result<BTreeMap<String, f64>> {
        self.validate()?;
        let total: f64 = self.weights.values().sum();
        Ok(self
            .weights
            .iter()
            .map(|(m, w)| (m.clone(), w / total))
            .collect())
    }
}

/// Fuses two or more aligned score sets into one (`model_id = "fusion"`).
///
/// With all weights equal the fused score is the plain mean `Σs / n`;
/// otherwise `Σ wᵢsᵢ / Σ wᵢ`. Output follows the first set's post order.
pub fn fuse(score_sets: &[PosteriorScores], config: &FusionConfig) -> Result<PosteriorScores> {
    if score_sets.len() < 2 {
        return Err(FusionError::Argument(format!(
            "fusion needs at least 2 score sets, got {}",
            score_sets.len()
        )));
    }
    config.validate()?;

    let set_ids: HashSet<&str> = score_sets.iter().map(|s| s.model_id()).collect();
    if set_ids.len() != score_sets.len() {
        return Err(FusionError::Config("score sets share a model id".into()));
    }
    let cfg_ids: HashSet<&str> = config.weights.keys().map(String::as_str).collect();
    if set_ids != cfg_ids {
        let mut diff: Vec<&str> = set_ids.symmetric_difference(&cfg_ids).copied().collect();
        diff.sort();
        return Err(FusionError::Config(format!(
            "weights and score sets name different models: {diff:?}"
        )));
    }

    let first = &score_sets[0];
    let first_ids: HashSet<&str> = first.ids().collect();
    let mut lookups: Vec<HashMap<&str, f64>> = Vec::with_capacity(score_sets.len());
    for set in score_sets {
        let ids: HashSet<&str> = set.ids().collect();
        if ids != first_ids {
            let mut diff: Vec<String> = ids
                .symmetric_difference(&first_ids)
                .map(|s| s.to_string())
                .collect();
            diff.sort();
            return Err(FusionError::Alignment(diff));
        }
        lookups.push(set.entries.iter().map(|(id, s)| (id.as_str(), *s)).collect());
    }

    let weights: Vec<f64> = score_sets
        .iter()
        .map(|s| config.weights[s.model_id()])
        .collect();
    let equal = weights.iter().all(|w| *w == weights[0]);
    let weight_total: f64 = weights.iter().sum();

    let mut entries = Vec::with_capacity(first.len());
    let mut row = vec![0.0; score_sets.len()];
    for (id, _) in &first.entries {
        for (slot, lookup) in row.iter_mut().zip(&lookups) {
            *slot = lookup[id.as_str()];
        }
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fused = if lo == hi {
            lo
        } else if equal {
            row.iter().sum::<f64>() / row.len() as f64
        } else {
            row.iter().zip(&weights).map(|(s, w)| w * s).sum::<f64>() / weight_total
        };
        entries.push((id.clone(), fused.clamp(lo, hi)));
    }
    PosteriorScores::new(FUSION_MODEL_ID, entries)
}

/// Weights proportional to each model's validation F1 (positive-class
/// flavor); the threshold stays at the default.
pub fn merit_weights(validation_reports: &BTreeMap<String, MetricsReport>) -> Result<FusionConfig> {
    let mut weights = BTreeMap::new();
    for (model, rep) in validation_reports {
        let f1 = rep.positive_class.f1;
        if !f1.is_finite() {
            return Err(FusionError::Config(format!("F1 for {model:?} is not finite")));
        }
        weights.insert(model.clone(), f1);
    }
    let total: f64 = weights.values().sum();
    if total <= 0.0 {
        return Err(FusionError::Config(
            "every model has validation F1 = 0; no merit to weight by".into(),
        ));
    }
    for w in weights.values_mut() {
        *w /= total;
    }
    Ok(FusionConfig {
        weights,
        threshold: DEFAULT_THRESHOLD,
    })
}

/// Label 1 iff `score >= threshold`; a score exactly at the threshold is
/// positive.
pub fn decide(scores: &PosteriorScores, threshold: f64) -> Vec<(String, Label)> {
    scores
        .entries
        .iter()
        .map(|(id, s)| {
            let label = if *s >= threshold {
                Label::Relevant
            } else {
                Label::Irrelevant
            };
            (id.clone(), label)
        })
        .collect()
}

pub fn write_predictions(path: &Path, predictions: &[(String, Label)]) -> Result<()> {
    let file_err = |e: std::io::Error| FusionError::File {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut wtr = csv::Writer::from_path(path).map_err(|e| file_err(e.into()))?;
    wtr.write_record(["post_id", "label"]).map_err(|e| file_err(e.into()))?;
    for (id, l) in predictions {
        wtr.write_record([id.as_str(), &l.as_u8().to_string()])
            .map_err(|e| file_err(e.into()))?;
    }
    wtr.flush().map_err(file_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{report, ConfusionMatrix};

    fn set(model: &str, scores: &[f64]) -> PosteriorScores {
        PosteriorScores::new(
            model,
            scores
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("p{i}"), *s))
                .collect(),
        )
        .unwrap()
    }

    fn three(a: f64, b: f64, c: f64) -> Vec<PosteriorScores> {
        vec![set("m1", &[a]), set("m2", &[b]), set("m3", &[c])]
    }

    #[test]
    fn equal_weights_mean() {
        let out = fuse(&three(0.9, 0.7, 0.5), &FusionConfig::equal(["m1", "m2", "m3"])).unwrap();
        assert!((out.entries()[0].1 - 0.7).abs() < 1e-15);
        assert_eq!(out.model_id(), FUSION_MODEL_ID);
    }

    #[test]
    fn one_hot_weights_select_model() {
        let sets = vec![
            set("m1", &[0.1, 0.93, 0.5]),
            set("m2", &[0.7, 0.2, 0.6]),
            set("m3", &[0.3, 0.3, 0.9]),
        ];
        let cfg = FusionConfig::weighted([("m1", 1.0), ("m2", 0.0), ("m3", 0.0)]);
        let out = fuse(&sets, &cfg).unwrap();
        assert_eq!(out.entries(), sets[0].entries());
    }

    #[test]
    fn weighted_matches_normalized() {
        let sets = three(0.8, 0.4, 0.4);
        let a = fuse(&sets, &FusionConfig::weighted([("m1", 2.0), ("m2", 1.0), ("m3", 1.0)])).unwrap();
        let b = fuse(&sets, &FusionConfig::weighted([("m1", 0.5), ("m2", 0.25), ("m3", 0.25)])).unwrap();
        assert!((a.entries()[0].1 - 0.6).abs() < 1e-12);
        assert!((a.entries()[0].1 - b.entries()[0].1).abs() < 1e-12);
    }

    #[test]
    fn fuse_errors() {
        let cfg = FusionConfig::equal(["m1", "m2"]);
        assert!(matches!(fuse(&[set("m1", &[0.5])], &cfg), Err(FusionError::Argument(_))));

        let a = set("m1", &[0.5, 0.5]);
        let b = PosteriorScores::new("m2", vec![("p0".into(), 0.1), ("zz".into(), 0.2)]).unwrap();
        match fuse(&[a.clone(), b], &cfg) {
            Err(FusionError::Alignment(d)) => assert_eq!(d, vec!["p1".to_string(), "zz".to_string()]),
            other => panic!("{other:?}"),
        }

        let zero = FusionConfig::weighted([("m1", 0.0), ("m2", 0.0)]);
        assert!(matches!(fuse(&[a.clone(), set("m2", &[0.1, 0.2])], &zero), Err(FusionError::Config(_))));

        let wrong = FusionConfig::equal(["m1", "m9"]);
        assert!(matches!(fuse(&[a, set("m2", &[0.1, 0.2])], &wrong), Err(FusionError::Config(_))));
    }

    #[test]
    fn output_follows_first_set_order() {
        let a = PosteriorScores::new("a", vec![("x".into(), 0.2), ("y".into(), 0.4)]).unwrap();
        let b = PosteriorScores::new("b", vec![("y".into(), 0.6), ("x".into(), 0.4)]).unwrap();
        let out = fuse(&[a, b], &FusionConfig::equal(["a", "b"])).unwrap();
        let ids: Vec<&str> = out.ids().collect();
        assert_eq!(ids, vec!["x", "y"]);
        assert!((out.entries()[0].1 - 0.3).abs() < 1e-15);
        assert!((out.entries()[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scores_out_of_range_rejected() {
        assert!(matches!(
            PosteriorScores::new("m", vec![("a".into(), 1.5)]),
            Err(FusionError::Range { .. })
        ));
        assert!(PosteriorScores::new("m", vec![("a".into(), f64::NAN)]).is_err());
    }

    fn rep_with_f1(f1_target: f64) -> MetricsReport {
        let mut r = report(ConfusionMatrix::new(1, 0, 0, 1)).unwrap();
        r.positive_class.f1 = f1_target;
        r
    }

    #[test]
    fn merit_weights_from_dev_f1() {
        let reports: BTreeMap<String, MetricsReport> = [
            ("run2".to_string(), rep_with_f1(0.950)),
            ("run3".to_string(), rep_with_f1(0.881)),
            ("run4".to_string(), rep_with_f1(0.915)),
        ]
        .into();
        let cfg = merit_weights(&reports).unwrap();
        let w: Vec<f64> = cfg.weights.values().copied().collect();
        for (got, want) in w.iter().zip([0.346, 0.321, 0.333]) {
            assert!((got - want).abs() < 0.0005, "{got} vs {want}");
        }
        assert_eq!(cfg.threshold, 0.5);
    }

    #[test]
    fn merit_weights_degenerate() {
        let eq: BTreeMap<String, MetricsReport> =
            [("a".to_string(), rep_with_f1(0.7)), ("b".to_string(), rep_with_f1(0.7))].into();
        let w = merit_weights(&eq).unwrap().weights;
        assert_eq!(w["a"], w["b"]);

        let hot: BTreeMap<String, MetricsReport> =
            [("a".to_string(), rep_with_f1(1.0)), ("b".to_string(), rep_with_f1(0.0))].into();
        let cfg = merit_weights(&hot).unwrap();
        assert_eq!((cfg.weights["a"], cfg.weights["b"]), (1.0, 0.0));
        let sets = vec![set("a", &[0.2, 0.8]), set("b", &[0.9, 0.1])];
        assert_eq!(fuse(&sets, &cfg).unwrap().entries(), sets[0].entries());

        let none: BTreeMap<String, MetricsReport> =
            [("a".to_string(), rep_with_f1(0.0)), ("b".to_string(), rep_with_f1(0.0))].into();
        assert!(matches!(merit_weights(&none), Err(FusionError::Config(_))));
    }

    #[test]
    fn decide_examples() {
        let s = PosteriorScores::new("m", vec![("a".into(), 0.6), ("b".into(), 0.4)]).unwrap();
        assert_eq!(
            decide(&s, 0.5),
            vec![("a".to_string(), Label::Relevant), ("b".to_string(), Label::Irrelevant)]
        );
        let tie = PosteriorScores::new("m", vec![("a".into(), 0.5)]).unwrap();
        assert_eq!(decide(&tie, 0.5)[0].1, Label::Relevant);
        assert!(decide(&s, 0.0).iter().all(|(_, l)| *l == Label::Relevant));
    }

    #[test]
    fn score_csv_round_trip_is_six_decimals() {
        let s = PosteriorScores::new("m", vec![("a".into(), 0.123456789), ("b,c".into(), 1.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "post_id,score\na,0.123457\n\"b,c\",1.000000\n");
        let back = PosteriorScores::read_csv(&path, "m").unwrap();
        assert_eq!(back.entries()[0], ("a".to_string(), 0.123457));
    }
}
