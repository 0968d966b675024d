//! Accuracy scoring and configuration sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covariance::{ActivitySource, SmoothingConfig};
use crate::error::{Error, Result};
use crate::fusion::{Fusion, ItdGrid, DEFAULT_BETA};
use crate::pipeline::{for_each_frame, frame_activity, fuse, FeatureConfig};
use crate::scene::{synthesize, NoiseKind, Reverb, SceneConfig};
use crate::spectra::Method;
use crate::steering::{angular_distance, SteeringDatabase};
use crate::stft::{stft_analyze, StftConfig};

pub const DEFAULT_TOLERANCE_DEG: f64 = 5.0;
pub const TSV_VERSION: &str = "# bidoa sweep v1";

/// `ACC(l) = j_correct / J` with greedy one-to-one matching: the closest
/// remaining (estimate, truth) pair is matched first, ties towards lower
/// indices. A pair counts when its circular distance is within
/// `tolerance_deg` (inclusive). Missing estimates are simply absent.
pub fn score_frame(estimates: &[f64], truth: &[f64], tolerance_deg: f64) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let mut pairs: Vec<(f64, usize, usize)> = estimates
        .iter()
        .enumerate()
        .flat_map(|(e, &est)| truth.iter().enumerate().map(move |(t, &tr)| (angular_distance(est, tr), e, t)))
        .filter(|(d, _, _)| *d <= tolerance_deg)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimates.len()];
    let mut used_t = vec![false; truth.len()];
    let mut correct = 0usize;
    for (_, e, t) in pairs {
        if !used_e[e] && !used_t[t] {
            used_e[e] = true;
            used_t[t] = true;
            correct += 1;
        }
    }
    correct as f64 / truth.len() as f64
}

/// Median of the finite values; `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A threshold in dB that may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(pub f64);

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt_db(self.0, f)
    }
}

fn fmt_db(v: f64, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
    if v == f64::NEG_INFINITY {
        f.write_str("-inf")
    } else if v == f64::INFINITY {
        f.write_str("inf")
    } else {
        write!(f, "{v}")
    }
}

/// Parses a dB value, accepting `-inf`, `inf` and `+inf`.
pub fn parse_db(s: &str) -> Result<f64> {
    match s.trim() {
        "-inf" | "-Inf" | "-INF" => Ok(f64::NEG_INFINITY),
        "inf" | "+inf" | "Inf" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| Error::Config(format!("not a dB value: {s:?}"))),
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Threshold(v)),
            Raw::Str(s) => parse_db(&s).map(Threshold).map_err(serde::de::Error::custom),
        }
    }
}

fn default_snrs() -> Vec<Threshold> {
    vec![Threshold(10.0)]
}
fn default_reverb() -> Vec<Reverb> {
    vec![Reverb::Medium]
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_fusions() -> Vec<Fusion> {
    Fusion::ALL.to_vec()
}
fn default_thresholds() -> Vec<Threshold> {
    vec![Threshold(f64::NEG_INFINITY)]
}
fn default_duration() -> f64 {
    5.0
}
fn default_half() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE_DEG
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_pair_stride() -> usize {
    1
}

/// Scene matrix and estimator grid of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Explicit DOA sets, one per scene family.
    #[serde(default)]
    pub doa_sets: Vec<Vec<f64>>,
    /// Alternatively: all ordered pairs of distinct values, keeping every
    /// `pair_stride`-th.
    #[serde(default)]
    pub doa_values: Vec<f64>,
    #[serde(default = "default_pair_stride")]
    pub pair_stride: usize,
    #[serde(default = "default_snrs")]
    pub snr_db: Vec<Threshold>,
    #[serde(default = "default_reverb")]
    pub reverb: Vec<Reverb>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_fusions")]
    pub fusions: Vec<Fusion>,
    #[serde(default = "default_thresholds")]
    pub cdr_thresh_db: Vec<Threshold>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_half")]
    pub lead_in_s: f64,
    /// Frames starting earlier than this after speech onset are excluded
    /// from the warm-up-excluded accuracy.
    #[serde(default = "default_half")]
    pub warmup_s: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance_deg: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub itd_grid: Option<String>,
    /// Use the energy detector instead of the simulator's activity flags.
    #[serde(default)]
    pub energy_vad: bool,
    #[serde(default)]
    pub keep_frames: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Ordered pairs of distinct values, every `stride`-th one.
pub fn ordered_pairs(values: &[f64], stride: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for &a in values {
        for &b in values {
            if angular_distance(a, b) > 0.0 {
                out.push(vec![a, b]);
            }
        }
    }
    out.into_iter().step_by(stride.max(1)).collect()
}

/// One scene of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub config: SceneConfig,
}

impl RunSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn doa_sets(&self) -> Vec<Vec<f64>> {
        let mut sets = self.doa_sets.clone();
        sets.extend(ordered_pairs(&self.doa_values, self.pair_stride));
        sets
    }

    pub fn itd_grid(&self) -> Result<ItdGrid> {
        self.itd_grid.as_deref().map_or(Ok(ItdGrid::default()), ItdGrid::parse)
    }

    pub fn validate(&self) -> Result<()> {
        let sets = self.doa_sets();
        let cfg = |m: &str| Err(Error::Config(m.into()));
        if sets.is_empty() || self.snr_db.is_empty() || self.reverb.is_empty() || self.seeds.is_empty() {
            return cfg("scene matrix is empty");
        }
        if self.methods.is_empty() || self.fusions.is_empty() || self.cdr_thresh_db.is_empty() {
            return cfg("estimator grid is empty");
        }
        if self.cdr_thresh_db.iter().any(|t| t.0.is_nan()) || self.cdr_thresh_db.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return cfg("CDR thresholds must be strictly increasing");
        }
        if !(self.tolerance_deg >= 0.0) || !(self.warmup_s >= 0.0) {
            return cfg("tolerance and warm-up must be non-negative");
        }
        if self.snr_db.iter().any(|s| s.0 == f64::NEG_INFINITY) {
            return cfg("SNR of -inf is not a scene");
        }
        self.itd_grid()?;
        for s in self.scenes() {
            s.config.validate()?;
        }
        Ok(())
    }

    /// The scene matrix in deterministic order: DOA set, SNR, reverb, seed.
    pub fn scenes(&self) -> Vec<SceneSpec> {
        let mut out = Vec::new();
        for doas in self.doa_sets() {
            for snr in &self.snr_db {
                for &reverb in &self.reverb {
                    for &seed in &self.seeds {
                        let idx = out.len() as u64;
                        out.push(SceneSpec {
                            scene_id: format!("s{idx:04}"),
                            config: SceneConfig {
                                doas_deg: doas.clone(),
                                snr_db: snr.0.is_finite().then_some(snr.0),
                                reverb,
                                duration_s: self.duration_s,
                                lead_in_s: self.lead_in_s,
                                noise: self.noise,
                                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ idx,
                                sources: Vec::new(),
                            },
                        });
                    }
                }
            }
        }
        out
    }

    fn estimators(&self) -> Vec<EstimatorKey> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &fusion in &self.fusions {
                for &t in &self.cdr_thresh_db {
                    out.push(EstimatorKey { method, fusion, cdr_thresh: t });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorKey {
    pub method: Method,
    pub fusion: Fusion,
    pub cdr_thresh: Threshold,
}

/// Result of one estimator on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub scene_id: String,
    #[serde(flatten)]
    pub key: EstimatorKey,
    pub snr_db: Option<f64>,
    pub reverb: Reverb,
    pub doas_deg: Vec<f64>,
    /// Mean frame accuracy after the warm-up; `None` if the scene failed.
    pub acc: Option<f64>,
    /// Mean frame accuracy over all active frames.
    pub acc_all: Option<f64>,
    pub frames: usize,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub frame_acc: Vec<f64>,
}

/// Medians of one estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(flatten)]
    pub key: EstimatorKey,
    pub median_acc: f64,
    pub median_acc_all: f64,
    pub median_by_reverb: BTreeMap<String, f64>,
    pub median_all_by_reverb: BTreeMap<String, f64>,
    pub scenes: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestThreshold {
    pub method: Method,
    pub fusion: Fusion,
    pub cdr_thresh: Threshold,
    pub median_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rows: Vec<SceneRow>,
    pub summary: Vec<SummaryRow>,
    pub best: Vec<BestThreshold>,
}

impl AccuracyReport {
    pub fn summary_for(&self, method: Method, fusion: Fusion, thresh: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.key.method == method && s.key.fusion == fusion && s.key.cdr_thresh.0 == thresh)
    }

    pub fn best_for(&self, method: Method, fusion: Fusion) -> Option<&BestThreshold> {
        self.best.iter().find(|b| b.method == method && b.fusion == fusion)
    }

    /// One row per (scene, estimator), preceded by the version line and the
    /// column header. `median_group` is the median accuracy of the row's
    /// estimator over scenes with the same reverb preset.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(TSV_VERSION);
        out.push('\n');
        out.push_str("scene_id\tmethod\tfusion\tcdr_thresh\tsnr_db\treverb\tacc\tmedian_group\n");
        for r in &self.rows {
            let group = self
                .summary_for(r.key.method, r.key.fusion, r.key.cdr_thresh.0)
                .and_then(|s| s.median_by_reverb.get(r.reverb.name()).copied())
                .unwrap_or(f64::NAN);
            let acc = r.acc.map_or_else(|| "failed".to_string(), |a| format!("{a:.6}"));
            let snr = r.snr_db.map_or_else(|| "inf".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                r.scene_id,
                r.key.method,
                r.key.fusion,
                r.key.cdr_thresh,
                snr,
                r.reverb.name(),
                acc,
                group
            );
        }
        out
    }

    /// Fixed-width table of the summary medians.
    pub fn summary_table(&self) -> String {
        let mut out = String::from("method\tfusion\tcdr_thresh\tmedian_acc\tmedian_acc_all\tbest\n");
        for s in &self.summary {
            let best = self
                .best_for(s.key.method, s.key.fusion)
                .is_some_and(|b| b.cdr_thresh == s.key.cdr_thresh);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{}",
                s.key.method,
                s.key.fusion,
                s.key.cdr_thresh,
                s.median_acc,
                s.median_acc_all,
                if best { "*" } else { "" }
            );
        }
        out
    }
}

#[derive(Default, Clone)]
struct Tally {
    sum: f64,
    n: usize,
    sum_all: f64,
    n_all: usize,
    frames: Vec<f64>,
}

/// (acc, acc_all, frames, per-frame acc) of one estimator.
type SceneScore = (f64, f64, usize, Vec<f64>);

/// Runs every estimator on one scene. Frame accuracy is averaged over
/// active frames; the warm-up-excluded mean only uses frames that start at
/// least `warmup_s` after speech onset.
fn evaluate_scene(spec: &RunSpec, scene: &SceneSpec, db: &SteeringDatabase) -> Result<Vec<SceneScore>> {
    let stft = StftConfig::default();
    let sc = synthesize(&scene.config, db, &stft)?;
    let y = stft_analyze(&sc.mixture, &stft)?;
    let mut smoothing = SmoothingConfig::for_stft(&stft);
    if spec.energy_vad {
        smoothing.activity_source = ActivitySource::EnergyThreshold;
    }
    let activity = frame_activity(&y, &smoothing, Some(&sc.truth.vad))?;
    let features = FeatureConfig { stft, smoothing, itd_grid: spec.itd_grid()?, beta: spec.beta, methods: spec.methods.clone() };
    let speakers = scene.config.speakers();
    let warm_start = sc.truth.onset_sample + (spec.warmup_s * stft.sample_rate).round() as usize;
    let estimators = spec.estimators();
    let mut tallies = vec![Tally::default(); estimators.len()];
    for_each_frame(&y, &activity, db, features, |f| {
        let post = f.frame * stft.hop >= warm_start;
        for (ti, t) in spec.cdr_thresh_db.iter().enumerate() {
            let grouping = f.grouping(t.0, speakers);
            for (mi, &method) in spec.methods.iter().enumerate() {
                let sps = f.spectrum(method).expect("configured method");
                for (fi, &fusion) in spec.fusions.iter().enumerate() {
                    let est = fuse(sps, fusion, &grouping, speakers, db.directions());
                    let acc = score_frame(&est.azimuths(), &sc.truth.doas_deg, spec.tolerance_deg);
                    let e = (mi * spec.fusions.len() + fi) * spec.cdr_thresh_db.len() + ti;
                    let tally = &mut tallies[e];
                    tally.sum_all += acc;
                    tally.n_all += 1;
                    if post {
                        tally.sum += acc;
                        tally.n += 1;
                    }
                    if spec.keep_frames {
                        tally.frames.push(acc);
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(tallies
        .into_iter()
        .map(|t| {
            let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
            (mean(t.sum, t.n), mean(t.sum_all, t.n_all), t.n, t.frames)
        })
        .collect())
}

/// Runs the whole matrix. Scenes are evaluated in parallel; rows come out
/// in scene order, then method, fusion and threshold order, so the report
/// only depends on the spec. A failing scene yields rows with an error
/// instead of aborting the sweep.
pub fn run_sweep(spec: &RunSpec, db: &SteeringDatabase) -> Result<AccuracyReport> {
    spec.validate()?;
    let scenes = spec.scenes();
    let estimators = spec.estimators();
    let results: Vec<Result<Vec<SceneScore>>> =
        scenes.par_iter().map(|s| evaluate_scene(spec, s, db)).collect();

    let mut rows = Vec::with_capacity(scenes.len() * estimators.len());
    for (scene, res) in scenes.iter().zip(results) {
        for (e, key) in estimators.iter().enumerate() {
            let base = SceneRow {
                scene_id: scene.scene_id.clone(),
                key: *key,
                snr_db: scene.config.snr_db,
                reverb: scene.config.reverb,
                doas_deg: scene.config.doas_deg.clone(),
                acc: None,
                acc_all: None,
                frames: 0,
                error: None,
                frame_acc: Vec::new(),
            };
            rows.push(match &res {
                Ok(v) => {
                    let (acc, acc_all, frames, fa) = &v[e];
                    SceneRow { acc: Some(*acc), acc_all: Some(*acc_all), frames: *frames, frame_acc: fa.clone(), ..base }
                }
                Err(err) => SceneRow { error: Some(err.to_string()), ..base },
            });
        }
    }
    let summary = summarize(&rows, &estimators);
    let best = best_thresholds(spec, &summary);
    Ok(AccuracyReport { rows, summary, best })
}

fn summarize(rows: &[SceneRow], estimators: &[EstimatorKey]) -> Vec<SummaryRow> {
    estimators
        .iter()
        .map(|key| {
            let mine: Vec<&SceneRow> = rows.iter().filter(|r| r.key == *key).collect();
            let col = |f: fn(&SceneRow) -> Option<f64>, rs: &[&SceneRow]| {
                median(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let mut median_by_reverb = BTreeMap::new();
            let mut median_all_by_reverb = BTreeMap::new();
            let mut reverbs: Vec<Reverb> = mine.iter().map(|r| r.reverb).collect();
            reverbs.sort();
            reverbs.dedup();
            for rv in reverbs {
                let group: Vec<&SceneRow> = mine.iter().copied().filter(|r| r.reverb == rv).collect();
                median_by_reverb.insert(rv.name().to_string(), col(|r| r.acc, &group));
                median_all_by_reverb.insert(rv.name().to_string(), col(|r| r.acc_all, &group));
            }
            SummaryRow {
                key: *key,
                median_acc: col(|r| r.acc, &mine),
                median_acc_all: col(|r| r.acc_all, &mine),
                median_by_reverb,
                median_all_by_reverb,
                scenes: mine.len(),
                failed: mine.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

/// Threshold with the highest pooled median per method and fusion; the
/// lowest such threshold on ties.
fn best_thresholds(spec: &RunSpec, summary: &[SummaryRow]) -> Vec<BestThreshold> {
    let mut out = Vec::new();
    for &method in &spec.methods {
        for &fusion in &spec.fusions {
            let mut best: Option<&SummaryRow> = None;
            for s in summary.iter().filter(|s| s.key.method == method && s.key.fusion == fusion) {
                if best.is_none_or(|b| s.median_acc > b.median_acc || (b.median_acc.is_nan() && !s.median_acc.is_nan())) {
                    best = Some(s);
                }
            }
            if let Some(b) = best {
                out.push(BestThreshold { method, fusion, cdr_thresh: b.key.cdr_thresh, median_acc: b.median_acc });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steering::{default_directions, HeadModelConfig};
    use proptest::prelude::*;

    #[test]
    fn scoring_examples() {
        assert_eq!(score_frame(&[30.0, -60.0], &[-60.0, 32.0], 5.0), 1.0);
        assert_eq!(score_frame(&[30.0, 90.0], &[30.0, -60.0], 5.0), 0.5);
        assert_eq!(score_frame(&[35.0], &[30.0], 5.0), 1.0);
        assert_eq!(score_frame(&[36.0], &[30.0], 5.0), 0.0);
        assert_eq!(score_frame(&[], &[30.0, 60.0], 5.0), 0.0);
        assert_eq!(score_frame(&[178.0], &[-179.0], 5.0), 1.0);
    }

    #[test]
    fn greedy_never_double_assigns() {
        assert_eq!(score_frame(&[30.0, 31.0], &[30.0, 90.0], 5.0), 0.5);
        assert_eq!(score_frame(&[30.0], &[29.0, 31.0], 5.0), 0.5);
    }

    fn brute_median(v: &[f64]) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    }

    proptest! {
        #[test]
        fn score_is_permutation_invariant(
            est in prop::collection::vec(-180.0f64..180.0, 0..4),
            truth in prop::collection::vec(-180.0f64..180.0, 1..4),
            rot in 0usize..4,
        ) {
            let a = score_frame(&est, &truth, 5.0);
            let mut e2 = est.clone();
            e2.reverse();
            let mut t2 = truth.clone();
            let r = rot % t2.len();
            t2.rotate_left(r);
            prop_assert_eq!(a, score_frame(&e2, &t2, 5.0));
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn median_matches_sort_oracle(v in prop::collection::vec(0.0f64..1.0, 1..30)) {
            prop_assert_eq!(median(&v), brute_median(&v));
        }
    }

    #[test]
    fn thresholds_parse() {
        let spec = RunSpec::from_toml("doa_sets = [[0, 90]]\ncdr_thresh_db = [\"-inf\", -3, 0.5]").unwrap();
        assert_eq!(spec.cdr_thresh_db, vec![Threshold(f64::NEG_INFINITY), Threshold(-3.0), Threshold(0.5)]);
        assert!(RunSpec::from_toml("doa_sets = [[0, 90]]\ncdr_thresh_db = [3, 0]").unwrap_err().is_config());
        assert!(RunSpec::from_toml("doa_sets = [[0, 90]]\nbogus = 1").unwrap_err().is_config());
        assert!(RunSpec::from_toml("").unwrap_err().is_config());
        assert_eq!(Threshold(f64::NEG_INFINITY).to_string(), "-inf");
    }

    #[test]
    fn pair_matrix() {
        let values: Vec<f64> = (0..12).map(|i| -150.0 + 30.0 * f64::from(i)).collect();
        assert_eq!(ordered_pairs(&values, 1).len(), 132);
        let every11 = ordered_pairs(&values, 11);
        assert_eq!(every11.len(), 12);
        assert!(every11.iter().all(|p| p[0] != p[1]));
    }

    #[test]
    fn sweep_rows_and_best_threshold() {
        let db = SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &StftConfig::default(), &default_directions())
            .unwrap();
        let spec = RunSpec {
            doa_sets: vec![vec![30.0, -90.0]],
            snr_db: vec![Threshold(20.0)],
            reverb: vec![Reverb::Anechoic],
            methods: vec![Method::Srp],
            fusions: vec![Fusion::Broad, Fusion::Grouped],
            cdr_thresh_db: vec![Threshold(f64::NEG_INFINITY), Threshold(0.0)],
            duration_s: 1.5,
            ..RunSpec::default()
        };
        let report = run_sweep(&spec, &db).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.best.len(), 2);
        for b in &report.best {
            let best = report.summary.iter().filter(|s| s.key.fusion == b.fusion).map(|s| s.median_acc).fold(f64::MIN, f64::max);
            assert_eq!(b.median_acc, best);
        }
        let tsv = report.to_tsv();
        assert!(tsv.starts_with(TSV_VERSION));
        assert_eq!(tsv.lines().count(), 6);
        assert_eq!(tsv, run_sweep(&spec, &db).unwrap().to_tsv());
    }

    #[test]
    fn failed_scenes_are_recorded() {
        let cfg = StftConfig::default();
        let db = SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &cfg, &default_directions()).unwrap();
        // measured-style database: no analytic model to render scenes with
        let mut header = db.header().clone();
        header.model = None;
        let db = &db;
        let atf = (0..db.bins()).flat_map(|k| (0..db.num_directions()).flat_map(move |i| db.atf(k, i).to_vec())).collect();
        let imported = SteeringDatabase::from_atf(header, atf).unwrap();
        let spec = RunSpec { doa_sets: vec![vec![30.0]], methods: vec![Method::Srp], fusions: vec![Fusion::Broad], ..RunSpec::default() };
        let report = run_sweep(&spec, &imported).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.is_some() && report.rows[0].acc.is_none());
        assert_eq!(report.summary[0].failed, 1);
        assert!(report.to_tsv().lines().nth(2).unwrap().contains("\tfailed\t"));
    }
}
