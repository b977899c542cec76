//! Benchmark harness: false-negative and false-positive rates of every
//! aggregation strategy over synthetic video sets, under perturbation sweeps
//! and attacks, written as CSV plus a JSON manifest.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::aggregate::{ba_mean, detect, AggregationStrategy, LogitMatrix, StrategyKind, Verdict};
use crate::attack::{
    forgery_init_unrelated, pgd_bounded, removal_init_gaussian, square_attack, triangle_attack, AttackMode,
    AttackTrace, Detector, LabelOracle, SquareConfig, TriangleConfig, WhiteboxConfig,
};
use crate::codec::{CodecKey, CodecParams, WatermarkCodec};
use crate::container::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, two_tailed_t_test};
use crate::perturb::{apply_with_encoder, EncoderCommand, Perturbation, PerturbationKind};
use crate::synth::{synth_video, Motion, SynthSpec};
use crate::threshold::{fpr_of_tau, select_k, select_tau, Tau, DEFAULT_ETA};
use crate::video::Video;
use crate::watermark::Watermark;

pub const REPORT_CSV: &str = "report.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const ATTACKS_CSV: &str = "attacks.csv";
pub const ATTACK_CURVES_CSV: &str = "attack_curves.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSetSpec {
    /// Watermarked videos; the same number of unwatermarked videos is drawn.
    pub count: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Motion of video `i` is `motions[i % motions.len()]`.
    pub motions: Vec<Motion>,
}

impl Default for VideoSetSpec {
    fn default() -> Self {
        Self {
            count: 10,
            frames: 14,
            height: 64,
            width: 64,
            channels: 3,
            motions: vec![Motion::Slow, Motion::Fast],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSweep {
    pub kind: PerturbationKind,
    pub parameters: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Pgd,
    Square,
    Triangle,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Pgd => "pgd",
            AttackKind::Square => "square",
            AttackKind::Triangle => "triangle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub attack: AttackKind,
    pub mode: AttackMode,
    pub strategy: StrategyKind,
    /// ℓ∞ budgets for PGD and Square Attack; defaults to `[0.05]`.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// PGD iterations; defaults to 200.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Query budget for black-box attacks; defaults to 1000.
    #[serde(default)]
    pub queries: Option<u64>,
    /// Number of videos attacked, from the start of the set; defaults to all.
    #[serde(default)]
    pub videos: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub codec: CodecParams,
    /// Derive a separate codec key for every video instead of one per run.
    pub per_video_keys: bool,
    pub eta: f64,
    /// Bitwise-accuracy threshold; chosen from `eta` when absent.
    pub tau: Option<Tau>,
    /// Frame threshold for `detection-threshold`; chosen from `eta` when absent.
    pub k: Option<usize>,
    pub strategies: Vec<StrategyKind>,
    pub perturbations: Vec<PerturbationSweep>,
    pub attacks: Vec<AttackSpec>,
    pub videos: VideoSetSpec,
    pub seed: u64,
    /// Welch t-tests of per-video BA-mean between slow and fast videos.
    pub t_tests: bool,
    /// Shell template for the `mpeg4` perturbation.
    pub mpeg4_encoder: Option<String>,
    /// Where [`run_benchmark`] writes report files. Not part of the echoed
    /// config or its hash.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            codec: CodecParams::default(),
            per_video_keys: false,
            eta: DEFAULT_ETA,
            tau: None,
            k: None,
            strategies: StrategyKind::ALL.to_vec(),
            perturbations: Vec::new(),
            attacks: Vec::new(),
            videos: VideoSetSpec::default(),
            seed: 0,
            t_tests: true,
            mpeg4_encoder: None,
            output_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::param("strategy list is empty"));
        }
        let v = &self.videos;
        if v.count == 0 || v.frames == 0 {
            return Err(Error::param("video set needs at least one video and one frame"));
        }
        if v.motions.is_empty() {
            return Err(Error::param("video set needs at least one motion"));
        }
        SynthSpec::new(v.frames, v.height, v.width, v.channels, Motion::Slow).shape()?;
        for sweep in &self.perturbations {
            if sweep.parameters.is_empty() {
                return Err(Error::param(format!("{} sweep has no parameters", sweep.kind)));
            }
            for &p in &sweep.parameters {
                Perturbation::new(sweep.kind, p)?;
            }
        }
        for a in &self.attacks {
            if a.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return Err(Error::param("attack epsilons must be > 0"));
            }
            if a.queries == Some(0) || a.steps == Some(0) || a.videos == Some(0) {
                return Err(Error::param("attack steps, queries and videos must be >= 1"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the echoed JSON config.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

fn serialize_metric<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn format_metric(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub strategy: StrategyKind,
    /// `none` for the clean baseline.
    pub perturbation: String,
    pub parameter: Option<f64>,
    pub fnr: f64,
    pub fpr: f64,
    /// Perturbed against unperturbed watermarked video; `inf` when identical,
    /// absent when the frame count changed.
    #[serde(serialize_with = "serialize_metric")]
    pub psnr_mean: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub n_videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub scope: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TTestRecord {
    pub perturbation: String,
    pub parameter: Option<f64>,
    pub n_slow: usize,
    pub n_fast: usize,
    pub mean_slow: f64,
    pub mean_fast: f64,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRecord {
    pub attack: AttackKind,
    pub mode: AttackMode,
    pub strategy: StrategyKind,
    pub epsilon: Option<f64>,
    pub queries: Option<u64>,
    pub n_videos: usize,
    /// FNR after removal attacks, FPR after forgery attacks.
    pub success_rate: f64,
    pub mean_final_linf: f64,
    /// Mean trace value at each query index, for black-box attacks.
    #[serde(skip)]
    pub curve: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub run: u64,
    pub watermark: u64,
    pub watermarked_videos: Vec<u64>,
    pub unwatermarked_videos: Vec<u64>,
    pub perturbation: u64,
    pub attack: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRecord {
    #[serde(serialize_with = "serialize_metric")]
    pub psnr_mean: Option<f64>,
    pub ssim_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: BenchConfig,
    pub config_sha256: String,
    pub seeds: SeedRecord,
    pub bits: usize,
    pub tau: Tau,
    pub k: usize,
    pub watermark: String,
    /// Watermarked against original videos.
    pub watermark_quality: QualityRecord,
    pub errors: Vec<ErrorRecord>,
    pub t_tests: Vec<TTestRecord>,
    pub attacks: Vec<AttackRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<CellRecord>,
    pub manifest: Manifest,
}

impl BenchReport {
    pub fn errors(&self) -> &[ErrorRecord] {
        &self.manifest.errors
    }

    pub fn cell(&self, strategy: StrategyKind, perturbation: &str, parameter: Option<f64>) -> Option<&CellRecord> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.perturbation == perturbation && c.parameter == parameter)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["strategy", "perturbation", "parameter", "fnr", "fpr", "psnr_mean", "ssim_mean", "n_videos"])?;
        for c in &self.cells {
            w.write_record([
                c.strategy.name().to_string(),
                c.perturbation.clone(),
                format_metric(c.parameter),
                c.fnr.to_string(),
                c.fpr.to_string(),
                format_metric(c.psnr_mean),
                format_metric(c.ssim_mean),
                c.n_videos.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn manifest_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(&self.manifest)?;
        out.push(b'\n');
        Ok(out)
    }

    fn attack_csv_bytes(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut summary = csv::Writer::from_writer(Vec::new());
        summary.write_record([
            "attack_id", "attack", "mode", "strategy", "epsilon", "queries", "success_rate", "mean_final_linf", "n_videos",
        ])?;
        let mut curves = csv::Writer::from_writer(Vec::new());
        curves.write_record(["attack_id", "query_index", "mean_value"])?;
        for (id, a) in self.manifest.attacks.iter().enumerate() {
            summary.write_record([
                id.to_string(),
                a.attack.name().to_string(),
                a.mode.to_string(),
                a.strategy.name().to_string(),
                format_metric(a.epsilon),
                a.queries.map(|q| q.to_string()).unwrap_or_default(),
                a.success_rate.to_string(),
                a.mean_final_linf.to_string(),
                a.n_videos.to_string(),
            ])?;
            for (q, v) in &a.curve {
                curves.write_record([id.to_string(), q.to_string(), v.to_string()])?;
            }
        }
        let finish = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| Error::Io(e.into_error()));
        Ok((finish(summary)?, finish(curves)?))
    }

    /// Writes `report.csv`, `manifest.json` and, when attacks ran,
    /// `attacks.csv` and `attack_curves.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
        write_atomic(&dir.join(REPORT_CSV), &self.csv_bytes()?)?;
        write_atomic(&dir.join(MANIFEST_JSON), &self.manifest_bytes()?)?;
        if !self.manifest.attacks.is_empty() {
            let (summary, curves) = self.attack_csv_bytes()?;
            write_atomic(&dir.join(ATTACKS_CSV), &summary)?;
            write_atomic(&dir.join(ATTACK_CURVES_CSV), &curves)?;
        }
        Ok(())
    }
}

/// Fraction of `videos` that `detector` labels unwatermarked after the
/// optional perturbation.
pub fn eval_fnr(videos: &[Video], detector: &dyn LabelOracle, perturbation: Option<&Perturbation>) -> Result<f64> {
    rate(videos, detector, perturbation, Verdict::Unwatermarked)
}

/// Fraction of `videos` that `detector` labels watermarked after the optional
/// perturbation.
pub fn eval_fpr(videos: &[Video], detector: &dyn LabelOracle, perturbation: Option<&Perturbation>) -> Result<f64> {
    rate(videos, detector, perturbation, Verdict::Watermarked)
}

fn rate(videos: &[Video], detector: &dyn LabelOracle, perturbation: Option<&Perturbation>, counted: Verdict) -> Result<f64> {
    if videos.is_empty() {
        return Err(Error::param("cannot compute a rate over zero videos"));
    }
    let mut hits = 0usize;
    for v in videos {
        let input = match perturbation {
            Some(p) => crate::perturb::apply(p, v)?,
            None => v.clone(),
        };
        if detector.label(&input)? == counted {
            hits += 1;
        }
    }
    Ok(hits as f64 / videos.len() as f64)
}

struct Fixture {
    keys: Vec<CodecKey>,
    wg: Watermark,
    originals: Vec<Video>,
    watermarked: Vec<Video>,
    unwatermarked: Vec<Video>,
    motions: Vec<Motion>,
    seeds: SeedRecord,
    strategies: Vec<AggregationStrategy>,
    tau: Tau,
    k: usize,
}

impl Fixture {
    fn key(&self, i: usize) -> &CodecKey {
        &self.keys[if self.keys.len() == 1 { 0 } else { i }]
    }

    fn build(cfg: &BenchConfig) -> Result<Self> {
        let v = &cfg.videos;
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let watermark_seed: u64 = master.gen();
        let wm_seeds: Vec<u64> = (0..v.count).map(|_| master.gen()).collect();
        let clean_seeds: Vec<u64> = (0..v.count).map(|_| master.gen()).collect();
        let seeds = SeedRecord {
            run: cfg.seed,
            watermark: watermark_seed,
            watermarked_videos: wm_seeds,
            unwatermarked_videos: clean_seeds,
            perturbation: master.gen(),
            attack: master.gen(),
        };

        let n = cfg.codec.bits;
        let tau = match cfg.tau {
            Some(t) => t,
            None => select_tau(n as u64, cfg.eta)?,
        };
        let k = match cfg.k {
            Some(k) => k,
            None => select_k(v.frames as u64, fpr_of_tau(n as u64, tau)?, cfg.eta)? as usize,
        };
        let strategies = cfg
            .strategies
            .iter()
            .map(|&kind| AggregationStrategy::with_default_k(kind, tau, k))
            .collect::<Result<Vec<_>>>()?;

        let motions: Vec<Motion> = (0..v.count).map(|i| v.motions[i % v.motions.len()]).collect();
        let spec = |m: Motion| SynthSpec::new(v.frames, v.height, v.width, v.channels, m);
        let shape = spec(Motion::Slow).shape()?;
        let keys = if cfg.per_video_keys {
            (0..v.count)
                .map(|i| {
                    let params = CodecParams {
                        seed: cfg.codec.seed.wrapping_add(i as u64),
                        ..cfg.codec
                    };
                    CodecKey::new(params, shape)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![CodecKey::new(cfg.codec, shape)?]
        };
        let wg = Watermark::random(n, watermark_seed)?;

        let originals = seeds
            .watermarked_videos
            .iter()
            .zip(&motions)
            .map(|(&s, &m)| synth_video(&spec(m), s))
            .collect::<Result<Vec<_>>>()?;
        let unwatermarked = seeds
            .unwatermarked_videos
            .iter()
            .zip(&motions)
            .map(|(&s, &m)| synth_video(&spec(m), s))
            .collect::<Result<Vec<_>>>()?;
        let mut fixture = Fixture {
            keys,
            wg,
            originals,
            watermarked: Vec::new(),
            unwatermarked,
            motions,
            seeds,
            strategies,
            tau,
            k,
        };
        fixture.watermarked = fixture
            .originals
            .iter()
            .enumerate()
            .map(|(i, o)| fixture.key(i).embed(o, &fixture.wg))
            .collect::<Result<Vec<_>>>()?;
        Ok(fixture)
    }
}

struct Decoded {
    watermarked: Vec<LogitMatrix>,
    unwatermarked: Vec<LogitMatrix>,
    psnr: Option<f64>,
    ssim: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn decode_cell(fx: &Fixture, perturbation: Option<&Perturbation>, encoder: Option<&EncoderCommand>) -> Result<Decoded> {
    let count = fx.watermarked.len();
    let perturb = |v: &Video, seed: u64| -> Result<Video> {
        match perturbation {
            Some(p) => apply_with_encoder(&p.with_seed(seed), v, encoder),
            None => Ok(v.clone()),
        }
    };
    let base = fx.seeds.perturbation;
    let mut wm_logits = Vec::with_capacity(count);
    let mut clean_logits = Vec::with_capacity(count);
    let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
    for i in 0..count {
        let key = fx.key(i);
        let pw = perturb(&fx.watermarked[i], base.wrapping_add(i as u64))?;
        let pc = perturb(&fx.unwatermarked[i], base.wrapping_add((count + i) as u64))?;
        if pw.num_frames() == fx.watermarked[i].num_frames() {
            psnrs.push(psnr(&pw, &fx.watermarked[i])?);
            ssims.push(ssim(&pw, &fx.watermarked[i])?);
        }
        wm_logits.push(key.decode_video(&pw)?);
        clean_logits.push(key.decode_video(&pc)?);
    }
    // PSNR and SSIM are only reported when every video kept its frame count
    let complete = psnrs.len() == count;
    Ok(Decoded {
        watermarked: wm_logits,
        unwatermarked: clean_logits,
        psnr: if complete { mean(&psnrs) } else { None },
        ssim: if complete { mean(&ssims) } else { None },
    })
}

fn label(perturbation: Option<&Perturbation>) -> (String, Option<f64>) {
    match perturbation {
        Some(p) => (p.kind.name().to_string(), Some(p.parameter)),
        None => ("none".to_string(), None),
    }
}

fn evaluate_cells(
    fx: &Fixture,
    perturbation: Option<&Perturbation>,
    decoded: &Decoded,
    cells: &mut Vec<CellRecord>,
    errors: &mut Vec<ErrorRecord>,
) {
    let (name, parameter) = label(perturbation);
    let count = decoded.watermarked.len();
    for strategy in &fx.strategies {
        let verdicts = |set: &[LogitMatrix]| -> Result<usize> {
            let mut watermarked = 0;
            for l in set {
                if detect(l, &fx.wg, strategy)?.verdict.is_watermarked() {
                    watermarked += 1;
                }
            }
            Ok(watermarked)
        };
        match (verdicts(&decoded.watermarked), verdicts(&decoded.unwatermarked)) {
            (Ok(tp), Ok(fp)) => cells.push(CellRecord {
                strategy: strategy.kind,
                perturbation: name.clone(),
                parameter,
                fnr: (count - tp) as f64 / count as f64,
                fpr: fp as f64 / count as f64,
                psnr_mean: decoded.psnr,
                ssim_mean: decoded.ssim,
                n_videos: count,
            }),
            (Err(e), _) | (_, Err(e)) => errors.push(ErrorRecord {
                scope: format!("{} / {}", strategy.kind, perturbation.map_or("none".to_string(), |p| p.to_string())),
                message: e.to_string(),
            }),
        }
    }
}

fn t_test_cell(fx: &Fixture, perturbation: Option<&Perturbation>, decoded: &Decoded) -> Result<TTestRecord> {
    let (name, parameter) = label(perturbation);
    let (mut slow, mut fast) = (Vec::new(), Vec::new());
    for (l, m) in decoded.watermarked.iter().zip(&fx.motions) {
        let ba = ba_mean(l, &fx.wg)?;
        match m {
            Motion::Slow => slow.push(ba),
            Motion::Fast => fast.push(ba),
        }
    }
    let mut record = TTestRecord {
        perturbation: name,
        parameter,
        n_slow: slow.len(),
        n_fast: fast.len(),
        mean_slow: mean(&slow).unwrap_or(f64::NAN),
        mean_fast: mean(&fast).unwrap_or(f64::NAN),
        t: None,
        df: None,
        p_value: None,
        note: None,
    };
    match two_tailed_t_test(&slow, &fast) {
        Ok(t) => {
            record.t = Some(t.t);
            record.df = Some(t.df);
            record.p_value = Some(t.p_value);
        }
        Err(e) => record.note = Some(e.to_string()),
    }
    Ok(record)
}

fn trace_curve(traces: &[AttackTrace], queries: u64) -> Vec<(u64, f64)> {
    if traces.is_empty() {
        return Vec::new();
    }
    (1..=queries)
        .filter_map(|q| {
            let values: Vec<f64> = traces.iter().filter_map(|t| t.value_at(q)).collect();
            (values.len() == traces.len()).then(|| (q, values.iter().sum::<f64>() / values.len() as f64))
        })
        .collect()
}

fn run_attack(fx: &Fixture, spec: &AttackSpec, errors: &mut Vec<ErrorRecord>) -> Result<Vec<AttackRecord>> {
    let strategy = AggregationStrategy::with_default_k(spec.strategy, fx.tau, fx.k)?;
    let n = spec.videos.unwrap_or(fx.watermarked.len()).min(fx.watermarked.len());
    let inputs: &[Video] = match spec.mode {
        AttackMode::Removal => &fx.watermarked[..n],
        AttackMode::Forgery => &fx.unwatermarked[..n],
    };
    let queries = spec.queries.unwrap_or(1000);
    let epsilons = if spec.epsilons.is_empty() { vec![0.05] } else { spec.epsilons.clone() };
    let scope = |i: usize| format!("{} {} video {i}", spec.attack.name(), spec.mode);
    let mut records = Vec::new();

    match spec.attack {
        AttackKind::Pgd => {
            let steps = spec.steps.unwrap_or(200);
            for &eps in &epsilons {
                let cfg = WhiteboxConfig::pgd_with_steps(spec.mode, eps, steps);
                let (mut successes, mut linf) = (0usize, Vec::new());
                for (i, video) in inputs.iter().enumerate() {
                    let key = fx.key(i);
                    let out = pgd_bounded(video, key, &fx.wg, &cfg)?;
                    let verdict = detect(&key.decode_video(&out.video)?, &fx.wg, &strategy)?.verdict;
                    successes += usize::from(verdict == spec.mode.goal());
                    linf.push(out.video.linf_distance(video));
                }
                records.push(AttackRecord {
                    attack: spec.attack,
                    mode: spec.mode,
                    strategy: spec.strategy,
                    epsilon: Some(eps),
                    queries: None,
                    n_videos: n,
                    success_rate: successes as f64 / n as f64,
                    mean_final_linf: mean(&linf).unwrap_or(0.0),
                    curve: Vec::new(),
                });
            }
        }
        AttackKind::Square => {
            for &eps in &epsilons {
                let (mut successes, mut linf, mut traces) = (0usize, Vec::new(), Vec::new());
                for (i, video) in inputs.iter().enumerate() {
                    let detector = Detector::new(fx.key(i), fx.wg.clone(), strategy);
                    let cfg = SquareConfig::new(spec.mode, eps, queries, fx.seeds.attack.wrapping_add(i as u64));
                    match square_attack(video, &detector, &cfg) {
                        Ok(trace) => {
                            successes += usize::from(detector.label(&trace.best_video)? == spec.mode.goal());
                            linf.push(trace.best_video.linf_distance(video));
                            traces.push(trace);
                        }
                        Err(failure) => errors.push(ErrorRecord {
                            scope: scope(i),
                            message: failure.to_string(),
                        }),
                    }
                }
                records.push(AttackRecord {
                    attack: spec.attack,
                    mode: spec.mode,
                    strategy: spec.strategy,
                    epsilon: Some(eps),
                    queries: Some(queries),
                    n_videos: n,
                    success_rate: successes as f64 / n as f64,
                    mean_final_linf: mean(&linf).unwrap_or(0.0),
                    curve: trace_curve(&traces, queries),
                });
            }
        }
        AttackKind::Triangle => {
            let (mut successes, mut linf, mut traces) = (0usize, Vec::new(), Vec::new());
            for (i, video) in inputs.iter().enumerate() {
                let key = fx.key(i);
                let detector = Detector::new(key, fx.wg.clone(), strategy);
                let seed = fx.seeds.attack.wrapping_add(i as u64);
                let init = match spec.mode {
                    AttackMode::Removal => removal_init_gaussian(video, &detector, seed).map(|g| g.video),
                    AttackMode::Forgery => {
                        forgery_init_unrelated(video.shape(), video.num_frames(), key, &fx.wg, seed)
                    }
                };
                let outcome = init.and_then(|init| {
                    triangle_attack(video, &detector, &init, spec.mode.goal(), &TriangleConfig::new(queries, seed))
                        .map_err(Error::from)
                });
                match outcome {
                    Ok(trace) => {
                        successes += usize::from(detector.label(&trace.best_video)? == spec.mode.goal());
                        linf.push(trace.best_video.linf_distance(video));
                        traces.push(trace);
                    }
                    Err(e) => errors.push(ErrorRecord {
                        scope: scope(i),
                        message: e.to_string(),
                    }),
                }
            }
            records.push(AttackRecord {
                attack: spec.attack,
                mode: spec.mode,
                strategy: spec.strategy,
                epsilon: None,
                queries: Some(queries),
                n_videos: n,
                success_rate: successes as f64 / n as f64,
                mean_final_linf: mean(&linf).unwrap_or(0.0),
                curve: trace_curve(&traces, queries),
            });
        }
    }
    Ok(records)
}

/// Generates the video sets, evaluates the clean baseline and every sweep
/// cell, runs the configured attacks and, when `cfg.output_dir` is set,
/// writes the report files. A failing cell or attack is recorded in the
/// manifest's error list and the run continues.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let fx = Fixture::build(cfg)?;
    let encoder = cfg.mpeg4_encoder.as_ref().map(EncoderCommand::new);
    let mut cells = Vec::new();
    let mut errors = Vec::new();
    let mut t_tests = Vec::new();

    let mut grid: Vec<Option<Perturbation>> = vec![None];
    for sweep in &cfg.perturbations {
        for &p in &sweep.parameters {
            grid.push(Some(Perturbation::new(sweep.kind, p)?));
        }
    }
    for perturbation in &grid {
        match decode_cell(&fx, perturbation.as_ref(), encoder.as_ref()) {
            Ok(decoded) => {
                evaluate_cells(&fx, perturbation.as_ref(), &decoded, &mut cells, &mut errors);
                if cfg.t_tests {
                    t_tests.push(t_test_cell(&fx, perturbation.as_ref(), &decoded)?);
                }
            }
            Err(e) => errors.push(ErrorRecord {
                scope: perturbation.map_or("none".to_string(), |p| p.to_string()),
                message: e.to_string(),
            }),
        }
    }

    let mut attacks = Vec::new();
    for spec in &cfg.attacks {
        match run_attack(&fx, spec, &mut errors) {
            Ok(records) => attacks.extend(records),
            Err(e) => errors.push(ErrorRecord {
                scope: format!("{} {}", spec.attack.name(), spec.mode),
                message: e.to_string(),
            }),
        }
    }

    let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
    for (o, w) in fx.originals.iter().zip(&fx.watermarked) {
        psnrs.push(psnr(w, o)?);
        ssims.push(ssim(w, o)?);
    }
    let manifest = Manifest {
        tool: "vmark".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_sha256: cfg.hash()?,
        seeds: fx.seeds.clone(),
        bits: fx.wg.len(),
        tau: fx.tau,
        k: fx.k,
        watermark: fx.wg.to_hex(),
        watermark_quality: QualityRecord {
            psnr_mean: mean(&psnrs),
            ssim_mean: mean(&ssims),
        },
        errors,
        t_tests,
        attacks,
    };
    let report = BenchReport { cells, manifest };
    if let Some(dir) = &cfg.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}
