//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vmark_core::aggregate::{bit_median, distance_sum, frame_decisions, geometric_median};
use vmark_core::attack::{
    epsilon_grid, min_epsilon_search, pgd_bounded, removal_init_gaussian, square_attack, subset_arbitrary,
    triangle_attack, AttackMode, Detector, LabelOracle, SquareConfig, TriangleConfig, WhiteboxConfig,
};
use vmark_core::harness::{run_benchmark, BenchConfig, VideoSetSpec};
use vmark_core::metrics::{psnr, ssim, two_tailed_t_test};
use vmark_core::threshold::{binomial_tail, fpr_of_tau, select_k, DEFAULT_ETA};
use vmark_core::{
    detect, select_tau, synth_video, Activation, AggregationStrategy, CodecKey, CodecParams, FrameShape, LogitMatrix,
    Motion, StrategyKind, SynthSpec, Tau, Verdict, Video, Watermark, WatermarkCodec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn motion(i: u64) -> Motion {
    if i.is_multiple_of(2) {
        Motion::Slow
    } else {
        Motion::Fast
    }
}

fn clip(side: usize, frames: usize, seed: u64) -> Video {
    synth_video(&SynthSpec::new(frames, side, side, 3, motion(seed)), seed).unwrap()
}

fn key(params: CodecParams, side: usize) -> CodecKey {
    CodecKey::new(params, FrameShape::new(side, side, 3).unwrap()).unwrap()
}

fn tau32() -> Tau {
    select_tau(32, DEFAULT_ETA).unwrap()
}

fn k_for(frames: usize) -> usize {
    select_k(frames as u64, fpr_of_tau(32, tau32()).unwrap(), DEFAULT_ETA).unwrap() as usize
}

fn strategy(kind: StrategyKind, frames: usize) -> AggregationStrategy {
    AggregationStrategy::with_default_k(kind, tau32(), k_for(frames)).unwrap()
}

fn verdict(codec: &CodecKey, video: &Video, wg: &Watermark, kind: StrategyKind) -> Verdict {
    let s = strategy(kind, video.num_frames());
    detect(&codec.decode_video(video).unwrap(), wg, &s).unwrap().verdict
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Exact binomial tail at p = 1/2 from integer binomial coefficients.
fn exact_tail_half(n: u64, m: u64) -> f64 {
    let mut c: u128 = 1;
    let mut sum: u128 = 0;
    for k in 0..=n {
        if k >= m {
            sum += c;
        }
        c = c * u128::from(n - k) / u128::from(k + 1);
    }
    sum as f64 / 2f64.powi(n as i32)
}

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    for (n, num) in [(96u64, 67u64), (32, 27)] {
        let tau = select_tau(n, DEFAULT_ETA).map_err(|e| e.to_string())?;
        let at = exact_tail_half(n, num);
        let below = exact_tail_half(n, num - 1);
        let ok = tau == Tau::new(num, n).unwrap() && at < DEFAULT_ETA && below >= DEFAULT_ETA;
        notes.push(format!("n={n}: tau={tau}, Pr(>= {num})={at:.3e}, Pr(>= {})={below:.3e}", num - 1));
        if !ok {
            return Err(notes.join("; "));
        }
    }
    Ok(notes.join("; "))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 0..=20u32 {
        let mut hist = vec![0u64; n as usize + 1];
        for x in 0u64..(1u64 << n) {
            hist[x.count_ones() as usize] += 1;
        }
        for p in [0.5f64, 0.25, 0.8] {
            for m in 0..=(n as u64 + 1) {
                let expected: f64 = (m as usize..hist.len())
                    .map(|k| hist[k] as f64 * p.powi(k as i32) * (1.0 - p).powi(n as i32 - k as i32))
                    .sum();
                let got = binomial_tail(n as u64, p, m).map_err(|e| e.to_string())?;
                worst = worst.max((got - expected).abs());
                checked += 1;
            }
        }
    }
    check(worst <= 1e-12, format!("{checked} (n, p, m) cases, max |diff| = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let cfg = BenchConfig {
        videos: VideoSetSpec { count: 50, frames: 14, height: 64, width: 64, channels: 3, motions: vec![Motion::Slow, Motion::Fast] },
        t_tests: false,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let bad: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.fnr != 0.0 || c.fpr != 0.0)
        .map(|c| format!("{} fnr={} fpr={}", c.strategy, c.fnr, c.fpr))
        .collect();
    check(
        report.cells.len() == 7 && bad.is_empty() && report.errors().is_empty() && report.cells.iter().all(|c| c.n_videos == 50),
        format!("{} strategies x 50+50 videos; nonzero cells: {bad:?}", report.cells.len()),
    )
}

fn criterion_4() -> Outcome {
    let codec = key(CodecParams::default(), 64);
    let mut flipped = [0usize; 7];
    let grid = epsilon_grid(0.002, 0.2, 21).unwrap();
    let mut forgery_smaller = 0;
    let mut pairs = Vec::new();
    for seed in 0..20u64 {
        let wg = Watermark::random(32, 1000 + seed).unwrap();
        let original = clip(64, 14, seed);
        let marked = codec.embed(&original, &wg).unwrap();
        let out = pgd_bounded(&marked, &codec, &wg, &WhiteboxConfig::pgd(AttackMode::Removal, 0.05)).unwrap();
        for (i, kind) in StrategyKind::ALL.into_iter().enumerate() {
            flipped[i] += usize::from(verdict(&codec, &out.video, &wg, kind) == Verdict::Unwatermarked);
        }

        let short = Video::new(original.frames()[..4].to_vec()).unwrap();
        let short_marked = codec.embed(&short, &wg).unwrap();
        let s = strategy(StrategyKind::LogitMean, 4);
        let removal = min_epsilon_search(&short_marked, &codec, &wg, AttackMode::Removal, &s, 100, &grid).unwrap();
        let forgery = min_epsilon_search(&short, &codec, &wg, AttackMode::Forgery, &s, 100, &grid).unwrap();
        if forgery.found && (!removal.found || forgery.epsilon < removal.epsilon) {
            forgery_smaller += 1;
        }
        pairs.push(format!("{:.4}/{:.4}", forgery.epsilon, removal.epsilon));
    }
    let fnr: Vec<f64> = flipped.iter().map(|&f| f as f64 / 20.0).collect();
    check(
        fnr.iter().all(|&f| f == 1.0) && forgery_smaller * 5 >= 20 * 4,
        format!(
            "PGD eps=0.05 FNR per strategy {fnr:?}; forgery < removal min-eps in {forgery_smaller}/20 (forgery/removal: {})",
            pairs[..5].join(" ")
        ),
    )
}

fn criterion_5() -> Outcome {
    let frames = 14;
    let codec = key(CodecParams { activation: Activation::Identity, ..CodecParams::default() }, 32);
    let k = k_for(frames);
    let medians = [StrategyKind::BaMedian, StrategyKind::BitMedian, StrategyKind::DetectionMedian];
    let (mut removal_ok, mut forgery_ok) = (0, 0);
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let wg = Watermark::random(32, 2000 + seed).unwrap();
        let original = clip(32, frames, seed);
        let marked = codec.embed(&original, &wg).unwrap();
        let attacked: Vec<bool> = (0..frames).map(|i| i < 3).collect();
        let before_ok = std::iter::once(StrategyKind::LogitMean)
            .chain(medians)
            .all(|kind| verdict(&codec, &marked, &wg, kind) == Verdict::Watermarked);
        let out = subset_arbitrary(&marked, &codec, &wg, &WhiteboxConfig::subset(AttackMode::Removal, attacked)).unwrap();
        let logit_mean_flips = verdict(&codec, &out, &wg, StrategyKind::LogitMean) == Verdict::Unwatermarked;
        let medians_hold = medians.iter().all(|&kind| verdict(&codec, &out, &wg, kind) == Verdict::Watermarked);
        if before_ok && logit_mean_flips && medians_hold {
            removal_ok += 1;
        } else {
            failures.push(format!("removal seed {seed}"));
        }

        let mask: Vec<bool> = (0..frames).map(|i| i < k).collect();
        let clean_negative = verdict(&codec, &original, &wg, StrategyKind::DetectionThreshold) == Verdict::Unwatermarked;
        let forged = subset_arbitrary(&original, &codec, &wg, &WhiteboxConfig::subset(AttackMode::Forgery, mask)).unwrap();
        if clean_negative && verdict(&codec, &forged, &wg, StrategyKind::DetectionThreshold) == Verdict::Watermarked {
            forgery_ok += 1;
        } else {
            failures.push(format!("forgery seed {seed}"));
        }
    }
    check(
        removal_ok == 20 && forgery_ok == 20,
        format!(
            "3/{frames} frames attacked: logit-mean flips with medians intact in {removal_ok}/20; \
             detection-threshold forged with k={k} frames in {forgery_ok}/20; failures {failures:?}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let frames = 14;
    let side = 32;
    let run = |params: CodecParams, mode: AttackMode| -> (usize, f64) {
        let codec = key(params, side);
        let mut hits = 0;
        let mut best = Vec::new();
        for seed in 0..20u64 {
            let wg = Watermark::random(32, 3000 + seed).unwrap();
            let original = clip(side, frames, seed);
            let input = match mode {
                AttackMode::Removal => codec.embed(&original, &wg).unwrap(),
                AttackMode::Forgery => original,
            };
            let det = Detector::new(&codec, wg, strategy(StrategyKind::BaMean, frames));
            let trace = square_attack(&input, &det, &SquareConfig::new(mode, 0.05, 1000, seed)).unwrap();
            hits += usize::from(LabelOracle::label(&det, &trace.best_video).unwrap() == mode.goal());
            best.push(trace.final_value().unwrap());
        }
        let extreme = match mode {
            AttackMode::Removal => best.iter().copied().fold(f64::INFINITY, f64::min),
            AttackMode::Forgery => best.iter().copied().fold(0.0, f64::max),
        };
        (hits, extreme)
    };
    let (forged, max_ba) = run(CodecParams::default(), AttackMode::Forgery);
    let (removed, min_ba) = run(CodecParams::noise_sensitive(), AttackMode::Removal);
    let fpr = forged as f64 / 20.0;
    let fnr = removed as f64 / 20.0;
    check(
        fpr == 0.0 && fnr >= 0.5,
        format!("forgery FPR={fpr} (max BA {max_ba:.3}); removal FNR on noise-sensitive codec={fnr} (min BA {min_ba:.3})"),
    )
}

fn criterion_7() -> Outcome {
    let frames = 14;
    let side = 32;
    let codec = key(CodecParams::default(), side);
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let wg = Watermark::random(32, 4000 + seed).unwrap();
        let marked = codec.embed(&clip(side, frames, seed), &wg).unwrap();
        let det = Detector::new(&codec, wg, strategy(StrategyKind::BaMean, frames));
        let init = removal_init_gaussian(&marked, &det, seed).map_err(|e| e.to_string())?;
        let trace = triangle_attack(&marked, &det, &init.video, Verdict::Unwatermarked, &TriangleConfig::new(1000, seed))
            .map_err(|e| e.to_string())?;
        let start = trace.history[0].value;
        let at100 = trace.value_at(100).unwrap();
        let at1000 = trace.value_at(1000).unwrap();
        early.push(start - at100);
        late.push(at100 - at1000);
    }
    let (e, l) = (median(early), median(late));
    check(e > l, format!("median linf reduction: queries 1-100 {e:.4}, queries 100-1000 {l:.4}"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let count = rng.gen_range(3..8);
        let points: Vec<[f64; 2]> = (0..count).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let gm = geometric_median(&points, 1e-9, 1000).map_err(|e| e.to_string())?;
        let (mut cx, mut cy, mut half, mut best) = (0.5, 0.5, 0.5, f64::INFINITY);
        for _ in 0..3 {
            let steps = 300;
            let (mut bx, mut by) = (cx, cy);
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = cx - half + 2.0 * half * i as f64 / steps as f64;
                    let y = cy - half + 2.0 * half * j as f64 / steps as f64;
                    let obj = distance_sum(&[x, y], &points);
                    if obj < best {
                        (best, bx, by) = (obj, x, y);
                    }
                }
            }
            (cx, cy, half) = (bx, by, 4.0 * half / steps as f64);
        }
        worst = worst.max(gm.objective - best);
    }

    let wg = Watermark::random(32, 9).unwrap();
    let mut mismatches = 0;
    for _ in 0..200 {
        let frames = rng.gen_range(1..15);
        let rows: Vec<Vec<f64>> = (0..frames)
            .map(|_| {
                let bias = rng.gen::<f64>();
                wg.bits()
                    .iter()
                    .map(|&b| if rng.gen::<f64>() < bias { f64::from(u8::from(b)) * 0.6 + 0.2 } else { rng.gen() })
                    .collect()
            })
            .collect();
        let logits = LogitMatrix::new(rows.clone()).unwrap();
        let tally_bits: Vec<bool> = (0..32)
            .map(|j| 2 * rows.iter().filter(|r| r[j] >= 0.5).count() >= frames)
            .collect();
        let tally_decisions: Vec<bool> = rows
            .iter()
            .map(|r| 32 * (0..32).filter(|&j| (r[j] >= 0.5) == wg.bits()[j]).count() >= 27 * 32)
            .collect();
        if bit_median(&logits) != tally_bits || frame_decisions(&logits, &wg, tau32()).unwrap() != tally_decisions {
            mismatches += 1;
        }
    }
    check(
        worst <= 1e-6 && mismatches == 0,
        format!("geometric median minus grid optimum <= {worst:.2e} over 10 cases; {mismatches}/200 tally mismatches"),
    )
}

fn criterion_9() -> Outcome {
    let v = clip(32, 3, 1);
    let p = psnr(&v, &v).map_err(|e| e.to_string())?;
    let s = ssim(&v, &v).map_err(|e| e.to_string())?;
    let xs = [0.91, 0.87, 0.95, 0.88, 0.9];
    let t = two_tailed_t_test(&xs, &xs).map_err(|e| e.to_string())?;
    check(
        p == f64::INFINITY && s == 1.0 && t.p_value == 1.0,
        format!("psnr={p}, ssim={s}, welch p={}", t.p_value),
    )
}

fn hash_tree(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, hex(&Sha256::digest(std::fs::read(&path).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cli_session(dir: &Path) -> Result<Vec<(String, String)>, String> {
    const CONFIG: &str = r#"{
  "videos": {"count": 4, "frames": 6, "height": 32, "width": 32, "channels": 3, "motions": ["slow", "fast"]},
  "perturbations": [{"kind": "gaussian-noise", "parameters": [0.05, 0.2]}, {"kind": "frame-swap", "parameters": [0.5]}],
  "attacks": [{"attack": "square", "mode": "removal", "strategy": "ba-mean", "queries": 30, "videos": 2}]
}
"#;
    std::fs::write(dir.join("bench.json"), CONFIG).unwrap();
    let steps: &[&[&str]] = &[
        &["gen", "--output", "clip.vmb", "--frames", "6", "--height", "32", "--width", "32", "--seed", "3"],
        &["embed", "--input", "clip.vmb", "--output", "marked.vmb", "--seed", "3"],
        &["detect", "--input", "marked.vmb", "--seed", "3", "--strategy", "detection-threshold", "--output", "detect.json"],
        &["perturb", "--input", "marked.vmb", "--output", "noisy.vmb", "--perturb", "gaussian-noise:0.05", "--seed", "4"],
        &["attack", "--attack", "pgd", "--input", "marked.vmb", "--output", "pgd.vmb", "--seed", "3", "--steps", "20"],
        &["attack", "--attack", "square", "--input", "marked.vmb", "--output", "square.vmb", "--seed", "3", "--queries", "40", "--trace", "square.csv"],
        &["attack", "--attack", "triangle", "--input", "marked.vmb", "--output", "triangle.vmb", "--seed", "3", "--queries", "40", "--trace", "triangle.csv"],
        &["attack", "--attack", "subset", "--activation", "identity", "--input", "marked.vmb", "--output", "subset", "--frames", "0-1", "--seed", "3", "--steps", "20"],
        &["threshold", "--n", "96", "--eta", "1e-4", "--frames", "14", "--output", "threshold.json"],
        &["bench", "--config", "bench.json", "--output", "report", "--seed", "5"],
        &["plot", "--input", "report/report.csv", "--output", "noise.svg", "--perturbation", "gaussian-noise"],
    ];
    let mut records = Vec::new();
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_vmark"))
            .args(*args)
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
        records.push((format!("stdout of {}", args.join(" ")), hex(&Sha256::digest(&out.stdout))));
    }
    records.extend(hash_tree(dir));
    Ok(records)
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_session(a.path())?;
    let second = cli_session(b.path())?;
    let differing: Vec<&String> = first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| &x.0).collect();
    let files = first.iter().filter(|(name, _)| !name.starts_with("stdout")).count();
    let report = first.iter().find(|(n, _)| n == "report/report.csv").map(|(_, h)| h[..12].to_string());
    check(
        first.len() == second.len() && differing.is_empty() && report.is_some(),
        format!(
            "{} outputs ({files} files) identical across two runs, report.csv sha256 {}...; differing: {differing:?}",
            first.len(),
            report.unwrap_or_default()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("threshold exactness", criterion_1, Duration::from_secs(1)),
        ("binomial oracle equivalence", criterion_2, Duration::from_secs(30)),
        ("clean-pipeline zeros", criterion_3, Duration::from_secs(60)),
        ("white-box break", criterion_4, Duration::from_secs(300)),
        ("subset-attack median robustness", criterion_5, Duration::from_secs(300)),
        ("black-box asymmetry", criterion_6, Duration::from_secs(600)),
        ("triangle trace shape", criterion_7, Duration::from_secs(600)),
        ("aggregation oracles", criterion_8, Duration::from_secs(30)),
        ("metric fixed points", criterion_9, Duration::from_secs(1)),
        ("determinism", criterion_10, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; exceeded runtime budget of {budget:?}")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {id} ({name}) [{:.1}s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
