//! Acceptance suite. Runs as a plain binary so the per-criterion verdicts always print.

#![allow(clippy::eq_op, clippy::type_complexity)]

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use reid_rerank::curriculum::{alpha, ScheduleConfig};
use reid_rerank::kreciprocal::kreciprocal_rerank;
use reid_rerank::metrics::{evaluate, RerankMode};
use reid_rerank::pipeline::{reports_json, run_eval, with_threads, InputSource, PipelineConfig};
use reid_rerank::temporal::cross_temporal;
use reid_rerank::{
    feature_distances, generate, load_split, save_split, temporal_rerank, Direction, DistanceMatrix, Error,
    EvalSplit, Modality, RerankConfig, SynthConfig, TrackletRecord,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let c = ScheduleConfig::Cosine { phi: 3.0 };
    let a0 = alpha(&c, 0.0).map_err(|e| e.to_string())?;
    let a1 = alpha(&c, 1.0).map_err(|e| e.to_string())?;
    check((a0 - 0.5).abs() <= 1e-12, || format!("alpha(0) = {a0}"))?;
    check((a1 - 0.25).abs() <= 1e-12, || format!("alpha(1) = {a1}"))?;
    let values: Vec<f64> = (0..100).map(|i| alpha(&c, i as f64 / 99.0).unwrap()).collect();
    check(values.windows(2).all(|w| w[0] > w[1]), || {
        "schedule not strictly decreasing".into()
    })?;
    Ok(format!(
        "alpha(0)={a0}, alpha(1)={a1}, 100 samples strictly decreasing"
    ))
}

fn criterion_2() -> Outcome {
    let mut r = rng(2002);
    let mut worst = 0.0f64;
    for instance in 0..100 {
        let m = r.random_range(2..=50);
        let n = r.random_range(2..=50);
        let dim = r.random_range(1..=32);
        let k1 = r.random_range(1..=7usize);
        let k2 = r.random_range(1..=5usize.min(k1));
        let cfg = RerankConfig {
            k1,
            k2,
            expanded_sets: r.random_bool(0.75),
            normalize_base: r.random_bool(0.75),
            ..RerankConfig::default()
        };
        let (frames, clustered) = (r.random_range(1..4), r.random_bool(0.7));
        let split = random_split(&mut r, m, n, dim, frames, clustered);
        let out = kreciprocal_rerank(&split, &cfg).map_err(|e| format!("instance {instance}: {e}"))?;
        let (q, g) = pooled(&split);
        let oracle = oracle_jaccard(&q, &g, k1, k2, cfg.expanded_sets, cfg.normalize_base);
        let diff = max_abs_diff(out.jaccard.values(), &oracle.jaccard);
        check(diff <= 1e-6, || {
            format!("instance {instance} ({m}x{n}, k1={k1}, k2={k2}): {diff:e}")
        })?;
        worst = worst.max(diff);
    }
    Ok(format!("100 instances, max abs diff {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(3003);
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let frames = r.random_range(2..=10);
        let (m, n) = (r.random_range(3..30), r.random_range(3..30));
        let split = random_split(&mut r, m, n, 8, frames, true);
        let lambda1 = r.random_range(0.0..=1.0);
        let cfg = RerankConfig {
            lambda1,
            lambda2: 0.0,
            groups: r.random_range(1..=frames),
            ..RerankConfig::default()
        };
        let t = temporal_rerank(&split, &cfg).map_err(|e| e.to_string())?;
        let k = kreciprocal_rerank(&split, &cfg).map_err(|e| e.to_string())?;
        let same = t
            .fused
            .values()
            .iter()
            .zip(k.fused.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, || {
            format!("instance {instance}: lambda2=0 output differs from k-reciprocal")
        })?;

        let lambda2 = r.random_range(0.01..2.0);
        let cfg = RerankConfig {
            groups: 1,
            lambda2,
            ..cfg
        };
        let t = temporal_rerank(&split, &cfg).map_err(|e| e.to_string())?;
        for (idx, &v) in t.fused.values().iter().enumerate() {
            let expect = lambda1 * k.base.values()[idx] + (1.0 - lambda1 + lambda2) * k.jaccard.values()[idx];
            worst = worst.max((v - expect).abs());
        }
        check(worst <= 1e-9, || {
            format!("instance {instance}: L=1 collapse off by {worst:e}")
        })?;
    }
    Ok(format!(
        "20 instances bit-exact at lambda2=0, L=1 collapse max diff {worst:.2e}"
    ))
}

fn criterion_4() -> Outcome {
    let mut r = rng(4004);
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let groups = if r.random_bool(0.5) { 2 } else { 4 };
        let frames = r.random_range(groups..=12);
        let k1 = r.random_range(1..=6usize);
        let cfg = RerankConfig {
            k1,
            k2: r.random_range(1..=k1.min(4)),
            groups,
            ..RerankConfig::default()
        };
        let (m, n) = (r.random_range(3..=30), r.random_range(3..=30));
        let split = random_split(&mut r, m, n, 6, frames, true);
        let got = cross_temporal(&split, &cfg).map_err(|e| e.to_string())?;
        let oracle = oracle_cross(&split, cfg.k1, cfg.k2, groups);
        let diff = max_abs_diff(got.values.values(), &oracle);
        check(diff <= 1e-6, || {
            format!("instance {instance} (T={frames}, L={groups}): {diff:e}")
        })?;
        worst = worst.max(diff);
    }
    Ok(format!("50 instances, max abs diff {worst:.2e}"))
}

struct MetricCase {
    name: &'static str,
    /// Gallery entries as (is_positive, camera) in gallery order.
    gallery: Vec<(bool, u32)>,
    /// Row-major distances; gallery index order when `None`.
    dist: Option<Vec<f64>>,
    exclude_same_camera: bool,
    /// Precision at each positive hit, in rank order.
    precisions: Vec<f64>,
    cmc: Vec<f64>,
}

fn case_split(case: &MetricCase) -> (EvalSplit, DistanceMatrix) {
    let row = &case.gallery;
    let n = row.len();
    let gallery: Vec<TrackletRecord> = row
        .iter()
        .enumerate()
        .map(|(j, &(pos, cam))| {
            let pid = if pos { 0 } else { 1000 + j as i64 };
            TrackletRecord::from_rows(format!("g{j}"), pid, cam, Modality::Ir, &[vec![0.0]]).unwrap()
        })
        .collect();
    let q = vec![TrackletRecord::from_rows("q0", 0, 0, Modality::Rgb, &[vec![0.0]]).unwrap()];
    let split = EvalSplit::new(q, gallery, Direction::VisibleToInfrared).unwrap();
    let values = case
        .dist
        .clone()
        .unwrap_or_else(|| (0..n).map(|j| j as f64).collect());
    let d = DistanceMatrix::new(
        1,
        n,
        values,
        vec!["q0".into()],
        (0..n).map(|j| format!("g{j}")).collect(),
    )
    .unwrap();
    (split, d)
}

fn single(name: &'static str, pattern: &[u8], precisions: Vec<f64>, cmc: Vec<f64>) -> MetricCase {
    MetricCase {
        name,
        gallery: pattern.iter().map(|&b| (b == 1, 1)).collect(),
        dist: None,
        exclude_same_camera: false,
        precisions,
        cmc,
    }
}

fn expected_ap(precisions: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in precisions {
        s += p;
    }
    s / precisions.len() as f64
}

fn metric_battery() -> Vec<MetricCase> {
    let mut cases = vec![
        single("top hit", &[1, 0, 0], vec![1.0 / 1.0], vec![1.0, 1.0, 1.0]),
        single("second hit", &[0, 1, 0], vec![1.0 / 2.0], vec![0.0, 1.0, 1.0]),
        single("last hit", &[0, 0, 1], vec![1.0 / 3.0], vec![0.0, 0.0, 1.0]),
        single(
            "ranks one and three",
            &[1, 0, 1, 0],
            vec![1.0 / 1.0, 2.0 / 3.0],
            vec![1.0; 4],
        ),
        single(
            "ranks two and four",
            &[0, 1, 0, 1],
            vec![1.0 / 2.0, 2.0 / 4.0],
            vec![0.0, 1.0, 1.0, 1.0],
        ),
        single(
            "two leading hits",
            &[1, 1, 0],
            vec![1.0 / 1.0, 2.0 / 2.0],
            vec![1.0; 3],
        ),
        single(
            "two trailing hits",
            &[0, 1, 1],
            vec![1.0 / 2.0, 2.0 / 3.0],
            vec![0.0, 1.0, 1.0],
        ),
        single(
            "first and fifth",
            &[1, 0, 0, 0, 1],
            vec![1.0 / 1.0, 2.0 / 5.0],
            vec![1.0; 5],
        ),
        single("single candidate", &[1], vec![1.0], vec![1.0]),
    ];
    let mut ties = single("ties by index", &[0, 0, 1], vec![1.0 / 3.0], vec![0.0, 0.0, 1.0]);
    ties.dist = Some(vec![0.5, 0.5, 0.5]);
    cases.push(ties);
    let mut reordered = single(
        "distance order",
        &[1, 0, 0, 1],
        vec![1.0 / 2.0, 2.0 / 3.0],
        vec![0.0, 1.0, 1.0, 1.0],
    );
    reordered.dist = Some(vec![3.0, 0.5, 7.0, 1.0]);
    cases.push(reordered);
    cases.push(MetricCase {
        name: "same camera excluded",
        gallery: vec![(true, 0), (false, 1), (true, 1)],
        dist: None,
        exclude_same_camera: true,
        precisions: vec![1.0 / 2.0],
        cmc: vec![0.0, 1.0, 1.0],
    });
    cases.push(MetricCase {
        name: "same camera kept",
        gallery: vec![(true, 0), (false, 1), (true, 1)],
        dist: None,
        exclude_same_camera: false,
        precisions: vec![1.0 / 1.0, 2.0 / 3.0],
        cmc: vec![1.0, 1.0, 1.0],
    });
    cases
}

fn multi_query_cases() -> Result<(), String> {
    // q0 hits at rank 1, q1 at rank 2, q2 has no positive
    let rec = |id: &str, p: i64, m: Modality| TrackletRecord::from_rows(id, p, 0, m, &[vec![0.0]]).unwrap();
    let split = EvalSplit::new(
        vec![
            rec("q0", 0, Modality::Rgb),
            rec("q1", 1, Modality::Rgb),
            rec("q2", 7, Modality::Rgb),
        ],
        vec![rec("g0", 0, Modality::Ir), rec("g1", 1, Modality::Ir)],
        Direction::VisibleToInfrared,
    )
    .unwrap();
    let d = DistanceMatrix::new(
        3,
        2,
        vec![0.1, 0.2, 0.1, 0.2, 0.3, 0.4],
        vec!["q0".into(), "q1".into(), "q2".into()],
        vec!["g0".into(), "g1".into()],
    )
    .unwrap();
    let r = evaluate(&d, &split, false).map_err(|e| e.to_string())?;
    check(r.per_query_ap == vec![Some(1.0), Some(1.0 / 2.0), None], || {
        format!("per-query AP {:?}", r.per_query_ap)
    })?;
    check(r.map == (1.0 + 1.0 / 2.0) / 2.0, || format!("mAP {}", r.map))?;
    check(r.cmc == vec![1.0 / 2.0, 2.0 / 2.0], || format!("cmc {:?}", r.cmc))?;
    check(r.skipped_queries == 1, || "skipped count".into())
}

fn criterion_5() -> Outcome {
    let cases = metric_battery();
    for case in &cases {
        let (split, d) = case_split(case);
        let r = evaluate(&d, &split, case.exclude_same_camera).map_err(|e| format!("{}: {e}", case.name))?;
        let ap = Some(expected_ap(&case.precisions));
        check(r.per_query_ap[0] == ap, || {
            format!("{}: AP {:?} != {:?}", case.name, r.per_query_ap[0], ap)
        })?;
        check(r.cmc == case.cmc, || {
            format!("{}: CMC {:?} != {:?}", case.name, r.cmc, case.cmc)
        })?;
    }
    multi_query_cases()?;

    let mut r = rng(5005);
    for instance in 0..20 {
        let (m, n) = (r.random_range(2..15), r.random_range(2..25));
        let split = random_split(&mut r, m, n, 4, 2, true);
        let d = feature_distances(&split).map_err(|e| e.to_string())?;
        let transformed = DistanceMatrix::new(
            d.rows(),
            d.cols(),
            d.values().iter().map(|v| 5.0 * v.sqrt() + 2.0).collect(),
            d.row_ids().to_vec(),
            d.col_ids().to_vec(),
        )
        .unwrap();
        let (Ok(a), Ok(b)) = (evaluate(&d, &split, false), evaluate(&transformed, &split, false)) else {
            continue;
        };
        check(a.cmc == b.cmc && a.map == b.map, || {
            format!("instance {instance}: monotone transform changed metrics")
        })?;
    }
    Ok(format!(
        "{} single-query cases + 1 multi-query case exact, 20 monotone-transform instances",
        cases.len()
    ))
}

fn map_of(split: &EvalSplit, mode: RerankMode) -> f64 {
    let cfg = RerankConfig::default();
    let d = match mode {
        RerankMode::None => feature_distances(split).unwrap(),
        RerankMode::KReciprocal => kreciprocal_rerank(split, &cfg).unwrap().fused,
        RerankMode::TemporalKReciprocal => temporal_rerank(split, &cfg).unwrap().fused,
    };
    evaluate(&d, split, false).unwrap().map
}

fn criterion_6() -> Outcome {
    let mut ordered = 0;
    let mut gain = 0.0;
    let mut rows = Vec::new();
    for seed in 1..=10 {
        let split = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let raw = map_of(&split, RerankMode::None);
        let kr = map_of(&split, RerankMode::KReciprocal);
        let tkr = map_of(&split, RerankMode::TemporalKReciprocal);
        if tkr >= kr && kr >= raw {
            ordered += 1;
        }
        gain += tkr - raw;
        rows.push(format!("{seed}:{raw:.4}/{kr:.4}/{tkr:.4}"));
    }
    let mean_gain = gain / 10.0;
    let detail = format!(
        "ordered on {ordered}/10 seeds, mean gain {mean_gain:+.4} [{}]",
        rows.join(" ")
    );
    check(ordered >= 8 && mean_gain > 0.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let synth = SynthConfig {
        num_ids: 500,
        cams_per_id: 2,
        frames_per_tracklet: 10,
        dim: 512,
        seed: 7,
        ..SynthConfig::default()
    };
    let split = generate(&synth).map_err(|e| e.to_string())?;
    check(
        split.queries().len() == 1000 && split.gallery().len() == 1000,
        || "unexpected split size".into(),
    )?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_split(&split, dir.path()).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::new(InputSource::Path(dir.path().to_path_buf()));
    cfg.rerank.groups = 2;
    cfg.both_directions = false;

    let start = Instant::now();
    let single = with_threads(Some(1), || run_eval(&cfg))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let eight = with_threads(Some(8), || run_eval(&cfg))
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let a = reports_json(&single.reports).map_err(|e| e.to_string())?;
    let b = reports_json(&eight.reports).map_err(|e| e.to_string())?;
    check(a == b, || "1-thread and 8-thread reports differ".into())?;
    check(
        single.distances[0].values() == eight.distances[0].values(),
        || "distances differ across threads".into(),
    )?;
    let detail = format!(
        "1000x1000 pipeline in {:.2}s on 1 thread ({} cores available), reports identical at 1 and 8 threads",
        elapsed.as_secs_f64(),
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    );
    check(elapsed < Duration::from_secs(10), || detail.clone())?;
    Ok(detail)
}

fn same_records(a: &[TrackletRecord], b: &[TrackletRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.tracklet_id() == y.tracklet_id()
                && x.person_id() == y.person_id()
                && x.camera_id() == y.camera_id()
                && x.modality() == y.modality()
                && x.dim() == y.dim()
                && x.frames()
                    .iter()
                    .map(|f| f.to_bits())
                    .eq(y.frames().iter().map(|f| f.to_bits()))
        })
}

fn cli_failure(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_reid-rerank"))
        .args(args)
        .env_remove("REID_RERANK_THREADS")
        .output()
        .expect("spawn cli");
    (
        out.status.code(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn criterion_8() -> Outcome {
    let split = generate(&SynthConfig {
        num_ids: 250,
        cams_per_id: 2,
        dim: 32,
        seed: 8,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let total = split.queries().len() + split.gallery().len();
    check(total == 1000, || format!("{total} records"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_split(&split, dir.path()).map_err(|e| e.to_string())?;
    let back = load_split(dir.path()).map_err(|e| e.to_string())?;
    check(
        same_records(split.queries(), back.queries())
            && same_records(split.gallery(), back.gallery())
            && back.direction() == split.direction(),
        || "round trip changed records".into(),
    )?;

    let manifest = dir.path().join("manifest.json");
    let blob = dir.path().join("features.f32");
    let original = fs::read_to_string(&manifest).map_err(|e| e.to_string())?;
    let bytes = fs::read(&blob).map_err(|e| e.to_string())?;
    let path = dir.path().to_str().unwrap();
    let corruptions: Vec<(&str, Box<dyn Fn(&Path)>)> = vec![
        (
            "truncated manifest",
            Box::new(|_| fs::write(&manifest, &original[..original.len() / 3]).unwrap()),
        ),
        (
            "unknown version",
            Box::new(|_| {
                fs::write(
                    &manifest,
                    original.replace("\"format_version\": 1", "\"format_version\": 2"),
                )
                .unwrap()
            }),
        ),
        (
            "wrong dimension",
            Box::new(|_| {
                fs::write(
                    &manifest,
                    original.replace("\"feature_dim\": 32", "\"feature_dim\": 31"),
                )
                .unwrap()
            }),
        ),
        (
            "short blob",
            Box::new(|_| fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap()),
        ),
        ("missing blob", Box::new(|_| fs::remove_file(&blob).unwrap())),
    ];
    for (name, corrupt) in &corruptions {
        fs::write(&manifest, &original).unwrap();
        fs::write(&blob, &bytes).unwrap();
        corrupt(dir.path());
        check(load_split(dir.path()).is_err(), || {
            format!("{name}: loaded without error")
        })?;
        let (code, stderr) = cli_failure(&["eval", "--input", path]);
        check(code == Some(3) && stderr.contains("[load]"), || {
            format!("{name}: exit {code:?}, stderr {stderr:?}")
        })?;
    }
    fs::write(
        &manifest,
        original.replace("\"feature_dim\": 32", "\"feature_dim\": 31"),
    )
    .unwrap();
    fs::write(&blob, &bytes).unwrap();
    check(
        matches!(
            load_split(dir.path()),
            Err(Error::DimensionMismatch {
                declared: 31,
                found: 32,
                ..
            })
        ),
        || "dimension mismatch not reported as such".into(),
    )?;
    fs::write(&manifest, &original).unwrap();
    let (code, stderr) = cli_failure(&["pipeline", "--input", path, "--k1", "0", "--out", path]);
    check(code == Some(2) && stderr.contains("[config]"), || {
        format!("bad k1: exit {code:?}, {stderr:?}")
    })?;
    Ok(format!(
        "{total} records bit-exact, {} corruptions exit 3 with [load], bad config exits 2",
        corruptions.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("curriculum endpoints", criterion_1, Duration::from_secs(1)),
        (
            "k-reciprocal oracle equivalence",
            criterion_2,
            Duration::from_secs(30),
        ),
        (
            "temporal reduction identities",
            criterion_3,
            Duration::from_secs(10),
        ),
        ("cross-temporal oracle", criterion_4, Duration::from_secs(60)),
        ("metrics correctness", criterion_5, Duration::from_secs(5)),
        ("directional re-ranking benefit", criterion_6, Duration::MAX),
        ("performance envelope", criterion_7, Duration::MAX),
        ("format round-trip", criterion_8, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let timing = if *limit == Duration::MAX {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())
        };
        let outcome = match outcome {
            Ok(detail) if elapsed >= *limit => Err(format!("too slow: {detail}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] criterion {}: {name}: {detail} ({timing})", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {why} ({timing})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
