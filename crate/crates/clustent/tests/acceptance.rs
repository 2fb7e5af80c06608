//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use clustent_core::cluster::{assign, fit_kmeans, lloyd_traced, seed_plus_plus};
use clustent_core::entropy::cluster_entropy;
use clustent_core::eval::classifier::loss_and_gradient;
use clustent_core::eval::metrics::EvalReport;
use clustent_core::eval::{run_experiment, Condition, ExperimentConfig};
use clustent_core::pca::{fit_pca, transform};
use clustent_core::pipeline::{select, SelectionParams};
use clustent_core::simbench::{generate, truth_diversity, SimConfig};
use clustent_core::stats::{spearman, welch_test};
use clustent_core::{Domain, FeatureTable, KMeansParams, PatchRecord, Rng};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn table(points: &[Vec<f64>]) -> FeatureTable {
    let records = points
        .iter()
        .enumerate()
        .map(|(i, p)| PatchRecord { patch_id: format!("p{i}"), group_id: format!("g{}", i % 4), label: None, features: p.clone() })
        .collect();
    FeatureTable::new(records, points[0].len(), 1, Domain::Target).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn entropy_exactness() -> Check {
    let h0 = cluster_entropy(&[7, 0, 0, 0]).unwrap();
    ensure!(h0.abs() <= 1e-12, "[7,0,0,0] gave {h0}");
    let hu = cluster_entropy(&[9; 10]).unwrap();
    ensure!((hu - 2.302585092994046).abs() <= 1e-12, "uniform K=10 gave {hu}");
    let h31 = cluster_entropy(&[3, 1, 0, 0]).unwrap();
    ensure!((h31 - 0.5623351446188083).abs() <= 1e-12, "[3,1,0,0] gave {h31}");
    Ok(format!("0, {hu}, {h31}"))
}

fn entropy_properties() -> Check {
    let mut rng = Rng::seed_from_u64(2);
    let cases = 2000;
    for case in 0..cases {
        let k = 1 + rng.below(32);
        let mut c: Vec<usize> = (0..k).map(|_| if rng.below(4) == 0 { 0 } else { rng.below(100) }).collect();
        if c.iter().all(|&x| x == 0) {
            c[rng.below(k)] = 1 + rng.below(10);
        }
        let h = cluster_entropy(&c).unwrap();
        ensure!(h >= 0.0 && h <= (k as f64).ln() + 1e-12, "case {case}: H = {h} outside [0, ln {k}]");

        let mut p = c.clone();
        rng.shuffle(&mut p);
        let hp = cluster_entropy(&p).unwrap();
        ensure!((hp - h).abs() <= 1e-12, "case {case}: permutation changed H by {}", hp - h);

        let m = 1 + rng.below(50);
        let scaled: Vec<usize> = c.iter().map(|x| x * m).collect();
        let hs = cluster_entropy(&scaled).unwrap();
        ensure!((hs - h).abs() <= 1e-12, "case {case}: scaling by {m} changed H by {}", hs - h);

        if k >= 2 {
            let i = rng.below(k);
            let j = (i + 1 + rng.below(k - 1)) % k;
            let mut merged = c.clone();
            merged[i] += merged[j];
            merged.remove(j);
            let hm = cluster_entropy(&merged).unwrap();
            ensure!(hm <= h + 1e-12, "case {case}: merge raised H from {h} to {hm}");
        }
    }
    Ok(format!("{cases} random count vectors, K <= 32"))
}

fn pca_correctness() -> Check {
    // Sample covariance of these four points is [[2,1],[1,2]].
    let (s, t) = (1.5, 0.75f64.sqrt());
    let two = table(&[vec![s, s], vec![-s, -s], vec![t, -t], vec![-t, t]]);
    let m = fit_pca(&two, 2).unwrap();
    ensure!((m.eigenvalues[0] - 3.0).abs() < 1e-9 && (m.eigenvalues[1] - 1.0).abs() < 1e-9, "2x2 eigenvalues {:?}", m.eigenvalues);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    ensure!(
        (m.components[0][0] - r).abs() < 1e-9 && (m.components[0][1] - r).abs() < 1e-9,
        "2x2 first component {:?}",
        m.components[0]
    );

    let mut rng = Rng::seed_from_u64(3);
    let (mut worst_orth, mut worst_var, mut worst_rec) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let big = 2 + rng.below(7);
        let n = 30 + rng.below(60);
        let scales: Vec<f64> = (0..big).map(|j| 1.0 + j as f64 + rng.next_f64()).collect();
        let mix: Vec<Vec<f64>> = (0..big).map(|_| (0..big).map(|_| rng.normal()).collect()).collect();
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = scales.iter().map(|s| s * rng.normal()).collect();
                (0..big).map(|a| (0..big).map(|b| mix[a][b] * z[b]).sum::<f64>() + 5.0).collect()
            })
            .collect();
        let t = table(&pts);
        let full = fit_pca(&t, big).unwrap();
        for d in 1..=big {
            let m = fit_pca(&t, d).unwrap();
            for a in 0..d {
                for b in 0..d {
                    let dot: f64 = m.components[a].iter().zip(&m.components[b]).map(|(x, y)| x * y).sum();
                    worst_orth = worst_orth.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
                }
            }
            let z = transform(&m, &t).unwrap();
            for a in 0..d {
                let col: Vec<f64> = z.records().iter().map(|r| r.features[a]).collect();
                let var = clustent_core::stats::variance(&col);
                worst_var = worst_var.max(rel_err(var, m.eigenvalues[a]));
            }
            if d < big {
                let err: f64 = pts
                    .iter()
                    .map(|x| {
                        let back = m.reconstruct(&m.project(x));
                        x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    })
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                let discarded: f64 = full.eigenvalues[d..].iter().sum();
                worst_rec = worst_rec.max(rel_err(err, discarded));
            }
        }
    }
    ensure!(worst_orth < 1e-9, "orthonormality error {worst_orth:e}");
    ensure!(worst_var < 1e-9, "variance vs eigenvalue relative error {worst_var:e}");
    ensure!(worst_rec < 1e-9, "reconstruction vs discarded relative error {worst_rec:e}");
    Ok(format!("max errors: orth {worst_orth:.1e}, var {worst_var:.1e}, recon {worst_rec:.1e}; 2x2 oracle ok"))
}

/// Lowest inertia over all splits of `pts` into two non-empty groups.
fn best_two_partition(pts: &[Vec<f64>]) -> f64 {
    let n = pts.len();
    let cost = |members: &[&Vec<f64>]| -> f64 {
        let d = members[0].len();
        let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
        members.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>()).sum()
    };
    let mut best = f64::INFINITY;
    // Point 0 always sits in the first group.
    for mask in 0..(1u32 << (n - 1)) {
        let (mut a, mut b) = (vec![&pts[0]], Vec::new());
        for i in 1..n {
            if mask >> (i - 1) & 1 == 1 {
                b.push(&pts[i]);
            } else {
                a.push(&pts[i]);
            }
        }
        if !b.is_empty() {
            best = best.min(cost(&a) + cost(&b));
        }
    }
    best
}

fn kmeans_correctness() -> Check {
    let mut rng = Rng::seed_from_u64(4);
    for inst in 0..100 {
        let n = 20 + rng.below(80);
        let dim = 1 + rng.below(4);
        let k = 1 + rng.below(8);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.normal() * 3.0).collect()).collect();
        let t = table(&pts);
        let init = seed_plus_plus(&t, k, inst).unwrap();
        let run = lloyd_traced(&t, &init, 1e-12, 300, inst).unwrap();
        for (it, w) in run.inertia_history.windows(2).enumerate() {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "instance {inst}: inertia rose at iteration {}: {} -> {}", it + 1, w[0], w[1]);
        }
    }

    let mut optimal = 0;
    for outer in 0..100u64 {
        let mut rng = Rng::seed_from_u64(1000 + outer);
        let n = 4 + rng.below(7);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal() * 2.0, rng.normal() * 2.0]).collect();
        let t = table(&pts);
        let (model, _) = fit_kmeans(&t, &KMeansParams { k: 2, seed: outer, restarts: 20, ..Default::default() }).unwrap();
        let best = best_two_partition(&pts);
        if model.inertia <= best * (1.0 + 1e-9) {
            optimal += 1;
        }
    }
    ensure!(optimal >= 95, "global optimum reached in {optimal}/100 outer seeds");

    let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.normal() * 4.0, rng.normal() * 4.0, rng.normal()]).collect();
    let t = table(&pts);
    let (model, _) = fit_kmeans(&t, &KMeansParams { k: 6, ..Default::default() }).unwrap();
    let labels = assign(&model, &t).unwrap().labels;
    for (i, p) in pts.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in model.centroids.iter().enumerate() {
            let d: f64 = p.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        ensure!(labels[i] == best.1, "point {i}: assign gave {} but nearest is {}", labels[i], best.1);
    }
    Ok(format!("monotone on 100 instances; optimum in {optimal}/100; assign matches brute force on 200 points"))
}

fn metric_correctness() -> Check {
    let r = EvalReport::from_confusion(vec![vec![5, 1], vec![2, 2]]).unwrap();
    ensure!((r.m_iou - 0.5125).abs() <= 1e-12, "mIoU {}", r.m_iou);

    let mut rng = Rng::seed_from_u64(5);
    for case in 0..500 {
        let c = 2 + rng.below(5);
        let conf: Vec<Vec<usize>> = (0..c).map(|_| (0..c).map(|_| rng.below(20)).collect()).collect();
        let Ok(r) = EvalReport::from_confusion(conf) else { continue };
        for m in &r.per_class {
            let identity = 2.0 * m.iou / (1.0 + m.iou);
            ensure!((m.dice - identity).abs() <= 1e-12, "case {case}: dice {} vs 2iou/(1+iou) {identity}", m.dice);
        }
    }

    let perfect = EvalReport::from_confusion(vec![vec![4, 0, 0], vec![0, 7, 0], vec![0, 0, 1]]).unwrap();
    ensure!(
        [perfect.m_precision, perfect.m_recall, perfect.m_dice, perfect.m_iou].iter().all(|&v| v == 1.0),
        "perfect prediction gave {perfect:?}"
    );
    Ok(format!("mIoU {}; identity on 500 fuzzed matrices; perfect = 1.0", r.m_iou))
}

fn gradient_check() -> Check {
    let mut rng = Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let c = 2 + rng.below(4);
        let d = 1 + rng.below(8);
        let w: Vec<Vec<f64>> = (0..c).map(|_| (0..=d).map(|_| rng.normal()).collect()).collect();
        let xs: Vec<Vec<f64>> = (0..1 + rng.below(16)).map(|_| (0..d).map(|_| 2.0 * rng.normal()).collect()).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| (x.as_slice(), rng.below(c))).collect();
        let (_, grad) = loss_and_gradient(&w, &batch);
        let h = 1e-5;
        for i in 0..c {
            for j in 0..=d {
                let mut plus = w.clone();
                plus[i][j] += h;
                let mut minus = w.clone();
                minus[i][j] -= h;
                let numeric = (loss_and_gradient(&plus, &batch).0 - loss_and_gradient(&minus, &batch).0) / (2.0 * h);
                // Relative to the coordinate's magnitude, floored at 1e-4.
                let rel = (numeric - grad[i][j]).abs() / grad[i][j].abs().max(1e-4);
                ensure!(rel < 1e-6, "instance {inst} ({i},{j}): analytic {} numeric {numeric}", grad[i][j]);
                worst = worst.max(rel);
            }
        }
    }
    Ok(format!("20 instances, worst relative error {worst:.1e}"))
}

fn sim_params() -> SelectionParams {
    SelectionParams { dim: 8, kmeans: KMeansParams { k: 10, seed: 0, ..Default::default() }, ..Default::default() }
}

fn selection_validity() -> Check {
    let out = generate(&SimConfig::default()).unwrap();
    let sel = select(&out.target, None, &sim_params()).unwrap();
    let truth = truth_diversity(&out.truth);
    let h: Vec<f64> = sel.entropies.iter().map(|e| e.entropy).collect();
    let t: Vec<f64> = truth.iter().map(|x| x.1).collect();
    ensure!(sel.entropies.iter().zip(&truth).all(|(e, (g, _))| &e.group_id == g), "group order mismatch");
    let rho = spearman(&h, &t);
    ensure!(rho > 0.8, "Spearman {rho}");
    Ok(format!("Spearman {rho:.3} over {} groups", h.len()))
}

fn table_one_ordering() -> Check {
    let out = generate(&SimConfig::default()).unwrap();
    let sel = select(&out.target, None, &sim_params()).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let s = run_experiment(&out.source, &out.target, &sel.ranking, &seeds, &ExperimentConfig::default()).unwrap();
    let c = |x| s.condition(x).unwrap();
    let (hi, med, lo) = (c(Condition::High), c(Condition::Med), c(Condition::Low));
    let line = format!(
        "mIoU S->T {:.3}, High {:.3}, Med {:.3}, Low {:.3}, T->T {:.3}",
        c(Condition::SToT).mean_m_iou,
        hi.mean_m_iou,
        med.mean_m_iou,
        lo.mean_m_iou,
        c(Condition::TToT).mean_m_iou
    );
    ensure!(hi.mean_m_iou > med.mean_m_iou && med.mean_m_iou > lo.mean_m_iou, "ordering violated: {line}");
    let p = s.test(Condition::High, Condition::Low, "m_iou").and_then(|t| t.p_bonferroni);
    ensure!(p.is_some_and(|p| p < 0.05), "High vs Low not significant: adjusted p {p:?}; {line}");
    let wins = hi.m_iou.iter().zip(&lo.m_iou).filter(|(h, l)| h >= l).count();
    ensure!(wins as f64 >= 0.7 * seeds.len() as f64, "High >= Low in only {wins}/20 seeds; {line}");
    Ok(format!("{line}; adjusted p {:.1e}; High >= Low in {wins}/20", p.unwrap()))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn pipeline_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_clustent");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).current_dir(d).args(args).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    run(&["simulate", "--out", "sim"])?;
    run(&["pipeline", "sim/target.csv", "--classes", "3", "--dim", "8", "--out", "first"])?;
    run(&["pipeline", "--manifest", "first/pipeline.manifest.json", "--out", "second"])?;
    run(&["pipeline", "--manifest", "first/pipeline.manifest.json", "--out", "third", "--jobs", "4"])?;
    let first = dir_bytes(&d.join("first"));
    ensure!(first == dir_bytes(&d.join("second")), "rerun from manifest differs");
    ensure!(first == dir_bytes(&d.join("third")), "rerun with 4 threads differs");
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    Ok(format!("{} artifacts identical across 3 runs ({})", first.len(), names.join(", ")))
}

fn welch_oracle() -> Check {
    let w = welch_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    ensure!((w.t + 1.0).abs() <= 1e-12, "t = {}", w.t);
    ensure!((w.p - 0.3466).abs() <= 1e-3, "p = {}", w.p);
    Ok(format!("t = {}, df = {}, p = {:.6}", w.t, w.df, w.p))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("entropy exactness", entropy_exactness),
        ("entropy properties", entropy_properties),
        ("PCA correctness", pca_correctness),
        ("k-means correctness", kmeans_correctness),
        ("metric correctness", metric_correctness),
        ("gradient check", gradient_check),
        ("selection-metric validity", selection_validity),
        ("High > Med > Low ordering", table_one_ordering),
        ("pipeline determinism", pipeline_determinism),
        ("Welch test oracle", welch_oracle),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}) [{secs:.2}s]", i + 1);
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
