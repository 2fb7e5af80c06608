use clustent_core::entropy::cluster_entropy;
use clustent_core::simbench::{generate, weight_entropy, AlphaRange, Shift, SimConfig};
use clustent_core::pipeline::{select, SelectionParams};
use clustent_core::stats::welch_test;
use clustent_core::KMeansParams;

fn nearest(x: &[f64], means: &[Vec<f64>]) -> usize {
    let d2 = |m: &Vec<f64>| m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..means.len()).min_by(|&a, &b| d2(&means[a]).total_cmp(&d2(&means[b]))).unwrap()
}

#[test]
fn huge_alpha_gives_near_uniform_groups() {
    let cfg = SimConfig {
        target_priors: vec![1.0 / 3.0; 3],
        alpha: AlphaRange { min: 1e6, max: 1e6 },
        shift: Shift { translation: 2.0, scale: 1.0 },
        wsis: 20,
        seed: 4,
        ..SimConfig::default()
    };
    let out = generate(&cfg).unwrap();
    let m = cfg.num_components();
    let max_h = (m as f64).ln();
    for g in &out.truth.groups {
        assert!(g.weights.iter().all(|w| (w - 1.0 / m as f64).abs() < 0.01), "{:?}", g.weights);
        assert!(weight_entropy(&g.weights) > 0.999 * max_h);
    }
    for group in out.target.groups() {
        let mut hist = vec![0usize; m];
        for &i in &group.rows {
            hist[nearest(out.target.features(i), &out.truth.target_means)] += 1;
        }
        let h = cluster_entropy(&hist).unwrap();
        assert!(h >= 0.95 * max_h, "{} has sample entropy {h}", group.id);
    }
}

fn class_mean_discrepancy(cfg: &SimConfig) -> f64 {
    let out = generate(cfg).unwrap();
    let tests = cfg.num_classes * cfg.dim;
    let mut min_p = 1.0f64;
    for c in 0..cfg.num_classes {
        for j in 0..cfg.dim {
            let column = |t: &clustent_core::FeatureTable| -> Vec<f64> {
                t.records().iter().filter(|r| r.label == Some(c)).map(|r| r.features[j]).collect()
            };
            let w = welch_test(&column(&out.source), &column(&out.target)).unwrap();
            min_p = min_p.min(w.p);
        }
    }
    (min_p * tests as f64).min(1.0)
}

#[test]
fn no_shift_means_no_class_mean_discrepancy() {
    let priors = vec![0.5, 0.3, 0.2];
    let one_component = SimConfig {
        components_per_class: 1,
        source_priors: priors.clone(),
        target_priors: priors.clone(),
        shift: Shift { translation: 0.0, scale: 1.0 },
        seed: 9,
        ..SimConfig::default()
    };
    let p = class_mean_discrepancy(&one_component);
    assert!(p > 0.01, "Bonferroni-adjusted p = {p}");

    // With two components per class the within-class mix must also match,
    // which a huge concentration guarantees.
    let two_components = SimConfig {
        components_per_class: 2,
        alpha: AlphaRange { min: 1e6, max: 1e6 },
        ..one_component
    };
    let p = class_mean_discrepancy(&two_components);
    assert!(p > 0.01, "Bonferroni-adjusted p = {p}");
}

#[test]
fn translation_is_detected() {
    let shifted = SimConfig { seed: 9, ..SimConfig::default() };
    assert!(class_mean_discrepancy(&shifted) < 1e-6);
}

#[test]
fn lowest_entropy_group_is_dominated_by_one_cluster() {
    let out = generate(&SimConfig::default()).unwrap();
    let params = SelectionParams { dim: 8, kmeans: KMeansParams { k: 10, ..Default::default() }, ..Default::default() };
    let sel = select(&out.target, None, &params).unwrap();
    let lowest = sel.ranking.low.last().unwrap();
    let g = sel.entropies.iter().find(|e| &e.group_id == lowest).unwrap();
    let top = g.proportions.iter().cloned().fold(0.0, f64::max);
    assert!(top > 0.5, "{lowest}: largest cluster share {top}");
}
