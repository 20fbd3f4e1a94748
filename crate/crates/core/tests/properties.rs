use proptest::prelude::*;

use prsbias::estimators::{bias_factor_ae, raw_cosine, CaseTag, DesignMeta};
use prsbias::experiments::{aggregate, ReplicateRow};
use prsbias::genotype::gen_genotypes;
use prsbias::gwas::{marginal_gwas, screen_metrics, threshold_select, two_sided_pvalue, GwasOptions, ScreenRule, SummaryStats};
use prsbias::io::{read_replicates, read_sample_values, read_summary_stats, write_replicates, write_sample_values, write_summary_stats, SampleValues};
use prsbias::kernels;
use prsbias::prs::score_weights;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, any::<f64>().prop_filter("finite", |x| x.is_finite())]
}

fn ae_meta(n1: usize, p: usize, h2a: f64, h2e: f64) -> DesignMeta<f64> {
    DesignMeta { n1, h2_alpha: Some(h2a), h2_eta: Some(h2e), ..DesignMeta::new(CaseTag::IndepAe, p) }
}

fn stats_from_t(t: &[f64]) -> SummaryStats<f64> {
    let p = t.len();
    SummaryStats {
        snp_id: (0..p).map(|j| format!("rs{j}")).collect(),
        effect: t.to_vec(),
        se: vec![1.0; p],
        tstat: t.to_vec(),
        pvalue: t.iter().map(|&x| two_sided_pvalue(x)).collect(),
        n: vec![1000; p],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_is_scale_invariant(
        uv in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..60),
        a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
        b in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
    ) {
        let (u, v): (Vec<f64>, Vec<f64>) = uv.into_iter().unzip();
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let base = raw_cosine(&u, &v).unwrap();
        let su: Vec<f64> = u.iter().map(|x| a * x).collect();
        let sv: Vec<f64> = v.iter().map(|x| b * x).collect();
        let scaled = raw_cosine(&su, &sv).unwrap();
        prop_assert!((scaled - (a * b).signum() * base).abs() < 1e-12);
        prop_assert!(base.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn target_factor_is_monotone(
        n1 in 10usize..100_000,
        p in 10usize..100_000,
        h2a in 0.05..0.95f64,
        h2e in 0.05..0.95f64,
    ) {
        let f = bias_factor_ae(&ae_meta(n1, p, h2a, h2e)).unwrap();
        prop_assert!(f > 0.0 && f < 1.0);
        prop_assert!(bias_factor_ae(&ae_meta(n1, p + 1, h2a, h2e)).unwrap() < f);
        prop_assert!(bias_factor_ae(&ae_meta(n1 + 1, p, h2a, h2e)).unwrap() > f);
        prop_assert!(bias_factor_ae(&ae_meta(n1, p, h2a + 0.01, h2e)).unwrap() > f);
        prop_assert!(bias_factor_ae(&ae_meta(n1, p, h2a, h2e + 0.01)).unwrap() > f);
    }

    #[test]
    fn scores_are_linear_and_match_the_naive_loop(
        seed in 0u64..1000,
        n in 5usize..40,
        p in 2usize..30,
        a in -5.0..5.0f64,
        raw in prop::collection::vec(-2.0..2.0f64, 30),
    ) {
        let g = gen_genotypes(n, p, seed).unwrap();
        let w = &raw[..p];
        let base = score_weights(&g, w, None).unwrap();
        let naive = kernels::score_naive(&g, w);
        for (x, y) in base.iter().zip(&naive) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
        }
        let scaled: Vec<f64> = w.iter().map(|x| a * x).collect();
        let s = score_weights(&g, &scaled, None).unwrap();
        for (x, y) in s.iter().zip(&base) {
            prop_assert!((x - a * y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn tighter_cutoffs_select_subsets(
        t in prop::collection::vec(-6.0..6.0f64, 1..200),
        c1 in 1e-8..1.0f64,
        c2 in 1e-8..1.0f64,
    ) {
        let s = stats_from_t(&t);
        let (tight, loose) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let a = threshold_select(&s, ScreenRule::PValue(tight), None).unwrap();
        let b = threshold_select(&s, ScreenRule::PValue(loose), None).unwrap();
        prop_assert!(a.indices.iter().all(|j| b.indices.binary_search(j).is_ok()));
        let ea = threshold_select(&s, ScreenRule::Effect(loose * 6.0), None).unwrap();
        let eb = threshold_select(&s, ScreenRule::Effect(tight * 6.0), None).unwrap();
        prop_assert!(ea.q() <= eb.q());
    }

    #[test]
    fn pvalues_order_like_absolute_t(seed in 0u64..500, n in 30usize..120, p in 2usize..40) {
        let g = gen_genotypes(n, p, seed).unwrap();
        let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 2_654_435_761 + seed) % 1009) as f64 / 1009.0 - 0.5).collect();
        let s = marginal_gwas(&g, &y, GwasOptions::default()).unwrap();
        let mut by_p: Vec<usize> = (0..p).collect();
        by_p.sort_by(|&a, &b| s.pvalue[a].total_cmp(&s.pvalue[b]).then(a.cmp(&b)));
        let mut by_t: Vec<usize> = (0..p).collect();
        by_t.sort_by(|&a, &b| s.tstat[b].abs().total_cmp(&s.tstat[a].abs()).then(a.cmp(&b)));
        for w in by_p.windows(2) {
            prop_assert!(s.tstat[w[0]].abs() >= s.tstat[w[1]].abs());
        }
        prop_assert!(by_p.iter().zip(&by_t).all(|(a, b)| a == b || s.pvalue[*a] == s.pvalue[*b]));
    }

    #[test]
    fn pvalue_decreases_in_absolute_t(a in -40.0..40.0f64, b in -40.0..40.0f64) {
        let (pa, pb) = (two_sided_pvalue(a), two_sided_pvalue(b));
        prop_assert!((0.0..=1.0).contains(&pa));
        if a.abs() < b.abs() {
            prop_assert!(pa >= pb);
        }
        prop_assert_eq!(pa, two_sided_pvalue(-a));
    }

    #[test]
    fn auc_is_antisymmetric_and_random_labels_are_uninformative(
        t in prop::collection::vec(-4.0..4.0f64, 400..800),
        labels in prop::collection::vec(any::<bool>(), 800),
    ) {
        let p = t.len();
        let labels = &labels[..p];
        prop_assume!(labels.iter().any(|&c| c) && labels.iter().any(|&c| !c));
        let s = stats_from_t(&t);
        let truth: Vec<f64> = labels.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        let flipped: Vec<f64> = labels.iter().map(|&c| if c { 0.0 } else { 1.0 }).collect();
        let m = screen_metrics(&s, &truth, 0.05, 0.1).unwrap();
        let f = screen_metrics(&s, &flipped, 0.05, 0.1).unwrap();
        prop_assert!((m.auc + f.auc - 1.0).abs() < 1e-12);
        prop_assert!((m.auc - 0.5).abs() <= 4.0 / (p as f64).sqrt());
        prop_assert!((0.0..=1.0).contains(&m.enrichment));
    }

    #[test]
    fn summary_tables_round_trip_exactly(rows in prop::collection::vec((finite(), finite(), finite(), 0.0..=1.0f64, 1usize..1_000_000), 0..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        let s = SummaryStats {
            snp_id: (0..rows.len()).map(|j| format!("rs{}", j * 7)).collect(),
            effect: rows.iter().map(|r| r.0).collect(),
            se: rows.iter().map(|r| r.1).collect(),
            tstat: rows.iter().map(|r| r.2).collect(),
            pvalue: rows.iter().map(|r| r.3).collect(),
            n: rows.iter().map(|r| r.4).collect(),
        };
        write_summary_stats(&path, &s).unwrap();
        prop_assert_eq!(read_summary_stats(&path).unwrap(), s);

        let v = SampleValues::positional(rows.iter().map(|r| r.0).collect());
        let path = dir.path().join("v.tsv");
        write_sample_values(&path, "score", &v).unwrap();
        prop_assert_eq!(read_sample_values(&path).unwrap(), v);
    }

    #[test]
    fn replicate_tables_round_trip_and_reaggregate(
        rows in prop::collection::vec((0usize..3, 0usize..2, finite(), finite(), 0.01..2.0f64), 1..40),
    ) {
        let rows: Vec<ReplicateRow> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| ReplicateRow {
                scenario: "custom".into(),
                point_id: format!("m=10;k=1;phi=0.{}", r.0 + 1),
                estimator: ["g_ae", "g_ab"][r.1].into(),
                replicate: k,
                raw: r.2,
                corrected: r.3,
                factor: r.4,
                flag: "consistent_regime".into(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        write_replicates(&path, &rows).unwrap();
        let back = read_replicates(&path).unwrap();
        prop_assert_eq!(&back, &rows);
        prop_assert_eq!(format!("{:?}", aggregate(&back)), format!("{:?}", aggregate(&rows)));
    }

    #[test]
    fn generated_columns_are_standardized(seed in 0u64..10_000, n in 2usize..200, p in 1usize..20) {
        let g = gen_genotypes(n, p, seed).unwrap();
        for j in 0..p {
            let x = g.standardized_column(j);
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-10);
            prop_assert!((var - 1.0).abs() <= 1e-10);
        }
    }
}
