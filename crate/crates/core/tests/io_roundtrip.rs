mod common;

use common::*;
use faer::Mat;
use proptest::prelude::*;
use rate_core::baseline::scanone;
use rate_core::io;
use rate_core::projection::EffectSizePosterior;
use rate_core::rate::compute_rates;
use rate_core::simdata::{default_snp_ids, simulate_genotypes, simulate_phenotype, GenotypeMatrix, SimConfig};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e300f64..1e300,
        -1.0f64..1.0,
        Just(0.0),
        Just(f64::MIN_POSITIVE),
        Just(-f64::MAX),
        Just(5e-324),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phenotype_round_trip_is_exact(y in prop::collection::vec(finite(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.tsv");
        io::write_phenotype(&path, &y).unwrap();
        prop_assert_eq!(io::read_phenotype(&path).unwrap(), y);
    }

    #[test]
    fn real_valued_genotypes_round_trip(seed in any::<u64>(), n in 2usize..20, p in 2usize..6) {
        let mut r = rng(seed);
        let raw = Mat::from_fn(n, p, |_, _| normal(&mut r) * 1e3);
        let x = GenotypeMatrix::from_raw(raw, default_snp_ids(p)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        io::write_genotypes(&path, &x).unwrap();
        let back = io::read_genotypes(&path).unwrap();
        prop_assert_eq!(back.raw(), x.raw());
        prop_assert_eq!(back.values(), x.values());
        prop_assert_eq!(back.snp_ids(), x.snp_ids());
    }

    #[test]
    fn curve_round_trip_is_exact(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30), auc in 0.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let (fpr, tpr): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        io::write_curve(&path, &fpr, &tpr, auc, Some(0.01)).unwrap();
        let (f2, t2, a2) = io::read_curve(&path).unwrap();
        prop_assert_eq!(f2, fpr);
        prop_assert_eq!(t2, tpr);
        prop_assert_eq!(a2, auc);
    }
}

#[test]
fn dosage_simulation_files_round_trip() {
    let x = simulate_genotypes(40, 6, (0.05, 0.5), 2).unwrap();
    let cfg = SimConfig::standard(40, 6, vec![1, 3, 5], 0.5, 0.5, 3);
    let truth = simulate_phenotype(&x, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (g, t) = (dir.path().join("g.tsv"), dir.path().join("t.tsv"));
    io::write_genotypes(&g, &x).unwrap();
    io::write_truth(&t, x.snp_ids(), &truth).unwrap();
    let back = io::read_genotypes(&g).unwrap();
    assert_eq!(back.values(), x.values());
    let tf = io::read_truth(&t).unwrap();
    assert_eq!(tf.beta, truth.beta);
    assert_eq!(tf.causal, vec![1, 3, 5]);
    let gammas: Vec<f64> = tf.interactions.iter().map(|i| i.2).collect();
    assert_eq!(gammas, truth.gamma);
    let pairs: Vec<(usize, usize)> = tf.interactions.iter().map(|i| (i.0, i.1)).collect();
    assert_eq!(pairs, truth.interaction_pairs);
}

#[test]
fn report_and_scan_round_trip() {
    let mut r = rng(4);
    let (mu, sigma) = random_posterior(&mut r, 6);
    let post = EffectSizePosterior::from_moments(mu, to_mat(&sigma), 1e-12).unwrap();
    let report = compute_rates(&post).unwrap();
    let ids = default_snp_ids(6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.tsv");
    io::write_report(&path, &report, &ids).unwrap();
    let back = io::read_report(&path).unwrap();
    assert_eq!(back.kld, report.kld);
    assert_eq!(back.rate, report.rate);
    assert_eq!(back.delta, report.delta);
    assert_eq!(back.ess, report.ess);
    assert_eq!(back.significant, report.significant);
    assert_eq!(back.ids, ids);

    let x = simulate_genotypes(50, 6, (0.05, 0.5), 7).unwrap();
    let y: Vec<f64> = (0..50).map(|_| normal(&mut r)).collect();
    let scan = scanone(&x, &y).unwrap();
    let path = dir.path().join("s.tsv");
    io::write_scan(&path, &scan, x.snp_ids()).unwrap();
    let (ids, back) = io::read_scan(&path).unwrap();
    assert_eq!(ids, x.snp_ids());
    assert_eq!(back, scan);
}

#[test]
fn malformed_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    std::fs::write(&path, "snp1\tsnp2\n0\t1\n2\n").unwrap();
    let err = io::read_genotypes(&path).unwrap_err();
    assert_eq!(err.kind(), rate_core::error::ErrorKind::Data);
    assert!(err.to_string().contains("3"), "{err}");
}
