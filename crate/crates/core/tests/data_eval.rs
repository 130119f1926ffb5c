use uagan::data::{gen_gaussian_mixture, partition};
use uagan::eval::{default_radius, mmd_rbf, mode_coverage, parse_points_csv, points_csv};
use uagan::{GaussianMixtureSpec, LabeledDataset, PartitionMode, PartitionPlan, Tensor};

#[test]
fn mixture_moments_match_the_spec() {
    let spec = GaussianMixtureSpec::toy(5000);
    let ds = gen_gaussian_mixture(&spec, 9).unwrap();
    assert_eq!(ds.class_counts(), vec![5000; 4]);
    for (j, c) in spec.centers.iter().enumerate() {
        let rows: Vec<&[f64]> = (0..ds.len()).filter(|&i| ds.labels()[i] as usize == j).map(|i| ds.row(i)).collect();
        for d in 0..2 {
            let mean = rows.iter().map(|r| r[d]).sum::<f64>() / rows.len() as f64;
            let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / (rows.len() - 1) as f64;
            // 5 standard errors of the mean and of the variance estimate.
            assert!((mean - c[d]).abs() < 5.0 * (0.5f64 / 5000.0).sqrt(), "mode {j} dim {d} mean {mean}");
            assert!((var - 0.5).abs() < 5.0 * 0.5 * (2.0f64 / 5000.0).sqrt(), "mode {j} dim {d} var {var}");
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let spec = GaussianMixtureSpec::toy(20);
    assert_eq!(gen_gaussian_mixture(&spec, 4).unwrap(), gen_gaussian_mixture(&spec, 4).unwrap());
    assert_ne!(gen_gaussian_mixture(&spec, 4).unwrap(), gen_gaussian_mixture(&spec, 5).unwrap());
}

#[test]
fn partitions_keep_every_row_exactly_once() {
    let ds = gen_gaussian_mixture(&GaussianMixtureSpec::toy(37), 2).unwrap();
    let key = |d: &LabeledDataset| {
        let mut rows: Vec<Vec<u64>> = (0..d.len()).map(|i| d.row(i).iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        rows
    };
    let modes = [
        (PartitionMode::Iid, 3),
        (PartitionMode::ByMode, 4),
        (PartitionMode::ByLabel, 3),
        (PartitionMode::Custom(vec![0.5, 0.3, 0.2]), 3),
    ];
    for (mode, k) in modes {
        let sited = partition(&ds, &PartitionPlan::new(mode.clone(), 1), k).unwrap();
        assert_eq!(sited.num_sites(), k);
        assert_eq!(sited.total(), ds.len(), "{mode:?}");
        assert_eq!(key(&sited.merged()), key(&ds), "{mode:?}");
        let pi_sum: f64 = sited.pi().iter().sum();
        assert!((pi_sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn custom_fractions_use_largest_remainder() {
    let ds = gen_gaussian_mixture(&GaussianMixtureSpec::toy(25), 2).unwrap();
    let sited = partition(&ds, &PartitionPlan::new(PartitionMode::Custom(vec![0.5, 0.25, 0.25]), 0), 3).unwrap();
    assert_eq!(sited.counts(), vec![50, 25, 25]);
}

#[test]
fn true_mixture_samples_cover_every_mode() {
    let spec = GaussianMixtureSpec::toy(1024);
    let ds = gen_gaussian_mixture(&spec, 77).unwrap();
    let r = mode_coverage(ds.rows(), &spec.centers, default_radius(), 0.10).unwrap();
    assert_eq!(r.covered, 4);
    assert!(r.high_quality_fraction > 0.98, "{}", r.high_quality_fraction);
    assert_eq!(r.total, 4096);
}

#[test]
fn collapsed_samples_cover_one_mode() {
    let spec = GaussianMixtureSpec::toy(1);
    let mut pts = vec![0.0; 2 * 100];
    for i in 0..90 {
        pts[2 * i] = 10.1;
        pts[2 * i + 1] = 9.9;
    }
    let r = mode_coverage(&Tensor::matrix(100, 2, pts).unwrap(), &spec.centers, default_radius(), 0.10).unwrap();
    assert_eq!((r.covered, r.counts[0]), (1, 90));
    assert!((r.high_quality_fraction - 0.9).abs() < 1e-12);
}

#[test]
fn mmd_separates_shifted_sets() {
    let spec = GaussianMixtureSpec { centers: vec![vec![0.0, 0.0]], variance: 1.0, samples_per_mode: 300 };
    let a = gen_gaussian_mixture(&spec, 1).unwrap();
    let b = gen_gaussian_mixture(&spec, 2).unwrap();
    let shifted = GaussianMixtureSpec { centers: vec![vec![3.0, 0.0]], ..spec };
    let c = gen_gaussian_mixture(&shifted, 3).unwrap();
    assert_eq!(mmd_rbf(a.rows(), a.rows(), 1.0).unwrap(), 0.0);
    let same = mmd_rbf(a.rows(), b.rows(), 1.0).unwrap();
    let far = mmd_rbf(a.rows(), c.rows(), 1.0).unwrap();
    assert!(far > 10.0 * same && far > 0.1, "same {same}, far {far}");
    assert!((mmd_rbf(a.rows(), c.rows(), 1.0).unwrap() - mmd_rbf(c.rows(), a.rows(), 1.0).unwrap()).abs() < 1e-12);
}

#[test]
fn points_csv_round_trips_bits() {
    let t = Tensor::matrix(2, 2, vec![0.1 + 0.2, -1e-300, 3.5, f64::MIN_POSITIVE]).unwrap();
    let back = parse_points_csv(&points_csv(&t).unwrap(), Some(2)).unwrap();
    assert_eq!(back, t);
}

#[test]
fn dataset_csv_round_trips() {
    let ds = gen_gaussian_mixture(&GaussianMixtureSpec::toy(5), 1).unwrap();
    let text = ds.to_csv();
    assert!(text.starts_with("x0,x1,label\n"));
    assert_eq!(LabeledDataset::from_csv(&text, Some(4)).unwrap(), ds);
}
