use athres_demo::{cdf_curve, distributed_thresholds, inclusion_frequencies};

#[test]
fn inclusion_ratios_are_near_one() {
    let weights = [1.0, 2.0, 3.0, 10.0, 0.5, 4.0];
    let t = inclusion_frequencies(&weights, 3, 20_000, 11).unwrap();
    assert_eq!(t.frequency.len(), 6);
    // Heaviest item is sampled most often.
    assert!(t.frequency[3] > t.frequency[0]);
    for r in &t.ht_ratio {
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }
    let total: f64 = t.frequency.iter().sum();
    assert!((total - 3.0).abs() < 1e-9);
}

#[test]
fn min_merge_threshold_is_smallest_node_threshold() {
    let v = distributed_thresholds(5, 10, 1000, 3).unwrap();
    let min = v.node_thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(v.min_merge_threshold, min);
    assert!(v.naive_threshold <= v.min_merge_threshold);
    assert_eq!(v.naive_retained, 10);
    assert!(v.min_merge_retained >= v.naive_retained);
    assert_eq!(v.transferred, 50);
    assert!(distributed_thresholds(2, 10, 10, 0).is_err());
}

#[test]
fn census_cdf_curve_is_exact() {
    let values: Vec<f64> = (1..=20).map(f64::from).collect();
    let weights = vec![1.0; 20];
    let c = cdf_curve(&values, &weights, 50, 1, 5).unwrap();
    assert_eq!(c.sample_size, 20);
    assert_eq!(c.truth, c.estimate);
    assert_eq!(c.xs.first(), Some(&1.0));
    assert_eq!(c.xs.last(), Some(&20.0));
    assert!(cdf_curve(&values, &weights[..3], 5, 1, 5).is_err());
}
