use athres::harness::{
    check_factorization, render, run_distributed_waste, run_logistic_sim, verify_unbiasedness, Design,
    DistributedWasteSpec, ExperimentConfig, LogisticSimSpec, PilotMode, Population, Report, ReportFormat,
};
use athres::PriorityFamily;
use serde_json::Value;

#[test]
fn reports_render_identically_for_equal_seeds() {
    let mut c = ExperimentConfig::new("strata:9:3", "stratified:5", &["ht", "stratum_ht"]);
    c.replicates = 5_000;
    c.seed = 17;
    let a = verify_unbiasedness(&c).unwrap();
    let b = verify_unbiasedness(&c).unwrap();
    for f in [ReportFormat::Text, ReportFormat::Json] {
        assert_eq!(render(&a, f).unwrap(), render(&b, f).unwrap());
    }
    let rec: Value = serde_json::from_str(&render(&a, ReportFormat::Json).unwrap()).unwrap();
    assert_eq!(rec["checks"].as_array().unwrap().len(), 4);
    assert!(a.to_text().contains("verdict:"));
}

#[test]
fn factorization_report_flags_degree_beyond_cap() {
    let design: Design = "max(fixed_k:2,fixed_k:3)".parse().unwrap();
    let r = check_factorization(&design, &Population::linear(5), PriorityFamily::UniformScaled, 2, 40_000, 5).unwrap();
    let d1 = r.degree(1).unwrap();
    assert!(d1.verdict.passed(), "degree 1 max |z| {}", d1.max_abs_z);
    assert!(r.entries.len() == 5 + 10);
}

#[test]
fn distributed_waste_reference_check() {
    let mut spec = DistributedWasteSpec::new(5, 20, 2_000);
    spec.runs = 20;
    spec.reference_tau_min = Some(0.009);
    spec.relative_tolerance = 0.1;
    let r = run_distributed_waste(&spec).unwrap();
    assert!(r.check("node thresholds follow Beta(k+1, n-k)").unwrap().verdict.passed());
    assert!(r.check("mean merged threshold matches reference").is_some());
    assert!((r.node_threshold_expected - 21.0 / 2001.0).abs() < 1e-15);
}

#[test]
fn small_logistic_run_keeps_priorities_fixed() {
    let spec = LogisticSimSpec {
        n_points: 20_000,
        k: 200,
        eval_points: 10,
        seed: 3,
        replicates: 2,
        pilot: PilotMode::Oracle,
        ..LogisticSimSpec::default()
    };
    let a = run_logistic_sim(&spec).unwrap();
    assert_eq!(a.priority_mutations, 0);
    assert_eq!(a.runs.len(), 2);
    assert_eq!(a.runs[1].seed, 4);
    assert!(a.error_ratio.is_finite() && a.error_ratio > 0.0);
    assert!(a.verdict().passed());
    let b = run_logistic_sim(&spec).unwrap();
    assert_eq!(a.series_csv(), b.series_csv());
}
