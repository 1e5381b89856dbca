use dynsir::harness::{run_convergence, ExperimentConfig};
use dynsir::params::ModelSpec;
use dynsir::sim::{conditioned_ensemble, ConditionOptions, ModelTag};

fn six_b() -> ModelSpec {
    ModelSpec::single(3.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0)
}

#[test]
fn convergence_csvs_land_on_disk() {
    let mut cfg = ExperimentConfig::new(six_b());
    cfg.n_list = vec![400, 2000];
    cfg.runs_per_n = 20;
    cfg.master_seed = 5;
    let report = run_convergence(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = report.write_csvs(dir.path()).unwrap();
    assert_eq!(written.len(), 5);
    let summary = std::fs::read_to_string(dir.path().join("convergence_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("n,runs,discarded,acceptance_fraction"));
    assert_eq!(lines.count(), 2);
    for s in &report.sizes {
        let curves = std::fs::read_to_string(dir.path().join(format!("convergence_curves_n{}.csv", s.n))).unwrap();
        assert_eq!(curves.lines().count(), report.u.len() + 1);
    }
}

#[test]
fn models_agree_on_mean_final_size() {
    let means: Vec<f64> = [ModelTag::M1, ModelTag::M3]
        .into_iter()
        .map(|model| {
            let opts = ConditionOptions { model, ..ConditionOptions::default() };
            let runs = conditioned_ensemble(&six_b(), 300, 2, 300, &opts).unwrap();
            runs.iter().map(|c| c.trajectory.final_fraction()).sum::<f64>() / runs.len() as f64
        })
        .collect();
    assert!((means[0] - means[1]).abs() < 0.03, "{means:?}");
}
