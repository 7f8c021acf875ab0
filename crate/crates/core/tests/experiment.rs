use lacadm::envs::Env;
use lacadm::harness::{assemble_table, cell_dir, evaluate_front, run_experiment, CellFailure, ExperimentConfig, Method, PipelineConfig};
use lacadm::pcn::PcnConfig;
use std::fs;
use std::path::Path;

fn tiny_pipeline() -> PipelineConfig {
    let mut p = PipelineConfig { steps: 10, ..Default::default() };
    p.pcn = PcnConfig { episodes: 300, stride: 50, sequences: 4, ..Default::default() };
    p.denoiser.steps = 50;
    p.crl.steps = 30;
    p.reverse.n_samples = 4;
    p
}

fn tiny_config(out: &Path, envs: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        envs: envs.iter().map(|e| e.to_string()).collect(),
        seeds: vec![0, 1],
        pipeline: tiny_pipeline(),
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn grid_fills_every_row_and_persists_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), &["fruit-tree-d2", "fishwood"]);
    let table = run_experiment(&cfg).unwrap();

    assert!(table.failures.is_empty(), "{:?}", table.failures);
    assert_eq!(table.rows.len(), cfg.envs.len() * cfg.methods.len());
    for r in &table.rows {
        assert_eq!(r.n_seeds, 2, "{r:?}");
        assert!(r.mean_hv.is_finite() && r.mean_sparsity.is_finite() && r.mean_eum.is_finite(), "{r:?}");
    }
    // Two comparisons per env: against PCN and against the ablation.
    assert_eq!(table.comparisons.len(), 4);
    assert!(table.comparisons.iter().all(|c| c.pairs == 2));

    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), table.rows.len() + 1);
    assert_eq!(csv, table.to_csv());
    let errors: Vec<CellFailure> = serde_json::from_str(&fs::read_to_string(dir.path().join("errors.json")).unwrap()).unwrap();
    assert!(errors.is_empty());
    for m in [Method::Lacadm, Method::LacadmNoCrl] {
        for f in ["metrics.json", "front.json", "generation.json"] {
            assert!(cell_dir(dir.path(), "fishwood", m, 1).join(f).is_file(), "{m}/{f}");
        }
    }

    // The table is a pure function of the persisted artifacts.
    assert_eq!(assemble_table(&cfg, Vec::new()).unwrap(), table);
}

#[test]
fn failing_cells_are_reported_without_stopping_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path(), &["fruit-tree-d2", "fishwood"]);
    let mut broken = tiny_pipeline();
    broken.crl.latent_dim = 0;
    cfg.overrides.insert("fishwood".into(), broken);
    let table = run_experiment(&cfg).unwrap();

    let mut failed: Vec<(String, String, u64)> = table.failures.iter().map(|f| (f.env.clone(), f.stage.clone(), f.seed)).collect();
    failed.sort();
    assert_eq!(failed, vec![("fishwood".into(), "lacadm".into(), 0), ("fishwood".into(), "lacadm".into(), 1)]);
    assert!(table.failures.iter().all(|f| f.error.contains("latent_dim")));

    let errors: Vec<CellFailure> = serde_json::from_str(&fs::read_to_string(dir.path().join("errors.json")).unwrap()).unwrap();
    assert_eq!(errors, table.failures);
    assert_eq!(table.row("fishwood", Method::Lacadm).unwrap().n_seeds, 0);
    assert_eq!(table.row("fishwood", Method::LacadmNoCrl).unwrap().n_seeds, 2);
    assert!(Method::ALL.iter().all(|&m| table.row("fruit-tree-d2", m).unwrap().n_seeds == 2));
}

#[test]
fn identical_fronts_give_unit_p_value_and_full_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { seeds: vec![0, 1, 2, 3], ..tiny_config(dir.path(), &["fishwood"]) };
    let env = Env::builtin("fishwood").unwrap();
    for &m in &cfg.methods {
        for &s in &cfg.seeds {
            // Same front per seed across methods, different across seeds.
            let front = vec![vec![1.0 + s as f64, 2.0], vec![2.0, 1.0 + s as f64]];
            let record = evaluate_front(&env, m.as_str(), s, &front).unwrap();
            let cell = cell_dir(dir.path(), env.id(), m, s);
            fs::create_dir_all(&cell).unwrap();
            fs::write(cell.join("metrics.json"), serde_json::to_string(&record).unwrap()).unwrap();
        }
    }
    let table = assemble_table(&cfg, Vec::new()).unwrap();
    assert_eq!(table.comparisons.len(), 2);
    for c in &table.comparisons {
        assert_eq!((c.wins, c.pairs), (4, 4));
        assert!((c.p_value.unwrap() - 1.0).abs() < 1e-12, "{c:?}");
    }
    let hv: Vec<f64> = table.rows.iter().map(|r| r.mean_hv).collect();
    assert!(hv.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path(), &["fruit-tree-d2"]);
    cfg.seeds = vec![1, 1];
    assert!(run_experiment(&cfg).is_err());
    cfg.seeds = vec![1];
    cfg.envs = vec!["no-such-env".into()];
    assert!(run_experiment(&cfg).is_err());
    cfg.envs = vec!["fruit-tree-d2".into()];
    cfg.overrides.insert("fishwood".into(), tiny_pipeline());
    assert!(run_experiment(&cfg).is_err());
}
