use mpsdoe::harness::config::{CampaignConfig, PolicySpec};
use mpsdoe::harness::run::{run_campaign, run_campaign_on, run_one};
use mpsdoe::harness::summary::{read_trace_csv, summary_from_trace, trace_csv_bytes, SUMMARY_FILE, TRACE_FILE};
use mpsdoe::harness::catalog::{catalog_environment, EnvOverrides};
use mpsdoe::harness::Summary;
use mpsdoe::policies::PolicyKind;

fn env(id: &str) -> mpsdoe::Environment {
    catalog_environment(id, &EnvOverrides::default()).unwrap()
}

#[test]
fn run_one_is_deterministic() {
    let cfg = CampaignConfig::new("exp1", &[PolicyKind::Mps], 5, 1, 3);
    let e = env("exp1");
    let a = run_one(&cfg, &e, &cfg.policies[0], 0).unwrap().without_timing();
    let b = run_one(&cfg, &e, &cfg.policies[0], 0).unwrap().without_timing();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.trace.len(), 5);
    let total: f64 = a.trace.iter().map(|s| s.penalty).sum();
    assert!((total - a.cumulative).abs() < 1e-9);
    assert_eq!(a.final_penalty, a.trace[4].penalty);
}

#[test]
fn myopic_oracle_on_prop1_incurs_nothing() {
    let cfg = CampaignConfig::new("prop1", &[PolicyKind::MyopicOracle], 30, 1, 0);
    let e = env("prop1");
    for seed in 0..20 {
        let r = run_one(&cfg, &e, &cfg.policies[0], seed).unwrap();
        assert!(r.trace.iter().all(|s| s.penalty == 0.0 && s.penalty_raw == 0.0));
    }
}

#[test]
fn single_step_run() {
    let cfg = CampaignConfig::new("bandit", &[PolicyKind::Mps], 1, 1, 0);
    let r = run_one(&cfg, &env("bandit"), &cfg.policies[0], 4).unwrap();
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.cumulative, r.final_penalty);
}

#[test]
fn campaign_bookkeeping_and_csv_round_trip() {
    let mut cfg = CampaignConfig::new("bo_finite", &[PolicyKind::Mps, PolicyKind::Rand], 7, 10, 12);
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = Some(dir.path().to_path_buf());
    let res = run_campaign(&cfg).unwrap();
    assert_eq!(res.records.len(), 20);
    assert_eq!(res.summary.policies.len(), 2);
    assert!(res.summary.policies.iter().all(|p| p.cells.len() == 7 && p.complete));
    res.write(dir.path()).unwrap();

    let rows = read_trace_csv(&dir.path().join(TRACE_FILE)).unwrap();
    assert_eq!(rows.len(), 140);
    let header = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert!(header.starts_with("run_id,seed,policy,t,action,outcome,penalty,cum_penalty\n"));
    let emitted: Summary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    let recomputed = summary_from_trace(&rows);
    for (a, b) in emitted.policies.iter().zip(&recomputed) {
        assert_eq!(a.policy, b.policy);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.t, y.t);
            assert!((x.penalty_mean - y.penalty_mean).abs() <= 1e-12);
            assert!((x.penalty_stderr - y.penalty_stderr).abs() <= 1e-12);
            assert!((x.cum_mean - y.cum_mean).abs() <= 1e-12);
        }
    }
    // hand average of the csv column
    let hand: f64 = rows.iter().filter(|r| r.policy == "rand" && r.t == 7).map(|r| r.penalty).sum::<f64>() / 10.0;
    assert!((hand - emitted.policy("rand").unwrap().cells[6].penalty_mean).abs() <= 1e-12);
}

#[test]
fn policy_order_and_seed_count_do_not_change_records() {
    let a = run_campaign(&CampaignConfig::new("bandit", &[PolicyKind::Mps, PolicyKind::Rand], 6, 4, 8)).unwrap();
    let b = run_campaign(&CampaignConfig::new("bandit", &[PolicyKind::Rand, PolicyKind::Mps], 6, 4, 8)).unwrap();
    let c = run_campaign(&CampaignConfig::new("bandit", &[PolicyKind::Mps], 6, 9, 8)).unwrap();
    for p in ["mps", "rand"] {
        let ra: Vec<_> = a.policy_records(p).iter().map(|r| r.without_timing()).collect();
        let rb: Vec<_> = b.policy_records(p).iter().map(|r| r.without_timing()).collect();
        assert_eq!(ra, rb);
    }
    let first4: Vec<_> = c.policy_records("mps").iter().take(4).map(|r| r.without_timing()).collect();
    let ra: Vec<_> = a.policy_records("mps").iter().map(|r| r.without_timing()).collect();
    assert_eq!(first4, ra);
}

#[test]
fn workers_do_not_change_bytes() {
    let mut cfg = CampaignConfig::new("gp_logdensity", &[PolicyKind::Mps, PolicyKind::MyopicOracle], 4, 3, 1);
    cfg.workers = Some(1);
    let a = trace_csv_bytes(&run_campaign(&cfg).unwrap().records).unwrap();
    cfg.workers = Some(4);
    let b = trace_csv_bytes(&run_campaign(&cfg).unwrap().records).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failures_are_recorded_not_fatal() {
    // the global oracle needs a finite environment
    let cfg = CampaignConfig::new("exp1", &[PolicyKind::Rand, PolicyKind::GlobalOracle], 3, 2, 0);
    let res = run_campaign_on(&cfg, &env("exp1")).unwrap();
    assert_eq!(res.records.len(), 2);
    assert_eq!(res.failures.len(), 2);
    assert!(res.failures[0].run_id.starts_with("global_oracle-"));
    let g = res.summary.policy("global_oracle").unwrap();
    assert!(!g.complete);
    assert!(res.summary.policy("rand").unwrap().complete);
}

#[test]
fn global_oracle_runs_on_finite_campaigns() {
    let mut spec = PolicySpec::new(PolicyKind::GlobalOracle);
    spec.id = Some("global".into());
    let mut cfg = CampaignConfig::new("deception", &[PolicyKind::MyopicOracle], 2, 3, 0);
    cfg.policies.push(spec);
    let res = run_campaign(&cfg).unwrap();
    let g = &res.summary.policy("global").unwrap().cells[1];
    let m = &res.summary.policy("myopic_oracle").unwrap().cells[1];
    assert_eq!(g.penalty_mean, 0.0);
    assert!((m.penalty_mean - 0.4).abs() < 1e-12);
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let cfg = CampaignConfig::new("exp2", &[PolicyKind::Mps, PolicyKind::Rand], 3, 2, 4);
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(CampaignConfig::load(&path).unwrap(), cfg);
}

#[test]
fn catalog_overrides() {
    let e = catalog_environment("exp1", &EnvOverrides { a: Some(1.0), ..Default::default() }).unwrap();
    let th = e.truth.clone().unwrap();
    let plateau = e.continuous().unwrap().mean_response(th.vector().unwrap(), e.action(0))[0];
    assert!((plateau - 1.0).abs() < 1e-6);
    let e2 = env("exp2");
    assert_eq!(e2.grid.len(), 2500);
    assert_eq!(e2.continuous().unwrap().theta_dim(), 16);
    let p = env("prop1");
    assert_eq!(p.finite().unwrap().n_thetas(), 2);
    assert_eq!(p.finite().unwrap().prior(), &[0.5, 0.5]);
    assert!(catalog_environment("nope", &EnvOverrides::default()).is_err());
}
