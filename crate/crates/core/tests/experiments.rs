use std::fs;

use volrough::experiments::*;
use volrough::pricing::QuadratureRule;
use volrough::pvariation::EstimatorConfig;

fn tiny_bias_spec() -> BiasCurveSpec {
    let mut spec = BiasCurveSpec::preset(Scale::Smoke);
    spec.hs = vec![0.1, 0.3];
    spec.maturities = vec![1, 5];
    spec.days = 60;
    spec.n_initial_paths = 2;
    spec.mc.m_paths = 64;
    spec.estimator = EstimatorConfig::new(6);
    spec
}

#[test]
fn zero_eta_control_reports_all_failed() {
    let mut spec = tiny_bias_spec();
    spec.eta = 0.0;
    let res = run_bias_curve(&spec, None).unwrap();
    assert_eq!(res.points.len(), 4);
    for p in &res.points {
        assert!(p.aggregate.is_none());
        assert_eq!((p.n_paths, p.n_failed_paths), (2, 2));
    }
    assert!(res.lines.iter().all(|l| l.line.is_none()));
    assert!(!res.flattens_with_maturity);

    let mut buf = Vec::new();
    res.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",,,,,2,2"), "{text}");
}

#[test]
fn bias_curve_overlay_and_qmc_initial_paths() {
    let mut spec = tiny_bias_spec();
    spec.initial_qmc = true;
    let flat = |_theta: f64, _h: f64| 2.0;
    let res = run_bias_curve(&spec, Some(&flat)).unwrap();
    for p in &res.points {
        assert!((p.theoretical_h_hat.unwrap() - p.model_h).abs() < 1e-15);
        let a = p.aggregate.unwrap();
        let (lo, hi) = a.ci95();
        assert!(lo <= a.mean && a.mean <= hi);
        assert!(a.min <= a.mean && a.mean <= a.max);
    }
    assert!(res.lines.iter().all(|l| l.line.is_some()));
}

#[test]
fn table1_rejects_incommensurate_steps() {
    let mut spec = Table1Spec::preset(Scale::Smoke);
    spec.dts = vec![0.001, 0.0004];
    let err = run_table1(&spec).unwrap_err();
    assert!(matches!(err, ExperimentError::InvalidSpec(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn table1_cells_cover_every_step_and_rule() {
    let mut spec = Table1Spec::preset(Scale::Smoke);
    spec.dts = vec![0.004, 0.002];
    spec.days = 60;
    spec.n_initial_paths = 2;
    spec.mc.m_paths = 64;
    spec.estimator = EstimatorConfig::new(6);
    let res = run_table1(&spec).unwrap();
    assert_eq!(res.cells.len(), 6);
    for dt in [0.004, 0.002] {
        for rule in QuadratureRule::ALL {
            let c = res.cell(dt, rule).unwrap();
            assert_eq!(c.per_path.len(), 2);
            assert!(c.aggregate.unwrap().mean > 0.0);
        }
    }
    // one step per day: left sees only v(t_i), right only v(t_i + 1d)
    let left = res.cell(0.004, QuadratureRule::LeftRectangular).unwrap().aggregate.unwrap().mean;
    let right = res.cell(0.004, QuadratureRule::RightRectangular).unwrap().aggregate.unwrap().mean;
    assert!(left != right);
}

#[test]
fn table2_artifacts_embed_the_spec() {
    let mut spec = Table2Spec::preset(Scale::Smoke);
    spec.days = 60;
    spec.maturities = vec![1, 3];
    spec.mc.m_paths = 64;
    spec.estimator = EstimatorConfig::new(6);
    spec.regression.max_lag_div = 10;
    let res = run_table2(&spec).unwrap();
    // instantaneous plus three proxies per maturity
    assert_eq!(res.cells.len(), 1 + 3 * 2);
    assert_eq!(res.cross_checks.len(), 1);

    let dir = tempfile::tempdir().unwrap();
    write_table2(&Artifacts::new(dir.path(), &spec).unwrap(), &res).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "implied_h0.05_1d.csv",
            "implied_h0.05_3d.csv",
            "regression_h0.05_1d.csv",
            "summary.json",
            "table2.csv"
        ]
    );
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let first = text.lines().next().unwrap();
        let embedded: Table2Spec = serde_json::from_str(first.strip_prefix("# spec=").unwrap()).unwrap();
        assert_eq!(embedded, spec, "{name}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(serde_json::from_value::<Table2Spec>(summary["spec"].clone()).unwrap(), spec);
    assert_eq!(summary["result"]["table"].as_array().unwrap().len(), 7);
    let table = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert_eq!(
        table.lines().nth(2).unwrap().split(',').take(3).collect::<Vec<_>>(),
        ["0.05", "0", "instantaneous"]
    );
}

#[test]
fn sobol_sub_paths_price_close_to_pseudorandom() {
    let mut spec = Table2Spec::preset(Scale::Smoke);
    spec.days = 40;
    spec.maturities = vec![2];
    spec.mc.m_paths = 512;
    spec.estimator = EstimatorConfig::new(5);
    spec.regression.max_lag_div = 10;
    let prng = run_table2(&spec).unwrap();
    spec.mc.qmc = true;
    let qmc = run_table2(&spec).unwrap();
    let (a, b) = (&prng.implied_series[0].2, &qmc.implied_series[0].2);
    for (x, y) in a.iter().zip(b) {
        let tol = 4.0 * (x.price_se + y.price_se) / x.price * x.implied_vol + 1e-3;
        assert!((x.implied_vol - y.implied_vol).abs() < tol, "day {}: {} vs {}", x.day, x.implied_vol, y.implied_vol);
    }
}

#[test]
fn window_policy_limits_sliding_estimates() {
    let spec = RoughExpSpec::preset(Scale::Smoke);
    let res = run_rough_exp(&spec).unwrap();
    let path = volrough::timeseries::TimeSeriesPath::business_daily(res.first_path.clone()).unwrap();
    let all = slide(&path, &spec.estimator, &WindowPolicy::default(), false).unwrap();
    let first = slide(&path, &spec.estimator, &WindowPolicy { stride: 1, max_windows: Some(10) }, false).unwrap();
    assert_eq!(first.n_windows(), 10);
    assert_eq!(first.hs(), all.hs()[..10].to_vec());
    let logged = slide(&path, &spec.estimator, &WindowPolicy::default(), true).unwrap();
    assert_eq!(logged.n_windows(), all.n_windows());
}
