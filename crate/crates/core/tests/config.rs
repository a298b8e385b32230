use anidwr::adapt::RefinementMode;
use anidwr::config::{parse_config, Benchmark, ConfigError, RunConfig};
use anidwr::driver::{compare_curves, dofs_at_error};
use anidwr::io::{read_results, results_csv, ErrorCurve, ResultsError, RESULTS_HEADER};
use anidwr::adapt::LoopRecord;
use anidwr::mesh::Obstacle;
use anidwr::problem::DiagnosticReport;
use std::time::Duration;

#[test]
fn defaults_applied() {
    let c = parse_config::<f64>("benchmark=interior_layer\nepsilon=1e-4").unwrap();
    assert_eq!(c.benchmark, Benchmark::InteriorLayer);
    assert_eq!(c.epsilon, 1e-4);
    assert_eq!(c.settings.p, 1);
    assert_eq!(c.settings.r, 0);
    assert_eq!(c.settings.delta0, 0.1);
    assert_eq!(c.mode, RefinementMode::Anisotropic);
}

#[test]
fn fraction_out_of_range() {
    let e = parse_config::<f64>("benchmark = interior_layer\ntheta_space_ref=1.5").unwrap_err();
    assert!(matches!(e, ConfigError::Range { line: 2, .. }), "{e:?}");
}

#[test]
fn errors_carry_line_numbers() {
    let e = parse_config::<f64>("# comment\n\nfoo = 1").unwrap_err();
    assert_eq!(
        e,
        ConfigError::UnknownKey {
            line: 3,
            key: "foo".into()
        }
    );
    assert_eq!(e.to_string(), "line 3: unknown key `foo`");
    let e = parse_config::<f64>("epsilon = 0").unwrap_err();
    assert!(matches!(e, ConfigError::Range { line: 1, .. }));
    let e = parse_config::<f64>("epsilon = -1e-3").unwrap_err();
    assert!(matches!(e, ConfigError::Range { line: 1, .. }));
    let e = parse_config::<f64>("p = x").unwrap_err();
    assert!(matches!(e, ConfigError::Value { line: 1, .. }));
    let e = parse_config::<f64>("mode = aniso\nmode = iso").unwrap_err();
    assert!(matches!(e, ConfigError::Duplicate { line: 2, .. }));
    let e = parse_config::<f64>("epsilon").unwrap_err();
    assert_eq!(e, ConfigError::Syntax { line: 1 });
    let e = parse_config::<f64>("benchmark = interior_layer\nb_x = 1").unwrap_err();
    assert!(matches!(e, ConfigError::UnknownKey { line: 2, .. }));
}

#[test]
fn combined_fractions_rejected() {
    let e = parse_config::<f64>("theta_space_ref = 0.8\ntheta_space_co = 0.3").unwrap_err();
    assert!(matches!(e, ConfigError::Invalid(_)));
}

#[test]
fn example_one_round_trips() {
    let text = "[run]\nbenchmark = interior_layer\nepsilon = 1e-6\ndelta0 = 0.1\n\
                [marking]\ntheta_space_ref = 1/5\ntheta_space_co = 1/100\ntheta_time_ref = 2/3\ntheta_time_co = 0\n";
    let c = parse_config::<f64>(text).unwrap();
    assert_eq!(c.marking.theta_space_ref, 0.2);
    assert_eq!(c.marking.theta_space_co, 0.01);
    assert_eq!(c.marking.theta_time_ref, 2.0 / 3.0);
    assert_eq!(c.marking.theta_time_co, 0.0);
    let again = parse_config::<f64>(&c.to_text()).unwrap();
    assert_eq!(again, c);
}

#[test]
fn benchmark_defaults() {
    let h = parse_config::<f64>("benchmark = hemker_stationary").unwrap();
    assert_eq!(h.marking.theta_space_ref, 1.0 / 3.0);
    assert_eq!(h.marking.theta_space_co, 0.0);
    assert_eq!(h.slabs(), 1);
    assert!(h.problem().stationary);
    let q = parse_config::<f64>("benchmark = hemker_quadratic").unwrap();
    assert_eq!(q.settings.p, 2);
    assert_eq!(q.obstacle, Obstacle::Square);
    assert_eq!(q.marking.theta_space_ref, 1.0 / 6.0);
    assert_eq!(q.marking.theta_time_ref, 0.1);
    assert_eq!(q.problem().t_end, 10.0);
    let c = parse_config::<f64>("benchmark = custom\nb_x = 0.5\nstationary = true\nepsilon=1e-2").unwrap();
    assert_eq!(c.custom.b, [0.5, 0.0]);
    assert_eq!(c.slabs(), 1);
    assert_eq!(parse_config::<f64>(&c.to_text()).unwrap(), c);
}

#[test]
fn unstructured_seed_matches_loop_one_counts() {
    let c = RunConfig::<f64>::defaults(Benchmark::InteriorLayer);
    assert!(!c.structured);
    let p = c.problem();
    assert_eq!(p.domain.build().n_leaves(), 40);
    let s = parse_config::<f64>("mesh = structured").unwrap().problem();
    assert_eq!(s.domain.build().n_leaves(), 64);
}

fn record(l: usize, n: usize, err: Option<f64>) -> LoopRecord<f64> {
    LoopRecord {
        report: DiagnosticReport {
            loop_index: l,
            n_tot: n,
            n_space: n / 2,
            n_time: 2,
            error: err,
            eta_hx: 0.1 / 3.0,
            eta_hy: 0.2 / 7.0,
            eta_h: 0.1 / 3.0 + 0.2 / 7.0,
            eta_tau: 1.0 / 11.0,
            ar_max: 1.0,
            ..Default::default()
        },
        n_cells: 1,
        n_slabs: 2,
        time_steps: vec![0.5, 0.5],
        wall_time: Duration::ZERO,
    }
}

#[test]
fn results_table_schema() {
    let recs = vec![record(1, 100, Some(0.1)), record(2, 400, Some(0.05))];
    let text = results_csv(&recs, false);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join(","));
    assert_eq!(lines.clone().count(), 2);
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 13);
        let v = |i: usize| f[i].parse::<f64>().unwrap();
        assert!((v(10) - (v(9) + v(8))).abs() <= 1e-13 * v(10).abs());
        assert!(v(4) > 0.0);
    }
    let hemker = results_csv(&[record(1, 100, None)], true);
    let row: Vec<&str> = hemker.lines().nth(1).unwrap().split(',').collect();
    assert!(hemker.starts_with(&(RESULTS_HEADER.join(",") + ",y_layer")));
    assert_eq!(row.len(), 14);
    assert_eq!(row[4], "");
}

#[test]
fn results_read_back() {
    let recs = vec![record(1, 100, Some(0.1)), record(2, 400, Some(0.05))];
    let c = read_results("a", &results_csv(&recs, false)).unwrap();
    assert_eq!(c.points, vec![(100.0, 0.1), (400.0, 0.05)]);
    assert_eq!(read_results("e", ""), Err(ResultsError::Empty { name: "e".into() }));
    assert!(matches!(
        read_results("x", "loop,N_tot\n1,10\n"),
        Err(ResultsError::MissingColumn { column: "error", .. })
    ));
    assert!(matches!(
        read_results("h", &results_csv(&[record(1, 100, None)], true)),
        Err(ResultsError::NoErrors { .. })
    ));
}

#[test]
fn identical_runs_ratio_one() {
    let c = ErrorCurve {
        name: "a".into(),
        points: vec![(100.0, 0.1), (400.0, 0.05), (1600.0, 0.02)],
    };
    let s = compare_curves(&[c.clone(), ErrorCurve { name: "b".into(), ..c }]).unwrap();
    assert_eq!(s.comparisons.len(), 1);
    assert_eq!(s.comparisons[0].ratio, 1.0);
    assert!(s.report().contains("ratio 1.0000"));
}

#[test]
fn matched_error_interpolates_log_log() {
    let uniform = ErrorCurve {
        name: "uniform".into(),
        points: vec![(100.0, 0.1), (10000.0, 0.01)],
    };
    // error ∝ N^(-1/2): 10^(-1.5) is reached at N = 1000
    assert!((dofs_at_error(&uniform, 0.1f64.sqrt() * 0.1).unwrap() - 1000.0).abs() < 1e-9);
    let aniso = ErrorCurve {
        name: "aniso".into(),
        points: vec![(100.0, 0.1), (1000.0, 0.01), (2000.0, 0.005)],
    };
    let s = compare_curves(&[uniform, aniso]).unwrap();
    let c = &s.comparisons[0];
    assert_eq!(c.error, 0.01);
    assert!((c.ratio - 0.1).abs() < 1e-12);
    assert!(s.joined.lines().count() == 6);
}
