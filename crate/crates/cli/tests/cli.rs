use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn anidwr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anidwr"))
        .args(args)
        .env("THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn interior_layer_six_loops() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "benchmark = interior_layer\nmax_loops = 6\nvtk = true\nindicators = true\n");
    let o = anidwr(&["solve", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "loop,N_tot,N_space,N_time,error,EOC,eta_hx,eta_hy,eta_h,eta_tau,eta_tauh,Ieff_a,ar_max"
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
        let v = |i: usize| r[i].parse::<f64>().unwrap();
        assert!((v(10) - (v(9) + v(8))).abs() <= 1e-13 * v(10).abs().max(1e-300));
    }
    assert_eq!(rows[0][1], "1060");
    assert_eq!(rows[0][5], "");
    let vtk = fs::read_to_string(out.join("solution_01.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("SCALARS level_x int 1") && vtk.contains("SCALARS aspect_ratio double 1"));
    let ind = fs::read_to_string(out.join("indicators_01.csv")).unwrap();
    assert_eq!(ind.lines().next().unwrap(), "slab,cell_id,eta_tau,eta_hx,eta_hy");
    assert_eq!(ind.lines().count(), 1 + 20 * 40);
    assert!(out.join("timesteps.csv").exists());
}

#[test]
fn overrides_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "benchmark = interior_layer\nepsilon = 1e-3\nmesh = structured\nmax_loops = 5\n");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = anidwr(&["solve", &cfg, "--out", out.to_str().unwrap(), "--loops", "2", "--mode", "uniform"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    // uniform: 8×8 → 16×16 cells and 20 → 40 slabs
    assert!(rows[1].starts_with("2,11560,289,40,"));
}

#[test]
fn compare_identical_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let table = "loop,N_tot,N_space,N_time,error,EOC,eta_hx,eta_hy,eta_h,eta_tau,eta_tauh,Ieff_a,ar_max\n\
                 1,100,50,2,0.1,,0,0,0,0,0,,1\n2,400,200,2,0.05,1,0,0,0,0,0,,1\n";
    fs::write(&a, table).unwrap();
    fs::write(&b, table).unwrap();
    let o = anidwr(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("name,N_tot,error\n"));
    assert!(s.contains("ratio 1.0000"), "{s}");

    let e = dir.path().join("empty.csv");
    fs::write(&e, "").unwrap();
    let o = anidwr(&["compare", a.to_str().unwrap(), e.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty file"));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "benchmark = interior_layer\ntheta_space_ref = 1.5\n");
    let o = anidwr(&["solve", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = Command::new(env!("CARGO_BIN_EXE_anidwr"))
        .args(["solve", &cfg])
        .env("THREADS", "zero")
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn hemker_stationary_reports_layer_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "benchmark = hemker_stationary\nepsilon = 1e-2\nmax_loops = 1\n");
    let o = anidwr(&["solve", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",ar_max,y_layer"));
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 14);
    assert_eq!(row[4], "");
    assert!(row[13].parse::<f64>().unwrap() > 0.0);
    assert!(!out.join("timesteps.csv").exists());
}

#[test]
fn hemker_quadratic_writes_timesteps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "benchmark = hemker_quadratic\nepsilon = 1e-2\np = 1\nslabs = 4\nmax_loops = 2\n");
    let o = anidwr(&["solve", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ts = fs::read_to_string(out.join("timesteps.csv")).unwrap();
    let rows: Vec<&str> = ts.lines().collect();
    assert_eq!(rows[0], "loop,slab,t_start,tau");
    // loop 1 has 4 slabs, loop 2 bisects ⌈4/10⌉ = 1 of them
    assert_eq!(rows.len(), 1 + 4 + 5);
    let total: f64 = rows[5..].iter().map(|r| r.split(',').nth(3).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 10.0).abs() < 1e-12);
}
