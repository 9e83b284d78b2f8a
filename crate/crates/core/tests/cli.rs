use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipatch::cli::StatsFile;
use ipatch::fixtures;
use ipatch::mesh::{load_mesh, write_obj};
use ipatch::network::NetworkFile;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipatch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_inputs(dir: &Path, mesh: &ipatch::mesh::TriMesh, net: &NetworkFile) -> (String, String) {
    let m = dir.join("mesh.obj");
    let n = dir.join("network.json");
    write_obj(&m, mesh.vertices(), mesh.triangles(), None).unwrap();
    std::fs::write(&n, serde_json::to_string_pretty(net).unwrap()).unwrap();
    (m.display().to_string(), n.display().to_string())
}

fn sphere_inputs(dir: &Path) -> (String, String) {
    write_inputs(dir, &fixtures::icosphere(3, 1.0), &fixtures::cube_network(0.15))
}

fn plane_inputs(dir: &Path) -> (String, String) {
    write_inputs(dir, &fixtures::grid(10, 10, 2.0), &fixtures::grid_network(2, 2.0))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn stats(p: impl AsRef<Path>) -> StatsFile {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn fit_sphere_gives_six_quads_and_optimization_helps() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let (pw, pw0) = (path(dir.path(), "pw.json"), path(dir.path(), "pw0.json"));
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw, "--resolution", "32"]);
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw0, "--resolution", "32", "--no-optimize"]);
    let opt = stats(dir.path().join("pw.stats.json"));
    let raw = stats(dir.path().join("pw0.stats.json"));
    assert_eq!(opt.patches.len(), 6);
    assert!(opt.patches.iter().all(|p| p.sides == 4));
    for (a, b) in opt.patches.iter().zip(&raw.patches) {
        assert_eq!(a.id, b.id);
        assert!(a.rms <= b.rms, "patch {}: {} > {}", a.id, a.rms, b.rms);
    }
    assert!(opt.iterations.is_none() && opt.report.is_empty());
}

#[test]
fn fit_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let (s1, s2) = (path(dir.path(), "a.json"), path(dir.path(), "b.json"));
    for s in [&s1, &s2] {
        ok(&["fit", "--mesh", &m, "--network", &n, "--out", &path(dir.path(), "pw.json"), "--stats", s, "--resolution", "24"]);
    }
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
}

#[test]
fn missing_network_is_schema_error() {
    let dir = TempDir::new().unwrap();
    let (m, _) = sphere_inputs(dir.path());
    let out = run(&["fit", "--mesh", &m, "--network", &path(dir.path(), "nope.json"), "--out", &path(dir.path(), "pw.json")]);
    assert_eq!(error_json(&out)["error"], "SchemaError");
}

#[test]
fn bad_tolerance_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let out = run(&["fit", "--mesh", &m, "--network", &n, "--out", &path(dir.path(), "pw.json"), "--tol", "0"]);
    assert_eq!(error_json(&out)["error"], "SchemaError");
    let out = run(&["fit", "--mesh", &m, "--network", &n, "--out", &path(dir.path(), "pw.json"), "--omega", "0.5"]);
    assert_eq!(error_json(&out)["error"], "InvalidPatch");
}

#[test]
fn config_file_supplies_flags_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, serde_json::json!({"mesh": m, "network": n, "resolution": 24, "optimize": false}).to_string())
        .unwrap();
    let pw = path(dir.path(), "pw.json");
    ok(&["fit", "--config", &cfg, "--out", &pw]);
    let from_file = stats(dir.path().join("pw.stats.json"));
    assert!(from_file.patches.iter().all(|p| p.rule == ipatch::fitter::RatioRule::None));
    ok(&["fit", "--config", &cfg, "--out", &pw, "--omega", "5", "--tol", "1"]);
    let saved = ipatch::tessellate::load_patchwork(&pw).unwrap();
    assert_eq!(saved.provenance.config["resolution"], 24);
    assert_eq!(saved.provenance.config["tol"], 1.0);

    std::fs::write(&cfg, r#"{"mesh": "a", "bogus": 1}"#).unwrap();
    let out = run(&["fit", "--config", &cfg, "--out", &pw]);
    assert_eq!(error_json(&out)["error"], "SchemaError");
}

#[test]
fn refine_loose_tolerance_is_a_single_row() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let pw = path(dir.path(), "pw.json");
    ok(&["refine", "--mesh", &m, "--network", &n, "--out", &pw, "--tol", "100", "--resolution", "24"]);
    let s = stats(dir.path().join("pw.stats.json"));
    assert_eq!(s.iterations, Some(0));
    assert_eq!(s.report.len(), 1);
}

#[test]
fn refine_with_zero_iterations_matches_fit() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let (a, b) = (path(dir.path(), "a.json"), path(dir.path(), "b.json"));
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &a, "--resolution", "24"]);
    ok(&["refine", "--mesh", &m, "--network", &n, "--out", &b, "--resolution", "24", "--max-iter", "0"]);
    let (fa, fb) = (stats(dir.path().join("a.stats.json")), stats(dir.path().join("b.stats.json")));
    assert_eq!(fa.patches, fb.patches);
    assert_eq!(fa.global, fb.global);
}

#[test]
fn tessellate_writes_one_file_per_patch_and_merged() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let pw = path(dir.path(), "pw.json");
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw, "--resolution", "24"]);
    let out: PathBuf = dir.path().join("tess");
    ok(&["tessellate", "--patchwork", &pw, "--resolution", "24", "--out", &out.display().to_string()]);
    let mut total = 0;
    for id in 1..=6 {
        total += load_mesh(out.join(format!("patch_{id}.obj"))).unwrap().triangles().len();
    }
    assert_eq!(load_mesh(out.join("merged.obj")).unwrap().triangles().len(), total);
}

#[test]
fn deviate_against_own_mesh_is_within_tolerance() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let pw = path(dir.path(), "pw.json");
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw, "--resolution", "32", "--tol", "0.3"]);
    let ply = path(dir.path(), "dev.ply");
    ok(&["deviate", "--patchwork", &pw, "--mesh", &m, "--resolution", "32", "--out", &ply]);
    let s = stats(dir.path().join("dev.stats.json"));
    assert!(s.global.avg_pct < 0.3, "{:?}", s.global);
    assert!(std::fs::metadata(&ply).unwrap().len() > 0);
}

#[test]
fn offset_zero_equals_tessellation_and_signs_are_symmetric() {
    let dir = TempDir::new().unwrap();
    let (m, n) = plane_inputs(dir.path());
    let pw = path(dir.path(), "pw.json");
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw, "--resolution", "16", "--ribbons", "iloft"]);
    let tess = dir.path().join("tess");
    let zero = dir.path().join("zero");
    ok(&["tessellate", "--patchwork", &pw, "--resolution", "16", "--out", &tess.display().to_string()]);
    ok(&["offset", "--patchwork", &pw, "-d", "0", "--resolution", "16", "--out", &zero.display().to_string()]);
    assert_eq!(std::fs::read(tess.join("merged.obj")).unwrap(), std::fs::read(zero.join("merged.obj")).unwrap());

    let target = load_mesh(&m).unwrap();
    let mean = |dir: &Path| {
        let t = load_mesh(dir.join("merged.obj")).unwrap();
        ipatch::tessellate::deviation_map(&t, &target).1.avg
    };
    let (up, down) = (dir.path().join("up"), dir.path().join("down"));
    ok(&["offset", "--patchwork", &pw, "-d", "0.1", "--resolution", "16", "--out", &up.display().to_string()]);
    ok(&["offset", "--patchwork", &pw, "-d", "-0.1", "--resolution", "16", "--out", &down.display().to_string()]);
    let (a, b) = (mean(&up), mean(&down));
    assert!((a - b).abs() <= 1e-9 * a, "{a} {b}");
    // clipped border triangles overhang the mesh slightly
    assert!((a - 0.1).abs() < 0.005, "{a}");
}

#[test]
fn liming_offset_reports_patch_id() {
    let dir = TempDir::new().unwrap();
    let (m, n) = sphere_inputs(dir.path());
    let pw = path(dir.path(), "pw.json");
    ok(&["fit", "--mesh", &m, "--network", &n, "--out", &pw, "--resolution", "24"]);
    let saved = ipatch::tessellate::load_patchwork(&pw).unwrap();
    // circular arcs on the sphere pick Liming ribbons
    assert!(saved
        .patches
        .iter()
        .any(|p| p.ribbon_kinds.contains(&ipatch::ribbon::RibbonKind::Liming)));
    let out = run(&["offset", "--patchwork", &pw, "-d", "0.05", "--resolution", "24", "--out", &path(dir.path(), "off")]);
    let e = error_json(&out);
    assert_eq!(e["error"], "UnsupportedOffset");
    assert!(e["patch"].is_i64());
}
