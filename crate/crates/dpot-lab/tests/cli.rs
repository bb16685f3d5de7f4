use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

const P3_GREEN: &str = "pipeline = green\nseed = 1\ngeometry.family = lattice\ngeometry.n = 1\ngeometry.radius = 1\n";

fn dpot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpot")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(dir: &Path, text: &str, extra: &[&str]) -> (Output, Option<Value>) {
    let cfg = write_config(dir, "exp.conf", text);
    let out = dir.join("out");
    let mut args = vec!["run", "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = dpot(&args);
    let report = std::fs::read_to_string(out.join("report.json")).ok().map(|s| serde_json::from_str(&s).unwrap());
    (o, report)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn green_report_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (o, r) = run(dir.path(), P3_GREEN, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = r.unwrap();
    let want = [[0.75, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.75]];
    for (row, w) in r["results"]["green"]["matrix"].as_array().unwrap().iter().zip(want) {
        for (v, x) in row.as_array().unwrap().iter().zip(w) {
            assert!((v.as_f64().unwrap() - x).abs() < 1e-12);
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "ok.conf", P3_GREEN);
    assert_eq!(code(&dpot(&["validate", "--config", &ok])), 0);

    let unknown = write_config(dir.path(), "unknown.conf", &format!("{P3_GREEN}foo = 1\n"));
    let o = dpot(&["validate", "--config", &unknown]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));

    let radii = write_config(
        dir.path(),
        "radii.conf",
        "pipeline = green\nseed = 1\ngeometry.family = lattice\ngeometry.n = 3\ngeometry.radius = 10\nexhaustion.radii = 4, 20\n",
    );
    let o = dpot(&["validate", "--config", &radii]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("radii exceed interior radius"));

    let (o, r) = run(dir.path(), &format!("{P3_GREEN}assert.green.asymmetry = >= 1\n"), &[]);
    assert_eq!(code(&o), 2);
    let assertions = &r.unwrap()["assertions"];
    assert!(assertions.to_string().contains("green.asymmetry"));

    let (o, _) = run(dir.path(), P3_GREEN, &["--max-vertices", "3"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn reruns_agree_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let text = "pipeline = full\nseed = 9\ngeometry.family = lattice\ngeometry.n = 1\ngeometry.radius = 6\n\
                exhaustion.radii = 1, 2, 3, 4, 5\npotential.family = pointmass\npotential.amplitude = 0.3\n\
                heat.t = 0.5, 1\nparabolic.radii = 2, 3, 4, 6\nparabolic.p = 2, 3\nriesz.radii = 3, 4, 6\nriesz.p = 2\n";
    let strip = |mut v: Value| {
        v["provenance"].as_object_mut().unwrap().remove("timestamp");
        v
    };
    let (o1, a) = run(dir.path(), text, &[]);
    assert_eq!(code(&o1), 0, "{}", String::from_utf8_lossy(&o1.stderr));
    let (_, b) = run(dir.path(), text, &[]);
    assert_eq!(strip(a.unwrap()), strip(b.unwrap()));
}

#[test]
fn csv_bundle_headers() {
    let dir = tempfile::tempdir().unwrap();
    let text = "pipeline = heat\nseed = 1\ngeometry.family = lattice\ngeometry.n = 1\ngeometry.radius = 4\nheat.t = 1, 2\n";
    let (o, _) = run(dir.path(), text, &["--format", "csv-bundle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let kernels = std::fs::read_to_string(dir.path().join("out/kernels.csv")).unwrap();
    assert_eq!(kernels.lines().next(), Some("x,y,t,value"));
    assert!(kernels.lines().count() > 1);
}

#[test]
fn free_riesz_is_bounded_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "pipeline = riesz\nseed = 0\ngeometry.family = lattice\ngeometry.n = 3\ngeometry.radius = 5\n\
                riesz.radii = 3, 4, 5\nriesz.p = 2\n";
    let (o, r) = run(dir.path(), text, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(r.unwrap()["metrics"]["riesz.p2.plain_trend"], "bounded");
}
