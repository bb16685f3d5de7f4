use dpot_lab::config::DEFAULT_TOL;
use dpot_lab::{run_experiment, validate_config, ConfigError, Pipeline, Report};

const MINIMAL: &str = "pipeline = green\nseed = 3\ngeometry.family = lattice\ngeometry.n = 3\ngeometry.radius = 4\n";

#[test]
fn minimal_config_gets_defaults() {
    let cfg = validate_config(MINIMAL).unwrap();
    assert_eq!(cfg.pipeline, Pipeline::Green);
    assert_eq!(cfg.tol, DEFAULT_TOL);
    assert_eq!(cfg.tol, 1e-10);
    assert!(cfg.assertions.is_empty());
    assert_eq!(cfg.echo["seed"], "3");
}

#[test]
fn seed_is_mandatory() {
    let err = validate_config(&MINIMAL.replace("seed = 3\n", "")).unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn unknown_key_is_named_with_its_position() {
    match validate_config(&format!("{MINIMAL}foo = 1\n")).unwrap_err() {
        ConfigError::Parse { line, message, .. } => {
            assert_eq!(line, 6);
            assert!(message.contains("foo"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn radii_beyond_the_interior_are_rejected() {
    let text = MINIMAL.replace("geometry.radius = 4", "geometry.radius = 10") + "exhaustion.radii = 4, 20\n";
    match validate_config(&text).unwrap_err() {
        ConfigError::Semantic { field, message } => {
            assert_eq!(field, "exhaustion.radii");
            assert!(message.contains("radii exceed interior radius"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_json_round_trips() {
    let cfg = validate_config("pipeline = green\nseed = 1\ngeometry.family = lattice\ngeometry.n = 1\ngeometry.radius = 2\n").unwrap();
    let report = run_experiment(&cfg).unwrap();
    let back: Report = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.to_json_without_timestamp().unwrap(), run_experiment(&cfg).unwrap().to_json_without_timestamp().unwrap());
}
