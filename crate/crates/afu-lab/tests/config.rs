use afu_lab::config::ExperimentConfig;
use afu_lab::report::{Report, SCHEMA_VERSION};
use afu_lab::Error;

const FULL: &str = r#"
grid = 2048
seed = 11
out = "out"

[map]
family = "shifted_beta"
params = { beta = 2.5, alpha = 0.3 }

[roof]
kind = "one_plus_x_sq"
eps0 = 0.5

[caps]
power_cap = 4

[scan]
sigma = [0.0, 0.01]
b = [20.0, 40.0]

[correlation]
samples = 5000
t_max = 2.0
t_step = 0.5
"#;

#[test]
fn full_config_parses() {
    let c = ExperimentConfig::from_toml(FULL).unwrap();
    let m = c.map().unwrap();
    assert_eq!(m.name(), afu_lab::interval_map::MapSpec::shifted_beta(2.5, 0.3).unwrap().name());
    let h = c.harness();
    assert_eq!(h.grid, 2048);
    assert_eq!(h.seed, 11);
    assert_eq!(h.caps.power_cap, 4);
    assert_eq!(c.scan.sigma, vec![0.0, 0.01]);
    assert_eq!(c.scan.m_max, 8);
    assert_eq!(c.correlation.t_grid(), vec![0.0, 0.5, 1.0, 1.5]);
    assert!(c.correlation.control);
}

#[test]
fn toml_round_trip() {
    let c = ExperimentConfig::from_toml(FULL).unwrap();
    let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back.map, c.map);
    assert_eq!(back.roof, c.roof);
    assert_eq!(back.scan, c.scan);
    assert_eq!(back.correlation, c.correlation);
    assert_eq!(back.tolerances, c.tolerances);
    assert_eq!(back.harness().grid, c.harness().grid);
}

#[test]
fn minimal_config_uses_defaults() {
    let c = ExperimentConfig::doubling();
    assert_eq!(c.roof().unwrap(), afu_lab::interval_map::Roof::one_plus_x_sq());
    assert_eq!(c.harness().grid, 4096);
    assert_eq!(c.tolerances.residual, 1e-8);
    assert_eq!(c.scan.resolvent_b, vec![20.0, 40.0, 80.0, 160.0]);
}

#[test]
fn table_and_const_roofs() {
    let c = ExperimentConfig::from_toml("[map]\nfamily = \"doubling\"\n[roof]\nkind = \"table\"\nknots = [[0.0, 1.0], [1.0, 2.0]]\n").unwrap();
    assert!((c.roof().unwrap().phi(0.5) - 1.5).abs() < 1e-12);
    let c = ExperimentConfig::from_toml("[map]\nfamily = \"doubling\"\n[roof]\nkind = \"const\"\nvalue = 2.0\n").unwrap();
    assert!(c.roof().unwrap().is_constant());
}

#[test]
fn bad_configs_are_errors() {
    assert!(matches!(ExperimentConfig::from_toml("grid = 3"), Err(Error::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml("[map]\nfamily = 3\n"), Err(Error::Config(_))));
    let unknown = ExperimentConfig::from_toml("[map]\nfamily = \"tent\"\n").unwrap();
    assert!(matches!(unknown.map(), Err(Error::Config(_))));
    let no_beta = ExperimentConfig::from_toml("[map]\nfamily = \"shifted_beta\"\n").unwrap();
    assert!(matches!(no_beta.map(), Err(Error::Config(_))));
    let no_value = ExperimentConfig::from_toml("[map]\nfamily = \"doubling\"\n[roof]\nkind = \"const\"\n").unwrap();
    assert!(matches!(no_value.roof(), Err(Error::Config(_))));
    let bad_knots = ExperimentConfig::from_toml("[map]\nfamily = \"doubling\"\n[roof]\nkind = \"table\"\nknots = [[0.5, 1.0], [0.2, 2.0]]\n").unwrap();
    assert!(matches!(bad_knots.roof(), Err(Error::Config(_))));
}

#[test]
fn report_envelope_serializes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let mut r = Report::new("scan", "doubling".into(), 7, None, vec![1.0, 2.0]);
    r.assert("a", true, "fine");
    r.assert("b", false, "broken");
    r.assert("c", false, "also broken");
    assert_eq!(r.first_failure().unwrap().name, "b");
    r.write(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["command"], "scan");
    assert_eq!(v["assertions"].as_array().unwrap().len(), 3);
    assert_eq!(v["payload"][1], 2.0);
    assert!(v["ledger"].is_null());
}
