use std::path::Path;
use std::process::{Command, Output};

const DISK_COS: &str = r#"
h = 0.03125
methods = ["wiener", "poincare", "wos"]
seed = 3
probes = [[0.3, 0.1], [-0.2, -0.4], [0.0, 0.6], [0.5, -0.5]]
[domain]
base = { kind = "disk", center = [0.0, 0.0], radius = 1.0 }
[data]
g = { kind = "fourier_cos", k = 1 }
[wos]
n_samples = 20000
"#;

const PUNCTURED: &str = r#"
h = 0.0625
probes = [[0.4, 0.2]]
[domain]
base = { kind = "disk", center = [0.0, 0.0], radius = 1.0 }
punctures = [[0.0, 0.0]]
[data]
g = { kind = "fourier_sin", k = 2 }
puncture_values = [[5.0]]
"#;

fn perron(dir: &Path, args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perron")).current_dir(dir).env("PERRON_THREADS", threads).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn missing_domain_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.toml", "h = 0.1\n[data]\ng = { kind = \"constant\", value = 1.0 }\n");
    let o = perron(t.path(), &["solve-dirichlet", "c.toml"], "2");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field: domain"));
}

#[test]
fn unknown_keys_and_bad_overrides_are_rejected() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.toml", &format!("{DISK_COS}\n[extra]\nx = 1\n"));
    assert_eq!(perron(t.path(), &["solve-dirichlet", "c.toml"], "1").status.code(), Some(2));
    write(t.path(), "d.toml", DISK_COS);
    assert_eq!(perron(t.path(), &["solve-dirichlet", "d.toml", "--set", "nokeyvalue"], "1").status.code(), Some(2));
    assert_eq!(perron(t.path(), &["solve-dirichlet", "d.toml", "--set", "probes=[[3.0, 0.0]]"], "1").status.code(), Some(2));
}

#[test]
fn cross_method_run_passes_and_writes_fields() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.toml", DISK_COS);
    let o = perron(t.path(), &["solve-dirichlet", "c.toml", "--out", "out"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(t.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(t.path().join("out/wiener.csv")).unwrap();
    assert!(csv.starts_with("x,y,node_class,coord_index,value\n"));
    let row = csv.lines().nth(1).unwrap();
    let value = row.rsplit(',').next().unwrap();
    // 17 significant digits
    assert_eq!(value.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17, "{row}");
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.toml", DISK_COS);
    let a = perron(t.path(), &["compare", "c.toml", "--out", "a"], "1");
    let b = perron(t.path(), &["compare", "c.toml", "--out", "b"], "4");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    for f in ["report.json", "wiener.csv", "poincare.csv"] {
        assert_eq!(std::fs::read(t.path().join("a").join(f)).unwrap(), std::fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
    let c = perron(t.path(), &["compare", "c.toml", "--seed", "4"], "1");
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn strict_tolerance_fails_the_invariant() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "c.toml", DISK_COS);
    let o = perron(t.path(), &["solve-dirichlet", "c.toml", "--set", "compare.tolerance=1e-12", "--set", "compare.stderr_factor=0.0"], "2");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cross_method_agreement"));
    let o = perron(t.path(), &["solve-dirichlet", "c.toml", "--set", "compare.tolerance=1e-12", "--set", "compare.stderr_factor=0.0", "--set", "compare.required=false"], "2");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bracket_lattice_and_measure_commands() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "p.toml", PUNCTURED);
    let o = perron(t.path(), &["bracket", "p.toml", "--out", "br"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(t.path().join("br/upper.csv").exists());
    let o = perron(t.path(), &["lattice-sup", "p.toml"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["invariants"].as_array().unwrap().iter().any(|i| i["name"] == "sup_norm_identity"));
    let o = perron(t.path(), &["harmonic-measure", "p.toml", "--set", "wos.n_samples=2000", "--set", "wos.puncture_mode={ mode = \"strict\", capture_radius = 0.01 }"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["results"]["estimates"][0]["n_samples"], 2000);
}

#[test]
fn heat_writes_snapshots_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{PUNCTURED}\n[heat]\ninitial = {{ g = {{ kind = \"gaussian\", center = [0.2, 0.0], sigma = 0.2, amplitude = 1.0 }} }}\nt_end = 0.02\ndt = 0.002\nsnapshot_every = 5\nlambda = 2.0\n");
    write(t.path(), "h.toml", &cfg);
    let o = perron(t.path(), &["heat", "h.toml", "--out", "ht"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(t.path().join("ht/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["times"].as_array().unwrap().len(), 11);
    assert_eq!(m["probe_series"][0].as_array().unwrap().len(), 11);
    assert!(t.path().join("ht/snapshot_0002.csv").exists());
    let o = perron(t.path(), &["heat", "h.toml", "--set", "heat.initial={}"], "2");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn poisson_on_the_disk() {
    let t = tempfile::tempdir().unwrap();
    let cfg = "h = 0.03125\nprobes = [[0.0, 0.0], [0.5, 0.0]]\n[domain]\nbase = { kind = \"disk\", center = [0.0, 0.0], radius = 1.0 }\n[data]\ng = { kind = \"constant\", value = 0.0 }\n[source]\ng = { kind = \"constant\", value = 1.0 }\n";
    write(t.path(), "p.toml", cfg);
    let o = perron(t.path(), &["solve-poisson", "p.toml"], "2");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let u0 = r["results"]["wiener"]["probe_values"][0][0].as_f64().unwrap();
    assert!((u0 + 0.25).abs() < 5e-3, "{u0}");
    write(t.path(), "q.toml", &cfg.replace("[source]\ng = { kind = \"constant\", value = 1.0 }\n", ""));
    let o = perron(t.path(), &["solve-poisson", "q.toml"], "2");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field: source"));
}

#[test]
fn help_lists_config_keys() {
    for (cmd, key) in [("solve-dirichlet", "wos.n_samples"), ("solve-poisson", "source.g"), ("heat", "heat.scheme"), ("bracket", "data.puncture_values"), ("lattice-sup", "lattice.other"), ("harmonic-measure", "wos.puncture_mode"), ("compare", "compare.tolerance")] {
        let o = Command::new(env!("CARGO_BIN_EXE_perron")).args([cmd, "--help"]).output().unwrap();
        let s = String::from_utf8_lossy(&o.stdout);
        assert!(s.contains("Config keys:") && s.contains(key), "{cmd}: {s}");
    }
}
