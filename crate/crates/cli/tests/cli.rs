use std::path::Path;
use std::process::{Command, Output};

const UNITS: &str = "[units]\nstress = \"MPa\"\nlength = \"mm\"\ndensity = \"g/cm3\"\ntime = \"days\"\n";

fn bonefrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bonefrac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("{UNITS}{body}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

const PLATE: &str = r#"
[mesh]
generate = "plate-coarse"

[material]
young = 1000.0
poisson = 0.3
gc = 0.01

[[traction]]
group = "TRACTION_TOP"
traction = [0.0, 1.0, 0.0]

[[traction]]
group = "TRACTION_BOTTOM"
traction = [0.0, -1.0, 0.0]

[orders]
pg = 1
pl = 1
"#;

#[test]
fn fracture_plate_populates_k_and_margins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "plate.toml", PLATE);
    let out = dir.path().join("out");
    let o = bonefrac(&["fracture", "--config", &cfg, "--out", out.to_str().unwrap(), "--singular", "on"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("front_nodes.csv")).unwrap();
    for col in ["k_i", "margin_linear", "margin_sqrt"] {
        let vals = csv_column(&csv, col);
        assert!(!vals.is_empty());
        for v in vals {
            assert!(v.parse::<f64>().unwrap() > 0.0, "{col} = {v}");
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["orders"]["singular"], true);
    assert_eq!(manifest["command"], "fracture");
    let vtk = std::fs::read_to_string(out.join("fields.vtk")).unwrap();
    assert!(vtk.contains("VECTORS displacement double"));
    assert!(vtk.contains("SCALARS energy_density double 1"));
}

#[test]
fn adapt_then_fracture_with_snapshot_density() {
    let dir = tempfile::tempdir().unwrap();
    let adapt_out = dir.path().join("adapt");
    let cfg = write_config(
        dir.path(),
        "adapt.toml",
        r#"
[mesh]
generate = "tube-cracked"

[[traction]]
group = "TRACTION_END"
traction = [0.0, 0.0, -20.0]

[orders]
pg = 1

[time]
t_end = 3.0
snapshot_times = [0.0, 3.0]
"#,
    );
    let o = bonefrac(&["adapt", "--config", &cfg, "--out", adapt_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = std::fs::read_to_string(adapt_out.join("mass_history.csv")).unwrap();
    assert!(history.starts_with("t,mass,dt,newton_its\n"));
    let t: Vec<f64> = csv_column(&history, "t").iter().map(|v| v.parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!(adapt_out.join("snapshot_01.vtk").exists());

    let frac = write_config(
        dir.path(),
        "fracture.toml",
        &format!(
            r#"
[mesh]
generate = "tube-cracked"

[density]
source = "snapshot"
path = "{}"

[[traction]]
group = "TRACTION_END"
traction = [0.0, 0.0, 20.0]

[orders]
pg = 1
"#,
            adapt_out.join("final_density.csv").display()
        ),
    );
    let out = dir.path().join("fracture");
    let o = bonefrac(&["fracture", "--config", &frac, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("front_nodes.csv")).unwrap();
    let densities: Vec<f64> = csv_column(&csv, "density").iter().map(|v| v.parse().unwrap()).collect();
    assert!(densities.iter().all(|d| (*d - 1.0).abs() > 1e-6), "density was not taken from the snapshot");
}

#[test]
fn missing_mesh_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[mesh]\npath = \"nowhere.msh\"\n");
    let o = bonefrac(&["adapt", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mesh not found"), "{}", stderr(&o));
}

#[test]
fn missing_crack_group_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[mesh]\ngenerate = \"tube\"\n");
    let o = bonefrac(&["fracture", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[mesh]\ngenerate = \"tube\"\n[solver]\ntolerance = 1e-8\n");
    let o = bonefrac(&["fracture", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tolerance"), "{}", stderr(&o));
}

#[test]
fn unknown_suite_is_usage_error() {
    let o = bonefrac(&["bench", "nosuch", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_fd_and_patch_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["fd", "patch"] {
        let out = dir.path().join(suite);
        let o = bonefrac(&["bench", suite, "--out", out.to_str().unwrap(), "--seed", "5"]);
        assert!(o.status.success(), "{suite}: {}", String::from_utf8_lossy(&o.stdout));
        let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(summary.lines().all(|l| l.starts_with("PASS")), "{summary}");
    }
}

#[test]
fn generate_validate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let msh = dir.path().join("plate.msh");
    let o = bonefrac(&["generate", "plate-coarse", "--out", msh.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bonefrac(&["validate-mesh", msh.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("polylines"));

    let samples = dir.path().join("s.csv");
    let mut text = String::from("x,y,z,value\n");
    for i in 0..6 {
        for j in 0..6 {
            for k in 0..6 {
                let (x, y, z) = (i as f64 * 0.2, j as f64 * 0.2, k as f64 * 0.2);
                text += &format!("{x},{y},{z},{}\n", 1.0 + 0.5 * x - 0.25 * z);
            }
        }
    }
    std::fs::write(&samples, text).unwrap();
    let query = dir.path().join("q.csv");
    std::fs::write(&query, "x,y,z\n0.5,0.5,0.5\n").unwrap();
    let out = dir.path().join("fit");
    let o = bonefrac(&[
        "mwls-fit", "--samples", samples.to_str().unwrap(), "--query", query.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("mwls_query.csv")).unwrap();
    let v: f64 = csv_column(&csv, "value")[0].parse().unwrap();
    let dx: f64 = csv_column(&csv, "dx")[0].parse().unwrap();
    assert!((v - 1.125).abs() < 1e-10, "{v}");
    assert!((dx - 0.5).abs() < 1e-8, "{dx}");
}

#[test]
fn validate_mesh_missing_file_exits_2() {
    let o = bonefrac(&["validate-mesh", "/nonexistent.msh"]);
    assert_eq!(o.status.code(), Some(2));
}
