use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsc"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run bsc")
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ramp_spec(frames: usize, k_hi: usize) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "name": "cli-test",
  "seed": 4,
  "fringe": {{ "wavelength_px": 16.0, "amplitude": 128.0, "modulation": 100.0, "steps": 4 }},
  "noise": {{ "gaussian_sigma": 0.5, "quantize_bits": 8 }},
  "frames": {frames},
  "k_range": [0, {k_hi}],
  "source": {{ "kind": "ramp", "width": 64, "height": 8, "motion": {{ "kind": "linear", "velocity": 0.01 }} }}
}}"#
    )
}

#[test]
fn linear_sweep_is_monotone_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = scenario("ramp_linear.json");
    let a = bsc(&dir.path().join("a"), &["--strict", "sweep-k", &spec]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bsc(&dir.path().join("b"), &["run-sweep", &spec]);
    assert!(b.status.success());
    let csv_a = fs::read(dir.path().join("a/sweep.csv")).unwrap();
    assert_eq!(csv_a, fs::read(dir.path().join("b/sweep.csv")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "ripple_mae").unwrap();
    let ripple: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(ripple.len(), 7);
    assert!(ripple.windows(2).all(|w| w[1] <= w[0]), "{ripple:?}");
}

#[test]
fn seed_flag_changes_noisy_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, ramp_spec(12, 2)).unwrap();
    let spec = spec.to_str().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(bsc(&out, &["--seed", seed, "sweep-k", spec]).status.success());
        fs::read(out.join("sweep.csv")).unwrap()
    };
    assert_eq!(run("a", "1"), run("b", "1"));
    assert_ne!(run("a", "1"), run("c", "2"));
}

#[test]
fn too_few_frames_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("short.json");
    fs::write(&spec, ramp_spec(6, 3)).unwrap();
    let out = dir.path().join("out");
    let o = bsc(&out, &["sweep-k", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not enough frames"));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, "{\n  \"schema_version\": 1,\n  \"frames\": \"many\"\n}\n").unwrap();
    let o = bsc(&dir.path().join("out"), &["simulate", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn frequency_limit_and_strict_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsc(dir.path(), &["freq-limit", "--geometry", &scenario("desk_geometry.json")]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["f_limit"].as_f64().unwrap() - 52.114285714285714).abs() < 1e-9);
    assert_eq!(v["satisfied"], true);

    let o = bsc(dir.path(), &["--strict", "freq-limit", "--candidate", "60"]);
    assert_eq!(o.status.code(), Some(3));
    let o = bsc(dir.path(), &["freq-limit", "--candidate", "60"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn offsets_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsc(dir.path(), &["offsets", "--profile", "linear:0.5", "--frames", "4", "--order", "2"]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(dir.path().join("offsets.csv")).unwrap(),
        "frame,offset,diff1,diff2\n0,0,0.5,0\n1,0.5,0.5,0\n2,1,0.5,\n3,1.5,,\n"
    );
}

#[test]
fn file_pipeline_batch_and_stream_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(bsc(&sim, &["simulate", &scenario("desk_plate.json"), "--bits", "16"]).status.success());
    let main = sim.join("main");
    let main = main.to_str().unwrap();
    let batch = dir.path().join("batch");
    let stream = dir.path().join("stream");
    assert!(bsc(&batch, &["compensate", main, "-k", "2"]).status.success());
    assert!(bsc(&stream, &["compensate", main, "-k", "2", "--stream"]).status.success());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(batch.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 160 - 4 - 2 + 1);
    assert_eq!(manifest["mode"], "batch");
    for entry in outputs {
        let file = entry["file"].as_str().unwrap();
        assert_eq!(fs::read(batch.join(file)).unwrap(), fs::read(stream.join(file)).unwrap());
    }

    let aux = dir.path().join("aux");
    assert!(bsc(&aux, &["compensate", sim.join("aux").to_str().unwrap(), "-k", "2"]).status.success());
    let un = dir.path().join("unwrap");
    let o = bsc(
        &un,
        &[
            "unwrap",
            "--main",
            batch.join("bsc_k2_00030.f32").to_str().unwrap(),
            "--aux",
            aux.join("bsc_k2_00030.f32").to_str().unwrap(),
            "--rig",
            &scenario("desk_rig.json"),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cloud = fs::read_to_string(un.join("cloud.xyz")).unwrap();
    assert!(cloud.lines().count() > 10_000);
    for z in cloud.lines().map(|l| l.split(' ').nth(2).unwrap().parse::<f64>().unwrap()) {
        assert!((400.0..=500.0).contains(&z));
    }
    assert!(un.join("depth.f32.json").exists());
}

#[test]
fn phase_windows_and_bad_steps() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(bsc(&sim, &["simulate", &scenario("desk_plate.json")]).status.success());
    let main = sim.join("main");
    let out = dir.path().join("phase");
    let o = bsc(&out, &["phase", main.to_str().unwrap(), "--start", "3", "--count", "2", "--datum"]);
    assert!(o.status.success());
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("phase_00004.f32.json")).unwrap()).unwrap();
    assert_eq!(side["datum_index"], 4);
    assert!(!out.join("phase_00005.f32").exists());

    let o = bsc(&out, &["compensate", main.to_str().unwrap(), "-k", "1", "--steps", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bsc(&out, &["phase", main.to_str().unwrap(), "--start", "158"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsc(dir.path(), &["--threads", "1", "bench", "--width", "64", "--height", "48", "--frames", "40", "-k", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(v["outputs"], 40 - 4 - 2 + 1);
    assert_eq!(v["threads"], 1);
    assert!(v["frames_per_second"].as_f64().unwrap() > 0.0);
}
