use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panoslam::evaluation::Trajectory;
use panoslam::kv::KvFile;

fn panoslam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panoslam")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, scenario: &str, seed: u64) -> PathBuf {
    let out = dir.join(format!("{scenario}_{seed}"));
    let o = panoslam(&["generate", "--scenario", scenario, "--seed", &seed.to_string(), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn metric(dir: &Path, key: &str) -> f64 {
    KvFile::read(&dir.join("metrics.txt")).unwrap().require(key).unwrap()
}

#[test]
fn generate_loop_is_a_kilometre_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = generate(tmp.path(), "loop_1km", 1);
    let manifest = KvFile::read(&a.join("manifest.txt")).unwrap();
    let length: f64 = manifest.require("trajectory_length").unwrap();
    assert!((950.0..=1050.0).contains(&length), "{length}");

    let again = tmp.path().join("again");
    assert!(panoslam(&["generate", "--scenario", "loop_1km", "--seed", "1", "--out", s(&again)]).status.success());
    assert!(files(&a) == files(&again));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = panoslam(&["generate", "--scenario", "moon", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("moon"));
    assert_eq!(panoslam(&["run", "--out", s(tmp.path())]).status.code(), Some(2));
}

#[test]
fn baseline_and_association_runs_complete_and_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "straight_500m", 2);
    let base = tmp.path().join("base");
    let assoc = tmp.path().join("assoc");
    let common = ["run", "--dataset", s(&data), "--densify", "interp"];
    let o = panoslam(&[&common[..], &["--no-assoc", "--out", s(&base)]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = panoslam(&[&common[..], &["--theta", "2", "--out", s(&assoc)]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.txt", "trajectory_online.txt", "map.txt", "run.log", "config.txt", "metrics.txt"] {
        assert!(base.join(f).exists(), "{f}");
    }
    assert_ne!(metric(&base, "ate_m"), metric(&assoc, "ate_m"));
    // the written config reproduces the run
    let rerun = tmp.path().join("rerun");
    let cfg = base.join("config.txt");
    assert!(panoslam(&["run", "--config", s(&cfg), "--out", s(&rerun)]).status.success());
    assert_eq!(
        std::fs::read(base.join("trajectory.txt")).unwrap(),
        std::fs::read(rerun.join("trajectory.txt")).unwrap()
    );
}

#[test]
fn lost_tracking_and_malformed_data_have_their_own_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), "straight_500m", 4);
    let obs = data.join("frames").join("000010.obs");
    let header = std::fs::read_to_string(&obs).unwrap().lines().next().unwrap().to_string();
    std::fs::write(&obs, format!("{header}\n")).unwrap();
    let o = panoslam(&["run", "--dataset", s(&data), "--densify", "interp", "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&obs, format!("{header}\n1 1 not-a-number 3\n")).unwrap();
    let o = panoslam(&["run", "--dataset", s(&data), "--densify", "interp", "--out", s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("000010.obs:2"));
}

#[test]
fn eval_reports_zero_offset_and_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let gt_path = tmp.path().join("gt.txt");
    let shifted_path = tmp.path().join("shifted.txt");
    let gt = Trajectory::new(
        (0..50)
            .map(|k| {
                let a = k as f64 * 0.1;
                let pose = panoslam::geometry::PoseSE3::new(
                    nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, a),
                    nalgebra::Vector3::new(30.0 * a.cos(), 30.0 * a.sin(), 0.1 * k as f64),
                );
                (k as f64, pose)
            })
            .collect(),
    )
    .unwrap();
    gt.write(&gt_path).unwrap();
    gt.map_poses(|p| {
        let mut q = *p;
        q.translation.x += 1.0;
        q
    })
    .write(&shifted_path)
    .unwrap();

    let o = panoslam(&["eval", s(&gt_path), s(&gt_path)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ATE (rigid alignment): 0.0000 m"));

    let report = tmp.path().join("m.txt");
    let o = panoslam(&["eval", s(&shifted_path), s(&gt_path), "--align", "none", "--out", s(&report)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ATE (none alignment): 1.0000 m"));
    let ate: f64 = KvFile::read(&report).unwrap().require("ate_m").unwrap();
    assert!((ate - 1.0).abs() < 1e-9);

    let missing = tmp.path().join("nope.txt");
    let o = panoslam(&["eval", s(&missing), s(&gt_path)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));
}
