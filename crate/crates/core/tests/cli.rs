use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotequiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotequiv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_idx(dir: &Path, count: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut images = vec![0, 0, 8, 3];
    for d in [count as u32, 28, 28] {
        images.extend_from_slice(&d.to_be_bytes());
    }
    for _ in 0..count {
        for _ in 0..28 * 28 {
            images.push(if rng.random_bool(0.2) { rng.random_range(1..=255) } else { 0 });
        }
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(count as u32).to_be_bytes());
    labels.extend((0..count).map(|i| (i % 10) as u8));
    let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
    fs::write(&ip, images).unwrap();
    fs::write(&lp, labels).unwrap();
    (ip, lp)
}

#[test]
fn groups_list_shows_all_orders() {
    let o = rotequiv(&["groups", "list"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let orders: Vec<&str> = out
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().trim_start_matches("order="))
        .collect();
    assert_eq!(orders, ["1", "4", "6", "9", "12", "4", "12", "24"]);
    assert!(out.starts_with("c1 "));
    assert!(out.contains("cube24 order=24 dims=3"));
}

#[test]
fn groups_verify_and_print() {
    assert_eq!(rotequiv(&["groups", "verify", "cube24"]).status.code(), Some(0));
    let o = rotequiv(&["groups", "print", "c4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.matches("element ").count(), 4);
    let cayley: Vec<&str> = out.lines().skip_while(|l| *l != "cayley").skip(1).collect();
    assert_eq!(cayley, ["0 1 2 3", "1 2 3 0", "2 3 0 1", "3 0 1 2"]);
}

#[test]
fn unknown_group_is_usage_error() {
    assert_eq!(rotequiv(&["groups", "verify", "dodeca60"]).status.code(), Some(2));
    assert_eq!(rotequiv(&["groups", "print", "klein4", "--dim", "2"]).status.code(), Some(2));
    assert_eq!(rotequiv(&["groups"]).status.code(), Some(2));
    assert_eq!(rotequiv(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn prepare_synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rotequiv(&[
            "--seed", "7", "prepare", "--source", "synth", "--out", p(&out), "--points", "32", "--train", "4",
            "--val", "1", "--test", "2",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("train: 20 records of 32x6 (xyz+normals)"));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["train.rqpc", "val.rqpc", "test.rqpc", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn prepare_idx_counts_and_points() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = write_idx(dir.path(), 100);
    let out = dir.path().join("digits");
    let o = rotequiv(&[
        "prepare", "--source", "idx", "--images", p(&images), "--labels", p(&labels), "--out", p(&out), "--points",
        "512",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = rotequiv::pointcloud::DatasetManifest::load(&out.join("manifest.toml")).unwrap();
    let total: usize = m.split_entries().iter().map(|(_, e)| e.size).sum();
    assert_eq!(total, 100);
    let train = m.read_split("train").unwrap();
    assert_eq!(train[0].features(false).dim(), (512, 3));
}

#[test]
fn prepare_missing_labels_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (images, _) = write_idx(dir.path(), 5);
    let missing = dir.path().join("nope-labels.idx");
    let o = rotequiv(&[
        "prepare", "--source", "idx", "--images", p(&images), "--labels", p(&missing), "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope-labels.idx"), "{}", stderr(&o));
}

#[test]
fn train_zero_epochs_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("shapes");
    let o = rotequiv(&[
        "prepare", "--source", "synth", "--out", p(&data), "--points", "32", "--train", "3", "--val", "1", "--test",
        "2", "--shapes", "sphere,cube",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    let manifest = data.join("manifest.toml");
    let o = rotequiv(&[
        "train", "--manifest", p(&manifest), "--out", p(&run), "--epochs", "0", "--backbone", "pointnet",
        "--group", "klein4", "--width", "0.125",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run.join("checkpoint.rqck").exists());
    let cfg = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(cfg.contains("group = \"klein4\""));
    let eval_dir = dir.path().join("eval");
    let o = rotequiv(&[
        "eval", "--checkpoint", p(&run.join("checkpoint.rqck")), "--rotations", "2", "--mode", "so3", "--out",
        p(&eval_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("event=eval split=test rotations=2 mode=so3"));
    assert!(eval_dir.join("resolved.toml").exists());
    assert_eq!(fs::read_to_string(eval_dir.join("confusion.csv")).unwrap().lines().count(), 3);
}

#[test]
fn train_rejects_so3_on_2d_data() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = write_idx(dir.path(), 30);
    let data = dir.path().join("digits");
    let o = rotequiv(&[
        "prepare", "--source", "idx", "--images", p(&images), "--labels", p(&labels), "--out", p(&data), "--points",
        "16",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rotequiv(&[
        "train", "--manifest", p(&data.join("manifest.toml")), "--out", p(&dir.path().join("r")), "--epochs", "1",
        "--augmentation", "so3",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("so3"));
}

#[test]
fn equiv_check_passes_with_summary_line() {
    let o = rotequiv(&["equiv-check", "--group", "klein4", "--backbone", "pointnet_fe", "--samples", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("event=equiv group=klein4")).count(), 80);
    let last = out.lines().last().unwrap();
    assert!(last.starts_with("PASS worst residual "), "{last}");
    assert!(last.ends_with("< 1e-9"), "{last}");
}

#[test]
fn equiv_check_hier_lite_with_injection() {
    let o = rotequiv(&[
        "equiv-check", "--group", "c4", "--dim", "2", "--backbone", "hier_lite", "--inject", "--samples", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().last().unwrap().ends_with("< 1e-6"));
}
