mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;
use narx_sysid::cli::{io, r_annotation, REPORT_FILES};
use narx_sysid::narx::DataTag;
use narx_sysid::train::{EpochRecord, StopReason, TrainingReport};

const QUICK: &str = "\
# short roll experiment
axis = roll
duration_s = 6
prbs_order = 7
prbs_bit_samples = 10
arch = sigmoid
hidden = 4
na = 3
nb = 2
max_epochs = 3
";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narx-sysid")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn full_bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), QUICK);
    let o = run(&["excite", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k,t_s,u,y"));
    assert_eq!(csv.lines().count(), 1 + 1500);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_digest="));
    assert!(manifest.contains("version="));

    let o = run(&["train", "--config", &cfg, "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = String::from_utf8_lossy(&o.stdout);
    assert!(printed.contains("best_epoch=") && printed.contains("best_val_mse="), "{printed}");

    let o = run(&["report", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "metrics.txt is still missing");
    assert!(stderr(&o).contains("metrics.txt"));

    let o = run(&["eval", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(metrics.contains("sp.fit_percent_val"));
    assert!(metrics.contains("p.fit_percent_val") || metrics.contains("p.status = diverged"));
    let summary = fs::read_to_string(out.join("training_summary.txt")).unwrap();
    for line in metrics.lines() {
        assert!(summary.lines().any(|l| l == line), "{line} missing from summary");
    }
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("k,t_s,segment,y,y_sp,y_p"));
    assert_eq!(preds.lines().count(), 1 + 1500 - 2 * 3);

    let o = run(&["report", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in REPORT_FILES {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"), "{f}");
    }

    fs::remove_file(out.join("training_report.csv")).unwrap();
    let o = run(&["report", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("training_report.csv"));
}

#[test]
fn persisted_headers_match_config() {
    let cases = [
        ("arch = sigmoid\nhidden = 30\nna = 15\nnb = 7\n", vec!["arch=sigmoid", "na=15", "nb=7", "layers=22,30,1", "act=logistic,identity"]),
        (
            "arch = ffnn\nlayers = 10,20\nact2 = radbas\nna = 15\nnb = 7\n",
            vec!["arch=ffnn", "layers=22,10,20,1", "act=tanh,radbas,identity"],
        ),
        ("arch = cascade\nhidden = 20\nna = 15\nnb = 7\n", vec!["arch=cascade", "layers=22,20,1", "act=tanh,identity"]),
    ];
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let cfg = write_config(dir.path(), QUICK);
    assert!(run(&["excite", "--config", &cfg, "--out", s(&data_dir)]).status.success());
    for (i, (model_keys, expect)) in cases.iter().enumerate() {
        let text = format!("axis = roll\nduration_s = 6\nprbs_order = 7\nprbs_bit_samples = 10\nmax_epochs = 1\n{model_keys}");
        let cfg = write_config(dir.path(), &text);
        let out = dir.path().join(format!("m{i}"));
        let dataset = data_dir.join("dataset.csv");
        let o = run(&["train", "--config", &cfg, "--dataset", s(&dataset), "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let model = fs::read_to_string(out.join("model.txt")).unwrap();
        let header: Vec<&str> = model.lines().take_while(|l| !l.starts_with('W')).collect();
        for key in expect {
            assert!(header.contains(key), "{key} not in {header:?}");
        }
    }
}

#[test]
fn excite_is_byte_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let read = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["excite", "--config", &cfg, "--out", s(&out)];
        args.extend_from_slice(extra);
        assert!(run(&args).status.success());
        fs::read(out.join("dataset.csv")).unwrap()
    };
    let a = read("a", &[]);
    assert_eq!(a, read("b", &[]));
    assert_ne!(a, read("c", &["--seed", "99"]));
}

#[test]
fn all_axes_write_separate_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &QUICK.replace("axis = roll", "axis = all"));
    let out = dir.path().join("all");
    let o = run(&["excite", "--config", &cfg, "--out", s(&out), "--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut seen = Vec::new();
    for axis in ["roll", "pitch", "yaw"] {
        let (data, meta) = io::read_dataset(&out.join(axis).join("dataset.csv")).unwrap();
        assert_eq!(data.axis.as_str(), axis);
        seen.push((meta.seed, data.y.samples().to_vec()));
    }
    assert_ne!(seen[0], seen[1]);
    let sequential = dir.path().join("seq");
    assert!(run(&["excite", "--config", &cfg, "--out", s(&sequential)]).status.success());
    for axis in ["roll", "pitch", "yaw"] {
        assert_eq!(
            fs::read(out.join(axis).join("dataset.csv")).unwrap(),
            fs::read(sequential.join(axis).join("dataset.csv")).unwrap()
        );
    }
}

#[test]
fn config_errors_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{QUICK}colour = blue\n"));
    let o = run(&["excite", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 11"), "{}", stderr(&o));
    let o = run(&["excite", "--config", s(&dir.path().join("nope.cfg"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_experiment_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = QUICK.to_string() + "kp_rate = 0\nki_rate = 0\nprbs_amplitude = 0.4\n";
    let cfg = write_config(dir.path(), &text);
    let o = run(&["excite", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("sample"));
}

#[test]
fn malformed_dataset_row_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = dir.path().join("run");
    assert!(run(&["excite", "--config", &cfg, "--out", s(&out)]).status.success());
    let path = out.join("dataset.csv");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[41] = "40,0.16,oops,0.1".into();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = run(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 42"), "{}", stderr(&o));
}

#[test]
fn training_divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = QUICK.to_string() + "algorithm = adam\nlearning_rate = 1e300\n";
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("run");
    assert!(run(&["excite", "--config", &cfg, "--out", s(&out)]).status.success());
    let o = run(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn write_arx_bundle(dir: &Path, y_override: Option<Vec<f64>>) {
    fs::create_dir_all(dir).unwrap();
    let mut data = arx_dataset(3000, 2100);
    if let Some(y) = y_override {
        data.y = narx_sysid::signals::Signal::new(y, DT).unwrap();
    }
    io::write_dataset(&dir.join("dataset.csv"), &data, 0, "fixture").unwrap();
    let mut model = arx_replica();
    model.data_tag = Some(DataTag { axis: data.axis, dt: DT });
    fs::write(dir.join("model.txt"), model.to_text()).unwrap();
    let report = TrainingReport {
        epochs: vec![
            EpochRecord { epoch: 0, train_mse: 1.0, val_mse: 1.0 },
            EpochRecord { epoch: 1, train_mse: 1e-20, val_mse: 1e-20 },
        ],
        best_epoch: 1,
        best_val_mse: 1e-20,
        stop: StopReason::Converged,
        wall_time_s: 0.0,
        seed: 0,
        options_digest: String::new(),
    };
    fs::write(dir.join("training_report.csv"), io::report_csv(&report)).unwrap();
}

#[test]
fn perfect_model_report_annotates_unit_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("arx");
    write_arx_bundle(&b, None);
    let o = run(&["eval", "--out", s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = io::parse_key_values(&fs::read_to_string(b.join("metrics.txt")).unwrap(), "m").unwrap();
    let fit: f64 = metrics["sp.fit_percent_val"].parse().unwrap();
    assert!(fit >= 99.99, "{fit}");
    let o = run(&["report", "--out", s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scatter = fs::read_to_string(b.join("scatter.svg")).unwrap();
    assert!(scatter.contains(&r_annotation(1.0)));
    assert_eq!(r_annotation(1.0), "R = 1.000000");
}

#[test]
fn eval_guards() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat");
    write_arx_bundle(&flat, Some(vec![0.25; 3000]));
    let o = run(&["eval", "--out", s(&flat)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let other = dir.path().join("pitch");
    write_arx_bundle(&other, None);
    let meta = fs::read_to_string(other.join("dataset.meta")).unwrap().replace("axis=roll", "axis=pitch");
    fs::write(other.join("dataset.meta"), meta).unwrap();
    let o = run(&["eval", "--out", s(&other)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pitch"), "{}", stderr(&o));

    let fast = dir.path().join("dt");
    write_arx_bundle(&fast, None);
    let meta = fs::read_to_string(fast.join("dataset.meta")).unwrap().replace("dt=0.004", "dt=0.002");
    fs::write(fast.join("dataset.meta"), meta).unwrap();
    assert_eq!(run(&["eval", "--out", s(&fast)]).status.code(), Some(2));
}
