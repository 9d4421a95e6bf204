use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpsr_core::io::idx::{encode_images, encode_labels};

fn mpsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpsr"))
        .args(args)
        .env_remove("MPSR_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 4x4 images: class 0 inks the left half, class 1 the right half.
fn write_fixture(dir: &Path, name: &str, per_class: usize) -> (PathBuf, PathBuf) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..per_class {
        for label in 0..2u8 {
            let img: Vec<u8> = (0..16)
                .map(|p| {
                    let left = p % 4 < 2;
                    let ink = (left && label == 0) || (!left && label == 1);
                    if ink {
                        200 + ((k * 7 + p) % 50) as u8
                    } else {
                        ((k * 3 + p) % 40) as u8
                    }
                })
                .collect();
            images.push(img);
            labels.push(label);
        }
    }
    let (ip, lp) = (dir.join(format!("{name}-images")), dir.join(format!("{name}-labels")));
    fs::write(&ip, encode_images(4, 4, &images)).unwrap();
    fs::write(&lp, encode_labels(&labels)).unwrap();
    (ip, lp)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pretrain(train: &(PathBuf, PathBuf), model: &Path, chi: &str) -> Output {
    mpsr(&[
        "pretrain",
        "--train-images",
        s(&train.0),
        "--train-labels",
        s(&train.1),
        "--chi",
        chi,
        "--downscale",
        "1",
        "--out",
        s(model),
    ])
}

#[test]
fn pretrain_then_classify() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 12);
    let test = write_fixture(dir.path(), "test", 5);
    let model = dir.path().join("m.mpsm");
    let out = pretrain(&train, &model, "4");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = dir.path().join("metrics.csv");
    let out = mpsr(&[
        "classify",
        "--model",
        s(&model),
        "--test-images",
        s(&test.0),
        "--test-labels",
        s(&test.1),
        "--metrics",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("accuracy 1.0000"), "{}", stdout(&out));
    let csv = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "chi,strategy,map_id,accuracy,mean_sq_overlap,wall_time_s");
    assert!(lines[1].starts_with("4,tree,cos-sin,1.0,,"), "{}", lines[1]);
}

#[test]
fn inspect_sample_and_smooth() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 4);
    let model = dir.path().join("m.mpsm");
    assert_eq!(code(&pretrain(&train, &model, "8")), 0);

    // 4 images per class with chi 8 is the lossless regime
    let out = mpsr(&[
        "inspect",
        "--model",
        s(&model),
        "--overlap",
        "--train-images",
        s(&train.0),
        "--train-labels",
        s(&train.1),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(
        text.matches("squared overlap 1.0000000").count() + text.matches("squared overlap 0.9999999").count(),
        2,
        "{text}"
    );

    let out = mpsr(&["inspect", "--model", s(&model), "--schmidt", "8"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("label 1 cut 8"));

    let samples = dir.path().join("samples");
    for mode in ["binary", "grey"] {
        let out = mpsr(&[
            "sample",
            "--model",
            s(&model),
            "--label",
            "1",
            "--count",
            "3",
            "--mode",
            mode,
            "--seed",
            "7",
            "--outdir",
            s(&samples),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let pbm = fs::read_to_string(samples.join("sample_1_0000.pbm")).unwrap();
    assert!(pbm.starts_with("P1\n4 4\n"));
    let pgm = fs::read(samples.join("sample_1_0002.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n4 4\n255\n"));
    assert_eq!(pgm.len(), 11 + 16);

    let curve = dir.path().join("curve.csv");
    let out = mpsr(&[
        "smooth",
        "--map",
        "sin-40",
        "--xi",
        "0.5",
        "--grid",
        "1000",
        "--out",
        s(&curve),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 1001);
}

#[test]
fn sampling_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 4);
    let model = dir.path().join("m.mpsm");
    assert_eq!(code(&pretrain(&train, &model, "4")), 0);
    let draw = |sub: &str| {
        let outdir = dir.path().join(sub);
        let out = mpsr(&[
            "sample",
            "--model",
            s(&model),
            "--label",
            "0",
            "--count",
            "4",
            "--mode",
            "grey",
            "--seed",
            "3",
            "--outdir",
            s(&outdir),
        ]);
        assert_eq!(code(&out), 0);
        fs::read(outdir.join("sample_0_0003.pgm")).unwrap()
    };
    assert_eq!(draw("a"), draw("b"));
}

#[test]
fn worker_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 4);
    let model = dir.path().join("m.mpsm");
    let out = Command::new(env!("CARGO_BIN_EXE_mpsr"))
        .args([
            "--workers",
            "1",
            "pretrain",
            "--train-images",
            s(&train.0),
            "--train-labels",
            s(&train.1),
        ])
        .args(["--chi", "2", "--downscale", "1", "--out", s(&model)])
        .env("MPSR_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("on 3 worker(s)"), "{}", stdout(&out));

    let bad = Command::new(env!("CARGO_BIN_EXE_mpsr"))
        .args(["smooth", "--out", s(&dir.path().join("c.csv"))])
        .env("MPSR_WORKERS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
}

#[test]
fn format_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 3);
    let mut bytes = fs::read(&train.0).unwrap();
    bytes[3] = 0x04;
    let broken = dir.path().join("broken-images");
    fs::write(&broken, &bytes).unwrap();
    let out = mpsr(&[
        "pretrain",
        "--train-images",
        s(&broken),
        "--train-labels",
        s(&train.1),
        "--downscale",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));

    let model = dir.path().join("m.mpsm");
    assert_eq!(code(&pretrain(&train, &model, "4")), 0);
    let mut bytes = fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&model, &bytes).unwrap();
    let out = mpsr(&["inspect", "--model", s(&model)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn capacity_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // 220 full-size images of one class exceed the default direct-sum cap
    let images: Vec<Vec<u8>> = (0..220)
        .map(|k| (0..784).map(|p| ((k + p) % 256) as u8).collect())
        .collect();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
    fs::write(&ip, encode_images(28, 28, &images)).unwrap();
    fs::write(&lp, encode_labels(&[5; 220])).unwrap();
    let out = mpsr(&[
        "pretrain",
        "--train-images",
        s(&ip),
        "--train-labels",
        s(&lp),
        "--downscale",
        "1",
        "--strategy",
        "direct",
        "--out",
        s(&dir.path().join("m.mpsm")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn contract_violation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_fixture(dir.path(), "train", 3);
    let model = dir.path().join("m.mpsm");
    assert_eq!(code(&pretrain(&train, &model, "4")), 0);
    // the cos-sin map is not orthonormal, so it cannot drive grey sampling
    let out = mpsr(&[
        "sample",
        "--model",
        s(&model),
        "--label",
        "0",
        "--mode",
        "grey",
        "--grey-map",
        "cos-sin",
        "--outdir",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn usage_and_config_errors() {
    assert_eq!(code(&mpsr(&["--help"])), 0);
    assert_eq!(code(&mpsr(&["pretrain"])), 1);
    assert_eq!(code(&mpsr(&["smooth", "--map", "bogus"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = mpsr(&["inspect", "--model", s(&missing)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}
