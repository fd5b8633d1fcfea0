//! End-to-end checks of the command-line harness: exit codes, help
//! coverage, byte-reproducibility, and the documented error paths.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn waveop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_waveop"))
}

fn run(args: &[&str]) -> Output {
    waveop().args(args).output().expect("spawn waveop")
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small holographic dataset settings shared by the tests below.
const HOLO_SMALL: &[&str] = &[
    "--set",
    "geometry.grid=16",
    "--set",
    "geometry.receive_wl=4",
    "--set",
    "geometry.cutoff=4",
    "--set",
    "geometry.n_train=20",
    "--set",
    "geometry.n_test=5",
];

const MODEL_SMALL: &[&str] = &[
    "--set",
    "model.width=6",
    "--set",
    "model.layers=2",
    "--set",
    "model.modes1=3",
    "--set",
    "model.modes2=3",
];

fn gen_holo(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen", "holo", "--out", path.to_str().unwrap(), "--seed", seed];
    args.extend_from_slice(HOLO_SMALL);
    assert_code(&run(&args), 0);
    path
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["gen", "holo", "--seed", "1"]);
    assert_code(&out, 2);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "gen",
        "holo",
        "--out",
        dir.path().join("x.bin").to_str().unwrap(),
        "--set",
        "geometry.gird=16",
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.gird"));
}

#[test]
fn help_lists_every_config_key_and_default() {
    for sub in ["gen", "train", "eval", "compare"] {
        let out = run(&[sub, "--help"]);
        assert_code(&out, 0);
        let text = String::from_utf8_lossy(&out.stdout);
        for doc in waveop_core::config::KEY_DOCS {
            assert!(text.contains(doc.key), "{sub} --help missing {}", doc.key);
            assert!(
                text.contains(doc.default),
                "{sub} --help missing default of {}",
                doc.key
            );
        }
    }
}

#[test]
fn gen_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_holo(dir.path(), "a.bin", "42");
    let b = gen_holo(dir.path(), "b.bin", "42");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = gen_holo(dir.path(), "c.bin", "43");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gen_fim_records_snr_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fim.bin");
    let out = run(&[
        "gen",
        "fim",
        "--out",
        path.to_str().unwrap(),
        "--seed",
        "3",
        "--snr-db",
        "10",
        "--set",
        "fim.n_train=4",
        "--set",
        "fim.n_test=2",
    ]);
    assert_code(&out, 0);
    match waveop_core::oracles::load_dataset(&path).unwrap() {
        waveop_core::oracles::Dataset::Fim(ds) => {
            assert_eq!(ds.snr_spec, "10");
            assert!(ds.scenarios.iter().all(|s| s.snr_db == 10.0));
        }
        _ => panic!("wrong kind"),
    }
}

#[test]
fn train_smoke_writes_expected_loss_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_holo(dir.path(), "d.bin", "1");
    let ckpt = dir.path().join("m.ckpt");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--set",
        "train.epochs=5",
        "--set",
        "train.batch_size=10",
    ];
    args.extend_from_slice(MODEL_SMALL);
    assert_code(&run(&args), 0);

    let csv = std::fs::read_to_string(dir.path().join("m.loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,test_loss"));
    assert_eq!(lines.count(), 5);
    assert!(ckpt.exists());
}

#[test]
fn train_rejects_corrupted_dataset_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, b"WRONGMAGICxxxxxxxxxx").unwrap();
    let out = run(&[
        "train",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("m.ckpt").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn eval_is_deterministic_and_detects_kind_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_holo(dir.path(), "d.bin", "2");
    let ckpt = dir.path().join("m.ckpt");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
        "--set",
        "train.epochs=2",
        "--set",
        "train.batch_size=10",
    ];
    args.extend_from_slice(MODEL_SMALL);
    assert_code(&run(&args), 0);

    for rep in ["r1", "r2"] {
        let out = run(&[
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--report",
            dir.path().join(rep).to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    let a = std::fs::read(dir.path().join("r1/metrics.csv")).unwrap();
    let b = std::fs::read(dir.path().join("r2/metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("r1/field_sample0.svg").exists());
    assert!(dir.path().join("r1/spectrum_sample0.svg").exists());

    // a FIM dataset cannot be evaluated with a holographic checkpoint
    let fim = dir.path().join("fim.bin");
    assert_code(
        &run(&[
            "gen",
            "fim",
            "--out",
            fim.to_str().unwrap(),
            "--set",
            "fim.n_train=3",
            "--set",
            "fim.n_test=2",
        ]),
        0,
    );
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        fim.to_str().unwrap(),
        "--report",
        dir.path().join("r3").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("holo") && err.contains("fim"), "{err}");

    // resolution flag must match the dataset grid
    let out = run(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--report",
        dir.path().join("r4").to_str().unwrap(),
        "--resolution",
        "64",
    ]);
    assert_code(&out, 2);
}

#[test]
fn cli_resume_reproduces_uninterrupted_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_holo(dir.path(), "d.bin", "5");
    let train = |out: &Path, resume: Option<&Path>, epochs: &str| {
        let mut args = vec![
            "train".to_string(),
            "--data".into(),
            data.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
            "--set".into(),
            format!("train.epochs={epochs}"),
            "--set".into(),
            "train.batch_size=10".into(),
        ];
        for s in MODEL_SMALL {
            args.push(s.to_string());
        }
        if let Some(r) = resume {
            args.push("--resume".into());
            args.push(r.to_str().unwrap().into());
        }
        let out = waveop().args(&args).output().unwrap();
        assert_code(&out, 0);
    };
    let full = dir.path().join("full.ckpt");
    train(&full, None, "4");
    let part = dir.path().join("part.ckpt");
    train(&part, None, "3");
    let resumed = dir.path().join("resumed.ckpt");
    train(&resumed, Some(&part), "4");
    assert_eq!(
        std::fs::read(&full).unwrap(),
        std::fs::read(&resumed).unwrap()
    );
}

#[test]
fn compare_produces_one_row_per_method_per_snr() {
    let dir = tempfile::tempdir().unwrap();
    let fim = dir.path().join("fim.bin");
    assert_code(
        &run(&[
            "gen",
            "fim",
            "--out",
            fim.to_str().unwrap(),
            "--set",
            "fim.n_train=6",
            "--set",
            "fim.n_test=3",
            "--set",
            "fim.pilots=3",
        ]),
        0,
    );
    let train_model = |out: &Path, modes: &str| {
        let args = vec![
            "train",
            "--data",
            fim.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--set",
            "train.epochs=2",
            "--set",
            "train.batch_size=6",
            "--set",
            "model.width=4",
            "--set",
            "model.layers=1",
            "--set",
            modes,
        ];
        assert_code(&run(&args), 0);
    };
    let fno = dir.path().join("fno.ckpt");
    train_model(&fno, "model.modes1=3");
    let local = dir.path().join("local.ckpt");
    let args = vec![
        "train",
        "--data",
        fim.to_str().unwrap(),
        "--out",
        local.to_str().unwrap(),
        "--set",
        "train.epochs=2",
        "--set",
        "train.batch_size=6",
        "--set",
        "model.width=4",
        "--set",
        "model.layers=1",
        "--set",
        "model.modes1=0",
        "--set",
        "model.modes2=0",
    ];
    assert_code(&run(&args), 0);

    let csv_path = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--scenarios",
        fim.to_str().unwrap(),
        "--ckpt",
        fno.to_str().unwrap(),
        "--local-ckpt",
        local.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
        "--snr-list",
        "0,10,20",
    ]);
    assert_code(&out, 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 5);

    // noise-free run: one SNR entry, nearest error is pure geometry error
    let nf_path = dir.path().join("nf.csv");
    let out = run(&[
        "compare",
        "--scenarios",
        fim.to_str().unwrap(),
        "--ckpt",
        fno.to_str().unwrap(),
        "--local-ckpt",
        local.to_str().unwrap(),
        "--out",
        nf_path.to_str().unwrap(),
        "--noise-free",
    ]);
    assert_code(&out, 0);
    let csv = std::fs::read_to_string(&nf_path).unwrap();
    assert_eq!(csv.lines().skip(1).count(), 5);

    // swapping the checkpoints is rejected: local must have modes = 0
    let out = run(&[
        "compare",
        "--scenarios",
        fim.to_str().unwrap(),
        "--ckpt",
        local.to_str().unwrap(),
        "--local-ckpt",
        fno.to_str().unwrap(),
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn gradcheck_subcommand_passes() {
    let out = run(&["gradcheck", "--stride", "23"]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gradient check passed"), "{text}");
    assert!(text.contains("input"), "{text}");
}
