//! The acceptance suite: every release criterion in one sequential run,
//! one pass/fail line per criterion (run with `--nocapture` to watch).
//!
//! The expensive artifacts (oracle datasets and trained checkpoints) are
//! deterministic functions of the command lines that build them, so they are
//! cached under `target/acceptance/` and reused between runs. Delete that
//! directory or set `WAVEOP_ACCEPTANCE_FRESH=1` for a cold run (a couple of
//! hours of single-core training).

use num_complex::Complex64;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use waveop_core::baselines::{knn_estimate, krr_estimate, median_pilot_distance, nearest_estimate, PilotSet};
use waveop_core::fft::fft2;
use waveop_core::fno::{FnoModel, Grads};
use waveop_core::metrics::spectrum_report;
use waveop_core::oracles::{holo_train_data, load_dataset, Dataset};
use waveop_core::tensor::ComplexView;
use waveop_core::trainer::{
    adam_step, evaluate_loss, load_checkpoint, AdamState, TrainConfig,
};

struct Outcome {
    criterion: usize,
    passed: bool,
    detail: String,
}

fn acceptance_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../target/acceptance");
    std::fs::create_dir_all(&dir).expect("create acceptance dir");
    dir
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_waveop"))
        .args(args)
        .output()
        .expect("spawn waveop");
    let code = out.status.code().unwrap_or(-1);
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (code, text)
}

fn ensure(path: &Path, build: impl FnOnce()) {
    if !path.exists() {
        build();
    }
    assert!(path.exists(), "artifact {} was not built", path.display());
}

/// Shared artifact paths; built on demand, reused across criteria.
struct Artifacts {
    holo32: PathBuf,
    holo64: PathBuf,
    fno32: PathBuf,
    fim: PathBuf,
    fim_fno: PathBuf,
    fim_local: PathBuf,
}

impl Artifacts {
    fn prepare() -> Artifacts {
        let dir = acceptance_dir();
        if std::env::var("WAVEOP_ACCEPTANCE_FRESH").as_deref() == Ok("1") {
            let _ = std::fs::remove_dir_all(&dir);
            std::fs::create_dir_all(&dir).expect("recreate acceptance dir");
        }
        let a = Artifacts {
            holo32: dir.join("holo32.bin"),
            holo64: dir.join("holo64.bin"),
            fno32: dir.join("fno32.ckpt"),
            fim: dir.join("fim.bin"),
            fim_fno: dir.join("fim_fno.ckpt"),
            fim_local: dir.join("fim_local.ckpt"),
        };
        ensure(&a.holo32, || {
            let (code, out) = cli(&["gen", "holo", "--out", a.holo32.to_str().unwrap(), "--seed", "0"]);
            assert_eq!(code, 0, "{out}");
        });
        ensure(&a.holo64, || {
            let (code, out) = cli(&[
                "gen", "holo", "--out", a.holo64.to_str().unwrap(), "--seed", "1",
                "--set", "geometry.grid=64",
                "--set", "geometry.n_train=0",
                "--set", "geometry.n_test=200",
            ]);
            assert_eq!(code, 0, "{out}");
        });
        ensure(&a.fno32, || {
            let loss = acceptance_dir().join("fno32.loss.csv");
            let (code, out) = cli(&[
                "train", "--data", a.holo32.to_str().unwrap(),
                "--out", a.fno32.to_str().unwrap(),
                "--loss-csv", loss.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "{out}");
        });
        ensure(&a.fim, || {
            let (code, out) = cli(&["gen", "fim", "--out", a.fim.to_str().unwrap(), "--seed", "0"]);
            assert_eq!(code, 0, "{out}");
        });
        ensure(&a.fim_fno, || {
            let loss = acceptance_dir().join("fim_fno.loss.csv");
            let (code, out) = cli(&[
                "train", "--data", a.fim.to_str().unwrap(),
                "--out", a.fim_fno.to_str().unwrap(),
                "--loss-csv", loss.to_str().unwrap(),
                "--set", "train.epochs=150",
            ]);
            assert_eq!(code, 0, "{out}");
        });
        ensure(&a.fim_local, || {
            let loss = acceptance_dir().join("fim_local.loss.csv");
            let (code, out) = cli(&[
                "train", "--data", a.fim.to_str().unwrap(),
                "--out", a.fim_local.to_str().unwrap(),
                "--loss-csv", loss.to_str().unwrap(),
                "--set", "train.epochs=150",
                "--set", "model.modes1=0",
                "--set", "model.modes2=0",
            ]);
            assert_eq!(code, 0, "{out}");
        });
        a
    }
}

// ---------------------------------------------------------------------------
// criteria

/// 1. Gradient correctness via the gradcheck subcommand, full sweep.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (code, out) = cli(&["gradcheck"]);
    let secs = start.elapsed().as_secs_f64();
    let max_err = out
        .lines()
        .find_map(|l| l.strip_prefix("max relative error: "))
        .and_then(|v| v.trim().parse::<f64>().ok())
        .unwrap_or(f64::NAN);
    let passed = code == 0 && max_err < 1e-5 && secs < 60.0;
    Outcome {
        criterion: 1,
        passed,
        detail: format!("gradcheck max rel err {max_err:.3e} (< 1e-5), {secs:.1} s (< 60 s)"),
    }
}

/// 2. FFT equals the direct-DFT oracle; Parseval and inverse identity.
fn criterion_2() -> Outcome {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let mut worst_oracle: f64 = 0.0;
    for &n in &[2usize, 4, 8, 16] {
        let mut rng = StdRng::seed_from_u64(n as u64);
        let pairs: Vec<f64> = (0..n * n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = ComplexView::from_pairs(&[n, n], pairs).unwrap();
        let spec = fft2(&field).unwrap();
        for k1 in 0..n {
            for k2 in 0..n {
                let mut acc = Complex64::default();
                for x in 0..n {
                    for y in 0..n {
                        let ph = -2.0 * std::f64::consts::PI
                            * (k1 as f64 * x as f64 / n as f64 + k2 as f64 * y as f64 / n as f64);
                        acc += Complex64::new(field.re(x * n + y), field.im(x * n + y))
                            * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                let lin = k1 * n + k2;
                let d = Complex64::new(spec.view().re(lin) - acc.re, spec.view().im(lin) - acc.im);
                worst_oracle = worst_oracle.max(d.norm());
            }
        }
    }

    let mut worst_parseval: f64 = 0.0;
    let mut worst_inverse: f64 = 0.0;
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..100 {
        let pairs: Vec<f64> = (0..32 * 32 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = ComplexView::from_pairs(&[32, 32], pairs).unwrap();
        let spec = fft2(&field).unwrap();
        let grid: f64 = field.data().iter().map(|v| v * v).sum();
        let freq: f64 = spec.view().data().iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max(((grid - freq / 1024.0) / grid).abs());
        let back = waveop_core::fft::ifft2(&spec).unwrap();
        let inv_err = field
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst_inverse = worst_inverse.max(inv_err);
    }
    let passed = worst_oracle < 1e-9 && worst_parseval < 1e-10 && worst_inverse < 1e-10;
    Outcome {
        criterion: 2,
        passed,
        detail: format!(
            "direct-DFT max err {worst_oracle:.2e} (< 1e-9), Parseval {worst_parseval:.2e}, inverse {worst_inverse:.2e} (< 1e-10)"
        ),
    }
}

/// 3. Holographic surrogate accuracy: test relative L2 <= 0.05 after the
/// pinned 1000-sample / 200-epoch training run.
fn criterion_3(a: &Artifacts) -> Outcome {
    let ckpt = load_checkpoint(&a.fno32).expect("checkpoint");
    let epochs = ckpt.meta("train.epoch").unwrap_or("?").to_string();
    let ds = match load_dataset(&a.holo32).expect("dataset") {
        Dataset::Holo(h) => h,
        _ => panic!("wrong dataset kind"),
    };
    assert_eq!(ds.n_train, 1000);
    assert_eq!(ds.n_test, 200);
    let test = holo_train_data(&ds, ds.n_train..ds.n_train + ds.n_test);
    let rel = evaluate_loss(&ckpt.model, &test).expect("eval");
    let passed = rel <= 0.05 && epochs == "200";
    Outcome {
        criterion: 3,
        passed,
        detail: format!("test relative L2 {rel:.4} (<= 0.05) after {epochs} epochs on 1000 samples"),
    }
}

/// 4. Spectral concentration: per-sample |disk(pred) - disk(truth)| <= 0.02
/// and mean truth ratio >= 0.95.
fn criterion_4(a: &Artifacts) -> Outcome {
    let ckpt = load_checkpoint(&a.fno32).expect("checkpoint");
    let ds = match load_dataset(&a.holo32).expect("dataset") {
        Dataset::Holo(h) => h,
        _ => panic!("wrong dataset kind"),
    };
    let pitch = ds.geometry.receive_pitch();
    let k0 = ds.geometry.k0();
    let s = ds.geometry.grid;
    let pixels = s * s;
    let mut truth_sum = 0.0;
    let mut worst_diff: f64 = 0.0;
    let mut count = 0usize;
    for sample in &ds.samples[ds.n_train..] {
        let input = vec![waveop_core::oracles::deinterleave(sample.current.data(), pixels)];
        let pred_planes = ckpt.model.forward_fields(&input, s, s).expect("forward");
        let pred = ComplexView::from_pairs(
            &[s, s],
            waveop_core::oracles::interleave(&pred_planes[0], pixels),
        )
        .unwrap();
        let truth_ratio = spectrum_report(&sample.field, pitch, k0).unwrap().disk_ratio;
        let pred_ratio = spectrum_report(&pred, pitch, k0).unwrap().disk_ratio;
        truth_sum += truth_ratio;
        worst_diff = worst_diff.max((truth_ratio - pred_ratio).abs());
        count += 1;
    }
    let mean_truth = truth_sum / count as f64;
    let passed = worst_diff <= 0.02 && mean_truth >= 0.95;
    Outcome {
        criterion: 4,
        passed,
        detail: format!(
            "max |disk(pred)-disk(truth)| {worst_diff:.4} (<= 0.02), mean truth ratio {mean_truth:.4} (>= 0.95), {count} samples"
        ),
    }
}

/// 5. Inference speed: mean single-sample forward at 32x32 <= 50 ms,
/// single-threaded.
fn criterion_5(a: &Artifacts) -> Outcome {
    let ckpt = load_checkpoint(&a.fno32).expect("checkpoint");
    let ds = match load_dataset(&a.holo32).expect("dataset") {
        Dataset::Holo(h) => h,
        _ => panic!("wrong dataset kind"),
    };
    let s = ds.geometry.grid;
    let input = vec![waveop_core::oracles::deinterleave(
        ds.samples[ds.n_train].current.data(),
        s * s,
    )];
    for _ in 0..3 {
        let _ = ckpt.model.forward_fields(&input, s, s).unwrap();
    }
    let reps = 30;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = ckpt.model.forward_fields(&input, s, s).unwrap();
    }
    let mean_ms = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;
    Outcome {
        criterion: 5,
        passed: mean_ms <= 50.0,
        detail: format!("mean per-instance inference {mean_ms:.2} ms (<= 50 ms), {reps} runs"),
    }
}

/// 6. Resolution transfer: the 32-trained model on 64x64 oracle data stays
/// within 2x its 32x32 test error, with no retraining.
fn criterion_6(a: &Artifacts) -> Outcome {
    let ckpt = load_checkpoint(&a.fno32).expect("checkpoint");
    let ds32 = match load_dataset(&a.holo32).expect("dataset") {
        Dataset::Holo(h) => h,
        _ => panic!("wrong kind"),
    };
    let test32 = holo_train_data(&ds32, ds32.n_train..ds32.n_train + ds32.n_test);
    let rel32 = evaluate_loss(&ckpt.model, &test32).expect("eval 32");

    let ds64 = match load_dataset(&a.holo64).expect("dataset") {
        Dataset::Holo(h) => h,
        _ => panic!("wrong kind"),
    };
    assert_eq!(ds64.geometry.grid, 64);
    let test64 = holo_train_data(&ds64, 0..ds64.samples.len());
    let rel64 = evaluate_loss(&ckpt.model, &test64).expect("eval 64");
    let passed = rel64 <= 2.0 * rel32;
    Outcome {
        criterion: 6,
        passed,
        detail: format!(
            "relative L2 at 64x64 {rel64:.4} vs 32x32 {rel32:.4} (ratio {:.2}, <= 2)",
            rel64 / rel32
        ),
    }
}

/// 7. FIM comparison: FNO strictly beats nearest/KNN/KRR/local-only at every
/// SNR >= 5 dB; FNO NMSE non-increasing in SNR within 0.3 dB.
fn criterion_7(a: &Artifacts) -> Outcome {
    let csv_path = acceptance_dir().join("compare.csv");
    let (code, out) = cli(&[
        "compare",
        "--scenarios", a.fim.to_str().unwrap(),
        "--ckpt", a.fim_fno.to_str().unwrap(),
        "--local-ckpt", a.fim_local.to_str().unwrap(),
        "--out", csv_path.to_str().unwrap(),
        "--snr-list", "0,5,10,15,20",
    ]);
    assert_eq!(code, 0, "{out}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut table: std::collections::BTreeMap<(i64, String), f64> = Default::default();
    for line in csv.lines().skip(1) {
        let mut parts = line.split(',');
        let snr: f64 = parts.next().unwrap().parse().unwrap();
        let method = parts.next().unwrap().to_string();
        let nmse: f64 = parts.next().unwrap().parse().unwrap();
        table.insert((snr as i64, method), nmse);
    }
    let snrs = [0i64, 5, 10, 15, 20];
    let fno: Vec<f64> = snrs.iter().map(|s| table[&(*s, "fno".to_string())]).collect();

    let mut beats_all = true;
    let mut worst_margin = f64::INFINITY;
    for (i, &snr) in snrs.iter().enumerate() {
        if snr < 5 {
            continue;
        }
        for method in ["nearest", "knn", "krr", "localmlp"] {
            let margin = table[&(snr, method.to_string())] - fno[i];
            worst_margin = worst_margin.min(margin);
            if margin <= 0.0 {
                beats_all = false;
            }
        }
    }
    let mut monotone = true;
    for i in 1..fno.len() {
        if fno[i] > fno[i - 1] + 0.3 {
            monotone = false;
        }
    }
    let passed = beats_all && monotone;
    Outcome {
        criterion: 7,
        passed,
        detail: format!(
            "FNO nmse dB {:?}; min margin over baselines at snr>=5: {worst_margin:.2} dB (> 0); monotone within 0.3 dB: {monotone}",
            fno.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    }
}

/// 8. Baseline exactness: knn(1) == nearest on 1e4 queries, KRR interpolates
/// with zero ridge, and the Adam two-step hand trace matches to 1e-12.
fn criterion_8() -> Outcome {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let mut rng = StdRng::seed_from_u64(7);
    let m = 9;
    let dim = 12;
    let pilots = PilotSet::new(
        (0..m)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        (0..m)
            .map(|_| (0..2 * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap();
    let mut knn_matches = true;
    for _ in 0..10_000 {
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if knn_estimate(&pilots, &q, 1).unwrap() != nearest_estimate(&pilots, &q) {
            knn_matches = false;
            break;
        }
    }

    let ell = median_pilot_distance(&pilots);
    let mut worst_resid: f64 = 0.0;
    for i in 0..m {
        let out = krr_estimate(&pilots, &pilots.deformations[i], ell, 0.0).unwrap();
        let resid = out
            .iter()
            .zip(&pilots.measurements[i])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst_resid = worst_resid.max(resid);
    }

    // Adam hand trace on a fresh parameter set with unit gradients
    let tiny = waveop_core::fno::FnoConfig {
        in_channels: 1,
        out_channels: 1,
        width: 2,
        layers: 1,
        modes1: 2,
        modes2: 2,
        append_coords: false,
    };
    let mut model = FnoModel::zeros(tiny).unwrap();
    let mut state = AdamState::new(&model);
    let grads = Grads {
        blocks: model.blocks.iter().map(|b| vec![1.0; b.len()]).collect(),
        input: Vec::new(),
    };
    let tc = TrainConfig {
        lr: 0.1,
        grad_clip_norm: 0.0,
        ..TrainConfig::default()
    };
    adam_step(&mut model, &grads, &mut state, &tc, tc.lr).unwrap();
    adam_step(&mut model, &grads, &mut state, &tc, tc.lr).unwrap();
    let (lr, b1, b2, eps): (f64, f64, f64, f64) = (0.1, 0.9, 0.999, 1e-8);
    let (mut mt, mut vt, mut theta) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=2i32 {
        mt = b1 * mt + (1.0 - b1);
        vt = b2 * vt + (1.0 - b2);
        theta -= lr * (mt / (1.0 - b1.powi(t))) / ((vt / (1.0 - b2.powi(t))).sqrt() + eps);
    }
    let adam_err = (model.blocks[0].data[0] - theta).abs();

    let passed = knn_matches && worst_resid < 1e-8 && adam_err < 1e-12;
    Outcome {
        criterion: 8,
        passed,
        detail: format!(
            "knn(1)==nearest over 1e4 queries: {knn_matches}; KRR zero-ridge residual {worst_resid:.2e} (< 1e-8); Adam trace err {adam_err:.2e} (< 1e-12)"
        ),
    }
}

/// 9. Determinism and persistence: byte-identical datasets, checkpoints and
/// CSVs across repeated runs; bit-exact resume equivalence.
fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let small: &[&str] = &[
        "--set", "geometry.grid=16",
        "--set", "geometry.receive_wl=4",
        "--set", "geometry.cutoff=4",
        "--set", "geometry.n_train=24",
        "--set", "geometry.n_test=6",
    ];
    let model_small: &[&str] = &[
        "--set", "model.width=6",
        "--set", "model.layers=2",
        "--set", "model.modes1=3",
        "--set", "model.modes2=3",
        "--set", "train.batch_size=8",
    ];

    let gen = |out: &Path| {
        let mut args = vec!["gen", "holo", "--out", out.to_str().unwrap(), "--seed", "11"];
        args.extend_from_slice(small);
        assert_eq!(cli(&args).0, 0);
    };
    gen(&p("d1.bin"));
    gen(&p("d2.bin"));
    let data_ok = std::fs::read(p("d1.bin")).unwrap() == std::fs::read(p("d2.bin")).unwrap();

    let train = |data: &Path, out: &Path, loss: &Path, epochs: &str, resume: Option<&Path>| {
        let ep = format!("train.epochs={epochs}");
        let mut args = vec![
            "train",
            "--data", data.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--loss-csv", loss.to_str().unwrap(),
            "--set", &ep,
        ];
        args.extend_from_slice(model_small);
        if let Some(r) = resume {
            args.push("--resume");
            args.push(r.to_str().unwrap());
        }
        let (code, out_text) = cli(&args);
        assert_eq!(code, 0, "{out_text}");
    };
    train(&p("d1.bin"), &p("m1.ckpt"), &p("l1.csv"), "12", None);
    train(&p("d1.bin"), &p("m2.ckpt"), &p("l2.csv"), "12", None);
    let ckpt_ok = std::fs::read(p("m1.ckpt")).unwrap() == std::fs::read(p("m2.ckpt")).unwrap();
    let loss_ok = std::fs::read(p("l1.csv")).unwrap() == std::fs::read(p("l2.csv")).unwrap();

    // resume equivalence: 7 epochs, then 5 more, equals one 12-epoch run
    train(&p("d1.bin"), &p("part.ckpt"), &p("lp.csv"), "7", None);
    train(&p("d1.bin"), &p("resumed.ckpt"), &p("lr.csv"), "12", Some(&p("part.ckpt")));
    let resume_ok =
        std::fs::read(p("m1.ckpt")).unwrap() == std::fs::read(p("resumed.ckpt")).unwrap();
    // the combined loss logs match the uninterrupted one row for row
    let l1 = std::fs::read_to_string(p("l1.csv")).unwrap();
    let lp = std::fs::read_to_string(p("lp.csv")).unwrap();
    let lr = std::fs::read_to_string(p("lr.csv")).unwrap();
    let combined: Vec<&str> = lp.lines().skip(1).chain(lr.lines().skip(1)).collect();
    let log_ok = combined == l1.lines().skip(1).collect::<Vec<_>>();

    let (ckpt1, data1) = (p("m1.ckpt"), p("d1.bin"));
    let eval = |rep: &str| {
        let report = p(rep);
        let args = vec![
            "eval",
            "--ckpt", ckpt1.to_str().unwrap(),
            "--data", data1.to_str().unwrap(),
            "--report", report.to_str().unwrap(),
        ];
        assert_eq!(cli(&args).0, 0);
    };
    eval("r1");
    eval("r2");
    let eval_ok = std::fs::read(p("r1").join("metrics.csv")).unwrap()
        == std::fs::read(p("r2").join("metrics.csv")).unwrap();

    let passed = data_ok && ckpt_ok && loss_ok && resume_ok && log_ok && eval_ok;
    Outcome {
        criterion: 9,
        passed,
        detail: format!(
            "datasets {data_ok}, checkpoints {ckpt_ok}, loss logs {loss_ok}, resume bit-exact {resume_ok}, combined log {log_ok}, eval CSV {eval_ok}"
        ),
    }
}

#[test]
fn acceptance() {
    let artifacts = Artifacts::prepare();
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(&artifacts),
        criterion_4(&artifacts),
        criterion_5(&artifacts),
        criterion_6(&artifacts),
        criterion_7(&artifacts),
        criterion_8(),
        criterion_9(),
    ];
    let mut failed = Vec::new();
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {} {}: {}", o.criterion, tag, o.detail);
        if !o.passed {
            failed.push(format!("criterion {}: {}", o.criterion, o.detail));
        }
    }
    assert!(
        failed.is_empty(),
        "acceptance criteria failed:\n{}",
        failed.join("\n")
    );
}
