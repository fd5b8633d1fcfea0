//! Command-line harness: `gen`, `train`, `eval`, `compare`, `gradcheck`.
//!
//! Exit codes: 0 success, 2 usage/config errors, 3 I/O or file-format
//! errors, 4 numerical failures. All outputs are byte-reproducible for
//! identical flags, configs and seeds; wall-clock measurements go to stdout
//! as `# timing` comment lines only.

use crate::baselines::{
    knn_estimate, krr_estimate, localmlp_estimate, median_pilot_distance, nearest_estimate,
    PilotSet, KNN_DEFAULT_K, KRR_DEFAULT_RIDGE,
};
use crate::config::{help_text, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fno::FnoModel;
use crate::gradcheck;
use crate::metrics::{aggregate_nmse_db, nmse, spectrum_report};
use crate::oracles::{
    fim_input_channels, fim_train_data, gen_fim_scenarios, gen_holo_dataset, holo_train_data,
    interleave, load_dataset, measurements_at_snr, save_dataset, Dataset, FimDataset, SnrSpec,
    FIM_GRID,
};
use crate::report::{compare_csv, eval_csv, spectrum_svg, three_panel_svg, write_text, EvalRow};
use crate::tensor::{ComplexView, Tensor};
use crate::trainer::{
    evaluate_loss, load_checkpoint, loss_log_csv, save_checkpoint, train, AdamState, Checkpoint,
    TrainData,
};
use clap::{Arg, ArgAction, ArgMatches, Command};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn main() -> i32 {
    let cmd = build_cli();
    let matches = cmd.get_matches();
    match run(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn config_args() -> [Arg; 2] {
    [
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key=value config file (see the key list below)"),
        Arg::new("set")
            .long("set")
            .value_name("KEY=VALUE")
            .action(ArgAction::Append)
            .help("override one config key"),
    ]
}

fn build_cli() -> Command {
    let keys = help_text();
    Command::new("waveop")
        .about("Fourier neural operator toolkit for wave-domain channel modeling")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("gen")
                .about("Generate a physics-oracle dataset")
                .after_help(keys.clone())
                .arg(
                    Arg::new("kind")
                        .required(true)
                        .value_parser(["holo", "fim"])
                        .help("dataset kind: holographic channel pairs or FIM scenarios"),
                )
                .arg(Arg::new("out").long("out").value_name("PATH").required(true))
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("U64")
                        .default_value("0"),
                )
                .arg(
                    Arg::new("snr-db")
                        .long("snr-db")
                        .value_name("SPEC")
                        .help("FIM measurement SNR: value, lo:hi, or inf"),
                )
                .args(config_args()),
        )
        .subcommand(
            Command::new("train")
                .about("Train the operator model on a dataset")
                .after_help(keys.clone())
                .arg(Arg::new("data").long("data").value_name("PATH").required(true))
                .arg(Arg::new("out").long("out").value_name("CKPT").required(true))
                .arg(
                    Arg::new("resume")
                        .long("resume")
                        .value_name("CKPT")
                        .help("continue from a checkpoint up to train.epochs total epochs"),
                )
                .arg(
                    Arg::new("loss-csv")
                        .long("loss-csv")
                        .value_name("PATH")
                        .help("loss log path (default: <out>.loss.csv)"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("U64")
                        .help("override train.seed"),
                )
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint and write metrics and figures")
                .after_help(keys.clone())
                .arg(Arg::new("ckpt").long("ckpt").value_name("CKPT").required(true))
                .arg(Arg::new("data").long("data").value_name("PATH").required(true))
                .arg(Arg::new("report").long("report").value_name("DIR").required(true))
                .arg(
                    Arg::new("split")
                        .long("split")
                        .value_parser(["test", "train", "all"])
                        .default_value("test"),
                )
                .arg(
                    Arg::new("resolution")
                        .long("resolution")
                        .value_name("N")
                        .help("require the dataset grid to be N (transfer runs)"),
                )
                .args(config_args()),
        )
        .subcommand(
            Command::new("compare")
                .about("Compare estimators on FIM scenarios across an SNR sweep")
                .after_help(keys)
                .arg(
                    Arg::new("scenarios")
                        .long("scenarios")
                        .value_name("PATH")
                        .required(true),
                )
                .arg(Arg::new("ckpt").long("ckpt").value_name("CKPT").required(true))
                .arg(
                    Arg::new("local-ckpt")
                        .long("local-ckpt")
                        .value_name("CKPT")
                        .required(true)
                        .help("checkpoint of the local-only ablation"),
                )
                .arg(Arg::new("out").long("out").value_name("CSV").required(true))
                .arg(
                    Arg::new("snr-list")
                        .long("snr-list")
                        .value_name("LIST")
                        .default_value("0,5,10,15,20"),
                )
                .arg(
                    Arg::new("noise-free")
                        .long("noise-free")
                        .action(ArgAction::SetTrue)
                        .help("disable measurement noise instead of sweeping SNR"),
                )
                .args(config_args()),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Finite-difference check of every analytic gradient")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("U64")
                        .default_value("17"),
                )
                .arg(
                    Arg::new("stride")
                        .long("stride")
                        .value_name("N")
                        .default_value("1")
                        .help("check every Nth entry (1 = all)"),
                ),
        )
}

fn run(matches: &ArgMatches) -> Result<()> {
    match matches.subcommand() {
        Some(("gen", m)) => cmd_gen(m),
        Some(("train", m)) => cmd_train(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("compare", m)) => cmd_compare(m),
        Some(("gradcheck", m)) => cmd_gradcheck(m),
        _ => unreachable!("subcommand required"),
    }
}

fn load_config(matches: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = match matches.get_one::<String>("config") {
        Some(path) => ExperimentConfig::load(Path::new(path))?,
        None => ExperimentConfig::default(),
    };
    if let Some(overrides) = matches.get_many::<String>("set") {
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set needs KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
    }
    Ok(cfg)
}

fn parse_flag<T: std::str::FromStr>(matches: &ArgMatches, name: &str) -> Result<Option<T>> {
    match matches.get_one::<String>(name) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad value '{raw}' for --{name}"))),
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn timing_stats(durations_ms: &[f64]) -> (f64, f64) {
    let mean = durations_ms.iter().sum::<f64>() / durations_ms.len().max(1) as f64;
    let mut sorted = durations_ms.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = if sorted.is_empty() {
        0.0
    } else {
        sorted[((sorted.len() as f64 * 0.95) as usize).min(sorted.len() - 1)]
    };
    (mean, p95)
}

// ---------------------------------------------------------------------------
// gen

fn cmd_gen(matches: &ArgMatches) -> Result<()> {
    let cfg = load_config(matches)?;
    let kind = matches.get_one::<String>("kind").expect("required");
    let seed: u64 = parse_flag(matches, "seed")?.expect("has default");
    let out = PathBuf::from(matches.get_one::<String>("out").expect("required"));

    let start = Instant::now();
    let (dataset, n_samples) = match kind.as_str() {
        "holo" => {
            let geom = cfg.geometry()?;
            let n_train: usize = cfg.parse_value("geometry.n_train")?;
            let n_test: usize = cfg.parse_value("geometry.n_test")?;
            let cutoff: usize = cfg.parse_value("geometry.cutoff")?;
            let ds = gen_holo_dataset(&geom, n_train, n_test, cutoff, seed)?;
            (Dataset::Holo(ds), n_train + n_test)
        }
        "fim" => {
            let snr_text = match matches.get_one::<String>("snr-db") {
                Some(s) => s.clone(),
                None => cfg.get("fim.snr_db").to_string(),
            };
            let snr = SnrSpec::parse(&snr_text)?;
            let n_train: usize = cfg.parse_value("fim.n_train")?;
            let n_test: usize = cfg.parse_value("fim.n_test")?;
            let pilots: usize = cfg.parse_value("fim.pilots")?;
            let paths: usize = cfg.parse_value("fim.paths")?;
            let pilot_seed: u64 = cfg.parse_value("fim.pilot_seed")?;
            let wavelength: f64 = cfg.parse_value("geometry.wavelength")?;
            let ds = gen_fim_scenarios(
                n_train, n_test, pilots, paths, snr, wavelength, seed, pilot_seed,
            )?;
            (Dataset::Fim(ds), n_train + n_test)
        }
        other => return Err(Error::Config(format!("unknown dataset kind '{other}'"))),
    };
    save_dataset(&dataset, &out)?;
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let per_sample = total_ms / n_samples as f64;
    println!(
        "wrote {} samples to {} ({} kind)",
        n_samples,
        out.display(),
        dataset.kind_name()
    );
    println!("# timing oracle total_ms={total_ms:.1} per_sample_ms={per_sample:.3}");
    Ok(())
}

// ---------------------------------------------------------------------------
// train

/// Channel counts implied by a dataset kind.
fn encoding_of(ds: &Dataset) -> (usize, usize, usize, String) {
    match ds {
        Dataset::Holo(h) => (2, 2, h.geometry.grid, "holo".to_string()),
        Dataset::Fim(f) => (3 * f.pilots.len() + 1, 2, FIM_GRID, "fim".to_string()),
    }
}

fn split_data(ds: &Dataset, split: &str) -> TrainData {
    let (n_train, total) = match ds {
        Dataset::Holo(h) => (h.n_train, h.samples.len()),
        Dataset::Fim(f) => (f.n_train, f.scenarios.len()),
    };
    let range = match split {
        "train" => 0..n_train,
        "test" => n_train..total,
        _ => 0..total,
    };
    match ds {
        Dataset::Holo(h) => holo_train_data(h, range),
        Dataset::Fim(f) => fim_train_data(f, range),
    }
}

fn cmd_train(matches: &ArgMatches) -> Result<()> {
    let cfg = load_config(matches)?;
    let data_path = PathBuf::from(matches.get_one::<String>("data").expect("required"));
    let out = PathBuf::from(matches.get_one::<String>("out").expect("required"));
    let loss_csv_path = matches
        .get_one::<String>("loss-csv")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            let mut p = out.clone();
            p.set_extension("loss.csv");
            p
        });

    let dataset = load_dataset(&data_path)?;
    let data_hash = file_sha256(&data_path)?;
    let (in_ch, out_ch, grid, kind) = encoding_of(&dataset);
    let train_data = split_data(&dataset, "train");
    let test_data = split_data(&dataset, "test");
    if train_data.inputs.is_empty() {
        return Err(Error::Config("dataset has no training split".into()));
    }

    let mut train_cfg = cfg.train()?;
    if let Some(seed) = parse_flag::<u64>(matches, "seed")? {
        train_cfg.seed = seed;
    }

    let (model, adam, start_epoch) = match matches.get_one::<String>("resume") {
        Some(ckpt_path) => {
            let ckpt = load_checkpoint(Path::new(ckpt_path))?;
            if ckpt.meta("data.kind") != Some(kind.as_str()) {
                return Err(Error::Config(format!(
                    "checkpoint was trained on '{}' data, dataset is '{}'",
                    ckpt.meta("data.kind").unwrap_or("?"),
                    kind
                )));
            }
            if let Some(h) = ckpt.meta("data.sha256") {
                if h != data_hash {
                    return Err(Error::Config(
                        "checkpoint was trained on a different dataset (hash mismatch)".into(),
                    ));
                }
            }
            let epoch = ckpt.epoch();
            if epoch >= train_cfg.epochs {
                return Err(Error::Config(format!(
                    "checkpoint is already at epoch {epoch} >= train.epochs {}",
                    train_cfg.epochs
                )));
            }
            (ckpt.model, ckpt.adam, epoch)
        }
        None => {
            let model_cfg = cfg.model(in_ch, out_ch, grid)?;
            let model = FnoModel::init(model_cfg, train_cfg.seed)?;
            let adam = AdamState::new(&model);
            (model, adam, 0)
        }
    };

    // train.epochs is the total target; a resumed run does the remainder
    let mut run_cfg = train_cfg.clone();
    run_cfg.epochs = train_cfg.epochs - start_epoch;

    let started = Instant::now();
    let outcome = train(
        model,
        adam,
        start_epoch,
        &train_data,
        &test_data,
        &run_cfg,
        |entry| match entry.test_loss {
            Some(t) => println!(
                "epoch {} train_loss {:.6} test_loss {:.6}",
                entry.epoch, entry.train_loss, t
            ),
            None => println!("epoch {} train_loss {:.6}", entry.epoch, entry.train_loss),
        },
    )?;
    let wall_s = started.elapsed().as_secs_f64();

    let mut meta = vec![
        ("data.kind".to_string(), kind.clone()),
        ("data.sha256".to_string(), data_hash),
        ("data.grid".to_string(), grid.to_string()),
        ("train.epoch".to_string(), outcome.epoch.to_string()),
        ("train.seed".to_string(), train_cfg.seed.to_string()),
        ("train.loss".to_string(), outcome.final_train_loss.to_string()),
        ("test.loss".to_string(), outcome.final_test_loss.to_string()),
    ];
    if let Dataset::Fim(f) = &dataset {
        meta.push(("fim.pilots".to_string(), f.pilots.len().to_string()));
    }
    let ckpt = Checkpoint::new(outcome.model, outcome.adam, meta);
    save_checkpoint(&ckpt, &out)?;
    write_text(&loss_csv_path, &loss_log_csv(&outcome.log))?;
    println!(
        "trained to epoch {}: train_loss {:.6} test_loss {:.6}",
        outcome.epoch, outcome.final_train_loss, outcome.final_test_loss
    );
    println!("checkpoint: {}", out.display());
    println!("loss log: {}", loss_csv_path.display());
    println!("# timing train wall_s={wall_s:.1}");
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(matches: &ArgMatches) -> Result<()> {
    let cfg = load_config(matches)?;
    let ckpt_path = PathBuf::from(matches.get_one::<String>("ckpt").expect("required"));
    let data_path = PathBuf::from(matches.get_one::<String>("data").expect("required"));
    let report_dir = PathBuf::from(matches.get_one::<String>("report").expect("required"));
    let split = matches.get_one::<String>("split").expect("default");

    let ckpt = load_checkpoint(&ckpt_path)?;
    let dataset = load_dataset(&data_path)?;
    let (in_ch, out_ch, grid, kind) = encoding_of(&dataset);
    if ckpt.meta("data.kind") != Some(kind.as_str()) {
        return Err(Error::Config(format!(
            "checkpoint encodes '{}' data, dataset is '{}'",
            ckpt.meta("data.kind").unwrap_or("?"),
            kind
        )));
    }
    if ckpt.config.in_channels != in_ch || ckpt.config.out_channels != out_ch {
        return Err(Error::Config(format!(
            "checkpoint channels ({}, {}) do not match dataset encoding ({in_ch}, {out_ch})",
            ckpt.config.in_channels, ckpt.config.out_channels
        )));
    }
    let flag_res: Option<usize> = parse_flag(matches, "resolution")?;
    let cfg_res: usize = cfg.parse_value("eval.resolution")?;
    let want_res = flag_res.unwrap_or(cfg_res);
    if want_res != 0 && want_res != grid {
        return Err(Error::Config(format!(
            "--resolution {want_res} but the dataset grid is {grid}"
        )));
    }

    let data = split_data(&dataset, split);
    if data.inputs.is_empty() {
        return Err(Error::Config(format!("split '{split}' is empty")));
    }
    std::fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;

    // per-sample inference, timed individually
    let mut rows = Vec::with_capacity(data.inputs.len());
    let mut linears = Vec::with_capacity(data.inputs.len());
    let mut times_ms = Vec::with_capacity(data.inputs.len());
    let mut predictions: Vec<Vec<f64>> = Vec::with_capacity(data.inputs.len());
    for input in &data.inputs {
        let batch = std::slice::from_ref(input);
        let t0 = Instant::now();
        let out = ckpt.model.forward_fields(batch, data.h, data.w)?;
        times_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        predictions.push(out.into_iter().next().expect("one output"));
    }

    let pixels = data.h * data.w;
    let holo_geom = match &dataset {
        Dataset::Holo(h) => Some(h.geometry.clone()),
        Dataset::Fim(_) => None,
    };
    for (idx, (pred, truth)) in predictions.iter().zip(&data.targets).enumerate() {
        let (linear, db) = nmse(pred, truth)?;
        linears.push(linear);
        let (mut truth_ratio, mut pred_ratio) = (None, None);
        if let Some(geom) = &holo_geom {
            let truth_view = ComplexView::from_pairs(&[data.h, data.w], interleave(truth, pixels))?;
            let pred_view = ComplexView::from_pairs(&[data.h, data.w], interleave(pred, pixels))?;
            let pitch = geom.receive_wl * geom.wavelength / data.h as f64;
            truth_ratio = Some(spectrum_report(&truth_view, pitch, geom.k0())?.disk_ratio);
            pred_ratio = Some(spectrum_report(&pred_view, pitch, geom.k0())?.disk_ratio);
        }
        rows.push(EvalRow {
            sample_id: idx,
            nmse_linear: linear,
            nmse_db: db,
            disk_ratio_truth: truth_ratio,
            disk_ratio_pred: pred_ratio,
        });
    }

    write_text(
        &report_dir.join("metrics.csv"),
        &eval_csv(&rows, holo_geom.is_some()),
    )?;

    if let Some(geom) = &holo_geom {
        if cfg.parse_bool("eval.svg")? {
            let truth_view =
                ComplexView::from_pairs(&[data.h, data.w], interleave(&data.targets[0], pixels))?;
            let pred_view =
                ComplexView::from_pairs(&[data.h, data.w], interleave(&predictions[0], pixels))?;
            let modulus = |v: &ComplexView| -> Tensor {
                Tensor::from_vec(
                    &[data.h, data.w],
                    (0..pixels)
                        .map(|l| (v.re(l) * v.re(l) + v.im(l) * v.im(l)).sqrt())
                        .collect(),
                )
                .expect("shape")
            };
            let err = crate::metrics::error_map(&pred_view, &truth_view)?;
            write_text(
                &report_dir.join("field_sample0.svg"),
                &three_panel_svg(&modulus(&truth_view), &modulus(&pred_view), &err),
            )?;
            let pitch = geom.receive_wl * geom.wavelength / data.h as f64;
            let truth_rep = spectrum_report(&truth_view, pitch, geom.k0())?;
            let pred_rep = spectrum_report(&pred_view, pitch, geom.k0())?;
            write_text(
                &report_dir.join("spectrum_sample0.svg"),
                &spectrum_svg(&truth_rep, &pred_rep),
            )?;
        }
    }

    let agg_db = aggregate_nmse_db(&linears);
    let mean_rel = evaluate_loss(&ckpt.model, &data)?;
    let (mean_ms, p95_ms) = timing_stats(&times_ms);
    println!(
        "evaluated {} samples ({split} split) at {}x{}: nmse {:.3} dB, relative L2 {:.6}",
        rows.len(),
        data.h,
        data.w,
        agg_db,
        mean_rel
    );
    println!("report: {}", report_dir.display());
    println!("# timing inference mean_ms={mean_ms:.3} p95_ms={p95_ms:.3}");
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

fn fim_dataset(ds: Dataset) -> Result<FimDataset> {
    match ds {
        Dataset::Fim(f) => Ok(f),
        Dataset::Holo(_) => Err(Error::Config(
            "compare needs a FIM scenario dataset, got 'holo'".into(),
        )),
    }
}

pub const COMPARE_METHODS: [&str; 5] = ["nearest", "knn", "krr", "localmlp", "fno"];

fn cmd_compare(matches: &ArgMatches) -> Result<()> {
    let _cfg = load_config(matches)?;
    let scenarios_path = PathBuf::from(matches.get_one::<String>("scenarios").expect("required"));
    let out = PathBuf::from(matches.get_one::<String>("out").expect("required"));
    let fno_ckpt = load_checkpoint(Path::new(
        matches.get_one::<String>("ckpt").expect("required"),
    ))?;
    let local_ckpt = load_checkpoint(Path::new(
        matches.get_one::<String>("local-ckpt").expect("required"),
    ))?;
    let ds = fim_dataset(load_dataset(&scenarios_path)?)?;

    for (name, ckpt) in [("--ckpt", &fno_ckpt), ("--local-ckpt", &local_ckpt)] {
        if ckpt.meta("data.kind") != Some("fim") {
            return Err(Error::Config(format!(
                "{name} was not trained on FIM data (kind '{}')",
                ckpt.meta("data.kind").unwrap_or("?")
            )));
        }
        if ckpt.config.in_channels != 3 * ds.pilots.len() + 1 {
            return Err(Error::Config(format!(
                "{name} expects {} pilots, dataset has {}",
                (ckpt.config.in_channels - 1) / 3,
                ds.pilots.len()
            )));
        }
    }
    if local_ckpt.config.modes1 != 0 {
        return Err(Error::Config(
            "--local-ckpt must be a local-only model (modes = 0)".into(),
        ));
    }

    let noise_free = matches.get_flag("noise-free");
    let snr_list: Vec<f64> = if noise_free {
        vec![f64::INFINITY]
    } else {
        matches
            .get_one::<String>("snr-list")
            .expect("default")
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad SNR '{s}' in --snr-list")))
            })
            .collect::<Result<Vec<f64>>>()?
    };

    // evaluate on the held-out scenarios
    let first = ds.n_train;
    let total = ds.scenarios.len();
    if first >= total {
        return Err(Error::Config("scenario dataset has no test split".into()));
    }
    let pilot_flat: Vec<Vec<f64>> = ds.pilots.iter().map(|z| z.data().to_vec()).collect();
    let lengthscale = {
        let probe = PilotSet::new(pilot_flat.clone(), vec![vec![0.0]; pilot_flat.len()])?;
        median_pilot_distance(&probe)
    };

    let mut csv_rows: Vec<(f64, &str, f64)> = Vec::new();
    for &snr in &snr_list {
        let mut per_method: Vec<Vec<f64>> = vec![Vec::new(); COMPARE_METHODS.len()];
        for idx in first..total {
            let sc = &ds.scenarios[idx];
            let measurements = measurements_at_snr(&sc.pilot_channels, ds.seed, idx, snr);
            let pilots = PilotSet::new(
                pilot_flat.clone(),
                measurements.iter().map(|m| m.data().to_vec()).collect(),
            )?;
            let target_flat = sc.target_deformation.data();
            let truth = sc.target_channel.data();

            let estimates: [Vec<f64>; 5] = [
                nearest_estimate(&pilots, target_flat),
                knn_estimate(&pilots, target_flat, KNN_DEFAULT_K)?,
                krr_estimate(&pilots, target_flat, lengthscale, KRR_DEFAULT_RIDGE)?,
                localmlp_estimate(
                    &local_ckpt.model,
                    &ds.pilots,
                    &measurements,
                    &sc.target_deformation,
                )?,
                {
                    let input =
                        fim_input_channels(&ds.pilots, &measurements, &sc.target_deformation);
                    let fields = vec![input];
                    let planes = fno_ckpt.model.forward_fields(&fields, FIM_GRID, FIM_GRID)?;
                    interleave(&planes[0], FIM_GRID * FIM_GRID)
                },
            ];
            for (vals, est) in per_method.iter_mut().zip(&estimates) {
                vals.push(nmse(est, truth)?.0);
            }
        }
        for (method, vals) in COMPARE_METHODS.iter().zip(&per_method) {
            csv_rows.push((snr, method, aggregate_nmse_db(vals)));
        }
    }

    write_text(&out, &compare_csv(&csv_rows))?;
    for (snr, method, db) in &csv_rows {
        println!("snr {snr:>5} dB  {method:<9} nmse {db:.3} dB");
    }
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck

fn cmd_gradcheck(matches: &ArgMatches) -> Result<()> {
    let seed: u64 = parse_flag(matches, "seed")?.expect("has default");
    let stride: usize = parse_flag(matches, "stride")?.expect("has default");
    let started = Instant::now();
    let report = gradcheck::gradcheck(&gradcheck::tiny_config(), seed, 1e-5, stride)?;
    for (name, err, checked) in &report.rows {
        println!("{name:<16} max_rel_err {err:.3e}  ({checked} entries)");
    }
    println!("max relative error: {:.3e}", report.max_rel_err);
    println!(
        "# timing gradcheck wall_s={:.2}",
        started.elapsed().as_secs_f64()
    );
    if report.max_rel_err >= 1e-5 {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= 1e-5",
            report.max_rel_err
        )));
    }
    println!("gradient check passed (threshold 1e-5)");
    Ok(())
}
