use std::path::{Path, PathBuf};

use clap::Parser;
use mrcdm::cli::{run, Cli};
use mrcdm::error::Error;
use mrcdm::harness::{RunRow, SummaryRow};
use mrcdm::report::{read_csv, RunManifest};

/// Model small enough that a training run takes well under a second.
const TINY: &str = r#"{
    "data": {"synth": {"n_points": 1200}},
    "seeds": [42],
    "horizons": [24, 96],
    "baselines": ["seasonal_naive", "naive"],
    "model": {"hidden": 4, "groups": 2, "res_blocks": 1, "time_dim": 4, "diffusion_steps": 4,
              "epochs": 1, "train_stride": 96, "n_samples": 1, "recon_windows": 2, "recon_steps": 2}
}"#;

fn mrcdm(args: &[&str]) -> Result<(), Error> {
    let mut argv = vec!["mrcdm"];
    argv.extend_from_slice(args);
    run(Cli::parse_from(argv))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn synth_is_deterministic_and_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = tiny_config(tmp.path());
    mrcdm(&["synth", "--config", s(&cfg), "--seed", "7", "--out", s(&a)]).unwrap();
    mrcdm(&["synth", "--config", s(&cfg), "--seed", "7", "--out", s(&b)]).unwrap();
    mrcdm(&["synth", "--config", s(&cfg), "--seed", "8", "--out", s(&c)]).unwrap();
    let read = |d: &Path| std::fs::read(d.join("data.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with("date,LUFL\n2016-07-01 00:00:00,"));
    assert_eq!(text.lines().count(), 1201);

    let m: RunManifest = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "synth");
    assert_eq!(m.config.data.synth.seed, 7);
    assert_eq!(m.outputs, ["data.csv"]);
}

#[test]
fn synthetic_file_reads_back_as_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("data");
    mrcdm(&["synth", "--config", s(&cfg), "--out", s(&out)]).unwrap();
    let run_cfg = tmp.path().join("file.json");
    let text = TINY.replacen(r#""data": {"synth": {"n_points": 1200}}"#, &format!(r#""data": {{"path": {:?}}}"#, out.join("data.csv")), 1);
    std::fs::write(&run_cfg, text).unwrap();
    let eval = tmp.path().join("eval");
    mrcdm(&["evaluate", "--config", s(&run_cfg), "--out", s(&eval)]).unwrap();
    let m: RunManifest = serde_json::from_slice(&std::fs::read(eval.join("manifest.json")).unwrap()).unwrap();
    assert!(m.dataset_id.starts_with("file:data.csv:LUFL:"), "{}", m.dataset_id);
}

#[test]
fn evaluate_identical_files_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("series.csv");
    std::fs::write(&f, "value\n1.5\n-2\n3.25\n0\n").unwrap();
    let out = tmp.path().join("out");
    mrcdm(&["evaluate", "--pred", s(&f), "--truth", s(&f), "--out", s(&out)]).unwrap();
    let rows: Vec<RunRow> = read_csv(&out.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].mse, rows[0].mae, rows[0].rmse), (0.0, 0.0, 0.0));
    assert_eq!(rows[0].horizon, 4);
}

#[test]
fn evaluate_rejects_mismatched_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let (p, t) = (tmp.path().join("p.csv"), tmp.path().join("t.csv"));
    std::fs::write(&p, "value\n1\n2\n").unwrap();
    std::fs::write(&t, "value\n1\n2\n3\n").unwrap();
    let e = mrcdm(&["evaluate", "--pred", s(&p), "--truth", s(&t), "--out", s(tmp.path())]).unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");
}

#[test]
fn invalid_config_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seq_len": 0, "model": {"epochs": 0}, "variant": "Nope"}"#).unwrap();
    let out = tmp.path().join("out");
    let e = mrcdm(&["train", "--config", s(&cfg), "--out", s(&out)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let msg = e.to_string();
    for field in ["seq_len", "model.epochs", "variant"] {
        assert!(msg.contains(field), "{field} missing from: {msg}");
    }
    assert!(!out.exists());

    let e = mrcdm(&["train", "--config", s(&tmp.path().join("missing.json"))]).unwrap_err();
    assert_eq!(e.exit_code(), 5);
}

#[test]
fn train_forecast_evaluate_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let tr = tmp.path().join("train");
    mrcdm(&["train", "--config", s(&cfg), "--out", s(&tr)]).unwrap();
    let ck = tr.join("checkpoint_FullModel_seed42.json");
    assert!(ck.exists());
    assert!(tr.join("losses_FullModel_seed42.csv").exists());

    let fc = tmp.path().join("forecast");
    mrcdm(&["forecast", "--config", s(&cfg), "--checkpoint", s(&ck), "--window", "1", "--plot", "--out", s(&fc)]).unwrap();
    let text = std::fs::read_to_string(fc.join("forecast.csv")).unwrap();
    assert!(text.starts_with("step,history,truth,forecast\n"));
    assert_eq!(text.lines().count(), 1 + 96 + 96);
    assert!(std::fs::read_to_string(fc.join("forecast.svg")).unwrap().starts_with("<svg"));

    let ev = tmp.path().join("eval");
    mrcdm(&["evaluate", "--config", s(&cfg), "--checkpoint", s(&ck), "--plot", "--out", s(&ev)]).unwrap();
    let rows: Vec<RunRow> = read_csv(&ev.join("report.csv")).unwrap();
    let methods: Vec<(&str, usize)> = rows.iter().map(|r| (r.method.as_str(), r.horizon)).collect();
    assert_eq!(
        methods,
        [("FullModel", 24), ("FullModel", 96), ("seasonal_naive", 24), ("seasonal_naive", 96), ("naive", 24), ("naive", 96)]
    );
    assert!(rows.iter().all(|r| r.mse.is_finite() && r.rmse == r.mse.sqrt()));
    let summary: Vec<SummaryRow> = read_csv(&ev.join("summary.csv")).unwrap();
    assert_eq!(summary.len(), 6);
    assert!(ev.join("errors.svg").exists());

    let e = mrcdm(&["forecast", "--config", s(&cfg), "--checkpoint", s(&ck), "--window", "999", "--out", s(&fc)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn ablate_covers_every_variant_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("ablate.json");
    std::fs::write(&cfg, TINY.replacen(r#""seeds": [42]"#, r#""seeds": [1, 2, 3]"#, 1)).unwrap();
    let out = tmp.path().join("ablate");
    mrcdm(&["ablate", "--config", s(&cfg), "--out", s(&out)]).unwrap();
    let rows: Vec<RunRow> = read_csv(&out.join("ablate.csv")).unwrap();
    assert_eq!(rows.len(), 18);
    let summary: Vec<SummaryRow> = read_csv(&out.join("summary.csv")).unwrap();
    // six variants plus two baselines
    assert_eq!(summary.len(), 8);
    assert!(summary.iter().filter(|r| r.runs == 3).count() == 6);
}

#[test]
fn sweep_trains_each_input_length() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("sweep");
    mrcdm(&["sweep", "--config", s(&cfg), "--out", s(&out)]).unwrap();
    let rows: Vec<RunRow> = read_csv(&out.join("sweep.csv")).unwrap();
    let lens: Vec<usize> = rows.iter().map(|r| r.seq_len).collect();
    assert_eq!(lens, [48, 96, 192]);
}

#[test]
fn verify_fixtures_passes_on_repository_fixtures() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    mrcdm(&["verify-fixtures", "--dir", s(&dir)]).unwrap();
}
