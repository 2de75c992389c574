use mrcdm::checkpoint::Checkpoint;
use mrcdm::config::RunConfig;
use mrcdm::data::Prepared;
use mrcdm::harness::{model_forecasts, test_windows, train};
use mrcdm_core::pipeline::{Forecaster, Variant};

fn tiny(variant: Variant) -> (Forecaster, Prepared) {
    let mut cfg = RunConfig::default();
    cfg.data.synth.n_points = 1200;
    cfg.model.hidden = 4;
    cfg.model.groups = 2;
    cfg.model.res_blocks = 1;
    cfg.model.time_dim = 4;
    cfg.model.diffusion_steps = 4;
    cfg.model.epochs = 2;
    cfg.model.train_stride = 96;
    cfg.model.n_samples = 2;
    cfg.model.recon_windows = 2;
    cfg.model.recon_steps = 5;
    let data = Prepared::load(&cfg).unwrap();
    let m = train(cfg.model_config(variant, 96, 9), &data, &mut ()).unwrap();
    (m, data)
}

#[test]
fn restored_model_forecasts_identically() {
    for v in [Variant::FullModel, Variant::NoDecomposition, Variant::UnconditionalDiffusion] {
        let (m, data) = tiny(v);
        let ck = Checkpoint::capture(&m, &data.normalizer, &data.id);
        let json = ck.to_json();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ck);
        let r = back.restore().unwrap();
        assert_eq!(r.config, m.config);
        assert_eq!(r.losses, m.losses);
        let w = test_windows(&data, 96, 96).unwrap();
        assert_eq!(model_forecasts(&r, &w, 1).unwrap(), model_forecasts(&m, &w, 1).unwrap(), "{v}");
        assert_eq!(Checkpoint::capture(&r, &data.normalizer, &data.id).to_json(), json);
    }
}

#[test]
fn save_and_load_through_a_file() {
    let (m, data) = tiny(Variant::NoTrend1);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ck.json");
    let ck = Checkpoint::capture(&m, &data.normalizer, &data.id);
    ck.save(&p).unwrap();
    assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    assert_eq!(ck.normalizer().unwrap(), data.normalizer);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (m, data) = tiny(Variant::FullModel);
    let ck = Checkpoint::capture(&m, &data.normalizer, &data.id);

    let mut missing = ck.clone();
    missing.tensors.pop();
    assert!(missing.restore().is_err());

    let mut dup = ck.clone();
    let first = dup.tensors[0].clone();
    dup.tensors.push(first);
    assert!(dup.restore().is_err());

    let mut shape = ck.clone();
    shape.tensors[0].values.pop();
    assert!(shape.restore().is_err());

    let mut nan = ck.clone();
    nan.tensors[1].values[0] = f64::NAN;
    assert!(nan.restore().is_err());

    let mut hash = ck.clone();
    hash.model.hidden = 8;
    assert!(hash.restore().is_err());

    let mut format = ck.clone();
    format.format = "something-else/1".into();
    assert!(format.restore().is_err());
}
