use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use msma::model::{ModelConfig, Msma};
use msma_ffi::*;

fn small_model(dir: &Path) -> CString {
    let cfg = ModelConfig {
        history: 30,
        horizon: 50,
        ..ModelConfig::tiny()
    };
    let path = dir.join("m.ckpt");
    Msma::new(cfg, 3).unwrap().checkpoint().unwrap().write(&path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn generate(scenes: usize) -> *mut MsmaDataset {
    let cfg = MsmaGenerateConfig {
        scenes,
        seed: 8,
        ..msma_generate_config_default()
    };
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { msma_dataset_generate(&cfg, &mut ds) }, MsmaStatus::Ok);
    ds
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(msma_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn generate_predict_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(6);
    assert_eq!(unsafe { msma_dataset_len(ds) }, 6);
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { msma_model_load(small_model(dir.path()).as_ptr(), &mut model) }, MsmaStatus::Ok);
    let (modes, horizon) = unsafe { (msma_model_modes(model), msma_model_horizon(model)) };
    assert_eq!((modes, horizon), (2, 50));

    let mut pred = ptr::null_mut();
    assert_eq!(unsafe { msma_predict(model, ds, 0, MsmaFusion::Full, &mut pred) }, MsmaStatus::Ok);
    let n = unsafe { msma_prediction_agents(pred) };
    assert!(n > 0);
    let mut means = vec![0.0; n * modes * horizon * 2];
    let mut scores = vec![0.0; n * modes];
    unsafe {
        assert_eq!(msma_prediction_means(pred, means.as_mut_ptr(), means.len()), MsmaStatus::Ok);
        assert_eq!(msma_prediction_scores(pred, scores.as_mut_ptr(), scores.len()), MsmaStatus::Ok);
    }
    assert!(means.iter().all(|v| v.is_finite()));
    for row in scores.chunks(modes) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let mut id = 0u32;
    assert_eq!(unsafe { msma_prediction_agent_id(pred, 0, &mut id) }, MsmaStatus::Ok);
    assert_eq!(unsafe { msma_prediction_agent_id(pred, n, &mut id) }, MsmaStatus::InvalidArgument);

    let mut short = vec![0.0; 3];
    assert_eq!(
        unsafe { msma_prediction_means(pred, short.as_mut_ptr(), short.len()) },
        MsmaStatus::InvalidArgument
    );
    assert!(last_error().contains("needed"));

    let mut m = MsmaMetrics {
        agents: 0,
        ade: 0.0,
        fde: 0.0,
        miss_rate: 0.0,
    };
    assert_eq!(unsafe { msma_evaluate(model, ds, MsmaCohort::All, MsmaFusion::Full, &mut m) }, MsmaStatus::Ok);
    assert!(m.agents > 0 && m.ade > 0.0 && m.fde >= 0.0 && (0.0..=1.0).contains(&m.miss_rate));
    unsafe {
        msma_prediction_free(pred);
        msma_model_free(model);
        msma_dataset_free(ds);
    }
}

#[test]
fn dataset_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(4);
    let path = CString::new(dir.path().join("d.jsonl").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msma_dataset_save(ds, path.as_ptr()) }, MsmaStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { msma_dataset_load(path.as_ptr(), &mut back) }, MsmaStatus::Ok);
    for i in 0..4 {
        let (mut a, mut b) = (0u64, 0u64);
        unsafe {
            assert_eq!(msma_dataset_scene_id(ds, i, &mut a), MsmaStatus::Ok);
            assert_eq!(msma_dataset_scene_id(back, i, &mut b), MsmaStatus::Ok);
        }
        assert_eq!(a, b);
    }
    let mut x = 0u64;
    assert_eq!(unsafe { msma_dataset_scene_id(ds, 4, &mut x) }, MsmaStatus::InvalidArgument);
    unsafe {
        msma_dataset_free(ds);
        msma_dataset_free(back);
    }
}

#[test]
fn failures_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = ptr::null_mut();
    let bad = MsmaGenerateConfig {
        mpr: 1.5,
        ..msma_generate_config_default()
    };
    assert_eq!(unsafe { msma_dataset_generate(&bad, &mut ds) }, MsmaStatus::InvalidArgument);
    assert!(last_error().contains("mpr"));
    assert!(ds.is_null());
    assert_eq!(unsafe { msma_dataset_generate(ptr::null(), &mut ds) }, MsmaStatus::NullPointer);

    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { msma_model_load(missing.as_ptr(), &mut model) }, MsmaStatus::Io);

    let garbage = dir.path().join("g.jsonl");
    std::fs::write(&garbage, "{not json\n").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msma_dataset_load(garbage.as_ptr(), &mut ds) }, MsmaStatus::Parse);

    let short = ModelConfig {
        history: 30,
        horizon: 20,
        ..ModelConfig::tiny()
    };
    let path = dir.path().join("short.ckpt");
    Msma::new(short, 1).unwrap().checkpoint().unwrap().write(&path).unwrap();
    let path = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { msma_model_load(path.as_ptr(), &mut model) }, MsmaStatus::Ok);
    let data = generate(2);
    let mut pred = ptr::null_mut();
    assert_eq!(unsafe { msma_predict(model, data, 0, MsmaFusion::Full, &mut pred) }, MsmaStatus::Incompatible);
    unsafe {
        msma_model_free(model);
        msma_dataset_free(data);
        // null handles are ignored
        msma_dataset_free(ptr::null_mut());
        msma_model_free(ptr::null_mut());
        msma_prediction_free(ptr::null_mut());
    }
    assert_eq!(unsafe { msma_dataset_len(ptr::null()) }, 0);
}
