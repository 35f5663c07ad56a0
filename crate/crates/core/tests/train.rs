use msma::error::Error;
use msma::model::{ModelConfig, Msma};
use msma::scene::LayoutSpec;
use msma::train::experiments::{ExperimentConfig, SplitScenes};
use msma::train::{evaluate, train, Cohort, LstmBaseline, LstmConfig, Predictor, TrainConfig, TrainSchedule};

fn small_model() -> ModelConfig {
    ModelConfig {
        history: 30,
        horizon: 50,
        ..ModelConfig::tiny()
    }
}

fn data(scenes: usize) -> SplitScenes {
    let cfg = ExperimentConfig {
        scenes,
        data_seed: 2,
        ..ExperimentConfig::default()
    };
    cfg.generate(&LayoutSpec::town(), 0.5, 2, 0.1).unwrap()
}

fn config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        schedule: TrainSchedule {
            epochs,
            base_lr: 5e-3,
            warmup_epochs: 1,
            batch_size: 8,
            seed,
            ..TrainSchedule::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let d = data(40);
    let run = |seed| {
        let mut m = Msma::new(small_model(), seed).unwrap();
        let r = train(&mut m, &d.train, &d.val, &config(3, seed)).unwrap();
        (r, m.params)
    };
    let (a, pa) = run(4);
    let (b, pb) = run(4);
    assert_eq!(a.curve_csv(), b.curve_csv());
    assert_eq!(pa, pb);
    let (c, _) = run(5);
    assert_ne!(a.curve_csv(), c.curve_csv());
}

#[test]
fn report_tracks_epochs_and_best_validation() {
    let d = data(40);
    let mut m = Msma::new(small_model(), 1).unwrap();
    let r = train(&mut m, &d.train, &d.val, &config(4, 1)).unwrap();
    assert_eq!(r.curve.iter().map(|e| e.epoch).collect::<Vec<_>>(), [0, 1, 2, 3]);
    let best = r
        .curve
        .iter()
        .map(|e| e.val_ade.unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.curve[r.best_epoch].val_ade.unwrap(), best);
    // kept parameters are the best epoch's
    let ade = evaluate(&m, &d.val, &[Cohort::All], Default::default()).unwrap()[0]
        .metrics
        .as_ref()
        .unwrap()
        .ade;
    assert!((ade - best).abs() < 1e-12, "{ade} vs {best}");
}

#[test]
fn start_epoch_continues_numbering() {
    let d = data(20);
    let mut m = Msma::new(small_model(), 1).unwrap();
    let cfg = TrainConfig {
        start_epoch: 2,
        ..config(4, 1)
    };
    let r = train(&mut m, &d.train, &[], &cfg).unwrap();
    assert_eq!(r.curve.iter().map(|e| e.epoch).collect::<Vec<_>>(), [2, 3]);
    assert_eq!(r.best_epoch, 3);
    assert!(r.curve.iter().all(|e| e.val_ade.is_none()));
}

#[test]
fn empty_training_split_is_rejected() {
    let mut m = Msma::new(small_model(), 1).unwrap();
    assert!(matches!(train(&mut m, &[], &[], &config(1, 0)), Err(Error::Empty(_))));
}

#[test]
fn invalid_schedule_is_rejected() {
    let d = data(10);
    let mut m = Msma::new(small_model(), 1).unwrap();
    let mut cfg = config(1, 0);
    cfg.schedule.batch_size = 0;
    assert!(train(&mut m, &d.train, &[], &cfg).is_err());
}

#[test]
fn lstm_baseline_learns() {
    let d = data(60);
    let mut m = LstmBaseline::new(
        LstmConfig {
            hidden: 16,
            ..LstmConfig::default()
        },
        3,
    )
    .unwrap();
    let r = train(&mut m, &d.train, &d.val, &config(4, 3)).unwrap();
    let first = r.curve.first().unwrap().train_loss;
    let last = r.curve.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    let ck = m.checkpoint().unwrap();
    let back = LstmBaseline::from_checkpoint(&ck).unwrap();
    let s = &d.test[0];
    assert_eq!(
        m.predict(s, Default::default()).unwrap(),
        back.predict(s, Default::default()).unwrap()
    );
}
