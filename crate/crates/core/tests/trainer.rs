mod common;

use std::io::BufRead;

use platesr_core::model::{SrModel, SrModelConfig};
use platesr_core::nn::Module;
use platesr_core::pecl::{EncoderConfig, Pecl, PeclConfig};
use platesr_core::train::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(loss: LossKind, total: u64, val_every: u64) -> TrainConfig {
    TrainConfig {
        total_iters: total,
        batch_size: 4,
        lr_init: 2e-3,
        optimizer: OptimizerKind::default(),
        scheduler: SchedulerKind::default(),
        val_every,
        seed: 3,
        loss,
        scale: 4,
        grad_clip: None,
        log_every: 1,
    }
}

fn trainer(loss: LossKind, total: u64, val_every: u64) -> Trainer {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = SrModel::new(SrModelConfig::tiny(4), &mut rng).unwrap();
    let pecl = (loss == LossKind::Pecl).then(|| {
        let cfg = PeclConfig {
            embed_dim: 64,
            encoder: EncoderConfig::tiny(),
            ..PeclConfig::default()
        };
        Pecl::new(cfg, &mut rng).unwrap()
    });
    Trainer::new(config(loss, total, val_every), model, pecl).unwrap()
}

fn params(m: &impl Module<f32>) -> Vec<f32> {
    let mut v = Vec::new();
    m.visit_params("", &mut |_, p| v.extend_from_slice(p.value.data()));
    v
}

#[test]
fn cosine_schedule_endpoints() {
    let total = 1_000_000;
    assert!((cosine_lr(1e-4, 0, total) - 1e-4).abs() < 1e-12);
    assert!((cosine_lr(1e-4, total / 2, total) - 5e-5).abs() < 1e-12);
    assert!(cosine_lr(1e-4, total, total).abs() < 1e-12);
    let mut prev = f64::INFINITY;
    for t in (0..=total).step_by(1000) {
        let lr = cosine_lr(1e-4, t, total);
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn fit_writes_curves_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = (common::plate_pairs(8, 16, 4, 1), common::plate_pairs(3, 16, 4, 2));
    let mut t = trainer(LossKind::Mse, 20, 5);
    let state = fit(&mut t, &train, &val, dir.path(), &FitOptions::default()).unwrap();
    assert_eq!(state.iter, 20);
    assert_eq!(state.history.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![5, 10, 15, 20]);
    for f in [BEST_CHECKPOINT, LAST_CHECKPOINT, CURVES_FILE, TRAIN_LOG] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let log = std::fs::File::open(dir.path().join(TRAIN_LOG)).unwrap();
    let lines: Vec<serde_json::Value> = std::io::BufReader::new(log)
        .lines()
        .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
        .collect();
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().all(|v| v["loss"].is_number() && v["lr"].is_number()));
    assert!(lines[0]["D_mean"].is_null());
}

#[test]
fn best_checkpoint_reproduces_its_validation_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val) = (common::plate_pairs(8, 16, 4, 3), common::plate_pairs(3, 16, 4, 4));
    let mut t = trainer(LossKind::Mse, 30, 10);
    let state = fit(&mut t, &train, &val, dir.path(), &FitOptions::default()).unwrap();
    let best = load_checkpoint(dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(best.state.best_iter, state.best_iter);
    let psnr = validate(&best.model, &val, 4).unwrap().median("psnr").unwrap();
    assert!((psnr - state.best_val_psnr.unwrap()).abs() < 1e-6);
    let best_row = state.history.iter().map(|r| r.val_psnr).fold(f64::MIN, f64::max);
    assert_eq!(state.best_val_psnr, Some(best_row));
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    for loss in [LossKind::Mse, LossKind::Pecl] {
        let (train, val) = (common::plate_pairs(6, 16, 4, 5), common::plate_pairs(2, 16, 4, 6));
        let straight = tempfile::tempdir().unwrap();
        let mut a = trainer(loss, 12, 4);
        let sa = fit(&mut a, &train, &val, straight.path(), &FitOptions::default()).unwrap();

        let split = tempfile::tempdir().unwrap();
        let mut b = trainer(loss, 12, 4);
        let opts = FitOptions { resume: false, stop_after: Some(8) };
        fit(&mut b, &train, &val, split.path(), &opts).unwrap();
        let mut c = trainer(loss, 12, 4);
        let opts = FitOptions { resume: true, stop_after: None };
        let sc = fit(&mut c, &train, &val, split.path(), &opts).unwrap();

        assert_eq!(params(&a.model), params(&c.model), "{loss:?}");
        assert_eq!(sa.history, sc.history);
        let n = std::fs::read_to_string(split.path().join(TRAIN_LOG)).unwrap().lines().count();
        assert_eq!(n, 12);
    }
}

#[test]
fn training_reduces_the_loss() {
    let train = common::plate_pairs(4, 16, 4, 7);
    let mut t = trainer(LossKind::Mse, 60, 60);
    let (lr, hr) = platesr_core::data::stack_pairs(train.iter()).unwrap();
    let first = t.train_step(&lr, &hr, &[]).unwrap().loss;
    let mut last = first;
    for _ in 0..59 {
        last = t.train_step(&lr, &hr, &[]).unwrap().loss;
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn clipping_bounds_the_update() {
    let train = common::plate_pairs(4, 16, 4, 8);
    let (lr, hr) = platesr_core::data::stack_pairs(train.iter()).unwrap();
    let mut t = trainer(LossKind::Mse, 10, 10);
    t.config.grad_clip = Some(1e-3);
    let d = t.train_step(&lr, &hr, &[]).unwrap();
    assert!(d.grad_norm > 1e-3);
    assert!(grad_norm(&t.model) <= 1e-3 * (1.0 + 1e-5));
}

#[test]
fn loss_state_must_match_loss_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = SrModel::new(SrModelConfig::tiny(4), &mut rng).unwrap();
    assert!(Trainer::new(config(LossKind::Pecl, 10, 5), model.clone(), None).is_err());
    assert!(Trainer::new(config(LossKind::Mse, 10, 5), SrModel::new(SrModelConfig::tiny(8), &mut rng).unwrap(), None).is_err());
    assert!(Trainer::new(config(LossKind::Mse, 0, 5), model, None).is_err());
}

#[test]
fn empty_validation_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(LossKind::Mse, 10, 5);
    assert!(fit(&mut t, &common::plate_pairs(2, 16, 4, 9), &[], dir.path(), &FitOptions::default()).is_err());
}

#[test]
fn batch_schedule_covers_each_epoch_once() {
    let mut s = BatchSchedule::new(10, 3, 7).unwrap();
    assert_eq!(s.batches_per_epoch(), 4);
    for epoch in 0..3u64 {
        let mut seen: Vec<usize> = (0..4).flat_map(|b| s.batch(epoch * 4 + b).unwrap().indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
    let again = BatchSchedule::new(10, 3, 7).unwrap().batch(5).unwrap().indices.clone();
    assert_eq!(s.batch(5).unwrap().indices, again);
}
