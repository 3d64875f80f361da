//! End-to-end training behavior: loss decrease, determinism, resume.

use memnet::checkpoint::{checkpoint_from_trainer, trainer_from_checkpoint};
use memnet::envs::shapes;
use memnet::long_term::Variant;
use memnet::short_term::{Sample, ShortTermMemory};
use memnet::tensor::Rng;
use memnet::trainer::{train, TrainConfig, Trainer};

fn shapes_memory(per_class: usize, seed: u64) -> ShortTermMemory {
    let mut rng = Rng::new(seed);
    let mut mem = ShortTermMemory::new(shapes::NUM_CLASSES, 256);
    for class in 0..shapes::NUM_CLASSES {
        for _ in 0..per_class {
            mem.insert(Sample {
                class_id: class,
                payload: shapes::synth_shape(class, &mut rng).unwrap(),
            })
            .unwrap();
        }
    }
    mem
}

fn cfg(variant: Variant, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(variant, shapes::PIXELS, shapes::NUM_CLASSES);
    cfg.steps = steps;
    cfg.batch_size = 16;
    cfg
}

#[test]
fn loss_decreases_over_a_short_run() {
    let mem = shapes_memory(50, 3);
    for variant in [Variant::TypeA, Variant::TypeB] {
        let (_, history) = train(cfg(variant, 300), &mem).unwrap();
        let first: f64 = history[..50].iter().map(|r| r.total).sum::<f64>() / 50.0;
        let last: f64 = history[250..].iter().map(|r| r.total).sum::<f64>() / 50.0;
        assert!(
            last < 0.7 * first,
            "{variant}: loss went {first:.2} -> {last:.2}"
        );
    }
}

#[test]
fn training_is_a_pure_function_of_config_and_memory() {
    let mem = shapes_memory(10, 5);
    let bytes = |t: &Trainer| checkpoint_from_trainer(t).to_bytes();
    let (a, _) = train(cfg(Variant::TypeB, 20), &mem).unwrap();
    let (b, _) = train(cfg(Variant::TypeB, 20), &mem).unwrap();
    assert_eq!(bytes(&a), bytes(&b));

    let mut other = cfg(Variant::TypeB, 20);
    other.seed = 43;
    let (c, _) = train(other, &mem).unwrap();
    assert_ne!(bytes(&a), bytes(&c));
}

#[test]
fn resume_matches_uninterrupted_run_bitwise() {
    let mem = shapes_memory(10, 5);

    let (full, _) = train(cfg(Variant::TypeB, 30), &mem).unwrap();

    let mut first_half = Trainer::new(cfg(Variant::TypeB, 30)).unwrap();
    first_half.run(&mem, 12).unwrap();
    let snapshot = checkpoint_from_trainer(&first_half).to_bytes();

    let mut resumed = trainer_from_checkpoint(
        &memnet::checkpoint::Checkpoint::from_bytes(&snapshot, "snapshot").unwrap(),
    )
    .unwrap();
    assert_eq!(resumed.step, 12);
    resumed.run(&mem, 18).unwrap();

    assert_eq!(
        checkpoint_from_trainer(&full).to_bytes(),
        checkpoint_from_trainer(&resumed).to_bytes()
    );
}

#[test]
fn checkpoint_file_round_trip_is_byte_identical() {
    let mem = shapes_memory(5, 9);
    let (trainer, _) = train(cfg(Variant::TypeA, 5), &mem).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.man1");
    memnet::checkpoint::save_trainer(&path, &trainer).unwrap();
    let reloaded = memnet::checkpoint::load_trainer(&path).unwrap();
    let path2 = dir.path().join("ckpt2.man1");
    memnet::checkpoint::save_trainer(&path2, &reloaded).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}
