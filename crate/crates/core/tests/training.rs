//! Training loop contracts on small synthetic datasets.

use versnet::metrics::VoteRule;
use versnet::synth::{class_names, gen_dataset, Chip, ClassNaming, DatasetManifest, DatasetOptions};
use versnet::train::{evaluate, train, EvalOptions, TrainConfig, FINAL_CHECKPOINT, LOG_FILE};
use versnet::{NetworkParams, Prng, VersNetConfig};

fn dataset(dir: &std::path::Path, per_class: usize, seed: u64) -> Vec<Chip> {
    let m = gen_dataset(
        &DatasetOptions {
            num_per_class: per_class,
            chip_size: 48,
            seed,
            ..Default::default()
        },
        dir,
    )
    .unwrap();
    DatasetManifest::load(&m.root).unwrap().load_chips().unwrap()
}

fn net(seed: u64) -> NetworkParams {
    let cfg = VersNetConfig {
        block_channels: [4, 4, 8, 8],
        fc_channels: 8,
        dropout_rate: 0.1,
        ..Default::default()
    };
    NetworkParams::build(&cfg, &mut Prng::new(seed)).unwrap()
}

fn opts() -> EvalOptions {
    EvalOptions {
        class_names: class_names(ClassNaming::Synthetic),
        vote_rule: VoteRule::Majority,
    }
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let chips = dataset(dir.path(), 1, 1);
    let run = |name: &str| {
        let cfg = TrainConfig {
            epochs: 2,
            seed: 9,
            checkpoint_dir: Some(dir.path().join(name)),
            ..Default::default()
        };
        train(&cfg, net(3), &chips, None).unwrap();
        std::fs::read(dir.path().join(name).join(FINAL_CHECKPOINT)).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let log = std::fs::read_to_string(dir.path().join("a").join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,mean_loss,eval_mean_iou,seconds\n"));
}

#[test]
fn ten_chip_loss_drops_by_epoch_five() {
    let dir = tempfile::tempdir().unwrap();
    let chips = dataset(dir.path(), 1, 2);
    assert_eq!(chips.len(), 10);
    let cfg = TrainConfig {
        epochs: 5,
        eval_every: 0,
        ..Default::default()
    };
    let out = train(&cfg, net(4), &chips, None).unwrap();
    assert!(out.log[4].mean_loss < out.log[0].mean_loss, "{:?}", out.log);
    assert!(out.log.iter().all(|r| r.mean_loss >= 0.0));
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let chips = dataset(dir.path(), 1, 3);
    let ckpt = dir.path().join("ckpt");
    let cfg = TrainConfig {
        epochs: 1,
        checkpoint_dir: Some(ckpt.clone()),
        ..Default::default()
    };
    let out = train(&cfg, net(5), &chips, Some((&chips, &opts()))).unwrap();
    assert!(out.log[0].eval_mean_iou.is_some());
    let before = evaluate(&out.net, &chips, &opts()).unwrap();
    let (loaded, momentum) = NetworkParams::load_checkpoint(&ckpt.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(loaded, out.net);
    assert_eq!(momentum.unwrap(), out.momentum);
    let after = evaluate(&loaded, &chips, &opts()).unwrap();
    assert_eq!(before, after);
    assert_eq!(
        serde_json::to_string(&before).unwrap(),
        serde_json::to_string(&evaluate(&loaded, &chips, &opts()).unwrap()).unwrap()
    );
}

#[test]
fn periodic_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let chips = dataset(dir.path(), 1, 4);
    let ckpt = dir.path().join("ckpt");
    let cfg = TrainConfig {
        epochs: 4,
        eval_every: 2,
        checkpoint_dir: Some(ckpt.clone()),
        ..Default::default()
    };
    train(&cfg, net(6), &chips[..2], None).unwrap();
    for f in ["epoch_0002.vnck", "epoch_0004.vnck", FINAL_CHECKPOINT] {
        assert!(ckpt.join(f).is_file(), "{f}");
    }
    assert!(!ckpt.join("epoch_0001.vnck").exists());
}
