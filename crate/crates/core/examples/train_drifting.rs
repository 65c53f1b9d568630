//! Train a small cost-conditioned drifting generator, checkpoint it halfway,
//! resume, and write the training log.

use drifting_mpc::checkpoint::{Checkpoint, ModelKind};
use drifting_mpc::cost::CostBox;
use drifting_mpc::dataset::{collect, CollectConfig};
use drifting_mpc::dynamics::{discretize_zoh, MsdParams};
use drifting_mpc::trainer::{TrainConfig, Trainer};

fn main() -> drifting_mpc::Result<()> {
    let sys = discretize_zoh(&MsdParams::default())?;
    let ds = collect(
        &sys,
        &CollectConfig {
            n: 300,
            horizon: 20,
            seed: 3,
            ..CollectConfig::default()
        },
    )?;
    let cfg = TrainConfig {
        epochs: 20,
        hidden: vec![64, 64],
        seed: 11,
        ..TrainConfig::default()
    };

    let mut trainer = Trainer::new(&ds, CostBox::default(), cfg, ModelKind::Drifting)?;
    for _ in 0..10 {
        let r = trainer.run_epoch()?;
        println!(
            "epoch {:>2} loss {:.4} drift {:.4} beta {:.3}",
            r.epoch, r.loss, r.drift_norm, r.beta
        );
    }
    let dir = std::env::temp_dir().join("dmpc_train_example");
    let stem = dir.join("drifting_H20");
    trainer.checkpoint().save(&stem)?;

    let ck = Checkpoint::load(&stem)?;
    let mut resumed = Trainer::resume(&ds, CostBox::default(), &ck)?;
    resumed.run()?;
    for r in &resumed.log().epochs {
        println!(
            "epoch {:>2} loss {:.4} drift {:.4} beta {:.3}",
            r.epoch, r.loss, r.drift_norm, r.beta
        );
    }
    resumed.checkpoint().save(&stem)?;
    resumed.log().write_csv(&dir.join("train_log.csv"))?;
    println!("checkpoint at {}", stem.display());
    Ok(())
}
