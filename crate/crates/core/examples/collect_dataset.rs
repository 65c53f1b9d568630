//! Collect an offline dataset from the behavior mixture, write it to disk, read
//! it back and inspect the nearest-neighbor local prior at a query state.

use drifting_mpc::cost::{CostBox, CostParams};
use drifting_mpc::dataset::{
    collect, knn_prior, relabel_cost, CollectConfig, ControllerTag, OfflineDataset,
};
use drifting_mpc::dynamics::{discretize_zoh, MsdParams};
use drifting_mpc::rng::stream;

fn main() -> drifting_mpc::Result<()> {
    let sys = discretize_zoh(&MsdParams::default())?;
    let cfg = CollectConfig {
        n: 500,
        horizon: 30,
        seed: 7,
        ..CollectConfig::default()
    };
    let ds = collect(&sys, &cfg)?;
    for tag in ControllerTag::ALL {
        println!("{tag:?}: {}", ds.count(tag));
    }

    let dir = std::env::temp_dir().join("dmpc_collect_example");
    std::fs::create_dir_all(&dir).map_err(|e| drifting_mpc::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let path = dir.join("dataset.bin");
    ds.save(&path)?;
    let back = OfflineDataset::load(&path)?;
    println!(
        "round trip identical: {}",
        back.trajectories == ds.trajectories
    );

    let query = [0.5, -1.0];
    let prior = knn_prior(&ds, &query, 8)?;
    let omega = CostParams::new(vec![2.0, 0.5], vec![0.3])?;
    for (i, w) in prior.indices.iter().zip(&prior.weights) {
        let x = &ds.initial_states[*i];
        println!(
            "neighbor {i:>3} at ({:+.3}, {:+.3}) weight {w:.4} relabeled cost {:.3}",
            x[0],
            x[1],
            relabel_cost(&ds.trajectories[*i], &omega)?
        );
    }
    let mut rng = stream(1, 0);
    let draws: Vec<usize> = (0..10).map(|_| prior.draw(&mut rng)).collect();
    println!("draws from the prior: {draws:?}");
    println!("box centre ω: {:?}", CostBox::default().center(2, 1));
    Ok(())
}
