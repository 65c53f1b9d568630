//! Receding-horizon best-of-M planning with a trained generator, compared with
//! the LQR oracle from the same initial state for several candidate counts.

use drifting_mpc::checkpoint::ModelKind;
use drifting_mpc::cost::{CostBox, CostParams};
use drifting_mpc::dataset::{collect, CollectConfig};
use drifting_mpc::dynamics::{discretize_zoh, MsdParams};
use drifting_mpc::oracle::solve_riccati;
use drifting_mpc::planner::{run_closed_loop, DriftingSampler};
use drifting_mpc::rng::stream;
use drifting_mpc::trainer::{train, TrainConfig};

fn main() -> drifting_mpc::Result<()> {
    let horizon = 20;
    let sys = discretize_zoh(&MsdParams::default())?;
    let ds = collect(
        &sys,
        &CollectConfig {
            n: 400,
            horizon,
            seed: 5,
            ..CollectConfig::default()
        },
    )?;
    let cfg = TrainConfig {
        epochs: 15,
        hidden: vec![64, 64],
        seed: 6,
        ..TrainConfig::default()
    };
    let (model, _) = train(&ds, &CostBox::default(), &cfg, ModelKind::Drifting)?;
    let sampler = DriftingSampler::new(&model);

    let omega = CostParams::new(vec![1.0, 1.0], vec![0.1])?;
    let x0 = [1.2, -0.8];
    let oracle = solve_riccati(&sys, &omega, horizon)?.value(&x0);
    println!("oracle cost {oracle:.4}");
    for m_plan in [1, 4, 16, 64] {
        let out = run_closed_loop(
            &sampler,
            &sys,
            &x0,
            &omega,
            horizon,
            m_plan,
            &mut stream(8, 0),
        )?;
        println!(
            "M_plan={m_plan:>2}: cost {:.4} ({:.3}x oracle), planning {:.2} ms",
            out.cost,
            out.cost / oracle,
            out.total_seconds() * 1e3
        );
    }
    Ok(())
}
