//! The DDPM baseline: train a small noise-prediction model, then compare
//! unguided and cost-guided samples from the same random streams.

use drifting_mpc::baselines::{ddpm_sample_batch, ddpm_train, DdpmConfig, GuidanceConfig};
use drifting_mpc::cost::{cost, CostBox, CostParams};
use drifting_mpc::dataset::{collect, CollectConfig};
use drifting_mpc::drift::{to_absolute, FlatTraj};
use drifting_mpc::dynamics::{discretize_zoh, MsdParams};
use drifting_mpc::rng::stream;

fn main() -> drifting_mpc::Result<()> {
    let sys = discretize_zoh(&MsdParams::default())?;
    let ds = collect(
        &sys,
        &CollectConfig {
            n: 300,
            horizon: 20,
            seed: 2,
            ..CollectConfig::default()
        },
    )?;
    let cfg = DdpmConfig {
        epochs: 1500,
        hidden: vec![128, 128],
        seed: 4,
        ..DdpmConfig::default()
    };
    let (model, log) = ddpm_train(&ds, &CostBox::default(), &cfg)?;
    println!(
        "noise-prediction loss {:.3} -> {:.3}",
        log.epochs[0].loss,
        log.epochs.last().unwrap().loss
    );

    let x0 = [1.0, 0.5];
    let omega = CostParams::new(vec![1.0, 1.0], vec![0.1])?;
    let mean_cost = |samples: &[Vec<f64>]| -> drifting_mpc::Result<f64> {
        let mut total = 0.0;
        for s in samples {
            total += cost(
                &to_absolute(&FlatTraj::relative(model.layout, s.clone())?, &x0)?,
                &omega,
            )?;
        }
        Ok(total / samples.len() as f64)
    };
    let plain = ddpm_sample_batch(&model, &x0, 32, &mut stream(1, 0), None)?;
    println!("unguided mean candidate cost {:.3}", mean_cost(&plain)?);
    for scale in [0.001, 0.01, 0.1, 1.0] {
        let g = GuidanceConfig {
            scale,
            omega: omega.clone(),
            fix_initial: true,
        };
        let guided = ddpm_sample_batch(&model, &x0, 32, &mut stream(1, 0), Some(&g))?;
        println!(
            "guidance {scale:>5}: mean candidate cost {:.3}",
            mean_cost(&guided)?
        );
    }
    Ok(())
}
