//! Desk-scale benchmark at H = 30: collect, train the drifting generator, the
//! drifting prior and the diffusion baseline, then evaluate all of them against
//! the LQR oracle on paired initial states.
//!
//! Usage: `cargo run --release --example desk_benchmark -- [epochs] [hidden] [out_dir]`

use std::path::PathBuf;
use std::time::Instant;

use drifting_mpc::baselines::{ddpm_train, DdpmConfig, DdpmSampler};
use drifting_mpc::checkpoint::ModelKind;
use drifting_mpc::cost::CostBox;
use drifting_mpc::dataset::{collect, CollectConfig};
use drifting_mpc::dynamics::{discretize_zoh, MsdParams};
use drifting_mpc::eval::{evaluate, export, BootstrapConfig, EvalConfig, Method};
use drifting_mpc::planner::DriftingSampler;
use drifting_mpc::trainer::{train, TrainConfig};

fn main() -> drifting_mpc::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let width: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(256);
    let out = PathBuf::from(
        args.get(3)
            .cloned()
            .unwrap_or_else(|| "target/desk_benchmark".into()),
    );
    let horizon = 30;

    let sys = discretize_zoh(&MsdParams::default())?;
    let cost_box = CostBox::default();
    let t = Instant::now();
    let ds = collect(
        &sys,
        &CollectConfig {
            n: 2000,
            horizon,
            seed: 1,
            ..CollectConfig::default()
        },
    )?;
    println!(
        "collected {} trajectories in {:.1}s",
        ds.len(),
        t.elapsed().as_secs_f64()
    );

    let cfg = TrainConfig {
        epochs,
        hidden: vec![width; 3],
        seed: 2,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let (drifting, log) = train(&ds, &cost_box, &cfg, ModelKind::Drifting)?;
    println!(
        "drifting: {:.1}s, loss {:.4} -> {:.4}",
        t.elapsed().as_secs_f64(),
        log.epochs[0].loss,
        log.epochs.last().map_or(0.0, |r| r.loss)
    );
    let t = Instant::now();
    let (prior, _) = train(&ds, &cost_box, &cfg, ModelKind::DriftingPrior)?;
    println!("drifting prior: {:.1}s", t.elapsed().as_secs_f64());
    let dcfg = DdpmConfig {
        epochs,
        hidden: vec![width; 3],
        seed: 3,
        ..DdpmConfig::default()
    };
    let t = Instant::now();
    let (ddpm, _) = ddpm_train(&ds, &cost_box, &dcfg)?;
    println!("diffusion: {:.1}s", t.elapsed().as_secs_f64());

    let drifting_sampler = DriftingSampler::new(&drifting);
    let prior_sampler = DriftingSampler::new(&prior);
    let diffusion = DdpmSampler {
        model: &ddpm,
        guidance_scale: None,
    };
    let guided = DdpmSampler {
        model: &ddpm,
        guidance_scale: Some(dcfg.guidance_scale),
    };
    let methods = [
        Method::Oracle,
        Method::Planner {
            label: "drifting".into(),
            sampler: &drifting_sampler,
        },
        Method::Planner {
            label: "drifting-prior".into(),
            sampler: &prior_sampler,
        },
        Method::Planner {
            label: "diffusion".into(),
            sampler: &diffusion,
        },
        Method::Planner {
            label: "guided-diffusion".into(),
            sampler: &guided,
        },
    ];
    let ecfg = EvalConfig {
        seed: 4,
        ..EvalConfig::default()
    };
    let t = Instant::now();
    let records = evaluate(&sys, &methods, horizon, &ecfg)?;
    println!("evaluation: {:.1}s", t.elapsed().as_secs_f64());
    let summary = export(&records, &out, &BootstrapConfig::default(), 5)?;
    println!(
        "{:<18} {:>10} {:>22} {:>10} {:>12}",
        "method", "mean", "95% CI", "median", "time [ms]"
    );
    for s in &summary {
        println!(
            "{:<18} {:>10.3} {:>10.3}..{:<10.3} {:>10.3} {:>12.3}",
            s.method, s.mean, s.ci_lo, s.ci_hi, s.median, s.time_mean_ms
        );
    }
    println!("CSV written to {}", out.display());
    Ok(())
}
