//! Bootstrap summaries (percentile and BCa) of a skewed sample, as used for
//! the evaluation tables.

use drifting_mpc::eval::{bootstrap, BootstrapConfig, CiMethod, Statistic};
use drifting_mpc::rng::{normal, stream};

fn main() -> drifting_mpc::Result<()> {
    let mut rng = stream(21, 0);
    let costs: Vec<f64> = (0..100)
        .map(|_| (0.5 * normal(&mut rng)).exp() * 40.0)
        .collect();
    for method in [CiMethod::Percentile, CiMethod::Bca] {
        for statistic in [Statistic::Mean, Statistic::Median] {
            let cfg = BootstrapConfig {
                method,
                statistic,
                ..BootstrapConfig::default()
            };
            let b = bootstrap(&costs, &cfg, &mut stream(21, 1))?;
            println!(
                "{:<10} {:<6} estimate {:.3}, se {:.3}, 95% CI [{:.3}, {:.3}], median {:.3} [{:.3}, {:.3}]",
                format!("{method:?}"),
                format!("{statistic:?}"),
                b.estimate,
                b.se, b.ci_low, b.ci_high, b.median, b.q25, b.q75
            );
        }
    }
    Ok(())
}
