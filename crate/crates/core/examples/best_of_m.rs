//! Best-of-M failure rates for synthetic candidate distributions against the
//! exact law (1 − η)^M and the exponential envelope e^{−M·max(0, η − ε)}.

use drifting_mpc::planner::{best_of_m_failure_rate, SyntheticCandidates};
use drifting_mpc::rng::stream;

fn main() -> drifting_mpc::Result<()> {
    let trials = 100_000;
    println!(
        "{:>5} {:>5} {:>4} {:>10} {:>10} {:>10}",
        "eta", "eps", "M", "rate", "exact", "envelope"
    );
    for eta in [0.1, 0.3] {
        for epsilon in [0.0, 0.05] {
            let s = SyntheticCandidates::new(eta, epsilon)?;
            for m in [1usize, 2, 5, 10, 20] {
                let rate = best_of_m_failure_rate(
                    &s,
                    m,
                    trials,
                    &mut stream(m as u64, (eta * 100.0) as u64),
                )?;
                let exact = (1.0 - s.good_mass()).powi(m as i32);
                let envelope = (-(m as f64) * s.good_mass()).exp();
                println!(
                    "{eta:>5} {epsilon:>5} {m:>4} {rate:>10.5} {exact:>10.5} {envelope:>10.5}"
                );
            }
        }
    }
    Ok(())
}
