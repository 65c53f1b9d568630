//! Finite-horizon LQR by backward Riccati recursion: value function, gains and
//! a closed-loop rollout whose cost matches `x0ᵀ P_0 x0`.

use drifting_mpc::cost::{cost, CostParams};
use drifting_mpc::dynamics::{discretize_zoh, rollout, MsdParams};
use drifting_mpc::oracle::{solve_riccati, LqrController};
use drifting_mpc::rng::stream;

fn main() -> drifting_mpc::Result<()> {
    let sys = discretize_zoh(&MsdParams::default())?;
    let omega = CostParams::new(vec![1.0, 1.0], vec![0.1])?;
    let x0 = [1.5, -0.5];
    for horizon in [30, 50, 100] {
        let sol = solve_riccati(&sys, &omega, horizon)?;
        let mut ctrl = LqrController {
            solution: &sol,
            action_noise: 0.0,
        };
        let tau = rollout(&sys, &x0, &mut ctrl, horizon, &mut stream(0, 0))?;
        println!(
            "H={horizon:>3}: value {:.6}, rollout cost {:.6}, K_0 = {:.4}",
            sol.value(&x0),
            cost(&tau, &omega)?,
            sol.gains[0]
        );
    }
    Ok(())
}
