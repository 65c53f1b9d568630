//! Exact zero-order-hold discretization of the mass-spring-damper and a
//! comparison against a truncated Taylor series of the augmented exponential.

use drifting_mpc::dynamics::{discretize_linear, discretize_zoh, MsdParams};
use ndarray::{s, Array2};

fn main() -> drifting_mpc::Result<()> {
    let params = MsdParams::default();
    let sys = discretize_zoh(&params)?;
    println!("A_d =\n{:.10}", sys.a);
    println!("B_d =\n{:.10}", sys.b);
    println!("spectral radius {:.8}", sys.spectral_radius());

    let (a, b) = params.continuous();
    let mut aug = Array2::<f64>::zeros((3, 3));
    aug.slice_mut(s![..2, ..2]).assign(&(&a * params.dt));
    aug.slice_mut(s![..2, 2..]).assign(&(&b * params.dt));
    let mut term = Array2::<f64>::eye(3);
    let mut series = term.clone();
    for k in 1..=40 {
        term = term.dot(&aug) / k as f64;
        series += &term;
    }
    let err = (&sys.a - &series.slice(s![..2, ..2])).mapv(f64::abs).sum();
    println!("|A_d - Taylor_40| = {err:.2e}");

    // two half steps compose to one full step
    let half = discretize_linear(&a, &b, params.dt / 2.0)?;
    let composed = half.a.dot(&half.a);
    println!(
        "|A(dt/2)^2 - A(dt)| = {:.2e}",
        (&composed - &sys.a).mapv(f64::abs).sum()
    );

    let mut x = vec![1.0, 0.0];
    for _ in 0..100 {
        x = sys.step(&x, &[0.0])?;
    }
    println!("uncontrolled state after 5 s: ({:.5}, {:.5})", x[0], x[1]);
    Ok(())
}
