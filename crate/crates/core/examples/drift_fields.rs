//! Drift fields on a toy 2-D batch: cost tilting of the positive weights, the
//! self-excluding negative field and the free energy minimized by the tilted
//! distribution.

use drifting_mpc::drift::{
    drift_fields, free_energy, negative_field, positive_field, tilted_distribution,
    tilted_positive_weights, DriftBatch,
};

fn main() -> drifting_mpc::Result<()> {
    let positives = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
    let costs = vec![3.0, 1.0, 2.0];
    let negatives = vec![vec![0.2, 0.2], vec![-0.3, 0.1], vec![0.0, -0.4]];
    let tau = negatives[0].clone();

    for beta in [0.0, 1.0, 10.0] {
        let batch = DriftBatch {
            positives: positives.clone(),
            costs: costs.clone(),
            negatives: negatives.clone(),
            beta,
            temperature: 1.0,
        };
        let w = tilted_positive_weights(&batch, &tau)?;
        let vp = positive_field(&batch, &tau)?;
        let vn = negative_field(&batch, &tau, 0)?;
        println!("beta {beta:>4}: weights {w:.3?}  V+ {vp:.3?}  V- {vn:.3?}");
        let fields = drift_fields(&batch)?;
        let loss = fields
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / fields.len() as f64;
        println!("            mean |V|^2 over negatives {loss:.4}");
    }

    let p0 = [0.25, 0.25, 0.5];
    for beta in [0.5, 2.0] {
        let p = tilted_distribution(&p0, &costs, beta)?;
        let f_tilted = free_energy(&p, &p0, &costs, beta)?;
        let f_prior = free_energy(&p0, &p0, &costs, beta)?;
        println!(
            "beta {beta}: tilted {p:.3?}, free energy {f_tilted:.4} (prior gives {f_prior:.4})"
        );
    }
    Ok(())
}
