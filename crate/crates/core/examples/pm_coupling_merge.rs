//! Merge probabilities of the PM and AM couplings over initial distances,
//! and the supermartingale audit of the mass gap.

use rdlab::couplings::{
    coupling_streams, coupling_success_experiment, mass_supermartingale_audit, ordered_delta_pair,
    run_coupling, CouplingConfig, CouplingKind,
};
use rdlab::solver::{run_ensemble, SolverConfig};

fn main() -> rdlab::Result<()> {
    let solver = SolverConfig::kpp(32, 0.2)?;
    let cfg = CouplingConfig::new(solver.clone(), 1.0);
    let deltas = [0.04, 0.02, 0.01, 0.005];
    for kind in [CouplingKind::PM, CouplingKind::AM] {
        let table = coupling_success_experiment(&deltas, kind, 0.5, &cfg, 60, 9, 4)?;
        println!(
            "{} coupling (monotone in delta: {})",
            kind.name(),
            table.monotone
        );
        for r in &table.rows {
            println!(
                "  delta {:<6} merged {:>3}/{}  95% CI [{:.2}, {:.2}]",
                r.delta, r.successes, r.trials, r.ci_lo, r.ci_hi
            );
        }
    }

    let mut audit_cfg = CouplingConfig::new(solver.clone(), 0.5);
    audit_cfg.mass_stride = 64;
    audit_cfg.merge_tol = Some(0.0);
    let (hi, lo) = ordered_delta_pair(solver.grid, 0.5, 0.05)?;
    let runs = run_ensemble(100, 4, |r| {
        let mut s = coupling_streams(CouplingKind::PM, 10, r as u64);
        Ok(run_coupling(&hi, &lo, CouplingKind::PM, &audit_cfg, &mut s)?.state)
    })?;
    let audit = mass_supermartingale_audit(&runs, 1e-6)?;
    println!(
        "\nE[exp(-t) X(t)] over 100 PM replicas (non-increasing: {}):",
        audit.monotone
    );
    for ((t, m), se) in audit.times.iter().zip(&audit.mean_y).zip(&audit.se_y) {
        println!("  t = {t:.3}: {m:.5} +- {se:.5}");
    }
    Ok(())
}
