//! Snapshot statistics of the invariant measure, the lower tail of the
//! infimum, and the roughness diagnostics on a refined profile.

use rdlab::ergodics::{
    dimension_doubling, dyadic_r_grid, kb_sample, lower_tail_curve, modulus_estimator,
    refine_snapshot, summary_csv, CantorSet,
};
use rdlab::noise::NoiseStream;
use rdlab::solver::{Scheme, SolverConfig};
use rdlab::torus_field::{Field, TorusGrid};

fn main() -> rdlab::Result<()> {
    let coarse = SolverConfig::kpp(256, 1.5)?
        .with_scheme(Scheme::SemiImplicit)
        .with_dt(1e-3);
    let start = Field::constant(coarse.grid, 1.0);
    let measure = kb_sample(&coarse, &start, 5.0, 1.0, 200, &mut NoiseStream::new(1, 0))?;
    print!("{}", summary_csv(&measure.summary()?));
    let eps: Vec<f64> = (0..6).map(|k| 1e-3 * 3f64.powi(k)).collect();
    let tail = lower_tail_curve(&measure, &eps)?;
    for (e, p) in &tail.rows {
        println!("P(inf <= {e:.3}) = {p:.3}");
    }
    if let Some(fit) = tail.fit {
        println!("log-log slope {:.3}", fit.slope);
    }

    // One small-noise snapshot refined to J = 2^14.
    let lambda = 0.05;
    let quiet = SolverConfig::kpp(256, lambda)?
        .with_scheme(Scheme::SemiImplicit)
        .with_dt(1e-3);
    let m = kb_sample(&quiet, &start, 5.0, 1.0, 1, &mut NoiseStream::new(2, 0))?;
    let fine = SolverConfig::kpp(1 << 14, lambda)?;
    let snap = refine_snapshot(
        &m.snapshots[0].1,
        &fine,
        1e-4,
        &mut NoiseStream::with_tag(2, 0, 6),
    )?;
    let r_grid = dyadic_r_grid(TorusGrid::new(1 << 14)?, 16);
    let stats = modulus_estimator(&snap, &fine.diffusion, lambda, &r_grid)?;
    println!(
        "\nmodulus at J = 2^14: limsup/scale {:.3}, liminf/scale {:.3}",
        stats.limsup_norm, stats.liminf_norm
    );
    let set = CantorSet { depth: 8 };
    println!(
        "Cantor set dimension {:.4}, dimension of its image {:.3}",
        set.dimension(),
        dimension_doubling(&snap, &set, &[1, 2, 3, 4, 5, 6])?
    );
    Ok(())
}
