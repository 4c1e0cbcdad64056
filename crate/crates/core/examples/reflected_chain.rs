//! The ideal reflected walk and its SPDE-embedded counterpart.

use rdlab::chain::{
    excursion_bound_check, occupation_fraction, run_embedded_chain, run_ideal_chain, stage_census,
    ChainConfig,
};
use rdlab::noise::NoiseStream;
use rdlab::reaction::{compute_level_M, PotentialSpec};
use rdlab::solver::{Scheme, SolverConfig};
use rdlab::stats::mean;

fn main() -> rdlab::Result<()> {
    let m = compute_level_M(&PotentialSpec::kpp())?;
    let ideal = ChainConfig::ideal(m, 2.0 / 3.0)?;
    let rec = run_ideal_chain(&ideal, 300_000, &mut NoiseStream::new(1, 0))?;
    let beta: Vec<f64> = rec.excursion_lengths().iter().map(|&b| b as f64).collect();
    println!("level M = {m}");
    println!(
        "ideal walk: mean excursion {:.4}, alpha_n/n at n = 10^4: {:.4}",
        mean(&beta),
        rec.alpha_ratio(10_000).unwrap()
    );
    for k in 4..8 {
        println!(
            "  fraction of steps with X <= -{k}: {:.4}",
            occupation_fraction(&rec, k)?
        );
    }
    for r in excursion_bound_check(2.0 / 3.0, &[0, 2, 4, 6], 20_000, 2, 4)? {
        println!(
            "  k = {}: E[time below -k] = {:.4} +- {:.4} <= {:.4}",
            r.k, r.mc_mean, r.mc_se, r.bound
        );
    }

    let stage = SolverConfig::kpp(128, 0.05)?
        .with_scheme(Scheme::SemiImplicit)
        .with_dt(1e-3);
    let embedded = ChainConfig::embedded(m, stage)?;
    let census = stage_census(&embedded, 100, 3, 4)?;
    println!(
        "\nembedded stages at lambda = 0.05: up {} down {} blowout {}, mean duration {:.3}",
        census.up, census.down, census.blowout, census.mean_duration
    );
    let rec = run_embedded_chain(&embedded, 12, &mut NoiseStream::new(4, 0))?;
    print!("{}", rec.to_csv());
    Ok(())
}
