//! Noise-free KPP against the exact logistic solution, then the same start
//! with noise.

use rdlab::noise::NoiseStream;
use rdlab::solver::{simulate, SolverConfig};
use rdlab::torus_field::Field;

fn main() -> rdlab::Result<()> {
    let quiet = SolverConfig::kpp(64, 0.0)?.with_t_end(1.0);
    let psi0 = Field::constant(quiet.grid, 0.5);
    let traj = simulate(&psi0, &quiet, &mut NoiseStream::new(1, 0))?;
    let e = 1f64.exp();
    let exact = 0.5 * e / (1.0 + 0.5 * (e - 1.0));
    let last = traj.inf.len() - 1;
    println!(
        "lambda = 0: u(1) = {:.6}, logistic = {exact:.6}",
        traj.inf[last]
    );

    let noisy = SolverConfig::kpp(64, 0.5)?
        .with_t_end(5.0)
        .with_record_stride(400);
    let traj = simulate(&psi0, &noisy, &mut NoiseStream::new(1, 0))?;
    println!(
        "\nlambda = 0.5:\n{:>8} {:>10} {:>10} {:>10}",
        "t", "inf", "sup", "mean"
    );
    for i in (0..traj.times.len()).step_by(8) {
        println!(
            "{:>8.3} {:>10.5} {:>10.5} {:>10.5}",
            traj.times[i], traj.inf[i], traj.sup[i], traj.mean[i]
        );
    }
    Ok(())
}
