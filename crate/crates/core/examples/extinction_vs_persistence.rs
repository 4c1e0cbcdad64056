//! Phase sweep in the noise strength: Lyapunov slope of log sup and
//! occupation of small infima.

use rdlab::ergodics::{
    phase_csv_header, phase_csv_row, phase_sweep, transition_window, SweepConfig,
};
use rdlab::solver::{Scheme, SolverConfig};
use rdlab::torus_field::Field;

fn main() -> rdlab::Result<()> {
    let solver = SolverConfig::kpp(64, 0.0)?
        .with_scheme(Scheme::SemiImplicit)
        .with_dt(2e-3)
        .with_t_end(20.0)
        .with_record_stride(10);
    let eps = vec![0.1, 0.01, 0.001];
    let cfg = SweepConfig {
        solver: solver.clone(),
        replicas: 8,
        lyapunov_window: (4.0, 20.0),
        eps_grid: eps.clone(),
        persist_occupation: 0.05,
        persist_mean_inf: 0.05,
    };
    let lambdas = [0.05, 0.5, 1.0, 1.5, 2.0, 3.0];
    let points = phase_sweep(&lambdas, &Field::constant(solver.grid, 1.0), &cfg, 3, 4)?;
    println!("{}", phase_csv_header(&eps));
    for p in &points {
        println!("{}", phase_csv_row(p));
    }
    match transition_window(&points) {
        Some((a, b)) => println!("\nundecided window: ({a}, {b})"),
        None => println!("\nno persistent/extinct pair in the grid"),
    }
    Ok(())
}
