//! Image sum against theta series, and the kernel-difference integrals.

use rdlab::heat_kernel::{
    apply_semigroup, kernel_fourier, kernel_image_sum, kernel_l1_difference, kernel_l2_difference,
    KernelEvalConfig,
};
use rdlab::torus_field::{Field, TorusGrid};
use std::f64::consts::PI;

fn main() -> rdlab::Result<()> {
    let cfg = KernelEvalConfig::default();
    println!(
        "{:>8} {:>22} {:>22} {:>10}",
        "t", "image sum", "theta series", "|diff|"
    );
    for t in [0.01, 0.1, 0.5, 2.0, 10.0] {
        let a = kernel_image_sum(t, 0.3, -0.2, &cfg)?;
        let b = kernel_fourier(t, 0.3, -0.2, &cfg)?;
        println!("{t:>8} {a:>22.16} {b:>22.16} {:>10.1e}", (a - b).abs());
    }

    // cos(pi x) is an eigenfunction with eigenvalue exp(-pi^2 t).
    let grid = TorusGrid::new(128)?;
    let f = Field::from_fn(grid, |x| (PI * x).cos())?;
    let g = apply_semigroup(&f, 0.1)?;
    println!(
        "\nP_0.1 cos(pi x) at x=0: {:.15} (exp(-pi^2/10) = {:.15})",
        g.values()[64],
        (-PI * PI * 0.1).exp()
    );

    println!(
        "\n{:>10} {:>14} {:>14}",
        "|x-z|", "L1 / d log(1/d)", "L2 / d"
    );
    for k in 3..=8 {
        let d = 0.5f64.powi(k);
        let l1 = kernel_l1_difference(0.0, d, 1.0, &cfg)?;
        let l2 = kernel_l2_difference(0.0, d, 1.0, &cfg)?;
        println!(
            "{d:>10.6} {:>14.6} {:>14.6}",
            l1 / (d * (1.0 / d).ln()),
            l2 / d
        );
    }
    Ok(())
}
