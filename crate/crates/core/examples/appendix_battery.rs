//! Closed forms of the auxiliary estimates next to their Monte Carlo checks.

use rdlab::appendix_kit::{
    gauss_negative_moment, run_appendix_battery, sdi_hitting_bound, small_ball_probability,
    BatterySize,
};

fn main() -> rdlab::Result<()> {
    for c in [0.25, 0.5, 1.0, 2.0] {
        println!(
            "P(sup |B| small), eps/sqrt(A) = {c}: {:.10}",
            small_ball_probability(c, 1.0)?
        );
    }
    println!(
        "SDI bound a=1 b=1 t=1 eps=0.1: {:.10}",
        sdi_hitting_bound(1.0, 1.0, 1.0, 0.1)?
    );
    println!("E|X|^-0.5, Var 1: {:.10}", gauss_negative_moment(0.5, 1.0)?);

    let size = BatterySize {
        small_ball_paths: 20_000,
        sdi_paths: 5_000,
        gauss_samples: 200_000,
        convolution_replicas: 1000,
        ..BatterySize::default()
    };
    let report = run_appendix_battery(12, size, 4)?;
    println!(
        "\n{}",
        serde_json::to_string_pretty(&report).expect("report serialises")
    );
    Ok(())
}
