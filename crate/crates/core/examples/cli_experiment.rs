//! Drive the command-line entry point in-process: a short simulation, its
//! config echo, and a rerun from that echo.

use rdlab::cli::run;

fn main() {
    let out = std::env::temp_dir().join("rdlab-cli-example");
    let out = out.to_str().expect("utf-8 temp path");
    let code = run([
        "rdlab",
        "simulate",
        "--seed",
        "7",
        "--set",
        "grid.points=64",
        "--set",
        "solver.t_end=0.5",
        "--set",
        "solver.snapshot_times=0.5",
        "--out",
        out,
    ]);
    println!("simulate exited {code}");
    for f in ["config.echo", "meta.json"] {
        let text = std::fs::read_to_string(format!("{out}/{f}")).expect("output written");
        println!("--- {f}\n{text}");
    }
    let echo = format!("{out}/config.echo");
    let again = format!("{out}/again");
    let code = run(["rdlab", "simulate", "--config", &echo, "--out", &again]);
    let same = std::fs::read(format!("{out}/observables.csv")).ok()
        == std::fs::read(format!("{again}/observables.csv")).ok();
    println!("rerun from echo exited {code}; identical observables: {same}");
}
