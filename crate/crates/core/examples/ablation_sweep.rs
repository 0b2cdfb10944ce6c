//! Sweeps one factor against the vanilla baseline and writes the comparison
//! table and bar chart.
//!
//! cargo run --release --example ablation_sweep -- [sweep] [values,...]

use fairdd::cli::{ablate, ExperimentConfig, Sweep};

fn main() -> fairdd::Result<()> {
    let mut args = std::env::args().skip(1);
    let sweep: Sweep = args.next().as_deref().unwrap_or("beta").parse()?;
    let values: Option<Vec<String>> = args
        .next()
        .map(|v| v.split(',').map(str::to_string).collect());
    let config = ExperimentConfig {
        run_id: "example".into(),
        output_dir: std::env::temp_dir().join("fairdd-runs"),
        ..Default::default()
    };
    let table = ablate(&config, sweep, values.as_deref())?;
    print!("{}", table.to_csv()?);
    let dir = config
        .output_root()
        .join(&config.run_id)
        .join(format!("ablate-{}", sweep.as_str()));
    println!("table and chart in {}", dir.display());
    Ok(())
}
