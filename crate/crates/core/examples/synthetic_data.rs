//! Generates the biased two-group dataset and writes it as CSV.
//!
//! cargo run --example synthetic_data -- [out.csv] [group_shift]

use std::collections::BTreeMap;
use std::path::PathBuf;

use fairdd::data::{Dataset, DatasetSpec};

fn main() -> fairdd::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fairdd-synthetic.csv"));
    let group_shift = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let spec = DatasetSpec {
        group_shift,
        ..Default::default()
    };
    let data = Dataset::generate(&spec)?;

    let mut cells: BTreeMap<(u8, usize), (usize, usize)> = BTreeMap::new();
    for (i, s) in data.samples().iter().enumerate() {
        let cell = cells.entry((s.attr, s.label)).or_default();
        if data.is_test(i) {
            cell.1 += 1;
        } else {
            cell.0 += 1;
        }
    }
    println!(
        "{} samples, {} features, {} classes",
        data.len(),
        data.feature_dim(),
        data.num_classes()
    );
    println!("group class  train  test");
    for ((attr, label), (train, test)) in &cells {
        println!("{attr:<5} {label:<6} {train:>5} {test:>5}");
    }
    data.write_csv(&out)?;
    let reread = Dataset::from_csv(&out, Some(data.num_classes()), 0)?;
    println!("wrote {} ({} rows read back)", out.display(), reread.len());
    Ok(())
}
