//! Cross-domain mixup of a current batch with replayed memory samples.
//!
//! cargo run --example mixup -- [theta]

use fairdd::augment::{mix, MixupConfig};
use fairdd::data::{Dataset, DatasetSpec, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fairdd::Result<()> {
    let theta: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.8);
    let data = Dataset::generate(&DatasetSpec::default())?;
    let domains = data.partition_by_attribute();
    let spread = |d: &[Sample]| {
        d.iter()
            .step_by(d.len() / 6)
            .take(6)
            .cloned()
            .collect::<Vec<_>>()
    };
    let (current, memory) = (spread(&domains[0].train), spread(&domains[1].train));
    let config = MixupConfig {
        theta,
        enabled: true,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mixed = mix(&current, &memory, data.num_classes(), &config, &mut rng)?;
    println!("theta {theta}");
    println!("row  label  partner(label, domain)  lambda  soft label");
    for (i, s) in current.iter().enumerate() {
        let j = mixed.partners[i];
        let (partner, domain) = if j < current.len() {
            (&current[j], "current")
        } else {
            (&memory[j - current.len()], "memory")
        };
        println!(
            "{i:<4} {:<6} {j:>2} ({}, {domain:<7})         {:.3}   {:?}",
            s.label,
            partner.label,
            mixed.lambdas[i],
            mixed
                .soft_labels
                .row(i)
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
