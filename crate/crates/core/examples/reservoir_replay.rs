//! Streams two domains through a reservoir buffer and shows how its
//! composition tracks the stream, then freezes it.
//!
//! cargo run --example reservoir_replay -- [capacity]

use fairdd::data::{Dataset, DatasetSpec};
use fairdd::replay::ReplayBuffer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn composition(buf: &ReplayBuffer) -> [usize; 2] {
    let mut counts = [0; 2];
    for s in buf.entries() {
        counts[s.attr as usize] += 1;
    }
    counts
}

fn main() -> fairdd::Result<()> {
    let capacity: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let data = Dataset::generate(&DatasetSpec::default())?;
    let domains = data.partition_by_attribute();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut buf = ReplayBuffer::new(capacity);

    for d in domains.iter().rev() {
        for s in &d.train {
            buf.offer(s.clone(), &mut rng)?;
        }
        let [g0, g1] = composition(&buf);
        println!(
            "after domain {}: seen {:>5}, stored {:>3} (group 0: {g0:>3}, group 1: {g1:>3})",
            d.attr,
            buf.stream_count(),
            buf.len()
        );
    }
    let share = domains[0].train.len() as f64 / buf.stream_count() as f64;
    println!(
        "expected group-0 share {share:.3}, stored {:.3}",
        composition(&buf)[0] as f64 / buf.len() as f64
    );

    let replay = buf.sample_batch(8, &mut rng);
    println!(
        "memory batch ids {:?}",
        replay.iter().map(|s| s.id).collect::<Vec<_>>()
    );

    buf.freeze();
    let rejected = buf.offer(domains[0].train[0].clone(), &mut rng);
    println!(
        "checksum {}  offer after freeze: {}",
        buf.checksum(),
        rejected.map_or_else(|e| e.to_string(), |_| "accepted".into())
    );
    Ok(())
}
