//! Builds the encoder/head/projector network, saves a parameter snapshot and
//! restores it bit for bit.
//!
//! cargo run --example network_snapshot

use fairdd::autodiff::Tensor;
use fairdd::model::{Network, NetworkConfig, NetworkParams};

fn main() -> fairdd::Result<()> {
    let config = NetworkConfig {
        input_dim: 8,
        hidden_dims: vec![16],
        num_classes: 3,
        projector_dim: 4,
        seed: 3,
    };
    let net = Network::new(config)?;
    println!("{} parameters", net.parameter_count());
    for (name, p) in net.param_names().iter().zip(net.params()) {
        println!("  {name:<14} {:?}", p.shape());
    }

    let x = Tensor::from_rows(&[[0.5; 8], [-1.0; 8]])?;
    let (logits, probs, embeddings) = net.forward_values(&x)?;
    println!("logits     {:?}", logits.row(0));
    println!("probs      {:?}", probs.row(0));
    println!("embedding  {:?}", embeddings.row(0));

    let path = std::env::temp_dir().join("fairdd-snapshot.json");
    net.snapshot().save(&path)?;
    let restored = Network::from_params(&NetworkParams::load(&path)?)?;
    println!("checksum   {}", net.checksum());
    println!("restored   {}", restored.checksum());
    println!(
        "predictions equal: {}",
        restored.predict_proba(&x)? == net.predict_proba(&x)?
    );
    std::fs::remove_file(&path)?;
    Ok(())
}
