//! Evaluates the four loss terms and the weighted total on one batch of the
//! synthetic dataset.
//!
//! cargo run --example loss_terms

use fairdd::autodiff::Graph;
use fairdd::data::{features_tensor, Dataset, DatasetSpec};
use fairdd::losses::{self, LossTerms, LossWeights};
use fairdd::model::{Network, NetworkConfig};

fn main() -> fairdd::Result<()> {
    let data = Dataset::generate(&DatasetSpec::default())?;
    let batch: Vec<_> = data.train().into_iter().step_by(37).take(32).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let attrs: Vec<u8> = batch.iter().map(|s| s.attr).collect();
    let x = features_tensor(&batch)?;

    let config = NetworkConfig {
        input_dim: data.feature_dim(),
        hidden_dims: vec![32],
        num_classes: data.num_classes(),
        projector_dim: 32,
        seed: 0,
    };
    let student = Network::new(config.clone())?;
    let teacher = Network::new(NetworkConfig { seed: 1, ..config })?;
    let teacher_q = teacher.predict_proba(&x)?;
    let weights = LossWeights {
        alpha: 0.6,
        beta: 1.0,
        ..Default::default()
    };

    let mut g = Graph::new();
    let bound = student.bind(&mut g, true);
    let xv = g.constant(x);
    let out = bound.forward(&mut g, xv)?;
    let target = losses::one_hot(&labels, data.num_classes())?;
    let spd = losses::spd_loss(&mut g, out.probs, &attrs)?;
    let terms = LossTerms {
        ce: losses::cross_entropy(&mut g, &target, out.probs)?,
        sup: Some(losses::supcon(
            &mut g,
            out.embeddings,
            &labels,
            weights.tau,
        )?),
        dis: Some(losses::distill(
            &mut g,
            &teacher_q,
            out.probs,
            weights.temperature,
        )?),
        spd: Some(spd.loss),
    };
    let (total, breakdown) = losses::combine(&mut g, terms, &weights)?;
    println!("{breakdown:#?}");
    println!("spd degenerate: {}", spd.degenerate);

    let grads = g.backward(total)?;
    for (name, v) in student.param_names().iter().zip(bound.vars()) {
        let norm = grads
            .wrt(&g, v)
            .data()
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt();
        println!("|grad {name:<14}| = {norm:.4}");
    }
    Ok(())
}
