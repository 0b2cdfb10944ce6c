//! Reverse-mode gradients of a small softmax regression, checked against
//! central differences.
//!
//! cargo run --example autodiff_gradcheck

use fairdd::autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(
    x: &Tensor,
    w: &Tensor,
    target: &Tensor,
) -> fairdd::Result<(Graph, fairdd::autodiff::Var, fairdd::autodiff::Var)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.param(w.clone());
    let t = g.constant(target.clone());
    let logits = g.matmul(xv, wv)?;
    let q = g.softmax(logits);
    let logq = g.log(q);
    let picked = g.mul(t, logq)?;
    let total = g.mean(picked);
    let root = g.scale(total, -1.0);
    Ok((g, root, wv))
}

fn main() -> fairdd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random = |r: usize, c: usize| {
        let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(vec![r, c], data)
    };
    let x = random(5, 4)?;
    let w = random(4, 3)?;
    let target = Tensor::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    ])?;

    let (g, root, wv) = loss(&x, &w, &target)?;
    println!("loss {:.6}", g.value(root).item());
    let grad = g.backward(root)?.wrt(&g, wv);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[i] += h;
        let mut minus = w.clone();
        minus.data_mut()[i] -= h;
        let (gp, rp, _) = loss(&x, &plus, &target)?;
        let (gm, rm, _) = loss(&x, &minus, &target)?;
        let numeric = (gp.value(rp).item() - gm.value(rm).item()) / (2.0 * h);
        let analytic = grad.data()[i];
        println!("dW[{i:>2}]  analytic {analytic:+.8}  numeric {numeric:+.8}");
        worst = worst.max((analytic - numeric).abs());
    }
    println!("max abs difference {worst:.2e}");
    Ok(())
}
