//! Shared test oracles: central finite differences and random inputs.
#![allow(dead_code)]

use fairdd::autodiff::{Graph, Tensor, Var};
use fairdd::data::Sample;
use fairdd::replay::ReplayBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Entry-wise error `|a - n| / max(|a|, |n|, 1e-4)`, maximised over all inputs.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel: f64,
    pub worst: String,
    pub entries: usize,
}

/// Compares reverse-mode gradients of a scalar graph against central differences.
pub fn fd_check<F>(inputs: &[Tensor], build: F) -> FdReport
where
    F: Fn(&mut Graph, &[Var]) -> fairdd::Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let root = build(&mut g, &vars).expect("graph builds");
    let grads = g.backward(root).expect("backward");
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
        let r = build(&mut g, &vars).expect("graph builds");
        g.value(r).item()
    };
    let mut report = FdReport {
        max_rel: 0.0,
        worst: String::new(),
        entries: 0,
    };
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.wrt(&g, vars[k]);
        for idx in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            report.entries += 1;
            if rel > report.max_rel || rel.is_nan() {
                report.max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = format!("input {k}[{idx}]: analytic {a:e}, numeric {numeric:e}");
            }
        }
    }
    report
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

pub fn prob_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, &[rows, cols], -2.0, 2.0).softmax_rows()
}

pub fn unit_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let t = uniform(rng, &[rows, cols], -1.0, 1.0);
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let r = t.row(i);
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| v / n).collect()
        })
        .collect();
    Tensor::from_rows(&data).unwrap()
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    DivPositive(usize, usize),
    AddRow(usize),
    DivRowSums(usize),
    MatW(usize),
    Gram(usize, usize, usize),
    Relu(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Normalize(usize),
    Exp(usize),
    Pow(usize),
}

/// A seeded random program over `[r, c]` tensors that ends in a scalar.
#[derive(Debug, Clone)]
pub struct RandomGraph {
    pub inputs: Vec<Tensor>,
    program: Vec<Instr>,
    tail: (usize, usize, bool),
}

impl RandomGraph {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng(seed);
        let (r, c) = (rng.random_range(2..5), rng.random_range(2..5));
        let inputs = vec![
            uniform(&mut rng, &[r, c], -1.0, 1.0),
            uniform(&mut rng, &[r, c], -1.0, 1.0),
            uniform(&mut rng, &[c, c], -1.0, 1.0),
            uniform(&mut rng, &[1, c], -1.0, 1.0),
        ];
        let mut count = 2;
        let steps = rng.random_range(4..9);
        let mut program = Vec::new();
        for _ in 0..steps {
            let mut pick = || rng.random_range(0..count);
            let (i, j, k) = (pick(), pick(), pick());
            let op = match rng.random_range(0..14) {
                0 => Instr::Add(i, j),
                1 => Instr::Sub(i, j),
                2 => Instr::Mul(i, j),
                3 => Instr::DivPositive(i, j),
                4 => Instr::AddRow(i),
                5 => Instr::DivRowSums(i),
                6 => Instr::MatW(i),
                7 => Instr::Gram(i, j, k),
                8 => Instr::Relu(i),
                9 => Instr::Softmax(i),
                10 => Instr::LogSoftmax(i),
                11 => Instr::Normalize(i),
                12 => Instr::Exp(i),
                _ => Instr::Pow(i),
            };
            program.push(op);
            count += 1;
        }
        let tail = (count - 1, rng.random_range(0..count), rng.random_bool(0.5));
        Self {
            inputs,
            program,
            tail,
        }
    }

    pub fn build(&self, g: &mut Graph, x: &[Var]) -> fairdd::Result<Var> {
        let (w, v) = (x[2], x[3]);
        let mut vals = vec![x[0], x[1]];
        for op in &self.program {
            let out = match *op {
                Instr::Add(i, j) => g.add(vals[i], vals[j])?,
                Instr::Sub(i, j) => g.sub(vals[i], vals[j])?,
                Instr::Mul(i, j) => g.mul(vals[i], vals[j])?,
                Instr::DivPositive(i, j) => {
                    let e = g.exp(vals[j]);
                    let d = g.add_scalar(e, 0.5);
                    g.div(vals[i], d)?
                }
                Instr::AddRow(i) => g.add(vals[i], v)?,
                Instr::DivRowSums(i) => {
                    let e = g.exp(vals[i]);
                    let s = g.sum_rows(e)?;
                    g.div(vals[i], s)?
                }
                Instr::MatW(i) => {
                    let m = g.matmul(vals[i], w)?;
                    g.scale(m, 0.5)
                }
                Instr::Gram(i, j, k) => {
                    let t = g.transpose(vals[j])?;
                    let gram = g.matmul(vals[i], t)?;
                    let m = g.matmul(gram, vals[k])?;
                    g.scale(m, 0.1)
                }
                Instr::Relu(i) => g.relu(vals[i]),
                Instr::Softmax(i) => g.softmax(vals[i]),
                Instr::LogSoftmax(i) => {
                    let s = g.softmax(vals[i]);
                    g.log(s)
                }
                Instr::Normalize(i) => g.l2_normalize(vals[i]),
                Instr::Exp(i) => {
                    let s = g.scale(vals[i], 0.3);
                    g.exp(s)
                }
                Instr::Pow(i) => {
                    let e = g.exp(vals[i]);
                    g.powf(e, 1.5)
                }
            };
            vals.push(out);
        }
        let (last, other, use_mean) = self.tail;
        let both = g.concat_rows(&[vals[last], vals[other]])?;
        Ok(if use_mean { g.mean(both) } else { g.sum(both) })
    }
}

/// Probability that a Binomial(n, p) count lands in `[lo, hi]`.
pub fn binomial_mass(n: u64, p: f64, lo: u64, hi: u64) -> f64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut total = 0.0;
    for k in 0..=hi {
        if k >= lo {
            total += pmf;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    total
}

/// Fraction of items whose inclusion rate over `trials` reservoirs lies
/// within the relative band around `B/N`.
pub fn reservoir_coverage(n: usize, capacity: usize, trials: u64, band: f64) -> f64 {
    let mut counts = vec![0u32; n];
    for trial in 0..trials {
        let mut r = rng(10_000 + trial);
        let mut buf = ReplayBuffer::new(capacity);
        for id in 0..n {
            let s = Sample {
                id: id as u64,
                attr: 0,
                label: 0,
                features: Vec::new(),
            };
            buf.offer(s, &mut r).expect("buffer accepts offers");
        }
        for s in buf.entries() {
            counts[s.id as usize] += 1;
        }
    }
    let target = capacity as f64 / n as f64;
    let within = counts
        .iter()
        .filter(|&&c| ((c as f64 / trials as f64) - target).abs() <= band * target + 1e-15)
        .count();
    within as f64 / n as f64
}
