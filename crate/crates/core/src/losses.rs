//! Training objectives, built on [`Graph`] so every term is differentiable.
//!
//! The combined objective is `ce + sup + alpha * dis + beta * spd`:
//!
//! * `ce`:  cross entropy against hard or soft targets, averaged over rows.
//! * `sup`: supervised contrastive loss over unit-norm embeddings, summed over anchors.
//! * `dis`: teacher/student cross entropy after tempering both distributions
//!   with power `1/T`, summed over samples.
//! * `spd`: squared gap of mean predicted class probability between the two
//!   sensitive-attribute groups, summed over classes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Tolerance for "rows sum to one".
pub const PROB_TOL: f64 = 1e-6;
/// Tolerance for "rows have unit norm".
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Distillation weight.
    pub alpha: f64,
    /// Statistical parity disparity weight.
    pub beta: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Distillation temperature.
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            tau: 0.07,
            temperature: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be nonnegative (alpha {}, beta {})",
                self.alpha, self.beta
            )));
        }
        if !(self.tau > 0.0 && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperatures must be positive (tau {}, T {})",
                self.tau, self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub sup: f64,
    pub dis: f64,
    pub spd: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Weighted total from already evaluated components.
    pub fn combine(ce: f64, sup: f64, dis: f64, spd: f64, weights: &LossWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            ce,
            sup,
            dis,
            spd,
            total: ce + sup + weights.alpha * dis + weights.beta * spd,
        })
    }

    pub fn recompute_total(&self, weights: &LossWeights) -> f64 {
        self.ce + self.sup + weights.alpha * self.dis + weights.beta * self.spd
    }

    pub fn is_finite(&self) -> bool {
        [self.ce, self.sup, self.dis, self.spd, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Running mean accumulator step.
    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.ce += other.ce;
        self.sup += other.sup;
        self.dis += other.dis;
        self.spd += other.spd;
        self.total += other.total;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ce: self.ce * factor,
            sup: self.sup * factor,
            dis: self.dis * factor,
            spd: self.spd * factor,
            total: self.total * factor,
        }
    }
}

/// Graph handles of the individual terms. Absent terms are not evaluated.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub ce: Var,
    pub sup: Option<Var>,
    pub dis: Option<Var>,
    pub spd: Option<Var>,
}

/// Builds the weighted total and reports its components.
pub fn combine(
    g: &mut Graph,
    terms: LossTerms,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    weights.validate()?;
    let mut total = terms.ce;
    if let Some(sup) = terms.sup {
        total = g.add(total, sup)?;
    }
    if let Some(dis) = terms.dis {
        let w = g.scale(dis, weights.alpha);
        total = g.add(total, w)?;
    }
    if let Some(spd) = terms.spd {
        let w = g.scale(spd, weights.beta);
        total = g.add(total, w)?;
    }
    let value = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
    let breakdown = LossBreakdown {
        ce: g.value(terms.ce).item(),
        sup: value(terms.sup),
        dis: value(terms.dis),
        spd: value(terms.spd),
        total: g.value(total).item(),
    };
    Ok((total, breakdown))
}

pub fn check_probability_rows(name: &str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(Error::InvalidInput(format!(
            "{name} must be 2-D, got {:?}",
            t.shape()
        )));
    }
    for i in 0..t.rows() {
        let row = t.row(i);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!(
                "{name} row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// `-(1/N) Σ_i Σ_j p_ij log q_ij` with the `0 · log 0 = 0` convention.
pub fn cross_entropy(g: &mut Graph, target: &Tensor, q: Var) -> Result<Var> {
    check_same_shape("cross_entropy", target, g.value(q))?;
    check_probability_rows("cross_entropy target", target)?;
    check_probability_rows("cross_entropy prediction", g.value(q))?;
    let n = target.rows().max(1) as f64;
    let p = g.constant(target.clone());
    let log_q = g.log(q);
    let prod = g.mul(p, log_q)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0 / n))
}

/// Supervised contrastive loss over the rows of `z`, summed over anchors.
///
/// Anchors without a same-label partner contribute nothing. The denominator
/// of each anchor runs over every other row in the batch.
pub fn supcon(g: &mut Graph, z: Var, labels: &[usize], tau: f64) -> Result<Var> {
    let zt = g.value(z);
    let n = zt.rows();
    if zt.shape().len() != 2 || labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "supcon",
            lhs: zt.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput(
            "supcon needs at least two samples".into(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tau must be positive, got {tau}"
        )));
    }
    for i in 0..n {
        let norm = zt.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        // a zero row is what normalisation yields for an all-zero projection
        if (norm - 1.0).abs() > UNIT_TOL && norm != 0.0 {
            return Err(Error::InvalidInput(format!(
                "supcon embedding row {i} has norm {norm}, expected 1 (or 0)"
            )));
        }
    }

    // weight[i][p] = 1/|P(i)| for positives p of anchor i
    let mut weight = vec![0.0; n * n];
    let mut has_pos = vec![0.0; n];
    for i in 0..n {
        let pos: Vec<usize> = (0..n)
            .filter(|&p| p != i && labels[p] == labels[i])
            .collect();
        if pos.is_empty() {
            continue;
        }
        has_pos[i] = 1.0;
        let w = 1.0 / pos.len() as f64;
        for p in pos {
            weight[i * n + p] = w;
        }
    }
    if has_pos.iter().all(|&v| v == 0.0) {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let off_diag: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
        .collect();

    let zt_var = g.transpose(z)?;
    let sim = g.matmul(z, zt_var)?;
    let logits = g.scale(sim, 1.0 / tau);
    let e = g.exp(logits);
    let mask = g.constant(Tensor::new(vec![n, n], off_diag)?);
    let masked = g.mul(e, mask)?;
    let denom = g.sum_rows(masked)?;
    let log_denom = g.log(denom);
    let anchor_mask = g.constant(Tensor::new(vec![n, 1], has_pos)?);
    let lse = g.mul(log_denom, anchor_mask)?;
    let lse_sum = g.sum(lse);
    let w = g.constant(Tensor::new(vec![n, n], weight)?);
    let pos_logits = g.mul(logits, w)?;
    let pos_sum = g.sum(pos_logits);
    g.sub(lse_sum, pos_sum)
}

#[derive(Debug, Clone, Copy)]
pub struct SpdOutput {
    pub loss: Var,
    /// Set when the batch holds only one attribute group; the loss is then 0.
    pub degenerate: bool,
}

/// `Σ_y (mean_{a=0} q_y − mean_{a=1} q_y)²`.
pub fn spd_loss(g: &mut Graph, q: Var, attrs: &[u8]) -> Result<SpdOutput> {
    let qt = g.value(q);
    let n = qt.rows();
    if qt.shape().len() != 2 || attrs.len() != n {
        return Err(Error::ShapeMismatch {
            op: "spd_loss",
            lhs: qt.shape().to_vec(),
            rhs: vec![attrs.len()],
        });
    }
    if let Some(bad) = attrs.iter().find(|&&a| a > 1) {
        return Err(Error::InvalidInput(format!(
            "sensitive attribute must be 0 or 1, got {bad}"
        )));
    }
    let n1 = attrs.iter().filter(|&&a| a == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Ok(SpdOutput {
            loss: g.constant(Tensor::scalar(0.0)),
            degenerate: true,
        });
    }
    let selector = |group: u8, count: usize| -> Result<Tensor> {
        let data = attrs
            .iter()
            .map(|&a| if a == group { 1.0 / count as f64 } else { 0.0 })
            .collect();
        Tensor::new(vec![1, n], data)
    };
    let w0 = g.constant(selector(0, n0)?);
    let w1 = g.constant(selector(1, n1)?);
    let m0 = g.matmul(w0, q)?;
    let m1 = g.matmul(w1, q)?;
    let d = g.sub(m0, m1)?;
    let sq = g.mul(d, d)?;
    Ok(SpdOutput {
        loss: g.sum(sq),
        degenerate: false,
    })
}

/// Raises each probability to `1/T` and renormalizes each row.
pub fn temper(q: &Tensor, temperature: f64) -> Tensor {
    let c = q.cols();
    let mut out = q.map(|v| v.powf(1.0 / temperature));
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Distillation loss: `-Σ_i Σ_j t'_ij log s'_ij`, where `t'` and `s'` are the
/// tempered teacher and student distributions. The teacher is a constant.
pub fn distill(g: &mut Graph, teacher_q: &Tensor, student_q: Var, temperature: f64) -> Result<Var> {
    check_same_shape("distill", teacher_q, g.value(student_q))?;
    check_probability_rows("distill teacher", teacher_q)?;
    check_probability_rows("distill student", g.value(student_q))?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput(format!(
            "distillation temperature must be positive, got {temperature}"
        )));
    }
    let t = g.constant(temper(teacher_q, temperature));
    let powered = g.powf(student_q, 1.0 / temperature);
    let norm = g.sum_rows(powered)?;
    let s = g.div(powered, norm)?;
    let log_s = g.log(s);
    let prod = g.mul(t, log_s)?;
    let total = g.sum(prod);
    Ok(g.scale(total, -1.0))
}

/// Evaluates a term on constant inputs and returns its value.
fn eval(build: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    Ok(g.value(v).item())
}

pub fn cross_entropy_value(target: &Tensor, q: &Tensor) -> Result<f64> {
    eval(|g| {
        let q = g.constant(q.clone());
        cross_entropy(g, target, q)
    })
}

pub fn supcon_value(z: &Tensor, labels: &[usize], tau: f64) -> Result<f64> {
    eval(|g| {
        let z = g.constant(z.clone());
        supcon(g, z, labels, tau)
    })
}

/// Returns the loss and the degenerate-batch flag.
pub fn spd_value(q: &Tensor, attrs: &[u8]) -> Result<(f64, bool)> {
    let mut g = Graph::new();
    let qv = g.constant(q.clone());
    let out = spd_loss(&mut g, qv, attrs)?;
    Ok((g.value(out.loss).item(), out.degenerate))
}

pub fn distill_value(teacher_q: &Tensor, student_q: &Tensor, temperature: f64) -> Result<f64> {
    eval(|g| {
        let s = g.constant(student_q.clone());
        distill(g, teacher_q, s, temperature)
    })
}

/// One-hot rows for hard labels.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        data[i * num_classes + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), num_classes], data)
}
