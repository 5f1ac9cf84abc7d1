use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::inference::{decode_tuple, log_sigmoid, sigmoid, GroundRlr};
use super::model::RlrModel;
use super::sampling::SampleBatch;
use crate::error::{Error, Result};

/// Learned weights saturate the sigmoid beyond this bound.
pub const WEIGHT_CLAMP: f64 = 30.0;
/// Newton stops once the gradient of a node's log-likelihood is this small.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeReport {
    pub node: String,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Conditions whose weight ended at the clamp.
    pub clamped: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnReport {
    pub nodes: Vec<NodeReport>,
}

impl LearnReport {
    pub fn any_clamped(&self) -> bool {
        self.nodes.iter().any(|n| !n.clamped.is_empty())
    }
}

/// Distinct feature rows with their positive and negative counts.
struct Rows {
    x: Vec<Vec<f64>>,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl Rows {
    fn objective(&self, w: &[f64]) -> f64 {
        let mut ll = 0.0;
        for i in 0..self.x.len() {
            let z = dot(&self.x[i], w);
            ll += self.pos[i] * log_sigmoid(z) + self.neg[i] * log_sigmoid(-z);
        }
        ll
    }

    fn gradient_and_information(&self, w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = w.len();
        let mut g = DVector::zeros(k);
        let mut a = DMatrix::zeros(k, k);
        for i in 0..self.x.len() {
            let x = &self.x[i];
            let s = sigmoid(dot(x, w));
            let total = self.pos[i] + self.neg[i];
            let r = self.pos[i] - total * s;
            let v = total * s * (1.0 - s);
            for p in 0..k {
                g[p] += r * x[p];
                for q in 0..k {
                    a[(p, q)] += v * x[p] * x[q];
                }
            }
        }
        (g, a)
    }
}

fn dot(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn newton_direction(g: &DVector<f64>, a: &DMatrix<f64>) -> DVector<f64> {
    let k = g.len();
    let scale = (0..k).map(|i| a[(i, i)]).fold(0.0f64, f64::max).max(1.0);
    let mut ridge = 0.0;
    loop {
        let m = a + DMatrix::identity(k, k) * ridge;
        if let Some(ch) = m.cholesky() {
            return ch.solve(g);
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
    }
}

fn fit(rows: &Rows, k: usize) -> (Vec<f64>, usize, f64, bool) {
    let mut w = vec![0.0; k];
    let mut ll = rows.objective(&w);
    for it in 0..MAX_ITERATIONS {
        let (g, a) = rows.gradient_and_information(&w);
        let gnorm = g.norm();
        if gnorm <= GRADIENT_TOLERANCE {
            return (w, it, gnorm, true);
        }
        let d = newton_direction(&g, &a);
        let slope = g.dot(&d);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = w
                .iter()
                .zip(d.iter())
                .map(|(wi, di)| (wi + t * di).clamp(-WEIGHT_CLAMP, WEIGHT_CLAMP))
                .collect();
            let cll = rows.objective(&cand);
            if cll >= ll + 1e-4 * t * slope {
                moved = cand != w;
                w = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            let (g, _) = rows.gradient_and_information(&w);
            let gnorm = g.norm();
            return (w, it + 1, gnorm, gnorm <= GRADIENT_TOLERANCE);
        }
    }
    let (g, _) = rows.gradient_and_information(&w);
    let gnorm = g.norm();
    (w, MAX_ITERATIONS, gnorm, gnorm <= GRADIENT_TOLERANCE)
}

/// Under separation the likelihood keeps rising along a weight that is
/// already large; such weights go to the clamp if that does not lower it.
fn saturate(rows: &Rows, w: &mut [f64]) {
    let (g, _) = rows.gradient_and_information(w);
    let mut ll = rows.objective(w);
    for i in 0..w.len() {
        if w[i].abs() > WEIGHT_CLAMP / 2.0 && g[i] * w[i] > 0.0 {
            let old = w[i];
            w[i] = WEIGHT_CLAMP.copysign(old);
            let cll = rows.objective(w);
            if cll >= ll {
                ll = cll;
            } else {
                w[i] = old;
            }
        }
    }
}

/// Fits every node's condition weights to fully observed worlds by
/// maximizing the node's conditional log-likelihood. The weights of
/// `structure` are ignored; each fit starts from zero.
pub fn learn_weights(structure: &RlrModel, batch: &SampleBatch) -> Result<(RlrModel, LearnReport)> {
    let g = GroundRlr::new(structure, batch.domains.clone())?;
    for w in &batch.worlds {
        if *w.layout().domains() != batch.domains || **w.signature() != *structure.signature {
            return Err(Error::InvalidArgument("batch world does not match the model".into()));
        }
    }
    let mut learned = structure.clone();
    let mut reports = Vec::new();
    for (pos, node) in structure.nodes.iter().enumerate() {
        let rel = node.rel();
        let kernel = g.kernel(rel);
        let k = node.conditions.len();
        let start = g.layout().relation_range(rel).start;
        let mut table: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
        let mut head = vec![0usize; kernel.radix.len()];
        for w in &batch.worlds {
            let bits = w.bits();
            let shared: Vec<Option<f64>> = (0..k)
                .map(|c| kernel.conds[c].head_free.then(|| kernel.feature(c, bits, &[])))
                .collect();
            for t in 0..kernel.num_groundings() {
                decode_tuple(&kernel.radix, t, &mut head);
                let key: Vec<u64> = (0..k)
                    .map(|c| shared[c].unwrap_or_else(|| kernel.feature(c, bits, &head)).to_bits())
                    .collect();
                let e = table.entry(key).or_insert((0.0, 0.0));
                if bits[start + t] {
                    e.0 += 1.0;
                } else {
                    e.1 += 1.0;
                }
            }
        }
        let mut rows = Rows {
            x: Vec::new(),
            pos: Vec::new(),
            neg: Vec::new(),
        };
        for (key, (p, n)) in table {
            rows.x.push(key.into_iter().map(f64::from_bits).collect());
            rows.pos.push(p);
            rows.neg.push(n);
        }
        let (mut weights, iterations, gradient_norm, converged) = fit(&rows, k);
        saturate(&rows, &mut weights);
        let clamped = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() >= WEIGHT_CLAMP)
            .map(|(i, _)| i)
            .collect();
        for (c, w) in learned.nodes[pos].conditions.iter_mut().zip(&weights) {
            c.weight = *w;
        }
        reports.push(NodeReport {
            node: structure.signature.relation(rel).name.clone(),
            weights,
            iterations,
            gradient_norm,
            converged,
            clamped,
        });
    }
    Ok((learned, LearnReport { nodes: reports }))
}
