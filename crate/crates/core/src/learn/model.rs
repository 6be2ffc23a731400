use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::data::LabelMap;
use super::featurizer::SparseVector;

/// Multinomial logistic head over sparse features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub labels: LabelMap,
    pub dim: usize,
    /// Row-major, one row of `dim` weights per class.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Softmax probability of `class`.
    pub confidence: f32,
}

impl LinearModel {
    pub fn zeros(labels: LabelMap, dim: usize) -> Self {
        let k = labels.len();
        LinearModel { labels, dim, weights: alloc::vec![0.0; k * dim], bias: alloc::vec![0.0; k] }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn scores(&self, x: &SparseVector, out: &mut Vec<f32>) {
        out.clear();
        for (c, b) in self.bias.iter().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            out.push(b + x.iter().map(|(i, v)| row[i] * v).sum::<f32>());
        }
    }

    /// Class probabilities, written into `out`.
    pub fn probabilities(&self, x: &SparseVector, out: &mut Vec<f32>) {
        self.scores(x, out);
        softmax(out);
    }

    /// Highest-probability class; ties go to the lower class index.
    pub fn predict(&self, x: &SparseVector) -> Prediction {
        let mut p = Vec::with_capacity(self.num_classes());
        self.probabilities(x, &mut p);
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        Prediction { class: best, confidence: p[best].clamp(0.0, 1.0) }
    }

    pub fn predict_label(&self, x: &SparseVector) -> (&str, f32) {
        let p = self.predict(x);
        (self.labels.label(p.class), p.confidence)
    }
}

pub(crate) fn softmax(v: &mut [f32]) {
    let max = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::expf(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    #[test]
    fn zero_model_predicts_first_class_at_uniform_confidence() {
        let labels = LabelMap::from_labels(vec![String::from("neg"), String::from("pos")]);
        let m = LinearModel::zeros(labels, 4);
        let p = m.predict(&SparseVector::default());
        assert_eq!(p.class, 0);
        assert!((p.confidence - 0.5).abs() < 1e-6);
    }

    #[test]
    fn softmax_handles_large_scores() {
        let mut v = vec![1000.0, 0.0, -1000.0];
        softmax(&mut v);
        assert!((v[0] - 1.0).abs() < 1e-6);
        assert!(v.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
    }
}
