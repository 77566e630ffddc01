//! Confusion matrix and the OA / AA / Kappa summary.

use alloc::vec;
use alloc::vec::Vec;

/// `K × K` counts; rows are reference classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// From a row-major `K × K` table.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Option<Self> {
        (counts.len() == classes * classes).then_some(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, reference: usize, predicted: usize) {
        self.counts[reference * self.classes + predicted] += 1;
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.classes + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, k: usize) -> u64 {
        self.counts[k * self.classes..(k + 1) * self.classes].iter().sum()
    }

    pub fn col_total(&self, k: usize) -> u64 {
        (0..self.classes).map(|r| self.get(r, k)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn overall_accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Recall of each class; `None` for classes with no reference samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|k| {
                let n = self.row_total(k);
                (n > 0).then(|| self.get(k, k) as f64 / n as f64)
            })
            .collect()
    }

    /// Mean recall over the classes present in the reference.
    pub fn average_accuracy(&self) -> f64 {
        let present: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        present.iter().sum::<f64>() / present.len() as f64
    }

    /// `(p_o - p_e) / (1 - p_e)` with `p_e = Σ_k row_k · col_k / N²`.
    pub fn kappa(&self) -> f64 {
        let n = self.total() as f64;
        let po = self.trace() as f64 / n;
        let pe = (0..self.classes)
            .map(|k| self.row_total(k) as f64 * self.col_total(k) as f64)
            .sum::<f64>()
            / (n * n);
        if pe == 1.0 {
            return if po == 1.0 { 1.0 } else { 0.0 };
        }
        (po - pe) / (1.0 - pe)
    }

    pub fn metrics(&self) -> Metrics {
        let per_class = self.per_class_accuracy();
        let absent = per_class
            .iter()
            .enumerate()
            .filter_map(|(k, a)| a.is_none().then_some(k))
            .collect();
        Metrics {
            oa: self.overall_accuracy(),
            aa: self.average_accuracy(),
            kappa: self.kappa(),
            per_class,
            absent_classes: absent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    pub per_class: Vec<Option<f64>>,
    /// Zero-based classes without reference samples, excluded from AA.
    pub absent_classes: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let m = ConfusionMatrix::from_counts(2, vec![8, 2, 1, 9]).unwrap();
        assert!((m.overall_accuracy() - 0.85).abs() < 1e-12);
        assert!((m.average_accuracy() - 0.85).abs() < 1e-12);
        assert!((m.kappa() - 0.7).abs() < 1e-12);

        let m = ConfusionMatrix::from_counts(2, vec![25, 25, 25, 25]).unwrap();
        assert!((m.overall_accuracy() - 0.5).abs() < 1e-12);
        assert!(m.kappa().abs() < 1e-12);

        let m = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 0, 7, 0, 0, 0, 2]).unwrap();
        let s = m.metrics();
        assert_eq!((s.oa, s.aa, s.kappa), (1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_is_excluded_from_aa() {
        let m = ConfusionMatrix::from_counts(3, vec![3, 1, 0, 0, 0, 0, 0, 1, 1]).unwrap();
        let s = m.metrics();
        assert_eq!(s.absent_classes, vec![1]);
        assert!((s.aa - (0.75 + 0.5) / 2.0).abs() < 1e-12);
    }
}
