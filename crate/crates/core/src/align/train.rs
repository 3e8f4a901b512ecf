//! Mini-batch gradient descent training and unsupervised co-activation
//! adaptation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coact::CoactPrior;
use super::net::{apply_gradients, backward_objective, NetState, Objective, NUM_LAYERS};
use super::NetError;

/// Labeled frames; row `i` of `features` has class `labels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>) -> Result<Self, NetError> {
        if features.nrows() != labels.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Parses `label<TAB>v1 v2 ...` lines (`#` comments allowed).
    pub fn from_tsv(text: &str) -> Result<Self, NetError> {
        let mut labels = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| NetError::InvalidInput(format!("line {}: {msg}", i + 1));
            let (label, rest) = line.split_once('\t').ok_or_else(|| bad("expected label<TAB>features"))?;
            labels.push(label.trim().parse::<usize>().map_err(|_| bad("label is not a class index"))?);
            let row = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad("feature is not a number")))
                .collect::<Result<Vec<_>, _>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => return Err(bad("inconsistent feature width")),
                _ => {}
            }
            values.extend(row);
        }
        let d = dim.unwrap_or(0);
        Self::new(DMatrix::from_row_slice(labels.len(), d, &values), labels)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (row, label) in self.features.row_iter().zip(&self.labels) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{label}\t{}\n", vals.join(" ")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the co-activation term; ignored without a prior.
    pub lambda: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 0.5, batch_size: 32, seed: 0, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch objective seen during the epoch.
    pub loss: f64,
    /// Frame accuracy on the training set after the epoch.
    pub accuracy: f64,
}

/// Fraction of rows whose argmax posterior equals the label.
pub fn accuracy(net: &NetState, data: &Dataset) -> Result<f64, NetError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = net.forward(&data.features)?.argmax();
    let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Shuffled mini-batch gradient descent with a fixed learning rate.
/// Deterministic for a given seed.
pub fn train(
    net: &NetState,
    data: &Dataset,
    params: &TrainParams,
    prior: Option<&CoactPrior>,
) -> Result<(NetState, Vec<EpochMetrics>), NetError> {
    if data.is_empty() {
        return Err(NetError::InvalidInput("empty training set".into()));
    }
    if params.batch_size == 0 {
        return Err(NetError::InvalidConfig("batch size must be positive".into()));
    }
    if let Some(p) = prior {
        p.check_against(net)?;
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let all = [true; NUM_LAYERS];
    let mut metrics = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for rows in order.chunks(params.batch_size) {
            let batch = data.subset(rows);
            let obj = Objective { targets: Some(&batch.labels), prior, lambda: params.lambda };
            let (l, grads) = backward_objective(&net, &batch.features, obj)?;
            apply_gradients(&mut net, &grads, params.learning_rate, &all);
            loss_sum += l.total();
            batches += 1;
        }
        let acc = accuracy(&net, data)?;
        metrics.push(EpochMetrics { epoch: epoch + 1, loss: loss_sum / batches as f64, accuracy: acc });
    }
    Ok((net, metrics))
}

/// Progressive unfreezing for adaptation: stage `k` trains the union of
/// the layers listed in stages `0..=k`. Steps are split evenly over stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub stages: Vec<Vec<usize>>,
}

impl LayerSchedule {
    /// One stage per trainable layer, from the first trainable layer upwards.
    pub fn bottom_up(net: &NetState) -> Self {
        Self { stages: (0..NUM_LAYERS).filter(|&l| net.spec.trainable[l]).map(|l| vec![l]).collect() }
    }

    /// All listed layers at once.
    pub fn single(layers: Vec<usize>) -> Self {
        Self { stages: vec![layers] }
    }

    fn mask_at(&self, step: usize, total: usize) -> [bool; NUM_LAYERS] {
        let stage = (step * self.stages.len()) / total.max(1);
        let mut mask = [false; NUM_LAYERS];
        for layers in &self.stages[..=stage.min(self.stages.len() - 1)] {
            for &l in layers {
                mask[l] = true;
            }
        }
        mask
    }

    fn validate(&self) -> Result<(), NetError> {
        if self.stages.is_empty() || self.stages.iter().flatten().any(|&l| l >= NUM_LAYERS) {
            return Err(NetError::InvalidConfig(format!("bad layer schedule {:?}", self.stages)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptParams {
    pub lambda: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub schedule: LayerSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptReport {
    /// Penalty on the batch used by each step, measured before the step.
    pub penalties_before: Vec<f64>,
    /// Penalty on the same batch after the step.
    pub penalties_after: Vec<f64>,
}

impl AdaptReport {
    /// Fraction of steps that did not increase the penalty on their batch.
    pub fn non_increasing_fraction(&self) -> f64 {
        if self.penalties_before.is_empty() {
            return 1.0;
        }
        let ok = self
            .penalties_before
            .iter()
            .zip(&self.penalties_after)
            .filter(|(b, a)| a <= b)
            .count();
        ok as f64 / self.penalties_before.len() as f64
    }
}

/// Unsupervised adaptation: gradient steps on `lambda * penalty` alone,
/// cycling through `batches`. Frozen layers stay frozen whatever the schedule says.
pub fn adapt(
    net: &NetState,
    batches: &[DMatrix<f64>],
    prior: &CoactPrior,
    params: &AdaptParams,
) -> Result<(NetState, AdaptReport), NetError> {
    params.schedule.validate()?;
    prior.check_against(net)?;
    if batches.is_empty() {
        return Err(NetError::InvalidInput("adaptation needs at least one batch".into()));
    }
    let mut net = net.clone();
    let mut report = AdaptReport { penalties_before: Vec::new(), penalties_after: Vec::new() };
    if params.lambda == 0.0 {
        return Ok((net, report));
    }
    let obj = Objective { targets: None, prior: Some(prior), lambda: params.lambda };
    for step in 0..params.steps {
        let batch = &batches[step % batches.len()];
        let (before, grads) = backward_objective(&net, batch, obj)?;
        apply_gradients(&mut net, &grads, params.learning_rate, &params.schedule.mask_at(step, params.steps));
        let after = super::net::objective(&net, batch, obj)?.1;
        report.penalties_before.push(before.penalty);
        report.penalties_after.push(after.penalty);
    }
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::net::NetSpec;

    fn toy() -> (NetState, Dataset) {
        let spec = NetSpec::new([2, 2, 4, 4, 4, 4, 4, 2], [false, true, true, true, true, true, true]).unwrap();
        let feats = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.0, 0.2, 0.9, 0.8, 0.1]);
        let data = Dataset::new(feats, vec![0, 1, 0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (NetState::with_input_normalization(spec, &data.features, &mut rng).unwrap(), data)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (net, data) = toy();
        let params = TrainParams { epochs: 3, learning_rate: 0.0, batch_size: 2, seed: 1, lambda: 0.0 };
        let (out, metrics) = train(&net, &data, &params, None).unwrap();
        assert_eq!(out, net);
        assert_eq!(metrics.len(), 3);
    }

    #[test]
    fn same_seed_same_metrics() {
        let (net, data) = toy();
        let params = TrainParams { epochs: 5, learning_rate: 0.3, batch_size: 3, seed: 7, lambda: 0.0 };
        let a = train(&net, &data, &params, None).unwrap();
        let b = train(&net, &data, &params, None).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn frozen_layer_is_bit_identical_after_training() {
        let (net, data) = toy();
        let params = TrainParams { epochs: 10, learning_rate: 1.0, batch_size: 2, seed: 3, lambda: 0.0 };
        let (out, _) = train(&net, &data, &params, None).unwrap();
        assert_eq!(out.weights[0], net.weights[0]);
        assert_eq!(out.biases[0], net.biases[0]);
        assert_ne!(out.weights[1], net.weights[1]);
    }

    #[test]
    fn dataset_tsv_round_trip() {
        let (_, data) = toy();
        assert_eq!(Dataset::from_tsv(&data.to_tsv()).unwrap(), data);
        assert!(Dataset::from_tsv("0\t1 2\n1\t3\n").is_err());
        assert!(Dataset::from_tsv("x\t1\n").is_err());
    }

    #[test]
    fn schedule_masks_unfreeze_progressively() {
        let s = LayerSchedule { stages: vec![vec![1], vec![2], vec![3]] };
        assert_eq!(s.mask_at(0, 9)[..4], [false, true, false, false]);
        assert_eq!(s.mask_at(3, 9)[..4], [false, true, true, false]);
        assert_eq!(s.mask_at(8, 9)[..4], [false, true, true, true]);
    }

    #[test]
    fn adapt_with_zero_lambda_or_matched_means_is_identity() {
        let (net, data) = toy();
        let prior = CoactPrior::collect(&net, &data.features, &[1, 2, 3, 4, 5], 1e-3).unwrap();
        let params = AdaptParams {
            lambda: 0.0,
            steps: 5,
            learning_rate: 0.1,
            schedule: LayerSchedule::bottom_up(&net),
        };
        assert_eq!(adapt(&net, &[data.features.clone()], &prior, &params).unwrap().0, net);
        // Same data the prior came from: the penalty gradient is zero.
        let params = AdaptParams { lambda: 1.0, ..params };
        let (adapted, report) = adapt(&net, &[data.features.clone()], &prior, &params).unwrap();
        assert!(report.penalties_before.iter().all(|&p| p.abs() < 1e-20));
        for l in 0..NUM_LAYERS {
            assert!((&adapted.weights[l] - &net.weights[l]).abs().max() < 1e-12);
        }
    }
}
