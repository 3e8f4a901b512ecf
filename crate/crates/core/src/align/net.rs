//! Seven-layer sigmoid network with a softmax output, the co-activation
//! regularized cross-entropy loss and its exact gradients.
//!
//! Layer indices are zero based: layer 0 is the first affine layer (by
//! default a frozen input normalization), layers 0..=5 are the sigmoid
//! hidden layers and layer 6 is the softmax output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coact::CoactPrior;
use super::features::FeatureConfig;
use super::NetError;

pub const NUM_LAYERS: usize = 7;
pub const OUTPUT_LAYER: usize = NUM_LAYERS - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Input width followed by the width of each of the seven layers.
    pub layer_dims: [usize; NUM_LAYERS + 1],
    pub trainable: [bool; NUM_LAYERS],
}

impl NetSpec {
    pub fn new(layer_dims: [usize; NUM_LAYERS + 1], trainable: [bool; NUM_LAYERS]) -> Result<Self, NetError> {
        let spec = Self { layer_dims, trainable };
        spec.validate()?;
        Ok(spec)
    }

    /// Frozen normalization layer followed by six trainable layers.
    pub fn with_normalization(input: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            layer_dims: [input, input, hidden, hidden, hidden, hidden, hidden, outputs],
            trainable: [false, true, true, true, true, true, true],
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layer_dims.contains(&0) {
            return Err(NetError::InvalidConfig("layer widths must be positive".into()));
        }
        if !self.trainable.iter().any(|&t| t) || self.trainable.iter().all(|&t| t) {
            return Err(NetError::InvalidConfig(
                "the network needs at least one trainable and one frozen layer".into(),
            ));
        }
        if self.layer_dims[NUM_LAYERS] < 2 {
            return Err(NetError::InvalidConfig("softmax output needs at least two classes".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims[NUM_LAYERS]
    }

    /// Width of the output of layer `l`.
    pub fn width(&self, l: usize) -> usize {
        self.layer_dims[l + 1]
    }
}

/// Weights are `out x in`, so a batch of row vectors maps as `X W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub spec: NetSpec,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Glorot-uniform bound for a layer, four times wider for sigmoid units.
fn glorot(fan_in: usize, fan_out: usize, sigmoid: bool) -> f64 {
    let gain = if sigmoid { 4.0 } else { 1.0 };
    gain * (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl NetState {
    pub fn zeros(spec: NetSpec) -> Self {
        let weights = (0..NUM_LAYERS).map(|l| DMatrix::zeros(spec.layer_dims[l + 1], spec.layer_dims[l])).collect();
        let biases = (0..NUM_LAYERS).map(|l| DVector::zeros(spec.layer_dims[l + 1])).collect();
        Self { spec, weights, biases }
    }

    /// Every layer Glorot-uniform initialised (sigmoid gain 4), biases zero.
    pub fn random<R: Rng>(spec: NetSpec, rng: &mut R) -> Self {
        let mut net = Self::zeros(spec);
        for l in 0..NUM_LAYERS {
            let bound = glorot(net.spec.layer_dims[l], net.spec.layer_dims[l + 1], l != OUTPUT_LAYER);
            net.weights[l].iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        net
    }

    /// Random initialization with layer 0 set to the per-dimension
    /// standardization `(x - mean) / std` of `features` (rows are samples).
    /// Layer 0 must be square.
    pub fn with_input_normalization<R: Rng>(spec: NetSpec, features: &DMatrix<f64>, rng: &mut R) -> Result<Self, NetError> {
        let d = spec.input_dim();
        if spec.layer_dims[1] != d {
            return Err(NetError::InvalidConfig("normalization layer must be square".into()));
        }
        if features.ncols() != d || features.nrows() == 0 {
            return Err(NetError::ShapeMismatch(format!(
                "normalization data is {}x{}, expected N x {d}",
                features.nrows(),
                features.ncols()
            )));
        }
        let mut net = Self::random(spec, rng);
        let n = features.nrows() as f64;
        let mean = features.row_mean().transpose();
        let mut w = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for j in 0..d {
            let var = features.column(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(1e-6);
            w[(j, j)] = 1.0 / std;
            b[j] = -mean[j] / std;
        }
        net.weights[0] = w;
        net.biases[0] = b;
        Ok(net)
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_batch(&self, batch: &DMatrix<f64>) -> Result<(), NetError> {
        if batch.ncols() != self.spec.input_dim() {
            return Err(NetError::ShapeMismatch(format!(
                "batch has {} columns, network input is {}",
                batch.ncols(),
                self.spec.input_dim()
            )));
        }
        if batch.nrows() == 0 {
            return Err(NetError::ShapeMismatch("empty batch".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &DMatrix<f64>) -> Result<Forward, NetError> {
        self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(NUM_LAYERS + 1);
        activations.push(batch.clone());
        let mut logits = DMatrix::zeros(0, 0);
        for l in 0..NUM_LAYERS {
            let mut z = &activations[l] * self.weights[l].transpose();
            for mut row in z.row_iter_mut() {
                row += self.biases[l].transpose();
            }
            if l == OUTPUT_LAYER {
                logits = z.clone();
                activations.push(softmax_rows(z));
            } else {
                activations.push(z.map(sigmoid));
            }
        }
        Ok(Forward { activations, logits })
    }

    /// Posterior matrix `N x K`.
    pub fn posteriors(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>, NetError> {
        Ok(self.forward(batch)?.activations.pop().expect("output layer"))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(mut z: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in z.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    z
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    max + row.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Activations of one forward pass; `activations[0]` is the input and
/// `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Forward {
    pub activations: Vec<DMatrix<f64>>,
    /// Output-layer pre-activations.
    pub logits: DMatrix<f64>,
}

impl Forward {
    pub fn posteriors(&self) -> &DMatrix<f64> {
        &self.activations[NUM_LAYERS]
    }

    pub fn layer_output(&self, l: usize) -> &DMatrix<f64> {
        &self.activations[l + 1]
    }

    /// Column means of layer `l`'s output over the batch.
    pub fn layer_mean(&self, l: usize) -> DVector<f64> {
        self.activations[l + 1].row_mean().transpose()
    }

    /// Mean of `-log p(target)`, computed from the logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> f64 {
        let n = self.logits.nrows();
        let total: f64 = self
            .logits
            .row_iter()
            .zip(targets)
            .map(|(row, &y)| log_sum_exp(row.iter().copied()) - row[y])
            .sum();
        total / n as f64
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.posteriors().row_iter().map(|r| r.transpose().argmax().0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub penalty: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.cross_entropy + self.lambda * self.penalty
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &NetState) -> Self {
        Self {
            weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_targets(targets: &[usize], n: usize, k: usize) -> Result<(), NetError> {
    if targets.len() != n {
        return Err(NetError::ShapeMismatch(format!("{} targets for a batch of {n}", targets.len())));
    }
    if let Some(&bad) = targets.iter().find(|&&y| y >= k) {
        return Err(NetError::ShapeMismatch(format!("target {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Which terms of the objective to differentiate.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub targets: Option<&'a [usize]>,
    pub prior: Option<&'a CoactPrior>,
    pub lambda: f64,
}

/// Evaluates the objective: mean cross-entropy (when targets are given)
/// plus `lambda` times the co-activation penalty of the batch layer means.
pub fn objective(net: &NetState, batch: &DMatrix<f64>, obj: Objective<'_>) -> Result<(Forward, LossBreakdown), NetError> {
    let fwd = net.forward(batch)?;
    let cross_entropy = match obj.targets {
        Some(t) => {
            check_targets(t, batch.nrows(), net.spec.output_dim())?;
            fwd.cross_entropy(t)
        }
        None => 0.0,
    };
    let penalty = match obj.prior {
        Some(prior) if obj.lambda != 0.0 => prior.penalty_for(&fwd)?,
        _ => 0.0,
    };
    Ok((fwd, LossBreakdown { cross_entropy, penalty, lambda: obj.lambda }))
}

/// Mean cross-entropy plus `lambda` times the co-activation penalty.
pub fn loss(
    net: &NetState,
    batch: &DMatrix<f64>,
    targets: &[usize],
    prior: Option<&CoactPrior>,
    lambda: f64,
) -> Result<LossBreakdown, NetError> {
    Ok(objective(net, batch, Objective { targets: Some(targets), prior, lambda })?.1)
}

/// Exact gradients of [`objective`]. Frozen layers get zero parameter
/// gradients but still pass the error signal down.
pub fn backward_objective(
    net: &NetState,
    batch: &DMatrix<f64>,
    obj: Objective<'_>,
) -> Result<(LossBreakdown, Gradients), NetError> {
    let (fwd, breakdown) = objective(net, batch, obj)?;
    let n = batch.nrows() as f64;
    let mut grads = Gradients::zeros_like(net);

    // Penalty gradient w.r.t. each monitored layer output, identical for every row:
    // d/dA [ (m - mu)^T P (m - mu) ] = 2 P (m - mu) / N.
    let mut penalty_grad: Vec<Option<DVector<f64>>> = vec![None; NUM_LAYERS];
    if let Some(prior) = obj.prior.filter(|_| obj.lambda != 0.0) {
        for lp in prior.layers() {
            let m = fwd.layer_mean(lp.layer);
            penalty_grad[lp.layer] = Some(lp.precision() * (m - lp.mean()) * (2.0 * obj.lambda / n));
        }
    }

    // Output layer: softmax + cross-entropy handled jointly.
    let probs = fwd.posteriors();
    let mut delta = DMatrix::zeros(probs.nrows(), probs.ncols());
    if let Some(targets) = obj.targets {
        delta.copy_from(probs);
        for (i, &y) in targets.iter().enumerate() {
            delta[(i, y)] -= 1.0;
        }
        delta /= n;
    }
    if let Some(g) = &penalty_grad[OUTPUT_LAYER] {
        for (i, p) in probs.row_iter().enumerate() {
            let dot = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
            for k in 0..p.ncols() {
                delta[(i, k)] += p[k] * (g[k] - dot);
            }
        }
    }

    for l in (0..NUM_LAYERS).rev() {
        if net.spec.trainable[l] {
            grads.weights[l] = delta.transpose() * &fwd.activations[l];
            grads.biases[l] = delta.row_sum().transpose();
        }
        if l == 0 {
            break;
        }
        // Propagate into the sigmoid output of layer l - 1.
        let mut d_act = &delta * &net.weights[l];
        if let Some(g) = &penalty_grad[l - 1] {
            for mut row in d_act.row_iter_mut() {
                row += g.transpose();
            }
        }
        let a = &fwd.activations[l];
        delta = d_act.zip_map(a, |d, s| d * s * (1.0 - s));
    }
    Ok((breakdown, grads))
}

pub fn backward(
    net: &NetState,
    batch: &DMatrix<f64>,
    targets: &[usize],
    prior: Option<&CoactPrior>,
    lambda: f64,
) -> Result<Gradients, NetError> {
    Ok(backward_objective(net, batch, Objective { targets: Some(targets), prior, lambda })?.1)
}

/// Plain gradient step on the trainable layers selected by `mask`.
pub fn apply_gradients(net: &mut NetState, grads: &Gradients, lr: f64, mask: &[bool; NUM_LAYERS]) {
    for l in 0..NUM_LAYERS {
        if mask[l] && net.spec.trainable[l] {
            net.weights[l] -= &grads.weights[l] * lr;
            net.biases[l] -= &grads.biases[l] * lr;
        }
    }
}

/// Serialized model: dims, trainable flags, row-major weights and the
/// feature/topology settings needed to run it on audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub trainable: Vec<bool>,
    pub layers: Vec<LayerParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureConfig>,
    /// Phone list of the HMM topology whose states the output layer scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phones: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub const MODEL_FORMAT: &str = "hasr-dnn";
pub const MODEL_VERSION: u32 = 1;

/// A network together with what is needed to score audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: NetState,
    pub features: Option<FeatureConfig>,
    pub phones: Option<Vec<String>>,
}

impl Model {
    pub fn to_file(&self) -> ModelFile {
        let net = &self.net;
        let layers = (0..NUM_LAYERS)
            .map(|l| {
                let w = &net.weights[l];
                LayerParams {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weights: w.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect(),
                    bias: net.biases[l].iter().copied().collect(),
                }
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_dims: net.spec.layer_dims.to_vec(),
            trainable: net.spec.trainable.to_vec(),
            layers,
            features: self.features,
            phones: self.phones.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NetError> {
        let bad = |msg: String| NetError::Model(msg);
        if file.format != MODEL_FORMAT {
            return Err(bad(format!("unknown model format {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(bad(format!("unsupported model version {}", file.version)));
        }
        let layer_dims: [usize; NUM_LAYERS + 1] =
            file.layer_dims.try_into().map_err(|_| bad("expected 8 layer dims".into()))?;
        let trainable: [bool; NUM_LAYERS] =
            file.trainable.try_into().map_err(|_| bad("expected 7 trainable flags".into()))?;
        let spec = NetSpec::new(layer_dims, trainable)?;
        if file.layers.len() != NUM_LAYERS {
            return Err(bad(format!("expected {NUM_LAYERS} layers, found {}", file.layers.len())));
        }
        let mut net = NetState::zeros(spec);
        for (l, p) in file.layers.into_iter().enumerate() {
            let (rows, cols) = (net.spec.layer_dims[l + 1], net.spec.layer_dims[l]);
            if p.rows != rows || p.cols != cols || p.weights.len() != rows * cols || p.bias.len() != rows {
                return Err(bad(format!("layer {l} parameters do not match {rows}x{cols}")));
            }
            net.weights[l] = DMatrix::from_row_slice(rows, cols, &p.weights);
            net.biases[l] = DVector::from_vec(p.bias);
        }
        if let Some(phones) = &file.phones {
            let states = super::hmm::HmmTopology::new(phones.clone())?.total_states();
            if states != net.spec.output_dim() {
                return Err(bad(format!(
                    "topology has {states} states but the output layer has {}",
                    net.spec.output_dim()
                )));
            }
        }
        if let Some(f) = &file.features {
            if f.bands != net.spec.input_dim() {
                return Err(bad(format!("{} feature bands but network input is {}", f.bands, net.spec.input_dim())));
            }
        }
        Ok(Self { net, features: file.features, phones: file.phones })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| NetError::Model(e.to_string()))?;
        Self::from_file(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_spec() -> NetSpec {
        NetSpec::new([3, 3, 4, 4, 4, 4, 4, 3], [false, true, true, true, true, true, true]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(NetSpec::new([2; 8], [true; 7]).is_err());
        assert!(NetSpec::new([2; 8], [false; 7]).is_err());
        assert!(NetSpec::new([2, 2, 2, 0, 2, 2, 2, 2], [false, true, true, true, true, true, true]).is_err());
        assert!(NetSpec::new([2, 2, 2, 2, 2, 2, 2, 1], [false, true, true, true, true, true, true]).is_err());
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = NetState::zeros(small_spec());
        let fwd = net.forward(&DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0])).unwrap();
        for l in 0..OUTPUT_LAYER {
            assert!(fwd.layer_output(l).iter().all(|&a| a == 0.5));
        }
        assert!(fwd.posteriors().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn posteriors_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = NetState::random(small_spec(), &mut rng);
        let batch = DMatrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * 1.5 + j as f64 * 0.5);
        let fwd = net.forward(&batch).unwrap();
        for row in fwd.posteriors().row_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
        for l in 0..OUTPUT_LAYER {
            assert!(fwd.layer_output(l).iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let net = NetState::zeros(small_spec());
        assert!(matches!(net.forward(&DMatrix::zeros(2, 4)), Err(NetError::ShapeMismatch(_))));
        assert!(matches!(net.forward(&DMatrix::zeros(0, 3)), Err(NetError::ShapeMismatch(_))));
        let batch = DMatrix::zeros(2, 3);
        assert!(matches!(loss(&net, &batch, &[0], None, 0.0), Err(NetError::ShapeMismatch(_))));
        assert!(matches!(loss(&net, &batch, &[0, 3], None, 0.0), Err(NetError::ShapeMismatch(_))));
    }

    #[test]
    fn lambda_zero_is_plain_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = NetState::random(small_spec(), &mut rng);
        let batch = DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).sin());
        let targets = [0, 1, 2, 1];
        let fwd = net.forward(&batch).unwrap();
        let manual: f64 = fwd
            .posteriors()
            .row_iter()
            .zip(&targets)
            .map(|(r, &y)| -r[y].ln())
            .sum::<f64>()
            / 4.0;
        let l = loss(&net, &batch, &targets, None, 0.0).unwrap();
        assert!((l.total() - manual).abs() < 1e-12);
        assert_eq!(l.penalty, 0.0);
    }

    #[test]
    fn confident_correct_output_has_near_zero_loss() {
        let mut net = NetState::zeros(small_spec());
        net.biases[OUTPUT_LAYER] = DVector::from_vec(vec![800.0, 0.0, 0.0]);
        let l = loss(&net, &DMatrix::zeros(2, 3), &[0, 0], None, 0.0).unwrap();
        assert_eq!(l.total(), 0.0);
        // The wrong class stays finite thanks to the log-sum-exp form.
        let wrong = loss(&net, &DMatrix::zeros(1, 3), &[1], None, 0.0).unwrap();
        assert!((wrong.total() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn frozen_layers_get_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetState::random(small_spec(), &mut rng);
        let batch = DMatrix::from_fn(3, 3, |i, j| i as f64 - j as f64);
        let g = backward(&net, &batch, &[0, 1, 2], None, 0.0).unwrap();
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
        assert!(g.biases[0].iter().all(|&v| v == 0.0));
        assert!(g.weights[1].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn normalization_layer_standardizes() {
        let spec = small_spec();
        let data = DMatrix::from_row_slice(4, 3, &[1.0, 10.0, 0.0, 3.0, 20.0, 0.0, 5.0, 30.0, 0.0, 7.0, 40.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = NetState::with_input_normalization(spec, &data, &mut rng).unwrap();
        let z = &data * net.weights[0].transpose();
        let z = DMatrix::from_fn(4, 3, |i, j| z[(i, j)] + net.biases[0][j]);
        for j in 0..2 {
            let col = z.column(j);
            assert!(col.mean().abs() < 1e-12);
            assert!((col.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        }
        // constant column: zero after centring, no division blow-up
        assert!(z.column(2).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn model_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = NetState::random(small_spec(), &mut rng);
        let model = Model { net, features: None, phones: None };
        let back = Model::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert!(Model::from_json("{}").is_err());
        let mut file = model.to_file();
        file.layers[2].weights.pop();
        assert!(Model::from_file(file).is_err());
    }
}
