//! Co-activation statistics: per-layer activation mean and ridge-regularized
//! inverse covariance, and the Mahalanobis-form penalty built from them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::net::{Forward, NetState, NUM_LAYERS, OUTPUT_LAYER};
use super::NetError;

pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Column mean and `(cov + ridge * I)^-1` of an `N x H` activation matrix,
/// with the biased `1/N` covariance.
pub fn coact_stats(activations: &DMatrix<f64>, ridge: f64) -> Result<(DVector<f64>, DMatrix<f64>), NetError> {
    let n = activations.nrows();
    if n == 0 {
        return Err(NetError::ShapeMismatch("co-activation statistics need at least one row".into()));
    }
    if !(ridge > 0.0) {
        return Err(NetError::InvalidConfig(format!("ridge must be positive, got {ridge}")));
    }
    let mean = activations.row_mean().transpose();
    let mut centred = activations.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let h = activations.ncols();
    let mut cov = centred.transpose() * &centred / n as f64;
    for i in 0..h {
        cov[(i, i)] += ridge;
    }
    let precision = cov
        .cholesky()
        .ok_or_else(|| NetError::InvalidInput("covariance is not positive definite".into()))?
        .inverse();
    // Symmetrize away rounding asymmetry.
    let precision = (&precision + precision.transpose()) * 0.5;
    Ok((mean, precision))
}

/// `(m - mu)^T P (m - mu)`.
pub fn mahalanobis_sq(m: &DVector<f64>, mu: &DVector<f64>, precision: &DMatrix<f64>) -> f64 {
    let d = m - mu;
    d.dot(&(precision * &d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPrior {
    pub layer: usize,
    mean: Vec<f64>,
    /// Row-major `H x H`.
    precision: Vec<f64>,
    pub ridge: f64,
    #[serde(skip)]
    cache: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl LayerPrior {
    pub fn new(layer: usize, mean: DVector<f64>, precision: DMatrix<f64>, ridge: f64) -> Result<Self, NetError> {
        let h = mean.len();
        if precision.shape() != (h, h) {
            return Err(NetError::ShapeMismatch(format!(
                "precision is {:?} for a mean of length {h}",
                precision.shape()
            )));
        }
        let flat = precision.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        Ok(Self { layer, mean: mean.iter().copied().collect(), precision: flat, ridge, cache: Some((mean, precision)) })
    }

    fn hydrate(&mut self) -> Result<(), NetError> {
        let h = self.mean.len();
        if self.precision.len() != h * h {
            return Err(NetError::ShapeMismatch(format!("layer {} precision is not {h}x{h}", self.layer)));
        }
        self.cache = Some((DVector::from_vec(self.mean.clone()), DMatrix::from_row_slice(h, h, &self.precision)));
        Ok(())
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.cache.as_ref().expect("prior hydrated").0
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.cache.as_ref().expect("prior hydrated").1
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-layer priors collected on matched-condition data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoactPrior {
    pub format: String,
    pub version: u32,
    layers: Vec<LayerPrior>,
}

pub const PRIOR_FORMAT: &str = "hasr-coact-prior";

/// Hidden layers monitored by default (every sigmoid layer).
pub fn default_monitored_layers() -> Vec<usize> {
    (0..OUTPUT_LAYER).collect()
}

impl CoactPrior {
    pub fn new(mut layers: Vec<LayerPrior>) -> Result<Self, NetError> {
        layers.sort_by_key(|l| l.layer);
        for w in layers.windows(2) {
            if w[0].layer == w[1].layer {
                return Err(NetError::InvalidConfig(format!("layer {} appears twice in the prior", w[0].layer)));
            }
        }
        if let Some(l) = layers.iter().find(|l| l.layer >= NUM_LAYERS) {
            return Err(NetError::InvalidConfig(format!("layer {} does not exist", l.layer)));
        }
        Ok(Self { format: PRIOR_FORMAT.into(), version: 1, layers })
    }

    /// Collects statistics of the given layers over `data` (rows are frames).
    pub fn collect(net: &NetState, data: &DMatrix<f64>, layers: &[usize], ridge: f64) -> Result<Self, NetError> {
        let fwd = net.forward(data)?;
        let mut out = Vec::with_capacity(layers.len());
        for &l in layers {
            if l >= NUM_LAYERS {
                return Err(NetError::InvalidConfig(format!("layer {l} does not exist")));
            }
            let (mean, precision) = coact_stats(fwd.layer_output(l), ridge)?;
            out.push(LayerPrior::new(l, mean, precision, ridge)?);
        }
        Self::new(out)
    }

    pub fn layers(&self) -> &[LayerPrior] {
        &self.layers
    }

    pub fn check_against(&self, net: &NetState) -> Result<(), NetError> {
        for lp in &self.layers {
            if lp.layer >= NUM_LAYERS || lp.dim() != net.spec.width(lp.layer) {
                return Err(NetError::ShapeMismatch(format!(
                    "prior for layer {} has width {}, network layer has {}",
                    lp.layer,
                    lp.dim(),
                    net.spec.width(lp.layer.min(OUTPUT_LAYER))
                )));
            }
        }
        Ok(())
    }

    /// Sum over monitored layers of `(m_l - mu_l)^T P_l (m_l - mu_l)`;
    /// `means[i]` is matched with the i-th monitored layer.
    pub fn penalty(&self, means: &[DVector<f64>]) -> Result<f64, NetError> {
        if means.len() != self.layers.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} batch means for {} monitored layers",
                means.len(),
                self.layers.len()
            )));
        }
        let mut total = 0.0;
        for (m, lp) in means.iter().zip(&self.layers) {
            if m.len() != lp.dim() {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {} mean has length {}, prior has {}",
                    lp.layer,
                    m.len(),
                    lp.dim()
                )));
            }
            total += mahalanobis_sq(m, lp.mean(), lp.precision());
        }
        Ok(total)
    }

    pub fn batch_means(&self, fwd: &Forward) -> Vec<DVector<f64>> {
        self.layers.iter().map(|lp| fwd.layer_mean(lp.layer)).collect()
    }

    pub fn penalty_for(&self, fwd: &Forward) -> Result<f64, NetError> {
        if let Some(lp) = self.layers.iter().find(|lp| fwd.layer_output(lp.layer).ncols() != lp.dim()) {
            return Err(NetError::ShapeMismatch(format!("prior does not match layer {}", lp.layer)));
        }
        self.penalty(&self.batch_means(fwd))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prior serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let mut prior: CoactPrior = serde_json::from_str(text).map_err(|e| NetError::Model(e.to_string()))?;
        if prior.format != PRIOR_FORMAT || prior.version != 1 {
            return Err(NetError::Model(format!("unsupported prior {} v{}", prior.format, prior.version)));
        }
        for lp in &mut prior.layers {
            lp.hydrate()?;
        }
        Self::new(prior.layers)
    }
}

/// Free-function form of [`CoactPrior::penalty`].
pub fn coact_penalty(means: &[DVector<f64>], prior: &CoactPrior) -> Result<f64, NetError> {
    prior.penalty(means)
}
