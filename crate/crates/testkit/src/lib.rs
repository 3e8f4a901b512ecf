//! Slow, obviously-correct reference implementations. Nothing here calls the
//! code path it is used to check.

use hasr_core::align::coact::{CoactPrior, LayerPrior};
use hasr_core::align::net::{loss, Gradients, NetSpec, NetState, NUM_LAYERS, OUTPUT_LAYER};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Window scan + hangover by direct definition: window `w` is kept when any
/// window in `[w - hangover, w]` has a sample with `|x| > threshold`; runs of
/// kept windows become `[start, end)` sample spans clipped to the signal.
pub fn vad_reference(samples: &[f32], window: usize, threshold: f32, hangover: usize) -> Vec<(usize, usize)> {
    let n_windows = samples.len().div_ceil(window);
    let mut speech = vec![false; n_windows];
    for (w, flag) in speech.iter_mut().enumerate() {
        let mut peak = 0.0f32;
        for i in w * window..((w + 1) * window).min(samples.len()) {
            if samples[i].abs() > peak {
                peak = samples[i].abs();
            }
        }
        *flag = peak > threshold;
    }
    let kept: Vec<bool> = (0..n_windows)
        .map(|w| (w.saturating_sub(hangover)..=w).any(|v| speech[v]))
        .collect();
    let mut out = Vec::new();
    let mut w = 0;
    while w < n_windows {
        if kept[w] {
            let start = w;
            while w < n_windows && kept[w] {
                w += 1;
            }
            out.push((start * window, (w * window).min(samples.len())));
        } else {
            w += 1;
        }
    }
    out
}

/// Exhaustive search over all monotonic (stay / advance-by-one) paths that
/// start at chain position 0 and end at the last position. Returns the best
/// score and its position sequence.
pub fn enumerate_best_path(log_post: &[Vec<f64>], chain: &[usize]) -> Option<(f64, Vec<usize>)> {
    fn go(
        t: usize,
        pos: usize,
        acc: f64,
        path: &mut Vec<usize>,
        log_post: &[Vec<f64>],
        chain: &[usize],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let acc = acc + log_post[t][chain[pos]];
        path.push(pos);
        if t + 1 == log_post.len() {
            if pos + 1 == chain.len() && best.as_ref().is_none_or(|(s, _)| acc > *s) {
                *best = Some((acc, path.clone()));
            }
        } else {
            go(t + 1, pos, acc, path, log_post, chain, best);
            if pos + 1 < chain.len() {
                go(t + 1, pos + 1, acc, path, log_post, chain, best);
            }
        }
        path.pop();
    }
    let mut best = None;
    if !log_post.is_empty() && !chain.is_empty() {
        go(0, 0, 0.0, &mut Vec::new(), log_post, chain, &mut best);
    }
    best
}

/// Number of monotonic paths, for sanity-checking the enumerator.
pub fn count_paths(frames: usize, states: usize) -> u64 {
    // Choose which of the T-1 transitions advance: C(T-1, S-1).
    if states == 0 || frames < states {
        return 0;
    }
    let (n, k) = ((frames - 1) as u64, (states - 1) as u64);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Central differences of the full loss for every weight and bias.
pub fn finite_difference_gradients(
    net: &NetState,
    batch: &DMatrix<f64>,
    targets: &[usize],
    prior: Option<&CoactPrior>,
    lambda: f64,
    h: f64,
) -> Gradients {
    let eval = |n: &NetState| loss(n, batch, targets, prior, lambda).unwrap().total();
    let mut grads = Gradients::zeros_like(net);
    let mut probe = net.clone();
    for l in 0..NUM_LAYERS {
        for idx in 0..net.weights[l].len() {
            let orig = probe.weights[l][idx];
            probe.weights[l][idx] = orig + h;
            let up = eval(&probe);
            probe.weights[l][idx] = orig - h;
            let down = eval(&probe);
            probe.weights[l][idx] = orig;
            grads.weights[l][idx] = (up - down) / (2.0 * h);
        }
        for idx in 0..net.biases[l].len() {
            let orig = probe.biases[l][idx];
            probe.biases[l][idx] = orig + h;
            let up = eval(&probe);
            probe.biases[l][idx] = orig - h;
            let down = eval(&probe);
            probe.biases[l][idx] = orig;
            grads.biases[l][idx] = (up - down) / (2.0 * h);
        }
    }
    grads
}

/// Naive O(N^2) DFT power `|X_k|^2` for `k = 0..=N/2`.
pub fn naive_dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in frame.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Scalar forward pass with explicit loops: returns the outputs of all
/// seven layers for one input vector.
pub fn scalar_forward(net: &NetState, input: &[f64]) -> Vec<Vec<f64>> {
    let mut layers = Vec::new();
    let mut x = input.to_vec();
    for l in 0..NUM_LAYERS {
        let w = &net.weights[l];
        let mut z = vec![0.0; w.nrows()];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = net.biases[l][o];
            for (i, xi) in x.iter().enumerate() {
                s += w[(o, i)] * xi;
            }
            *zo = s;
        }
        x = if l == OUTPUT_LAYER {
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = e.iter().sum();
            e.iter().map(|v| v / sum).collect()
        } else {
            z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
        };
        layers.push(x.clone());
    }
    layers
}

/// `(m - mu)^T P (m - mu)` by explicit triple loop.
pub fn triple_product(m: &[f64], mu: &[f64], p: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..m.len() {
        for j in 0..m.len() {
            total += (m[i] - mu[i]) * p[(i, j)] * (m[j] - mu[j]);
        }
    }
    total
}

/// Random net with every width in `2..=max_dim`, weights uniform in
/// `[-scale, scale]`, and a random non-empty proper subset of trainable layers.
pub fn random_net<R: Rng>(rng: &mut R, max_dim: usize, scale: f64) -> NetState {
    let mut dims = [0usize; NUM_LAYERS + 1];
    for d in dims.iter_mut() {
        *d = rng.random_range(2..=max_dim);
    }
    let mut trainable = [false; NUM_LAYERS];
    loop {
        for t in trainable.iter_mut() {
            *t = rng.random_bool(0.7);
        }
        if trainable.iter().any(|&t| t) && !trainable.iter().all(|&t| t) {
            break;
        }
    }
    let mut net = NetState::zeros(NetSpec::new(dims, trainable).unwrap());
    for l in 0..NUM_LAYERS {
        net.weights[l].iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
        net.biases[l].iter_mut().for_each(|b| *b = rng.random_range(-scale..scale));
    }
    net
}

/// Random prior over `layers` with means in (0, 1) and a well-conditioned
/// SPD precision `A A^T / h + I`.
pub fn random_prior<R: Rng>(rng: &mut R, net: &NetState, layers: &[usize]) -> CoactPrior {
    let lps = layers
        .iter()
        .map(|&l| {
            let h = net.spec.width(l);
            let mean = DVector::from_fn(h, |_, _| rng.random_range(0.05..0.95));
            let a = DMatrix::from_fn(h, h, |_, _| rng.random_range(-1.0..1.0));
            let p = &a * a.transpose() / h as f64 + DMatrix::identity(h, h);
            LayerPrior::new(l, mean, p, 1e-3).unwrap()
        })
        .collect();
    CoactPrior::new(lps).unwrap()
}

/// `|a - n| / max(|a|, |n|, floor)`, the largest over the parameters of
/// layers where `mask` is set.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients, mask: &[bool; NUM_LAYERS], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for l in (0..NUM_LAYERS).filter(|&l| mask[l]) {
        let w = analytic.weights[l].iter().zip(numeric.weights[l].iter());
        let b = analytic.biases[l].iter().zip(numeric.biases[l].iter());
        for (a, n) in w.chain(b) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(floor));
        }
    }
    worst
}
