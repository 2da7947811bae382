//! Feedforward ReLU regression networks, the weighted square-loss SGD
//! oracle, output clipping, the approximate-Lipschitz filter, and the
//! architecture sizing / capacity formulas.
//!
//! Networks are generic over the scalar type; the crate root exports
//! `Mlp32` / `Mlp64` aliases. All sizing formulas use base-2 logarithms
//! with ceilings and explicit constants defaulting to 1.

use num_traits::Float;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Point, Rng};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has dimension {got}, network expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("network is already clipped")]
    AlreadyClipped,
    #[error("non-finite loss encountered (divergent learning rate?)")]
    NonFiniteLoss,
    #[error("parameter out of range: {0}")]
    Parameter(String),
}

/// Extra parameters of the appended clamp stage
/// `relu(f) - relu(f - 1)`: a width-2 hidden layer (4) plus the linear
/// readout (3).
pub const CLIP_EXTRA_PARAMS: usize = 7;
/// Weighted layers added by the clamp stage.
pub const CLIP_EXTRA_LAYERS: usize = 2;

/// Shape of a feedforward ReLU network: `layer_widths` runs from the
/// input dimension to the (scalar) output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_widths: Vec<usize>,
    pub clipped: bool,
}

impl MlpArchitecture {
    pub fn new(layer_widths: Vec<usize>) -> Self {
        assert!(layer_widths.len() >= 2, "need at least input and output widths");
        Self {
            layer_widths,
            clipped: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    /// Widths including the clamp stage when present.
    fn full_widths(&self) -> Vec<usize> {
        let mut w = self.layer_widths.clone();
        if self.clipped {
            w.push(2);
            w.push(1);
        }
        w
    }

    /// Exact parameter count (weights + biases) implied by the widths.
    pub fn total_params(&self) -> usize {
        let w = self.full_widths();
        w.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Number of weighted layers.
    pub fn depth(&self) -> usize {
        self.full_widths().len() - 1
    }

    /// Weighted layers whose parameters the oracle may update (the clamp
    /// stage is frozen).
    fn trainable_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// A network: an architecture plus the flat parameter vector, laid out
/// layer by layer as row-major weights followed by biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub arch: MlpArchitecture,
    pub weights: Vec<F>,
}

impl<F: Float> Mlp<F> {
    pub fn zeros(arch: MlpArchitecture) -> Self {
        let n = arch.total_params();
        Self {
            arch,
            weights: vec![F::zero(); n],
        }
    }

    /// Uniform init in `[-scale, scale]`; the clamp stage, if present,
    /// gets its canonical constants.
    pub fn random_init(arch: MlpArchitecture, scale: f64, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(arch);
        let trainable = trainable_param_count(&net.arch);
        for w in net.weights.iter_mut().take(trainable) {
            *w = F::from((rng.gen::<f64>() * 2.0 - 1.0) * scale).unwrap();
        }
        if net.arch.clipped {
            write_clip_stage(&mut net);
        }
        net
    }

    pub fn forward(&self, x: &[f64]) -> F {
        self.checked_forward(x).expect("dimension mismatch")
    }

    pub fn checked_forward(&self, x: &[f64]) -> Result<F, NetError> {
        let d = self.arch.input_dim();
        if x.len() != d {
            return Err(NetError::DimMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let widths = self.arch.full_widths();
        let mut act: Vec<F> = x.iter().map(|&v| F::from(v).unwrap()).collect();
        let mut off = 0usize;
        for (l, pair) in widths.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let mut next = vec![F::zero(); n_out];
            for (j, out) in next.iter_mut().enumerate() {
                let mut acc = self.weights[off + n_in * n_out + j]; // bias
                for (i, a) in act.iter().enumerate() {
                    acc = acc + self.weights[off + j * n_in + i] * *a;
                }
                *out = if l + 1 < widths.len() - 1 {
                    acc.max(F::zero())
                } else {
                    acc
                };
            }
            off += n_in * n_out + n_out;
            act = next;
        }
        Ok(act[0])
    }
}

fn trainable_param_count(arch: &MlpArchitecture) -> usize {
    arch.layer_widths
        .windows(2)
        .map(|p| p[0] * p[1] + p[1])
        .sum()
}

/// Canonical clamp-stage constants: hidden units `relu(f)` and
/// `relu(f - 1)`, readout `h1 - h2`.
fn write_clip_stage<F: Float>(net: &mut Mlp<F>) {
    let base = trainable_param_count(&net.arch);
    let one = F::one();
    let vals = [
        one,        // w11
        one,        // w21
        F::zero(),  // b1
        -one,       // b2
        one,        // v1
        -one,       // v2
        F::zero(),  // output bias
    ];
    net.weights[base..base + CLIP_EXTRA_PARAMS].copy_from_slice(&vals);
}

/// Append the two-ReLU clamp stage; the result computes
/// `clamp(raw, 0, 1)` exactly for every input the raw network maps to a
/// representable value.
pub fn clip_network<F: Float>(net: &Mlp<F>) -> Result<Mlp<F>, NetError> {
    if net.arch.clipped {
        return Err(NetError::AlreadyClipped);
    }
    let mut arch = net.arch.clone();
    arch.clipped = true;
    let mut out = Mlp {
        arch,
        weights: Vec::new(),
    };
    out.weights = vec![F::zero(); out.arch.total_params()];
    out.weights[..net.weights.len()].copy_from_slice(&net.weights);
    write_clip_stage(&mut out);
    Ok(out)
}

/// One weighted regression example; `target` is the `{0,1}`-coded label
/// (or any value in `[0,1]`).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedExample {
    pub weight: f64,
    pub x: Point,
    pub target: f64,
}

/// SGD settings for the regression oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub restarts: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.05,
            batch_size: 16,
            restarts: 3,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

fn total_weighted_loss<F: Float>(net: &Mlp<F>, examples: &[WeightedExample]) -> f64 {
    examples
        .iter()
        .map(|e| {
            let pred = net.forward(&e.x).to_f64().unwrap();
            e.weight * (pred - e.target) * (pred - e.target)
        })
        .sum()
}

/// Backprop for one example; accumulates `weight * 2 (f - y) * grad f`
/// into `grad`. The clamp stage participates in the forward/backward
/// pass but its parameters receive no gradient.
fn accumulate_gradient<F: Float>(net: &Mlp<F>, example: &WeightedExample, grad: &mut [F]) {
    let widths = net.arch.full_widths();
    let n_layers = widths.len() - 1;
    // Forward pass, keeping every activation.
    let mut acts: Vec<Vec<F>> = Vec::with_capacity(n_layers + 1);
    acts.push(example.x.iter().map(|&v| F::from(v).unwrap()).collect());
    let mut pre: Vec<Vec<F>> = Vec::with_capacity(n_layers);
    let mut off = 0usize;
    for (l, pair) in widths.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let prev = acts.last().unwrap().clone();
        let mut z = vec![F::zero(); n_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = net.weights[off + n_in * n_out + j];
            for (i, a) in prev.iter().enumerate() {
                acc = acc + net.weights[off + j * n_in + i] * *a;
            }
            *zj = acc;
        }
        let a: Vec<F> = if l + 1 < n_layers {
            z.iter().map(|&v| v.max(F::zero())).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        acts.push(a);
        off += n_in * n_out + n_out;
    }
    let out = acts.last().unwrap()[0];
    let scale = F::from(2.0 * example.weight).unwrap() * (out - F::from(example.target).unwrap());
    // Backward pass.
    let mut delta = vec![scale];
    let trainable = net.arch.trainable_layers();
    let mut offsets: Vec<usize> = Vec::with_capacity(n_layers);
    let mut o = 0usize;
    for pair in widths.windows(2) {
        offsets.push(o);
        o += pair[0] * pair[1] + pair[1];
    }
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (widths[l], widths[l + 1]);
        let off = offsets[l];
        if l < trainable {
            for j in 0..n_out {
                for i in 0..n_in {
                    grad[off + j * n_in + i] =
                        grad[off + j * n_in + i] + delta[j] * acts[l][i];
                }
                grad[off + n_in * n_out + j] = grad[off + n_in * n_out + j] + delta[j];
            }
        }
        if l > 0 {
            let mut prev_delta = vec![F::zero(); n_in];
            for (i, pd) in prev_delta.iter_mut().enumerate() {
                let mut acc = F::zero();
                for (j, dj) in delta.iter().enumerate() {
                    acc = acc + net.weights[off + j * n_in + i] * *dj;
                }
                // ReLU subgradient of the layer below.
                if pre[l - 1][i] > F::zero() {
                    *pd = acc;
                }
            }
            delta = prev_delta;
        }
    }
}

/// Best-of-restarts SGD approximation of
/// `argmin_f sum w (f(x) - y)^2` over networks of the given shape.
///
/// Deterministic given `cfg.seed`; the returned network is never worse
/// (in final weighted loss) than its own seeded initialization.
pub fn fit_weighted_sq<F: Float>(
    arch: &MlpArchitecture,
    examples: &[WeightedExample],
    cfg: &OracleConfig,
) -> Result<Mlp<F>, NetError> {
    if cfg.learning_rate <= 0.0 || cfg.init_scale <= 0.0 {
        return Err(NetError::Parameter(
            "learning_rate and init_scale must be positive".into(),
        ));
    }
    let mut rng = crate::run_rng(cfg.seed, 0, 0);
    if examples.is_empty() {
        return Ok(Mlp::random_init(arch.clone(), cfg.init_scale, &mut rng));
    }
    let n = examples.len();
    let mut best: Option<(f64, Mlp<F>)> = None;
    let consider = |loss: f64, net: &Mlp<F>, best: &mut Option<(f64, Mlp<F>)>| {
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            *best = Some((loss, net.clone()));
        }
    };
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = crate::run_rng(cfg.seed, 0, restart as u64);
        let mut net: Mlp<F> = Mlp::random_init(arch.clone(), cfg.init_scale, &mut rng);
        let init_loss = total_weighted_loss(&net, examples);
        if !init_loss.is_finite() {
            return Err(NetError::NonFiniteLoss);
        }
        consider(init_loss, &net, &mut best);
        let batch = cfg.batch_size.max(1).min(n);
        let lr = F::from(cfg.learning_rate).unwrap();
        let scale = F::from(1.0 / batch as f64).unwrap();
        let mut grad = vec![F::zero(); net.weights.len()];
        for _ in 0..cfg.steps {
            grad.iter_mut().for_each(|g| *g = F::zero());
            for _ in 0..batch {
                let idx = rng.gen_range(0..n);
                accumulate_gradient(&net, &examples[idx], &mut grad);
            }
            for (w, g) in net.weights.iter_mut().zip(&grad) {
                *w = *w - lr * scale * *g;
            }
        }
        let final_loss = total_weighted_loss(&net, examples);
        if !final_loss.is_finite() {
            return Err(NetError::NonFiniteLoss);
        }
        consider(final_loss, &net, &mut best);
    }
    Ok(best.expect("at least one restart").1)
}

/// The filter test: `|f(x) - f(x')| <= L ||x - x'|| + 2 kappa` on every
/// probe pair.
pub fn approx_lipschitz_ok(
    f: &dyn Fn(&[f64]) -> f64,
    l: f64,
    kappa: f64,
    probe_pairs: &[(Point, Point)],
) -> bool {
    assert!(!probe_pairs.is_empty(), "probe pairs must be nonempty");
    probe_pairs.iter().all(|(a, b)| {
        let dist = a
            .iter()
            .zip(b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        (f(a) - f(b)).abs() <= l * dist + 2.0 * kappa
    })
}

/// Parameter and depth budget for approximating an `alpha`-smooth target
/// to sup-norm `kappa`:
/// `W = ceil(c_W kappa^{-d/alpha} log2(1/kappa))`,
/// `L = ceil(c_L log2(1/kappa))`.
pub fn sobolev_budget(
    kappa: f64,
    alpha: usize,
    d: usize,
    c_w: f64,
    c_l: f64,
) -> Result<(usize, usize), NetError> {
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(NetError::Parameter(format!("kappa = {kappa} outside (0,1)")));
    }
    if alpha == 0 || d == 0 {
        return Err(NetError::Parameter("alpha and d must be positive".into()));
    }
    let log = (1.0 / kappa).log2();
    let w = (c_w * kappa.powf(-(d as f64) / alpha as f64) * log).ceil() as usize;
    let l = ((c_l * log).ceil() as usize).max(1);
    Ok((w.max(1), l))
}

/// Realize the `(W, L)` budget as `L` equal-width hidden layers with at
/// least `W` total parameters.
pub fn size_sobolev_arch(
    kappa: f64,
    alpha: usize,
    d: usize,
    c_w: f64,
    c_l: f64,
) -> Result<MlpArchitecture, NetError> {
    let (w_budget, depth) = sobolev_budget(kappa, alpha, d, c_w, c_l)?;
    let params = |h: usize| -> usize {
        let mut widths = vec![d];
        widths.extend(std::iter::repeat(h).take(depth));
        widths.push(1);
        widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    };
    let mut h = 1usize;
    while params(h) < w_budget {
        h += 1;
    }
    let mut widths = vec![d];
    widths.extend(std::iter::repeat(h).take(depth));
    widths.push(1);
    Ok(MlpArchitecture::new(widths))
}

/// Hidden width for the one-hidden-layer family:
/// `K = ceil(c_K kappa^{-2d/(d+3)})`.
pub fn size_rbv2_arch(kappa: f64, d: usize, c_k: f64) -> Result<usize, NetError> {
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(NetError::Parameter(format!("kappa = {kappa} outside (0,1)")));
    }
    let exponent = 2.0 * d as f64 / (d as f64 + 3.0);
    Ok((c_k * kappa.powf(-exponent)).ceil() as usize)
}

/// Capacity bound `ceil(c W L log2 W)`, the same form for VC and pseudo
/// dimension.
pub fn capacity_bound(w: usize, l: usize, c: f64) -> Result<usize, NetError> {
    if w < 2 {
        return Err(NetError::Parameter(format!("W = {w} < 2")));
    }
    if l < 1 {
        return Err(NetError::Parameter("L < 1".into()));
    }
    Ok((c * w as f64 * l as f64 * (w as f64).log2()).ceil() as usize)
}

/// Scalar codec for the checkpoint format.
pub trait ScalarCodec: Sized {
    const TAG: &'static str;
    const WIDTH: usize;
    fn write_le(&self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl ScalarCodec for f32 {
    const TAG: &'static str = "f32";
    const WIDTH: usize = 4;
    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl ScalarCodec for f64 {
    const TAG: &'static str = "f64";
    const WIDTH: usize = 8;
    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    layer_widths: Vec<usize>,
    clipped: bool,
    scalar: String,
    count: usize,
}

/// Checkpoint: one-line JSON header followed by the flat little-endian
/// weight array. The round trip is bit-exact.
pub fn checkpoint_bytes<F: Float + ScalarCodec>(net: &Mlp<F>) -> Vec<u8> {
    let header = CheckpointHeader {
        layer_widths: net.arch.layer_widths.clone(),
        clipped: net.arch.clipped,
        scalar: F::TAG.to_string(),
        count: net.weights.len(),
    };
    let mut out = serde_json::to_vec(&header).unwrap();
    out.push(b'\n');
    for w in &net.weights {
        w.write_le(&mut out);
    }
    out
}

pub fn checkpoint_parse<F: Float + ScalarCodec>(bytes: &[u8]) -> Result<Mlp<F>, NetError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NetError::Parameter("missing checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| NetError::Parameter(format!("bad checkpoint header: {e}")))?;
    if header.scalar != F::TAG {
        return Err(NetError::Parameter(format!(
            "checkpoint scalar {} does not match {}",
            header.scalar,
            F::TAG
        )));
    }
    let mut arch = MlpArchitecture::new(header.layer_widths);
    arch.clipped = header.clipped;
    let body = &bytes[nl + 1..];
    if body.len() != header.count * F::WIDTH || header.count != arch.total_params() {
        return Err(NetError::Parameter("checkpoint size mismatch".into()));
    }
    let weights = body.chunks_exact(F::WIDTH).map(F::read_le).collect();
    Ok(Mlp { arch, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_shift_net() -> Mlp<f64> {
        // f(x) = relu(x - 0.5): hidden width 1 (w=1, b=-0.5), linear readout.
        let arch = MlpArchitecture::new(vec![1, 1, 1]);
        Mlp {
            arch,
            weights: vec![1.0, -0.5, 1.0, 0.0],
        }
    }

    #[test]
    fn forward_zero_network() {
        let net: Mlp<f64> = Mlp::zeros(MlpArchitecture::new(vec![2, 3, 1]));
        assert_eq!(net.forward(&[0.7, -0.2]), 0.0);
    }

    #[test]
    fn forward_relu_shift() {
        let net = relu_shift_net();
        assert_eq!(net.forward(&[0.3]), 0.0);
        assert!((net.forward(&[0.8]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn forward_dim_mismatch() {
        let net = relu_shift_net();
        assert!(matches!(
            net.checked_forward(&[0.1, 0.2]),
            Err(NetError::DimMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn param_count_matches_layout() {
        let arch = MlpArchitecture::new(vec![3, 5, 4, 1]);
        // (3*5+5) + (5*4+4) + (4*1+1) = 20 + 24 + 5
        assert_eq!(arch.total_params(), 49);
        assert_eq!(arch.depth(), 3);
        let mut rng = crate::run_rng(7, 0, 0);
        let net: Mlp<f64> = Mlp::random_init(arch, 0.5, &mut rng);
        assert_eq!(net.weights.len(), net.arch.total_params());
    }

    #[test]
    fn clip_adds_exact_constant_and_clamps() {
        let net = relu_shift_net();
        let clipped = clip_network(&net).unwrap();
        assert_eq!(
            clipped.arch.total_params(),
            net.arch.total_params() + CLIP_EXTRA_PARAMS
        );
        assert_eq!(clipped.arch.depth(), net.arch.depth() + CLIP_EXTRA_LAYERS);
        // raw 1.5 via scaling: use a net computing 3(x - 0.5) to reach 1.5 at x = 1.
        let steep = Mlp {
            arch: MlpArchitecture::new(vec![1, 1, 1]),
            weights: vec![1.0, -0.5, 3.0, 0.0],
        };
        let c = clip_network(&steep).unwrap();
        assert_eq!(c.forward(&[1.0]), 1.0); // raw 1.5
        let neg = Mlp {
            arch: MlpArchitecture::new(vec![1, 1]),
            weights: vec![1.0, -0.3],
        };
        let cneg = clip_network(&neg).unwrap();
        assert_eq!(cneg.forward(&[0.0]), 0.0); // raw -0.3
        assert!((clip_network(&relu_shift_net()).unwrap().forward(&[0.92]) - 0.42).abs() < 1e-12);
        assert!(matches!(clip_network(&c), Err(NetError::AlreadyClipped)));
    }

    #[test]
    fn clip_identity_random_nets() {
        let mut rng = crate::run_rng(11, 0, 1);
        for _ in 0..50 {
            let arch = MlpArchitecture::new(vec![2, 4, 1]);
            let raw: Mlp<f64> = Mlp::random_init(arch, 2.0, &mut rng);
            let clipped = clip_network(&raw).unwrap();
            for _ in 0..200 {
                let x = vec![rand::Rng::gen::<f64>(&mut rng) * 4.0 - 2.0, rand::Rng::gen::<f64>(&mut rng) * 4.0 - 2.0];
                let r = raw.forward(&x);
                assert_eq!(clipped.forward(&x), r.max(0.0).min(1.0));
            }
        }
    }

    #[test]
    fn fit_empty_returns_seeded_init() {
        let arch = MlpArchitecture::new(vec![1, 3, 1]);
        let cfg = OracleConfig { seed: 5, ..OracleConfig::default() };
        let a: Mlp<f64> = fit_weighted_sq(&arch, &[], &cfg).unwrap();
        let mut rng = crate::run_rng(5, 0, 0);
        let b: Mlp<f64> = Mlp::random_init(arch, cfg.init_scale, &mut rng);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn fit_single_target_converges() {
        let arch = MlpArchitecture::new(vec![1, 4, 1]);
        let examples = vec![WeightedExample { weight: 1.0, x: vec![0.3], target: 1.0 }];
        let cfg = OracleConfig { steps: 4000, seed: 1, ..OracleConfig::default() };
        let net: Mlp<f64> = fit_weighted_sq(&arch, &examples, &cfg).unwrap();
        assert!((net.forward(&[0.3]) - 1.0).abs() <= 0.05);
    }

    #[test]
    fn fit_duplicated_point_finds_mean() {
        let arch = MlpArchitecture::new(vec![1, 4, 1]);
        let examples = vec![
            WeightedExample { weight: 1.0, x: vec![0.6], target: 0.0 },
            WeightedExample { weight: 1.0, x: vec![0.6], target: 1.0 },
        ];
        let cfg = OracleConfig { steps: 4000, seed: 2, ..OracleConfig::default() };
        let net: Mlp<f64> = fit_weighted_sq(&arch, &examples, &cfg).unwrap();
        assert!((net.forward(&[0.6]) - 0.5).abs() <= 0.05);
    }

    #[test]
    fn fit_deterministic_and_monotone() {
        let arch = MlpArchitecture::new(vec![2, 3, 1]);
        let mut rng = crate::run_rng(3, 0, 9);
        let examples: Vec<WeightedExample> = (0..20)
            .map(|_| WeightedExample {
                weight: 1.0,
                x: vec![rand::Rng::gen(&mut rng), rand::Rng::gen(&mut rng)],
                target: rand::Rng::gen::<f64>(&mut rng),
            })
            .collect();
        let cfg = OracleConfig { steps: 500, seed: 4, ..OracleConfig::default() };
        let a: Mlp<f64> = fit_weighted_sq(&arch, &examples, &cfg).unwrap();
        let b: Mlp<f64> = fit_weighted_sq(&arch, &examples, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        let mut rng0 = crate::run_rng(4, 0, 0);
        let init: Mlp<f64> = Mlp::random_init(arch, cfg.init_scale, &mut rng0);
        assert!(
            total_weighted_loss(&a, &examples) <= total_weighted_loss(&init, &examples) + 1e-12
        );
    }

    #[test]
    fn fit_diverges_on_huge_learning_rate() {
        let arch = MlpArchitecture::new(vec![1, 4, 1]);
        let examples = vec![WeightedExample { weight: 1.0, x: vec![1.0], target: 1.0 }];
        let cfg = OracleConfig {
            steps: 2000,
            learning_rate: 1e6,
            seed: 0,
            ..OracleConfig::default()
        };
        assert!(matches!(
            fit_weighted_sq::<f64>(&arch, &examples, &cfg),
            Err(NetError::NonFiniteLoss)
        ));
    }

    #[test]
    fn lipschitz_filter() {
        let pair = vec![(vec![0.0], vec![1.0])];
        assert!(approx_lipschitz_ok(&|_x: &[f64]| 0.7, 0.0, 0.0, &pair));
        assert!(!approx_lipschitz_ok(&|x: &[f64]| 10.0 * x[0], 1.0, 0.01, &pair));
        assert!(approx_lipschitz_ok(&|x: &[f64]| x[0], 1.0, 0.0, &pair));
        // Monotone in L and kappa.
        assert!(approx_lipschitz_ok(&|x: &[f64]| 10.0 * x[0], 10.0, 0.01, &pair));
        assert!(approx_lipschitz_ok(&|x: &[f64]| 10.0 * x[0], 1.0, 4.6, &pair));
    }

    #[test]
    fn sobolev_sizing_examples() {
        let (w, l) = sobolev_budget(0.1, 1, 1, 1.0, 1.0).unwrap();
        assert_eq!((w, l), (34, 4));
        let (w, l) = sobolev_budget(0.5, 1, 1, 1.0, 1.0).unwrap();
        assert_eq!((w, l), (2, 1));
        let arch = size_sobolev_arch(0.1, 1, 1, 1.0, 1.0).unwrap();
        assert_eq!(arch.layer_widths.len(), 6); // 4 hidden layers
        assert!(arch.total_params() >= 34);
        // Halving kappa never decreases W.
        let mut prev = 0;
        for k in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let (w, _) = sobolev_budget(k, 1, 1, 1.0, 1.0).unwrap();
            assert!(w >= prev);
            prev = w;
        }
        assert!(sobolev_budget(1.5, 1, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn rbv2_sizing_examples() {
        assert_eq!(size_rbv2_arch(0.1, 3, 1.0).unwrap(), 10);
        assert_eq!(size_rbv2_arch(0.01, 3, 1.0).unwrap(), 100);
        assert!(size_rbv2_arch(1.0, 3, 1.0).is_err());
    }

    #[test]
    fn capacity_bound_examples() {
        assert_eq!(capacity_bound(34, 4, 1.0).unwrap(), 692);
        assert_eq!(capacity_bound(2, 1, 1.0).unwrap(), 2);
        assert_eq!(capacity_bound(8, 2, 0.0).unwrap(), 0);
        assert!(capacity_bound(1, 1, 1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let mut rng = crate::run_rng(21, 0, 0);
        let arch = MlpArchitecture::new(vec![3, 5, 1]);
        let net: Mlp<f64> = Mlp::random_init(arch.clone(), 0.7, &mut rng);
        let clipped = clip_network(&net).unwrap();
        for n in [&net, &clipped] {
            let bytes = checkpoint_bytes(n);
            let back: Mlp<f64> = checkpoint_parse(&bytes).unwrap();
            assert_eq!(back.arch, n.arch);
            let same = back
                .weights
                .iter()
                .zip(&n.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same);
        }
        let net32: Mlp<f32> = Mlp::random_init(arch, 0.7, &mut rng);
        let bytes = checkpoint_bytes(&net32);
        assert!(checkpoint_parse::<f64>(&bytes).is_err()); // scalar tag mismatch
        let back: Mlp<f32> = checkpoint_parse(&bytes).unwrap();
        assert_eq!(back.weights, net32.weights);
    }
}
