//! DeepBern networks: affine layers followed by per-neuron Bernstein
//! polynomial activations, with an affine (identity-activated) output layer.
//!
//! The same type carries the learned one-step dynamics surrogate and the
//! compiled STL robustness networks of [`crate::stl`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bernstein::{BernsteinPoly, Interval};
use crate::error::{Error, Result};
use crate::num;
use crate::reach::{self, IntervalBox};

/// `y = W x + b` with `W` stored row-major (`out_dim × in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidNet("layer dimensions must be positive".into()));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::InvalidNet(format!(
                "weight matrix has {} entries, expected {}x{}",
                weights.len(),
                out_dim,
                in_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::InvalidNet(format!(
                "bias has {} entries, expected {}",
                bias.len(),
                out_dim
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNet("non-finite weight or bias".into()));
        }
        Ok(AffineLayer {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        AffineLayer {
            in_dim: dim,
            out_dim: dim,
            weights,
            bias: vec![0.0; dim],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(self.bias[i], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

/// Activation applied after an affine layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Identity,
    /// One polynomial per neuron of the preceding affine layer.
    Bernstein(Vec<BernsteinPoly>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub affine: AffineLayer,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepBernNet {
    input_domain: Vec<Interval>,
    layers: Vec<Layer>,
    eps_bar: f64,
    domain_margin: f64,
}

impl DeepBernNet {
    pub fn new(
        input_domain: Vec<Interval>,
        layers: Vec<Layer>,
        eps_bar: f64,
        domain_margin: f64,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidNet("a network needs at least one layer".into()))?;
        if input_domain.len() != first.affine.in_dim {
            return Err(Error::InvalidNet(format!(
                "input domain has {} dimensions, first layer expects {}",
                input_domain.len(),
                first.affine.in_dim
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].affine.out_dim != pair[1].affine.in_dim {
                return Err(Error::InvalidNet(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].affine.out_dim,
                    i + 1,
                    pair[1].affine.in_dim
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if let Activation::Bernstein(polys) = &l.activation {
                if polys.len() != l.affine.out_dim {
                    return Err(Error::InvalidNet(format!(
                        "layer {} has {} activations for {} neurons",
                        i,
                        polys.len(),
                        l.affine.out_dim
                    )));
                }
            }
        }
        if !(eps_bar >= 0.0 && eps_bar.is_finite()) {
            return Err(Error::InvalidNet("eps_bar must be finite and nonnegative".into()));
        }
        if !(domain_margin >= 1.0 && domain_margin.is_finite()) {
            return Err(Error::InvalidNet("domain margin must be >= 1".into()));
        }
        Ok(DeepBernNet {
            input_domain,
            layers,
            eps_bar,
            domain_margin,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_domain.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.affine.out_dim)
    }

    pub fn input_domain(&self) -> &[Interval] {
        &self.input_domain
    }

    pub fn input_box(&self) -> IntervalBox {
        IntervalBox::new(self.input_domain.clone())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn eps_bar(&self) -> f64 {
        self.eps_bar
    }

    pub fn set_eps_bar(&mut self, eps_bar: f64) -> Result<()> {
        if !(eps_bar >= 0.0 && eps_bar.is_finite()) {
            return Err(Error::arg("eps_bar must be finite and nonnegative"));
        }
        self.eps_bar = eps_bar;
        Ok(())
    }

    pub fn domain_margin(&self) -> f64 {
        self.domain_margin
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        for (dim, (v, d)) in x.iter().zip(&self.input_domain).enumerate() {
            if !d.contains_with_slack(*v) {
                return Err(Error::InputEscape {
                    dim,
                    lo: *v,
                    hi: *v,
                    dom_lo: d.lo,
                    dom_hi: d.hi,
                });
            }
        }
        Ok(())
    }

    /// Evaluates the network; every pre-activation must stay inside its
    /// neuron's domain.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.affine.apply(&a);
            a = match &layer.activation {
                Activation::Identity => z,
                Activation::Bernstein(polys) => z
                    .iter()
                    .zip(polys)
                    .enumerate()
                    .map(|(ni, (zi, p))| {
                        p.eval(*zi).map_err(|_| {
                            let d = p.domain();
                            Error::DomainEscape {
                                layer: li,
                                neuron: ni,
                                lo: *zi,
                                hi: *zi,
                                dom_lo: d.lo,
                                dom_hi: d.hi,
                            }
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?,
            };
        }
        Ok(a)
    }

    /// Evaluates the network with activations extrapolated outside their
    /// domains and no input check.
    pub fn forward_extrapolated(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine.apply(&a);
            a = match &layer.activation {
                Activation::Identity => z,
                Activation::Bernstein(polys) => z
                    .iter()
                    .zip(polys)
                    .map(|(zi, p)| p.eval_extrapolated(*zi))
                    .collect(),
            };
        }
        a
    }

    /// Pre-activations of every layer and post-activations of every layer
    /// (with the input prepended), extrapolating activations.
    fn trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.affine.apply(acts.last().unwrap());
            let a = match &layer.activation {
                Activation::Identity => z.clone(),
                Activation::Bernstein(polys) => z
                    .iter()
                    .zip(polys)
                    .map(|(zi, p)| p.eval_extrapolated(*zi))
                    .collect(),
            };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let act = match &l.activation {
                    Activation::Identity => 0,
                    Activation::Bernstein(p) => p.iter().map(|q| q.coeffs().len()).sum(),
                };
                l.affine.weights.len() + l.affine.bias.len() + act
            })
            .sum()
    }

    /// Every trainable parameter, layer by layer: weights (row-major), biases,
    /// then the Bernstein coefficients neuron by neuron.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.affine.weights);
            out.extend_from_slice(&l.affine.bias);
            if let Activation::Bernstein(polys) = &l.activation {
                for p in polys {
                    out.extend_from_slice(p.coeffs());
                }
            }
        }
        out
    }

    /// Overwrites the parameters in the order of [`DeepBernNet::params`].
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.affine.weights.iter_mut().chain(l.affine.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
            if let Activation::Bernstein(polys) = &mut l.activation {
                for p in polys {
                    for c in p.coeffs_mut() {
                        *c = it.next().unwrap();
                    }
                }
            }
        }
        Ok(())
    }

    /// Squared-error loss `mean_s Σ_o (ŷ - y)²` over the batch and its
    /// gradient with respect to [`DeepBernNet::params`]. Activations are
    /// extrapolated, as during training.
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
    ) -> Result<(f64, Vec<f64>)> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        let derivs: Vec<Option<Vec<BernsteinPoly>>> = self
            .layers
            .iter()
            .map(|l| match &l.activation {
                Activation::Identity => None,
                Activation::Bernstein(p) => Some(p.iter().map(|q| q.derivative()).collect()),
            })
            .collect();
        let offsets = self.param_offsets();
        let mut grad = vec![0.0; self.num_params()];
        let scale = 1.0 / inputs.len() as f64;
        let mut loss = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            if x.len() != self.input_dim() || y.len() != self.output_dim() {
                return Err(Error::Dimension {
                    expected: self.input_dim() + self.output_dim(),
                    found: x.len() + y.len(),
                });
            }
            let (zs, acts) = self.trace(x);
            let out = acts.last().unwrap();
            let mut delta_a: Vec<f64> = out
                .iter()
                .zip(y)
                .map(|(o, t)| {
                    loss += (o - t) * (o - t) * scale;
                    2.0 * (o - t) * scale
                })
                .collect();
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let off = &offsets[li];
                let z = &zs[li];
                let delta_z: Vec<f64> = match (&layer.activation, &derivs[li]) {
                    (Activation::Bernstein(polys), Some(dp)) => {
                        let mut cofs = off.coeffs;
                        let mut dz = Vec::with_capacity(z.len());
                        for (ni, p) in polys.iter().enumerate() {
                            let basis = p.basis_values_extrapolated(z[ni]);
                            for (k, b) in basis.iter().enumerate() {
                                grad[cofs + k] += delta_a[ni] * b;
                            }
                            cofs += basis.len();
                            dz.push(delta_a[ni] * dp[ni].eval_extrapolated(z[ni]));
                        }
                        dz
                    }
                    _ => delta_a.clone(),
                };
                let a_prev = &acts[li];
                let aff = &layer.affine;
                let mut next = vec![0.0; aff.in_dim];
                for i in 0..aff.out_dim {
                    let dzi = delta_z[i];
                    grad[off.bias + i] += dzi;
                    let row = aff.row(i);
                    let gw = &mut grad[off.weights + i * aff.in_dim..off.weights + (i + 1) * aff.in_dim];
                    for j in 0..aff.in_dim {
                        gw[j] += dzi * a_prev[j];
                        next[j] += row[j] * dzi;
                    }
                }
                delta_a = next;
            }
        }
        Ok((loss, grad))
    }

    fn param_offsets(&self) -> Vec<ParamOffsets> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let weights = at;
                let bias = weights + l.affine.weights.len();
                let coeffs = bias + l.affine.bias.len();
                at = coeffs
                    + match &l.activation {
                        Activation::Identity => 0,
                        Activation::Bernstein(p) => p.iter().map(|q| q.coeffs().len()).sum(),
                    };
                ParamOffsets {
                    weights,
                    bias,
                    coeffs,
                }
            })
            .collect()
    }
}

struct ParamOffsets {
    weights: usize,
    bias: usize,
    coeffs: usize,
}

/// Input/target pairs with column names (units in brackets by convention,
/// e.g. `h [m]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_names: Vec<String>,
    pub target_names: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        input_names: Vec<String>,
        target_names: Vec<String>,
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        let (di, dt) = (inputs[0].len(), targets[0].len());
        if di == 0 || dt == 0 {
            return Err(Error::arg("dataset columns must be nonempty"));
        }
        for (x, y) in inputs.iter().zip(&targets) {
            if x.len() != di {
                return Err(Error::Dimension {
                    expected: di,
                    found: x.len(),
                });
            }
            if y.len() != dt {
                return Err(Error::Dimension {
                    expected: dt,
                    found: y.len(),
                });
            }
        }
        if input_names.len() != di || target_names.len() != dt {
            return Err(Error::arg("column names do not match the data width"));
        }
        Ok(Dataset {
            input_names,
            target_names,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            input_names: self.input_names.clone(),
            target_names: self.target_names.clone(),
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    /// Seeded split into `(train, heldout)`; when the held-out share rounds
    /// to zero samples the whole set serves as both.
    pub fn split(&self, heldout_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
        idx.shuffle(&mut rng);
        let n_held = (heldout_fraction.clamp(0.0, 1.0) * self.len() as f64) as usize;
        if n_held == 0 || n_held >= self.len() {
            return (self.clone(), self.clone());
        }
        (self.subset(&idx[n_held..]), self.subset(&idx[..n_held]))
    }
}

const SPLIT_SALT: u64 = 0x5eed_5011;

/// Mean over samples of the squared Euclidean error.
pub fn mse(net: &DeepBernNet, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let out = net.forward(x)?;
        if out.len() != y.len() {
            return Err(Error::Dimension {
                expected: out.len(),
                found: y.len(),
            });
        }
        acc += out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
    }
    Ok(acc / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global L2 norm the gradient is clipped to.
    pub clip_norm: f64,
    pub heldout_fraction: f64,
    /// Multiplicative inflation of observed pre-activation ranges.
    pub domain_margin: f64,
    /// Noise added to the ramp initialization, relative to the domain width.
    pub init_noise: f64,
    /// Input domain of the trained net; defaults to the data's bounding box.
    pub input_domain: Option<Vec<Interval>>,
    pub eps_bar: f64,
    /// When nonempty, output `j` is learned as an increment over input
    /// `residual[j]`, and the returned net carries that input through
    /// identity neurons to the output.
    pub residual: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            clip_norm: 1.0,
            heldout_fraction: 0.2,
            domain_margin: 1.25,
            init_noise: 0.01,
            input_domain: None,
            eps_bar: 0.0,
            residual: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_samples: usize,
    pub heldout_samples: usize,
    /// Held-out loss after each epoch, in normalized units.
    pub epoch_losses: Vec<f64>,
    /// Running minimum of `epoch_losses`.
    pub best_so_far: Vec<f64>,
    /// [`mse`] of the returned net on the held-out split, in data units.
    pub heldout_mse: f64,
    pub train_mse: f64,
}

struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = num::sqrt(*v);
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Trains a network with hidden widths `arch` and activation degree `degree`
/// by minibatch SGD on standardized data.
///
/// Per-neuron domains follow the running min/max of the pre-activations seen
/// in each epoch, inflated by `domain_margin`. After the last epoch every
/// domain is widened to also cover the pre-activations of the whole dataset
/// and the interval bounds reachable from the input domain, so both
/// [`DeepBernNet::forward`] on the data and [`reach::reach_net`] on the input
/// domain succeed. The standardization is folded into the first and last
/// affine layers, so the returned net works in data units.
pub fn train(
    data: &Dataset,
    arch: &[usize],
    degree: usize,
    cfg: &TrainConfig,
) -> Result<(DeepBernNet, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if arch.iter().any(|w| *w == 0) {
        return Err(Error::arg("hidden widths must be >= 1"));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.clip_norm > 0.0) {
        return Err(Error::arg("batch size, learning rate and clip norm must be positive"));
    }
    if !(cfg.domain_margin >= 1.0) {
        return Err(Error::arg("domain margin must be >= 1"));
    }
    let (orig_train, orig_heldout) = data.split(cfg.heldout_fraction, cfg.seed);
    let (train_set, heldout) = if cfg.residual.is_empty() {
        (orig_train.clone(), orig_heldout.clone())
    } else {
        let out_dim = data.targets[0].len();
        if cfg.residual.len() != out_dim
            || cfg.residual.iter().any(|&i| i >= data.inputs[0].len())
        {
            return Err(Error::arg("residual needs one valid input index per output"));
        }
        (
            increments(&orig_train, &cfg.residual),
            increments(&orig_heldout, &cfg.residual),
        )
    };
    let in_std = Standardizer::fit(&train_set.inputs);
    let out_std = Standardizer::fit(&train_set.targets);
    let xs: Vec<Vec<f64>> = train_set.inputs.iter().map(|r| in_std.apply(r)).collect();
    let ys: Vec<Vec<f64>> = train_set.targets.iter().map(|r| out_std.apply(r)).collect();
    let hx: Vec<Vec<f64>> = heldout.inputs.iter().map(|r| in_std.apply(r)).collect();
    let hy: Vec<Vec<f64>> = heldout.targets.iter().map(|r| out_std.apply(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let in_dim = xs[0].len();
    let out_dim = ys[0].len();
    let mut net = init_net(&xs, in_dim, out_dim, arch, degree, cfg, &mut rng)?;

    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut best_so_far = Vec::with_capacity(cfg.epochs);
    let mut params = net.params();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut ranges = RangeTracker::new(&net);
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<Vec<f64>> = chunk.iter().map(|&i| ys[i].clone()).collect();
            for x in &bx {
                ranges.observe(&net, x);
            }
            let (_, mut g) = net.loss_and_gradient(&bx, &by)?;
            let norm = num::sqrt(g.iter().map(|v| v * v).sum::<f64>());
            if !norm.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if norm > cfg.clip_norm {
                let k = cfg.clip_norm / norm;
                for v in &mut g {
                    *v *= k;
                }
            }
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= cfg.learning_rate * gi;
            }
            net.set_params(&params)?;
        }
        ranges.apply(&mut net, cfg.domain_margin)?;
        params = net.params();
        let loss = normalized_loss(&net, &hx, &hy);
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        let best = best_so_far.last().map_or(loss, |b: &f64| b.min(loss));
        epoch_losses.push(loss);
        best_so_far.push(best);
    }

    fold_standardization(&mut net, &in_std, &out_std);
    let input_domain = match &cfg.input_domain {
        Some(d) => {
            if d.len() != in_dim {
                return Err(Error::Dimension {
                    expected: in_dim,
                    found: d.len(),
                });
            }
            d.clone()
        }
        None => bounding_box(&data.inputs),
    };
    net.input_domain = input_domain;
    net.eps_bar = cfg.eps_bar;
    if !cfg.residual.is_empty() {
        add_skip(&mut net, &cfg.residual)?;
    }
    finalize_domains(&mut net, &data.inputs)?;

    let heldout_mse = mse(&net, &orig_heldout)?;
    let train_mse = mse(&net, &orig_train)?;
    let report = TrainReport {
        train_samples: orig_train.len(),
        heldout_samples: orig_heldout.len(),
        epoch_losses,
        best_so_far,
        heldout_mse,
        train_mse,
    };
    Ok((net, report))
}

fn increments(data: &Dataset, residual: &[usize]) -> Dataset {
    let mut out = data.clone();
    for (x, y) in out.inputs.iter().zip(out.targets.iter_mut()) {
        for (yj, &i) in y.iter_mut().zip(residual) {
            *yj -= x[i];
        }
    }
    out
}

/// Appends `extra` zero columns to the weight matrix.
fn widen_inputs(aff: &mut AffineLayer, extra: usize) {
    let new_in = aff.in_dim + extra;
    let mut w = Vec::with_capacity(aff.out_dim * new_in);
    for i in 0..aff.out_dim {
        w.extend_from_slice(aff.row(i));
        w.extend(core::iter::repeat(0.0).take(extra));
    }
    aff.weights = w;
    aff.in_dim = new_in;
}

/// Carries input `residual[j]` unchanged through every hidden layer, on
/// degree-1 identity neurons, and adds it to output `j`.
fn add_skip(net: &mut DeepBernNet, residual: &[usize]) -> Result<()> {
    let s = residual.len();
    let doms: Vec<Interval> = residual
        .iter()
        .map(|&i| {
            let d = net.input_domain[i];
            d.pad(1e-6 * d.width().max(1.0))
        })
        .collect();
    let n_layers = net.layers.len();
    // Index of the carried values in the current layer's input.
    let mut carried: Vec<usize> = residual.to_vec();
    for li in 0..n_layers {
        let layer = &mut net.layers[li];
        if li > 0 {
            widen_inputs(&mut layer.affine, s);
        }
        let aff = &mut layer.affine;
        if li + 1 == n_layers {
            for (j, &c) in carried.iter().enumerate() {
                aff.weights[j * aff.in_dim + c] += 1.0;
            }
            break;
        }
        let first_new = aff.out_dim;
        for &c in &carried {
            let mut row = vec![0.0; aff.in_dim];
            row[c] = 1.0;
            aff.weights.extend_from_slice(&row);
            aff.bias.push(0.0);
        }
        aff.out_dim += s;
        if let Activation::Bernstein(polys) = &mut layer.activation {
            for d in &doms {
                polys.push(BernsteinPoly::ramp(1, *d)?);
            }
        }
        carried = (first_new..first_new + s).collect();
    }
    Ok(())
}

fn normalized_loss(net: &DeepBernNet, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = net.forward_extrapolated(x);
        acc += out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
    }
    acc / xs.len() as f64
}

fn bounding_box(rows: &[Vec<f64>]) -> Vec<Interval> {
    let d = rows[0].len();
    (0..d)
        .map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[j]), hi.max(r[j]))
            });
            Interval { lo, hi }
        })
        .collect()
}

fn init_net(
    xs: &[Vec<f64>],
    in_dim: usize,
    out_dim: usize,
    arch: &[usize],
    degree: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DeepBernNet> {
    let noise = Normal::new(0.0, 1.0).map_err(|_| Error::arg("bad noise scale"))?;
    let mut layers = Vec::with_capacity(arch.len() + 1);
    let mut acts: Vec<Vec<f64>> = xs.to_vec();
    let mut prev = in_dim;
    for &width in arch.iter().chain(core::iter::once(&out_dim)) {
        let is_output = layers.len() == arch.len();
        let limit = num::sqrt(6.0 / (prev + width) as f64);
        let weights = (0..prev * width)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let affine = AffineLayer::new(prev, width, weights, vec![0.0; width])?;
        let zs: Vec<Vec<f64>> = acts.iter().map(|a| affine.apply(a)).collect();
        let activation = if is_output {
            Activation::Identity
        } else {
            let mut polys = Vec::with_capacity(width);
            for n in 0..width {
                let range = observed(&zs, n).inflate(cfg.domain_margin, 1e-3);
                let mut p = BernsteinPoly::ramp(degree, range)?;
                if degree == 0 {
                    p = BernsteinPoly::constant(range, range.mid())?;
                }
                for c in p.coeffs_mut() {
                    *c += cfg.init_noise * range.width() * noise.sample(rng);
                }
                polys.push(p);
            }
            Activation::Bernstein(polys)
        };
        let layer = Layer { affine, activation };
        acts = zs
            .into_iter()
            .map(|z| match &layer.activation {
                Activation::Identity => z,
                Activation::Bernstein(p) => {
                    z.iter().zip(p).map(|(v, q)| q.eval_extrapolated(*v)).collect()
                }
            })
            .collect();
        layers.push(layer);
        prev = width;
    }
    let domain = bounding_box(xs);
    DeepBernNet::new(domain, layers, cfg.eps_bar, cfg.domain_margin)
}

fn observed(zs: &[Vec<f64>], n: usize) -> Interval {
    let (lo, hi) = zs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
        (lo.min(z[n]), hi.max(z[n]))
    });
    Interval { lo, hi }
}

/// Per-neuron running min/max of pre-activations.
struct RangeTracker {
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

impl RangeTracker {
    fn new(net: &DeepBernNet) -> Self {
        let lo = net
            .layers
            .iter()
            .map(|l| vec![f64::INFINITY; l.affine.out_dim])
            .collect();
        let hi = net
            .layers
            .iter()
            .map(|l| vec![f64::NEG_INFINITY; l.affine.out_dim])
            .collect();
        RangeTracker { lo, hi }
    }

    fn observe(&mut self, net: &DeepBernNet, x: &[f64]) {
        let (zs, _) = net.trace(x);
        for (li, z) in zs.iter().enumerate() {
            for (ni, v) in z.iter().enumerate() {
                self.lo[li][ni] = self.lo[li][ni].min(*v);
                self.hi[li][ni] = self.hi[li][ni].max(*v);
            }
        }
    }

    fn range(&self, li: usize, ni: usize) -> Option<Interval> {
        let (lo, hi) = (self.lo[li][ni], self.hi[li][ni]);
        (lo <= hi && lo.is_finite() && hi.is_finite()).then_some(Interval { lo, hi })
    }

    /// Moves every domain to the inflated observed range; the polynomial is
    /// re-expressed exactly, so the network function does not change.
    fn apply(&self, net: &mut DeepBernNet, margin: f64) -> Result<()> {
        for (li, layer) in net.layers.iter_mut().enumerate() {
            if let Activation::Bernstein(polys) = &mut layer.activation {
                for (ni, p) in polys.iter_mut().enumerate() {
                    if let Some(r) = self.range(li, ni) {
                        let target = r.inflate(margin, 1e-3);
                        *p = p.reparameterize(target)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn fold_standardization(net: &mut DeepBernNet, input: &Standardizer, output: &Standardizer) {
    let first = &mut net.layers[0].affine;
    for i in 0..first.out_dim {
        let mut shift = 0.0;
        for j in 0..first.in_dim {
            let w = &mut first.weights[i * first.in_dim + j];
            *w /= input.std[j];
            shift += *w * input.mean[j];
        }
        first.bias[i] -= shift;
    }
    let last = &mut net.layers.last_mut().unwrap().affine;
    for i in 0..last.out_dim {
        for j in 0..last.in_dim {
            last.weights[i * last.in_dim + j] *= output.std[i];
        }
        last.bias[i] = last.bias[i] * output.std[i] + output.mean[i];
    }
}

/// Final domain pass, layer by layer: each domain becomes the hull of its
/// current extent, the pre-activations of `inputs`, and the interval bound of
/// the pre-activation over the input domain, padded by a relative `1e-6`.
fn finalize_domains(net: &mut DeepBernNet, inputs: &[Vec<f64>]) -> Result<()> {
    let mut acts: Vec<Vec<f64>> = inputs.to_vec();
    let mut bx = net.input_box();
    for li in 0..net.layers.len() {
        let zs: Vec<Vec<f64>> = acts.iter().map(|a| net.layers[li].affine.apply(a)).collect();
        let zbox = reach::propagate_affine(&net.layers[li].affine, &bx)?;
        if let Activation::Bernstein(polys) = &mut net.layers[li].activation {
            for (ni, p) in polys.iter_mut().enumerate() {
                let ib = zbox.dims()[ni];
                let target = p.domain().hull(&observed(&zs, ni)).hull(&ib);
                let pad = 1e-6 * target.width().max(1.0);
                let target = target.pad(pad);
                if target != p.domain() {
                    *p = p.reparameterize(target)?;
                }
            }
        }
        let layer = &net.layers[li];
        bx = reach::propagate_activation_layer(&layer.activation, &zbox, li)?;
        acts = zs
            .into_iter()
            .map(|z| match &layer.activation {
                Activation::Identity => z,
                Activation::Bernstein(p) => {
                    z.iter().zip(p).map(|(v, q)| q.eval_extrapolated(*v)).collect()
                }
            })
            .collect();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn names(n: usize, p: &str) -> Vec<String> {
        (0..n).map(|i| format!("{p}{i}")).collect()
    }

    #[test]
    fn identity_layer_is_identity() {
        let net = DeepBernNet::new(
            vec![iv(-1.0, 1.0), iv(0.0, 2.0)],
            vec![Layer {
                affine: AffineLayer::identity(2),
                activation: Activation::Identity,
            }],
            0.0,
            1.25,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.3, 1.7]).unwrap(), vec![0.3, 1.7]);
    }

    #[test]
    fn abs_neuron_example() {
        let net = DeepBernNet::new(
            vec![iv(-1.0, 1.0)],
            vec![Layer {
                affine: AffineLayer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
                activation: Activation::Bernstein(vec![
                    BernsteinPoly::abs_approx(2, iv(-1.0, 1.0)).unwrap()
                ]),
            }],
            0.0,
            1.25,
        )
        .unwrap();
        assert!((net.forward(&[0.0]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_escape_names_the_neuron() {
        let net = DeepBernNet::new(
            vec![iv(-1.0, 1.0)],
            vec![Layer {
                affine: AffineLayer::new(1, 2, vec![1.0, 3.0], vec![0.0, 0.0]).unwrap(),
                activation: Activation::Bernstein(vec![
                    BernsteinPoly::ramp(2, iv(-1.0, 1.0)).unwrap(),
                    BernsteinPoly::ramp(2, iv(-1.0, 1.0)).unwrap(),
                ]),
            }],
            0.0,
            1.25,
        )
        .unwrap();
        assert!(matches!(
            net.forward(&[0.5]),
            Err(Error::DomainEscape {
                layer: 0,
                neuron: 1,
                ..
            })
        ));
        assert!(matches!(net.forward(&[2.0]), Err(Error::InputEscape { dim: 0, .. })));
    }

    #[test]
    fn constructor_validates_shapes() {
        let bad = DeepBernNet::new(
            vec![iv(0.0, 1.0)],
            vec![
                Layer {
                    affine: AffineLayer::identity(1),
                    activation: Activation::Identity,
                },
                Layer {
                    affine: AffineLayer::identity(2),
                    activation: Activation::Identity,
                },
            ],
            0.0,
            1.25,
        );
        assert!(matches!(bad, Err(Error::InvalidNet(_))));
        assert!(AffineLayer::new(2, 1, vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn mse_sum_convention() {
        let net = DeepBernNet::new(
            vec![iv(-1.0, 1.0), iv(-1.0, 1.0)],
            vec![Layer {
                affine: AffineLayer::identity(2),
                activation: Activation::Identity,
            }],
            0.0,
            1.25,
        )
        .unwrap();
        let d = Dataset::new(
            names(2, "x"),
            names(2, "y"),
            vec![vec![0.0, 0.0]],
            vec![vec![1.0, 1.0]],
        )
        .unwrap();
        assert_eq!(mse(&net, &d).unwrap(), 2.0);
        let exact = Dataset::new(
            names(2, "x"),
            names(2, "y"),
            vec![vec![0.5, -0.5]],
            vec![vec![0.5, -0.5]],
        )
        .unwrap();
        assert_eq!(mse(&net, &exact).unwrap(), 0.0);
    }

    #[test]
    fn constant_target_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)])
            .collect();
        let targets = vec![vec![2.5]; 200];
        let d = Dataset::new(names(2, "x"), names(1, "y"), inputs, targets).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let (net, report) = train(&d, &[4], 2, &cfg).unwrap();
        assert!(mse(&net, &d).unwrap() <= 1e-4);
        assert_eq!(report.epoch_losses.len(), 20);
    }

    #[test]
    fn empty_and_bad_inputs() {
        assert!(matches!(
            Dataset::new(vec![], vec![], vec![], vec![]),
            Err(Error::EmptyDataset)
        ));
        let d = Dataset::new(names(1, "x"), names(1, "y"), vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        assert!(train(&d, &[0], 2, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let inputs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let targets: Vec<Vec<f64>> = (0..64).map(|i| vec![(i * i) as f64]).collect();
        let d = Dataset::new(names(1, "x"), names(1, "y"), inputs, targets).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            clip_norm: 1e300,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&d, &[4], 3, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }
}
