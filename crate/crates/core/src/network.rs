//! Fully connected value-function approximator. Takes the concatenated
//! (design, state) vector and produces a scalar prediction of the value.
//! Default shape: three hidden layers of 64 tanh units with a softplus
//! output, so predictions are strictly positive.

use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape, TapeProgram};
use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Softplus => {
                let m = if x > 0.0 { x } else { 0.0 };
                m + libm::log1p(libm::exp(-libm::fabs(x)))
            }
            Activation::Identity => x,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self, CoreError> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            "identity" => Ok(Activation::Identity),
            other => Err(CoreError::InvalidConfig(alloc::format!("unknown activation '{other}'"))),
        }
    }
}

/// MLP weights and biases stored flat (layer-major, each weight matrix
/// row-major, biases after their matrix) plus the architecture descriptor.
/// The flat layout doubles as the parameter layout of emitted tape programs
/// and of the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    flat: Vec<f64>,
    /// (weight offset, bias offset) per layer.
    offsets: Vec<(usize, usize)>,
}

/// splitmix64; fixed here so initialization is deterministic across
/// platforms and independent of RNG crate versions.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl NetworkParams {
    /// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
    /// deterministic given the seed.
    pub fn init(seed: u64, sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "network needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "zero-width layer");
        let mut rng = SplitMix64(seed);
        let mut flat = Vec::new();
        let mut offsets = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let w_off = flat.len();
            for _ in 0..fan_in * fan_out {
                flat.push(bound * (2.0 * rng.next_f64() - 1.0));
            }
            let b_off = flat.len();
            flat.extend(core::iter::repeat(0.0).take(fan_out));
            offsets.push((w_off, b_off));
        }
        Self { sizes: sizes.to_vec(), hidden, output, flat, offsets }
    }

    /// Default shape for a problem with `design_dim` + `state_dim` inputs.
    pub fn default_arch(seed: u64, design_dim: usize, state_dim: usize) -> Self {
        let sizes = [design_dim + state_dim, 64, 64, 64, 1];
        Self::init(seed, &sizes, Activation::Tanh, Activation::Softplus)
    }

    /// Rebuild from serialized pieces, validating layer compatibility.
    pub fn from_parts(
        sizes: Vec<usize>,
        hidden: Activation,
        output: Activation,
        layers: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self, CoreError> {
        if sizes.len() < 2 || layers.len() != sizes.len() - 1 {
            return Err(CoreError::InvalidConfig("layer count does not match sizes".into()));
        }
        let mut flat = Vec::new();
        let mut offsets = Vec::new();
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.len() != sizes[l] * sizes[l + 1] || b.len() != sizes[l + 1] {
                return Err(CoreError::DimensionMismatch {
                    expected: sizes[l] * sizes[l + 1],
                    got: w.len(),
                    what: "layer weights",
                });
            }
            offsets.push((flat.len(), flat.len() + w.len()));
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        Ok(Self { sizes, hidden, output, flat, offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.flat.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn layer_count(&self) -> usize {
        self.offsets.len()
    }

    /// Row-major weight slice and bias slice of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w_off, b_off) = self.offsets[l];
        let out = self.sizes[l + 1];
        (&self.flat[w_off..b_off], &self.flat[b_off..b_off + out])
    }

    /// Tensor shape descriptor matching the flat layout, for gradients.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut segs = Vec::new();
        for l in 0..self.offsets.len() {
            segs.push((self.sizes[l + 1], self.sizes[l]));
            segs.push((self.sizes[l + 1], 1));
        }
        segs
    }

    /// Plain forward evaluation, written as straight matrix arithmetic so it
    /// stays independent of the tape path it is tested against.
    pub fn forward(&self, rho: &[f64], x: &[f64]) -> Result<f64, CoreError> {
        if rho.len() + x.len() != self.sizes[0] {
            return Err(CoreError::DimensionMismatch {
                expected: self.sizes[0],
                got: rho.len() + x.len(),
                what: "network input",
            });
        }
        let mut cur: Vec<f64> = rho.iter().chain(x.iter()).copied().collect();
        let mut next = Vec::new();
        let last = self.offsets.len() - 1;
        for l in 0..self.offsets.len() {
            let (w, b) = self.layer(l);
            let (in_d, out_d) = (self.sizes[l], self.sizes[l + 1]);
            let act = if l == last { self.output } else { self.hidden };
            next.clear();
            for o in 0..out_d {
                let z: f64 =
                    w[o * in_d..(o + 1) * in_d].iter().zip(&cur).map(|(a, b)| a * b).sum();
                next.push(act.apply(z + b[o]));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Emit the network onto a program with weights bound as parameters at
    /// `theta_base`. `inputs` must be a contiguous node range holding the
    /// concatenated (design, state) vector. Returns the prediction node.
    pub fn emit_program(
        &self,
        prog: &mut TapeProgram,
        theta_base: u32,
        inputs: &[NodeId],
    ) -> NodeId {
        assert_eq!(inputs.len(), self.sizes[0], "input node count");
        assert!(
            inputs.windows(2).all(|w| w[1].index() == w[0].index() + 1),
            "network inputs must be contiguous nodes"
        );
        let mut cur_first = inputs[0];
        let last = self.offsets.len() - 1;
        let mut pre = Vec::new();
        for l in 0..self.offsets.len() {
            let (w_off, b_off) = self.offsets[l];
            let (in_d, out_d) = (self.sizes[l], self.sizes[l + 1]);
            pre.clear();
            for o in 0..out_d {
                pre.push(prog.dot_param(theta_base + (w_off + o * in_d) as u32, cur_first, in_d as u32));
            }
            let mut biased = Vec::with_capacity(out_d);
            for (o, &dot) in pre.iter().enumerate() {
                biased.push(prog.add_param(dot, theta_base + (b_off + o) as u32));
            }
            let act = if l == last { self.output } else { self.hidden };
            let first_act = match act {
                Activation::Identity => biased[0],
                Activation::Tanh => {
                    let first = prog.tanh(biased[0]);
                    for &bnode in &biased[1..] {
                        prog.tanh(bnode);
                    }
                    first
                }
                Activation::Softplus => {
                    let first = prog.softplus(biased[0]);
                    for &bnode in &biased[1..] {
                        prog.softplus(bnode);
                    }
                    first
                }
            };
            cur_first = first_act;
        }
        cur_first
    }

    /// Emit the network onto a scalar tape with the current weights baked in
    /// as constants. Only the passed inputs stay differentiable.
    pub fn emit_tape(&self, tape: &mut Tape, inputs: &[NodeId]) -> NodeId {
        assert_eq!(inputs.len(), self.sizes[0], "input node count");
        let mut cur: Vec<NodeId> = inputs.to_vec();
        let last = self.offsets.len() - 1;
        for l in 0..self.offsets.len() {
            let (w, b) = self.layer(l);
            let (in_d, out_d) = (self.sizes[l], self.sizes[l + 1]);
            let w_nodes: Vec<NodeId> = w.iter().map(|&v| tape.constant(v)).collect();
            let act = if l == last { self.output } else { self.hidden };
            let mut next = Vec::with_capacity(out_d);
            for o in 0..out_d {
                let z = tape.dot(&w_nodes[o * in_d..(o + 1) * in_d], &cur);
                let zb = tape.add_const(z, b[o]);
                next.push(match act {
                    Activation::Identity => zb,
                    Activation::Tanh => tape.tanh(zb),
                    Activation::Softplus => tape.softplus(zb),
                });
            }
            cur = next;
        }
        cur[0]
    }

    /// Xavier bound of layer `l`, exposed for the initialization tests.
    pub fn xavier_bound(&self, l: usize) -> f64 {
        libm::sqrt(6.0 / (self.sizes[l] + self.sizes[l + 1]) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_softplus_zero() {
        let mut net = NetworkParams::default_arch(7, 1, 2);
        net.flat_mut().iter_mut().for_each(|w| *w = 0.0);
        let v = net.forward(&[0.3], &[0.5, -0.2]).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15, "softplus(0) = ln 2, got {v}");
    }

    #[test]
    fn output_is_positive() {
        let net = NetworkParams::default_arch(3, 1, 2);
        for s in 0..20 {
            let t = s as f64 * 0.37 - 3.0;
            let v = net.forward(&[t], &[t * 0.5, -t]).unwrap();
            assert!(v > 0.0, "softplus output must be positive, got {v}");
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = NetworkParams::init(42, &[64, 64], Activation::Tanh, Activation::Identity);
        let b = NetworkParams::init(42, &[64, 64], Activation::Tanh, Activation::Identity);
        assert_eq!(a, b);
        let bound = (6.0f64 / 128.0).sqrt();
        let (w, bias) = a.layer(0);
        assert!(w.iter().all(|&v| v.abs() <= bound), "weight outside xavier bound");
        assert!(w.iter().any(|&v| v.abs() > 0.5 * bound), "suspiciously small weights");
        assert!(bias.iter().all(|&v| v == 0.0), "biases must start at zero");
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let net = NetworkParams::default_arch(11, 1, 2);
        let (rho, x) = ([0.8], [0.25, -0.6]);
        let plain = net.forward(&rho, &x).unwrap();
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> =
            rho.iter().chain(x.iter()).map(|&v| tape.leaf(v)).collect();
        let out = net.emit_tape(&mut tape, &leaves);
        assert!((tape.value(out) - plain).abs() < 1e-12);
    }

    #[test]
    fn bad_input_dim_is_rejected() {
        let net = NetworkParams::default_arch(0, 1, 2);
        assert!(net.forward(&[1.0], &[1.0]).is_err());
    }
}
