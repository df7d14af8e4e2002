//! Parameterized function blocks.
//!
//! Blocks register their tensors in a [`ParamSet`] at construction and hold
//! only [`ParamId`]s; forward passes take the graph plus a [`Binding`] so the
//! same block can run against live parameters, a target-network snapshot, or
//! a finite-difference perturbation without any copying ceremony.
//!
//! Inputs are `(features x batch)` matrices; the batch axis is usually the
//! agent axis, so shared blocks applied to all agents are a single matmul.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Binding, ParamId, ParamSet};
use super::tensor::Tensor;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Act {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

fn apply_act(g: &mut Graph, act: Act, x: Var) -> Var {
    match act {
        Act::Identity => x,
        Act::Relu => g.relu(x),
        Act::Tanh => g.tanh(x),
        Act::Sigmoid => g.sigmoid(x),
        Act::Elu => g.elu(x),
    }
}

fn init_linear(
    ps: &mut ParamSet,
    rng: &mut impl Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> (ParamId, ParamId) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let w = ps.add(format!("{prefix}.w"), Tensor::rand_uniform(fan_out, fan_in, bound, rng));
    let b = ps.add(format!("{prefix}.b"), Tensor::rand_uniform(fan_out, 1, bound, rng));
    (w, b)
}

/// Multi-layer perceptron; hidden activation between layers, optional output
/// activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    hidden_act: Act,
    out_act: Act,
    in_dim: usize,
    out_dim: usize,
}

impl Mlp {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        widths: &[usize],
        hidden_act: Act,
        out_act: Act,
    ) -> Self {
        assert!(widths.len() >= 2, "mlp needs at least input and output widths");
        let layers = (0..widths.len() - 1)
            .map(|i| init_linear(ps, rng, &format!("{prefix}.l{i}"), widths[i], widths[i + 1]))
            .collect();
        Mlp {
            layers,
            hidden_act,
            out_act,
            in_dim: widths[0],
            out_dim: *widths.last().unwrap(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn last_bias_id(&self) -> ParamId {
        self.layers.last().unwrap().1
    }

    /// `x`: `(in_dim x batch)` -> `(out_dim x batch)`.
    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, (w, bias)) in self.layers.iter().enumerate() {
            let wx = g.matmul(b.var(*w), h);
            h = g.add_col_broadcast(wx, b.var(*bias));
            h = apply_act(g, if i == last { self.out_act } else { self.hidden_act }, h);
        }
        h
    }
}

/// Gated recurrent unit processing `(input_dim x batch)` columns.
#[derive(Clone, Debug)]
pub struct Gru {
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_z: ParamId,
    u_z: ParamId,
    b_z: ParamId,
    w_n: ParamId,
    u_n: ParamId,
    b_n: ParamId,
    input_dim: usize,
    hidden_dim: usize,
}

impl Gru {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let bound = 1.0 / (hidden_dim.max(1) as f64).sqrt();
        let mut mk = |name: &str, rows: usize, cols: usize| {
            ps.add(format!("{prefix}.{name}"), Tensor::rand_uniform(rows, cols, bound, rng))
        };
        Gru {
            w_r: mk("w_r", hidden_dim, input_dim),
            u_r: mk("u_r", hidden_dim, hidden_dim),
            b_r: mk("b_r", hidden_dim, 1),
            w_z: mk("w_z", hidden_dim, input_dim),
            u_z: mk("u_z", hidden_dim, hidden_dim),
            b_z: mk("b_z", hidden_dim, 1),
            w_n: mk("w_n", hidden_dim, input_dim),
            u_n: mk("u_n", hidden_dim, hidden_dim),
            b_n: mk("b_n", hidden_dim, 1),
            input_dim,
            hidden_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> Var {
        g.constant(Tensor::zeros(self.hidden_dim, batch))
    }

    /// One step: `x` is `(input_dim x batch)`, `h` is `(hidden_dim x batch)`.
    pub fn step(&self, g: &mut Graph, b: &Binding, x: Var, h: Var) -> Var {
        let rx = g.matmul(b.var(self.w_r), x);
        let rh = g.matmul(b.var(self.u_r), h);
        let r_pre = g.add(rx, rh);
        let r_pre = g.add_col_broadcast(r_pre, b.var(self.b_r));
        let r = g.sigmoid(r_pre);

        let zx = g.matmul(b.var(self.w_z), x);
        let zh = g.matmul(b.var(self.u_z), h);
        let z_pre = g.add(zx, zh);
        let z_pre = g.add_col_broadcast(z_pre, b.var(self.b_z));
        let z = g.sigmoid(z_pre);

        let nx = g.matmul(b.var(self.w_n), x);
        let nh = g.matmul(b.var(self.u_n), h);
        let gated_nh = g.mul(r, nh);
        let n_pre = g.add(nx, gated_nh);
        let n_pre = g.add_col_broadcast(n_pre, b.var(self.b_n));
        let n = g.tanh(n_pre);

        // h' = (1 - z) .* n + z .* h
        let zn = g.mul(z, n);
        let zh_keep = g.mul(z, h);
        let n_minus_zn = g.sub(n, zn);
        g.add(n_minus_zn, zh_keep)
    }

    /// Run over a sequence, returning the final hidden state. Empty input
    /// yields the zero initial state.
    pub fn run(&self, g: &mut Graph, b: &Binding, xs: &[Var], batch: usize) -> Var {
        let mut h = self.zero_state(g, batch);
        for x in xs {
            h = self.step(g, b, *x, h);
        }
        h
    }

    /// Run over a sequence, returning the hidden state after every step.
    pub fn run_all(&self, g: &mut Graph, b: &Binding, xs: &[Var], batch: usize) -> Vec<Var> {
        let mut h = self.zero_state(g, batch);
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            h = self.step(g, b, *x, h);
            out.push(h);
        }
        out
    }

    /// Backward-in-time pass: consumes the sequence last step first.
    pub fn run_reversed(&self, g: &mut Graph, b: &Binding, xs: &[Var], batch: usize) -> Var {
        let mut h = self.zero_state(g, batch);
        for x in xs.iter().rev() {
            h = self.step(g, b, *x, h);
        }
        h
    }
}

/// One graph-convolution layer over the complete agent graph: separate
/// weights for the node's own features and the normalized neighbor mean.
/// (A shared weight with `A + I` normalization degenerates on complete
/// graphs: every column collapses to the global mean and per-agent
/// identity is lost.)
#[derive(Clone, Debug)]
pub struct Gcn {
    w_self: ParamId,
    w_neigh: ParamId,
    b: ParamId,
    in_dim: usize,
    out_dim: usize,
}

impl Gcn {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let w_self =
            ps.add(format!("{prefix}.w_self"), Tensor::rand_uniform(out_dim, in_dim, bound, rng));
        let w_neigh =
            ps.add(format!("{prefix}.w_neigh"), Tensor::rand_uniform(out_dim, in_dim, bound, rng));
        let b = ps.add(format!("{prefix}.b"), Tensor::rand_uniform(out_dim, 1, bound, rng));
        Gcn { w_self, w_neigh, b, in_dim, out_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `x`: `(in_dim x n_agents)` node features -> `(out_dim x n_agents)`.
    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var) -> Var {
        let n = g.value(x).cols();
        assert_eq!(g.value(x).rows(), self.in_dim, "gcn input dim mismatch");
        let own = g.matmul(b.var(self.w_self), x);
        let pre = if n > 1 {
            // neighbor mean: (J - I) / (n - 1)
            let w = 1.0 / (n - 1) as f64;
            let adj = g.constant(Tensor::from_fn(n, n, |r, c| if r == c { 0.0 } else { w }));
            let mixed = g.matmul(x, adj);
            let wn = g.matmul(b.var(self.w_neigh), mixed);
            g.add(own, wn)
        } else {
            own
        };
        let pre = g.add_col_broadcast(pre, b.var(self.b));
        g.tanh(pre)
    }
}

/// Kernel-2 dilated causal convolution over `(channels x time)`.
#[derive(Clone, Debug)]
pub struct CausalConv {
    w_prev: ParamId,
    w_curr: ParamId,
    b: ParamId,
    pub dilation: usize,
    in_dim: usize,
    out_dim: usize,
}

impl CausalConv {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        dilation: usize,
    ) -> Self {
        let bound = 1.0 / (2.0 * in_dim.max(1) as f64).sqrt();
        let w_prev =
            ps.add(format!("{prefix}.w_prev"), Tensor::rand_uniform(out_dim, in_dim, bound, rng));
        let w_curr =
            ps.add(format!("{prefix}.w_curr"), Tensor::rand_uniform(out_dim, in_dim, bound, rng));
        let b = ps.add(format!("{prefix}.b"), Tensor::rand_uniform(out_dim, 1, bound, rng));
        CausalConv { w_prev, w_curr, b, dilation, in_dim, out_dim }
    }

    /// `x`: `(in_dim x T)` -> `(out_dim x T)`; position `t` sees `x[t]` and
    /// `x[t - dilation]` (zero before the sequence start).
    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var) -> Var {
        assert_eq!(g.value(x).rows(), self.in_dim, "conv input dim mismatch");
        let shifted = g.shift_cols(x, self.dilation);
        let prev = g.matmul(b.var(self.w_prev), shifted);
        let curr = g.matmul(b.var(self.w_curr), x);
        let s = g.add(prev, curr);
        g.add_col_broadcast(s, b.var(self.b))
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
}

/// Gated dilated-convolution layer with per-sequence conditioning:
/// `y = S(conv_g(x) + V_g z) .* tanh(conv_f(x) + V_f z)`.
#[derive(Clone, Debug)]
pub struct GatedConvLayer {
    filter: CausalConv,
    gate: CausalConv,
    v_f: Option<ParamId>,
    v_g: Option<ParamId>,
    cond_dim: usize,
    out_dim: usize,
}

impl GatedConvLayer {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        dilation: usize,
        cond_dim: usize,
    ) -> Self {
        let filter = CausalConv::new(ps, rng, &format!("{prefix}.f"), in_dim, out_dim, dilation);
        let gate = CausalConv::new(ps, rng, &format!("{prefix}.g"), in_dim, out_dim, dilation);
        let (v_f, v_g) = if cond_dim > 0 {
            let bound = 1.0 / (cond_dim as f64).sqrt();
            (
                Some(ps.add(format!("{prefix}.v_f"), Tensor::rand_uniform(out_dim, cond_dim, bound, rng))),
                Some(ps.add(format!("{prefix}.v_g"), Tensor::rand_uniform(out_dim, cond_dim, bound, rng))),
            )
        } else {
            (None, None)
        };
        GatedConvLayer { filter, gate, v_f, v_g, cond_dim, out_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `x`: `(in_dim x T)`, `cond`: `(cond_dim x 1)` conditioning vector
    /// broadcast over time. Output is bounded in (-1, 1) elementwise.
    pub fn forward(&self, g: &mut Graph, b: &Binding, x: Var, cond: Option<Var>) -> Var {
        let mut f = self.filter.forward(g, b, x);
        let mut gate = self.gate.forward(g, b, x);
        if let Some(c) = cond {
            assert_eq!(g.value(c).shape(), (self.cond_dim, 1), "conditioning shape mismatch");
            let vf = g.matmul(b.var(self.v_f.unwrap()), c);
            let vg = g.matmul(b.var(self.v_g.unwrap()), c);
            f = g.add_col_broadcast(f, vf);
            gate = g.add_col_broadcast(gate, vg);
        }
        let f = g.tanh(f);
        let gate = g.sigmoid(gate);
        g.mul(gate, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Owner;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn zeroed(ps: &mut ParamSet) {
        let flat = vec![0.0; ps.flat_len()];
        ps.from_flat(&flat);
    }

    #[test]
    fn mlp_with_zero_params_outputs_zero() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut ps = ParamSet::new(Owner::Omega);
        let mlp = Mlp::new(&mut ps, &mut rng, "m", &[3, 4, 2], Act::Relu, Act::Identity);
        zeroed(&mut ps);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::col(&[1.0, -2.0, 3.0]));
        let y = mlp.forward(&mut g, &b, x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn gru_zero_params_zero_hidden() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut ps = ParamSet::new(Owner::Omega);
        let gru = Gru::new(&mut ps, &mut rng, "g", 3, 5);
        zeroed(&mut ps);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::col(&[0.3, -1.0, 2.0]));
        let h0 = gru.zero_state(&mut g, 1);
        let h1 = gru.step(&mut g, &b, x, h0);
        // gates at 0.5, candidate tanh(0)=0, h0=0 -> h1 = 0
        assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_identical_features_identical_columns() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut ps = ParamSet::new(Owner::Omega);
        let gcn = Gcn::new(&mut ps, &mut rng, "gcn", 3, 4);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let col = [0.5, -0.2, 1.0];
        let x = g.input(Tensor::from_fn(3, 4, |r, _| col[r]));
        let y = gcn.forward(&mut g, &b, x);
        let v = g.value(y);
        for r in 0..v.rows() {
            for c in 1..v.cols() {
                assert!((v.get(r, c) - v.get(r, 0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gcn_permutation_equivariant() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut ps = ParamSet::new(Owner::Omega);
        let gcn = Gcn::new(&mut ps, &mut rng, "gcn", 3, 3);
        let x_t = Tensor::from_vec(3, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.2, 0.0, 1.5, -2.0]);
        let perm = [2usize, 0, 1];
        let x_perm = Tensor::from_fn(3, 3, |r, c| x_t.get(r, perm[c]));

        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(x_t);
        let y = gcn.forward(&mut g, &b, x);
        let y_val = g.value(y).clone();

        let mut g2 = Graph::new();
        let b2 = ps.bind(&mut g2);
        let xp = g2.input(x_perm);
        let yp = gcn.forward(&mut g2, &b2, xp);
        let yp_val = g2.value(yp).clone();

        for r in 0..3 {
            for c in 0..3 {
                assert!((yp_val.get(r, c) - y_val.get(r, perm[c])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gated_layer_zero_weights_zero_output() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut ps = ParamSet::new(Owner::Eta);
        let layer = GatedConvLayer::new(&mut ps, &mut rng, "gc", 2, 3, 1, 4);
        zeroed(&mut ps);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::from_vec(2, 5, vec![1.0; 10]));
        let cond = g.input(Tensor::col(&[1.0, 2.0, 3.0, 4.0]));
        let y = layer.forward(&mut g, &b, x, Some(cond));
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gated_scalar_identity_kernel_matches_closed_form() {
        // 1x1 channels, current-tap weight 1, everything else 0, x = 1:
        // y = sigmoid(1) * tanh(1)
        let mut rng = StdRng::seed_from_u64(5);
        let mut ps = ParamSet::new(Owner::Eta);
        let layer = GatedConvLayer::new(&mut ps, &mut rng, "gc", 1, 1, 1, 0);
        zeroed(&mut ps);
        // filter w_curr = 1 and gate w_curr = 1
        let flat_names = ps.names().to_vec();
        let mut flat = vec![0.0; ps.flat_len()];
        for (i, n) in flat_names.iter().enumerate() {
            if n.ends_with("f.w_curr") || n.ends_with("g.w_curr") {
                flat[i] = 1.0;
            }
        }
        ps.from_flat(&flat);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::from_vec(1, 1, vec![1.0]));
        let y = layer.forward(&mut g, &b, x, None);
        let expected = (1.0 / (1.0 + (-1.0f64).exp())) * 1.0f64.tanh();
        assert!((g.value(y).item() - expected).abs() < 1e-15);
        assert!((g.value(y).item() - 0.5567).abs() < 1e-3);
    }

    #[test]
    fn gated_layer_output_bounded() {
        let mut rng = StdRng::seed_from_u64(6);
        let mut ps = ParamSet::new(Owner::Eta);
        let layer = GatedConvLayer::new(&mut ps, &mut rng, "gc", 3, 4, 2, 5);
        let mut g = Graph::new();
        let b = ps.bind(&mut g);
        let x = g.input(Tensor::randn(3, 9, 10.0, &mut rng));
        let cond = g.input(Tensor::randn(5, 1, 10.0, &mut rng));
        let y = layer.forward(&mut g, &b, x, Some(cond));
        assert!(g.value(y).data().iter().all(|&v| v.abs() < 1.0));
    }
}
