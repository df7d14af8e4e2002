//! Verify analytic gradients of the neural blocks against central finite
//! differences.
//!
//! Run with: `cargo run --release --example gradient_check`

use rand::rngs::StdRng;
use rand::SeedableRng;
use stratlab::nn::{
    finite_diff_check, Act, Binding, GatedConvLayer, Gcn, Graph, Gru, Mlp, Owner, ParamSet, Tensor,
};

fn main() -> stratlab::Result<()> {
    let mut rng = StdRng::seed_from_u64(0);

    let mut ps = ParamSet::new(Owner::Omega);
    let mlp = Mlp::new(&mut ps, &mut rng, "mlp", &[4, 8, 3], Act::Tanh, Act::Identity);
    let gru = Gru::new(&mut ps, &mut rng, "gru", 3, 5);
    let gcn = Gcn::new(&mut ps, &mut rng, "gcn", 5, 5);
    let conv = GatedConvLayer::new(&mut ps, &mut rng, "conv", 5, 5, 2, 3);

    let x0 = Tensor::randn(4, 3, 1.0, &mut rng);
    let x1 = Tensor::randn(4, 3, 1.0, &mut rng);
    let cond = Tensor::randn(3, 1, 1.0, &mut rng);

    // a composite: MLP features -> GRU over two steps -> GCN -> gated conv
    let build = |g: &mut Graph, b: &[Binding]| {
        let i0 = g.constant(x0.clone());
        let i1 = g.constant(x1.clone());
        let h0 = mlp.forward(g, &b[0], i0);
        let h1 = mlp.forward(g, &b[0], i1);
        let hs = gru.run(g, &b[0], &[h0, h1], 3);
        let y = gcn.forward(g, &b[0], hs);
        let c = g.constant(cond.clone());
        let z = conv.forward(g, &b[0], y, Some(c));
        g.mean_sq(z)
    };

    let err = finite_diff_check(&[&ps], 1e-5, &build)?;
    println!("composite block chain over {} parameters", ps.flat_len());
    println!("max relative error analytic vs central differences: {err:.3e}");
    assert!(err < 1e-4);
    println!("gradient check passed (< 1e-4)");
    Ok(())
}
