//! The surprise intrinsic bonus: how it responds to prediction error and to
//! the mutual-information estimate.
//!
//! Run with: `cargo run --example surprise_bonus`

use stratlab::value::surprise_reward;

fn main() {
    let (k, s, gamma) = (1, 4, 0.95);
    let (alpha, beta) = (0.5, 0.5);

    println!("bonus vs prediction residual (J_MI fixed at 0.5):");
    for residual in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let b = surprise_reward(residual, 0.5, k, s, gamma, alpha, beta);
        println!("  residual {residual:>4.1} -> bonus {b:.4}");
    }

    println!("bonus vs MI estimate (residual fixed at 1.0):");
    for j_mi in [-1.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
        let b = surprise_reward(1.0, j_mi, k, s, gamma, alpha, beta);
        println!("  J_MI {j_mi:>4.1} -> bonus {b:.4}");
    }

    println!("ablated (alpha = beta = 0): bonus {}", surprise_reward(3.0, -2.0, k, s, gamma, 0.0, 0.0));
    println!("a segment that is hard to predict and carries little mutual");
    println!("information earns the largest bonus, steering collection toward");
    println!("data the models have not captured yet.");
}
