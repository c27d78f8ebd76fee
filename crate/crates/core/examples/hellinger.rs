//! Hellinger distance between the two mixtures of the minimax pair
//! `(θ₁, 1 + 3θ₁²)` and `(2θ₁, 1)`: equal variances, fourth moments apart by
//! `30θ₁⁴`, so `h` shrinks like `θ₁⁴` and `h²` like `θ₁⁸`.

use singular_em::stats::{hellinger_exponent_fit, log_grid, minimax_pair, rate_fit};

fn main() -> singular_em::Result<()> {
    let grid = log_grid(0.02, 0.1, 9);
    let mut h2 = Vec::new();
    for &t in &grid {
        let pair = minimax_pair(t, 1.0)?;
        let h = pair.hellinger()?;
        h2.push(h * h);
        println!(
            "θ₁={t:.4}  η₁={:?}  η₂={:?}  h={h:.4e}",
            pair.eta1, pair.eta2
        );
    }
    let fit = hellinger_exponent_fit(&grid, 1.0)?;
    println!("slope of h:  {:.3}", fit.slope);
    println!("slope of h²: {:.3}", rate_fit(&grid, &h2)?.slope);
    Ok(())
}
