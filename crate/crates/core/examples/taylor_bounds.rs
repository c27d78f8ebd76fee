//! Polynomial sandwiches of tanh used in the contraction arguments.

use singular_em::theory::tanh_poly_bounds;

fn main() {
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "x", "x·tanh x", "lower4", "upper6", "lower8", "upper10"
    );
    for x in [-2.0, -0.5, 0.1, 0.5, 1.0, 2.0, 5.0] {
        let b = tanh_poly_bounds(x);
        println!(
            "{x:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            x * f64::tanh(x),
            b.lower4,
            b.upper6,
            b.lower8,
            b.upper10
        );
    }
}
