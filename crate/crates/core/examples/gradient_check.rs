//! Runs the finite-difference gradient check over every operator and both
//! reduced-size networks.
//!
//! `cargo run --release --example gradient_check -- [seed]`

use silent_speech::models::check;
use silent_speech::tensor::gradcheck::{operator_suite, DEFAULT_H};

fn main() -> silent_speech::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for op in operator_suite(seed, 10, DEFAULT_H)? {
        println!("{:<20} {:.2e} over {} points", op.name, op.max_rel_error, op.points);
    }
    let net1 = check::net1_gradient_check(seed)?;
    let net2 = check::net2_gradient_check(seed)?;
    println!("{:<20} {:.2e} over {} coordinates", "net1 (reduced)", net1.max_rel_error, net1.coords_checked);
    println!("{:<20} {:.2e} over {} coordinates", "net2 (reduced)", net2.max_rel_error, net2.coords_checked);
    Ok(())
}
