//! Equivariant Moser flow between forms that agree at the origin.
use genmoment::reduction::{moser_flow, moser_pairs, MoserOptions};

fn main() -> genmoment::Result<()> {
    let opts = MoserOptions { n_samples: 20, ..Default::default() };
    for pair in moser_pairs() {
        let r = moser_flow(&pair, &opts, 1e-5)?;
        println!("{:<12} radius {}  defect {:.2e}  displacement {:.2e}", r.pair, r.radius, r.max_deviation, r.max_displacement);
    }
    Ok(())
}
