//! Mean, standard deviation and their ratio over a score sequence.

use uqkit::stats::{pearson, triple_stat};

fn main() -> uqkit::Result<()> {
    let logprobs = [-0.1, -0.4, -0.05, -1.2, -0.3];
    let t = triple_stat(&logprobs)?;
    println!("E={:.6} Std={:.6} Combo={:.6}", t.mean, t.std, t.combo);

    let flat = triple_stat(&[-0.5; 4])?;
    println!(
        "constant sequence: combo={} guarded={}",
        flat.combo,
        flat.combo_guarded()
    );

    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.1, 5.9, 8.2])?;
    println!("pearson={r:.6}");
    Ok(())
}
