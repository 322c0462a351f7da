//! Analytic vs central finite-difference gradients of the full CNN head on a
//! random batch of four 14x14 maps, dropout off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcnn::nn::gradcheck::{check_gradients, GradCheckConfig};
use qcnn::nn::{weight_init, Architecture, Tensor3};

fn main() -> qcnn::Result<()> {
    let seed = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = weight_init(Architecture::new(14, 14, 3), seed)?;
    let batch = (0..4)
        .map(|i| {
            let v = (0..196).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Ok((Tensor3::new(1, 14, 14, v)?, i % 3))
        })
        .collect::<qcnn::Result<Vec<_>>>()?;

    let config = GradCheckConfig { seed, ..GradCheckConfig::default() };
    let report = check_gradients(&params, &batch, &config)?;
    println!(
        "{:<15} {:>7} {:>5} {:>12} {:>12} {:>12}",
        "group", "checked", "kinks", "max |grad|", "max abs err", "max rel err"
    );
    for g in &report.groups {
        println!(
            "{:<15} {:>7} {:>5} {:>12.3e} {:>12.3e} {:>12.3e}",
            g.name, g.checked, g.kinks, g.max_gradient, g.max_abs_error, g.max_rel_error
        );
    }
    println!("worst relative error {:.3e}", report.max_rel_error());
    Ok(())
}
