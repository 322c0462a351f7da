//! The four-qubit quanvolution circuit for one 2x2 patch: its gate list,
//! exact readout, and finite-shot estimates.
//!
//! cargo run --example quanv_circuit -- 0.1 0.8 0.5 0.3

use qcnn::circuit::{build_quanv_circuit, run_quanv_circuit, QuanvCircuitConfig, Readout};

fn main() -> qcnn::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("pixel value")).collect();
    let pixels = if args.is_empty() { vec![0.1, 0.8, 0.5, 0.3] } else { args };

    let config = QuanvCircuitConfig::default();
    let spec = build_quanv_circuit(&pixels, &config)?;
    println!("{} gates for pixels {pixels:?}:", spec.len());
    print!("{spec}");

    let exact = run_quanv_circuit(&pixels, &config)?;
    println!("<Z0> exact        {exact:+.6}");
    for shots in [100, 10_000, 1_000_000] {
        let sampled = QuanvCircuitConfig { readout: Readout::Sampled { shots, seed: 1 }, ..config };
        let z = run_quanv_circuit(&pixels, &sampled)?;
        let sigma = 2.0 * ((1.0 - exact * exact) / 4.0 / shots as f64).sqrt();
        println!("<Z0> {shots:>7} shots {z:+.6}  (|diff| = {:.1} sigma)", (z - exact).abs() / sigma.max(1e-300));
    }

    let open = QuanvCircuitConfig { cr_ring_closure: false, ..config };
    println!("without the (3,0) pair: {} gates, <Z0> {:+.6}", build_quanv_circuit(&pixels, &open)?.len(), run_quanv_circuit(&pixels, &open)?);
    println!("zero patch: <Z0> = {:?}", run_quanv_circuit(&[0.0; 4], &config)?);
    Ok(())
}
