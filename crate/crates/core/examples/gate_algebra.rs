//! The gate set, its unitarity, and the inverse/involution identities.

use std::f64::consts::PI;

use qcnn::statevector::{gate_crx, gate_crz, gate_cswap, gate_cz, gate_hadamard, gate_rx, GateMatrix};

fn show(name: &str, g: &GateMatrix) {
    println!("{name} ({0}x{0}), unitarity error {1:.1e}", g.dim(), g.unitarity_error());
    for r in 0..g.dim() {
        let row: Vec<String> = (0..g.dim())
            .map(|c| {
                let z = g.get(r, c);
                format!("{:+.3}{:+.3}i", z.re, z.im)
            })
            .collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> qcnn::Result<()> {
    let theta = PI / 2.0;
    show("RX(pi/2)", &gate_rx(theta)?);
    show("H", &gate_hadamard());
    show("CRZ(pi/2)", &gate_crz(theta)?);
    show("CRX(pi/2)", &gate_crx(theta)?);
    show("CZ", &gate_cz());
    println!("CSWAP: 8x8 permutation, unitarity error {:.1e}", gate_cswap().unitarity_error());

    let id4 = GateMatrix::identity(4);
    for t in [0.3, 1.7, -2.4] {
        let crz = gate_crz(t)?.matmul(&gate_crz(-t)?)?;
        let crx = gate_crx(t)?.matmul(&gate_crx(-t)?)?;
        println!(
            "theta {t:+.1}: |CRZ(t)CRZ(-t) - I| = {:.1e}, |CRX(t)CRX(-t) - I| = {:.1e}",
            crz.max_abs_diff(&id4),
            crx.max_abs_diff(&id4)
        );
    }
    let h = gate_hadamard();
    println!("|HH - I| = {:.1e}", h.matmul(&h)?.max_abs_diff(&GateMatrix::identity(2)));
    let cz = gate_cz();
    println!("|CZ CZ - I| = {:.1e}", cz.matmul(&cz)?.max_abs_diff(&id4));
    Ok(())
}
