//! Quanvolution of one synthetic image: one layer, two stacked layers, and
//! the optional SWAP-test pooling stage.

use qcnn::data::generate_synthetic;
use qcnn::imageops::ImageTensor;
use qcnn::quanv::{quanvolve_image, Preprocess, QuanvConfig};

fn shade(img: &ImageTensor, lo: f64, hi: f64) {
    const RAMP: &[u8] = b" .:-=+*#%@";
    for r in 0..img.height() {
        let line: String = (0..img.width())
            .map(|c| {
                let t = ((img.get(r, c) - lo) / (hi - lo)).clamp(0.0, 1.0);
                let ch = RAMP[(t * (RAMP.len() - 1) as f64).round() as usize] as char;
                format!("{ch}{ch}")
            })
            .collect();
        println!("  {line}");
    }
}

fn main() -> qcnn::Result<()> {
    let class = std::env::args().nth(1).map_or(0, |s| s.parse::<usize>().expect("class 0..3"));
    let record = generate_synthetic(1, 28, 4, 11)?.swap_remove(class);
    let image = Preprocess::default().apply(&record.image)?;
    println!("input {} (label {}), 28x28:", record.id, record.label);
    shade(&image, 0.0, 1.0);

    let one = quanvolve_image(&image, &QuanvConfig::default())?;
    println!("one layer -> {}x{}, values in [{:.3}, {:.3}]:", one.height(), one.width(), one.min_value(), one.max_value());
    shade(&one, -1.0, 1.0);

    let two = quanvolve_image(&image, &QuanvConfig { depth_q: 2, ..QuanvConfig::default() })?;
    println!("two layers -> {}x{}:", two.height(), two.width());
    shade(&two, -1.0, 1.0);

    let pooled = quanvolve_image(&image, &QuanvConfig { swap_pool: true, ..QuanvConfig::default() })?;
    println!("one layer + SWAP-test pooling -> {}x{}:", pooled.height(), pooled.width());
    shade(&pooled, -1.0, 1.0);
    Ok(())
}
