//! The classical operators: valid convolution, padding, and pooling.

use qcnn::imageops::{avg_pool, conv2d_valid, global_pool, l2_pool, max_pool, pad, GlobalPool, ImageTensor};

fn print(name: &str, img: &ImageTensor) {
    println!("{name} ({}x{}):", img.height(), img.width());
    for r in 0..img.height() {
        let row: Vec<String> = (0..img.width()).map(|c| format!("{:7.2}", img.get(r, c))).collect();
        println!("  {}", row.join(""));
    }
}

fn main() -> qcnn::Result<()> {
    let img = ImageTensor::from_fn(6, 6, |r, c| ((r * 6 + c) % 7) as f64)?;
    print("input", &img);

    let edge = ImageTensor::new(3, 3, vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0])?;
    print("valid conv with a Sobel kernel", &conv2d_valid(&img, &edge)?);
    print("pad 1 then conv (same size)", &conv2d_valid(&pad(&img, 1, 0.0)?, &edge)?);

    print("max pool 2/2", &max_pool(&img, 2, 2)?);
    print("average pool 2/2", &avg_pool(&img, 2, 2)?);
    print("L2 pool 2/2 (mean of squares)", &l2_pool(&img, 2, 2)?);
    print("max pool 3/1", &max_pool(&img, 3, 1)?);
    println!(
        "global max {}, global average {:.4}",
        global_pool(&img, GlobalPool::Max)?,
        global_pool(&img, GlobalPool::Avg)?
    );
    Ok(())
}
