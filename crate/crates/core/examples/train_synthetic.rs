//! Synthetic corpus -> quanvolution -> CNN head, all in memory.
//!
//! cargo run --release --example train_synthetic -- [per_class] [epochs] [seed]

use std::time::Instant;

use qcnn::data::{generate_synthetic, LabelMap};
use qcnn::nn::{train, Sample, TrainConfig};
use qcnn::quanv::{quanvolve_image, Preprocess, QuanvConfig};

fn main() -> qcnn::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let per_class = args.first().copied().unwrap_or(200) as usize;
    let epochs = args.get(1).copied().unwrap_or(20) as usize;
    let seed = args.get(2).copied().unwrap_or(7);

    let start = Instant::now();
    let records = generate_synthetic(per_class, 28, 3, seed)?;
    let labels = LabelMap::for_classes(3)?;
    let prep = Preprocess::default();
    let qcfg = QuanvConfig::default();
    let samples = records
        .iter()
        .map(|r| {
            Ok(Sample {
                map: quanvolve_image(&prep.apply(&r.image)?, &qcfg)?,
                class: labels.index_of(r.label).expect("synthetic labels are 1..=3"),
            })
        })
        .collect::<qcnn::Result<Vec<_>>>()?;
    eprintln!("quanvolved {} images in {:.1?}", samples.len(), start.elapsed());

    let config = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let (_, metrics) = train(&samples, &config)?;
    println!("epoch  train_loss  val_loss  train_acc  val_acc");
    for e in &metrics.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>9.3}  {:>7.3}",
            e.epoch, e.train_loss, e.val_loss, e.train_acc, e.val_acc
        );
    }
    println!("confusion (rows = true):");
    for (code, name) in labels.entries() {
        let row = &metrics.confusion.counts[labels.index_of(*code).unwrap()];
        println!("  {name:<11} {row:?}");
    }
    println!("val accuracy {:.4}", metrics.val_accuracy);
    eprintln!("total {:.1?}", start.elapsed());
    Ok(())
}
