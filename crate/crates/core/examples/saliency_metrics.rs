//! Scores progressively degraded predictions of one mask with maxF, aveF,
//! AUC and MAE.
//!
//! cargo run --release --example saliency_metrics

use dsalgan::data::{make_shapes_dataset, SaliencyMap};
use dsalgan::eval::{auc, f_measures, mae};
use dsalgan::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dsalgan::Result<()> {
    let gt = make_shapes_dataset("shapes", 1, 64, 5)?.items.remove(0).mask;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f32> = (0..gt.values().len()).map(|_| rng.gen()).collect();

    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "mix", "maxF", "aveF", "AUC", "MAE");
    for step in 0..=5 {
        let mix = step as f32 / 5.0;
        let values = gt.values().iter().zip(&noise).map(|(g, n)| (1.0 - mix) * g + mix * n).collect();
        let pred = SaliencyMap::new(Tensor::from_vec(1, gt.height(), gt.width(), values)?)?;
        let f = f_measures(&pred, &gt)?;
        println!(
            "{mix:>6.1} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            f.max_f,
            f.ave_f,
            auc(&pred, &gt)?,
            mae(&pred, &gt)?
        );
    }
    Ok(())
}
