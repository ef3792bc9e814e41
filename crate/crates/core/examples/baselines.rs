//! Trains both baselines on a seeded per-user 80/20 split of MovieLens-100K
//! and prints test RMSE / MAE.
//!
//! cargo run --release -p chatrec --example baselines -- data/ml-100k

use std::time::Instant;

use chatrec::dataset::{split_train_test, Dataset, SplitPolicy};
use chatrec::recsys::{train_item_knn, train_mf, ItemKnnHyper, MfHyper, RatingPredictor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/ml-100k".into());
    let data = Dataset::load(&dir)?;
    let split = split_train_test(data.ratings.events(), SplitPolicy::default(), 0)?;
    let report = |name: &str, model: &dyn RatingPredictor, secs: f64| {
        let n = split.test.len() as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for e in &split.test {
            let d = model.predict_rating(e.user_id, e.item_id) - e.rating as f64;
            se += d * d;
            ae += d.abs();
        }
        println!("{name:8} rmse {:.4} mae {:.4} ({secs:.1}s)", (se / n).sqrt(), ae / n);
    };
    let t = Instant::now();
    let mf = train_mf(&split.train, MfHyper::default())?;
    report("mf", &mf, t.elapsed().as_secs_f64());
    let t = Instant::now();
    let knn = train_item_knn(&split.train, ItemKnnHyper::default())?;
    report("itemknn", &knn, t.elapsed().as_secs_f64());
    Ok(())
}
