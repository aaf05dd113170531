//! Trains all six models on a synthetic preset and prints test metrics.
//!
//! cargo run --release -p passgauge --example compare -- [preset] [size] [seed] [strong_rate]

use std::time::Instant;

use passgauge::features::{featurize, split, SplitSpec};
use passgauge::learn::{Hyperparams, ModelKind};
use passgauge::pipeline::{evaluate_model, train, TrainOptions};
use passgauge::synth::{generate, CorpusPreset};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("forum1", String::as_str);
    let mut preset = CorpusPreset::resolve(name).expect("preset");
    if let Some(size) = args.get(1) {
        preset.size = size.parse().expect("size");
    }
    let seed: u64 = args.get(2).map_or(42, |s| s.parse().expect("seed"));
    preset.seed = seed;
    if let Some(rate) = args.get(3) {
        preset.strong_rate = rate.parse().expect("strong rate");
    }

    let corpus = generate(&preset).expect("generate");
    let data = featurize(&corpus).expect("featurize");
    let (tr, _val, test) = split(&data, &SplitSpec { seed, ..SplitSpec::default() }).expect("split");
    let (weak, strong) = test.class_counts();
    println!("{} unique passwords; test split {weak} weak / {strong} strong", data.len());
    println!("{:<6} {:>9} {:>9} {:>9} {:>9} {:>8}", "model", "accuracy", "recall", "precision", "f1", "secs");
    let opts = TrainOptions { seed, ..TrainOptions::default() };
    for kind in ModelKind::ALL {
        let t = Instant::now();
        let model = train(&Hyperparams::defaults(kind), &tr, &opts, String::new(), None).expect("train");
        let (_, m) = evaluate_model(&model, &test).expect("evaluate");
        println!(
            "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.2}",
            kind.as_str(),
            m.accuracy,
            m.recall,
            m.precision,
            m.f1,
            t.elapsed().as_secs_f64()
        );
    }
}
