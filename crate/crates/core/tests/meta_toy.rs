//! Paired runs on a separable two-class toy: the meta-CPPI student against a
//! student trained identically on the same tuned CPPI batch loss with frozen
//! teachers.

use crossppi::datasets::{make_folds, Label, LabeledDataset, UnlabeledDataset};
use crossppi::meta::{mcppi_train, BatchLossConfig, Student};
use crossppi::rng::rng_from_seed;
use rand::Rng as _;

fn ring(n: usize, big_n: usize, seed: u64) -> (LabeledDataset, UnlabeledDataset, LabeledDataset) {
    let mut rng = rng_from_seed(seed);
    let mut draw = |m: usize| {
        let x: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let y = x
            .iter()
            .map(|p| usize::from(p[0] * p[0] + p[1] * p[1] < 1.6))
            .collect();
        LabeledDataset::with_classes(x, y, 2).unwrap()
    };
    let l = draw(n);
    let u = draw(big_n).to_unlabeled().unwrap();
    (l, u, draw(500))
}

fn accuracy(s: &Student, test: &LabeledDataset) -> f64 {
    let hits = test
        .inputs()
        .iter()
        .zip(test.labels())
        .filter(|(x, y)| Label::Class(s.predict(x)) == **y)
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn mcppi_student_keeps_up_with_frozen_teachers() {
    let seeds = 20;
    let (mut meta, mut fixed) = (0.0, 0.0);
    for seed in 0..seeds {
        let (l, u, test) = ring(24, 1000, 100 + seed);
        let folds = make_folds(24, 4, seed).unwrap();
        let cfg = BatchLossConfig {
            total_steps: 300,
            warmup_steps: 3000,
            batch_unlabeled: 128,
            hidden: vec![16],
            lr_student: 0.1,
            lr_teacher: 0.1,
            seed,
            ..BatchLossConfig::default()
        };
        meta += accuracy(
            &mcppi_train(&l, &u, &folds, &cfg, true).unwrap().student,
            &test,
        );
        fixed += accuracy(
            &mcppi_train(&l, &u, &folds, &cfg, false).unwrap().student,
            &test,
        );
    }
    let (meta, fixed) = (meta / seeds as f64, fixed / seeds as f64);
    println!("mcppi accuracy {meta:.4}, frozen-teacher accuracy {fixed:.4}");
    assert!(
        meta >= fixed - 0.02,
        "mcppi accuracy {meta:.4} below frozen teachers {fixed:.4}"
    );
}
