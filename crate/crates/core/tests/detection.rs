use finid::boundary::contour_f_measure;
use finid::ensemble::TrainConfig;
use finid::stroke::{detect_fins, train_quality_model, DetectParams, ShapeOnly};
use finid::synth::{generate_population, region_pool};

#[test]
fn detector_finds_the_fin_in_held_out_pools() {
    let pop = generate_population(8, 31).unwrap();
    let pools: Vec<_> = pop
        .iter()
        .map(|ind| region_pool(ind, 100 + u64::from(ind.id)).unwrap())
        .collect();
    let params = DetectParams::default();
    let cfg = TrainConfig {
        n_trees: 30,
        ..TrainConfig::regression_default()
    };
    let model = train_quality_model(&pools[..5], &params, &cfg, &ShapeOnly).unwrap();
    for (regions, truth) in &pools[5..] {
        let found = detect_fins(regions, &params, &model, &ShapeOnly).unwrap();
        assert!(!found.is_empty());
        let best = found
            .iter()
            .take(3)
            .map(|s| {
                contour_f_measure(&s.stroke.points, truth, params.tolerance)
                    .unwrap()
                    .f
            })
            .fold(0.0, f64::max);
        assert!(best > 0.8, "best of top 3 has F = {best}");
        // Predictions are ranked.
        assert!(found
            .windows(2)
            .all(|w| w[0].score.f_pred >= w[1].score.f_pred));
    }
}
