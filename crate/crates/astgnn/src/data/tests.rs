use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_series(t: usize, n: usize, c: usize, seed: u64) -> SpatioTemporalSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..t * n * c).map(|_| rng.gen_range(-50.0..50.0)).collect();
    SpatioTemporalSeries::new("random", 5, t, n, c, values).unwrap()
}

fn spec(mode: SyntheticMode, alpha: f64, n: usize, t: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        name: "test".to_string(),
        num_nodes: n,
        t_total: t,
        seed,
        density: 0.3,
        kernel: TemporalKernel::default(),
        alpha,
        noise: 0.05,
        mode,
        interval_minutes: 5,
    }
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("series.csv");
    let meta = dir.path().join("series.json");
    for header in [false, true] {
        let series = random_series(13, 3, 2, 42);
        save_csv_dataset(&series, &data, &meta, header).unwrap();
        let back = load_csv_dataset(&data, &meta).unwrap();
        assert_eq!(back, series);
    }
}

#[test]
fn small_csv_parses_to_declared_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let meta = dir.path().join("m.json");
    std::fs::write(&data, "1.0,2.0\n3.0,4.0\n5.0,6.0\n7.0,8.0\n").unwrap();
    std::fs::write(
        &meta,
        r#"{"name":"tiny","num_nodes":2,"channels":1,"interval_minutes":5}"#,
    )
    .unwrap();
    let s = load_csv_dataset(&data, &meta).unwrap();
    assert_eq!((s.t_total(), s.num_nodes(), s.channels()), (4, 2, 1));
    assert_eq!(s.at(1, 1, 0), 4.0);
}

#[test]
fn csv_errors_carry_row_and_column_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let meta = dir.path().join("m.json");
    std::fs::write(
        &meta,
        r#"{"name":"t","num_nodes":3,"channels":1,"interval_minutes":5}"#,
    )
    .unwrap();

    std::fs::write(&data, "1,2,3\n4,5\n").unwrap();
    let err = load_csv_dataset(&data, &meta).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("2 columns"), "{err}");

    std::fs::write(&data, "1,2,3\n4,oops,6\n").unwrap();
    let err = load_csv_dataset(&data, &meta).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn window_count_and_contiguity() {
    let s = random_series(10, 2, 1, 7);
    let w = make_windows(&s, 3, 2).unwrap();
    assert_eq!(w.len(), 6);
    assert_eq!(w[0].history.shape(), &[3, 2, 1]);
    assert_eq!(w[0].target.shape(), &[2, 2, 1]);
    // first window's target is rows 3..4 of the source
    for h in 0..2 {
        for n in 0..2 {
            assert_eq!(w[0].target.at(&[h, n, 0]), s.at(3 + h, n, 0));
        }
    }
    for (k, win) in w.iter().enumerate() {
        assert_eq!(win.origin, k);
        assert_eq!(win.history.at(&[0, 0, 0]), s.at(k, 0, 0));
    }

    let exact = random_series(5, 2, 1, 8);
    assert_eq!(make_windows(&exact, 3, 2).unwrap().len(), 1);
    assert!(make_windows(&exact, 4, 2).is_err());
}

#[test]
fn target_matrix_layout_is_node_major_time_by_channel() {
    let s = random_series(6, 2, 3, 9);
    let w = &make_windows(&s, 2, 2).unwrap()[0];
    let m = w.target_matrix().unwrap();
    assert_eq!(m.shape(), &[2, 6]);
    for n in 0..2 {
        for h in 0..2 {
            for c in 0..3 {
                assert_eq!(m.at(&[n, h * 3 + c]), w.target.at(&[h, n, c]));
            }
        }
    }
}

#[test]
fn split_matches_stated_ratios_and_preserves_chronology() {
    let s = random_series(100, 2, 1, 10);
    let parts = split(&s, &[0.6, 0.2, 0.2], &["train", "val", "test"]).unwrap();
    assert_eq!(
        parts.iter().map(|p| p.t_total()).collect::<Vec<_>>(),
        vec![60, 20, 20]
    );
    let rejoined: Vec<f64> = parts.iter().flat_map(|p| p.values().to_vec()).collect();
    assert_eq!(rejoined, s.values());

    let parts = split(&s, &[0.8, 0.2], &["train", "test"]).unwrap();
    assert_eq!(
        parts.iter().map(|p| p.t_total()).collect::<Vec<_>>(),
        vec![80, 20]
    );

    assert!(split(&s, &[0.5, 0.6], &["a", "b"]).is_err());
    assert!(split(&s, &[0.7, 0.3], &["a"]).is_err());
    assert!(split(&random_series(3, 1, 1, 11), &[0.9, 0.05, 0.05], &["a", "b", "c"]).is_err());
}

#[test]
fn windows_never_span_split_boundaries() {
    let s = random_series(50, 1, 1, 12);
    let parts = split(&s, &[0.6, 0.2, 0.2], &["train", "val", "test"]).unwrap();
    let starts = [0usize, 30, 40];
    for (seg, seg_start) in parts.iter().zip(starts) {
        for w in make_windows(seg, 4, 2).unwrap() {
            // every row of every window maps inside this segment's range
            assert!(w.origin + 4 + 2 <= seg.t_total());
            assert_eq!(w.history.at(&[0, 0, 0]), s.at(seg_start + w.origin, 0, 0));
        }
    }
}

#[test]
fn normalisation_round_trips_and_uses_training_stats_only() {
    let s = random_series(40, 3, 2, 13);
    let parts = split(&s, &[0.6, 0.2, 0.2], &["train", "val", "test"]).unwrap();
    let stats = NormStats::fit(&parts[0], true);
    assert_eq!(stats.degenerate_dims, 0);

    let normed = stats.normalize(&parts[2]).unwrap();
    for t in 0..normed.t_total() {
        for n in 0..3 {
            for c in 0..2 {
                let back = stats.denormalize_value(normed.at(t, n, c), n, c, 2);
                assert!((back - parts[2].at(t, n, c)).abs() < 1e-12);
            }
        }
    }

    // training stats do not move when the test segment changes
    let mut other_values = s.values().to_vec();
    for v in &mut other_values[24 * 6..] {
        *v += 100.0;
    }
    let other = SpatioTemporalSeries::new("shifted", 5, 40, 3, 2, other_values).unwrap();
    let other_parts = split(&other, &[0.6, 0.2, 0.2], &["train", "val", "test"]).unwrap();
    assert_eq!(NormStats::fit(&other_parts[0], true), stats);
}

#[test]
fn constant_dimension_falls_back_to_unit_std_with_warning() {
    let s = SpatioTemporalSeries::new("const", 5, 4, 1, 1, vec![3.0; 4]).unwrap();
    let stats = NormStats::fit(&s, true);
    assert_eq!(stats.degenerate_dims, 1);
    assert_eq!(stats.std, vec![1.0]);
    let normed = stats.normalize(&s).unwrap();
    assert_eq!(normed.values(), &[0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn global_stats_use_a_single_dimension() {
    let s = random_series(30, 4, 1, 14);
    let stats = NormStats::fit(&s, false);
    assert_eq!(stats.mean.len(), 1);
    let normed = stats.normalize(&s).unwrap();
    let back = stats.denormalize_matrix(
        &normed.frames(0, 1).reshape(&[4, 1]).unwrap(),
        1,
    )
    .unwrap();
    for n in 0..4 {
        assert!((back.at(&[n, 0]) - s.at(0, n, 0)).abs() < 1e-12);
    }
}

#[test]
fn denormalize_matrix_maps_dims_correctly() {
    let s = random_series(20, 2, 2, 15);
    let stats = NormStats::fit(&s, true);
    let normed = stats.normalize(&s).unwrap();
    let w = &make_windows(&normed, 3, 2).unwrap()[0];
    let m = stats.denormalize_matrix(&w.target_matrix().unwrap(), 2).unwrap();
    for n in 0..2 {
        for h in 0..2 {
            for c in 0..2 {
                assert!((m.at(&[n, h * 2 + c]) - s.at(3 + h, n, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn synthetic_generation_is_deterministic() {
    let sp = spec(SyntheticMode::SpatialEssential, 0.5, 6, 200, 3);
    let a = generate_synthetic(&sp).unwrap();
    let b = generate_synthetic(&sp).unwrap();
    assert_eq!(a, b);
    let other = generate_synthetic(&SyntheticSpec { seed: 4, ..sp }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn alpha_zero_decouples_node_streams() {
    // with no mixing, node i's stream must not depend on how many other
    // nodes exist (each node draws from its own derived rng streams)
    let small = generate_synthetic(&spec(SyntheticMode::SpatialEssential, 0.0, 4, 150, 5)).unwrap();
    let large = generate_synthetic(&spec(SyntheticMode::SpatialEssential, 0.0, 7, 150, 5)).unwrap();
    for t in 0..150 {
        for n in 0..4 {
            assert_eq!(small.at(t, n, 0).to_bits(), large.at(t, n, 0).to_bits());
        }
    }
}

#[test]
fn every_node_has_an_in_neighbour() {
    for seed in 0..5 {
        let sp = SyntheticSpec { density: 0.05, ..spec(SyntheticMode::SpatialEssential, 0.8, 12, 10, seed) };
        let (_, neighbours) = generate_synthetic_detailed(&sp).unwrap();
        for (i, neigh) in neighbours.iter().enumerate() {
            assert!(!neigh.is_empty());
            assert!(neigh.iter().all(|j| *j != i), "no self-loops in the latent graph");
        }
    }
}

#[test]
fn spec_validation_rejects_unstable_and_out_of_range_settings() {
    let good = spec(SyntheticMode::Subsumed, 0.5, 4, 100, 0);
    good.validate().unwrap();
    let unstable = SyntheticSpec {
        kernel: TemporalKernel { ar: vec![0.7, 0.4], ..TemporalKernel::default() },
        ..good.clone()
    };
    assert!(unstable.validate().is_err());
    assert!(SyntheticSpec { alpha: 1.5, ..good.clone() }.validate().is_err());
    assert!(SyntheticSpec { num_nodes: 0, ..good.clone() }.validate().is_err());
    assert!(SyntheticSpec { density: -0.1, ..good }.validate().is_err());
}

#[test]
fn synthetic_spec_round_trips_through_json() {
    let sp = spec(SyntheticMode::SpatialEssential, 0.8, 10, 500, 21);
    let text = serde_json::to_string(&sp).unwrap();
    let back: SyntheticSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, sp);

    // defaults make minimal configs valid
    let minimal: SyntheticSpec = serde_json::from_str(
        r#"{"num_nodes": 4, "t_total": 100, "alpha": 0.5, "mode": "subsumed"}"#,
    )
    .unwrap();
    assert_eq!(minimal.density, 0.25);
    assert_eq!(minimal.kernel, TemporalKernel::default());
}

#[test]
fn spatially_essential_data_rewards_the_neighbour_aware_oracle() {
    let sp = SyntheticSpec::spatial_benchmark(10, 2000, 11);
    let (series, neighbours) = generate_synthetic_detailed(&sp).unwrap();
    let (per_node, aware) = oracle::mode_separation(&series, &neighbours, 6).unwrap();
    let gap = (per_node - aware) / per_node;
    assert!(
        gap >= 0.05,
        "expected the neighbour-aware oracle to win by at least 5%, got {:.2}% ({per_node:.4} vs {aware:.4})",
        gap * 100.0
    );
}

#[test]
fn subsumed_data_gives_neighbours_no_edge() {
    let sp = SyntheticSpec::subsumed_benchmark(10, 2000, 12);
    let (series, neighbours) = generate_synthetic_detailed(&sp).unwrap();
    let (per_node, aware) = oracle::mode_separation(&series, &neighbours, 6).unwrap();
    let gap = (per_node - aware) / per_node;
    assert!(
        gap <= 0.01,
        "own history should already carry the signal, got a {:.2}% gap ({per_node:.4} vs {aware:.4})",
        gap * 100.0
    );
}
