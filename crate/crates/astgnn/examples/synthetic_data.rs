//! The two synthetic benchmark regimes, plus the split / normalise / window
//! plumbing that feeds training.

use astgnn::data::{
    generate_synthetic_detailed, make_windows, split, NormStats, SyntheticSpec,
};

fn main() -> astgnn::Result<()> {
    // Subsumed: every node observes one shared latent, so a node's own
    // history already carries the cross-node signal.
    let subsumed = SyntheticSpec::subsumed_benchmark(6, 200, 3);
    // Spatial-essential: independent latents mixed from lagged in-neighbours;
    // masking a needed edge costs real accuracy.
    let spatial = SyntheticSpec::spatial_benchmark(6, 200, 3);

    for spec in [&subsumed, &spatial] {
        let (series, neighbours) = generate_synthetic_detailed(spec)?;
        let mean: f64 =
            series.values().iter().sum::<f64>() / series.values().len() as f64;
        println!("{}: {} nodes x {} steps, mean {:.3}", spec.name, series.num_nodes(), series.t_total(), mean);
        for (i, nb) in neighbours.iter().enumerate().take(3) {
            println!("  node {i} mixes lagged latents from {nb:?}");
        }
    }

    // Standard preparation: split first, fit statistics on train only, then
    // window each split. No window ever straddles a split boundary.
    let (series, _) = generate_synthetic_detailed(&subsumed)?;
    let parts = split(&series, &[0.6, 0.2, 0.2], &["train", "val", "test"])?;
    println!("\nsplit lengths: {:?}", parts.iter().map(|p| p.t_total()).collect::<Vec<_>>());

    let stats = NormStats::fit(&parts[0], true);
    let normalised = stats.normalize(&parts[0])?;
    let windows = make_windows(&normalised, 12, 3)?;
    println!("train split gives {} windows of 12-step history, 3-step horizon", windows.len());
    println!("first window history shape: {:?}", windows[0].history.shape());

    // Round trip: denormalising a normalised value restores the original.
    let raw = series.values()[0];
    let norm = stats.normalize(&parts[0])?.values()[0];
    let back = stats.denormalize_value(norm, 0, 0, series.channels());
    println!("\nnormalisation round trip: {raw:.6} -> {norm:.6} -> {back:.6}");
    Ok(())
}
