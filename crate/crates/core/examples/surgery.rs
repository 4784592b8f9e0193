//! Select the globally weakest filters and cut them out of the network.

use plsprune::criteria::l1_norm_scores;
use plsprune::surgery::{prune_network, select_filters, validate_consistency};
use plsprune::{ImageShape, Network};

fn main() -> plsprune::Result<()> {
    let net = Network::plain_cnn(ImageShape::new(1, 16, 16), &[8, 16, 16], 3, 4)?;
    let plan = select_filters(&l1_norm_scores(&net), 0.25)?;
    println!(
        "requested {} of {} filters, removing {} (guard skipped {})",
        plan.requested,
        net.filter_count(),
        plan.len(),
        plan.guard_skipped
    );
    for (layer, n) in &plan.per_layer_counts {
        println!("  layer {layer}: {n} filters");
    }

    let pruned = prune_network(&net, &plan)?;
    validate_consistency(&pruned).expect("pruned network is consistent");
    let (before, after) = (net.flops()?.total, pruned.flops()?.total);
    println!("filters {} -> {}", net.filter_count(), pruned.filter_count());
    println!("params  {} -> {}", net.param_count(), pruned.param_count());
    println!(
        "FLOPs   {before} -> {after} ({:.1}% fewer)",
        100.0 * (1.0 - after as f64 / before as f64)
    );
    let shapes = pruned.layer_shapes()?;
    for (i, layer) in pruned.layers().iter().enumerate() {
        println!("  {i:>2} {:<16} -> {}", layer.name(), shapes[i + 1]);
    }
    Ok(())
}
