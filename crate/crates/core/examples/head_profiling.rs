//! Head search on a synthetic landscape where one layer holds the useful
//! heads. Shows the evaluation budget of each strategy and the grid choice.

use std::collections::HashMap;

use attn_steer::profiling::{profile, AdditiveLandscape, ModelDims, Selection, Strategy, StrategyGrid};
use attn_steer::steering::HeadLocation;

fn main() -> attn_steer::Result<()> {
    let dims = ModelDims::new(32, 32);
    let mut utility = HashMap::new();
    for l in 0..32 {
        for h in 0..32 {
            let u = if l == 20 && h % 2 == 0 { 3.0 - h as f64 * 0.05 } else { -0.2 - (l * 32 + h) as f64 * 1e-4 };
            utility.insert(HeadLocation::new(l, h), u);
        }
    }
    let land = AdditiveLandscape { base: 30.0, utility };

    for s in [
        Strategy::Greedy { k: 8 },
        Strategy::Group { group_size: 8, k_groups: 1 },
        Strategy::CoarseToFine { layers: 4, selection: Selection::TopFromPool(8) },
    ] {
        let out = attn_steer::profiling::run_strategy(s, dims, &land)?;
        println!("{s}: {} evaluations, {} heads", out.budget.evaluations_used, out.head_set.len());
    }

    let grid = StrategyGrid::coarse_to_fine_default().valid_points(dims);
    let report = profile(dims, &grid, &land)?;
    println!(
        "grid of {} points -> {} (F1 {:.2}), heads {}",
        grid.len(),
        report.chosen_strategy,
        report.chosen_score.token_f1,
        report.chosen.to_json()
    );
    Ok(())
}
