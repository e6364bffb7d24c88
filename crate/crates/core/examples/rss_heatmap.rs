//! Coarse text heatmap of noiseless RSS from LED 0 on the floor.

use vlc_jcp::channel::NoiseModel;
use vlc_jcp::positioning::{build_reference_grid, grid_axes};
use vlc_jcp::ScenarioConfig;

fn main() {
    let cfg = ScenarioConfig::default();
    let table = build_reference_grid(&cfg, 0.0, &NoiseModel::noiseless()).unwrap();
    let (xs, ys) = grid_axes(&cfg);
    let peak = (0..xs.len())
        .flat_map(|i| (0..ys.len()).map(move |j| (i, j)))
        .map(|(i, j)| table.at(0, i, j))
        .fold(0.0, f64::max);
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for j in (0..ys.len()).rev().step_by(3) {
        let line: String = (0..xs.len())
            .step_by(2)
            .map(|i| shades[((table.at(0, i, j) / peak) * 9.0).round() as usize])
            .collect();
        println!("{line}");
    }
    println!("peak {peak:.3e} at LED 0 footprint; grid {} x {}", xs.len(), ys.len());
}
