//! Drops every bundled robot in its default pose and reports how it settles.

use std::time::Instant;
use walker_sim::{zoo, Plant, PhysicsConfig, Terrain};

fn main() {
    let secs: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    for name in zoo::NAMES {
        let spec = zoo::zoo(name).unwrap();
        let q0 = spec.default_pose();
        let mut plant = Plant::new(spec, PhysicsConfig::default(), Terrain::flat(), 5).unwrap();
        let start = Instant::now();
        let mut heights = vec![];
        let steps = (secs / 0.025).round() as usize;
        let mut err = None;
        for _ in 0..steps {
            if let Err(e) = plant.control_step(&q0, 0.025) {
                err = Some(e);
                break;
            }
            heights.push(plant.state.base_pos.z);
        }
        let el = start.elapsed().as_secs_f64();
        let n = heights.len();
        let last_s = if n > 40 { heights[n - 1] - heights[n - 41] } else { f64::NAN };
        let (r, p, _) = plant.state.base_rot.euler_angles();
        println!(
            "{name:10} {:.3} s sim in {el:.3} s ({:.1} µs/substep); z0 {:.4} z {:.4} Δz(last 1s) {:.2e} roll {r:.3} pitch {p:.3} err {err:?}",
            n as f64 * 0.025,
            el / (n as f64 * 25.0) * 1e6,
            heights.first().copied().unwrap_or(f64::NAN),
            heights.last().copied().unwrap_or(f64::NAN),
            last_s
        );
    }
}
