mod common;

use common::Grid;
use heatprof::gallery::{gallery, GalleryParams, NAMES};
use heatprof::geometry::DomainPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn inner_distance_matches_grid_dijkstra_on_the_gallery() {
    for name in NAMES {
        let (_, d) = gallery(name, &GalleryParams::default()).unwrap();
        let g = Grid::new(&d, 120);
        let inside: Vec<usize> = (0..g.inside.len()).filter(|&k| g.inside[k]).collect();
        let step = inside.len() / 5;
        for s in 0..4 {
            let src = inside[s * step + step / 3];
            let grid = g.dijkstra(&d, src);
            let x = DomainPoint::from(g.at(src));
            let stride = (inside.len() / 40).max(1);
            for &k in inside.iter().step_by(stride) {
                let path = d.inner_distance(&x, &g.at(k).into()).unwrap();
                let exact = path.length;
                // grid paths are admissible, so never shorter; each corner the
                // geodesic wraps costs the grid up to a couple of cells
                let corners = path.waypoints.len().saturating_sub(2) as f64;
                let slack = 0.01 * exact + 2.0 * g.h * corners;
                assert!(grid[k] >= exact - 1e-9, "{name}: grid {} below exact {exact}", grid[k]);
                assert!(grid[k] <= exact + slack, "{name}: grid {} vs exact {exact}", grid[k]);
            }
        }
    }
}

#[test]
fn inner_distance_matches_any_angle_grid_within_one_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in NAMES {
        let (_, d) = gallery(name, &GalleryParams::default()).unwrap();
        let g = Grid::new(&d, 480);
        let inside: Vec<usize> = (0..g.inside.len()).filter(|&k| g.inside[k]).collect();
        for _ in 0..5 {
            let src = inside[rng.gen_range(0..inside.len())];
            let grid = g.any_angle(&d, src);
            let x = DomainPoint::from(g.at(src));
            for _ in 0..20 {
                let k = inside[rng.gen_range(0..inside.len())];
                let exact = d.inner_distance(&x, &g.at(k).into()).unwrap().length;
                assert!(grid[k] >= exact - 1e-9, "{name}: grid {} below exact {exact}", grid[k]);
                assert!(grid[k] <= exact * 1.01, "{name}: grid {} vs exact {exact}", grid[k]);
            }
        }
    }
}
