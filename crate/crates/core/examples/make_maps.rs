//! Regenerates the bundled maps under `maps/`.
//!
//! ```text
//! cargo run -p navcore --example make_maps -- [output dir]
//! ```

use std::path::PathBuf;

use navcore::app::save_map;
use navcore::geometry::GridMeta;
use navcore::grid::{Occupancy, OccupancyGrid};

fn solid(res: f64, w: f64, h: f64) -> OccupancyGrid {
    let meta = GridMeta::new(res, 0.0, 0.0, (w / res).round() as usize, (h / res).round() as usize).unwrap();
    OccupancyGrid::new_filled(meta, Occupancy::Occupied)
}

fn free(g: &mut OccupancyGrid, x0: f64, y0: f64, x1: f64, y1: f64) {
    g.fill_rect(x0, y0, x1, y1, Occupancy::Free);
}

fn wall(g: &mut OccupancyGrid, x0: f64, y0: f64, x1: f64, y1: f64) {
    g.fill_rect(x0, y0, x1, y1, Occupancy::Occupied);
}

/// Two rooms split by a partition with a 1.6 m doorway.
fn corridor_smoke() -> OccupancyGrid {
    let mut g = solid(0.05, 14.0, 6.0);
    free(&mut g, 0.3, 0.3, 13.7, 5.7);
    wall(&mut g, 6.9, 0.3, 7.1, 2.2);
    wall(&mut g, 6.9, 3.8, 7.1, 5.7);
    wall(&mut g, 3.0, 2.6, 3.4, 3.0);
    g
}

/// An empty 8 x 8 m room.
fn square_room() -> OccupancyGrid {
    let mut g = solid(0.05, 8.0, 8.0);
    free(&mut g, 0.3, 0.3, 7.7, 7.7);
    g
}

/// Two rooms joined by a 4 m long, 1.2 m wide corridor, the only passage.
fn blocked_corridor() -> OccupancyGrid {
    let mut g = solid(0.05, 16.0, 7.0);
    free(&mut g, 0.5, 0.5, 6.5, 6.5);
    free(&mut g, 6.5, 2.9, 10.5, 4.1);
    free(&mut g, 10.5, 0.5, 15.5, 6.5);
    g
}

/// A 3 m wide rectangular ring whose centerline is 95 x 55 m (300 m long),
/// with pillars along the outer wall and a few alcoves.
fn marathon() -> OccupancyGrid {
    let mut g = solid(0.1, 100.0, 60.0);
    free(&mut g, 1.0, 1.0, 99.0, 59.0);
    wall(&mut g, 4.0, 4.0, 96.0, 56.0);
    for x in [20.0, 40.0, 60.0, 80.0] {
        wall(&mut g, x, 1.0, x + 0.4, 1.3);
        wall(&mut g, x, 58.7, x + 0.4, 59.0);
    }
    for y in [15.0, 30.0, 45.0] {
        wall(&mut g, 1.0, y, 1.3, y + 0.4);
        wall(&mut g, 98.7, y, 99.0, y + 0.4);
    }
    // alcoves cut into the inner block
    free(&mut g, 30.0, 4.0, 32.0, 5.0);
    free(&mut g, 70.0, 55.0, 72.0, 56.0);
    g
}

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("maps"));
    std::fs::create_dir_all(&out).expect("create output dir");
    let maps = [
        ("corridor_smoke", corridor_smoke()),
        ("square_room", square_room()),
        ("blocked_corridor", blocked_corridor()),
        ("marathon", marathon()),
    ];
    for (name, grid) in maps {
        let pgm = out.join(format!("{name}.pgm"));
        let yaml = out.join(format!("{name}.yaml"));
        save_map(&grid, &pgm, &yaml).expect("write map");
        println!("{} ({}x{} cells)", pgm.display(), grid.meta.width, grid.meta.height);
    }
}
