//! Trace a class-index mask into polygons and check the round trip.

use forge::contour::{trace, TraceOptions};
use forge::geometry::rasterize;

const ART: &[&str] = &[
    "..............",
    ".#####....##..",
    ".#####...####.",
    ".##.##...####.",
    ".#####....##..",
    "..............",
    "...########...",
    "...#......#...",
    "...########...",
];

fn main() {
    let (w, h) = (ART[0].len() as u32, ART.len() as u32);
    let inside = |x: u32, y: u32| ART[y as usize].as_bytes()[x as usize] == b'#';
    let opts = TraceOptions::default();
    for (i, c) in trace(w, h, inside, &opts).into_iter().enumerate() {
        let c = c.expect("traceable");
        let back = rasterize(std::slice::from_ref(&c.outer), w, h).unwrap();
        println!(
            "component {i}: {} px, {} vertices, raster {} px, holes small={} large={}",
            c.pixel_count,
            c.outer.len(),
            back.count_ones(),
            c.small_holes,
            c.large_holes
        );
    }
}
