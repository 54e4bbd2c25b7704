//! Mask polygonization: 8-connected components traced with marching squares
//! at the pixel-center iso-level, then simplified with Douglas-Peucker.
//!
//! Contour vertices sit on midpoints between neighboring pixel centers, so
//! the unsimplified outer ring rasterizes (at pixel centers) back to exactly
//! the component's pixels, holes aside.

use std::collections::HashMap;

use crate::geometry::{signed_area, GeometryError, Point, Polygon};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Holes smaller than this (square pixels) are filled silently.
    pub min_hole_area: f64,
    /// Douglas-Peucker tolerance in pixels; 0 disables simplification.
    pub simplify_tolerance: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            min_hole_area: 16.0,
            simplify_tolerance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracedComponent {
    pub outer: Polygon,
    pub pixel_count: u64,
    /// Holes at least `min_hole_area` in size. Flat polygons cannot carry
    /// them, so callers report them.
    pub large_holes: usize,
    pub small_holes: usize,
}

/// Traces every 8-connected component of the pixels where `inside` holds.
/// Components come out in raster order of their first pixel; a component
/// whose contour does not form a valid polygon yields an error in its slot.
pub fn trace<F>(width: u32, height: u32, inside: F, opts: &TraceOptions) -> Vec<Result<TracedComponent, GeometryError>>
where
    F: Fn(u32, u32) -> bool,
{
    let (w, h) = (width as usize, height as usize);
    let mut label = vec![0u32; w * h];
    let mut out = Vec::new();
    let mut next = 0u32;
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if label[y * w + x] != 0 || !inside(x as u32, y as u32) {
                continue;
            }
            next += 1;
            let mut pixels = Vec::new();
            label[y * w + x] = next;
            stack.push((x, y));
            while let Some((px, py)) = stack.pop() {
                pixels.push((px, py));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = px as i64 + dx;
                        let ny = py as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if label[ny * w + nx] == 0 && inside(nx as u32, ny as u32) {
                            label[ny * w + nx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            out.push(trace_component(&pixels, opts));
        }
    }
    out
}

/// Local occupancy grid with a one-pixel empty border.
struct Grid {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
    cells: Vec<bool>,
}

impl Grid {
    fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.w
            && (y as usize) < self.h
            && self.cells[y as usize * self.w + x as usize]
    }
}

fn trace_component(pixels: &[(usize, usize)], opts: &TraceOptions) -> Result<TracedComponent, GeometryError> {
    let degenerate = GeometryError::DegeneratePolygon("empty component");
    let min_x = pixels.iter().map(|p| p.0).min().ok_or(degenerate.clone())? as i64;
    let max_x = pixels.iter().map(|p| p.0).max().ok_or(degenerate.clone())? as i64;
    let min_y = pixels.iter().map(|p| p.1).min().ok_or(degenerate.clone())? as i64;
    let max_y = pixels.iter().map(|p| p.1).max().ok_or(degenerate.clone())? as i64;
    let mut grid = Grid {
        x0: min_x - 1,
        y0: min_y - 1,
        w: (max_x - min_x + 3) as usize,
        h: (max_y - min_y + 3) as usize,
        cells: vec![],
    };
    grid.cells = vec![false; grid.w * grid.h];
    for &(x, y) in pixels {
        let lx = (x as i64 - grid.x0) as usize;
        let ly = (y as i64 - grid.y0) as usize;
        grid.cells[ly * grid.w + lx] = true;
    }

    let loops = marching_squares(&grid);
    let mut rings: Vec<(f64, Vec<Point>)> = loops
        .into_iter()
        .map(|l| {
            let pts: Vec<Point> = l
                .into_iter()
                .map(|(dx, dy)| {
                    // doubled local center coords -> global pixel coords
                    Point::new(
                        grid.x0 as f64 + dx as f64 / 2.0 + 0.5,
                        grid.y0 as f64 + dy as f64 / 2.0 + 0.5,
                    )
                })
                .collect();
            (signed_area(&pts).abs(), pts)
        })
        .collect();
    rings.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut iter = rings.into_iter();
    let (_, outer) = iter.next().ok_or(degenerate)?;
    let (mut small_holes, mut large_holes) = (0, 0);
    for (area, _) in iter {
        if area < opts.min_hole_area {
            small_holes += 1;
        } else {
            large_holes += 1;
        }
    }
    let outer = drop_collinear(&outer);
    let polygon = if opts.simplify_tolerance > 0.0 {
        Polygon::new(simplify_ring(&outer, opts.simplify_tolerance)).or_else(|_| Polygon::new(outer.clone()))
    } else {
        Polygon::new(outer)
    }?;
    Ok(TracedComponent {
        outer: polygon,
        pixel_count: pixels.len() as u64,
        large_holes,
        small_holes,
    })
}

#[derive(Clone, Copy)]
enum Edge {
    Top,
    Right,
    Bottom,
    Left,
}

/// Closed loops in doubled local pixel-center coordinates.
fn marching_squares(grid: &Grid) -> Vec<Vec<(i64, i64)>> {
    use Edge::*;
    let mut adjacency: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    // cell (cx, cy) spans pixel centers cx..cx+1, cy..cy+1
    let mid = |cx: i64, cy: i64, e: Edge| match e {
        Top => (2 * cx + 1, 2 * cy),
        Right => (2 * cx + 2, 2 * cy + 1),
        Bottom => (2 * cx + 1, 2 * cy + 2),
        Left => (2 * cx, 2 * cy + 1),
    };
    for cy in 0..grid.h as i64 - 1 {
        for cx in 0..grid.w as i64 - 1 {
            let tl = grid.get(cx, cy) as u8;
            let tr = grid.get(cx + 1, cy) as u8;
            let br = grid.get(cx + 1, cy + 1) as u8;
            let bl = grid.get(cx, cy + 1) as u8;
            let case = tl << 3 | tr << 2 | br << 1 | bl;
            let segs: &[(Edge, Edge)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(Left, Bottom)],
                2 | 13 => &[(Bottom, Right)],
                3 | 12 => &[(Left, Right)],
                4 | 11 => &[(Top, Right)],
                6 | 9 => &[(Top, Bottom)],
                7 | 8 => &[(Left, Top)],
                // saddles resolve as connected (8-connectivity): cut off the
                // two empty corners
                5 => &[(Left, Top), (Bottom, Right)],
                10 => &[(Top, Right), (Left, Bottom)],
                _ => unreachable!(),
            };
            for &(a, b) in segs {
                let (pa, pb) = (mid(cx, cy, a), mid(cx, cy, b));
                adjacency.entry(pa).or_default().push(pb);
                adjacency.entry(pb).or_default().push(pa);
            }
        }
    }
    let mut keys: Vec<(i64, i64)> = adjacency.keys().copied().collect();
    keys.sort_by_key(|&(x, y)| (y, x));
    let mut visited: HashMap<(i64, i64), bool> = HashMap::with_capacity(keys.len());
    let mut loops = Vec::new();
    for start in keys {
        if visited.contains_key(&start) {
            continue;
        }
        let mut ring = vec![start];
        visited.insert(start, true);
        let mut prev = start;
        let mut cur = adjacency[&start][0];
        while cur != start {
            visited.insert(cur, true);
            ring.push(cur);
            let nbrs = &adjacency[&cur];
            let next = if nbrs[0] != prev { nbrs[0] } else { nbrs[1] };
            prev = cur;
            cur = next;
        }
        loops.push(ring);
    }
    loops
}

fn drop_collinear(ring: &[Point]) -> Vec<Point> {
    let n = ring.len();
    if n < 4 {
        return ring.to_vec();
    }
    (0..n)
        .filter(|&i| {
            let a = ring[(i + n - 1) % n];
            let b = ring[i];
            let c = ring[(i + 1) % n];
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) != 0.0
        })
        .map(|i| ring[i])
        .collect()
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((p.x - a.x).powi(2) + (p.y - a.y).powi(2)).sqrt();
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

fn simplify_chain(points: &[Point], tol: f64, keep: &mut [bool], offset: usize) {
    if points.len() < 3 {
        return;
    }
    let (a, b) = (points[0], points[points.len() - 1]);
    let (idx, dist) = points[1..points.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1, point_segment_distance(*p, a, b)))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if dist > tol {
        keep[offset + idx] = true;
        simplify_chain(&points[..=idx], tol, keep, offset);
        simplify_chain(&points[idx..], tol, keep, offset + idx);
    }
}

/// Douglas-Peucker on a closed ring, anchored at vertex 0 and the vertex
/// farthest from it.
pub fn simplify_ring(ring: &[Point], tol: f64) -> Vec<Point> {
    let n = ring.len();
    if n <= 4 {
        return ring.to_vec();
    }
    let far = (1..n)
        .max_by(|&i, &j| {
            let d = |k: usize| (ring[k].x - ring[0].x).powi(2) + (ring[k].y - ring[0].y).powi(2);
            d(i).total_cmp(&d(j))
        })
        .unwrap_or(n / 2);
    let mut closed: Vec<Point> = ring.to_vec();
    closed.push(ring[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    simplify_chain(&closed[..=far], tol, &mut keep, 0);
    simplify_chain(&closed[far..], tol, &mut keep, far);
    let out: Vec<Point> = (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect();
    if out.len() < 3 {
        ring.to_vec()
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rasterize;

    fn mask_from(rows: &[&str]) -> (u32, u32, Vec<bool>) {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let cells = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        (w, h, cells)
    }

    fn exact_opts() -> TraceOptions {
        TraceOptions {
            min_hole_area: 16.0,
            simplify_tolerance: 0.0,
        }
    }

    fn check_exact(rows: &[&str]) -> Vec<TracedComponent> {
        let (w, h, cells) = mask_from(rows);
        let comps: Vec<TracedComponent> = trace(w, h, |x, y| cells[(y * w + x) as usize], &exact_opts())
            .into_iter()
            .map(Result::unwrap)
            .collect();
        let polys: Vec<Polygon> = comps.iter().map(|c| c.outer.clone()).collect();
        let m = rasterize(&polys, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(m.get(x, y), cells[(y * w + x) as usize], "pixel {x},{y}");
            }
        }
        comps
    }

    #[test]
    fn rectangle_and_single_pixel() {
        let comps = check_exact(&["......", ".###..", ".###..", "......", "....#."]);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixel_count, 6);
        assert_eq!(comps[1].pixel_count, 1);
    }

    #[test]
    fn diagonal_pixels_form_one_component() {
        let comps = check_exact(&["#...", ".#..", "..#.", "...#"]);
        assert_eq!(comps.len(), 1);
        check_exact(&["##..", "##..", "..##", "..##"]);
        check_exact(&["#.#", ".#.", "#.#"]);
        let (w, h, cells) = mask_from(&[".#.", "#.#", ".#."]);
        let ring = trace(w, h, |x, y| cells[(y * w + x) as usize], &exact_opts());
        assert_eq!(ring.len(), 1);
        assert_eq!(ring[0].as_ref().unwrap().small_holes, 1);
    }

    #[test]
    fn touching_image_border() {
        check_exact(&["###", "###", "##."]);
    }

    #[test]
    fn holes_are_classified() {
        let mut rows = vec!["##########".to_string(); 10];
        for r in rows.iter_mut().take(8).skip(2) {
            r.replace_range(2..8, "......");
        }
        rows[1].replace_range(8..9, ".");
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let (w, h, cells) = mask_from(&refs);
        let comps = trace(w, h, |x, y| cells[(y * w + x) as usize], &TraceOptions::default());
        assert_eq!(comps.len(), 1);
        let comps: Vec<TracedComponent> = comps.into_iter().map(Result::unwrap).collect();
        assert_eq!(comps[0].large_holes, 1);
        assert_eq!(comps[0].small_holes, 1);
    }

    #[test]
    fn simplification_keeps_rectangle_fidelity() {
        let rows: Vec<String> = (0..40)
            .map(|y| {
                (0..40)
                    .map(|x| {
                        if (5..35).contains(&x) && (8..30).contains(&y) {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let (w, h, cells) = mask_from(&refs);
        let comps: Vec<TracedComponent> = trace(w, h, |x, y| cells[(y * w + x) as usize], &TraceOptions::default())
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].outer.len() <= 8);
        let m = rasterize(&[comps[0].outer.clone()], w, h).unwrap();
        let truth: u64 = cells.iter().filter(|c| **c).count() as u64;
        let mut inter = 0;
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) && cells[(y * w + x) as usize] {
                    inter += 1;
                }
            }
        }
        let union = truth + m.count_ones() - inter;
        assert!(inter as f64 / union as f64 >= 0.99);
    }
}
