//! Convex IoU, minimum-area rectangles and rasterization.

use forge::geometry::{iou, min_area_rect, polygon_area, rasterize, Geometry, Hbb, Point, Polygon, Quad};

fn square(cx: f64, cy: f64, half: f64, angle: f64) -> Quad {
    let (s, c) = angle.sin_cos();
    let pts = [(-half, -half), (half, -half), (half, half), (-half, half)]
        .map(|(x, y)| Point::new(cx + x * c - y * s, cy + x * s + y * c));
    Quad::new(pts).expect("square is valid")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Geometry::Hbb(Hbb::new(0.0, 0.0, 1.0, 1.0)?);
    let b = Geometry::Hbb(Hbb::new(0.5, 0.0, 1.5, 1.0)?);
    println!("offset unit squares   IoU = {:.6}", iou(&a, &b));

    let axis = Geometry::Quad(square(0.0, 0.0, 1.0, 0.0));
    let rotated = Geometry::Quad(square(0.0, 0.0, 1.0, std::f64::consts::FRAC_PI_4));
    println!("square vs 45° square   IoU = {:.6}", iou(&axis, &rotated));

    let blob = Polygon::new(vec![
        Point::new(10.0, 10.0),
        Point::new(60.0, 20.0),
        Point::new(70.0, 60.0),
        Point::new(30.0, 70.0),
        Point::new(5.0, 40.0),
    ])?;
    let rect = min_area_rect(&blob)?;
    println!(
        "polygon area {:.1}, min-area rect area {:.1}",
        polygon_area(&blob),
        rect.area()
    );

    let mask = rasterize(&[Polygon::from(Hbb::new(0.0, 0.0, 50.0, 100.0)?)], 100, 100)?;
    println!("left half of 100x100 sets {} pixels", mask.count_ones());
    Ok(())
}
