//! Quantize geometries to location tokens and parse them back.

use forge::geometry::{Geometry, Hbb, Point, Polygon, Quad};
use forge::loctok::{emit_location, parse_prediction, quantize};
use forge::schema::{CategoryDict, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (448.0, 448.0);
    let hbb = Geometry::Hbb(Hbb::new(112.0, 112.0, 336.0, 336.0)?);
    println!("hbb      {}", emit_location(&hbb, w, h)?);

    let quad = Geometry::Quad(Quad::new([
        Point::new(100.0, 50.0),
        Point::new(200.0, 100.0),
        Point::new(150.0, 200.0),
        Point::new(50.0, 150.0),
    ])?);
    println!("quad     {}", emit_location(&quad, w, h)?);

    let tri = Geometry::Polygon(Polygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(448.0, 0.0),
        Point::new(0.0, 448.0),
    ])?);
    println!("polygon  {}", emit_location(&tri, w, h)?);
    println!("x=447.9 -> bin {}", quantize(447.9, w)?.value());

    let text = "airplane<box><loc_100><loc_100><loc_200><loc_200></box>";
    let parsed = parse_prediction(text, TaskKind::DetHbb, 1000.0, 1000.0, CategoryDict::builtin())?;
    println!("{text}\n  -> {}", serde_json::to_string(&parsed)?);
    Ok(())
}
