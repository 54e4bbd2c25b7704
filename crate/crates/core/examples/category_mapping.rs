//! Map raw source labels onto the canonical category list.

use forge::schema::CategoryDict;

fn main() {
    let dict = CategoryDict::builtin();
    println!("{} canonical categories ({})", dict.canonical().len(), dict.version());
    for raw in [
        "Plane",
        "small-vehicle",
        "storage_tank",
        "Harbour",
        "ground track field",
        "spaceship",
    ] {
        match dict.map_category(raw) {
            Ok(c) => println!("{raw:>20} -> {c}"),
            Err(e) => println!("{raw:>20} -> {e}"),
        }
    }
}
