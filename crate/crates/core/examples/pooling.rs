//! Directional max scans and the pooling operators built from them.

use keytriplet::grid::DenseGrid;
use keytriplet::pooling::{cascade_corner_pool, center_pool, corner_pool, scan_max, Corner, ScanDirection};

fn show(label: &str, g: &DenseGrid) {
    println!("{label}:");
    for i in 0..g.height() {
        let row: Vec<String> = (0..g.width()).map(|j| format!("{:>3}", g.get(0, i, j))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> keytriplet::Result<()> {
    let a = DenseGrid::from_rows(&[
        vec![1.0, 3.0, 2.0, 0.0],
        vec![0.0, 2.0, 5.0, 1.0],
        vec![4.0, 0.0, 1.0, 2.0],
    ])?;
    let b = DenseGrid::from_rows(&[
        vec![0.0, 1.0, 0.0, 2.0],
        vec![3.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 6.0, 0.0],
    ])?;
    show("a", &a);
    for dir in ScanDirection::ALL {
        show(&format!("scan {dir:?}"), &scan_max(&a, dir)?);
    }
    show("center pool (a horizontal, b vertical)", &center_pool(&a, &b)?);
    show("top-left corner pool", &corner_pool(&a, &b, Corner::TopLeft)?);
    show("bottom-right corner pool", &corner_pool(&a, &b, Corner::BottomRight)?);
    show("cascade top-left", &cascade_corner_pool(&a, &b, Corner::TopLeft)?);
    Ok(())
}
