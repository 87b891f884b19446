//! Scale-aware central regions: small boxes get a wider region (n = 3),
//! large ones a tighter one (n = 5).

use keytriplet::decode::{central_region, select_n, DecodeConfig};
use keytriplet::geometry::BoxGeometry;

fn main() -> keytriplet::Result<()> {
    let cfg = DecodeConfig::default();
    let boxes = [
        BoxGeometry::new(0.0, 0.0, 90.0, 90.0),
        BoxGeometry::new(10.0, 20.0, 159.0, 60.0),
        BoxGeometry::new(10.0, 20.0, 160.0, 60.0),
        BoxGeometry::new(100.0, 100.0, 400.0, 250.0),
    ];
    for b in boxes {
        let n = select_n(&b, &cfg);
        let r = central_region(&b, n)?;
        println!(
            "box {:?} -> n={n}, region ({:.2}, {:.2})-({:.2}, {:.2}), {:.1}% of the width",
            [b.tl_x, b.tl_y, b.br_x, b.br_y],
            r.ctl_x,
            r.ctl_y,
            r.cbr_x,
            r.cbr_y,
            100.0 * r.width() / b.width()
        );
    }
    match central_region(&boxes[0], 4) {
        Err(e) => println!("n=4: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
