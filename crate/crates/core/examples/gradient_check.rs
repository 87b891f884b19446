//! Losses with analytic gradients, checked against central differences.

use keytriplet::geometry::BoxGeometry;
use keytriplet::losses::{
    central_difference, focal_loss, giou_loss, offset_loss, pull_push_loss, relative_error, OffsetLossKind,
};

fn report(name: &str, analytic: &[f64], f: impl Fn(&[f64]) -> f64, x: &[f64]) {
    let numeric = central_difference(f, x, 1e-6);
    println!("{name:<10} relative error {:.2e}", relative_error(analytic, &numeric));
}

fn main() -> keytriplet::Result<()> {
    let pred = [0.9, 0.2, 0.6, 0.05];
    let target = [1.0, 0.0, 0.8, 0.0];
    let focal = focal_loss(&pred, &target)?;
    println!("focal loss {:.6}", focal.value);
    report(
        "focal",
        &focal.gradient,
        |p| focal_loss(p, &target).unwrap().value,
        &pred,
    );

    let pairs = [(0.1, 0.3), (2.0, 1.6), (-1.0, -0.7)];
    let (pull, push) = pull_push_loss(&pairs);
    println!("pull {:.6}  push {:.6}", pull.value, push.value);
    let flat: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let unflat = |x: &[f64]| x.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>();
    report("pull", &pull.gradient, |x| pull_push_loss(&unflat(x)).0.value, &flat);
    report("push", &push.gradient, |x| pull_push_loss(&unflat(x)).1.value, &flat);

    let off_p = [(0.3, 0.9), (0.1, 0.2)];
    let off_t = [(0.5, 0.0), (0.1, 0.1)];
    let off = offset_loss(&off_p, &off_t, OffsetLossKind::SmoothL1)?;
    let flat: Vec<f64> = off_p.iter().flat_map(|&(a, b)| [a, b]).collect();
    report(
        "offset",
        &off.gradient,
        |x| offset_loss(&unflat(x), &off_t, OffsetLossKind::SmoothL1).unwrap().value,
        &flat,
    );

    let p = BoxGeometry::new(10.0, 12.0, 50.0, 40.0);
    let t = BoxGeometry::new(20.0, 5.0, 60.0, 35.0);
    let giou = giou_loss(&p, &t)?;
    println!("giou loss {:.6}, same box {:.6}", giou.value, giou_loss(&t, &t)?.value);
    let x = [p.tl_x, p.tl_y, p.br_x, p.br_y];
    report(
        "giou",
        &giou.gradient,
        |v| giou_loss(&BoxGeometry::new(v[0], v[1], v[2], v[3]), &t).unwrap().value,
        &x,
    );
    Ok(())
}
