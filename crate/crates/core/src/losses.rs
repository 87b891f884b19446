//! Training objectives as plain functions with hand-written gradients.
//!
//! Nothing here trains anything. The losses pin down what a detector head is
//! scored on and let the rendered targets be checked against them. All
//! arithmetic is `f64`; [`central_difference`] is the oracle the gradients
//! are tested against.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxGeometry;
use crate::grid::DenseGrid;

/// A scalar loss and its gradient with respect to the differentiated input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LossValue {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![0.0; n],
        }
    }
}

/// Penalty-reduced pixelwise focal loss (exponents 2 and 4).
///
/// Cells where `target == 1` are positives; everywhere else the negative
/// term is damped by `(1 - target)^4`. The sum is divided by the number of
/// positives, at least 1. `pred` must lie strictly inside (0, 1).
pub fn focal_loss(pred: &[f64], target: &[f64]) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "focal loss: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if let Some(p) = pred.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Contract(format!("focal loss: prediction {p} outside (0, 1)")));
    }
    let n = target.iter().filter(|t| **t == 1.0).count().max(1) as f64;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        if t == 1.0 {
            let q = 1.0 - p;
            value -= q * q * p.ln();
            gradient.push(-(-2.0 * q * p.ln() + q * q / p) / n);
        } else {
            let w = (1.0 - t).powi(4);
            let l = (1.0 - p).ln();
            value -= w * p * p * l;
            gradient.push(-w * (2.0 * p * l - p * p / (1.0 - p)) / n);
        }
    }
    Ok(LossValue {
        value: value / n,
        gradient,
    })
}

/// [`focal_loss`] over two grids of the same shape.
pub fn focal_heatmap_loss(pred: &DenseGrid, target: &DenseGrid) -> Result<LossValue> {
    if !pred.same_shape(target) {
        return Err(Error::Contract(format!(
            "focal loss: shape {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let p: Vec<f64> = pred.values().iter().map(|v| f64::from(*v)).collect();
    let t: Vec<f64> = target.values().iter().map(|v| f64::from(*v)).collect();
    focal_loss(&p, &t)
}

/// Embedding grouping losses over per-object `(top_left, bottom_right)`
/// embedding pairs.
///
/// Pull is the mean squared deviation of each corner from its object's mean
/// embedding. Push is a margin-1 hinge on the distance between every ordered
/// pair of object means, averaged over `N(N-1)`. Gradients are laid out as
/// `[tl_0, br_0, tl_1, br_1, ...]`.
pub fn pull_push_loss(pairs: &[(f64, f64)]) -> (LossValue, LossValue) {
    let n = pairs.len();
    let mut pull = LossValue::zero(2 * n);
    let mut push = LossValue::zero(2 * n);
    if n == 0 {
        return (pull, push);
    }
    let nf = n as f64;
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let m = (a + b) / 2.0;
        pull.value += ((a - m).powi(2) + (b - m).powi(2)) / nf;
        pull.gradient[2 * k] = (a - b) / nf;
        pull.gradient[2 * k + 1] = (b - a) / nf;
    }
    if n < 2 {
        return (pull, push);
    }
    let means: Vec<f64> = pairs.iter().map(|(a, b)| (a + b) / 2.0).collect();
    let norm = nf * (nf - 1.0);
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let d = means[k] - means[l];
            let h = 1.0 - d.abs();
            if h <= 0.0 {
                continue;
            }
            push.value += h / norm;
            // (k, l) and (l, k) contribute equally to d/d(mean_k)
            let g = -2.0 * d.signum() / norm;
            push.gradient[2 * k] += g / 2.0;
            push.gradient[2 * k + 1] += g / 2.0;
        }
    }
    (pull, push)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetLossKind {
    #[default]
    SmoothL1,
    L1,
}

fn offset_term(x: f64, kind: OffsetLossKind) -> (f64, f64) {
    match kind {
        OffsetLossKind::SmoothL1 if x.abs() < 1.0 => (0.5 * x * x, x),
        _ => (
            x.abs() - if kind == OffsetLossKind::SmoothL1 { 0.5 } else { 0.0 },
            x.signum(),
        ),
    }
}

/// Offset regression loss at ground-truth keypoint cells: per-coordinate
/// smooth-L1 (or plain L1), summed over `dx`/`dy` and averaged over
/// keypoints. Gradient layout is `[dx_0, dy_0, dx_1, ...]`.
pub fn offset_loss(pred: &[(f64, f64)], target: &[(f64, f64)], kind: OffsetLossKind) -> Result<LossValue> {
    if pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "offset loss: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let mut out = LossValue::zero(2 * pred.len());
    if pred.is_empty() {
        return Ok(out);
    }
    let n = pred.len() as f64;
    for (k, (p, t)) in pred.iter().zip(target).enumerate() {
        for (c, x) in [p.0 - t.0, p.1 - t.1].into_iter().enumerate() {
            let (v, g) = offset_term(x, kind);
            out.value += v / n;
            out.gradient[2 * k + c] = g / n;
        }
    }
    Ok(out)
}

/// `1 - GIoU(pred, target)`, in [0, 2], with the gradient with respect to
/// `pred`'s `(tl_x, tl_y, br_x, br_y)`.
pub fn giou_loss(pred: &BoxGeometry, target: &BoxGeometry) -> Result<LossValue> {
    for (what, b) in [("pred", pred), ("target", target)] {
        if !b.is_valid() {
            return Err(Error::Contract(format!("giou loss: degenerate {what} box {b:?}")));
        }
    }
    let (x1, y1, x2, y2) = (pred.tl_x, pred.tl_y, pred.br_x, pred.br_y);
    let (tx1, ty1, tx2, ty2) = (target.tl_x, target.tl_y, target.br_x, target.br_y);
    let (w, h) = (x2 - x1, y2 - y1);
    let a = w * h;
    let b = target.area();

    let iw = x2.min(tx2) - x1.max(tx1);
    let ih = y2.min(ty2) - y1.max(ty1);
    let overlap = iw > 0.0 && ih > 0.0;
    let inter = if overlap { iw * ih } else { 0.0 };
    let union = a + b - inter;
    let cw = x2.max(tx2) - x1.min(tx1);
    let ch = y2.max(ty2) - y1.min(ty1);
    let c = cw * ch;
    let value = 2.0 - inter / union - union / c;

    let ind = |cond: bool| if cond { 1.0 } else { 0.0 };
    let d_area = [-h, -w, h, w];
    let d_inter = if overlap {
        [
            -ih * ind(x1 > tx1),
            -iw * ind(y1 > ty1),
            ih * ind(x2 < tx2),
            iw * ind(y2 < ty2),
        ]
    } else {
        [0.0; 4]
    };
    let d_hull = [
        -ch * ind(x1 < tx1),
        -cw * ind(y1 < ty1),
        ch * ind(x2 > tx2),
        cw * ind(y2 > ty2),
    ];
    let gradient = (0..4)
        .map(|k| {
            let du = d_area[k] - d_inter[k];
            -(d_inter[k] * union - inter * du) / (union * union) - (du * c - union * d_hull[k]) / (c * c)
        })
        .collect();
    Ok(LossValue { value, gradient })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrLossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SrLossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrLossWeights {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
}

impl Default for MrLossWeights {
    fn default() -> Self {
        Self {
            alpha_hat: 2.0,
            beta_hat: 0.25,
            gamma_hat: 1.0,
        }
    }
}

fn take(map: &BTreeMap<String, f64>, name: &str) -> Result<f64> {
    map.get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("missing loss component `{name}`")))
}

/// Component values of the single-resolution objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SrLossComponents {
    pub corner_focal: f64,
    pub center_focal: f64,
    pub pull: f64,
    pub push: f64,
    pub corner_offset: f64,
    pub center_offset: f64,
}

impl SrLossComponents {
    pub const NAMES: [&'static str; 6] = [
        "corner_focal",
        "center_focal",
        "pull",
        "push",
        "corner_offset",
        "center_offset",
    ];

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            corner_focal: take(map, "corner_focal")?,
            center_focal: take(map, "center_focal")?,
            pull: take(map, "pull")?,
            push: take(map, "push")?,
            corner_offset: take(map, "corner_offset")?,
            center_offset: take(map, "center_offset")?,
        })
    }

    fn values(&self) -> [f64; 6] {
        [
            self.corner_focal,
            self.center_focal,
            self.pull,
            self.push,
            self.corner_offset,
            self.center_offset,
        ]
    }
}

/// Component values of the multi-resolution objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MrLossComponents {
    pub tl_cls: f64,
    pub br_cls: f64,
    pub tl_reg: f64,
    pub br_reg: f64,
    pub corner_focal: f64,
    pub center_focal: f64,
    pub corner_offset: f64,
    pub center_offset: f64,
}

impl MrLossComponents {
    pub const NAMES: [&'static str; 8] = [
        "tl_cls",
        "br_cls",
        "tl_reg",
        "br_reg",
        "corner_focal",
        "center_focal",
        "corner_offset",
        "center_offset",
    ];

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(Self {
            tl_cls: take(map, "tl_cls")?,
            br_cls: take(map, "br_cls")?,
            tl_reg: take(map, "tl_reg")?,
            br_reg: take(map, "br_reg")?,
            corner_focal: take(map, "corner_focal")?,
            center_focal: take(map, "center_focal")?,
            corner_offset: take(map, "corner_offset")?,
            center_offset: take(map, "center_offset")?,
        })
    }

    fn values(&self) -> [f64; 8] {
        [
            self.tl_cls,
            self.br_cls,
            self.tl_reg,
            self.br_reg,
            self.corner_focal,
            self.center_focal,
            self.corner_offset,
            self.center_offset,
        ]
    }
}

fn weighted(values: &[f64], weights: &[f64]) -> LossValue {
    LossValue {
        value: values.iter().zip(weights).map(|(v, w)| v * w).sum(),
        gradient: weights.to_vec(),
    }
}

/// `corner + center + α·pull + β·push + γ·(corner_off + center_off)`.
///
/// The gradient is taken with respect to the components, in
/// [`SrLossComponents::NAMES`] order.
pub fn total_loss_sr(c: &SrLossComponents, w: &SrLossWeights) -> LossValue {
    weighted(&c.values(), &[1.0, 1.0, w.alpha, w.beta, w.gamma, w.gamma])
}

/// `½(cls_tl + cls_br) + (α̂/2)(reg_tl + reg_br) + β̂(corner + center) + γ̂(corner_off + center_off)`,
/// gradient in [`MrLossComponents::NAMES`] order.
pub fn total_loss_mr(c: &MrLossComponents, w: &MrLossWeights) -> LossValue {
    let r = w.alpha_hat / 2.0;
    weighted(
        &c.values(),
        &[0.5, 0.5, r, r, w.beta_hat, w.beta_hat, w.gamma_hat, w.gamma_hat],
    )
}

/// Central finite differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both
/// vectors are (near) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn focal_single_cell() {
        let l = focal_loss(&[0.5], &[1.0]).unwrap();
        assert!((l.value - (-0.25 * 0.5f64.ln())).abs() < 1e-15);
        assert!((l.value - 0.1733).abs() < 1e-4);
    }

    #[test]
    fn focal_perfect_limit() {
        let target = [1.0, 0.0, 0.3, 0.0, 1.0];
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let pred: Vec<f64> = target.iter().map(|t| if *t == 1.0 { 1.0 - eps } else { eps }).collect();
            let v = focal_loss(&pred, &target).unwrap().value;
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn focal_rejects_out_of_range_and_mismatch() {
        assert!(focal_loss(&[1.0], &[1.0]).is_err());
        assert!(focal_loss(&[0.5], &[1.0, 0.0]).is_err());
        assert!(focal_heatmap_loss(&DenseGrid::zeros(1, 2, 2), &DenseGrid::zeros(1, 2, 3)).is_err());
    }

    #[test]
    fn focal_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target: Vec<f64> = (0..64)
            .map(|i| if i % 13 == 0 { 1.0 } else { rng.gen_range(0.0..0.9) })
            .collect();
        let pred: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..0.95)).collect();
        let l = focal_loss(&pred, &target).unwrap();
        let fd = central_difference(|p| focal_loss(p, &target).unwrap().value, &pred, 1e-5);
        assert!(relative_error(&l.gradient, &fd) < 1e-6);
    }

    #[test]
    fn pull_push_examples() {
        let (pull, push) = pull_push_loss(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(pull.value, 0.0);
        assert_eq!(push.value, 0.0);
        let (pull, push) = pull_push_loss(&[(0.0, 1.0), (0.5, 0.5)]);
        assert!((pull.value - 0.25).abs() < 1e-15);
        assert!((push.value - 1.0).abs() < 1e-15);
        let (pull, push) = pull_push_loss(&[]);
        assert_eq!((pull.value, push.value), (0.0, 0.0));
    }

    #[test]
    fn pull_push_gradients() {
        let pairs = [(0.1, 0.3), (0.6, 0.5), (1.2, 0.9), (0.05, -0.2)];
        let flat: Vec<f64> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
        let unflat = |x: &[f64]| x.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>();
        let (pull, push) = pull_push_loss(&pairs);
        let fd_pull = central_difference(|x| pull_push_loss(&unflat(x)).0.value, &flat, 1e-5);
        let fd_push = central_difference(|x| pull_push_loss(&unflat(x)).1.value, &flat, 1e-5);
        assert!(relative_error(&pull.gradient, &fd_pull) < 1e-6);
        assert!(relative_error(&push.gradient, &fd_push) < 1e-6);
    }

    #[test]
    fn offset_branches() {
        let smooth = OffsetLossKind::SmoothL1;
        assert_eq!(offset_loss(&[(0.3, 0.2)], &[(0.3, 0.2)], smooth).unwrap().value, 0.0);
        assert_eq!(offset_loss(&[(0.5, 0.0)], &[(0.0, 0.0)], smooth).unwrap().value, 0.125);
        assert_eq!(offset_loss(&[(2.0, 0.0)], &[(0.0, 0.0)], smooth).unwrap().value, 1.5);
        assert_eq!(
            offset_loss(&[(2.0, 0.0)], &[(0.0, 0.0)], OffsetLossKind::L1)
                .unwrap()
                .value,
            2.0
        );
        let two = offset_loss(&[(0.5, 0.0), (2.0, 0.0)], &[(0.0, 0.0); 2], smooth).unwrap();
        assert_eq!(two.value, (0.125 + 1.5) / 2.0);
        assert_eq!(two.gradient, vec![0.25, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn giou_examples() {
        let a = BoxGeometry::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(giou_loss(&a, &a).unwrap().value, 0.0);
        let b = BoxGeometry::new(2.0, 0.0, 3.0, 1.0);
        assert!((giou_loss(&a, &b).unwrap().value - 4.0 / 3.0).abs() < 1e-15);
        assert!(giou_loss(&BoxGeometry::new(0.0, 0.0, 0.0, 1.0), &a).is_err());
    }

    #[test]
    fn giou_gradient_overlapping_and_disjoint() {
        let target = BoxGeometry::new(2.0, 3.0, 10.0, 9.0);
        for pred in [[1.0, 4.0, 8.0, 12.0], [12.0, 1.0, 15.0, 2.5], [3.0, 4.0, 9.0, 8.0]] {
            let f = |x: &[f64]| {
                giou_loss(&BoxGeometry::new(x[0], x[1], x[2], x[3]), &target)
                    .unwrap()
                    .value
            };
            let l = giou_loss(&BoxGeometry::new(pred[0], pred[1], pred[2], pred[3]), &target).unwrap();
            let fd = central_difference(f, &pred, 1e-5);
            assert!(relative_error(&l.gradient, &fd) < 1e-6, "{pred:?}");
        }
    }

    #[test]
    fn totals() {
        let ones = SrLossComponents {
            corner_focal: 1.0,
            center_focal: 1.0,
            pull: 1.0,
            push: 1.0,
            corner_offset: 1.0,
            center_offset: 1.0,
        };
        assert!((total_loss_sr(&ones, &SrLossWeights::default()).value - 4.2).abs() < 1e-12);
        assert_eq!(
            total_loss_sr(&SrLossComponents::default(), &SrLossWeights::default()).value,
            0.0
        );
        let map: BTreeMap<String, f64> = MrLossComponents::NAMES.iter().map(|n| (n.to_string(), 1.0)).collect();
        let mr = MrLossComponents::from_map(&map).unwrap();
        assert_eq!(total_loss_mr(&mr, &MrLossWeights::default()).value, 5.5);
        let mut partial = map.clone();
        partial.remove("br_reg");
        assert!(matches!(MrLossComponents::from_map(&partial), Err(Error::Contract(_))));
    }
}
