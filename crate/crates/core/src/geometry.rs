//! Placement boxes, overlap metrics and the anchor grid.
//!
//! All coordinates are normalized to the host: `x` and `w` are in host-width
//! units, `y` and `h` in host-height units, with the origin at the top-left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest width or height a decoded box may have.
pub const MIN_BOX_SIDE: f64 = 1e-4;

/// Upper clamp on log-scale regression outputs before exponentiation.
const MAX_LOG_SIDE: f64 = 16.0;

/// Axis-aligned placement rectangle in normalized host coordinates.
///
/// Boxes may extend past the host canvas; only `w > 0`, `h > 0` and finiteness
/// are required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Box of the given size centered on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::input(format!("box has non-finite coordinates: {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::input(format!("box must have positive size: {self:?}")));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Half-open containment test `[x, x+w) × [y, y+h)`.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Derivative of `max(v, other)` with respect to `v`; ties split evenly.
fn d_max(v: f64, other: f64) -> f64 {
    step(v - other)
}

fn step(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Per-axis overlap and enclosure extents with their derivatives with
/// respect to the moving box's start and length.
struct AxisTerms {
    overlap: f64,
    d_overlap_start: f64,
    d_overlap_len: f64,
    enclose: f64,
    d_enclose_start: f64,
    d_enclose_len: f64,
}

fn axis_terms(a0: f64, alen: f64, b0: f64, blen: f64) -> AxisTerms {
    let a1 = a0 + alen;
    let b1 = b0 + blen;

    let lo = a0.max(b0);
    let hi = a1.min(b1);
    let raw = hi - lo;
    let overlap = raw.max(0.0);
    let gate = step(raw);
    // d(min(a1, b1))/d a1 is d_max(-a1, -b1).
    let d_hi_end = d_max(b1, a1);
    let d_lo_start = d_max(a0, b0);
    let d_overlap_start = gate * (d_hi_end - d_lo_start);
    let d_overlap_len = gate * d_hi_end;

    let enclose = a1.max(b1) - a0.min(b0);
    let d_ehi_end = d_max(a1, b1);
    let d_elo_start = d_max(b0, a0);
    let d_enclose_start = d_ehi_end - d_elo_start;
    let d_enclose_len = d_ehi_end;

    AxisTerms {
        overlap,
        d_overlap_start,
        d_overlap_len,
        enclose,
        d_enclose_start,
        d_enclose_len,
    }
}

/// IoU together with its gradient with respect to `a`'s `(x, y, w, h)`.
///
/// At exactly coincident edges the derivative is the mean of the two
/// one-sided derivatives, which is also what a symmetric difference quotient
/// converges to.
pub fn iou_grad(a: &BBox, b: &BBox) -> (f64, [f64; 4]) {
    let (iou, d_iou, _, _) = overlap_terms(a, b);
    (iou, d_iou)
}

/// Returns (iou, d_iou, enclosing diag², d_diag²).
fn overlap_terms(a: &BBox, b: &BBox) -> (f64, [f64; 4], f64, [f64; 4]) {
    let tx = axis_terms(a.x, a.w, b.x, b.w);
    let ty = axis_terms(a.y, a.h, b.y, b.h);

    let inter = tx.overlap * ty.overlap;
    let union = a.area() + b.area() - inter;

    let d_inter = [
        tx.d_overlap_start * ty.overlap,
        ty.d_overlap_start * tx.overlap,
        tx.d_overlap_len * ty.overlap,
        ty.d_overlap_len * tx.overlap,
    ];
    let d_union = [
        -d_inter[0],
        -d_inter[1],
        a.h - d_inter[2],
        a.w - d_inter[3],
    ];

    let iou = inter / union;
    let mut d_iou = [0.0; 4];
    for k in 0..4 {
        d_iou[k] = (d_inter[k] * union - inter * d_union[k]) / (union * union);
    }

    let diag2 = tx.enclose * tx.enclose + ty.enclose * ty.enclose;
    let d_diag2 = [
        2.0 * tx.enclose * tx.d_enclose_start,
        2.0 * ty.enclose * ty.d_enclose_start,
        2.0 * tx.enclose * tx.d_enclose_len,
        2.0 * ty.enclose * ty.d_enclose_len,
    ];
    (iou, d_iou, diag2, d_diag2)
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// Distance-IoU: IoU minus the squared center distance over the squared
/// diagonal of the smallest enclosing box. Lies in `[-1, 1]`.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    diou_grad(a, b).0
}

/// DIoU and its analytic gradient with respect to `a`'s `(x, y, w, h)`,
/// holding `b` fixed.
pub fn diou_grad(a: &BBox, b: &BBox) -> (f64, [f64; 4]) {
    let (iou, d_iou, diag2, d_diag2) = overlap_terms(a, b);
    if diag2 <= 0.0 {
        // Unreachable for valid boxes; two identical points are identical boxes.
        return (1.0, [0.0; 4]);
    }

    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let ex = acx - bcx;
    let ey = acy - bcy;
    let rho2 = ex * ex + ey * ey;
    let d_rho2 = [2.0 * ex, 2.0 * ey, ex, ey];

    let penalty = rho2 / diag2;
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_penalty = (d_rho2[k] * diag2 - rho2 * d_diag2[k]) / (diag2 * diag2);
        grad[k] = d_iou[k] - d_penalty;
    }
    (iou - penalty, grad)
}

/// Normalized aspect-ratio feature `(1 - min/max)^2`: zero for square
/// stickers, approaching one as they elongate.
pub fn aspect_ratio_feature(w: f64, h: f64) -> Result<f64> {
    if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
        return Err(Error::input(format!("sticker dimensions must be positive, got {w}x{h}")));
    }
    let r = 1.0 - w.min(h) / w.max(h);
    Ok(r * r)
}

/// One candidate placement cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub scale_index: usize,
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub center_x: f64,
    pub center_y: f64,
}

/// Multi-scale anchor grid. Anchors are laid out scale by scale, row-major
/// within a scale, matching the memory order of the feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    scales: Vec<(usize, usize)>,
    anchors: Vec<Anchor>,
}

impl AnchorGrid {
    pub fn new(scales: &[(usize, usize)]) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::input("anchor grid needs at least one scale"));
        }
        let mut anchors = Vec::with_capacity(scales.iter().map(|(r, c)| r * c).sum());
        for (scale_index, &(rows, cols)) in scales.iter().enumerate() {
            if rows == 0 || cols == 0 {
                return Err(Error::input(format!("scale {scale_index} has an empty dimension: {rows}x{cols}")));
            }
            for row in 0..rows {
                for col in 0..cols {
                    anchors.push(Anchor {
                        scale_index,
                        row,
                        col,
                        rows,
                        cols,
                        center_x: (col as f64 + 0.5) / cols as f64,
                        center_y: (row as f64 + 0.5) / rows as f64,
                    });
                }
            }
        }
        Ok(AnchorGrid {
            scales: scales.to_vec(),
            anchors,
        })
    }

    pub fn scales(&self) -> &[(usize, usize)] {
        &self.scales
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Index of the first anchor belonging to `scale_index`.
    pub fn scale_offset(&self, scale_index: usize) -> usize {
        self.scales[..scale_index].iter().map(|(r, c)| r * c).sum()
    }
}

pub fn build_anchor_grid(scales: &[(usize, usize)]) -> Result<AnchorGrid> {
    AnchorGrid::new(scales)
}

/// Marks every anchor whose center falls inside `gt`. May be all-false.
pub fn assign_positives(grid: &AnchorGrid, gt: &BBox) -> Vec<bool> {
    grid.anchors
        .iter()
        .map(|a| gt.contains(a.center_x, a.center_y))
        .collect()
}

/// Per-anchor regression target: center offset in cell units and log size
/// in host units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegressionTarget {
    pub dx: f64,
    pub dy: f64,
    pub sw: f64,
    pub sh: f64,
}

impl RegressionTarget {
    pub fn as_array(&self) -> [f64; 4] {
        [self.dx, self.dy, self.sw, self.sh]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        RegressionTarget {
            dx: v[0],
            dy: v[1],
            sw: v[2],
            sh: v[3],
        }
    }
}

pub fn encode_target(anchor: &Anchor, gt: &BBox) -> RegressionTarget {
    let (cx, cy) = gt.center();
    RegressionTarget {
        dx: (cx - anchor.center_x) * anchor.cols as f64,
        dy: (cy - anchor.center_y) * anchor.rows as f64,
        sw: gt.w.ln(),
        sh: gt.h.ln(),
    }
}

pub fn decode_placement(anchor: &Anchor, t: &RegressionTarget) -> BBox {
    decode_with_jacobian(anchor, t).0
}

/// Decoded box plus the diagonal-block Jacobian `d(x, y, w, h) / d(dx, dy, sw, sh)`,
/// returned as `[dx/ddx, dx/dsw, dy/ddy, dy/dsh, dw/dsw, dh/dsh]`.
pub(crate) fn decode_with_jacobian(anchor: &Anchor, t: &RegressionTarget) -> (BBox, [f64; 6]) {
    let cx = anchor.center_x + t.dx / anchor.cols as f64;
    let cy = anchor.center_y + t.dy / anchor.rows as f64;
    let (w, dw) = log_side(t.sw);
    let (h, dh) = log_side(t.sh);
    let b = BBox {
        x: cx - 0.5 * w,
        y: cy - 0.5 * h,
        w,
        h,
    };
    let jac = [
        1.0 / anchor.cols as f64,
        -0.5 * dw,
        1.0 / anchor.rows as f64,
        -0.5 * dh,
        dw,
        dh,
    ];
    (b, jac)
}

fn log_side(s: f64) -> (f64, f64) {
    let v = s.min(MAX_LOG_SIDE).exp();
    if v < MIN_BOX_SIDE || s > MAX_LOG_SIDE {
        (v.max(MIN_BOX_SIDE), 0.0)
    } else {
        (v, v)
    }
}
