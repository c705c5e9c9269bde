//! Exact rotated-rectangle IoU in the bird's eye view via convex polygon
//! clipping (Sutherland-Hodgman) and the shoelace area.

use super::BoxBEV;

type Pt = (f64, f64);

fn corners(b: &BoxBEV) -> [Pt; 4] {
    let (c, s) = (b.yaw.cos(), b.yaw.sin());
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let rot = |x: f64, y: f64| (b.cx + x * c - y * s, b.cy + x * s + y * c);
    [
        rot(hl, hw),
        rot(-hl, hw),
        rot(-hl, -hw),
        rot(hl, -hw),
    ]
}

fn polygon_area(poly: &[Pt]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Clip `subject` against the half-plane on the left of edge `a -> b`
/// (counter-clockwise clip polygon).
fn clip_edge(subject: &[Pt], a: Pt, b: Pt) -> Vec<Pt> {
    let inside = |p: Pt| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
    let intersect = |p: Pt, q: Pt| -> Pt {
        // Line a-b with line p-q.
        let a1 = b.1 - a.1;
        let b1 = a.0 - b.0;
        let c1 = a1 * a.0 + b1 * a.1;
        let a2 = q.1 - p.1;
        let b2 = p.0 - q.0;
        let c2 = a2 * p.0 + b2 * p.1;
        let det = a1 * b2 - a2 * b1;
        ((b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det)
    };
    let mut out = Vec::with_capacity(subject.len() + 1);
    for i in 0..subject.len() {
        let cur = subject[i];
        let prev = subject[(i + subject.len() - 1) % subject.len()];
        match (inside(cur), inside(prev)) {
            (true, true) => out.push(cur),
            (true, false) => {
                out.push(intersect(prev, cur));
                out.push(cur);
            }
            (false, true) => out.push(intersect(prev, cur)),
            (false, false) => {}
        }
    }
    out
}

fn intersection_area(a: &BoxBEV, b: &BoxBEV) -> f64 {
    let clip = corners(b); // counter-clockwise by construction
    let mut poly: Vec<Pt> = corners(a).to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_edge(&poly, clip[i], clip[(i + 1) % 4]);
    }
    polygon_area(&poly)
}

/// Intersection over union of two oriented BEV rectangles, in [0, 1].
pub fn rotated_iou(a: &BoxBEV, b: &BoxBEV) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bb(cx: f64, cy: f64, l: f64, w: f64, yaw: f64) -> BoxBEV {
        BoxBEV::new(cx, cy, l, w, yaw).unwrap()
    }

    #[test]
    fn identical_boxes() {
        let a = bb(1.0, -2.0, 4.0, 2.0, 0.7);
        assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        let a = bb(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bb(10.0, 0.0, 1.0, 1.0, 1.0);
        assert_eq!(rotated_iou(&a, &b), 0.0);
    }

    #[test]
    fn offset_squares_give_one_third() {
        let a = bb(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bb(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((rotated_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_and_self_iou_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let a = bb(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.3..5.0),
                rng.gen_range(0.3..5.0),
                rng.gen_range(-3.14..3.14),
            );
            let b = bb(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.3..5.0),
                rng.gen_range(0.3..5.0),
                rng.gen_range(-3.14..3.14),
            );
            let ab = rotated_iou(&a, &b);
            let ba = rotated_iou(&b, &a);
            assert!((ab - ba).abs() < 1e-12, "asymmetry: {ab} vs {ba}");
            assert!((0.0..=1.0).contains(&ab));
            assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let a = bb(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(-3.0..3.0),
            );
            let b = bb(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(-3.0..3.0),
            );
            let base = rotated_iou(&a, &b);
            let ang: f64 = rng.gen_range(-3.0..3.0);
            let (tx, ty) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let xf = |x: &BoxBEV| {
                let (c, s) = (ang.cos(), ang.sin());
                bb(
                    x.cx * c - x.cy * s + tx,
                    x.cx * s + x.cy * c + ty,
                    x.length,
                    x.width,
                    x.yaw + ang,
                )
            };
            let moved = rotated_iou(&xf(&a), &xf(&b));
            assert!(
                (base - moved).abs() < 1e-9,
                "rigid transform changed IoU: {base} vs {moved}"
            );
        }
    }
}
