use nalgebra::{Vector2, Vector3};

use super::cone::ContactWrench;
use super::ContactError;

/// Zero-moment point `p = (n × τ_O) / (n · f)` of world-aligned wrenches
/// applied at the given positions, in the plane through the origin with
/// normal `n`.
pub fn zmp(wrenches: &[(Vector3<f64>, ContactWrench)], n: &Vector3<f64>, tol: f64) -> Result<Vector3<f64>, ContactError> {
    let mut f = Vector3::zeros();
    let mut tau = Vector3::zeros();
    for (p, w) in wrenches {
        let fi = Vector3::new(w[0], w[1], w[2]);
        f += fi;
        tau += Vector3::new(w[3], w[4], w[5]) + p.cross(&fi);
    }
    let nf = n.dot(&f);
    if !(nf > tol) {
        return Err(ContactError::DegenerateZmp { normal_force: nf });
    }
    Ok(n.cross(&tau) / nf)
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain). Collinear points are
/// dropped, so a degenerate input yields a segment or a single point.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<_> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    hull
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

/// Whether `p` lies in the convex hull of `contact_points`, within `tol`
/// metres. Collinear supports reduce to a segment and a single support to a point.
pub fn in_support(p: &Vector2<f64>, contact_points: &[Vector2<f64>], tol: f64) -> bool {
    let hull = convex_hull(contact_points);
    match hull.len() {
        0 => false,
        1 => (p - hull[0]).norm() <= tol,
        2 => segment_distance(p, &hull[0], &hull[1]) <= tol,
        k => {
            let inside = (0..k).all(|i| cross(&hull[i], &hull[(i + 1) % k], p) >= 0.0);
            inside || (0..k).any(|i| segment_distance(p, &hull[i], &hull[(i + 1) % k]) <= tol)
        }
    }
}
