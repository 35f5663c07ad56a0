//! Plain 2D helpers over `[f64; 2]` (meters).

pub type Point = [f64; 2];

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

#[inline]
pub fn unit(angle: f64) -> Point {
    [angle.cos(), angle.sin()]
}

/// Counter-clockwise rotation by `angle` radians.
#[inline]
pub fn rotate(p: Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, lerp(a, b, t))
}

/// Intersection of the lines `p + s·d` and `q + t·e`, if not parallel.
pub fn line_intersection(p: Point, d: Point, q: Point, e: Point) -> Option<(Point, f64, f64)> {
    let den = cross(d, e);
    if den.abs() < 1e-9 {
        return None;
    }
    let w = sub(q, p);
    let s = cross(w, e) / den;
    let t = cross(w, d) / den;
    Some((add(p, scale(d, s)), s, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_preserves_length() {
        let p = rotate([3.0, 4.0], 1.234);
        assert!((norm(p) - 5.0).abs() < 1e-12);
        let q = rotate([1.0, 0.0], std::f64::consts::FRAC_PI_2);
        assert!(q[0].abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        assert_eq!(point_segment_distance([5.0, 3.0], [0.0, 0.0], [10.0, 0.0]), 3.0);
        assert_eq!(point_segment_distance([-3.0, 4.0], [0.0, 0.0], [10.0, 0.0]), 5.0);
    }

    #[test]
    fn perpendicular_lines_meet() {
        let (x, s, t) = line_intersection([0.0, 0.0], [1.0, 0.0], [5.0, -5.0], [0.0, 1.0]).unwrap();
        assert_eq!(x, [5.0, 0.0]);
        assert_eq!((s, t), (5.0, 5.0));
        assert!(line_intersection([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0]).is_none());
    }
}
