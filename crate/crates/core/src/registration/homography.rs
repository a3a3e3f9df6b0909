//! Projective transforms: exact four-point solve, normalized DLT and RANSAC.

use nalgebra::{DMatrix, Matrix3, Point2, SMatrix, SVector, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::par;

const MIN_ABS_DET: f64 = 1e-12;

/// 3x3 projective transform with `h[2][2] == 1`. Maps source (target-frame)
/// coordinates to destination (reference-frame) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography(Matrix3<f64>);

impl TryFrom<[f64; 9]> for Homography {
    type Error = RegistrationError;

    fn try_from(v: [f64; 9]) -> Result<Self, Self::Error> {
        Homography::new(Matrix3::from_row_slice(&v))
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

impl Homography {
    /// Normalize so the bottom-right entry is 1; rejects singular matrices.
    pub fn new(m: Matrix3<f64>) -> Result<Self, RegistrationError> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < 1e-15 || m.iter().any(|v| !v.is_finite()) {
            return Err(RegistrationError::Degenerate(
                "homography bottom-right entry vanishes".into(),
            ));
        }
        let m = m / s;
        if m.determinant().abs() <= MIN_ABS_DET {
            return Err(RegistrationError::Degenerate("singular homography".into()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn inverse(&self) -> Self {
        let inv = self.0.try_inverse().expect("constructor guarantees invertibility");
        Self(inv / inv[(2, 2)])
    }

    /// `other` applied after `self`, i.e. `other * self`.
    pub fn then(&self, other: &Homography) -> Result<Self, RegistrationError> {
        Self::new(other.0 * self.0)
    }

    /// Map a point; `None` when it lands on the line at infinity.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let v = self.0 * Vector3::new(x, y, 1.0);
        if v.z.abs() < 1e-12 {
            return None;
        }
        Some((v.x / v.z, v.y / v.z))
    }

    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// True when some three of the four points are (nearly) collinear.
pub(crate) fn has_collinear_triple(pts: &[Point2<f64>; 4]) -> bool {
    let extent = pts
        .iter()
        .flat_map(|p| pts.iter().map(move |q| (p - q).norm()))
        .fold(0.0, f64::max);
    if extent == 0.0 {
        return true;
    }
    let tol = 1e-9 * extent * extent;
    const TRIPLES: [(usize, usize, usize); 4] = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    TRIPLES
        .iter()
        .any(|&(i, j, k)| cross(&pts[i], &pts[j], &pts[k]).abs() <= tol)
}

/// Similarity transform taking points to zero mean and mean distance sqrt(2).
fn normalizing_transform(pts: &[Point2<f64>]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist <= 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform_points(t: &Matrix3<f64>, pts: &[Point2<f64>]) -> Vec<Point2<f64>> {
    pts.iter()
        .map(|p| {
            let v = t * Vector3::new(p.x, p.y, 1.0);
            Point2::new(v.x / v.z, v.y / v.z)
        })
        .collect()
}

/// Exact homography mapping each `src[i]` onto `dst[i]`.
pub fn homography_from_quad(
    src: &[Point2<f64>; 4],
    dst: &[Point2<f64>; 4],
) -> Result<Homography, RegistrationError> {
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(RegistrationError::Degenerate(
            "three of the four anchor points are collinear".into(),
        ));
    }
    let ts = normalizing_transform(src).expect("non-collinear points have spread");
    let td = normalizing_transform(dst).expect("non-collinear points have spread");
    let s = transform_points(&ts, src);
    let d = transform_points(&td, dst);

    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y, u, v) = (s[i].x, s[i].y, d[i].x, d[i].y);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .lu()
        .solve(&b)
        .ok_or_else(|| RegistrationError::Degenerate("singular anchor system".into()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Homography::new(td_inv * hn * ts)
}

/// Least-squares homography from `n >= 4` correspondences (normalized DLT).
pub fn fit_homography_dlt(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
) -> Result<Homography, RegistrationError> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(RegistrationError::InsufficientMatches { found: n, needed: 4 });
    }
    let degenerate = || RegistrationError::Degenerate("points have no spread".into());
    let ts = normalizing_transform(src).ok_or_else(degenerate)?;
    let td = normalizing_transform(dst).ok_or_else(degenerate)?;
    let s = transform_points(&ts, src);
    let d = transform_points(&td, dst);

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let (x, y, u, v) = (s[i].x, s[i].y, d[i].x, d[i].y);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| RegistrationError::Degenerate("SVD did not converge".into()))?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &sv)| if sv < acc.1 { (i, sv) } else { acc });
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Homography::new(td_inv * hn * ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol_px: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_tol_px: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// RMS of forward and backward transfer distances for one correspondence.
fn symmetric_transfer_error(
    h: &Homography,
    h_inv: &Homography,
    s: &Point2<f64>,
    d: &Point2<f64>,
) -> f64 {
    let fwd = h
        .apply(s.x, s.y)
        .map_or(f64::INFINITY, |(x, y)| (x - d.x).powi(2) + (y - d.y).powi(2));
    let bwd = h_inv
        .apply(d.x, d.y)
        .map_or(f64::INFINITY, |(x, y)| (x - s.x).powi(2) + (y - s.y).powi(2));
    (0.5 * (fwd + bwd)).sqrt()
}

fn inlier_mask(
    h: &Homography,
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    tol: f64,
) -> Vec<bool> {
    let h_inv = h.inverse();
    src.iter()
        .zip(dst)
        .map(|(s, d)| symmetric_transfer_error(h, &h_inv, s, d) <= tol)
        .collect()
}

fn subset(pts: &[Point2<f64>], mask: &[bool]) -> Vec<Point2<f64>> {
    pts.iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect()
}

/// Random stream for one RANSAC iteration; independent of evaluation order.
fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Robust homography from `src -> dst` correspondences.
///
/// Every iteration draws four correspondences from its own seeded stream, so
/// the result is identical whether iterations run in parallel or not. The
/// winning consensus set (most inliers, lowest iteration index on ties) is
/// re-fitted by least squares until the inlier set stops growing.
pub fn estimate_homography_ransac(
    src: &[Point2<f64>],
    dst: &[Point2<f64>],
    params: &RansacParams,
) -> Result<RansacResult, RegistrationError> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(RegistrationError::InsufficientMatches { found: n, needed: 4 });
    }
    let tol = params.inlier_tol_px;
    let candidates = par::map_range(params.iterations.max(1), |it| {
        let mut rng = iteration_rng(params.seed, it);
        let idx = sample(&mut rng, n, 4);
        let s = [src[idx.index(0)], src[idx.index(1)], src[idx.index(2)], src[idx.index(3)]];
        let d = [dst[idx.index(0)], dst[idx.index(1)], dst[idx.index(2)], dst[idx.index(3)]];
        let h = homography_from_quad(&s, &d).ok()?;
        let count = inlier_mask(&h, src, dst, tol).iter().filter(|&&b| b).count();
        Some((count, h))
    });
    let mut best: Option<(usize, Homography)> = None;
    for (count, h) in candidates.into_iter().flatten() {
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, h));
        }
    }
    let (_, mut h) = best.ok_or_else(|| {
        RegistrationError::Degenerate("every sampled quadruple was collinear".into())
    })?;
    let mut mask = inlier_mask(&h, src, dst, tol);
    let mut count = mask.iter().filter(|&&b| b).count();
    for _ in 0..5 {
        if count < 4 {
            break;
        }
        let Ok(refit) = fit_homography_dlt(&subset(src, &mask), &subset(dst, &mask)) else {
            break;
        };
        let refit_mask = inlier_mask(&refit, src, dst, tol);
        let refit_count = refit_mask.iter().filter(|&&b| b).count();
        if refit_count < count {
            break;
        }
        let grew = refit_count > count;
        h = refit;
        mask = refit_mask;
        count = refit_count;
        if !grew {
            break;
        }
    }
    Ok(RansacResult {
        homography: h,
        inliers: mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    fn known_h() -> Homography {
        Homography::new(Matrix3::new(
            1.05, 0.08, 12.0, -0.04, 0.97, -7.5, 1.5e-4, -2.0e-4, 1.0,
        ))
        .unwrap()
    }

    #[test]
    fn quad_unit_square_identity() {
        let sq = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        let h = homography_from_quad(&sq, &sq).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn quad_translation() {
        let sq = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        let moved = sq.map(|q| p(q.x + 3.5, q.y - 2.0));
        let h = homography_from_quad(&sq, &moved).unwrap();
        assert!(h.max_abs_diff(&Homography::translation(3.5, -2.0)) < 1e-12);
    }

    #[test]
    fn quad_to_trapezoid_forward_residual() {
        let src = [p(0.0, 0.0), p(100.0, 0.0), p(100.0, 100.0), p(0.0, 100.0)];
        let dst = [p(10.0, 5.0), p(90.0, 0.0), p(95.0, 100.0), p(5.0, 95.0)];
        let h = homography_from_quad(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let (x, y) = h.apply(s.x, s.y).unwrap();
            assert!((x - d.x).abs() < 1e-9 && (y - d.y).abs() < 1e-9, "{x},{y} vs {d}");
        }
    }

    #[test]
    fn quad_collinear_is_degenerate() {
        let src = [p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0), p(0.0, 5.0)];
        let dst = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        assert!(matches!(
            homography_from_quad(&src, &dst),
            Err(RegistrationError::Degenerate(_))
        ));
    }

    #[test]
    fn dlt_recovers_exact_homography() {
        let h = known_h();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src: Vec<_> = (0..20)
            .map(|_| p(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0)))
            .collect();
        let dst: Vec<_> = src
            .iter()
            .map(|q| {
                let (x, y) = h.apply(q.x, q.y).unwrap();
                p(x, y)
            })
            .collect();
        let est = fit_homography_dlt(&src, &dst).unwrap();
        assert!(est.max_abs_diff(&h) < 1e-6, "{}", est.max_abs_diff(&h));
    }

    #[test]
    fn ransac_needs_four() {
        let pts = vec![p(0.0, 0.0); 3];
        assert!(matches!(
            estimate_homography_ransac(&pts, &pts, &RansacParams::default()),
            Err(RegistrationError::InsufficientMatches { found: 3, .. })
        ));
    }

    #[test]
    fn ransac_all_collinear_is_degenerate() {
        let src: Vec<_> = (0..10).map(|i| p(i as f64, 2.0 * i as f64)).collect();
        let r = estimate_homography_ransac(&src, &src, &RansacParams::default());
        assert!(matches!(r, Err(RegistrationError::Degenerate(_))));
    }

    #[test]
    fn ransac_with_outliers() {
        let h = known_h();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for _ in 0..20 {
            let q = p(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0));
            let (x, y) = h.apply(q.x, q.y).unwrap();
            src.push(q);
            dst.push(p(x, y));
        }
        for _ in 0..20 {
            src.push(p(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0)));
            dst.push(p(rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0)));
        }
        let params = RansacParams {
            seed: 3,
            ..Default::default()
        };
        let r = estimate_homography_ransac(&src, &dst, &params).unwrap();
        let recovered = r.inliers[..20].iter().filter(|&&b| b).count();
        assert!(recovered >= 19);
        assert!(r.homography.max_abs_diff(&h) < 1e-3);
        // determinism
        let again = estimate_homography_ransac(&src, &dst, &params).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn serde_round_trip_normalizes() {
        let h = known_h();
        let json = serde_json::to_string(&h).unwrap();
        let back: Homography = serde_json::from_str(&json).unwrap();
        assert!(back.max_abs_diff(&h) < 1e-15);
        assert!(serde_json::from_str::<Homography>("[0,0,0,0,0,0,0,0,0]").is_err());
    }
}
