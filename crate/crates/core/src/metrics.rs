//! PSNR, SSIM and an oracle-correspondence epipolar consistency score.

use alloc::vec::Vec;

use crate::geometry::{project, Camera, Mat3, Vec2, Vec3};
use crate::grid::{Image, Mask};
use crate::{Error, Result};

/// Reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DEFAULT_EPIPOLAR_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub epipolar_score: Option<f64>,
    pub pixel_support: usize,
}

/// Peak-1.0 PSNR over all channels, optionally restricted to `mask`
/// (the MSE then averages over masked pixels only), capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<f64> {
    Ok(psnr_with_support(a, b, mask)?.0)
}

pub fn psnr_with_support(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<(f64, usize)> {
    b.ensure_dims(a.width(), a.height())?;
    if let Some(m) = mask {
        m.ensure_dims(a.width(), a.height())?;
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (i, (pa, pb)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        if mask.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        for k in 0..3 {
            let d = pa[k] as f64 - pb[k] as f64;
            sum += d * d;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("PSNR needs at least one pixel"));
    }
    Ok((psnr_from_mse(sum / (3 * n) as f64), n))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * libm::log10(mse)).min(PSNR_CAP)
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = libm::exp(-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable 11-tap Gaussian filter over valid positions only.
fn filter_valid(plane: &[f64], width: usize, height: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut rows = alloc::vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * plane[y * width + x + k]).sum();
        }
    }
    let mut out = alloc::vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| win[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03, peak 1),
/// averaged over valid window positions and the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    b.ensure_dims(a.width(), a.height())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(alloc::format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..3 {
        let pa: Vec<f64> = a.as_slice().iter().map(|p| p[k] as f64).collect();
        let pb: Vec<f64> = b.as_slice().iter().map(|p| p[k] as f64).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, w, h, &win);
        let mu_b = filter_valid(&pb, w, h, &win);
        let e_aa = filter_valid(&aa, w, h, &win);
        let e_bb = filter_valid(&bb, w, h, &win);
        let e_ab = filter_valid(&ab, w, h, &win);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn skew(t: &Vec3) -> Mat3 {
    Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// `F` with `x_bᵀ F x_a = 0` for homogeneous pixels of the same world point.
pub fn fundamental_matrix(cam_a: &Camera, cam_b: &Camera) -> Result<Mat3> {
    let baseline = cam_a.center() - cam_b.center();
    if baseline.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry(
            "camera centers coincide, epipolar geometry is undefined".into(),
        ));
    }
    let rb = cam_b.pose.rotation();
    let r = rb.tr_mul(cam_a.pose.rotation());
    let t = rb.tr_mul(&baseline);
    let essential = skew(&t) * r;
    let ka_inv = cam_a
        .intrinsics
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular intrinsics".into()))?;
    let kb_inv = cam_b
        .intrinsics
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular intrinsics".into()))?;
    Ok(kb_inv.transpose() * essential * ka_inv)
}

fn line_distance(line: &Vec3, p: &Vec2) -> f64 {
    let n = libm::hypot(line.x, line.y);
    if n == 0.0 {
        return f64::INFINITY;
    }
    (line.x * p.x + line.y * p.y + line.z).abs() / n
}

/// Larger of the two point-to-epipolar-line distances, in pixels.
pub fn symmetric_epipolar_distance(f: &Mat3, pa: &Vec2, pb: &Vec2) -> f64 {
    let xa = Vec3::new(pa.x, pa.y, 1.0);
    let xb = Vec3::new(pb.x, pb.y, 1.0);
    let in_b = line_distance(&(f * xa), pb);
    let in_a = line_distance(&(f.transpose() * xb), pa);
    in_b.max(in_a)
}

/// Fraction of correspondences whose symmetric epipolar distance is within
/// `threshold` pixels.
pub fn epipolar_consistency(
    correspondences: &[(Vec2, Vec2)],
    cam_a: &Camera,
    cam_b: &Camera,
    threshold: f64,
) -> Result<f64> {
    if correspondences.is_empty() {
        return Err(Error::invalid("epipolar score needs at least one correspondence"));
    }
    let f = fundamental_matrix(cam_a, cam_b)?;
    let ok = correspondences
        .iter()
        .filter(|(a, b)| symmetric_epipolar_distance(&f, a, b) <= threshold)
        .count();
    Ok(ok as f64 / correspondences.len() as f64)
}

/// Pixel pairs of world points seen in front of both cameras.
pub fn oracle_correspondences(points: &[Vec3], cam_a: &Camera, cam_b: &Camera) -> Vec<(Vec2, Vec2)> {
    points
        .iter()
        .filter_map(|p| {
            let (pa, za) = project(p, cam_a);
            let (pb, zb) = project(p, cam_b);
            (za > 0.0 && zb > 0.0).then_some((pa, pb))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle, Intrinsics, Pose};
    use crate::grid::Grid;

    #[test]
    fn psnr_examples() {
        let a = Grid::filled(4, 4, [0.3f32, 0.5, 0.7]);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
        // 0.1 on every channel is exactly representable after the f64 cast
        // only up to f32 rounding, so compare with a tolerance.
        let zero = Grid::filled(4, 4, [0.0f32; 3]);
        let tenth = Grid::filled(4, 4, [0.1f32; 3]);
        assert!((psnr(&zero, &tenth, None).unwrap() - 20.0).abs() < 1e-5);
        let one = Grid::filled(4, 4, [1.0f32; 3]);
        assert_eq!(psnr(&zero, &one, None).unwrap(), 0.0);
        let empty = Grid::filled(4, 4, false);
        assert!(psnr(&a, &a, Some(&empty)).is_err());
    }

    #[test]
    fn masked_psnr_counts_masked_pixels() {
        let a = Grid::from_fn(4, 1, |x, _| if x == 0 { [1.0f32; 3] } else { [0.0; 3] });
        let b = Grid::filled(4, 1, [0.0f32; 3]);
        let m = Grid::from_vec(4, 1, alloc::vec![true, true, false, false]).unwrap();
        let (p, n) = psnr_with_support(&a, &b, Some(&m)).unwrap();
        assert_eq!(n, 2);
        assert!((p - 10.0 * libm::log10(2.0)).abs() < 1e-12);
    }

    #[test]
    fn ssim_examples() {
        let img = Grid::from_fn(16, 13, |x, y| [x as f32 / 16.0, y as f32 / 13.0, 0.5]);
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        let neg = img.map(|c| [1.0 - c[0], 1.0 - c[1], 1.0 - c[2]]);
        assert!(ssim(&img, &neg).unwrap() < 1.0);
        let small = Grid::filled(10, 20, [0.0f32; 3]);
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn ssim_constant_closed_form() {
        let (x, y) = (0.25f32, 0.75f32);
        let a = Grid::filled(12, 12, [x; 3]);
        let b = Grid::filled(12, 12, [y; 3]);
        let (x, y) = (x as f64, y as f64);
        let c1 = 1e-4;
        let expected = (2.0 * x * y + c1) / (x * x + y * y + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn fundamental_matrix_vanishes_on_true_pairs() {
        let k = Intrinsics::new(120.0, 110.0, 60.0, 45.0, 128, 96).unwrap();
        let a = Camera::new(k, Pose::identity());
        let b = Camera::new(
            k,
            Pose::new(axis_angle(Vec3::new(0.2, 1.0, 0.1), 0.3), Vec3::new(0.5, -0.1, 0.2)).unwrap(),
        );
        let f = fundamental_matrix(&a, &b).unwrap();
        let pts = [Vec3::new(0.3, 0.2, 3.0), Vec3::new(-1.0, 0.5, 5.0), Vec3::new(0.0, -0.4, 2.0)];
        for (pa, pb) in oracle_correspondences(&pts, &a, &b) {
            assert!(symmetric_epipolar_distance(&f, &pa, &pb) < 1e-6);
        }
        assert!(matches!(fundamental_matrix(&a, &a), Err(Error::DegenerateGeometry(_))));
        assert!(epipolar_consistency(&[], &a, &b, 2.0).is_err());
    }

    #[test]
    fn behind_camera_points_are_dropped() {
        let k = Intrinsics::centered(100.0, 64, 64).unwrap();
        let a = Camera::new(k, Pose::identity());
        let b = Camera::new(k, Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)));
        let corr = oracle_correspondences(&[Vec3::new(0.0, 0.0, -2.0)], &a, &b);
        assert!(corr.is_empty());
        assert!(epipolar_consistency(&corr, &a, &b, 2.0).is_err());
    }
}
