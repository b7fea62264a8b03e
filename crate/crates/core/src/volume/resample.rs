use super::{Dims, Mask, Spacing, Volume};

/// `ceil(n · old / new)` per axis, never below one voxel.
pub fn resampled_dims(dims: Dims, old: &Spacing, new: &Spacing) -> Dims {
    let f = |n: usize, o: f64, t: f64| (((n as f64) * o / t) - 1e-9).ceil().max(1.0) as usize;
    Dims::new(
        f(dims.nx, old.dx, new.dx),
        f(dims.ny, old.dy, new.dy),
        f(dims.nz, old.dz, new.dz),
    )
}

fn nn_lookup(n_new: usize, n_old: usize, old: f64, new: f64) -> Vec<usize> {
    (0..n_new)
        .map(|i| {
            let src = ((i as f64 + 0.5) * new / old).floor() as usize;
            src.min(n_old - 1)
        })
        .collect()
}

/// Nearest-neighbor resampling of a mask onto a grid with `target` spacing.
///
/// The grid origin corner is shared between input and output, so the output
/// voxel `i` samples the input voxel containing the point `(i + 0.5) · new`.
pub fn resample_isotropic(m: &Mask, target: Spacing) -> Mask {
    let old = m.spacing();
    let dims = m.dims();
    if old.approx_eq(&target, 1e-9) {
        return m.clone();
    }
    let nd = resampled_dims(dims, &old, &target);
    let lx = nn_lookup(nd.nx, dims.nx, old.dx, target.dx);
    let ly = nn_lookup(nd.ny, dims.ny, old.dy, target.dy);
    let lz = nn_lookup(nd.nz, dims.nz, old.dz, target.dz);
    let src = m.bits();
    let mut bits = Vec::with_capacity(nd.len());
    for &z in &lz {
        for &y in &ly {
            let row = dims.index(0, y, z);
            bits.extend(lx.iter().map(|&x| src[row + x]));
        }
    }
    Mask::new(nd, target, bits, m.label()).expect("resampled grid is consistent")
}

fn linear_lookup(n_new: usize, n_old: usize, old: f64, new: f64) -> Vec<(usize, usize, f32)> {
    (0..n_new)
        .map(|i| {
            let u = ((i as f64 + 0.5) * new / old - 0.5).clamp(0.0, (n_old - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(n_old - 1);
            (i0, i1, (u - i0 as f64) as f32)
        })
        .collect()
}

/// Trilinear resampling of an HU volume with the same grid convention as
/// [`resample_isotropic`].
pub fn resample_volume_trilinear(v: &Volume, target: Spacing) -> Volume {
    let old = v.spacing();
    let dims = v.dims();
    let nd = resampled_dims(dims, &old, &target);
    let lx = linear_lookup(nd.nx, dims.nx, old.dx, target.dx);
    let ly = linear_lookup(nd.ny, dims.ny, old.dy, target.dy);
    let lz = linear_lookup(nd.nz, dims.nz, old.dz, target.dz);
    let d = v.data();
    let at = |x: usize, y: usize, z: usize| d[dims.index(x, y, z)];
    let mut out = Vec::with_capacity(nd.len());
    for &(z0, z1, fz) in &lz {
        for &(y0, y1, fy) in &ly {
            for &(x0, x1, fx) in &lx {
                let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
                let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
                let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
                let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
                let c0 = c00 * (1.0 - fy) + c10 * fy;
                let c1 = c01 * (1.0 - fy) + c11 * fy;
                out.push(c0 * (1.0 - fz) + c1 * fz);
            }
        }
    }
    Volume::new(nd, target, out).expect("resampled grid is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_target_is_identical() {
        let s = Spacing::new(0.8, 0.8, 2.5).unwrap();
        let m = Mask::from_fn(Dims::new(7, 5, 4), s, "m", |x, y, z| (x + y * 3 + z) % 4 == 0);
        assert_eq!(resample_isotropic(&m, s), m);
    }

    #[test]
    fn cube_at_2mm_to_1mm() {
        let s2 = Spacing::isotropic(2.0);
        let m = Mask::from_fn(Dims::new(14, 14, 14), s2, "cube", |x, y, z| {
            (2..12).contains(&x) && (2..12).contains(&y) && (2..12).contains(&z)
        });
        assert_eq!(m.volume_mm3(), 8000.0);
        let r = resample_isotropic(&m, Spacing::isotropic(1.0));
        assert_eq!(r.dims(), Dims::new(28, 28, 28));
        let rel = (r.volume_mm3() - 8000.0).abs() / 8000.0;
        assert!(rel < 0.10, "volume drift {rel}");
        assert_eq!(r.count(), 20 * 20 * 20);
    }

    #[test]
    fn single_voxel_stays_single() {
        let s = Spacing::isotropic(1.0);
        let m = Mask::from_fn(Dims::new(3, 3, 3), s, "v", |x, y, z| (x, y, z) == (1, 1, 1));
        assert_eq!(resample_isotropic(&m, s).count(), 1);
    }

    #[test]
    fn empty_mask_gets_new_dims() {
        let m = Mask::empty(Dims::new(4, 4, 3), Spacing::new(1.0, 1.0, 3.0).unwrap(), "e");
        let r = resample_isotropic(&m, Spacing::isotropic(1.0));
        assert_eq!(r.dims(), Dims::new(4, 4, 9));
        assert!(r.is_empty());
    }

    #[test]
    fn trilinear_preserves_constant_and_ramp_mean() {
        let s = Spacing::new(1.0, 1.0, 2.0).unwrap();
        let v = Volume::filled(Dims::new(4, 4, 4), s, 40.0);
        let r = resample_volume_trilinear(&v, Spacing::isotropic(1.0));
        assert_eq!(r.dims(), Dims::new(4, 4, 8));
        assert!(r.data().iter().all(|x| (*x - 40.0).abs() < 1e-5));
    }
}
