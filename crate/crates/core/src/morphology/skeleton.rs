//! Directional thinning by deletion of simple points.
//!
//! A foreground voxel is simple when removing it changes neither the number
//! of 26-connected foreground components nor the number of 6-connected
//! background components in its 3×3×3 neighborhood.

use super::MorphologyError;
use crate::volume::{Dims, Mask};

const CENTER: usize = 13;

#[cfg(test)]
#[inline]
fn nb_index(dx: i64, dy: i64, dz: i64) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

#[inline]
fn nb_offset(i: usize) -> [i64; 3] {
    [(i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1]
}

fn l1(o: [i64; 3]) -> i64 {
    o[0].abs() + o[1].abs() + o[2].abs()
}

/// Counts components among `members` of the 3×3×3 cube under the given
/// adjacency, optionally only those containing a voxel in `seeds`.
fn count_components(members: &[bool; 27], adjacent: impl Fn([i64; 3], [i64; 3]) -> bool, seeds: Option<&[usize]>) -> usize {
    let mut seen = [false; 27];
    let mut count = 0;
    let starts: Vec<usize> = match seeds {
        Some(s) => s.to_vec(),
        None => (0..27).collect(),
    };
    let mut stack = Vec::with_capacity(27);
    for s in starts {
        if !members[s] || seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            let oi = nb_offset(i);
            for j in 0..27 {
                if members[j] && !seen[j] && adjacent(oi, nb_offset(j)) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Simple-point test on a 27-voxel neighborhood (index 13 is the center).
pub fn is_simple_point(nb: &[bool; 27]) -> bool {
    let mut fg = *nb;
    fg[CENTER] = false;
    let adj26 = |a: [i64; 3], b: [i64; 3]| {
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        d.iter().all(|v| v.abs() <= 1) && d != [0, 0, 0]
    };
    if count_components(&fg, adj26, None) != 1 {
        return false;
    }
    // background restricted to the 18-neighborhood, 6-adjacency
    let mut bg = [false; 27];
    for (i, b) in bg.iter_mut().enumerate() {
        let o = nb_offset(i);
        *b = i != CENTER && !nb[i] && l1(o) <= 2;
    }
    let adj6 = |a: [i64; 3], b: [i64; 3]| l1([a[0] - b[0], a[1] - b[1], a[2] - b[2]]) == 1;
    let faces: Vec<usize> = (0..27).filter(|&i| l1(nb_offset(i)) == 1).collect();
    count_components(&bg, adj6, Some(&faces)) == 1
}

fn neighborhood(bits: &[bool], dims: Dims, idx: usize) -> [bool; 27] {
    let [x, y, z] = dims.coords(idx);
    let mut nb = [false; 27];
    for (i, v) in nb.iter_mut().enumerate() {
        let o = nb_offset(i);
        *v = dims
            .checked_index(x as i64 + o[0], y as i64 + o[1], z as i64 + o[2])
            .is_some_and(|j| bits[j]);
    }
    nb
}

fn neighbor_count(nb: &[bool; 27]) -> usize {
    nb.iter().enumerate().filter(|(i, v)| *i != CENTER && **v).count()
}

/// Thins `m` to a curve-like skeleton that keeps its 26-connected topology.
///
/// Each pass sweeps the six face directions (+z, −z, +y, −y, +x, −x); in a
/// sweep every border voxel facing that direction is deleted, in raster
/// order, if it is still simple at deletion time. Voxels that were curve
/// endpoints (one neighbor) at the start of a pass are kept.
pub fn skeletonize(m: &Mask) -> Result<Mask, MorphologyError> {
    let (lo, hi) = m.bounding_box().ok_or(MorphologyError::EmptyInput)?;
    let d = m.dims();
    let lo_p = [lo[0].saturating_sub(1), lo[1].saturating_sub(1), lo[2].saturating_sub(1)];
    let hi_p = [(hi[0] + 1).min(d.nx - 1), (hi[1] + 1).min(d.ny - 1), (hi[2] + 1).min(d.nz - 1)];
    let crop = m.crop(lo_p, hi_p);
    let cd = crop.dims();
    let mut bits = crop.bits().to_vec();

    let directions: [[i64; 3]; 6] = [[0, 0, 1], [0, 0, -1], [0, 1, 0], [0, -1, 0], [1, 0, 0], [-1, 0, 0]];
    loop {
        let protected: Vec<bool> = (0..bits.len())
            .map(|i| bits[i] && neighbor_count(&neighborhood(&bits, cd, i)) == 1)
            .collect();
        let mut changed = false;
        for dir in directions {
            let candidates: Vec<usize> = (0..bits.len())
                .filter(|&i| {
                    if !bits[i] || protected[i] {
                        return false;
                    }
                    let [x, y, z] = cd.coords(i);
                    let facing = cd
                        .checked_index(x as i64 + dir[0], y as i64 + dir[1], z as i64 + dir[2])
                        .is_none_or(|j| !bits[j]);
                    facing && is_simple_point(&neighborhood(&bits, cd, i))
                })
                .collect();
            for i in candidates {
                if is_simple_point(&neighborhood(&bits, cd, i)) {
                    bits[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let thin = Mask::new(cd, m.spacing(), bits, m.label()).expect("crop grid");
    let mut out = m.empty_like(m.label());
    out.paste(&thin, lo_p);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{connected_components, Connectivity};
    use crate::volume::Spacing;

    #[test]
    fn simple_point_basics() {
        let mut nb = [false; 27];
        nb[CENTER] = true;
        // isolated voxel is not simple
        assert!(!is_simple_point(&nb));
        // end of a line is simple
        nb[nb_index(1, 0, 0)] = true;
        assert!(is_simple_point(&nb));
        // middle of a line is not
        nb[nb_index(-1, 0, 0)] = true;
        assert!(!is_simple_point(&nb));
        // interior of a solid block is not (removal creates a cavity)
        let full = [true; 27];
        assert!(!is_simple_point(&full));
    }

    #[test]
    fn thin_line_is_unchanged() {
        let m = Mask::from_fn(Dims::new(5, 5, 20), Spacing::isotropic(1.0), "l", |x, y, z| x == 2 && y == 2 && (2..18).contains(&z));
        assert_eq!(skeletonize(&m).unwrap(), m);
    }

    #[test]
    fn cube_thins_to_a_point() {
        let m = Mask::from_fn(Dims::new(5, 5, 5), Spacing::isotropic(1.0), "c", |x, y, z| {
            [x, y, z].iter().all(|c| (1..4).contains(c))
        });
        assert_eq!(skeletonize(&m).unwrap().count(), 1);
    }

    #[test]
    fn tube_thins_to_axis() {
        let (cx, cy) = (10.0, 10.0);
        let m = Mask::from_fn(Dims::new(21, 21, 46), Spacing::isotropic(1.0), "t", |x, y, z| {
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            r2 <= 9.0 && (3..43).contains(&z)
        });
        let sk = skeletonize(&m).unwrap();
        assert!(sk.is_subset_of(&m));
        assert_eq!(connected_components(&sk, Connectivity::Vertex26).count, 1);
        let mut zs = std::collections::BTreeSet::new();
        for i in sk.indices() {
            let [x, y, z] = sk.dims().coords(i);
            assert!((x as f64 - cx).abs() <= 1.0 && (y as f64 - cy).abs() <= 1.0, "voxel {x},{y},{z} off axis");
            zs.insert(z);
        }
        // a centerline, not a blob: about one voxel per slice over most of the length
        assert!(zs.len() >= 25, "skeleton spans only {} slices", zs.len());
        assert!(sk.count() <= zs.len() * 2);
    }

    #[test]
    fn empty_input_errors() {
        let m = Mask::empty(Dims::new(3, 3, 3), Spacing::isotropic(1.0), "e");
        assert_eq!(skeletonize(&m), Err(MorphologyError::EmptyInput));
    }
}
