//! Sites, rectangular regions and sup-norm geometry on `Z^d` (d ≤ 4).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_D: usize = 4;

/// A lattice site. Coordinates beyond the model dimension are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Site {
    c: [i32; MAX_D],
}

impl Site {
    pub fn new(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_D, "dimension at most {MAX_D}");
        let mut c = [0i32; MAX_D];
        c[..coords.len()].copy_from_slice(coords);
        Site { c }
    }

    pub fn origin() -> Self {
        Site { c: [0; MAX_D] }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> i32 {
        self.c[i]
    }

    pub fn coords(&self, d: usize) -> &[i32] {
        &self.c[..d]
    }

    #[inline]
    pub fn translate(&self, offset: &[i32]) -> Site {
        let mut c = self.c;
        for (i, &o) in offset.iter().enumerate() {
            c[i] += o;
        }
        Site { c }
    }

    /// Unit step along `axis`.
    pub fn step(&self, axis: usize, by: i32) -> Site {
        let mut c = self.c;
        c[axis] += by;
        Site { c }
    }

    pub fn label(&self) -> u64 {
        crate::rng::site_label(&self.c)
    }
}

/// Sup-norm distance between two sites.
#[inline]
pub fn sup_dist(a: Site, b: Site, d: usize) -> i32 {
    (0..d).map(|i| (a.c[i] - b.c[i]).abs()).max().unwrap_or(0)
}

/// Minimal pairwise sup-norm distance between two site sets.
pub fn set_dist(a: &[Site], b: &[Site], d: usize) -> i32 {
    let mut best = i32::MAX;
    for &x in a {
        for &y in b {
            best = best.min(sup_dist(x, y, d));
        }
    }
    best
}

/// Sup-norm diameter of a site set (0 for empty or singleton sets).
pub fn diameter(sites: &[Site], d: usize) -> i32 {
    let mut best = 0;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            best = best.max(sup_dist(sites[i], sites[j], d));
        }
    }
    best
}

/// A finite rectangular window of `Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Region {
    d: usize,
    lo: [i32; MAX_D],
    hi: [i32; MAX_D],
}

impl Region {
    pub fn new(lo: &[i32], hi: &[i32]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > MAX_D {
            return Err(Error::InvalidParameter(format!(
                "region bounds must have matching dimension in 1..={MAX_D}"
            )));
        }
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Err(Error::EmptyRegion);
        }
        let mut l = [0i32; MAX_D];
        let mut h = [0i32; MAX_D];
        l[..lo.len()].copy_from_slice(lo);
        h[..hi.len()].copy_from_slice(hi);
        Ok(Region { d: lo.len(), lo: l, hi: h })
    }

    /// The sup-norm ball Λ[x; r] as a rectangular region.
    pub fn ball(center: Site, r: i32, d: usize) -> Self {
        let mut lo = [0i32; MAX_D];
        let mut hi = [0i32; MAX_D];
        for i in 0..d {
            lo[i] = center.coord(i) - r;
            hi[i] = center.coord(i) + r;
        }
        Region { d, lo, hi }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn lo(&self) -> &[i32] {
        &self.lo[..self.d]
    }

    pub fn hi(&self) -> &[i32] {
        &self.hi[..self.d]
    }

    pub fn contains(&self, s: Site) -> bool {
        (0..self.d).all(|i| self.lo[i] <= s.coord(i) && s.coord(i) <= self.hi[i])
    }

    pub fn contains_all(&self, sites: &[Site]) -> bool {
        sites.iter().all(|&s| self.contains(s))
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.d == other.d
            && (0..self.d).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Grow by `r` in every direction.
    pub fn dilate(&self, r: i32) -> Region {
        let mut out = *self;
        for i in 0..self.d {
            out.lo[i] -= r;
            out.hi[i] += r;
        }
        out
    }

    /// Rectangular intersection; `None` when empty or dimensions differ.
    pub fn intersect(&self, other: &Region) -> Option<Region> {
        if self.d != other.d {
            return None;
        }
        let mut out = *self;
        for i in 0..self.d {
            out.lo[i] = self.lo[i].max(other.lo[i]);
            out.hi[i] = self.hi[i].min(other.hi[i]);
            if out.lo[i] > out.hi[i] {
                return None;
            }
        }
        Some(out)
    }

    pub fn volume(&self) -> u64 {
        (0..self.d).map(|i| (self.hi[i] - self.lo[i] + 1) as u64).product()
    }

    /// Distance from `s` to the complement of the region (0 on the border).
    pub fn dist_to_complement(&self, s: Site) -> i32 {
        (0..self.d)
            .map(|i| (s.coord(i) - self.lo[i]).min(self.hi[i] - s.coord(i)))
            .min()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> RegionIter {
        RegionIter { region: *self, cur: self.lo, done: false }
    }

    pub fn sites(&self) -> Vec<Site> {
        self.iter().collect()
    }
}

pub struct RegionIter {
    region: Region,
    cur: [i32; MAX_D],
    done: bool,
}

impl Iterator for RegionIter {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        if self.done {
            return None;
        }
        let out = Site { c: self.cur };
        // advance odometer, last axis fastest
        for i in (0..self.region.d).rev() {
            self.cur[i] += 1;
            if self.cur[i] <= self.region.hi[i] {
                return Some(out);
            }
            self.cur[i] = self.region.lo[i];
            if i == 0 {
                self.done = true;
            }
        }
        if self.region.d == 0 {
            self.done = true;
        }
        Some(out)
    }
}

/// An undirected nearest-neighbor link, stored as its lower endpoint and axis.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Link {
    pub from: Site,
    pub axis: usize,
}

impl Link {
    /// Canonical link between two adjacent sites, if they are adjacent.
    pub fn between(a: Site, b: Site, d: usize) -> Option<Link> {
        let mut axis = None;
        for i in 0..d {
            let diff = (a.coord(i) - b.coord(i)).abs();
            if diff == 1 {
                if axis.is_some() {
                    return None;
                }
                axis = Some(i);
            } else if diff != 0 {
                return None;
            }
        }
        let axis = axis?;
        let from = if a.coord(axis) < b.coord(axis) { a } else { b };
        Some(Link { from, axis })
    }

    pub fn endpoints(&self) -> (Site, Site) {
        (self.from, self.from.step(self.axis, 1))
    }

    pub fn label(&self) -> u64 {
        self.from.label() ^ ((self.axis as u64 + 1) << 60)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_is_sup_norm() {
        let r = Region::ball(Site::origin(), 2, 2);
        assert_eq!(r.volume(), 25);
        assert!(r.contains(Site::new(&[2, -2])));
        assert!(!r.contains(Site::new(&[3, 0])));
    }

    #[test]
    fn region_iteration_is_lexicographic_and_complete() {
        let r = Region::new(&[0, 0], &[1, 2]).unwrap();
        let sites = r.sites();
        assert_eq!(sites.len(), 6);
        assert_eq!(sites[0], Site::new(&[0, 0]));
        assert_eq!(sites[5], Site::new(&[1, 2]));
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
    }

    #[test]
    fn one_dimensional_region() {
        let r = Region::new(&[-2], &[2]).unwrap();
        assert_eq!(r.sites().len(), 5);
        assert_eq!(r.dist_to_complement(Site::origin()), 2);
    }

    #[test]
    fn distances() {
        let a = Site::new(&[0, 0]);
        let b = Site::new(&[3, -1]);
        assert_eq!(sup_dist(a, b, 2), 3);
        assert_eq!(diameter(&[a, b, Site::new(&[1, 1])], 2), 3);
    }

    #[test]
    fn links_canonical() {
        let a = Site::new(&[0, 0]);
        let b = Site::new(&[0, 1]);
        let l = Link::between(a, b, 2).unwrap();
        assert_eq!(l, Link::between(b, a, 2).unwrap());
        assert!(Link::between(a, Site::new(&[1, 1]), 2).is_none());
    }

    #[test]
    fn empty_region_rejected() {
        assert!(matches!(Region::new(&[1], &[0]), Err(Error::EmptyRegion)));
    }
}
