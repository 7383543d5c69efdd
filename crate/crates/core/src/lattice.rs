//! Finite time-symmetric lattices.
//!
//! Time coordinates run over `-T..=-1, 1..=T` (zero is excluded), so the
//! reflection `t -> -t` passes between the layers `t = -1` and `t = +1` and
//! fixes no site. Spatial directions are periodic.
//!
//! Sites are ordered lexicographically in `(t, x_1, .., x_d)` with `t`
//! ascending. The negative half therefore occupies indices `0..N/2` and the
//! positive half `N/2..N`; half vectors use the positive-half indices shifted
//! down by `N/2`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real value per lattice site: either a test function or a field
/// configuration, depending on context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteVector(pub Vec<f64>);

/// A real value per positive-time site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfVector(pub Vec<f64>);

macro_rules! vec_newtype {
    ($name:ident) => {
        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

vec_newtype!(SiteVector);
vec_newtype!(HalfVector);

/// Finite lattice `{-T..-1, 1..T} x Z_{L_1} x .. x Z_{L_d}` with its time
/// reflection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    time_extent: usize,
    spatial_extents: Vec<usize>,
    spatial_volume: usize,
    theta_perm: Vec<usize>,
}

impl Lattice {
    pub fn new(time_extent: usize, spatial_extents: &[usize]) -> Result<Self> {
        if time_extent == 0 {
            return Err(Error::InvalidExtent("time extent must be at least 1".into()));
        }
        if let Some(axis) = spatial_extents.iter().position(|&l| l == 0) {
            return Err(Error::InvalidExtent(format!(
                "spatial extent {axis} must be at least 1"
            )));
        }
        let spatial_volume = spatial_extents.iter().product::<usize>();
        let layers = 2 * time_extent;
        let site_count = layers * spatial_volume;
        let theta_perm = (0..site_count)
            .map(|idx| {
                let (rank, s) = (idx / spatial_volume, idx % spatial_volume);
                (layers - 1 - rank) * spatial_volume + s
            })
            .collect();
        Ok(Self {
            time_extent,
            spatial_extents: spatial_extents.to_vec(),
            spatial_volume,
            theta_perm,
        })
    }

    pub fn time_extent(&self) -> usize {
        self.time_extent
    }

    pub fn spatial_extents(&self) -> &[usize] {
        &self.spatial_extents
    }

    pub fn spatial_volume(&self) -> usize {
        self.spatial_volume
    }

    pub fn site_count(&self) -> usize {
        self.theta_perm.len()
    }

    /// Number of sites in each half.
    pub fn half_count(&self) -> usize {
        self.site_count() / 2
    }

    pub fn theta_perm(&self) -> &[usize] {
        &self.theta_perm
    }

    pub fn theta(&self, site: usize) -> usize {
        self.theta_perm[site]
    }

    pub fn is_positive(&self, site: usize) -> bool {
        site >= self.half_count()
    }

    /// Full-lattice index of the `h`-th positive-time site.
    pub fn plus_site(&self, half_index: usize) -> usize {
        self.half_count() + half_index
    }

    /// Position of a positive-time site in the half ordering, if it is one.
    pub fn half_index(&self, site: usize) -> Option<usize> {
        self.is_positive(site).then(|| site - self.half_count())
    }

    /// Time coordinate of a site (never zero).
    pub fn time_of(&self, site: usize) -> i64 {
        let rank = (site / self.spatial_volume) as i64;
        let t = self.time_extent as i64;
        if rank < t {
            rank - t
        } else {
            rank - t + 1
        }
    }

    /// Spatial coordinates of a site, first axis most significant.
    pub fn space_of(&self, site: usize) -> Vec<usize> {
        let mut rest = site % self.spatial_volume;
        let mut x = vec![0; self.spatial_extents.len()];
        for (axis, &len) in self.spatial_extents.iter().enumerate().rev() {
            x[axis] = rest % len;
            rest /= len;
        }
        x
    }

    /// Coordinate `[t, x_1, .., x_d]` of a site.
    pub fn coordinate(&self, site: usize) -> Vec<i64> {
        let mut c = vec![self.time_of(site)];
        c.extend(self.space_of(site).into_iter().map(|x| x as i64));
        c
    }

    /// Inverse of [`Lattice::coordinate`].
    pub fn index_of(&self, coordinate: &[i64]) -> Result<usize> {
        let invalid = || Error::InvalidSite(coordinate.to_vec());
        let (&t, x) = coordinate.split_first().ok_or_else(invalid)?;
        if x.len() != self.spatial_extents.len() {
            return Err(invalid());
        }
        let te = self.time_extent as i64;
        let rank = match t {
            t if (-te..=-1).contains(&t) => t + te,
            t if (1..=te).contains(&t) => t + te - 1,
            _ => return Err(invalid()),
        } as usize;
        let mut s = 0usize;
        for (&xi, &len) in x.iter().zip(&self.spatial_extents) {
            if xi < 0 || xi as usize >= len {
                return Err(invalid());
            }
            s = s * len + xi as usize;
        }
        Ok(rank * self.spatial_volume + s)
    }

    /// Neighbor one step forward or backward in time, `None` past `±T`.
    /// The layers `t = -1` and `t = +1` are adjacent.
    pub fn time_step(&self, site: usize, forward: bool) -> Option<usize> {
        let rank = site / self.spatial_volume;
        let layers = 2 * self.time_extent;
        let next = if forward {
            (rank + 1 < layers).then_some(rank + 1)?
        } else {
            rank.checked_sub(1)?
        };
        Some(next * self.spatial_volume + site % self.spatial_volume)
    }

    /// Periodic neighbor along spatial axis `axis`.
    pub fn space_step(&self, site: usize, axis: usize, forward: bool) -> usize {
        let mut x = self.space_of(site);
        let len = self.spatial_extents[axis];
        x[axis] = if forward {
            (x[axis] + 1) % len
        } else {
            (x[axis] + len - 1) % len
        };
        let s = x
            .iter()
            .zip(&self.spatial_extents)
            .fold(0, |acc, (&xi, &l)| acc * l + xi);
        (site / self.spatial_volume) * self.spatial_volume + s
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.site_count() {
            return Err(Error::LengthMismatch {
                expected: self.site_count(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Applies the time reflection: `(θv)_x = v_{θx}`.
    pub fn reflect(&self, v: &[f64]) -> Result<SiteVector> {
        self.check_len(v.len())?;
        Ok(SiteVector(self.theta_perm.iter().map(|&j| v[j]).collect()))
    }

    /// Entries of `v` on the positive-time sites.
    pub fn restrict_plus(&self, v: &[f64]) -> Result<HalfVector> {
        self.check_len(v.len())?;
        Ok(HalfVector(v[self.half_count()..].to_vec()))
    }

    /// Zero extension of a half vector to the full lattice.
    pub fn embed_plus(&self, h: &[f64]) -> Result<SiteVector> {
        if h.len() != self.half_count() {
            return Err(Error::LengthMismatch {
                expected: self.half_count(),
                actual: h.len(),
            });
        }
        let mut v = vec![0.0; self.half_count()];
        v.extend_from_slice(h);
        Ok(SiteVector(v))
    }

    /// True iff every negative-time entry is exactly zero.
    pub fn positive_support(&self, v: &[f64]) -> Result<bool> {
        self.check_len(v.len())?;
        Ok(v[..self.half_count()].iter().all(|&x| x == 0.0))
    }

    /// Like [`Lattice::positive_support`] but names the first offending site.
    pub fn require_positive_support(&self, v: &[f64]) -> Result<()> {
        self.check_len(v.len())?;
        match v[..self.half_count()].iter().position(|&x| x != 0.0) {
            Some(site) => Err(Error::NotPositiveSupport { site }),
            None => Ok(()),
        }
    }
}
