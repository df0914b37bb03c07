//! Lattice sites and geometries.
//!
//! Sites are stored as fixed `[i32; 3]` arrays; unused trailing coordinates
//! are zero. Torus sites are indexed row-major: for coordinates
//! `(c0, c1, c2)` on a side-`L` torus the index is `(c0 * L + c1) * L + c2`,
//! truncated to the active dimension.

use std::fmt;

use crate::error::SimError;

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i32]) -> Site {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn on_axis(axis: usize, value: i32) -> Site {
        let mut c = [0; MAX_DIM];
        c[axis] = value;
        Site(c)
    }

    #[inline]
    pub fn offset(self, d: Site) -> Site {
        Site([self.0[0] + d.0[0], self.0[1] + d.0[1], self.0[2] + d.0[2]])
    }

    #[inline]
    pub fn neg(self) -> Site {
        Site([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn dot(self, k: &[f64]) -> f64 {
        k.iter().zip(self.0.iter()).map(|(ki, &xi)| ki * xi as f64).sum()
    }

    pub fn coords(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    /// Formats the first `dim` coordinates as `x,y,z`.
    pub fn display(&self, dim: usize) -> String {
        self.coords(dim)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Parses a site list such as `"0;1"` (d=1) or `"0,0;1,0"` (d=2).
pub fn parse_sites(text: &str, dim: usize) -> Result<Vec<Site>, SimError> {
    let mut out = Vec::new();
    for chunk in text.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let coords = chunk
            .split(',')
            .map(|c| c.trim().parse::<i32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimError::InvalidArgument(format!("bad site '{chunk}': {e}")))?;
        if coords.len() != dim {
            return Err(SimError::InvalidArgument(format!(
                "site '{chunk}' has {} coordinates, expected {dim}",
                coords.len()
            )));
        }
        out.push(Site::new(&coords));
    }
    Ok(out)
}

/// Finite periodic box `{0..side}^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Torus {
    pub dim: usize,
    pub side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Torus, SimError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(SimError::InvalidArgument(format!("dimension {dim} not in 1..=3")));
        }
        if side < 2 {
            return Err(SimError::InvalidArgument(format!("torus side {side} < 2")));
        }
        if (side as u128).pow(dim as u32) > u32::MAX as u128 {
            return Err(SimError::InvalidArgument("torus too large".into()));
        }
        Ok(Torus { dim, side })
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn wrap(&self, s: Site) -> Site {
        let l = self.side as i32;
        let mut c = [0; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = s.0[i].rem_euclid(l);
        }
        Site(c)
    }

    #[inline]
    pub fn index(&self, s: Site) -> usize {
        let w = self.wrap(s);
        let mut idx = 0usize;
        for i in 0..self.dim {
            idx = idx * self.side + w.0[i] as usize;
        }
        idx
    }

    pub fn site(&self, mut index: usize) -> Site {
        let mut c = [0; MAX_DIM];
        for i in (0..self.dim).rev() {
            c[i] = (index % self.side) as i32;
            index /= self.side;
        }
        Site(c)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }
}

/// Where dual particles and walkers live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lattice {
    Free { dim: usize },
    Torus(Torus),
}

impl Lattice {
    pub fn dim(&self) -> usize {
        match self {
            Lattice::Free { dim } => *dim,
            Lattice::Torus(t) => t.dim,
        }
    }

    #[inline]
    pub fn wrap(&self, s: Site) -> Site {
        match self {
            Lattice::Free { .. } => s,
            Lattice::Torus(t) => t.wrap(s),
        }
    }
}
