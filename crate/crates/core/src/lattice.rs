//! Dyadic cubes over the unit root cube `[0,1]^d`.
//!
//! A cube is addressed by its level `j` (sidelength `2^-j`) and integer
//! lattice coordinates in `[0, 2^j)^d`. Cubes of one level are stored in
//! row-major order with the first coordinate most significant, so the flat
//! index order coincides with lexicographic order of the coordinates.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Upper limit on `d * J`, keeping a full lattice under ~16M cubes.
pub const MAX_DEPTH_BITS: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("spatial dimension {0} not supported (expected 1, 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("lattice too deep: d*J = {0} exceeds {MAX_DEPTH_BITS}")]
    TooDeep(u32),
    #[error("cube {cube} lies outside the lattice (d={dim}, J={max_level})")]
    InvalidCube {
        cube: CubeId,
        dim: usize,
        max_level: u32,
    },
    #[error("family at position {position} contains cube {cube} of the wrong level (expected {expected})")]
    FamilyLevelMismatch {
        position: usize,
        expected: u32,
        cube: CubeId,
    },
    #[error("dimension fit needs at least three contiguous levels, got {0}")]
    TooFewLevels(usize),
    #[error("dimension estimate undefined: {0}")]
    UndefinedEstimate(&'static str),
    #[error("malformed cube id `{0}`")]
    ParseCube(String),
}

/// Shape of the dyadic tree: spatial dimension and deepest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeConfig {
    spatial_dim: usize,
    max_level: u32,
}

impl LatticeConfig {
    pub fn new(spatial_dim: usize, max_level: u32) -> Result<Self, LatticeError> {
        if !(1..=MAX_DIM).contains(&spatial_dim) {
            return Err(LatticeError::UnsupportedDimension(spatial_dim));
        }
        let bits = spatial_dim as u32 * max_level;
        if bits > MAX_DEPTH_BITS {
            return Err(LatticeError::TooDeep(bits));
        }
        Ok(Self {
            spatial_dim,
            max_level,
        })
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn num_levels(&self) -> usize {
        self.max_level as usize + 1
    }

    /// Number of children of any non-leaf cube, `2^d`.
    pub fn branching(&self) -> usize {
        1 << self.spatial_dim
    }

    /// `2^{d j}` cubes live at level `j`.
    pub fn cubes_at_level(&self, level: u32) -> usize {
        1usize << (self.spatial_dim as u32 * level)
    }

    /// Global index of the first cube of `level`.
    pub fn level_offset(&self, level: u32) -> usize {
        (0..level).map(|j| self.cubes_at_level(j)).sum()
    }

    pub fn total_cubes(&self) -> usize {
        self.level_offset(self.max_level + 1)
    }

    pub fn contains(&self, cube: &CubeId) -> bool {
        if cube.level > self.max_level {
            return false;
        }
        let side = 1u32 << cube.level;
        cube.coords.iter().enumerate().all(|(k, &c)| {
            if k < self.spatial_dim {
                c < side
            } else {
                c == 0
            }
        })
    }

    fn check(&self, cube: &CubeId) -> Result<(), LatticeError> {
        if self.contains(cube) {
            Ok(())
        } else {
            Err(LatticeError::InvalidCube {
                cube: *cube,
                dim: self.spatial_dim,
                max_level: self.max_level,
            })
        }
    }

    /// Row-major index of a cube within its level.
    pub fn local_index(&self, cube: &CubeId) -> Result<usize, LatticeError> {
        self.check(cube)?;
        let side = 1usize << cube.level;
        Ok(cube.coords[..self.spatial_dim]
            .iter()
            .fold(0usize, |acc, &c| acc * side + c as usize))
    }

    pub fn global_index(&self, cube: &CubeId) -> Result<usize, LatticeError> {
        Ok(self.level_offset(cube.level) + self.local_index(cube)?)
    }

    /// Inverse of [`local_index`](Self::local_index). `index` must be below
    /// `cubes_at_level(level)`.
    pub fn cube_at(&self, level: u32, index: usize) -> CubeId {
        debug_assert!(level <= self.max_level && index < self.cubes_at_level(level));
        let side = 1usize << level;
        let mut coords = [0u32; MAX_DIM];
        let mut rest = index;
        for k in (0..self.spatial_dim).rev() {
            coords[k] = (rest % side) as u32;
            rest /= side;
        }
        CubeId { level, coords }
    }

    /// Levels and cubes in global order.
    pub fn cubes(&self) -> impl Iterator<Item = CubeId> + '_ {
        (0..=self.max_level)
            .flat_map(move |j| (0..self.cubes_at_level(j)).map(move |i| self.cube_at(j, i)))
    }
}

/// A dyadic cube: level `j` and lattice coordinates. Coordinates beyond the
/// spatial dimension are zero. Ordering is by level, then lexicographic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    pub level: u32,
    pub coords: [u32; MAX_DIM],
}

impl CubeId {
    pub const ROOT: CubeId = CubeId {
        level: 0,
        coords: [0; MAX_DIM],
    };

    pub fn new(level: u32, coords: &[u32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0u32; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { level, coords: c }
    }

    pub fn sidelength(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }
}

impl fmt::Display for CubeId {
    /// `j<level>[c0,c1,...]`; trailing zero coordinates of unused axes are
    /// printed too, so the string does not depend on `d`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "j{}[{},{},{}]",
            self.level, self.coords[0], self.coords[1], self.coords[2]
        )
    }
}

impl FromStr for CubeId {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LatticeError::ParseCube(s.to_string());
        let rest = s.strip_prefix('j').ok_or_else(bad)?;
        let (level, rest) = rest.split_once('[').ok_or_else(bad)?;
        let inner = rest.strip_suffix(']').ok_or_else(bad)?;
        let level: u32 = level.parse().map_err(|_| bad())?;
        let coords: Vec<u32> = inner
            .split(',')
            .map(|c| c.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(bad());
        }
        Ok(CubeId::new(level, &coords))
    }
}

/// The `2^d` dyadic children of `cube` in lexicographic order, or an empty
/// list for a leaf at the deepest level.
pub fn children(cube: &CubeId, config: &LatticeConfig) -> Result<Vec<CubeId>, LatticeError> {
    config.check(cube)?;
    if cube.level == config.max_level {
        return Ok(Vec::new());
    }
    let d = config.spatial_dim;
    Ok((0..config.branching())
        .map(|bits| {
            let mut coords = [0u32; MAX_DIM];
            for (k, c) in coords.iter_mut().enumerate().take(d) {
                // first axis takes the most significant bit: lexicographic order
                let b = (bits >> (d - 1 - k)) & 1;
                *c = 2 * cube.coords[k] + b as u32;
            }
            CubeId {
                level: cube.level + 1,
                coords,
            }
        })
        .collect())
}

/// The unique cube one level up containing `cube`; `None` for the root.
pub fn parent(cube: &CubeId) -> Option<CubeId> {
    if cube.level == 0 {
        return None;
    }
    let mut coords = cube.coords;
    for c in coords.iter_mut() {
        *c /= 2;
    }
    Some(CubeId {
        level: cube.level - 1,
        coords,
    })
}

/// Coupling magnitude `2^{(d+2) j / 2}` of a cascade whose top cube sits at
/// level `j`. Computed as an exact power of two times at most one `sqrt 2`.
pub fn coupling(spatial_dim: usize, level: u32) -> f64 {
    let n = (spatial_dim as i32 + 2) * level as i32;
    let base = 2f64.powi(n / 2);
    if n % 2 == 0 {
        base
    } else {
        base * std::f64::consts::SQRT_2
    }
}

/// One cascade, as global indices into the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cascade {
    pub top: usize,
    pub mid: usize,
    pub bottom: usize,
}

/// All cascades `(Q, Q', Q'')` of a lattice, `Q'` a child of `Q` and `Q''`
/// a child of `Q'`, ordered by top level then lexicographically by
/// top, mid and bottom coordinates.
///
/// Since every cube of levels `0..=J-2` is the top of exactly `4^d` cascades,
/// the block of triples for the top with global index `t` is
/// `triples[t * 4^d .. (t + 1) * 4^d]`. Every cube of level `>= 2` is the
/// bottom of exactly one cascade.
#[derive(Debug, Clone)]
pub struct CascadeTable {
    config: LatticeConfig,
    triples: Vec<Cascade>,
    kappa: Vec<f64>,
    by_bottom: Vec<usize>,
}

/// A cascade with cube ids resolved, for dumps and inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeEntry {
    pub top: CubeId,
    pub mid: CubeId,
    pub bottom: CubeId,
    pub kappa: f64,
}

pub fn enumerate_cascades(config: &LatticeConfig) -> CascadeTable {
    let mut triples = Vec::new();
    let mut kappa = Vec::new();
    let j_max = config.max_level;
    if j_max >= 2 {
        for level in 0..=j_max - 2 {
            kappa.push(coupling(config.spatial_dim, level));
            for i in 0..config.cubes_at_level(level) {
                let top = config.cube_at(level, i);
                // in-lattice by construction
                let ti = config.global_index(&top).unwrap();
                for mid in children(&top, config).unwrap() {
                    let mi = config.global_index(&mid).unwrap();
                    for bottom in children(&mid, config).unwrap() {
                        triples.push(Cascade {
                            top: ti,
                            mid: mi,
                            bottom: config.global_index(&bottom).unwrap(),
                        });
                    }
                }
            }
        }
    }
    let bottom_base = config.level_offset(2.min(j_max + 1));
    let mut by_bottom = vec![usize::MAX; config.total_cubes() - bottom_base];
    for (n, t) in triples.iter().enumerate() {
        by_bottom[t.bottom - bottom_base] = n;
    }
    CascadeTable {
        config: *config,
        triples,
        kappa,
        by_bottom,
    }
}

impl CascadeTable {
    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Cascade] {
        &self.triples
    }

    /// Triples per top cube, `4^d`.
    pub fn block_len(&self) -> usize {
        self.config.branching() * self.config.branching()
    }

    /// Number of cubes that are the top of some cascade.
    pub fn num_tops(&self) -> usize {
        self.triples.len() / self.block_len()
    }

    /// Coupling for cascades whose top has level `j` (`j <= J - 2`).
    pub fn kappa(&self, top_level: u32) -> f64 {
        self.kappa[top_level as usize]
    }

    /// Largest coupling in the table, 0 when there are no cascades.
    pub fn max_kappa(&self) -> f64 {
        self.kappa.last().copied().unwrap_or(0.0)
    }

    /// Index into [`triples`](Self::triples) of the cascade ending at the
    /// cube with global index `bottom` (level `>= 2`).
    pub fn cascade_ending_at(&self, bottom: usize) -> usize {
        self.by_bottom[bottom - self.config.level_offset(2)]
    }

    /// Global index of the first cube that is a bottom of some cascade.
    pub fn first_bottom(&self) -> usize {
        self.config.level_offset(2.min(self.config.max_level + 1))
    }

    pub fn level_of_global(&self, index: usize) -> u32 {
        let mut level = 0;
        let mut end = self.config.cubes_at_level(0);
        while index >= end {
            level += 1;
            end += self.config.cubes_at_level(level);
        }
        level
    }

    /// Cube with the given global index.
    pub fn cube_of(&self, index: usize) -> CubeId {
        let level = self.level_of_global(index);
        self.config
            .cube_at(level, index - self.config.level_offset(level))
    }

    pub fn entry(&self, n: usize) -> CascadeEntry {
        let t = self.triples[n];
        let top = self.cube_of(t.top);
        CascadeEntry {
            top,
            mid: self.cube_of(t.mid),
            bottom: self.cube_of(t.bottom),
            kappa: self.kappa(top.level),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = CascadeEntry> + '_ {
        (0..self.len()).map(|n| self.entry(n))
    }

    /// One line per triple: `top mid bottom kappa`, cubes formatted as
    /// `j<level>[c0,c1,c2]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&format!("{} {} {} {}\n", e.top, e.mid, e.bottom, e.kappa));
        }
        out
    }
}

/// A dyadic cube dilated about its centre: sidelength `scale * 2^-j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledCube {
    pub cube: CubeId,
    pub scale: f64,
}

impl ScaledCube {
    pub fn new(cube: CubeId, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        Self { cube, scale }
    }

    pub fn unscaled(cube: CubeId) -> Self {
        Self { cube, scale: 1.0 }
    }

    pub fn sidelength(&self) -> f64 {
        self.scale * self.cube.sidelength()
    }

    pub fn centre(&self, axis: usize) -> f64 {
        (self.cube.coords[axis] as f64 + 0.5) * self.cube.sidelength()
    }

    /// Open interiors intersect.
    pub fn overlaps(&self, other: &ScaledCube, spatial_dim: usize) -> bool {
        let reach = 0.5 * (self.sidelength() + other.sidelength());
        (0..spatial_dim).all(|k| (self.centre(k) - other.centre(k)).abs() < reach)
    }

    /// `self` is contained in the concentric dilation of `other` by `factor`.
    pub fn inside_dilation(&self, other: &ScaledCube, factor: f64, spatial_dim: usize) -> bool {
        let limit = 0.5 * factor * other.sidelength();
        let slack = 1e-12 * limit;
        (0..spatial_dim).all(|k| {
            (self.centre(k) - other.centre(k)).abs() + 0.5 * self.sidelength() <= limit + slack
        })
    }

    fn greedy_order(&self, other: &ScaledCube) -> Ordering {
        other
            .sidelength()
            .total_cmp(&self.sidelength())
            .then_with(|| self.cube.cmp(&other.cube))
            .then_with(|| other.scale.total_cmp(&self.scale))
    }
}

/// Greedy Vitali selection: visit cubes largest first (lexicographic on ties)
/// and keep each one disjoint from everything kept so far. Every input cube
/// meets a kept cube at least as large, hence lies in its 5-fold dilation.
pub fn vitali_subcover(cubes: &[ScaledCube], spatial_dim: usize) -> Vec<ScaledCube> {
    let mut order: Vec<ScaledCube> = cubes.to_vec();
    order.sort_by(|a, b| a.greedy_order(b));
    let mut kept: Vec<ScaledCube> = Vec::new();
    for cube in order {
        if kept.iter().all(|k| !k.overlaps(&cube, spatial_dim)) {
            kept.push(cube);
        }
    }
    kept
}

/// Families `A_j` of cubes at consecutive levels `start_level, start_level+1, ...`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CubeFamilySequence {
    start_level: u32,
    families: Vec<BTreeSet<CubeId>>,
}

impl CubeFamilySequence {
    pub fn new(start_level: u32, families: Vec<BTreeSet<CubeId>>) -> Result<Self, LatticeError> {
        for (position, family) in families.iter().enumerate() {
            let expected = start_level + position as u32;
            if let Some(cube) = family.iter().find(|c| c.level != expected) {
                return Err(LatticeError::FamilyLevelMismatch {
                    position,
                    expected,
                    cube: *cube,
                });
            }
        }
        Ok(Self {
            start_level,
            families,
        })
    }

    pub fn start_level(&self) -> u32 {
        self.start_level
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn family(&self, level: u32) -> Option<&BTreeSet<CubeId>> {
        level
            .checked_sub(self.start_level)
            .and_then(|p| self.families.get(p as usize))
    }

    /// `(level, #A_level)` pairs.
    pub fn counts(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.families
            .iter()
            .enumerate()
            .map(move |(p, f)| (self.start_level + p as u32, f.len()))
    }
}

/// Least-squares slope of `log2 #(A_j)` versus `j`. This is the growth
/// exponent of the family sizes, an upper-bound estimate for the Hausdorff
/// dimension of `limsup A_j`. Empty levels are left out of the fit.
pub fn limsup_dimension_estimate(seq: &CubeFamilySequence) -> Result<f64, LatticeError> {
    if seq.len() < 3 {
        return Err(LatticeError::TooFewLevels(seq.len()));
    }
    growth_exponent(seq.counts())
}

/// Slope fit shared by the family estimator and count-only callers.
pub fn growth_exponent(
    counts: impl IntoIterator<Item = (u32, usize)>,
) -> Result<f64, LatticeError> {
    let points: Vec<(f64, f64)> = counts
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .map(|(j, n)| (j as f64, (n as f64).log2()))
        .collect();
    match points.len() {
        0 => return Err(LatticeError::UndefinedEstimate("every family is empty")),
        1 => return Err(LatticeError::UndefinedEstimate("only one non-empty family")),
        _ => {}
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, j: u32) -> LatticeConfig {
        LatticeConfig::new(d, j).unwrap()
    }

    #[test]
    fn level_sizes() {
        let c = cfg(3, 3);
        assert_eq!(c.cubes_at_level(2), 64);
        assert_eq!(c.total_cubes(), 1 + 8 + 64 + 512);
        assert_eq!(c.level_offset(3), 73);
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(
            LatticeConfig::new(4, 2),
            Err(LatticeError::UnsupportedDimension(4))
        );
        assert!(matches!(
            LatticeConfig::new(3, 9),
            Err(LatticeError::TooDeep(27))
        ));
    }

    #[test]
    fn root_children_d3() {
        let c = cfg(3, 2);
        let kids = children(&CubeId::ROOT, &c).unwrap();
        assert_eq!(kids.len(), 8);
        for k in &kids {
            assert_eq!(k.level, 1);
            assert!(k.coords.iter().all(|&x| x <= 1));
        }
        let unique: BTreeSet<_> = kids.iter().collect();
        assert_eq!(unique.len(), 8);
        assert!(kids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn interval_halving_d1() {
        let c = cfg(1, 4);
        let kids = children(&CubeId::new(2, &[3]), &c).unwrap();
        assert_eq!(kids, vec![CubeId::new(3, &[6]), CubeId::new(3, &[7])]);
    }

    #[test]
    fn leaf_has_no_children() {
        let c = cfg(2, 2);
        assert!(children(&CubeId::new(2, &[1, 3]), &c).unwrap().is_empty());
    }

    #[test]
    fn out_of_lattice_cube_is_error() {
        let c = cfg(2, 2);
        assert!(matches!(
            children(&CubeId::new(1, &[2, 0]), &c),
            Err(LatticeError::InvalidCube { .. })
        ));
        assert!(children(&CubeId::new(3, &[0, 0]), &c).is_err());
        // unused axis must be zero
        assert!(children(&CubeId::new(1, &[0, 0, 1]), &c).is_err());
    }

    #[test]
    fn parent_cases() {
        assert_eq!(parent(&CubeId::ROOT), None);
        assert_eq!(parent(&CubeId::new(1, &[1, 0, 1])), Some(CubeId::ROOT));
        assert_eq!(
            parent(&CubeId::new(3, &[5, 2])),
            Some(CubeId::new(2, &[2, 1]))
        );
    }

    #[test]
    fn index_roundtrip() {
        let c = cfg(2, 3);
        for (g, cube) in c.cubes().enumerate() {
            assert_eq!(c.global_index(&cube).unwrap(), g);
        }
    }

    #[test]
    fn coupling_is_power_of_sqrt2() {
        assert_eq!(coupling(3, 0), 1.0);
        assert_eq!(coupling(3, 2), 32.0);
        assert_eq!(coupling(3, 1), 4.0 * std::f64::consts::SQRT_2);
        assert_eq!(coupling(1, 2), 8.0);
        assert_eq!(coupling(2, 3), 64.0);
    }

    #[test]
    fn cascade_counts() {
        assert_eq!(enumerate_cascades(&cfg(3, 2)).len(), 64);
        assert_eq!(enumerate_cascades(&cfg(1, 2)).len(), 4);
        for d in 1..=3 {
            assert!(enumerate_cascades(&cfg(d, 1)).is_empty());
            assert!(enumerate_cascades(&cfg(d, 0)).is_empty());
        }
    }

    #[test]
    fn cascade_blocks_and_bottoms() {
        let c = cfg(2, 4);
        let table = enumerate_cascades(&c);
        let block = table.block_len();
        for (n, t) in table.triples().iter().enumerate() {
            assert_eq!(t.top, n / block);
            assert_eq!(table.cascade_ending_at(t.bottom), n);
        }
        assert_eq!(table.num_tops(), c.level_offset(3));
    }

    #[test]
    fn dump_format() {
        let table = enumerate_cascades(&cfg(1, 2));
        let dump = table.dump();
        let first = dump.lines().next().unwrap();
        assert_eq!(first, "j0[0,0,0] j1[0,0,0] j2[0,0,0] 1");
        assert_eq!(dump.lines().count(), 4);
        let fields: Vec<&str> = dump.lines().last().unwrap().split(' ').collect();
        assert_eq!(fields[2].parse::<CubeId>().unwrap(), CubeId::new(2, &[3]));
    }

    #[test]
    fn cube_id_parse_errors() {
        assert!("x1[0]".parse::<CubeId>().is_err());
        assert!("j1[0,0,0,0]".parse::<CubeId>().is_err());
        assert!("j1[a]".parse::<CubeId>().is_err());
    }

    #[test]
    fn vitali_disjoint_input_is_kept() {
        let c = cfg(2, 3);
        let input: Vec<ScaledCube> = (0..c.cubes_at_level(2))
            .map(|i| ScaledCube::unscaled(c.cube_at(2, i)))
            .collect();
        let out = vitali_subcover(&input, 2);
        assert_eq!(out.len(), input.len());
    }

    #[test]
    fn vitali_identical_cubes() {
        let q = ScaledCube::unscaled(CubeId::new(1, &[1, 0]));
        assert_eq!(vitali_subcover(&[q, q], 2), vec![q]);
    }

    #[test]
    fn vitali_nested_keeps_parent() {
        let big = ScaledCube::unscaled(CubeId::new(1, &[0]));
        let small = ScaledCube::unscaled(CubeId::new(3, &[2]));
        assert_eq!(vitali_subcover(&[small, big], 1), vec![big]);
    }

    #[test]
    fn vitali_overlapping_chain() {
        // dilated level-3 intervals; consecutive ones overlap
        let chain: Vec<ScaledCube> = (0..8)
            .map(|k| ScaledCube::new(CubeId::new(3, &[k]), 1.5))
            .collect();
        let out = vitali_subcover(&chain, 1);
        let kept: Vec<u32> = out.iter().map(|s| s.cube.coords[0]).collect();
        assert_eq!(kept, vec![0, 2, 4, 6]);
        for q in &chain {
            assert!(out.iter().any(|s| q.inside_dilation(s, 5.0, 1)));
        }
    }

    #[test]
    fn limsup_examples() {
        let single = |j| BTreeSet::from([CubeId::new(j, &[0])]);
        let seq = CubeFamilySequence::new(2, (2..8).map(single).collect()).unwrap();
        assert_eq!(limsup_dimension_estimate(&seq).unwrap(), 0.0);

        let c = cfg(3, 4);
        let full: Vec<BTreeSet<CubeId>> = (0..=4)
            .map(|j| (0..c.cubes_at_level(j)).map(|i| c.cube_at(j, i)).collect())
            .collect();
        let seq = CubeFamilySequence::new(0, full).unwrap();
        assert_eq!(limsup_dimension_estimate(&seq).unwrap(), 3.0);
    }

    #[test]
    fn limsup_errors() {
        let empty = CubeFamilySequence::new(0, vec![BTreeSet::new(); 4]).unwrap();
        assert!(matches!(
            limsup_dimension_estimate(&empty),
            Err(LatticeError::UndefinedEstimate(_))
        ));
        let short = CubeFamilySequence::new(0, vec![BTreeSet::new(); 2]).unwrap();
        assert_eq!(
            limsup_dimension_estimate(&short),
            Err(LatticeError::TooFewLevels(2))
        );
        let wrong = CubeFamilySequence::new(1, vec![BTreeSet::from([CubeId::ROOT])]);
        assert!(matches!(
            wrong,
            Err(LatticeError::FamilyLevelMismatch { .. })
        ));
    }

    #[test]
    fn limsup_skips_empty_levels() {
        let c = cfg(1, 6);
        let fams: Vec<BTreeSet<CubeId>> = (0..=6)
            .map(|j| {
                if j == 3 {
                    BTreeSet::new()
                } else {
                    (0..c.cubes_at_level(j)).map(|i| c.cube_at(j, i)).collect()
                }
            })
            .collect();
        let seq = CubeFamilySequence::new(0, fams).unwrap();
        assert!((limsup_dimension_estimate(&seq).unwrap() - 1.0).abs() < 1e-12);
    }
}
