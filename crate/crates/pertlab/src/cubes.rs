//! Dyadic geometry in R^{2n}: homotheties, parents, admissible and maximal
//! admissible cubes, windowed enumeration, and partner counting. All
//! predicates run on exact integer corner/level arithmetic; the
//! diagonal-avoidance test is an open-set condition that floating point
//! would misclassify on boundary-touching cubes.

use std::io::Write as IoWrite;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CubesError {
    #[error("ambient dimension {0} is odd; admissibility needs a Q x R split")]
    OddAmbientDimension(usize),
    #[error("level cap {max_level} too small: covered {covered} of {volume} window volume")]
    LevelCapTooSmall {
        max_level: u32,
        covered: u128,
        volume: u128,
    },
    #[error("window too small: candidate partner region extends outside it")]
    WindowTooSmall,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Half-open dyadic cube: product over axes of [j_i 2^m, (j_i + 1) 2^m).
/// The base scale is sidelength 1 (level 0); the construction never
/// subdivides below it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicCube {
    pub level: u32,
    pub corner: Vec<i64>,
}

fn pow2(level: u32) -> i64 {
    1i64 << level
}

impl DyadicCube {
    pub fn new(level: u32, corner: Vec<i64>) -> Self {
        DyadicCube { level, corner }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> i64 {
        pow2(self.level)
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            level: self.level + 1,
            corner: self.corner.iter().map(|c| c.div_euclid(2)).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.side() as f64;
        self.corner
            .iter()
            .zip(x.iter())
            .all(|(&c, &v)| c as f64 * s <= v && v < (c + 1) as f64 * s)
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side() as f64;
        self.corner.iter().map(|&c| (c as f64 + 0.5) * s).collect()
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        let s = self.side() as f64;
        self.corner.iter().map(|&c| c as f64 * s).collect()
    }
}

/// Axis-aligned box with corners in quarter units, so homotheties by
/// K in {1, 3/2, 2, 3} of dyadic cubes stay exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuarterBox {
    pub lo4: Vec<i64>,
    pub hi4: Vec<i64>,
}

impl QuarterBox {
    pub fn lo_f64(&self) -> Vec<f64> {
        self.lo4.iter().map(|&v| v as f64 / 4.0).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        self.hi4.iter().map(|&v| v as f64 / 4.0).collect()
    }
}

/// K[Q]: the box with the same center as Q and sidelength K * l(Q), K given
/// as the exact fraction num/den.
pub fn homothety(q: &DyadicCube, num: i64, den: i64) -> QuarterBox {
    assert!(num > 0 && den > 0);
    let s = q.side();
    // Center in quarters is (2j + 1) * 2^{m+1}; half-side in quarters is
    // K * 2^{m+1}.
    let half4 = num * 2 * s;
    assert!(half4 % den == 0, "homothety {num}/{den} not exact in quarters at level {}", q.level);
    let half4 = half4 / den;
    let lo4 = q.corner.iter().map(|&j| (2 * j + 1) * 2 * s - half4).collect();
    let hi4 = q.corner.iter().map(|&j| (2 * j + 1) * 2 * s + half4).collect();
    QuarterBox { lo4, hi4 }
}

/// True when some axis has |q_i - r_i| >= 2, i.e. the open doubles 2[Q] and
/// 2[R] are disjoint. For same-level corners q, r the open intervals
/// ((q - 1/2) s, (q + 3/2) s) and ((r - 1/2) s, (r + 3/2) s) overlap exactly
/// when |q - r| <= 1.
fn separated(q: &[i64], r: &[i64]) -> bool {
    q.iter().zip(r.iter()).any(|(&a, &b)| (a - b).abs() >= 2)
}

fn pair_admissible(level: u32, q: &[i64], r: &[i64]) -> bool {
    level == 0 || separated(q, r)
}

/// Maximality of the pair Q x R: admissible with a non-admissible parent.
/// Admissibility is antitone along ancestor chains above level 0 (corner
/// differences can only shrink under floor halving), so any admissible
/// strict dyadic superset would force the parent to be admissible too.
fn pair_maximal(level: u32, q: &[i64], r: &[i64]) -> bool {
    if !pair_admissible(level, q, r) {
        return false;
    }
    let qp: Vec<i64> = q.iter().map(|c| c.div_euclid(2)).collect();
    let rp: Vec<i64> = r.iter().map(|c| c.div_euclid(2)).collect();
    !separated(&qp, &rp)
}

/// Does the open interior of 2[C] avoid the diagonal {(x, x)}? Level-0 cubes
/// are admissible by definition.
pub fn is_admissible(c: &DyadicCube) -> Result<bool, CubesError> {
    let d = c.dim();
    if d % 2 != 0 {
        return Err(CubesError::OddAmbientDimension(d));
    }
    let (q, r) = c.corner.split_at(d / 2);
    Ok(pair_admissible(c.level, q, r))
}

/// Admissible and not contained in a larger admissible cube.
pub fn is_maximal(c: &DyadicCube) -> Result<bool, CubesError> {
    let d = c.dim();
    if d % 2 != 0 {
        return Err(CubesError::OddAmbientDimension(d));
    }
    let (q, r) = c.corner.split_at(d / 2);
    Ok(pair_maximal(c.level, q, r))
}

/// The unique maximal admissible cube containing a point of R^{2n}: start at
/// the level-0 cube and ascend while the parent stays admissible.
pub fn maximal_cube_containing(point: &[f64]) -> Result<DyadicCube, CubesError> {
    let d = point.len();
    if d % 2 != 0 {
        return Err(CubesError::OddAmbientDimension(d));
    }
    let mut corner: Vec<i64> = point.iter().map(|&v| v.floor() as i64).collect();
    let mut level = 0u32;
    loop {
        let parent: Vec<i64> = corner.iter().map(|c| c.div_euclid(2)).collect();
        let (pq, pr) = parent.split_at(d / 2);
        if !separated(pq, pr) {
            return Ok(DyadicCube::new(level, corner));
        }
        corner = parent;
        level += 1;
    }
}

/// Half-open integer box (window) in Z^d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IntBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(hi.iter()).all(|(a, b)| a < b));
        IntBox { lo, hi }
    }

    pub fn cube_box(d: usize, lo: i64, hi: i64) -> Self {
        IntBox::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> u128 {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(a, b)| (b - a) as u128)
            .product()
    }
}

/// Volume of the intersection of a dyadic cube (level, corner over given
/// axes) with a window slice; 0 when disjoint.
fn clipped_volume(level: u32, corner: &[i64], lo: &[i64], hi: &[i64]) -> u128 {
    let s = pow2(level);
    let mut vol: u128 = 1;
    for i in 0..corner.len() {
        let a = (corner[i] * s).max(lo[i]);
        let b = ((corner[i] + 1) * s).min(hi[i]);
        if b <= a {
            return 0;
        }
        vol *= (b - a) as u128;
    }
    vol
}

/// Enumerates, per axis, the 6 corner values a maximal partner can take:
/// children of the three parent neighbors {parent(q) - 1, parent(q),
/// parent(q) + 1}. Any maximal R-corner lies in this set because the parent
/// of Q x R must be non-admissible.
fn candidate_axis_values(q: i64) -> [i64; 6] {
    let p = q.div_euclid(2);
    [
        2 * (p - 1),
        2 * (p - 1) + 1,
        2 * p,
        2 * p + 1,
        2 * (p + 1),
        2 * (p + 1) + 1,
    ]
}

fn for_each_candidate<F: FnMut(&[i64])>(q: &[i64], mut f: F) {
    let n = q.len();
    let axes: Vec<[i64; 6]> = q.iter().map(|&v| candidate_axis_values(v)).collect();
    let total = 6usize.pow(n as u32);
    let mut r = vec![0i64; n];
    for idx in 0..total {
        let mut rem = idx;
        for i in 0..n {
            r[i] = axes[i][rem % 6];
            rem /= 6;
        }
        f(&r);
    }
}

/// All corners r with Q x R maximal admissible, for Q = (level, q).
pub fn maximal_partners(level: u32, q: &[i64]) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for_each_candidate(q, |r| {
        if pair_maximal(level, q, r) {
            out.push(r.to_vec());
        }
    });
    out
}

/// Number of R with Q x R maximal admissible. Errors when the candidate
/// region is not contained in the window, since the window could then
/// truncate the partner set.
pub fn partner_count(q: &DyadicCube, window: &IntBox) -> Result<usize, CubesError> {
    if window.dim() != q.dim() {
        return Err(CubesError::DimensionMismatch {
            expected: q.dim(),
            got: window.dim(),
        });
    }
    let s = q.side();
    for i in 0..q.dim() {
        let p = q.corner[i].div_euclid(2);
        // Candidate region on this axis: [(p - 1) 2^{m+1}, (p + 2) 2^{m+1}).
        if (p - 1) * 2 * s < window.lo[i] || (p + 2) * 2 * s > window.hi[i] {
            return Err(CubesError::WindowTooSmall);
        }
    }
    Ok(maximal_partners(q.level, &q.corner).len())
}

/// Windowed list of maximal admissible cubes; disjoint and covering.
#[derive(Debug, Clone)]
pub struct CubeDecomposition {
    pub window: IntBox,
    pub cubes: Vec<DyadicCube>,
}

impl CubeDecomposition {
    pub fn per_level_counts(&self) -> Vec<(u32, usize)> {
        let mut map = std::collections::BTreeMap::new();
        for c in &self.cubes {
            *map.entry(c.level).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    /// One JSON object per line: {"level": m, "corner": [...]}.
    pub fn write_jsonl<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        for c in &self.cubes {
            serde_json::to_writer(&mut w, c)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Every maximal admissible cube meeting the window, found by scanning the
/// Q-side cubes per level and testing the 6^n candidate partners. Coverage
/// is certified by exact clipped-volume accounting: the cubes are pairwise
/// disjoint, so covering the window is equivalent to their clipped volumes
/// summing to the window volume.
pub fn enumerate_maximal(window: &IntBox, max_level: u32) -> Result<CubeDecomposition, CubesError> {
    let d = window.dim();
    if d % 2 != 0 {
        return Err(CubesError::OddAmbientDimension(d));
    }
    let n = d / 2;
    let (wx_lo, wy_lo) = window.lo.split_at(n);
    let (wx_hi, wy_hi) = window.hi.split_at(n);

    let mut cubes = Vec::new();
    let mut covered: u128 = 0;
    for level in 0..=max_level {
        let s = pow2(level);
        let q_lo: Vec<i64> = wx_lo.iter().map(|&v| v.div_euclid(s)).collect();
        let q_hi: Vec<i64> = wx_hi.iter().map(|&v| (v - 1).div_euclid(s)).collect();
        let counts: Vec<i64> = q_lo
            .iter()
            .zip(q_hi.iter())
            .map(|(a, b)| b - a + 1)
            .collect();
        let total: i64 = counts.iter().product();
        let mut q = vec![0i64; n];
        for idx in 0..total {
            let mut rem = idx;
            for i in 0..n {
                q[i] = q_lo[i] + rem % counts[i];
                rem /= counts[i];
            }
            for_each_candidate(&q, |r| {
                if !pair_maximal(level, &q, r) {
                    return;
                }
                let vy = clipped_volume(level, r, wy_lo, wy_hi);
                if vy == 0 {
                    return;
                }
                let vx = clipped_volume(level, &q, wx_lo, wx_hi);
                covered += vx * vy;
                let mut corner = q.clone();
                corner.extend_from_slice(r);
                cubes.push(DyadicCube::new(level, corner));
            });
        }
    }
    let volume = window.volume();
    if covered != volume {
        return Err(CubesError::LevelCapTooSmall {
            max_level,
            covered,
            volume,
        });
    }
    cubes.sort();
    Ok(CubeDecomposition {
        window: window.clone(),
        cubes,
    })
}

/// Aggregate statistics over the square window [0, side)^{2n}, streamed
/// without materializing the decomposition (the n = 3, side = 64 scan has
/// tens of millions of cubes).
#[derive(Debug, Clone)]
pub struct WindowScanStats {
    pub n: usize,
    pub side: i64,
    pub per_level: Vec<(u32, u64)>,
    pub max_partners: usize,
    pub partner_bound: usize,
    pub covered: u128,
    pub volume: u128,
}

impl WindowScanStats {
    pub fn covers(&self) -> bool {
        self.covered == self.volume
    }
}

pub fn scan_square_window(n: usize, side: i64, max_level: u32) -> Result<WindowScanStats, CubesError> {
    use rayon::prelude::*;
    assert!(side > 0 && n >= 1);
    let lo = vec![0i64; n];
    let hi = vec![side; n];

    let mut per_level = Vec::new();
    let mut max_partners = 0usize;
    let mut covered: u128 = 0;
    for level in 0..=max_level {
        let s = pow2(level);
        let q_count = (side + s - 1) / s; // per axis; q >= 0 since window starts at 0
        let total = (q_count as u64).pow(n as u32);
        let (cubes, partners, vol) = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut rem = idx;
                let mut q = vec![0i64; n];
                for qi in q.iter_mut() {
                    *qi = (rem % q_count as u64) as i64;
                    rem /= q_count as u64;
                }
                let mut local_cubes = 0u64;
                let mut local_partners = 0usize;
                let mut local_vol: u128 = 0;
                let vx = clipped_volume(level, &q, &lo, &hi);
                for_each_candidate(&q, |r| {
                    if !pair_maximal(level, &q, r) {
                        return;
                    }
                    local_partners += 1;
                    let vy = clipped_volume(level, r, &lo, &hi);
                    if vy > 0 {
                        local_cubes += 1;
                        local_vol += vx * vy;
                    }
                });
                (local_cubes, local_partners, local_vol)
            })
            .reduce(
                || (0u64, 0usize, 0u128),
                |a, b| (a.0 + b.0, a.1.max(b.1), a.2 + b.2),
            );
        per_level.push((level, cubes));
        max_partners = max_partners.max(partners);
        covered += vol;
    }
    Ok(WindowScanStats {
        n,
        side,
        per_level,
        max_partners,
        partner_bound: 6usize.pow(n as u32),
        covered,
        volume: (side as u128).pow(2 * n as u32),
    })
}
