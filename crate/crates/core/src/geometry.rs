//! Point sets on the unit sphere `S²`, their covering/separation statistics,
//! and the equal-area partition used by the divide-and-conquer fit.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

pub type Vec3 = [f64; 3];

/// Points must have unit norm within this tolerance.
pub const UNIT_TOL: f64 = 1e-10;

/// Default number of candidate directions for the mesh-norm scan.
pub const DEFAULT_GRID_RESOLUTION: usize = 20_000;

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Geodesic distance, accurate for nearly coincident and nearly antipodal pairs.
pub fn geodesic(a: &Vec3, b: &Vec3) -> f64 {
    norm(&cross(a, b)).atan2(dot(a, b))
}

/// A finite set of distinct unit vectors in `R³`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec3>,
    label: String,
}

impl PointSet {
    /// Validates unit norm (within [`UNIT_TOL`]) and pairwise distinctness,
    /// then rescales every point whose norm is off by more than rounding.
    pub fn new(points: Vec<Vec3>, label: impl Into<String>) -> Result<Self> {
        Self::normalized(points, label, UNIT_TOL)
    }

    /// As [`PointSet::new`] with a caller-chosen norm tolerance.
    pub fn normalized(mut points: Vec<Vec3>, label: impl Into<String>, tol: f64) -> Result<Self> {
        for (index, p) in points.iter_mut().enumerate() {
            let n = norm(p);
            if !n.is_finite() || (n - 1.0).abs() > tol {
                return Err(Error::NotUnitVector { index, norm: n });
            }
            if (n - 1.0).abs() > 4.0 * f64::EPSILON {
                *p = [p[0] / n, p[1] / n, p[2] / n];
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| lex_cmp(&points[i], &points[j]));
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::DuplicatePoints { first, second });
            }
        }
        Ok(Self {
            points,
            label: label.into(),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], label: impl Into<String>) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            label: label.into(),
        }
    }

    /// Applies an orthogonal matrix (row-major) to every point.
    pub fn rotated(&self, rotation: &[[f64; 3]; 3]) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = [0.0; 3];
                for (r, row) in rotation.iter().enumerate() {
                    q[r] = dot(row, p);
                }
                let n = norm(&q);
                [q[0] / n, q[1] / n, q[2] / n]
            })
            .collect();
        Self::new(points, self.label.clone())
    }

    /// Concatenation; fails if the union has duplicates.
    pub fn union(&self, other: &PointSet) -> Result<Self> {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self::new(points, format!("{}+{}", self.label, other.label))
    }

    /// Half the minimal pairwise geodesic distance; `+∞` for fewer than two points.
    pub fn separation_radius(&self) -> f64 {
        let mut max_dot = f64::NEG_INFINITY;
        let mut best = (0, 0);
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                let t = dot(&self.points[i], &self.points[j]);
                if t > max_dot {
                    max_dot = t;
                    best = (i, j);
                }
            }
        }
        if self.points.len() < 2 {
            return f64::INFINITY;
        }
        0.5 * geodesic(&self.points[best.0], &self.points[best.1])
    }
}

fn lex_cmp(a: &Vec3, b: &Vec3) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Spherical Fibonacci lattice with `n` points.
pub fn fibonacci_points(n: usize) -> Result<PointSet> {
    if n < 1 {
        return Err(invalid("fibonacci_points needs n >= 1"));
    }
    Ok(PointSet {
        points: fibonacci_raw(n),
        label: format!("fibonacci-{n}"),
    })
}

fn fibonacci_raw(n: usize) -> Vec<Vec3> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// I.i.d. uniform points (normalized standard Gaussians), deterministic in `seed`.
pub fn random_uniform_points(n: usize, seed: u64) -> Result<PointSet> {
    if n < 1 {
        return Err(invalid("random_uniform_points needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let g: Vec3 = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let r = norm(&g);
        if r > 1e-12 {
            points.push([g[0] / r, g[1] / r, g[2] / r]);
        }
    }
    PointSet::new(points, format!("uniform-{n}-seed{seed}"))
}

/// Covering and separation statistics of a point set, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryStats {
    /// Lower estimate of the covering radius `h`, exact up to `grid_spacing`.
    pub mesh_norm: f64,
    /// Half the minimal pairwise geodesic distance; `+∞` for a singleton.
    pub separation_radius: f64,
    /// `mesh_norm / separation_radius`; `+∞` for a singleton.
    pub mesh_ratio: f64,
    /// Nominal spacing `sqrt(4π / M)` of the `M`-point candidate grid.
    pub grid_spacing: f64,
}

impl GeometryStats {
    pub fn is_singleton(&self) -> bool {
        self.separation_radius.is_infinite()
    }

    pub fn is_quasi_uniform(&self, tau: f64) -> bool {
        self.mesh_ratio <= tau
    }
}

/// Mesh norm by a max-min scan over a Fibonacci candidate grid, plus the exact separation radius.
pub fn geometry_stats(ps: &PointSet, grid_resolution: usize) -> Result<GeometryStats> {
    if grid_resolution < 10_000 {
        return Err(invalid(format!(
            "grid_resolution must be >= 10^4, got {grid_resolution}"
        )));
    }
    if ps.is_empty() {
        return Err(invalid("geometry_stats of an empty point set"));
    }
    let grid = fibonacci_raw(grid_resolution);
    let mesh_norm = grid
        .par_iter()
        .map(|c| {
            let mut nearest = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, p) in ps.points.iter().enumerate() {
                let t = dot(c, p);
                if t > best {
                    best = t;
                    nearest = i;
                }
            }
            geodesic(c, &ps.points[nearest])
        })
        .reduce(|| 0.0, f64::max);
    let separation_radius = ps.separation_radius();
    let mesh_ratio = if separation_radius.is_infinite() {
        f64::INFINITY
    } else {
        mesh_norm / separation_radius
    };
    Ok(GeometryStats {
        mesh_norm,
        separation_radius,
        mesh_ratio,
        grid_spacing: (4.0 * PI / grid_resolution as f64).sqrt(),
    })
}

/// Zonal equal-area partition of `S²` into `cells` regions: two polar caps plus
/// latitude collars, each collar cut into equal longitudinal sectors.
#[derive(Debug, Clone)]
pub struct EqualAreaCells {
    /// Lower `z` boundary of each zone (descending), starting with the north cap.
    zone_floor: Vec<f64>,
    /// Sector count per zone.
    zone_sectors: Vec<usize>,
}

impl EqualAreaCells {
    pub fn new(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(invalid("need at least one cell"));
        }
        if cells == 1 {
            return Ok(Self {
                zone_floor: vec![-1.0],
                zone_sectors: vec![1],
            });
        }
        if cells == 2 {
            return Ok(Self {
                zone_floor: vec![0.0, -1.0],
                zone_sectors: vec![1, 1],
            });
        }
        let m = cells as f64;
        let area = 4.0 * PI / m;
        let cap_angle = (1.0 - 2.0 / m).acos();
        let collars = (((PI - 2.0 * cap_angle) / area.sqrt()).round() as usize).max(1);
        let width = (PI - 2.0 * cap_angle) / collars as f64;
        let cap_area = |theta: f64| 2.0 * PI * (1.0 - theta.cos());

        let mut counts = Vec::with_capacity(collars);
        let mut carry = 0.0;
        for i in 1..=collars {
            let top = cap_angle + (i - 1) as f64 * width;
            let ideal = (cap_area(top + width) - cap_area(top)) / area;
            let c = (ideal + carry).round().max(0.0);
            carry += ideal - c;
            counts.push(c as usize);
        }
        // Rounding can leave the collars one cell off in total; fix it on the widest collar.
        let total: usize = counts.iter().sum();
        let target = cells - 2;
        if total != target {
            let widest = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
            counts[widest] = (counts[widest] as i64 + target as i64 - total as i64).max(0) as usize;
        }

        let mut zone_floor = Vec::new();
        let mut zone_sectors = Vec::new();
        let mut cumulative = 1usize;
        zone_floor.push(1.0 - 2.0 / m);
        zone_sectors.push(1);
        for c in counts.into_iter().filter(|&c| c > 0) {
            cumulative += c;
            zone_floor.push(1.0 - 2.0 * cumulative as f64 / m);
            zone_sectors.push(c);
        }
        zone_floor.push(-1.0);
        zone_sectors.push(1);
        Ok(Self {
            zone_floor,
            zone_sectors,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.zone_sectors.iter().sum()
    }

    /// Index of the cell containing `p`, counting zones north to south and sectors eastward.
    pub fn cell_of(&self, p: &Vec3) -> usize {
        let zone = self
            .zone_floor
            .iter()
            .position(|&floor| p[2] >= floor)
            .unwrap_or(self.zone_floor.len() - 1);
        let offset: usize = self.zone_sectors[..zone].iter().sum();
        let sectors = self.zone_sectors[zone];
        let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
        let sector = ((phi / (2.0 * PI) * sectors as f64) as usize).min(sectors - 1);
        offset + sector
    }
}

/// One block of a partition: the member indices into the parent set, the points, and their stats.
#[derive(Debug, Clone)]
pub struct Subset {
    pub indices: Vec<usize>,
    pub points: PointSet,
    pub stats: GeometryStats,
}

/// A block may run at most this many points ahead of the smallest block while partitioning.
pub const BALANCE_SLACK: usize = 8;

/// Splits `ps` into `parts` disjoint blocks, each spread over the whole sphere.
///
/// Points are visited cell by cell through an equal-area decomposition into
/// about `|Λ|/parts` cells (longitude order within a cell), so neighbours are
/// visited close together. Each point joins the block whose closest member is
/// farthest from it, among blocks at most [`BALANCE_SLACK`] points larger than
/// the smallest one. Every block thus receives roughly one point per cell and
/// stays separated on the scale of the cell size.
pub fn partition_indices(ps: &PointSet, parts: usize) -> Result<Vec<Vec<usize>>> {
    let n = ps.len();
    if parts < 1 || (parts > 1 && parts * 4 > n) {
        return Err(invalid(format!(
            "number of blocks {parts} outside [1, |Λ|/4] for |Λ| = {n}"
        )));
    }
    if parts == 1 {
        return Ok(vec![(0..n).collect()]);
    }
    let cells = EqualAreaCells::new((n / parts).max(1))?;
    let mut order: Vec<(usize, f64, usize)> = ps
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (cells.cell_of(p), p[1].atan2(p[0]), i))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for &(_, _, i) in &order {
        let min_count = blocks.iter().map(Vec::len).min().unwrap();
        let p = &ps.points[i];
        let mut best = None;
        let mut best_dot = f64::INFINITY;
        for j in (0..parts).filter(|&j| blocks[j].len() <= min_count + BALANCE_SLACK) {
            let closest = blocks[j]
                .iter()
                .map(|&m| dot(p, &ps.points[m]))
                .fold(f64::NEG_INFINITY, f64::max);
            if closest < best_dot {
                best_dot = closest;
                best = Some(j);
            }
        }
        blocks[best.unwrap()].push(i);
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    Ok(blocks)
}

/// Equal-area partition into `parts` blocks, each with its own geometry statistics.
pub fn partition_equal_area(
    ps: &PointSet,
    parts: usize,
    grid_resolution: usize,
) -> Result<Vec<Subset>> {
    partition_indices(ps, parts)?
        .into_iter()
        .enumerate()
        .map(|(j, indices)| {
            let points = ps.subset(&indices, format!("{}[{j}/{parts}]", ps.label()));
            let stats = geometry_stats(&points, grid_resolution)?;
            Ok(Subset {
                indices,
                points,
                stats,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn octahedron() -> PointSet {
        PointSet::new(
            vec![
                [1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, -1.0],
            ],
            "octahedron",
        )
        .unwrap()
    }

    /// Covering radius oracle: brute force over a dense latitude/longitude grid.
    fn mesh_norm_oracle(ps: &PointSet, steps: usize) -> f64 {
        let mut h: f64 = 0.0;
        for a in 0..=steps {
            let theta = PI * a as f64 / steps as f64;
            for b in 0..(2 * steps) {
                let phi = PI * b as f64 / steps as f64;
                let c = [
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ];
                let d = ps
                    .points()
                    .iter()
                    .map(|p| geodesic(&c, p))
                    .fold(f64::INFINITY, f64::min);
                h = h.max(d);
            }
        }
        h
    }

    #[test]
    fn octahedron_stats() {
        let stats = geometry_stats(&octahedron(), 10_000).unwrap();
        assert!((stats.separation_radius - PI / 4.0).abs() < 1e-15);
        let exact = (1.0 / 3f64.sqrt()).acos();
        assert!((exact - 0.9553).abs() < 1e-4);
        assert!(stats.mesh_norm <= exact + 1e-12);
        assert!(exact - stats.mesh_norm <= 2.0 * stats.grid_spacing);
        assert!((mesh_norm_oracle(&octahedron(), 400) - exact).abs() < 0.01);
    }

    #[test]
    fn validation() {
        assert!(matches!(
            PointSet::new(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]], "dup"),
            Err(Error::DuplicatePoints {
                first: 0,
                second: 1
            })
        ));
        assert!(matches!(
            PointSet::new(vec![[0.0, 0.0, 1.1]], "long"),
            Err(Error::NotUnitVector { index: 0, .. })
        ));
        assert!(fibonacci_points(0).is_err());
        assert!(random_uniform_points(0, 1).is_err());
        assert!(geometry_stats(&octahedron(), 100).is_err());
    }

    #[test]
    fn singleton_convention() {
        let one = fibonacci_points(1).unwrap();
        assert_eq!(one.len(), 1);
        let stats = geometry_stats(&one, 10_000).unwrap();
        assert!(stats.is_singleton());
        assert!(stats.separation_radius.is_infinite());
    }

    #[test]
    fn fibonacci_is_quasi_uniform() {
        let stats = geometry_stats(&fibonacci_points(100).unwrap(), 20_000).unwrap();
        assert!(stats.mesh_ratio >= 1.0);
        assert!(stats.mesh_ratio <= 4.0, "{stats:?}");
        let big = geometry_stats(&fibonacci_points(1000).unwrap(), 20_000).unwrap();
        assert!(big.mesh_norm <= 2.0 * (4.0 * PI / 1000.0).sqrt());
        for n in [50, 200, 800, 2000, 5000] {
            let s = geometry_stats(&fibonacci_points(n).unwrap(), 10_000).unwrap();
            assert!(s.mesh_ratio >= 1.0 && s.mesh_ratio <= 4.0, "n={n}: {s:?}");
        }
    }

    #[test]
    fn random_points_are_deterministic_and_centered() {
        assert_eq!(
            random_uniform_points(50, 9).unwrap(),
            random_uniform_points(50, 9).unwrap()
        );
        assert_ne!(
            random_uniform_points(50, 9).unwrap(),
            random_uniform_points(50, 10).unwrap()
        );
        let ps = random_uniform_points(10_000, 1).unwrap();
        let mut mean = [0.0; 3];
        for p in ps.points() {
            for c in 0..3 {
                mean[c] += p[c] / 10_000.0;
            }
        }
        assert!(norm(&mean) < 0.05);
        let two = random_uniform_points(2, 3).unwrap();
        assert_ne!(two.points()[0], two.points()[1]);
    }

    #[test]
    fn adding_points_never_increases_statistics() {
        let base = fibonacci_points(60).unwrap();
        let extra = random_uniform_points(5, 77).unwrap();
        let mut current = base.clone();
        let mut stats = geometry_stats(&current, 10_000).unwrap();
        for p in extra.points() {
            current = current
                .union(&PointSet::new(vec![*p], "p").unwrap())
                .unwrap();
            let next = geometry_stats(&current, 10_000).unwrap();
            assert!(next.mesh_norm <= stats.mesh_norm);
            assert!(next.separation_radius <= stats.separation_radius);
            stats = next;
        }
    }

    #[test]
    fn equal_area_cells_cover_and_balance() {
        for m in [1, 2, 3, 7, 25, 100, 333] {
            let cells = EqualAreaCells::new(m).unwrap();
            assert_eq!(cells.num_cells(), m);
            let ps = fibonacci_points(50 * m).unwrap();
            let mut counts = vec![0usize; m];
            for p in ps.points() {
                counts[cells.cell_of(p)] += 1;
            }
            // Equal areas: counts of a fine uniform lattice are close to 50 each.
            for &c in &counts {
                assert!((25..=75).contains(&c), "m={m}: {counts:?}");
            }
        }
    }

    #[test]
    fn partition_contract() {
        let ps = fibonacci_points(400).unwrap();
        let single = partition_equal_area(&ps, 1, 10_000).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(
            single[0].points,
            ps.clone().with_label(single[0].points.label())
        );

        let blocks = partition_equal_area(&ps, 4, 10_000).unwrap();
        let mut seen = vec![0usize; ps.len()];
        for b in &blocks {
            assert!((60..=140).contains(&b.indices.len()));
            for &i in &b.indices {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(partition_indices(&ps, 0).is_err());
        assert!(partition_indices(&ps, 101).is_err());
    }

    #[test]
    fn partition_blocks_stay_quasi_uniform() {
        let ps = fibonacci_points(1200).unwrap();
        let tau = geometry_stats(&ps, 10_000).unwrap().mesh_ratio;
        for parts in [2, 5, 12, 24, 60] {
            for b in partition_equal_area(&ps, parts, 10_000).unwrap() {
                assert!(
                    b.stats.mesh_ratio <= 2.0 * tau + 2.0,
                    "J={parts}: {:?} vs tau {tau}",
                    b.stats
                );
            }
        }
    }
}
