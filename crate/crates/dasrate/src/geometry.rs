//! Points, cells, antenna deployments, 1-D Voronoi partitions, lattice
//! constructions, and the truncated lattice-sum diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location in `R^d` (cell-length units).
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("point needs dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("point coordinates must be finite".into()));
        }
        Ok(Point { coords })
    }

    /// Convenience constructor for a one-dimensional point.
    pub fn scalar(x: f64) -> Self {
        Point { coords: vec![x] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point { coords }
    }
}

/// Euclidean distance between coordinate slices of equal length.
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The integration region hosting the users. Either an axis-aligned box of
/// side `M` (optionally translated) or all of `R^d` for densities with
/// unbounded support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cell {
    Box {
        side: f64,
        dim: usize,
        #[serde(default)]
        origin: Vec<f64>,
    },
    AllSpace { dim: usize },
}

impl Cell {
    /// `[0, side]^dim`.
    pub fn bounded_box(side: f64, dim: usize) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidParameter("box side must be positive and finite".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("cell dimension must be >= 1".into()));
        }
        Ok(Cell::Box { side, dim, origin: vec![0.0; dim] })
    }

    pub fn unit_box(dim: usize) -> Self {
        Cell::bounded_box(1.0, dim).expect("unit box is valid")
    }

    /// Translated box `origin + [0, side]^dim`.
    pub fn translated_box(side: f64, origin: Vec<f64>) -> Result<Self> {
        let dim = origin.len();
        let mut cell = Cell::bounded_box(side, dim)?;
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("box origin must be finite".into()));
        }
        if let Cell::Box { origin: o, .. } = &mut cell {
            *o = origin;
        }
        Ok(cell)
    }

    pub fn all_space(dim: usize) -> Self {
        Cell::AllSpace { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cell::Box { dim, .. } => *dim,
            Cell::AllSpace { dim } => *dim,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Cell::Box { .. })
    }

    /// Lebesgue measure; `None` when infinite.
    pub fn measure(&self) -> Option<f64> {
        match self {
            Cell::Box { side, dim, .. } => Some(side.powi(*dim as i32)),
            Cell::AllSpace { .. } => None,
        }
    }

    pub fn side(&self) -> Option<f64> {
        match self {
            Cell::Box { side, .. } => Some(*side),
            Cell::AllSpace { .. } => None,
        }
    }

    pub fn origin(&self) -> Option<&[f64]> {
        match self {
            Cell::Box { origin, .. } => Some(origin),
            Cell::AllSpace { .. } => None,
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            Cell::Box { side, dim, origin } => {
                u.len() == *dim
                    && u.iter()
                        .zip(origin)
                        .all(|(x, o)| *x >= *o && *x <= *o + *side)
            }
            Cell::AllSpace { dim } => u.len() == *dim,
        }
    }

    /// Project a point onto the cell (identity for unbounded cells).
    pub(crate) fn clamp(&self, u: &mut [f64]) {
        if let Cell::Box { side, origin, .. } = self {
            for (x, o) in u.iter_mut().zip(origin) {
                *x = x.clamp(*o, *o + *side);
            }
        }
    }
}

/// An ordered list of antenna-group locations. Duplicates are allowed: the
/// rate expression averages over the list, so repeated entries are
/// meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    points: Vec<Point>,
    dim: usize,
}

impl Deployment {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let dim = points
            .first()
            .ok_or_else(|| Error::InvalidParameter("deployment needs at least one point".into()))?
            .dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch("all deployment points must share one dimension".into()));
        }
        Ok(Deployment { points, dim })
    }

    pub fn from_coords(coords: Vec<Vec<f64>>) -> Result<Self> {
        Deployment::new(coords.into_iter().map(Point::from).collect())
    }

    /// One-dimensional deployment from plain scalars.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Deployment::new(xs.iter().map(|&x| Point::scalar(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Row-major `n x d` copy of the coordinates for tight inner loops.
    pub(crate) fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * self.dim);
        for p in &self.points {
            out.extend_from_slice(p.coords());
        }
        out
    }

    pub(crate) fn from_flat(flat: &[f64], dim: usize) -> Self {
        let points = flat
            .chunks_exact(dim)
            .map(|c| Point::from(c.to_vec()))
            .collect();
        Deployment { points, dim }
    }
}

/// Index and distance of the antenna nearest to `u`; ties resolve to the
/// lowest index.
pub fn nearest_antenna(u: &Point, x: &Deployment) -> Result<(usize, f64)> {
    if u.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has dimension {}, deployment has {}",
            u.dim(),
            x.dim()
        )));
    }
    Ok(nearest_flat(u.coords(), &x.flat(), x.dim()))
}

/// Hot-path variant on flat buffers; assumes dimensions agree.
pub(crate) fn nearest_flat(u: &[f64], flat: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in flat.chunks_exact(dim).enumerate() {
        let d2 = dist_sq(u, p);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// Partition `[origin, origin + M]` into the `n` nearest-point intervals of a
/// one-dimensional deployment. Interval `i` belongs to point `i` of `x`;
/// exact ties at shared locations give the higher index an empty interval.
pub fn voronoi_partition_1d(x: &Deployment, cell: &Cell) -> Result<Vec<(f64, f64)>> {
    if x.dim() != 1 || cell.dim() != 1 {
        return Err(Error::DimensionMismatch("voronoi_partition_1d requires d = 1".into()));
    }
    let (side, origin) = match cell {
        Cell::Box { side, origin, .. } => (*side, origin[0]),
        Cell::AllSpace { .. } => {
            return Err(Error::Unsupported("voronoi_partition_1d requires a box cell".into()))
        }
    };
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x.points()[a].coords()[0]
            .partial_cmp(&x.points()[b].coords()[0])
            .unwrap()
            .then(a.cmp(&b))
    });
    let lo = origin;
    let hi = origin + side;
    let mut intervals = vec![(0.0, 0.0); x.len()];
    for (rank, &idx) in order.iter().enumerate() {
        let left = if rank == 0 {
            lo
        } else {
            let a = x.points()[order[rank - 1]].coords()[0];
            let b = x.points()[idx].coords()[0];
            0.5 * (a + b)
        };
        let right = if rank + 1 == order.len() {
            hi
        } else {
            let a = x.points()[idx].coords()[0];
            let b = x.points()[order[rank + 1]].coords()[0];
            0.5 * (a + b)
        };
        intervals[idx] = (left.clamp(lo, hi), right.clamp(lo, hi));
    }
    Ok(intervals)
}

/// Largest `k` with `k^d <= n`.
fn grid_order(n: usize, d: usize) -> usize {
    let mut k = 1usize;
    loop {
        let next = k + 1;
        let mut pow = 1usize;
        let mut overflow = false;
        for _ in 0..d {
            pow = match pow.checked_mul(next) {
                Some(p) => p,
                None => {
                    overflow = true;
                    break;
                }
            };
        }
        if overflow || pow > n {
            return k;
        }
        k = next;
    }
}

/// Uniform square-lattice deployment of exactly `n` points in a box cell:
/// the `k = floor(n^(1/d))` grid of cube centres, with the remaining
/// `n - k^d` entries duplicating grid points round-robin.
pub fn square_lattice_deployment(n: usize, cell: &Cell) -> Result<Deployment> {
    if n == 0 {
        return Err(Error::InvalidParameter("deployment size must be >= 1".into()));
    }
    let (side, dim, origin) = match cell {
        Cell::Box { side, dim, origin } => (*side, *dim, origin.clone()),
        Cell::AllSpace { .. } => {
            return Err(Error::Unsupported("square lattice requires a box cell".into()))
        }
    };
    let k = grid_order(n, dim);
    let grid_len = k.pow(dim as u32);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut idx = vec![0usize; dim];
    for _ in 0..grid_len {
        let coords: Vec<f64> = idx
            .iter()
            .zip(&origin)
            .map(|(&j, &o)| o + side * (2.0 * j as f64 + 1.0) / (2.0 * k as f64))
            .collect();
        pts.push(coords);
        for axis in (0..dim).rev() {
            idx[axis] += 1;
            if idx[axis] < k {
                break;
            }
            idx[axis] = 0;
        }
    }
    for extra in 0..n - grid_len {
        pts.push(pts[extra % grid_len].clone());
    }
    Deployment::from_coords(pts)
}

/// Triangular-lattice deployment of exactly `n` points in a 2-D box cell
/// (hexagonal Voronoi cells). The spacing starts at the equal-area value and
/// shrinks until the crop holds at least `n` points; excess points nearest
/// the boundary are dropped.
pub fn hex_lattice_deployment(n: usize, cell: &Cell) -> Result<Deployment> {
    if cell.dim() != 2 {
        return Err(Error::DimensionMismatch("hex lattice requires d = 2".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("deployment size must be >= 1".into()));
    }
    let (side, origin) = match cell {
        Cell::Box { side, origin, .. } => (*side, origin.clone()),
        Cell::AllSpace { .. } => {
            return Err(Error::Unsupported("hex lattice requires a box cell".into()))
        }
    };
    let sqrt3 = 3.0f64.sqrt();
    let mut spacing = side * (2.0 / (sqrt3 * n as f64)).sqrt();
    let cx = origin[0] + side / 2.0;
    let cy = origin[1] + side / 2.0;
    let in_box = |x: f64, y: f64| {
        x >= origin[0] && x <= origin[0] + side && y >= origin[1] && y <= origin[1] + side
    };

    let generate = |a: f64| -> Vec<Vec<f64>> {
        let row_h = a * sqrt3 / 2.0;
        let k_max = (side / (2.0 * row_h)).floor() as i64 + 1;
        let m_max = (side / a).floor() as i64 + 2;
        let mut pts = Vec::new();
        for k in -k_max..=k_max {
            let y = cy + k as f64 * row_h;
            let shift = if k.rem_euclid(2) == 1 { 0.5 } else { 0.0 };
            for m in -m_max..=m_max {
                let x = cx + (m as f64 + shift) * a;
                if in_box(x, y) {
                    pts.push(vec![x, y]);
                }
            }
        }
        pts
    };

    let mut pts = generate(spacing);
    let mut guard = 0;
    while pts.len() < n && guard < 500 {
        spacing *= 0.98;
        pts = generate(spacing);
        guard += 1;
    }
    if pts.len() < n {
        // Degenerate sides only; duplicate the deepest interior points.
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let depth = |p: &[f64]| {
            (p[0] - origin[0])
                .min(origin[0] + side - p[0])
                .min(p[1] - origin[1])
                .min(origin[1] + side - p[1])
        };
        order.sort_by(|&a, &b| depth(&pts[b]).partial_cmp(&depth(&pts[a])).unwrap().then(a.cmp(&b)));
        let mut i = 0;
        while pts.len() < n {
            pts.push(pts[order[i % order.len()]].clone());
            i += 1;
        }
    } else if pts.len() > n {
        let depth = |p: &[f64]| {
            (p[0] - origin[0])
                .min(origin[0] + side - p[0])
                .min(p[1] - origin[1])
                .min(origin[1] + side - p[1])
        };
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| depth(&pts[a]).partial_cmp(&depth(&pts[b])).unwrap().then(a.cmp(&b)));
        let drop: std::collections::HashSet<usize> =
            order[..pts.len() - n].iter().copied().collect();
        pts = pts
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, p)| p)
            .collect();
    }
    Deployment::from_coords(pts)
}

/// Lattice family for the sum diagnostic: `{scale * B * z : z in Z^d}` with
/// `det B = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    kind: LatticeKind,
    scale: f64,
    /// Row-major `d x d` basis with unit determinant.
    basis: Vec<f64>,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Integer,
    Hexagonal,
}

impl LatticeSpec {
    /// The scaled integer lattice `scale * Z^d`.
    pub fn integer(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("lattice dimension must be >= 1".into()));
        }
        let mut basis = vec![0.0; dim * dim];
        for i in 0..dim {
            basis[i * dim + i] = 1.0;
        }
        Self::with_basis(LatticeKind::Integer, dim, scale, basis)
    }

    /// Unit-determinant triangular lattice in the plane (hexagonal Voronoi
    /// cells), scaled by `scale`.
    pub fn hexagonal(scale: f64) -> Result<Self> {
        let c = (2.0 / 3.0f64.sqrt()).sqrt();
        // Columns c*(1, 0) and c*(1/2, sqrt(3)/2); det = c^2 * sqrt(3)/2 = 1.
        let basis = vec![c, c * 0.5, 0.0, c * 3.0f64.sqrt() / 2.0];
        Self::with_basis(LatticeKind::Hexagonal, 2, scale, basis)
    }

    fn with_basis(kind: LatticeKind, dim: usize, scale: f64, basis: Vec<f64>) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter("lattice scale must be positive".into()));
        }
        let det = determinant(&basis, dim);
        if (det - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "lattice basis must have unit determinant, got {det}"
            )));
        }
        Ok(LatticeSpec { kind, scale, basis, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    fn point(&self, z: &[i64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.basis[i * self.dim + j] * z[j] as f64;
            }
            out[i] = self.scale * acc;
        }
    }
}

fn determinant(m: &[f64], d: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).unwrap())
            .unwrap();
        if a[pivot * d + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            det = -det;
        }
        det *= a[col * d + col];
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            for j in col..d {
                a[row * d + j] -= f * a[col * d + j];
            }
        }
    }
    det
}

/// Ratio of the truncated lattice sum `sum ||u - x||^{-r}` to its largest
/// term, over lattice indices `z in [-radius, radius]^d`. Always `>= 1`; the
/// sum concentrates on the nearest point as `r` grows.
pub fn lattice_sum_ratio(u: &Point, lat: &LatticeSpec, r: f64, radius: i64) -> Result<f64> {
    if u.dim() != lat.dim() {
        return Err(Error::DimensionMismatch("point and lattice dimension differ".into()));
    }
    if !(r > lat.dim() as f64) {
        return Err(Error::InvalidParameter(format!(
            "lattice sum needs r > d for convergence (r = {r}, d = {})",
            lat.dim()
        )));
    }
    if radius < 2 {
        return Err(Error::InvalidParameter("truncation radius must be >= 2".into()));
    }
    let d = lat.dim();
    let mut min_dist = f64::INFINITY;
    let mut x = vec![0.0; d];
    for_each_index(d, radius, |z| {
        lat.point(z, &mut x);
        let dd = dist(u.coords(), &x);
        if dd < min_dist {
            min_dist = dd;
        }
    });
    if min_dist == 0.0 {
        return Err(Error::InvalidParameter("u coincides with a lattice point (distance 0)".into()));
    }
    // Summing (min/dist)^r keeps every term in [0, 1]: no overflow for any r.
    let mut ratio = 0.0;
    for_each_index(d, radius, |z| {
        lat.point(z, &mut x);
        let dd = dist(u.coords(), &x);
        ratio += (min_dist / dd).powf(r);
    });
    if !ratio.is_finite() {
        return Err(Error::Numerical("lattice sum overflowed".into()));
    }
    Ok(ratio)
}

fn for_each_index(d: usize, radius: i64, mut f: impl FnMut(&[i64])) {
    let mut z = vec![-radius; d];
    loop {
        f(&z);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            z[axis] += 1;
            if z[axis] <= radius {
                break;
            }
            z[axis] = -radius;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn nearest_breaks_ties_by_lowest_index() {
        let x = Deployment::from_scalars(&[0.0, 1.0]).unwrap();
        let (i, d) = nearest_antenna(&Point::scalar(0.5), &x).unwrap();
        assert_eq!(i, 0);
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-15);

        let (i, d) = nearest_antenna(&Point::scalar(0.1), &x).unwrap();
        assert_eq!(i, 0);
        assert_abs_diff_eq!(d, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn nearest_in_two_dimensions() {
        let x = Deployment::from_coords(vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.4, 0.5],
        ])
        .unwrap();
        let (i, d) = nearest_antenna(&Point::from(vec![0.5, 0.5]), &x).unwrap();
        assert_eq!(i, 2);
        assert_abs_diff_eq!(d, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn nearest_rejects_dimension_mismatch() {
        let x = Deployment::from_scalars(&[0.0]).unwrap();
        assert!(nearest_antenna(&Point::from(vec![0.0, 0.0]), &x).is_err());
    }

    #[test]
    fn voronoi_1d_equispaced_breakpoints() {
        let x = Deployment::from_scalars(&[0.125, 0.375, 0.625, 0.875]).unwrap();
        let cell = Cell::unit_box(1);
        let iv = voronoi_partition_1d(&x, &cell).unwrap();
        assert_abs_diff_eq!(iv[0].1, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(iv[1].1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(iv[2].1, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(iv[3].1, 1.0, epsilon = 1e-15);
        let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn voronoi_1d_single_point_and_midpoint() {
        let cell = Cell::unit_box(1);
        let one = voronoi_partition_1d(&Deployment::from_scalars(&[0.5]).unwrap(), &cell).unwrap();
        assert_eq!(one, vec![(0.0, 1.0)]);

        let two =
            voronoi_partition_1d(&Deployment::from_scalars(&[0.2, 0.8]).unwrap(), &cell).unwrap();
        assert_abs_diff_eq!(two[0].1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(two[1].0, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn voronoi_1d_rejects_higher_dimensions() {
        let x = Deployment::from_coords(vec![vec![0.5, 0.5]]).unwrap();
        assert!(voronoi_partition_1d(&x, &Cell::unit_box(2)).is_err());
    }

    #[test]
    fn square_lattice_is_the_midpoint_codebook_in_1d() {
        let x = square_lattice_deployment(4, &Cell::unit_box(1)).unwrap();
        let got: Vec<f64> = x.points().iter().map(|p| p.coords()[0]).collect();
        for (g, want) in got.iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert_abs_diff_eq!(*g, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn square_lattice_2x2_centres() {
        let x = square_lattice_deployment(4, &Cell::unit_box(2)).unwrap();
        let want = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
        for (p, w) in x.points().iter().zip(want) {
            assert_abs_diff_eq!(p.coords()[0], w[0], epsilon = 1e-15);
            assert_abs_diff_eq!(p.coords()[1], w[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn square_lattice_pads_round_robin() {
        let x = square_lattice_deployment(5, &Cell::unit_box(2)).unwrap();
        assert_eq!(x.len(), 5);
        assert_eq!(x.points()[4], x.points()[0]);
    }

    #[test]
    fn square_lattice_covering_radius() {
        // Max nearest-antenna distance over uniform samples stays below the
        // half-diagonal of a grid cube.
        use rand::Rng;
        for (n, d) in [(16usize, 1usize), (9, 2), (10, 2), (27, 3)] {
            let cell = Cell::unit_box(d);
            let x = square_lattice_deployment(n, &cell).unwrap();
            let flat = x.flat();
            let k = grid_order(n, d) as f64;
            let bound = (d as f64).sqrt() / (2.0 * k) + 1e-12;
            let mut rng = crate::mc::sample_rng(11, 0);
            let mut worst = 0.0f64;
            for _ in 0..10_000 {
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let (_, dd) = nearest_flat(&u, &flat, d);
                worst = worst.max(dd);
            }
            assert!(worst <= bound, "covering radius {worst} exceeds {bound} for n={n} d={d}");
        }
    }

    #[test]
    fn hex_lattice_single_point_is_centre() {
        let x = hex_lattice_deployment(1, &Cell::unit_box(2)).unwrap();
        assert_eq!(x.len(), 1);
        assert_abs_diff_eq!(x.points()[0].coords()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(x.points()[0].coords()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn hex_lattice_seven_points_form_a_ring() {
        let cell = Cell::unit_box(2);
        let x = hex_lattice_deployment(7, &cell).unwrap();
        assert_eq!(x.len(), 7);
        for p in x.points() {
            assert!(cell.contains(p.coords()));
        }
        // Every point's nearest-neighbour distance equals the lattice spacing.
        let flat = x.flat();
        let mut nn = Vec::new();
        for i in 0..7 {
            let mut best = f64::INFINITY;
            for j in 0..7 {
                if i != j {
                    best = best.min(dist(&flat[i * 2..i * 2 + 2], &flat[j * 2..j * 2 + 2]));
                }
            }
            nn.push(best);
        }
        let a = nn[0];
        for v in nn {
            assert_abs_diff_eq!(v, a, epsilon = 1e-9);
        }
    }

    #[test]
    fn hex_lattice_64_is_regular_in_the_interior() {
        let cell = Cell::unit_box(2);
        let x = hex_lattice_deployment(64, &cell).unwrap();
        assert_eq!(x.len(), 64);
        let flat = x.flat();
        let nn_dist = |i: usize| {
            let mut best = f64::INFINITY;
            for j in 0..64 {
                if i != j {
                    best = best.min(dist(&flat[i * 2..i * 2 + 2], &flat[j * 2..j * 2 + 2]));
                }
            }
            best
        };
        let mut all: Vec<f64> = (0..64).map(nn_dist).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = all[32];
        let interior: Vec<usize> = (0..64)
            .filter(|&i| {
                let p = &flat[i * 2..i * 2 + 2];
                p[0] > median && p[0] < 1.0 - median && p[1] > median && p[1] < 1.0 - median
            })
            .collect();
        assert!(!interior.is_empty());
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &i in &interior {
            let v = nn_dist(i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(hi / lo <= 1.01, "dispersion {} too large", hi / lo);
    }

    #[test]
    fn hex_lattice_rejects_wrong_dimension() {
        assert!(hex_lattice_deployment(4, &Cell::unit_box(1)).is_err());
    }

    #[test]
    fn lattice_sum_matches_the_cosecant_series() {
        // sum_k (u - k)^{-2} = pi^2 / sin^2(pi u); at u = 1/4 the ratio to the
        // dominant term is pi^2 / 8.
        let lat = LatticeSpec::integer(1, 1.0).unwrap();
        let got = lattice_sum_ratio(&Point::scalar(0.25), &lat, 2.0, 100_000).unwrap();
        let want = std::f64::consts::PI.powi(2) / 8.0;
        assert!((got - want).abs() <= 1e-3, "got {got}, want {want}");
    }

    #[test]
    fn lattice_sum_concentrates_for_large_exponent() {
        let lat = LatticeSpec::integer(1, 1.0).unwrap();
        let got = lattice_sum_ratio(&Point::scalar(0.25), &lat, 16.0, 100).unwrap();
        assert!(got >= 1.0);
        assert!(got - 1.0 <= 1e-6, "excess {}", got - 1.0);
    }

    #[test]
    fn lattice_sum_sees_equidistant_ties() {
        let lat = LatticeSpec::integer(1, 1.0).unwrap();
        let got = lattice_sum_ratio(&Point::scalar(0.5), &lat, 4.0, 100).unwrap();
        assert!(got >= 2.0 - 1e-6);
    }

    #[test]
    fn lattice_sum_errors_on_lattice_points() {
        let lat = LatticeSpec::integer(2, 1.0).unwrap();
        assert!(lattice_sum_ratio(&Point::from(vec![3.0, -2.0]), &lat, 3.0, 10).is_err());
    }

    #[test]
    fn lattice_sum_decreases_in_r() {
        let lat = LatticeSpec::integer(1, 1.0).unwrap();
        let u = Point::scalar(0.25);
        let r8 = lattice_sum_ratio(&u, &lat, 8.0, 100).unwrap();
        let r16 = lattice_sum_ratio(&u, &lat, 16.0, 100).unwrap();
        let r32 = lattice_sum_ratio(&u, &lat, 32.0, 100).unwrap();
        assert!(r8 > r16 && r16 > r32);
        assert!(r32 >= 1.0);
    }

    #[test]
    fn hexagonal_basis_has_unit_determinant() {
        let lat = LatticeSpec::hexagonal(2.5).unwrap();
        assert_eq!(lat.dim(), 2);
        let ratio = lattice_sum_ratio(&Point::from(vec![0.31, 0.17]), &lat, 5.0, 30).unwrap();
        assert!(ratio >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ratio_at_least_one(ux in 0.01f64..0.49, uy in 0.01f64..0.49, r in 2.5f64..8.0) {
            let lat = LatticeSpec::integer(2, 1.0).unwrap();
            let got = lattice_sum_ratio(&Point::from(vec![ux, uy]), &lat, r, 20).unwrap();
            prop_assert!(got >= 1.0 - 1e-12);
        }

        #[test]
        fn voronoi_lengths_sum_to_side(raw in proptest::collection::vec(0.0f64..1.0, 1..9)) {
            let x = Deployment::from_scalars(&raw).unwrap();
            let iv = voronoi_partition_1d(&x, &Cell::unit_box(1)).unwrap();
            let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
