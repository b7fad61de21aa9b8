//! User location densities: evaluation, seeded sampling, differential
//! entropy, and the tabulated-grid file format.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::mc::{self, Estimate};

/// Probability density of the user location over its support cell.
#[derive(Debug, Clone, PartialEq)]
pub enum UserDensity {
    /// Uniform over a box cell.
    UniformBox(Cell),
    /// `f(u) = 30 u (1-u)^4` on `[0, 1]` (a Beta(2,5) profile).
    Beta25,
    /// `f(u) = exp(-|u|^2) / pi` on all of `R^2`.
    Gaussian2d,
    /// Multilinear interpolation of grid values over a box cell.
    Tabulated(TabulatedDensity),
}

pub const BETA25_SUP: f64 = 2.4576; // max of 30 u (1-u)^4, attained at u = 1/5

impl UserDensity {
    pub fn uniform_box(side: f64, dim: usize) -> Result<Self> {
        Ok(UserDensity::UniformBox(Cell::bounded_box(side, dim)?))
    }

    pub fn uniform_cell(cell: Cell) -> Result<Self> {
        if !cell.is_bounded() {
            return Err(Error::Unsupported("uniform density needs a bounded cell".into()));
        }
        Ok(UserDensity::UniformBox(cell))
    }

    pub fn support(&self) -> Cell {
        match self {
            UserDensity::UniformBox(c) => c.clone(),
            UserDensity::Beta25 => Cell::unit_box(1),
            UserDensity::Gaussian2d => Cell::all_space(2),
            UserDensity::Tabulated(t) => t.cell.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.support().dim()
    }

    /// Density value at `u`; zero outside box supports.
    pub fn pdf(&self, u: &crate::geometry::Point) -> Result<f64> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {}, density has {}",
                u.dim(),
                self.dim()
            )));
        }
        Ok(self.pdf_slice(u.coords()))
    }

    pub(crate) fn pdf_slice(&self, u: &[f64]) -> f64 {
        match self {
            UserDensity::UniformBox(cell) => {
                if cell.contains(u) {
                    1.0 / cell.measure().expect("bounded")
                } else {
                    0.0
                }
            }
            UserDensity::Beta25 => {
                let x = u[0];
                if (0.0..=1.0).contains(&x) {
                    30.0 * x * (1.0 - x).powi(4)
                } else {
                    0.0
                }
            }
            UserDensity::Gaussian2d => {
                let s = u[0] * u[0] + u[1] * u[1];
                (-s).exp() / std::f64::consts::PI
            }
            UserDensity::Tabulated(t) => t.pdf(u),
        }
    }

    /// Supremum of the density over its support.
    pub fn sup_pdf(&self) -> f64 {
        match self {
            UserDensity::UniformBox(cell) => 1.0 / cell.measure().expect("bounded"),
            UserDensity::Beta25 => BETA25_SUP,
            UserDensity::Gaussian2d => 1.0 / std::f64::consts::PI,
            UserDensity::Tabulated(t) => t.sup,
        }
    }

    /// One i.i.d. draw written into `out`, consuming values from `rng`.
    pub(crate) fn draw_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            UserDensity::UniformBox(cell) => {
                let side = cell.side().expect("bounded");
                let origin = cell.origin().expect("bounded");
                for (x, o) in out.iter_mut().zip(origin) {
                    *x = o + side * rng.random::<f64>();
                }
            }
            UserDensity::Beta25 => {
                out[0] = beta25_inverse_cdf(rng.random::<f64>());
            }
            UserDensity::Gaussian2d => {
                // Coordinate variance 1/2 matches exp(-|u|^2)/pi.
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                out[0] = z0 * std::f64::consts::FRAC_1_SQRT_2;
                out[1] = z1 * std::f64::consts::FRAC_1_SQRT_2;
            }
            UserDensity::Tabulated(t) => {
                let side = t.cell.side().expect("bounded");
                let origin = t.cell.origin().expect("bounded");
                // Rejection from the box; the grid maximum bounds the
                // interpolant on every cell.
                loop {
                    for (x, o) in out.iter_mut().zip(origin) {
                        *x = o + side * rng.random::<f64>();
                    }
                    if rng.random::<f64>() * t.sup <= t.pdf(out) {
                        return;
                    }
                }
            }
        }
    }

    /// `count` i.i.d. draws, deterministic for a given seed (one RNG stream
    /// per sample index).
    pub fn sample(&self, count: usize, seed: u64) -> Vec<crate::geometry::Point> {
        let d = self.dim();
        (0..count)
            .map(|i| {
                let mut rng = mc::sample_rng(seed, i as u64);
                let mut buf = vec![0.0; d];
                self.draw_into(&mut rng, &mut buf);
                crate::geometry::Point::from(buf)
            })
            .collect()
    }

    /// Inverse CDF for one-dimensional kinds; `None` where unavailable.
    pub(crate) fn quantile(&self, q: f64) -> Option<f64> {
        match self {
            UserDensity::UniformBox(cell) if cell.dim() == 1 => {
                let side = cell.side()?;
                Some(cell.origin()?[0] + side * q)
            }
            UserDensity::Beta25 => Some(beta25_inverse_cdf(q)),
            UserDensity::Tabulated(t) if t.cell.dim() == 1 => Some(t.quantile_1d(q)),
            _ => None,
        }
    }

    /// Differential entropy `H(f) = E[-log f(U)]` in nats.
    pub fn differential_entropy(&self, method: EntropyMethod) -> Result<Estimate> {
        match method {
            EntropyMethod::ClosedForm => {
                let h = match self {
                    UserDensity::UniformBox(cell) => {
                        (cell.dim() as f64) * cell.side().expect("bounded").ln()
                    }
                    UserDensity::Beta25 => 35.0 / 12.0 - 30.0f64.ln(),
                    UserDensity::Gaussian2d => (std::f64::consts::E * std::f64::consts::PI).ln(),
                    UserDensity::Tabulated(_) => {
                        return Err(Error::Unsupported(
                            "no closed-form entropy for tabulated densities".into(),
                        ))
                    }
                };
                Ok(Estimate::exact(h))
            }
            EntropyMethod::MonteCarlo { seed, count } => Ok(self.entropy_monte_carlo(count, seed)),
        }
    }

    pub(crate) fn entropy_monte_carlo(&self, count: usize, seed: u64) -> Estimate {
        let d = self.dim();
        let plan = crate::rate::SamplePlan::stratified_if_supported(self, count, seed);
        mc::reduce_mean(
            count,
            || vec![0.0; d],
            |buf, i| {
                plan.write(i, buf);
                -self.pdf_slice(buf).ln()
            },
        )
    }
}

/// How to evaluate the differential entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMethod {
    ClosedForm,
    MonteCarlo { seed: u64, count: usize },
}

/// CDF of the Beta(2,5) profile `30 u (1-u)^4` on `[0, 1]`.
pub(crate) fn beta25_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let u2 = u * u;
        u2 * (15.0 + u * (-40.0 + u * (45.0 + u * (-24.0 + 5.0 * u))))
    }
}

/// Inverse CDF by bisection; exact at the endpoints.
pub(crate) fn beta25_inverse_cdf(q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if beta25_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A density defined by values at the nodes of a regular grid over a box
/// cell, evaluated by multilinear interpolation and renormalized at load.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    cell: Cell,
    /// Nodes per axis (>= 2); node spacing is `side / (resolution - 1)`.
    resolution: usize,
    /// Row-major node values, normalized so the interpolant integrates to 1.
    values: Vec<f64>,
    sup: f64,
}

impl TabulatedDensity {
    pub fn new(side: f64, dim: usize, resolution: usize, mut values: Vec<f64>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter("tabulated resolution must be >= 2".into()));
        }
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidParameter("tabulated dimension must be 1..=3".into()));
        }
        let expected = resolution.pow(dim as u32);
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} grid values ({resolution}^{dim}), got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("grid values must be finite and >= 0".into()));
        }
        let cell = Cell::bounded_box(side, dim)?;
        let integral = trapezoid_integral(&values, resolution, dim, side);
        if !(integral > 0.0) {
            return Err(Error::InvalidParameter("grid values integrate to zero".into()));
        }
        for v in values.iter_mut() {
            *v /= integral;
        }
        let sup = values.iter().cloned().fold(0.0f64, f64::max);
        let t = TabulatedDensity { cell, resolution, values, sup };
        // Construction invariant: the renormalized interpolant integrates to 1.
        let check = trapezoid_integral(&t.values, resolution, dim, side);
        if (check - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!("normalization failed: integral {check}")));
        }
        Ok(t)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn pdf(&self, u: &[f64]) -> f64 {
        let side = self.cell.side().expect("bounded");
        let origin = self.cell.origin().expect("bounded");
        let d = self.cell.dim();
        let res = self.resolution;
        let h = side / (res - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for j in 0..d {
            let t = (u[j] - origin[j]) / h;
            if !(0.0..=(res - 1) as f64 + 1e-12).contains(&t) {
                return 0.0;
            }
            let cellidx = (t.floor() as usize).min(res - 2);
            base[j] = cellidx;
            frac[j] = t - cellidx as f64;
        }
        // Accumulate over the 2^d cube corners.
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for j in 0..d {
                let bit = (corner >> j) & 1;
                w *= if bit == 1 { frac[j] } else { 1.0 - frac[j] };
                idx = idx * res + base[j] + bit;
            }
            acc += w * self.values[idx];
        }
        acc
    }

    /// Numeric inverse CDF for one-dimensional tables (bisection on the
    /// piecewise-quadratic CDF of the linear interpolant).
    fn quantile_1d(&self, q: f64) -> f64 {
        let side = self.cell.side().expect("bounded");
        let q = q.clamp(0.0, 1.0);
        let res = self.resolution;
        let h = side / (res - 1) as f64;
        let cdf = |x: f64| -> f64 {
            let t = (x / h).min((res - 1) as f64);
            let full = (t.floor() as usize).min(res - 1);
            let mut acc = 0.0;
            for c in 0..full {
                acc += 0.5 * (self.values[c] + self.values[c + 1]) * h;
            }
            let rem = t - full as f64;
            if full + 1 < res && rem > 0.0 {
                let a = self.values[full];
                let b = self.values[full + 1];
                let v_at = a + (b - a) * rem;
                acc += 0.5 * (a + v_at) * rem * h;
            }
            acc
        };
        let (mut lo, mut hi) = (0.0f64, side);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Read the grid file format: a `d,M,resolution` header line, a values
    /// line for those three fields, then the grid values in row-major order
    /// (any line layout).
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tabulated density file".into()))?
            .map_err(Error::Io)?;
        let names: Vec<&str> = header.trim().split(',').map(|s| s.trim()).collect();
        if names != ["d", "M", "resolution"] {
            return Err(Error::Parse(format!(
                "expected header 'd,M,resolution', got '{}'",
                header.trim()
            )));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::Parse("missing d,M,resolution values".into()))?
            .map_err(Error::Io)?;
        let fields: Vec<&str> = meta.trim().split(',').map(|s| s.trim()).collect();
        if fields.len() != 3 {
            return Err(Error::Parse("expected three values for d,M,resolution".into()));
        }
        let dim: usize = fields[0].parse().map_err(|_| Error::Parse("bad d".into()))?;
        let side: f64 = fields[1].parse().map_err(|_| Error::Parse("bad M".into()))?;
        let resolution: usize =
            fields[2].parse().map_err(|_| Error::Parse("bad resolution".into()))?;
        let mut values = Vec::new();
        for line in lines {
            let line = line.map_err(Error::Io)?;
            for tok in line.split(',') {
                let tok = tok.trim();
                if !tok.is_empty() {
                    values.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad grid value '{tok}'")))?,
                    );
                }
            }
        }
        TabulatedDensity::new(side, dim, resolution, values)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,M,resolution")?;
        writeln!(
            w,
            "{},{:.16e},{}",
            self.cell.dim(),
            self.cell.side().expect("bounded"),
            self.resolution
        )?;
        let per_row = if self.cell.dim() == 1 { self.values.len() } else { self.resolution };
        for row in self.values.chunks(per_row) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn trapezoid_integral(values: &[f64], res: usize, dim: usize, side: f64) -> f64 {
    let h = side / (res - 1) as f64;
    let mut acc = 0.0;
    for (flat, v) in values.iter().enumerate() {
        let mut w = 1.0;
        let mut rem = flat;
        // Decode the row-major index; halve the weight on boundary nodes.
        for _ in 0..dim {
            let c = rem % res;
            rem /= res;
            if c == 0 || c == res - 1 {
                w *= 0.5;
            }
        }
        acc += w * v;
    }
    acc * h.powi(dim as i32)
}
