//! The exact rate objective, its quantization surrogate, and their analytic
//! gradients, all evaluated by seeded Monte Carlo quadrature.

use serde::{Deserialize, Serialize};

use crate::density::UserDensity;
use crate::error::{Error, Result};
use crate::geometry::{dist_sq, Deployment, Point};
use crate::mc::{self, Estimate};

/// Physical constants of the rate expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Transmit-power SNR scale `P > 0`.
    pub power: f64,
    /// Path-loss exponent `r >= 0`.
    pub path_loss: f64,
    /// Number of antenna-group locations.
    pub n: usize,
    /// Ambient dimension.
    pub dim: usize,
}

impl RateParams {
    pub fn new(power: f64, path_loss: f64, n: usize, dim: usize) -> Result<Self> {
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidParameter("power must be positive and finite".into()));
        }
        if !(path_loss >= 0.0) || !path_loss.is_finite() {
            return Err(Error::InvalidParameter("path-loss exponent must be >= 0".into()));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("location count must be >= 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(RateParams { power, path_loss, n, dim })
    }

    pub fn with_n(&self, n: usize) -> Self {
        RateParams { n, ..*self }
    }
}

/// Integration method for the quadrature backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McMethod {
    #[serde(rename = "monte-carlo")]
    Plain,
    #[serde(rename = "stratified-monte-carlo")]
    Stratified,
}

/// Sample budget, seed, and singularity clamp governing one integral
/// estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub method: McMethod,
    pub samples: usize,
    pub seed: u64,
    /// Distances are clamped below by this floor inside integrands; the log
    /// singularity is integrable, so the induced bias is O(floor).
    pub distance_floor: f64,
}

impl QuadratureSpec {
    pub fn new(method: McMethod, samples: usize, seed: u64, distance_floor: f64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidParameter("sample budget must be >= 1".into()));
        }
        if !(distance_floor >= 0.0) {
            return Err(Error::InvalidParameter("distance floor must be >= 0".into()));
        }
        Ok(QuadratureSpec { method, samples, seed, distance_floor })
    }

    pub fn stratified(samples: usize, seed: u64) -> Self {
        QuadratureSpec {
            method: McMethod::Stratified,
            samples,
            seed,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        }
    }

    pub fn plain(samples: usize, seed: u64) -> Self {
        QuadratureSpec {
            method: McMethod::Plain,
            samples,
            seed,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        QuadratureSpec { seed, ..*self }
    }
}

pub const DEFAULT_DISTANCE_FLOOR: f64 = 1e-9;
pub const DEFAULT_SAMPLES: usize = 200_000;

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            method: McMethod::Stratified,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            distance_floor: DEFAULT_DISTANCE_FLOOR,
        }
    }
}

/// Deterministic mapping from sample index to a draw from the density.
/// Stratification (jittered grid for uniform boxes, jittered quantiles for
/// the Beta profile) applies where the geometry permits; other kinds fall
/// back to plain draws. Marginally every sample is an exact draw from `f`,
/// so mixing stratified and plain indices stays unbiased.
pub(crate) struct SamplePlan<'a> {
    density: &'a UserDensity,
    count: usize,
    seed: u64,
    kind: PlanKind,
}

enum PlanKind {
    Plain,
    /// Jittered `k^d` grid over a box support; indices past `k^d` are plain.
    BoxGrid { k: usize },
    /// Jittered quantile strata mapped through the inverse CDF (d = 1).
    Quantile,
}

impl<'a> SamplePlan<'a> {
    pub(crate) fn new(density: &'a UserDensity, q: &QuadratureSpec) -> Self {
        match q.method {
            McMethod::Plain => SamplePlan { density, count: q.samples, seed: q.seed, kind: PlanKind::Plain },
            McMethod::Stratified => Self::stratified_if_supported(density, q.samples, q.seed),
        }
    }

    pub(crate) fn stratified_if_supported(
        density: &'a UserDensity,
        count: usize,
        seed: u64,
    ) -> Self {
        let kind = match density {
            UserDensity::UniformBox(cell) => {
                let d = cell.dim();
                let mut k = 1usize;
                while (k + 1).pow(d as u32) <= count {
                    k += 1;
                }
                PlanKind::BoxGrid { k }
            }
            UserDensity::Beta25 => PlanKind::Quantile,
            _ => PlanKind::Plain,
        };
        SamplePlan { density, count, seed, kind }
    }

    pub(crate) fn write(&self, index: usize, out: &mut [f64]) {
        let mut rng = mc::sample_rng(self.seed, index as u64);
        match &self.kind {
            PlanKind::Plain => self.density.draw_into(&mut rng, out),
            PlanKind::BoxGrid { k } => {
                let d = out.len();
                let strata = k.pow(d as u32);
                if index < strata {
                    let cell = self.density.support();
                    let side = cell.side().expect("box support");
                    let origin = cell.origin().expect("box support");
                    let mut rem = index;
                    for j in (0..d).rev() {
                        let c = rem % k;
                        rem /= k;
                        let jitter: f64 = rand::Rng::random(&mut rng);
                        out[j] = origin[j] + side * (c as f64 + jitter) / *k as f64;
                    }
                } else {
                    self.density.draw_into(&mut rng, out);
                }
            }
            PlanKind::Quantile => {
                let jitter: f64 = rand::Rng::random(&mut rng);
                let q = (index as f64 + jitter) / self.count as f64;
                out[0] = self.density.quantile(q).expect("quantile-capable density");
            }
        }
    }
}

/// Exponent dispatch: integer path-loss exponents avoid `powf` in the inner
/// loops, and even exponents work on squared distances directly.
#[derive(Debug, Clone, Copy)]
enum PathLoss {
    EvenInt(i32),
    OddInt(i32),
    General(f64),
}

impl PathLoss {
    fn resolve(r: f64) -> Self {
        if r.fract() == 0.0 && r.abs() <= 64.0 {
            let k = r as i32;
            if k % 2 == 0 {
                PathLoss::EvenInt(k / 2)
            } else {
                PathLoss::OddInt(k)
            }
        } else {
            PathLoss::General(r)
        }
    }

    /// `max(sqrt(d2), floor)^(-r)` from a squared distance.
    #[inline]
    fn inv_pow_d2(&self, d2: f64, floor_sq: f64) -> f64 {
        let c = d2.max(floor_sq);
        match *self {
            PathLoss::EvenInt(half) => c.powi(-half),
            PathLoss::OddInt(k) => c.sqrt().powi(-k),
            PathLoss::General(r) => c.sqrt().powf(-r),
        }
    }
}

fn check_pair(x: &Deployment, p: &RateParams) -> Result<()> {
    if p.n != x.len() {
        return Err(Error::InvalidParameter(format!(
            "params declare n = {}, deployment has {} points",
            p.n,
            x.len()
        )));
    }
    if p.dim != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "params declare d = {}, deployment has d = {}",
            p.dim,
            x.dim()
        )));
    }
    Ok(())
}

fn check_density(x: &Deployment, f: &UserDensity) -> Result<()> {
    if f.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density has d = {}, deployment has d = {}",
            f.dim(),
            x.dim()
        )));
    }
    Ok(())
}

/// Per-user rate `log(1 + (P/n) sum_i max(|u - x_i|, floor)^(-r))` in
/// nats/s/Hz. With `floor = 0` and `u` on an antenna the result is the
/// `+infinity` sentinel.
pub fn rate_at_point(u: &Point, x: &Deployment, p: &RateParams, floor: f64) -> Result<f64> {
    check_pair(x, p)?;
    if u.dim() != x.dim() {
        return Err(Error::DimensionMismatch("point and deployment dimension differ".into()));
    }
    let flat = x.flat();
    let pl = PathLoss::resolve(p.path_loss);
    Ok(rate_integrand(u.coords(), &flat, x.dim(), p, pl, floor * floor).0)
}

/// Returns (rate value, sum term, min squared distance, argmin index).
#[inline]
fn rate_integrand(
    u: &[f64],
    flat: &[f64],
    dim: usize,
    p: &RateParams,
    pl: PathLoss,
    floor_sq: f64,
) -> (f64, f64, f64, usize) {
    let mut sum = 0.0;
    let mut min_d2 = f64::INFINITY;
    let mut argmin = 0usize;
    for (i, pt) in flat.chunks_exact(dim).enumerate() {
        let d2 = dist_sq(u, pt);
        if d2 < min_d2 {
            min_d2 = d2;
            argmin = i;
        }
        sum += pl.inv_pow_d2(d2, floor_sq);
    }
    // The sum dominates its largest term (surrogate ordering); allow a few
    // ulps of summation slack.
    let max_term = pl.inv_pow_d2(min_d2, floor_sq);
    assert!(
        sum >= max_term * (1.0 - 1e-9),
        "sum of non-negative terms fell below its largest term"
    );
    let snr = p.power / p.n as f64 * sum;
    (snr.ln_1p(), sum, min_d2, argmin)
}

/// Cell-averaged rate: Monte Carlo mean of [`rate_at_point`] over draws from
/// the user density. Bit-reproducible for a given seed.
pub fn average_rate(
    x: &Deployment,
    f: &UserDensity,
    p: &RateParams,
    q: &QuadratureSpec,
) -> Result<Estimate> {
    check_pair(x, p)?;
    check_density(x, f)?;
    let flat = x.flat();
    let dim = x.dim();
    let pl = PathLoss::resolve(p.path_loss);
    let plan = SamplePlan::new(f, q);
    let floor_sq = q.distance_floor * q.distance_floor;
    Ok(mc::reduce_mean(
        q.samples,
        || vec![0.0; dim],
        |buf, i| {
            plan.write(i, buf);
            rate_integrand(buf, &flat, dim, p, pl, floor_sq).0
        },
    ))
}

/// Gradient of [`average_rate`] with respect to each antenna location,
/// estimated on the same sample set as the objective for a given seed
/// (common random numbers).
pub fn average_rate_grad(
    x: &Deployment,
    f: &UserDensity,
    p: &RateParams,
    q: &QuadratureSpec,
) -> Result<Vec<Vec<f64>>> {
    if !(p.path_loss > 0.0) {
        return Err(Error::InvalidParameter("gradient needs r > 0".into()));
    }
    let (_, grad) = rate_value_grad(x, f, p, q)?;
    Ok(grad.chunks_exact(x.dim()).map(|c| c.to_vec()).collect())
}

/// One-pass objective value and flat `n*d` gradient.
pub(crate) fn rate_value_grad(
    x: &Deployment,
    f: &UserDensity,
    p: &RateParams,
    q: &QuadratureSpec,
) -> Result<(Estimate, Vec<f64>)> {
    check_pair(x, p)?;
    check_density(x, f)?;
    let flat = x.flat();
    let dim = x.dim();
    let n = x.len();
    let r = p.path_loss;
    let pl = PathLoss::resolve(r);
    // g^(-r-2) handled via the same dispatch with exponent r + 2.
    let pl_grad = PathLoss::resolve(r + 2.0);
    let plan = SamplePlan::new(f, q);
    let floor_sq = q.distance_floor * q.distance_floor;
    let scale = p.power / n as f64;
    Ok(mc::reduce_mean_with_vec(
        q.samples,
        n * dim,
        || vec![0.0; dim],
        |buf, i, acc| {
            plan.write(i, buf);
            let mut sum = 0.0;
            for pt in flat.chunks_exact(dim) {
                sum += pl.inv_pow_d2(dist_sq(buf, pt), floor_sq);
            }
            let denom = 1.0 + scale * sum;
            for (j, pt) in flat.chunks_exact(dim).enumerate() {
                let d2 = dist_sq(buf, pt);
                if d2 <= floor_sq {
                    continue; // clamped region: the integrand is locally flat
                }
                let coeff = scale * r * pl_grad.inv_pow_d2(d2, floor_sq) / denom;
                for k in 0..dim {
                    acc[j * dim + k] += coeff * (buf[k] - pt[k]);
                }
            }
            (scale * sum).ln_1p()
        },
    ))
}

/// The logarithmic quantizer surrogate: Monte Carlo mean of
/// `-log max(min_i |u - x_i|, floor)`.
pub fn quantizer_objective(
    x: &Deployment,
    f: &UserDensity,
    q: &QuadratureSpec,
) -> Result<Estimate> {
    check_density(x, f)?;
    let flat = x.flat();
    let dim = x.dim();
    let plan = SamplePlan::new(f, q);
    let floor_sq = (q.distance_floor * q.distance_floor).max(f64::MIN_POSITIVE);
    Ok(mc::reduce_mean(
        q.samples,
        || vec![0.0; dim],
        |buf, i| {
            plan.write(i, buf);
            let mut min_d2 = f64::INFINITY;
            for pt in flat.chunks_exact(dim) {
                let d2 = dist_sq(buf, pt);
                if d2 < min_d2 {
                    min_d2 = d2;
                }
            }
            -0.5 * min_d2.max(floor_sq).ln()
        },
    ))
}

/// Gradient of [`quantizer_objective`]: each sample pulls only its nearest
/// antenna (ties to the lowest index), with weight `(u - x_i) / |u - x_i|^2`.
pub fn quantizer_objective_grad(
    x: &Deployment,
    f: &UserDensity,
    q: &QuadratureSpec,
) -> Result<Vec<Vec<f64>>> {
    let (_, grad) = quant_value_grad(x, f, q)?;
    Ok(grad.chunks_exact(x.dim()).map(|c| c.to_vec()).collect())
}

pub(crate) fn quant_value_grad(
    x: &Deployment,
    f: &UserDensity,
    q: &QuadratureSpec,
) -> Result<(Estimate, Vec<f64>)> {
    check_density(x, f)?;
    let flat = x.flat();
    let dim = x.dim();
    let n = x.len();
    let plan = SamplePlan::new(f, q);
    let floor_sq = (q.distance_floor * q.distance_floor).max(f64::MIN_POSITIVE);
    Ok(mc::reduce_mean_with_vec(
        q.samples,
        n * dim,
        || vec![0.0; dim],
        |buf, i, acc| {
            plan.write(i, buf);
            let mut min_d2 = f64::INFINITY;
            let mut argmin = 0usize;
            for (j, pt) in flat.chunks_exact(dim).enumerate() {
                let d2 = dist_sq(buf, pt);
                if d2 < min_d2 {
                    min_d2 = d2;
                    argmin = j;
                }
            }
            if min_d2 > floor_sq {
                let inv = 1.0 / min_d2;
                let base = argmin * dim;
                for k in 0..dim {
                    acc[base + k] += (buf[k] - flat[base + k]) * inv;
                }
            }
            -0.5 * min_d2.max(floor_sq).ln()
        },
    ))
}

/// Classical quantization distortion `E[min_i |U - x_i|^r]`, kept alongside
/// the logarithmic surrogate for cross-checks with the quantization
/// literature.
pub fn classical_distortion(
    x: &Deployment,
    f: &UserDensity,
    r: f64,
    q: &QuadratureSpec,
) -> Result<Estimate> {
    check_density(x, f)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("distortion exponent must be positive".into()));
    }
    let flat = x.flat();
    let dim = x.dim();
    let plan = SamplePlan::new(f, q);
    Ok(mc::reduce_mean(
        q.samples,
        || vec![0.0; dim],
        |buf, i| {
            plan.write(i, buf);
            let mut min_d2 = f64::INFINITY;
            for pt in flat.chunks_exact(dim) {
                let d2 = dist_sq(buf, pt);
                if d2 < min_d2 {
                    min_d2 = d2;
                }
            }
            min_d2.powf(r / 2.0)
        },
    ))
}

/// Central finite difference of a deployment functional, used by the tests
/// as the independent oracle for the analytic gradients.
pub fn finite_difference_grad(
    x: &Deployment,
    step: f64,
    mut eval: impl FnMut(&Deployment) -> f64,
) -> Vec<Vec<f64>> {
    let dim = x.dim();
    let flat = x.flat();
    let mut out = vec![vec![0.0; dim]; x.len()];
    for i in 0..x.len() {
        for k in 0..dim {
            let mut plus = flat.clone();
            plus[i * dim + k] += step;
            let mut minus = flat.clone();
            minus[i * dim + k] -= step;
            let fp = eval(&Deployment::from_flat(&plus, dim));
            let fm = eval(&Deployment::from_flat(&minus, dim));
            out[i][k] = (fp - fm) / (2.0 * step);
        }
    }
    out
}
