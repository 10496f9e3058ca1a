//! Randomized evaluation of interpolation inequalities: empirical constants
//! (largest LHS/RHS ratio over an ensemble) and their stability under grid
//! refinement.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{curvature_norms, dissipation_surrogate, energy, excess_mass, hessian_norm};
use crate::quadrature::integrate;
use crate::solver::{check_lipschitz, elliptic_velocity, lipschitz, slope_field};
use crate::solver::initial::random_band_limited;
use crate::spectral::{make_grid, SpectralField, TorusGrid};

/// How random samples are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    /// Spectral envelope exponent range; each sample draws `γ` uniformly from it.
    pub gamma: (f64, f64),
    /// Root seed; sample `i` uses ChaCha8 stream `i` of this seed.
    pub seed: u64,
    /// `‖∇h‖∞` after rescaling.
    pub lip_target: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            dim: 1,
            n: 256,
            length: 64.0,
            gamma: (0.5, 3.0),
            seed: 0,
            lip_target: 1.0,
        }
    }
}

impl SampleSpec {
    pub fn grid(&self) -> Result<TorusGrid> {
        make_grid(self.dim, self.length, self.n)
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Sample `index` of the ensemble described by `spec`.
pub fn sample_field(spec: &SampleSpec, index: u64) -> Result<SpectralField> {
    let grid = spec.grid()?;
    let mut rng = spec.rng(index);
    let (lo, hi) = spec.gamma;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("gamma range must satisfy 0 <= lo <= hi".into()));
    }
    let gamma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    Ok(with_gamma(&grid, gamma, spec.lip_target, &mut rng))
}

/// A single random field with a fixed envelope exponent.
pub fn with_gamma(grid: &TorusGrid, gamma: f64, lip_target: f64, rng: &mut ChaCha8Rng) -> SpectralField {
    let raw = random_band_limited(grid, gamma, rng);
    let lip = lipschitz(&raw);
    if lip > 0.0 {
        raw.scaled(lip_target / lip)
    } else {
        raw
    }
}

/// Items of the interpolation lemma, plus the two energy-level estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `ℰ ≲ 𝒱^{6/(d+5)} D^{(d+2)/(d+5)}`.
    Eed,
    /// `‖∇h‖∞ ≲ ‖∇h‖₂^{(p-2)/(2(p-1))} ‖∇²h‖_p^{p/(2(p-1))}` (d = 2).
    GnsI { p: f64 },
    /// `‖h‖₂ ≲ ‖h‖₁^{2/(d+2)} ‖∇h‖₂^{d/(d+2)}`.
    GnsIi,
    /// `‖∇h‖₂ ≲ ‖h‖₁^{2/(d+4)} ‖∇²h‖₂^{(d+2)/(d+4)}`.
    GnsIii,
    /// `‖h‖∞ ≲ ‖h‖₁^{1/5} ‖∇h‖₂^{2/5} ‖∇h‖∞^{2/5}` (d = 2).
    GnsIv,
    /// `‖h‖∞ ≲ ‖h‖₁^{1/3} ‖h_x‖₂^{2/3}` (d = 1).
    GnsIv1d,
    /// `‖g‖_q ≲ ‖g‖₂^{2/q} ‖∇g‖₂^{(q-2)/q}` (d = 2).
    GnsV { q: f64 },
    /// `‖V²‖²_{Ḣ^{1/2}} ≲ ‖V‖₆³ ‖∇V‖₂`.
    V2,
    /// `‖H‖²_{L²(Γ)} ≲ (ℰ D²)^{1/3}`.
    CurvatureL2,
    /// `‖∇²h‖_p ≲ ‖H‖_p`.
    HessianLp { p: f64 },
}

impl Inequality {
    pub fn id(&self) -> String {
        match self {
            Inequality::Eed => "eed".into(),
            Inequality::GnsI { p } => format!("gns_i_p{p}"),
            Inequality::GnsIi => "gns_ii".into(),
            Inequality::GnsIii => "gns_iii".into(),
            Inequality::GnsIv => "gns_iv".into(),
            Inequality::GnsIv1d => "gns_iv_1d".into(),
            Inequality::GnsV { q } => format!("gns_v_q{q}"),
            Inequality::V2 => "v2".into(),
            Inequality::CurvatureL2 => "curvature_l2".into(),
            Inequality::HessianLp { p } => format!("hessian_lp_p{p}"),
        }
    }

    /// Dimensions in which the inequality is stated.
    pub fn dims(&self) -> &'static [usize] {
        match self {
            Inequality::GnsI { .. } | Inequality::GnsIv | Inequality::GnsV { .. } => &[2],
            Inequality::GnsIv1d => &[1],
            _ => &[1, 2],
        }
    }

    /// All lemma items stated in dimension `dim` with default exponents.
    pub fn gns_items(dim: usize) -> Vec<Inequality> {
        [
            Inequality::GnsI { p: 4.0 },
            Inequality::GnsIi,
            Inequality::GnsIii,
            Inequality::GnsIv,
            Inequality::GnsIv1d,
            Inequality::GnsV { q: 4.0 },
        ]
        .into_iter()
        .filter(|i| i.dims().contains(&dim))
        .collect()
    }

    /// Whether the samples must be admissible graphs (curvature is evaluated).
    pub fn needs_graph(&self) -> bool {
        matches!(self, Inequality::Eed | Inequality::CurvatureL2 | Inequality::HessianLp { .. })
    }

    /// LHS/RHS for one field, or `None` when the right-hand side vanishes.
    pub fn ratio(&self, h: &SpectralField) -> Result<Option<f64>> {
        let dim = h.grid().dim();
        if !self.dims().contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "{} is not stated in dimension {dim}",
                self.id()
            )));
        }
        let d = dim as f64;
        let dv = h.grid().cell_volume();
        let grad_norm = || slope_field(h);
        let lp = |v: &[f64], p: f64| (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() * dv).powf(1.0 / p);
        let sup = |v: &[f64]| v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        let (lhs, rhs) = match *self {
            Inequality::Eed => {
                check_lipschitz(h)?;
                let e = energy(h);
                let v = excess_mass(h);
                let dd = dissipation_surrogate(h)?;
                (e, v.powf(6.0 / (d + 5.0)) * dd.powf((d + 2.0) / (d + 5.0)))
            }
            Inequality::GnsI { p } => {
                let g = grad_norm();
                let hess = hessian_norm(h);
                (
                    sup(&g),
                    lp(&g, 2.0).powf((p - 2.0) / (2.0 * (p - 1.0))) * lp(&hess, p).powf(p / (2.0 * (p - 1.0))),
                )
            }
            Inequality::GnsIi => (
                h.l2_norm(),
                excess_mass(h).powf(2.0 / (d + 2.0)) * lp(&grad_norm(), 2.0).powf(d / (d + 2.0)),
            ),
            Inequality::GnsIii => (
                lp(&grad_norm(), 2.0),
                excess_mass(h).powf(2.0 / (d + 4.0)) * lp(&hessian_norm(h), 2.0).powf((d + 2.0) / (d + 4.0)),
            ),
            Inequality::GnsIv => {
                let g = grad_norm();
                (
                    h.sup_norm(),
                    excess_mass(h).powf(0.2) * lp(&g, 2.0).powf(0.4) * sup(&g).powf(0.4),
                )
            }
            Inequality::GnsIv1d => (
                h.sup_norm(),
                excess_mass(h).powf(1.0 / 3.0) * lp(&grad_norm(), 2.0).powf(2.0 / 3.0),
            ),
            Inequality::GnsV { q } => (
                h.lp_norm(q),
                h.l2_norm().powf(2.0 / q) * lp(&grad_norm(), 2.0).powf((q - 2.0) / q),
            ),
            Inequality::V2 => {
                let fine = h.resampled(2 * h.grid().n())?;
                let sq = fine.map_values(|v| v * v);
                (
                    sq.homogeneous_norm_sqr(0.5),
                    h.lp_norm(6.0).powi(3) * lp(&grad_norm(), 2.0),
                )
            }
            Inequality::CurvatureL2 => {
                check_lipschitz(h)?;
                let norms = curvature_norms(h, 2.0)?;
                let dd = dissipation_surrogate(h)?;
                (norms.h_l2.powi(2), (energy(h) * dd * dd).powf(1.0 / 3.0))
            }
            Inequality::HessianLp { p } => {
                check_lipschitz(h)?;
                let norms = curvature_norms(h, p)?;
                (norms.hess_lp, norms.h_lp)
            }
        };
        if !(rhs > 0.0) || !lhs.is_finite() {
            return Ok(None);
        }
        Ok(Some(lhs / rhs))
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Inequality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let num = |prefix: &str| -> Result<f64> {
            s.strip_prefix(prefix)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad exponent in {s:?}")))
        };
        Ok(match s {
            "eed" => Inequality::Eed,
            "i" | "gns_i" => Inequality::GnsI { p: 4.0 },
            "ii" | "gns_ii" => Inequality::GnsIi,
            "iii" | "gns_iii" => Inequality::GnsIii,
            "iv" | "gns_iv" => Inequality::GnsIv,
            "iv_1d" | "gns_iv_1d" => Inequality::GnsIv1d,
            "v" | "gns_v" => Inequality::GnsV { q: 4.0 },
            "v2" => Inequality::V2,
            "curvature_l2" => Inequality::CurvatureL2,
            "hessian_lp" => Inequality::HessianLp { p: 4.0 },
            _ if s.starts_with("gns_i_p") => Inequality::GnsI { p: num("gns_i_p")? },
            _ if s.starts_with("gns_v_q") => Inequality::GnsV { q: num("gns_v_q")? },
            _ if s.starts_with("hessian_lp_p") => Inequality::HessianLp { p: num("hessian_lp_p")? },
            _ => return Err(Error::InvalidArgument(format!("unknown inequality {s:?}"))),
        })
    }
}

/// Outcome of one inequality over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub inequality_id: String,
    pub dim: usize,
    /// Samples with a nonzero right-hand side.
    pub n_samples: usize,
    /// Samples skipped as degenerate.
    pub n_skipped: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Index of the maximizing sample (its ChaCha8 stream under the root seed).
    pub argmax_seed: u64,
    /// `|r(2n) - r(n)| / r(n)` for the maximizing sample.
    pub doubling_drift: f64,
    /// Samples re-evaluated at doubled resolution after exceeding ten times the median.
    pub rechecked: usize,
}

/// Report CSV header.
pub const REPORT_COLUMNS: [&str; 5] = [
    "inequality_id",
    "n_samples",
    "max_ratio",
    "argmax_seed",
    "doubling_drift",
];

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn refine(h: &SpectralField) -> Result<SpectralField> {
    h.resampled(2 * h.grid().n())
}

/// Samples that leave the graph regime count as degenerate rather than failing the suite.
fn admissible(r: Result<Option<f64>>) -> Result<Option<f64>> {
    match r {
        Err(Error::LipschitzViolation { .. }) => Ok(None),
        other => other,
    }
}

/// Evaluates `ineq` on fields produced by `make(i)` for `i in 0..count`.
fn evaluate_with(
    ineq: Inequality,
    dim: usize,
    count: usize,
    make: impl Fn(u64) -> Result<SpectralField> + Sync,
) -> Result<InequalityReport> {
    let ratios: Vec<Option<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| admissible(ineq.ratio(&make(i)?)))
        .collect::<Result<_>>()?;
    let mut valid: Vec<f64> = ratios.iter().flatten().copied().collect();
    let n_samples = valid.len();
    let med = median(&mut valid);
    let mut ratios = ratios;
    let mut rechecked = 0;
    for (i, r) in ratios.iter_mut().enumerate() {
        if let Some(v) = r {
            if *v > 10.0 * med {
                rechecked += 1;
                *r = admissible(ineq.ratio(&refine(&make(i as u64)?)?))?;
            }
        }
    }
    let (argmax, max_ratio) = ratios
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|v| (i, v)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let doubling_drift = if n_samples > 0 {
        let base = make(argmax as u64)?;
        let coarse = admissible(ineq.ratio(&base))?.unwrap_or(f64::NAN);
        let fine = admissible(ineq.ratio(&refine(&base)?))?.unwrap_or(f64::NAN);
        (fine - coarse).abs() / coarse
    } else {
        f64::NAN
    };
    Ok(InequalityReport {
        inequality_id: ineq.id(),
        dim,
        n_samples,
        n_skipped: count - n_samples,
        max_ratio: if n_samples > 0 { max_ratio } else { f64::NAN },
        median_ratio: med,
        argmax_seed: argmax as u64,
        doubling_drift,
        rechecked,
    })
}

/// Evaluates an inequality over given samples (argmax reported as the sample index).
pub fn check_samples(ineq: Inequality, samples: &[SpectralField]) -> Result<InequalityReport> {
    let dim = samples
        .first()
        .map(|s| s.grid().dim())
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    evaluate_with(ineq, dim, samples.len(), |i| Ok(samples[i as usize].clone()))
}

pub fn check_eed(samples: &[SpectralField]) -> Result<InequalityReport> {
    check_samples(Inequality::Eed, samples)
}

pub fn check_gns(item: Inequality, samples: &[SpectralField]) -> Result<InequalityReport> {
    if !item.id().starts_with("gns") {
        return Err(Error::InvalidArgument(format!("{item} is not an item of the interpolation lemma")));
    }
    check_samples(item, samples)
}

pub fn check_v2(samples: &[SpectralField]) -> Result<InequalityReport> {
    check_samples(Inequality::V2, samples)
}

/// Evaluates an inequality on `count` fields drawn from `spec`.
pub fn run_ensemble(ineq: Inequality, spec: &SampleSpec, count: usize) -> Result<InequalityReport> {
    spec.grid()?;
    evaluate_with(ineq, spec.dim, count, |i| sample_field(spec, i))
}

/// Ratio of surrogate to elliptic dissipation for a one-dimensional graph.
pub fn elliptic_spot_check(h: &SpectralField) -> Result<f64> {
    let (_, _, d_ell) = elliptic_velocity(h)?;
    Ok(dissipation_surrogate(h)? / d_ell)
}

pub fn write_reports<W: Write>(reports: &[InequalityReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REPORT_COLUMNS).map_err(|e| Error::Parse(e.to_string()))?;
    for r in reports {
        wtr.write_record([
            r.inequality_id.clone(),
            r.n_samples.to_string(),
            format!("{:.12e}", r.max_ratio),
            r.argmax_seed.to_string(),
            format!("{:.6e}", r.doubling_drift),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row of the time-integral table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TintRow {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub integral: f64,
    /// `integral * T^{a+b-1}`.
    pub ratio: f64,
}

/// `∫₀ᵀ (T-t)^{-a} t^{-b} dt` by adaptive quadrature with both endpoint
/// singularities removed by substitution.
pub fn singular_time_integral(a: f64, b: f64, horizon: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < a, b < 1, got a = {a}, b = {b}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let half = 0.5 * horizon;
    // t = u^{1/(1-b)} on [0, T/2].
    let eb = 1.0 / (1.0 - b);
    let left = integrate(
        |u: f64| eb * (horizon - u.powf(eb)).powf(-a),
        0.0,
        half.powf(1.0 - b),
        0.0,
        1e-14,
    )?
    .0;
    // T - t = w^{1/(1-a)} on [T/2, T].
    let ea = 1.0 / (1.0 - a);
    let right = integrate(
        |w: f64| ea * (horizon - w.powf(ea)).powf(-b),
        0.0,
        half.powf(1.0 - a),
        0.0,
        1e-14,
    )?
    .0;
    Ok(left + right)
}

/// Tabulates the time integral over all combinations; requires `a + b >= 1`.
pub fn check_tint(a_grid: &[f64], b_grid: &[f64], horizons: &[f64]) -> Result<Vec<TintRow>> {
    let mut rows = Vec::new();
    for &a in a_grid {
        for &b in b_grid {
            if a + b < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "the time-integral bound needs a + b >= 1, got a = {a}, b = {b}"
                )));
            }
            for &t in horizons {
                let integral = singular_time_integral(a, b, t)?;
                rows.push(TintRow {
                    a,
                    b,
                    horizon: t,
                    integral,
                    ratio: integral * t.powf(a + b - 1.0),
                });
            }
        }
    }
    Ok(rows)
}

/// Largest relative spread of the ratio across horizons for any `(a, b)`.
pub fn tint_spread(rows: &[TintRow]) -> f64 {
    let mut worst: f64 = 0.0;
    for r in rows {
        for s in rows.iter().filter(|s| s.a == r.a && s.b == r.b) {
            worst = worst.max((r.ratio - s.ratio).abs() / r.ratio.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sampling_is_deterministic_and_normalized() {
        let spec = SampleSpec { seed: 3, ..Default::default() };
        let a = sample_field(&spec, 5).unwrap();
        let b = sample_field(&spec, 5).unwrap();
        assert_eq!(a.values(), b.values());
        assert!((lipschitz(&a) - 1.0).abs() < 1e-12);
        assert_ne!(sample_field(&spec, 6).unwrap().values(), a.values());
    }

    #[test]
    fn smoother_envelope_has_smaller_hessian_ratio() {
        let g = make_grid(1, 64.0, 256).unwrap();
        let ratio = |gamma: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let h = with_gamma(&g, gamma, 1.0, &mut rng);
            let hess: f64 = hessian_norm(&h).iter().map(|v| v * v).sum::<f64>().sqrt();
            let grad: f64 = slope_field(&h).iter().map(|v| v * v).sum::<f64>().sqrt();
            hess / grad
        };
        assert!(ratio(0.5) > ratio(3.0));
    }

    #[test]
    fn v2_cosine_closed_form() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let v = SpectralField::from_fn(&g, |x| x[0].cos());
        let r = Inequality::V2.ratio(&v).unwrap().unwrap();
        assert!((r - 1.0 / (2.0 * (5.0f64 / 8.0).sqrt())).abs() < 1e-8);
        assert!(Inequality::V2.ratio(&SpectralField::zeros(&g)).unwrap().is_none());
    }

    #[test]
    fn gns_v_q_two_is_identity() {
        let spec = SampleSpec { dim: 2, n: 32, length: 16.0, ..Default::default() };
        let h = sample_field(&spec, 0).unwrap();
        let r = Inequality::GnsV { q: 2.0 }.ratio(&h).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eed_single_mode_small_amplitude() {
        let l = 2.0 * PI;
        let g = make_grid(1, l, 64).unwrap();
        let (a, k) = (0.01, 2.0);
        let h = SpectralField::from_fn(&g, |x| a * (k * x[0]).cos());
        let e = a * a * k * k * l / 4.0;
        let v = 2.0 * a * l / PI;
        let d = l * a * a * k.powi(5);
        let expect = e / (v * d.sqrt());
        let got = Inequality::Eed.ratio(&h).unwrap().unwrap();
        assert!((got / expect - 1.0).abs() < 0.05, "{got} {expect}");
    }

    #[test]
    fn eed_ratio_scale_invariant() {
        for dim in [1, 2] {
            let spec = SampleSpec { dim, n: 64, length: 20.0, lip_target: 0.8, seed: 2, ..Default::default() };
            let h = sample_field(&spec, 1).unwrap();
            let lambda = 3.7;
            let g2 = h.grid().scaled(lambda).unwrap();
            let scaled = SpectralField::from_values(&g2, h.values().iter().map(|v| v * lambda).collect()).unwrap();
            let r1 = Inequality::Eed.ratio(&h).unwrap().unwrap();
            let r2 = Inequality::Eed.ratio(&scaled).unwrap().unwrap();
            assert!((r1 / r2 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn items_respect_dimensions() {
        assert_eq!(Inequality::gns_items(1).len(), 3);
        assert_eq!(Inequality::gns_items(2).len(), 5);
        let g = make_grid(1, 10.0, 32).unwrap();
        assert!(Inequality::GnsIv.ratio(&SpectralField::zeros(&g)).is_err());
    }

    #[test]
    fn ids_round_trip() {
        for item in Inequality::gns_items(2).into_iter().chain([Inequality::Eed, Inequality::V2, Inequality::GnsIv1d]) {
            assert_eq!(item.id().parse::<Inequality>().unwrap(), item);
        }
    }

    #[test]
    fn ensemble_report_is_deterministic() {
        let spec = SampleSpec { n: 64, length: 32.0, seed: 9, ..Default::default() };
        let a = run_ensemble(Inequality::GnsIi, &spec, 40).unwrap();
        let b = run_ensemble(Inequality::GnsIi, &spec, 40).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_samples, 40);
        assert!(a.max_ratio.is_finite());
        let mut buf = Vec::new();
        write_reports(&[a], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("inequality_id,n_samples,max_ratio,argmax_seed,doubling_drift"));
    }

    #[test]
    fn tint_rejects_subcritical_exponents() {
        assert!(check_tint(&[0.3], &[0.3], &[1.0]).is_err());
    }
}
