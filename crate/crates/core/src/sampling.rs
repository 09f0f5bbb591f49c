//! Sampling designs for the auxiliary subsample variable `u`.
//!
//! Positions returned by the draw functions index the sampling frame
//! `0..n`; [`Subsample::remap`] translates them to model element ids.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SubsampleKind {
    WithReplacement,
    /// One inclusion bit per frame position.
    Indicators(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    kind: SubsampleKind,
    indices: Vec<usize>,
    probabilities: Vec<f64>,
    expected_size: usize,
}

impl Subsample {
    pub fn with_replacement(indices: Vec<usize>, probabilities: Vec<f64>) -> Result<Self> {
        if indices.len() != probabilities.len() {
            return Err(Error::InvalidDesign(
                "indices and probabilities differ in length".into(),
            ));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidDesign(format!(
                "inclusion probability {p} outside (0, 1]"
            )));
        }
        let expected_size = indices.len();
        Ok(Self {
            kind: SubsampleKind::WithReplacement,
            indices,
            probabilities,
            expected_size,
        })
    }

    /// Indicator subsample over a frame of `bits.len()` elements. The selected
    /// positions are treated as a simple random sample with `p_k = 1/n`.
    pub fn from_indicators(bits: Vec<bool>, expected_size: usize) -> Self {
        let n = bits.len();
        let indices: Vec<usize> = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        let probabilities = vec![1.0 / n as f64; indices.len()];
        Self {
            kind: SubsampleKind::Indicators(bits),
            indices,
            probabilities,
            expected_size,
        }
    }

    pub fn kind(&self) -> &SubsampleKind {
        &self.kind
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Realized number of draws (or selected indicators).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn expected_size(&self) -> usize {
        self.expected_size
    }

    pub fn indicators(&self) -> Option<&[bool]> {
        match &self.kind {
            SubsampleKind::Indicators(bits) => Some(bits),
            SubsampleKind::WithReplacement => None,
        }
    }

    /// Maps frame positions to element ids. Indicator bits stay on positions.
    pub fn remap(mut self, frame: &[usize]) -> Self {
        for k in &mut self.indices {
            *k = frame[*k];
        }
        self
    }
}

/// `m` iid uniform positions over `0..n`.
pub fn draw_srs<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Subsample> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if m == 0 {
        return Err(Error::InvalidDesign("sample size must be at least 1".into()));
    }
    let indices = (0..m).map(|_| rng.random_range(0..n)).collect();
    Subsample::with_replacement(indices, vec![1.0 / n as f64; m])
}

/// Cumulative weight table for probability-proportional-to-size draws.
#[derive(Debug, Clone)]
pub struct PpsTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl PpsTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidDesign(format!(
                    "weight {w} for element {k} is negative or not finite"
                )));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidDesign("all weights are zero".into()));
        }
        Ok(Self {
            cumulative,
            total: acc,
        })
    }

    pub fn probability(&self, k: usize) -> f64 {
        let prev = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
        (self.cumulative[k] - prev) / self.total
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let target = rng.random::<f64>() * self.total;
        let pos = self.cumulative.partition_point(|&c| c <= target);
        // guard against target landing on the final boundary after rounding,
        // and skip zero-width slots
        let mut k = pos.min(self.cumulative.len() - 1);
        while self.probability(k) == 0.0 && k > 0 {
            k -= 1;
        }
        k
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }
}

/// `m` iid positions with `p_k = w_k / Σ w`.
pub fn draw_pps<R: Rng + ?Sized>(weights: &[f64], m: usize, rng: &mut R) -> Result<Subsample> {
    let table = PpsTable::new(weights)?;
    draw_pps_from(&table, m, rng)
}

pub fn draw_pps_from<R: Rng + ?Sized>(table: &PpsTable, m: usize, rng: &mut R) -> Result<Subsample> {
    if m == 0 {
        return Err(Error::InvalidDesign("sample size must be at least 1".into()));
    }
    let indices: Vec<usize> = (0..m).map(|_| table.draw(rng)).collect();
    let probabilities = indices.iter().map(|&k| table.probability(k)).collect();
    Subsample::with_replacement(indices, probabilities)
}

/// With probability `omega` replaces the subsample by `fresh_draw()`;
/// otherwise keeps `current`. The flag reports whether a refresh happened.
pub fn propose_infrequent<R, F>(
    current: &Subsample,
    omega: f64,
    fresh_draw: F,
    rng: &mut R,
) -> Result<(Subsample, bool)>
where
    R: Rng + ?Sized,
    F: FnOnce(&mut R) -> Result<Subsample>,
{
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "refresh probability must lie in (0, 1], got {omega}"
        )));
    }
    let u: f64 = rng.random();
    if u < omega {
        Ok((fresh_draw(rng)?, true))
    } else {
        Ok((current.clone(), false))
    }
}

/// Persistence of the integrated-out indicator chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    pub phi: f64,
    pub kappa: f64,
    /// Expected sampling fraction `m*/n`.
    pub fraction: f64,
}

impl CorrelationParams {
    pub fn from_phi(phi: f64, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidParams(format!("phi {phi} outside [0, 1]")));
        }
        Ok(Self {
            phi,
            kappa: kappa_from_phi(phi, fraction),
            fraction,
        })
    }

    /// Builds parameters from `kappa` directly; `phi` is recovered by bisection.
    pub fn from_kappa(kappa: f64, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        if !(kappa >= fraction && kappa <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "kappa {kappa} outside [{fraction}, 1]"
            )));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if kappa_from_phi(mid, fraction) < kappa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            phi: 0.5 * (lo + hi),
            kappa,
            fraction,
        })
    }

    /// `Pr(stay 0)`, chosen so the marginal inclusion probability is preserved.
    pub fn stay_excluded(&self) -> f64 {
        1.0 - (1.0 - self.kappa) * self.fraction / (1.0 - self.fraction)
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParams(format!(
            "sampling fraction {fraction} outside (0, 1)"
        )));
    }
    Ok(())
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `Φ₂(a, a | ρ)` for `ρ ∈ [0, 1]` via the tetrachoric integral
/// `Φ(a)² + (1/2π) ∫₀^{asin ρ} exp(-a² / (1 + sin t)) dt`.
pub fn bivariate_normal_cdf_equal(a: f64, rho: f64) -> f64 {
    let phi_a = std_normal().cdf(a);
    let upper = rho.clamp(-1.0, 1.0).asin();
    let integrand = |t: f64| (-a * a / (1.0 + t.sin())).exp();
    phi_a * phi_a + gauss_legendre(integrand, 0.0, upper, 64) / (2.0 * std::f64::consts::PI)
}

/// Composite 8-point Gauss-Legendre rule on `panels` equal panels.
fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

/// Stay-included probability `κ = Φ₂(a, a | φ) / f` with `a = Φ⁻¹(f)`.
pub fn kappa_from_phi(phi: f64, fraction: f64) -> f64 {
    if phi <= 0.0 {
        return fraction;
    }
    if phi >= 1.0 {
        return 1.0;
    }
    let a = std_normal().inverse_cdf(fraction);
    let kappa = bivariate_normal_cdf_equal(a, phi) / fraction;
    kappa.clamp(fraction, 1.0)
}

/// One step of the integrated-out indicator chain: each bit stays 1 with
/// probability `κ` and stays 0 with probability [`CorrelationParams::stay_excluded`].
pub fn propose_correlated_indicators<R: Rng + ?Sized>(
    current: &Subsample,
    params: &CorrelationParams,
    rng: &mut R,
) -> Result<Subsample> {
    let bits = current.indicators().ok_or_else(|| {
        Error::InvalidParams("correlated proposals need an indicator subsample".into())
    })?;
    check_fraction(params.fraction)?;
    let stay0 = params.stay_excluded();
    if !(0.0..=1.0).contains(&stay0) || !(0.0..=1.0).contains(&params.kappa) {
        return Err(Error::InvalidParams(format!(
            "transition probabilities out of range (kappa {}, stay-0 {stay0})",
            params.kappa
        )));
    }
    let next = bits
        .iter()
        .map(|&b| {
            let u: f64 = rng.random();
            if b {
                u < params.kappa
            } else {
                u >= stay0
            }
        })
        .collect();
    Ok(Subsample::from_indicators(next, current.expected_size()))
}

/// Stationary draw of independent Bernoulli(`fraction`) indicators.
pub fn draw_indicators<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<Subsample> {
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    check_fraction(fraction)?;
    let bits = (0..n).map(|_| rng.random::<f64>() < fraction).collect();
    Ok(Subsample::from_indicators(
        bits,
        (fraction * n as f64).round() as usize,
    ))
}
