//! Computable constants from the analysis (concentration radius, interiority
//! floors, entropy continuity) and read-only checkers run against traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};
use crate::objectives::ArmMomentStats;

/// Innovation structure of an entropy instance: every arm has a unit
/// direction `v_i` with `v_iᵀ S_i v_i ≥ ν₀` and `v_iᵀ S_j v_i ≤ ε₀` for `j ≠ i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NLVStructure {
    pub d: usize,
    pub m: usize,
    pub nu0: f64,
    pub eps0: f64,
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
}

impl NLVStructure {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("d and m must be positive".into()));
        }
        if !(self.nu0 > 0.0 && self.nu0 <= 1.0) {
            return Err(Error::OutOfDomain(format!("nu0 = {} not in (0, 1]", self.nu0)));
        }
        if !(self.eps0 >= 0.0 && self.eps0 < self.nu0 / 8.0) {
            return Err(Error::OutOfDomain(format!(
                "eps0 = {} not in [0, nu0/8)",
                self.eps0
            )));
        }
        if let Some(dirs) = &self.directions {
            for v in dirs {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if v.len() != self.d || (n - 1.0).abs() > 1e-9 {
                    return Err(Error::OutOfDomain("innovation directions must be unit d-vectors".into()));
                }
            }
        }
        Ok(())
    }
}

/// Regularity constants of a Fréchet instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDStructure {
    /// Bound on embedding norms.
    pub b: f64,
    /// Floor of the reference covariance spectrum.
    pub lambda0: f64,
    /// Floor of every arm covariance spectrum.
    pub nu: f64,
    /// Interiority level of the population optimum.
    pub gamma0: f64,
    /// Loss margin of boundary mixtures over the optimum.
    pub delta0: f64,
}

impl FDStructure {
    pub fn validate(&self, m: usize) -> Result<()> {
        let all = [self.b, self.lambda0, self.nu, self.gamma0, self.delta0];
        if all.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::OutOfDomain("FD structure constants must be positive".into()));
        }
        if self.gamma0 > 1.0 / m as f64 {
            return Err(Error::OutOfDomain(format!("gamma0 = {} exceeds 1/m", self.gamma0)));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfidence(delta))
    }
}

/// `(2/√M)(1 + √(2 log(m(T+1)/δ)))`.
pub fn hoeffding_radius(warm_start: usize, m: usize, horizon: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if warm_start == 0 || m == 0 {
        return Err(Error::OutOfDomain("warm start and arm count must be positive".into()));
    }
    let log_term = (m as f64 * (horizon as f64 + 1.0) / delta).ln().max(0.0);
    Ok(2.0 / (warm_start as f64).sqrt() * (1.0 + (2.0 * log_term).sqrt()))
}

/// Lower bound on every weight of the empirical log-Vendi minimizer.
///
/// With `w = 0` the exponent carries an extra `−1`; with a fidelity weight
/// `w > 0` it does not.
pub fn gamma_min_nlv(s: &NLVStructure, eta: f64, w: f64) -> Result<f64> {
    s.validate()?;
    if !(eta >= 0.0) || !(w >= 0.0) {
        return Err(Error::OutOfDomain("eta and w must be nonnegative".into()));
    }
    let limit = s.nu0 / 4.0;
    if eta > limit {
        return Err(Error::WarmStartTooSmall { eta, limit });
    }
    let nu_eff = s.nu0 - eta;
    let eps_eff = s.eps0 + (s.m as f64 - 1.0) * eta;
    let core = s.d as f64 / std::f64::consts::E + (s.m as f64).ln();
    let exponent = if w == 0.0 {
        -1.0 - core / nu_eff
    } else {
        -(core + w) / nu_eff
    };
    Ok((exponent.exp() - eps_eff).max(0.0))
}

/// Smallest warm start making the radius admissible and the floor positive.
///
/// `None` when no `M` up to `2⁴⁰` works, which happens when `ε₀` alone
/// already exceeds the unperturbed floor.
pub fn min_warm_start(s: &NLVStructure, horizon: usize, delta: f64, w: f64) -> Result<Option<usize>> {
    s.validate()?;
    check_delta(delta)?;
    let ok = |m0: usize| -> Result<bool> {
        let eta = hoeffding_radius(m0, s.m, horizon, delta)?;
        match gamma_min_nlv(s, eta, w) {
            Ok(g) => Ok(g > 0.0),
            Err(Error::WarmStartTooSmall { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let cap = 1usize << 40;
    if !ok(cap)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0usize, cap);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid.max(1))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi.max(1)))
}

fn binary_entropy(t: f64) -> f64 {
    let f = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    f(t) + f(1.0 - t)
}

/// `T log(d − 1) + h(T)` for `T ∈ [0, 1 − 1/d]`.
pub fn fannes_audenaert(t: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::OutOfDomain(format!("dimension {d} < 2")));
    }
    let hi = 1.0 - 1.0 / d as f64;
    if !(t >= 0.0 && t <= hi + 1e-15) {
        return Err(Error::OutOfDomain(format!("trace distance {t} outside [0, {hi}]")));
    }
    Ok(t * ((d - 1) as f64).ln() + binary_entropy(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountFloorReport {
    pub passed: bool,
    /// Smallest `n_i(t) − floor(t)` over all arms and rounds.
    pub worst_margin: f64,
    /// First `(round, arm)` whose count fell below the floor.
    pub first_violation: Option<(usize, usize)>,
}

/// Checks `n_i(t) ≥ M + γt − √(2t log(mT/δ))` along a sequence of pulls.
pub fn count_floor(
    pulls: &[usize],
    m: usize,
    warm_start: usize,
    gamma: f64,
    delta: f64,
) -> Result<CountFloorReport> {
    check_delta(delta)?;
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    let horizon = pulls.len().max(1) as f64;
    let log_term = (m as f64 * horizon / delta).ln().max(0.0);
    let mut counts = vec![warm_start; m];
    let mut worst = f64::INFINITY;
    let mut first = None;
    for (idx, &arm) in pulls.iter().enumerate() {
        if arm >= m {
            return Err(Error::InconsistentState(format!("pull of arm {arm} with {m} arms")));
        }
        counts[arm] += 1;
        let t = (idx + 1) as f64;
        let floor = warm_start as f64 + gamma * t - (2.0 * t * log_term).sqrt();
        for (i, &n) in counts.iter().enumerate() {
            let margin = n as f64 - floor;
            if margin < worst {
                worst = margin;
            }
            if margin < 0.0 && first.is_none() {
                first = Some((idx + 1, i));
            }
        }
    }
    Ok(CountFloorReport {
        passed: first.is_none(),
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
        first_violation: first,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationRecord {
    pub arm: usize,
    pub n: usize,
    pub deviation: f64,
    pub bound: f64,
}

/// `‖Ŝ_i(n) − S_i‖_F` for every prefix of every arm's embedding stream,
/// next to the radius `(2/√n)(1 + √(2 log(m(T+1)/δ)))`.
pub fn deviation_probe(
    streams: &[Vec<Vec<f64>>],
    population: &[SymMatrix<f64>],
    horizon: usize,
    delta: f64,
) -> Result<Vec<DeviationRecord>> {
    check_delta(delta)?;
    if streams.len() != population.len() {
        return Err(Error::DimMismatch {
            expected: population.len(),
            got: streams.len(),
        });
    }
    let m = streams.len();
    let mut out = Vec::new();
    for (arm, (xs, s)) in streams.iter().zip(population).enumerate() {
        let mut st = ArmMomentStats::new(s.dim());
        for (k, x) in xs.iter().enumerate() {
            st.push(x)?;
            let n = k + 1;
            out.push(DeviationRecord {
                arm,
                n,
                deviation: st.second_moment().sub(s).frobenius(),
                bound: hoeffding_radius(n, m, horizon, delta)?,
            });
        }
    }
    Ok(out)
}

/// Fraction of records whose deviation exceeds its bound.
pub fn violation_rate(records: &[DeviationRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.deviation > r.bound).count() as f64 / records.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnovationReport {
    pub directions: Vec<Vec<f64>>,
    /// Per arm `v_iᵀ S_i v_i`.
    pub own: Vec<f64>,
    /// Per arm `max_{j≠i} v_iᵀ S_j v_i`.
    pub leak: Vec<f64>,
    pub nu0: f64,
    pub eps0: f64,
    pub satisfied: bool,
}

impl InnovationReport {
    pub fn structure(&self) -> NLVStructure {
        NLVStructure {
            d: self.directions.first().map_or(0, Vec::len),
            m: self.directions.len(),
            nu0: self.nu0.min(1.0),
            eps0: self.eps0,
            directions: Some(self.directions.clone()),
        }
    }
}

/// Heuristic search for innovation directions among the eigenvectors of each
/// population second moment; picks the candidate maximizing `ν − 8ε` per arm.
///
/// A negative answer does not prove the condition fails for other directions.
pub fn find_innovation_directions(population: &[SymMatrix<f64>]) -> Result<InnovationReport> {
    let m = population.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    let mut directions = Vec::with_capacity(m);
    let mut own = Vec::with_capacity(m);
    let mut leak = Vec::with_capacity(m);
    for (i, s) in population.iter().enumerate() {
        let eig = sym_eig(s)?;
        let mut best: Option<(f64, Vec<f64>, f64, f64)> = None;
        for k in 0..eig.dim() {
            let v = eig.vector(k);
            let nu = s.quad_form(&v);
            let eps = population
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, sj)| sj.quad_form(&v))
                .fold(0.0, f64::max);
            let score = nu - 8.0 * eps;
            if best.as_ref().map_or(true, |b| score > b.0) {
                best = Some((score, v, nu, eps));
            }
        }
        let (_, v, nu, eps) = best.expect("nonempty spectrum");
        directions.push(v);
        own.push(nu);
        leak.push(eps);
    }
    let nu0 = own.iter().copied().fold(f64::INFINITY, f64::min);
    let eps0 = leak.iter().copied().fold(0.0, f64::max);
    Ok(InnovationReport {
        satisfied: nu0 > 0.0 && eps0 < nu0 / 8.0,
        directions,
        own,
        leak,
        nu0,
        eps0,
    })
}
