//! Test functions `f_Δ(x) = max_{i∈Δ} x_i`, the generator `A^θ` acting on
//! them, and martingale residuals of simulated n-point motions.

use crate::error::{Error, Result};
use crate::estimators::{replica_seed, MCEstimate, SeedManifest, Welford};
use crate::measures::{beta_pm, FlowParams, Side, ThetaTable};
use crate::walks::NPointPath;
use std::io::Write;

/// Nonempty `Δ ⊆ {0..n-1}` as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexSet {
    n: usize,
    mask: u32,
}

impl IndexSet {
    /// Builds `Δ` from zero-based indices.
    pub fn new(n: usize, members: &[usize]) -> Result<Self> {
        if n == 0 || n > 31 {
            return Err(Error::InvalidIndexSet(format!("dimension {n} not in 1..=31")));
        }
        let mut mask = 0u32;
        for &i in members {
            if i >= n {
                return Err(Error::InvalidIndexSet(format!("index {i} out of range for n = {n}")));
            }
            mask |= 1 << i;
        }
        Self::from_mask(n, mask)
    }

    pub fn from_mask(n: usize, mask: u32) -> Result<Self> {
        if mask == 0 {
            return Err(Error::InvalidIndexSet("empty index set".into()));
        }
        if n < 32 && mask >> n != 0 {
            return Err(Error::InvalidIndexSet(format!("mask {mask:#b} exceeds n = {n}")));
        }
        Ok(Self { n, mask })
    }

    /// All `2^n - 1` nonempty subsets, in mask order.
    pub fn all(n: usize) -> Vec<Self> {
        (1..(1u32 << n)).map(|m| Self { n, mask: m }).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }

    /// One-based label such as `{1,3}`.
    pub fn label(&self) -> String {
        let m: Vec<String> = self.members().map(|i| (i + 1).to_string()).collect();
        format!("{{{}}}", m.join(","))
    }
}

/// `(max_{i∈Δ} x_i, #{i ∈ Δ : x_i attains it})`; ties within `1e-12·scale`.
pub fn f_g_delta(d: &IndexSet, x: &[f64]) -> (f64, usize) {
    let f = d.members().map(|i| x[i]).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * f.abs().max(1.0);
    let g = d.members().filter(|&i| f - x[i] <= tol).count();
    (f, g)
}

/// Integer version with exact ties.
pub fn f_g_delta_int(mask: u32, x: &[i64]) -> (i64, u32) {
    let mut f = i64::MIN;
    let mut g = 0;
    for (i, &v) in x.iter().enumerate() {
        if mask >> i & 1 == 0 {
            continue;
        }
        if v > f {
            f = v;
            g = 1;
        } else if v == f {
            g += 1;
        }
    }
    (f, g)
}

/// Exact one-sided derivative of a function that is linear on each order cell,
/// in direction `+1` on `I` and `-1` on `J`.
pub fn one_sided_derivative(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i_set: u32, j_set: u32) -> f64 {
    assert_eq!(i_set & j_set, 0, "I and J must be disjoint");
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0.0).fold(f64::INFINITY, f64::min);
    let eps = if gap.is_finite() { gap / 2.0 } else { 1.0 };
    let moved: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if i_set >> k & 1 == 1 {
                v + eps
            } else if j_set >> k & 1 == 1 {
                v - eps
            } else {
                v
            }
        })
        .collect();
    (f(&moved) - f(x)) / eps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApplyResult {
    /// The generator's double sum evaluated term by term.
    pub literal: f64,
    /// `β_+(g_Δ(x)) = θ(0,0) - 2θ(0,g)`.
    pub closed_form: f64,
}

/// `A^θ f_Δ(x) = Σ_{clusters J} Σ_{I⊆J} θ(|I|, |J∖I|) ∇_{v_{I,J∖I}} f_Δ(x)`.
pub fn apply_a_theta(t: &ThetaTable, d: &IndexSet, x: &[f64]) -> Result<ApplyResult> {
    if x.len() != d.n() {
        return Err(Error::InvalidIndexSet(format!("x has {} coordinates, Δ has n = {}", x.len(), d.n())));
    }
    let mut clusters: Vec<u32> = Vec::new();
    let mut seen = 0u32;
    for i in 0..x.len() {
        if seen >> i & 1 == 1 {
            continue;
        }
        let mut j = 0u32;
        for k in i..x.len() {
            if x[k] == x[i] {
                j |= 1 << k;
            }
        }
        seen |= j;
        clusters.push(j);
    }
    let biggest = clusters.iter().map(|c| c.count_ones() as usize).max().unwrap_or(0);
    let (_, g) = f_g_delta(d, x);
    let needed = biggest.max(g);
    if needed > t.kmax() {
        return Err(Error::ThetaTooSmall { needed, kmax: t.kmax() });
    }
    let f = |y: &[f64]| f_g_delta(d, y).0;
    let mut literal = 0.0;
    for &j in &clusters {
        let size = j.count_ones() as usize;
        // Enumerate subsets of j.
        let mut i = j;
        loop {
            let k = i.count_ones() as usize;
            literal += t.get(k, size - k) * one_sided_derivative(&f, x, i, j & !i);
            if i == 0 {
                break;
            }
            i = (i - 1) & j;
        }
    }
    Ok(ApplyResult { literal, closed_form: t.beta_plus(g) })
}

/// Rank modulo `2^31 - 1` of the `(2^n - 1) × 2^n` matrix of `f_Δ` on `{0,1}^n`.
/// A full rank mod p implies full rank over the rationals.
pub fn basis_rank(n: usize) -> usize {
    const P: u64 = 2_147_483_647;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % P;
            }
            b = b * b % P;
            e >>= 1;
        }
        r
    };
    let cols = 1usize << n;
    let mut m: Vec<Vec<u64>> = (1..cols as u32)
        .map(|delta| (0..cols as u32).map(|pt| (pt & delta != 0) as u64).collect())
        .collect();
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, p);
        let inv = pow(m[rank][c], P - 2);
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let factor = m[r][c] * inv % P;
                let pivot = m[rank].clone();
                for (a, b) in m[r].iter_mut().zip(&pivot).skip(c) {
                    *a = (*a + P - factor * b % P) % P;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Names of the statistics returned by [`path_residuals`], in order.
pub fn residual_names(n: usize) -> Vec<String> {
    let mut names: Vec<String> = IndexSet::all(n).iter().map(|d| format!("f{}", d.label())).collect();
    for i in 0..n {
        for j in i + 1..n {
            names.push(format!("theta[{},{}]", i + 1, j + 1));
        }
    }
    for i in 0..n {
        for j in i..n {
            names.push(format!("cov[{},{}]", i + 1, j + 1));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            names.push(format!("cov_continuum[{},{}]", i + 1, j + 1));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            names.push(format!("occupation[{},{}]", i + 1, j + 1));
        }
    }
    names
}

/// Which statistics should vanish in mean; the rest are reported only.
pub fn residual_is_gated(name: &str) -> bool {
    !(name.starts_with("occupation") || name.starts_with("cov_continuum"))
}

/// Constants for the residuals of paths rescaled by `x ↦ εx`, `t ↦ ε²t`.
#[derive(Debug, Clone)]
pub struct ResidualSpec {
    pub n: usize,
    pub eps: f64,
    pub drift: f64,
    /// `β_+(m)` for `m = 0..=n` (index 0 unused).
    pub beta_plus: Vec<f64>,
    pub nu_mass: f64,
    /// Per-step covariance of two coordinates at one site, divided by `ε²`.
    pub kappa_same: f64,
    pub kappa_shared: f64,
}

impl ResidualSpec {
    /// `κ_ii = 1 - ε²β²`, `κ_ij = 1 - ε²β² - 4ε ν([0,1])` at a shared site.
    pub fn new(p: &FlowParams, eps: f64, n: usize) -> Self {
        let beta_plus = (0..=n as u32).map(|m| if m == 0 { 0.0 } else { beta_pm(p, m, Side::Plus) }).collect();
        let nu_mass = p.nu.total_mass();
        let e2b2 = eps * eps * p.drift * p.drift;
        Self {
            n,
            eps,
            drift: p.drift,
            beta_plus,
            nu_mass,
            kappa_same: 1.0 - e2b2,
            kappa_shared: 1.0 - e2b2 - 4.0 * eps * nu_mass,
        }
    }
}

/// Per-path statistics in the order of [`residual_names`].
pub fn path_residuals(spec: &ResidualSpec, path: &NPointPath) -> Vec<f64> {
    let n = spec.n;
    let steps = path.len() - 1;
    let e = spec.eps;
    let e2 = e * e;
    let subsets = (1u32 << n) - 1;
    let mut comp = vec![0.0; subsets as usize];
    let mut together = vec![0u64; n * n];
    for k in 0..steps {
        let x = path.at(k);
        for mask in 1..=subsets {
            let (_, g) = f_g_delta_int(mask, x);
            comp[mask as usize - 1] += spec.beta_plus[g as usize];
        }
        for i in 0..n {
            for j in i + 1..n {
                together[i * n + j] += (x[i] == x[j]) as u64;
            }
        }
    }
    let x0 = path.at(0);
    let xt = path.last();
    let horizon = steps as f64 * e2;
    let mut out = Vec::new();
    for mask in 1..=subsets {
        let df = (f_g_delta_int(mask, xt).0 - f_g_delta_int(mask, x0).0) as f64 * e;
        out.push(df - e2 * comp[mask as usize - 1]);
    }
    for i in 0..n {
        for j in i + 1..n {
            let dd = ((xt[i] - xt[j]).abs() - (x0[i] - x0[j]).abs()) as f64 * e;
            out.push(dd - 4.0 * spec.nu_mass * e2 * together[i * n + j] as f64);
        }
    }
    let m: Vec<f64> = (0..n).map(|i| (xt[i] - x0[i]) as f64 * e - spec.drift * horizon).collect();
    for i in 0..n {
        for j in i..n {
            let occ = if i == j { horizon } else { e2 * together[i * n + j] as f64 };
            let kappa = if i == j { spec.kappa_same } else { spec.kappa_shared };
            out.push(m[i] * m[j] - kappa * occ);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[i] * m[j] - e2 * together[i * n + j] as f64);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(e2 * together[i * n + j] as f64);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStat {
    pub name: String,
    pub estimate: MCEstimate,
    pub gated: bool,
}

impl ResidualStat {
    pub fn z(&self) -> f64 {
        self.estimate.z(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub stats: Vec<ResidualStat>,
}

impl ResidualReport {
    pub fn get(&self, name: &str) -> Option<&ResidualStat> {
        self.stats.iter().find(|s| s.name == name)
    }

    /// `statistic,mean,stderr,z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::io::fmt_real;
        writeln!(out, "statistic,mean,stderr,z")?;
        for s in &self.stats {
            let e = &s.estimate;
            writeln!(out, "{},{},{},{}", s.name, fmt_real(e.mean), fmt_real(e.stderr), fmt_real(s.z()))?;
        }
        Ok(())
    }
}

/// Builds a report from already accumulated per-statistic Welford states.
pub fn report_from_accumulators(n: usize, acc: &[Welford], manifest: SeedManifest) -> ResidualReport {
    let stats = residual_names(n)
        .into_iter()
        .zip(acc)
        .map(|(name, w)| ResidualStat { gated: residual_is_gated(&name), estimate: w.estimate(manifest.clone()), name })
        .collect();
    ResidualReport { stats }
}

/// Residual means over an ensemble of n-point paths.
pub fn martingale_residuals<'a>(
    paths: impl IntoIterator<Item = &'a NPointPath>,
    p: &FlowParams,
    eps: f64,
    manifest: SeedManifest,
) -> Result<ResidualReport> {
    let mut it = paths.into_iter().peekable();
    let n = it.peek().ok_or(Error::InvalidArgument("empty path ensemble".into()))?.n();
    let spec = ResidualSpec::new(p, eps, n);
    let mut acc = vec![Welford::default(); residual_names(n).len()];
    for path in it {
        for (a, v) in acc.iter_mut().zip(path_residuals(&spec, path)) {
            a.push(v);
        }
    }
    Ok(report_from_accumulators(n, &acc, manifest))
}

/// Residuals of `replicas` averaged n-point paths from `x0` over rescaled
/// time `T`, under the flow law at scale `eps`.
pub fn martingale_residuals_mc(
    p: &FlowParams,
    eps: f64,
    x0: &[i64],
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<ResidualReport> {
    let n = x0.len();
    if n == 0 || n > 16 {
        return Err(Error::InvalidArgument(format!("need 1..=16 walkers, got {n}")));
    }
    let mu = crate::estimators::flow_measure(p, eps)?;
    let steps = (horizon / (eps * eps)).round().max(1.0) as i64;
    let spec = ResidualSpec::new(p, eps, n);
    let rows: Vec<Result<Vec<f64>>> = crate::exec::map_indexed(replicas, |i| {
        let path = crate::walks::npoint_sample(&mu, x0, steps, replica_seed(seed, i), crate::walks::Mode::Averaged)?;
        Ok(path_residuals(&spec, &path))
    });
    let mut acc = vec![Welford::default(); residual_names(n).len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r?) {
            a.push(v);
        }
    }
    Ok(report_from_accumulators(n, &acc, SeedManifest::new("residuals", seed, replicas)))
}
