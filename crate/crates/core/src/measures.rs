//! Characteristic measures on [0,1] as atoms plus Beta densities, the
//! constants derived from them, and the small-eps environment laws.

use crate::error::{Error, Result};
use rand::{Rng, RngExt};
use rand_distr::{Beta, Distribution};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub q: f64,
    pub w: f64,
}

/// Density `w q^(a-1) (1-q)^(b-1) / B(a,b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaComponent {
    pub a: f64,
    pub b: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CharacteristicMeasure {
    atoms: Vec<Atom>,
    beta: Vec<BetaComponent>,
}

/// `Gamma(a + k) / Gamma(a)` for integer `k`, or `None` when `a + k <= 0`.
fn gamma_ratio(a: f64, k: i32) -> Option<f64> {
    if k >= 0 {
        Some((0..k).map(|i| a + i as f64).product())
    } else if a + (k as f64) <= 0.0 {
        None
    } else {
        Some(1.0 / (1..=-k).map(|i| a - i as f64).product::<f64>())
    }
}

/// `B(a + k, b + l) / B(a, b)`, `None` if the shifted Beta function diverges.
pub fn beta_ratio(a: f64, b: f64, k: i32, l: i32) -> Option<f64> {
    let ga = gamma_ratio(a, k)?;
    let gb = gamma_ratio(b, l)?;
    let gab = gamma_ratio(a + b, k + l)?;
    Some(ga * gb / gab)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    statrs::function::gamma::ln_gamma(a) + statrs::function::gamma::ln_gamma(b)
        - statrs::function::gamma::ln_gamma(a + b)
}

impl CharacteristicMeasure {
    pub fn new(atoms: Vec<Atom>, beta: Vec<BetaComponent>) -> Result<Self> {
        for (i, at) in atoms.iter().enumerate() {
            if !(at.q.is_finite() && (0.0..=1.0).contains(&at.q)) {
                return Err(Error::InvalidMeasure(format!("atom {i}: location {} not in [0,1]", at.q)));
            }
            if !(at.w.is_finite() && at.w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("atom {i}: weight {} is negative", at.w)));
            }
        }
        for (i, c) in beta.iter().enumerate() {
            if !(c.a.is_finite() && c.a > 0.0 && c.b.is_finite() && c.b > 0.0) {
                return Err(Error::InvalidMeasure(format!("beta {i}: shapes ({}, {}) must be positive", c.a, c.b)));
            }
            if !(c.w.is_finite() && c.w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("beta {i}: weight {} is negative", c.w)));
            }
        }
        Ok(Self { atoms, beta })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(q: f64) -> Result<Self> {
        Self::new(vec![Atom { q, w: 1.0 }], vec![])
    }

    pub fn atoms_from(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(q, w)| Atom { q, w }).collect(), vec![])
    }

    pub fn beta_density(a: f64, b: f64, w: f64) -> Result<Self> {
        Self::new(vec![], vec![BetaComponent { a, b, w }])
    }

    pub fn lebesgue() -> Self {
        Self { atoms: vec![], beta: vec![BetaComponent { a: 1.0, b: 1.0, w: 1.0 }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn beta_components(&self) -> &[BetaComponent] {
        &self.beta
    }

    pub fn scaled(&self, f: f64) -> Result<Self> {
        Self::new(
            self.atoms.iter().map(|a| Atom { q: a.q, w: a.w * f }).collect(),
            self.beta.iter().map(|c| BetaComponent { w: c.w * f, ..*c }).collect(),
        )
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.atoms.extend_from_slice(&other.atoms);
        out.beta.extend_from_slice(&other.beta);
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum::<f64>() + self.beta.iter().map(|c| c.w).sum::<f64>()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROB_TOL
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// `∫ q^k (1-q)^l ν(dq)`.
    pub fn moment(&self, k: u32, l: u32) -> f64 {
        self.singular_moment(k as i32, l as i32)
    }

    /// `∫ q^k (1-q)^l ν(dq)` for integer exponents of either sign; `+inf`
    /// when the integral diverges.
    pub fn singular_moment(&self, k: i32, l: i32) -> f64 {
        let mut s = 0.0;
        for at in &self.atoms {
            if at.w == 0.0 {
                continue;
            }
            if (at.q == 0.0 && k < 0) || (at.q == 1.0 && l < 0) {
                return f64::INFINITY;
            }
            s += at.w * at.q.powi(k) * (1.0 - at.q).powi(l);
        }
        for c in &self.beta {
            if c.w == 0.0 {
                continue;
            }
            match beta_ratio(c.a, c.b, k, l) {
                Some(r) => s += c.w * r,
                None => return f64::INFINITY,
            }
        }
        s
    }

    /// Weight of the atom part at exactly `q`.
    pub fn atom_weight_at(&self, q: f64) -> f64 {
        self.atoms.iter().filter(|a| a.q == q).map(|a| a.w).sum()
    }

    /// Density of the absolutely continuous part at `q` in (0,1).
    pub fn density_at(&self, q: f64) -> f64 {
        self.beta
            .iter()
            .filter(|c| c.w > 0.0)
            .map(|c| c.w * ((c.a - 1.0) * q.ln() + (c.b - 1.0) * (1.0 - q).ln() - ln_beta(c.a, c.b)).exp())
            .sum()
    }

    /// Structured-text form, 17 significant digits.
    pub fn to_text(&self) -> String {
        let atoms: Vec<String> = self.atoms.iter().map(|a| format!("[{:.16e}, {:.16e}]", a.q, a.w)).collect();
        let beta: Vec<String> =
            self.beta.iter().map(|c| format!("[{:.16e}, {:.16e}, {:.16e}]", c.a, c.b, c.w)).collect();
        format!("atoms = [{}]\nbeta = [{}]\n", atoms.join(", "), beta.join(", "))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::Parse { key: String::new(), msg: e.to_string() })?;
        Self::from_toml(&table, "")
    }

    /// Reads `atoms` and `beta` from a TOML table; error keys are prefixed by `prefix`.
    pub fn from_toml(table: &toml::Table, prefix: &str) -> Result<Self> {
        let key = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}.{s}") };
        for k in table.keys() {
            if k != "atoms" && k != "beta" {
                return Err(Error::Parse { key: key(k), msg: "unknown key".into() });
            }
        }
        let rows = |name: &str, width: usize| -> Result<Vec<Vec<f64>>> {
            let Some(v) = table.get(name) else { return Ok(vec![]) };
            let arr = v.as_array().ok_or(Error::Parse { key: key(name), msg: "expected an array".into() })?;
            arr.iter()
                .enumerate()
                .map(|(i, row)| {
                    let here = key(&format!("{name}[{i}]"));
                    let row = row.as_array().ok_or(Error::Parse { key: here.clone(), msg: "expected an array".into() })?;
                    if row.len() != width {
                        return Err(Error::Parse { key: here, msg: format!("expected {width} numbers, got {}", row.len()) });
                    }
                    row.iter()
                        .map(|x| {
                            x.as_float()
                                .or_else(|| x.as_integer().map(|n| n as f64))
                                .ok_or(Error::Parse { key: here.clone(), msg: format!("`{x}` is not a number") })
                        })
                        .collect()
                })
                .collect()
        };
        let atoms = rows("atoms", 2)?;
        let beta = rows("beta", 3)?;
        for (i, r) in atoms.iter().enumerate() {
            if !(0.0..=1.0).contains(&r[0]) || r[1] < 0.0 {
                return Err(Error::Parse {
                    key: key(&format!("atoms[{i}]")),
                    msg: "need location in [0,1] and weight >= 0".into(),
                });
            }
        }
        for (i, r) in beta.iter().enumerate() {
            if !(r[0] > 0.0 && r[1] > 0.0 && r[2] >= 0.0) {
                return Err(Error::Parse {
                    key: key(&format!("beta[{i}]")),
                    msg: "need positive shapes and weight >= 0".into(),
                });
            }
        }
        Self::new(
            atoms.iter().map(|r| Atom { q: r[0], w: r[1] }).collect(),
            beta.iter().map(|r| BetaComponent { a: r[0], b: r[1], w: r[2] }).collect(),
        )
    }

    pub fn sample_q<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(QSampler::new(self)?.sample(rng))
    }
}

/// Drift and characteristic measure of a Howitt-Warren flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub drift: f64,
    pub nu: CharacteristicMeasure,
}

impl FlowParams {
    pub fn new(drift: f64, nu: CharacteristicMeasure) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::InvalidArgument(format!("drift {drift} is not finite")));
        }
        Ok(Self { drift, nu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speeds {
    pub theta: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
}

pub fn stickiness_and_speeds(p: &FlowParams) -> Speeds {
    Speeds {
        theta: 2.0 * p.nu.total_mass(),
        beta_minus: p.drift - 2.0 * p.nu.singular_moment(0, -1),
        beta_plus: p.drift + 2.0 * p.nu.singular_moment(-1, 0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

pub fn beta_pm(p: &FlowParams, m: u32, side: Side) -> f64 {
    assert!(m >= 1, "beta_pm needs m >= 1");
    let mut s = 0.0;
    for k in 0..m.saturating_sub(1) {
        s += match side {
            Side::Plus => p.nu.moment(0, k),
            Side::Minus => p.nu.moment(k, 0),
        };
    }
    match side {
        Side::Plus => p.drift + 2.0 * s,
        Side::Minus => p.drift - 2.0 * s,
    }
}

/// Rates θ(k,l), 0 <= k,l <= kmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTable {
    kmax: usize,
    values: Vec<f64>,
}

impl ThetaTable {
    pub fn from_values(kmax: usize, values: Vec<f64>) -> Result<Self> {
        if kmax < 1 {
            return Err(Error::InvalidTheta("kmax must be at least 1".into()));
        }
        if values.len() != (kmax + 1) * (kmax + 1) {
            return Err(Error::InvalidTheta(format!("expected {} values, got {}", (kmax + 1) * (kmax + 1), values.len())));
        }
        let t = Self { kmax, values };
        t.validate()?;
        Ok(t)
    }

    pub fn from_fn(kmax: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut v = Vec::with_capacity((kmax + 1) * (kmax + 1));
        for k in 0..=kmax {
            for l in 0..=kmax {
                v.push(f(k, l));
            }
        }
        Self::from_values(kmax, v)
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        assert!(k <= self.kmax && l <= self.kmax, "theta index ({k}, {l}) beyond kmax {}", self.kmax);
        self.values[k * (self.kmax + 1) + l]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kmax;
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..=n {
            for l in 0..=n {
                let v = self.get(k, l);
                if !v.is_finite() {
                    return Err(Error::InvalidTheta(format!("theta({k},{l}) is not finite")));
                }
                if k >= 1 && l >= 1 && v < -1e-10 * scale {
                    return Err(Error::InvalidTheta(format!("theta({k},{l}) = {v} is negative")));
                }
                if k < n && l < n {
                    let r = v - self.get(k + 1, l) - self.get(k, l + 1);
                    if r.abs() > 1e-10 * scale {
                        return Err(Error::InvalidTheta(format!("recursion fails at ({k},{l}) by {r}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The equivalent table `θ(k,l) + c (1{k=0} + 1{l=0})`.
    pub fn shifted(&self, c: f64) -> Self {
        let n = self.kmax;
        let mut values = self.values.clone();
        for k in 0..=n {
            for l in 0..=n {
                values[k * (n + 1) + l] += c * ((k == 0) as u8 + (l == 0) as u8) as f64;
            }
        }
        Self { kmax: n, values }
    }

    pub fn beta_plus(&self, m: usize) -> f64 {
        self.get(0, 0) - 2.0 * self.get(0, m)
    }

    pub fn drift(&self) -> f64 {
        self.get(1, 0) - self.get(0, 1)
    }
}

/// Fills θ(k,l) = ∫ q^(k-1)(1-q)^(l-1) ν(dq) for k,l >= 1 and extends to the
/// boundary with θ(0,1) = 0, θ(1,0) = β.
pub fn theta_from_flow(p: &FlowParams, kmax: usize) -> Result<ThetaTable> {
    if kmax < 1 {
        return Err(Error::InvalidTheta("kmax must be at least 1".into()));
    }
    let n = kmax;
    let mut v = vec![0.0; (n + 1) * (n + 1)];
    let idx = |k: usize, l: usize| k * (n + 1) + l;
    for k in 1..=n {
        for l in 1..=n {
            v[idx(k, l)] = p.nu.moment(k as u32 - 1, l as u32 - 1);
        }
    }
    v[idx(0, 1)] = 0.0;
    v[idx(1, 0)] = p.drift;
    v[idx(0, 0)] = p.drift;
    for m in 1..n {
        v[idx(0, m + 1)] = v[idx(0, m)] - v[idx(1, m)];
        v[idx(m + 1, 0)] = v[idx(m, 0)] - v[idx(m, 1)];
    }
    ThetaTable::from_values(n, v)
}

/// Drift and the moment array m(k,l) = θ(k+1,l+1), 0 <= k,l < kmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMoments {
    pub drift: f64,
    pub moments: Vec<Vec<f64>>,
}

pub fn flow_from_theta(t: &ThetaTable) -> Result<ThetaMoments> {
    t.validate()?;
    let n = t.kmax();
    let moments = (0..n).map(|k| (0..n).map(|l| t.get(k + 1, l + 1)).collect()).collect();
    Ok(ThetaMoments { drift: t.drift(), moments })
}

/// The net family `b ε ν̄ + ½(1-(b+c)ε) δ_0 + ½(1-(b-c)ε) δ_1`.
pub fn mu_k_net_family(p: &FlowParams, eps: f64) -> Result<CharacteristicMeasure> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let b = p.nu.singular_moment(-1, -1);
    if !b.is_finite() {
        return Err(Error::InfiniteB);
    }
    let mut atoms = Vec::new();
    let mut beta = Vec::new();
    let mut inner = 0.0;
    for at in p.nu.atoms().iter().filter(|a| a.w > 0.0) {
        let w = eps * at.w / (at.q * (1.0 - at.q));
        inner += w * (2.0 * at.q - 1.0);
        atoms.push(Atom { q: at.q, w });
    }
    for c in p.nu.beta_components().iter().filter(|c| c.w > 0.0) {
        let r = beta_ratio(c.a, c.b, -1, -1).ok_or(Error::InfiniteB)?;
        let comp = BetaComponent { a: c.a - 1.0, b: c.b - 1.0, w: eps * c.w * r };
        inner += comp.w * (2.0 * comp.a / (comp.a + comp.b) - 1.0);
        beta.push(comp);
    }
    let c = p.drift - inner / eps;
    let w0 = 0.5 * (1.0 - (b + c) * eps);
    let w1 = 0.5 * (1.0 - (b - c) * eps);
    finish_family(atoms, beta, w0, w1, eps)
}

fn finish_family(
    mut atoms: Vec<Atom>,
    beta: Vec<BetaComponent>,
    w0: f64,
    w1: f64,
    eps: f64,
) -> Result<CharacteristicMeasure> {
    let inner: f64 = atoms.iter().map(|a| a.w).sum::<f64>() + beta.iter().map(|c| c.w).sum::<f64>();
    if !(0.0..=1.0).contains(&w0) || !(0.0..=1.0).contains(&w1) || !(0.0..=1.0).contains(&inner) {
        return Err(Error::EpsTooLarge { eps });
    }
    atoms.push(Atom { q: 0.0, w: w0 });
    atoms.push(Atom { q: 1.0, w: w1 });
    CharacteristicMeasure::new(atoms, beta)
}

/// Small-eps environment law for any representable `ν` whose Beta shapes are
/// at least 1. Coincides with [`mu_k_net_family`] when `∫ν/(q(1-q))` is finite.
/// Otherwise endpoint atoms move to `√ε` from the endpoint and Beta sides of
/// shape exactly 1 get exponent `√ε` in place of 0; each piece keeps
/// `ε^{-1} ∫ q(1-q)` equal to its weight in `ν`, and the drift is matched
/// exactly by the masses at 0 and 1.
pub fn mu_eps_family(p: &FlowParams, eps: f64) -> Result<CharacteristicMeasure> {
    if p.nu.singular_moment(-1, -1).is_finite() {
        return mu_k_net_family(p, eps);
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let eta = eps.sqrt();
    let mut atoms = Vec::new();
    let mut beta = Vec::new();
    let mut drift = 0.0;
    for at in p.nu.atoms().iter().filter(|a| a.w > 0.0) {
        let q = if at.q == 0.0 {
            eta
        } else if at.q == 1.0 {
            1.0 - eta
        } else {
            at.q
        };
        let w = eps * at.w / (q * (1.0 - q));
        drift += w * (2.0 * q - 1.0);
        atoms.push(Atom { q, w });
    }
    for c in p.nu.beta_components().iter().filter(|c| c.w > 0.0) {
        if c.a < 1.0 || c.b < 1.0 {
            return Err(Error::UnsupportedFamily(format!("Beta({}, {}) has a shape below 1", c.a, c.b)));
        }
        let a = if c.a == 1.0 { eta } else { c.a - 1.0 };
        let b = if c.b == 1.0 { eta } else { c.b - 1.0 };
        let mass = beta_ratio(a, b, 1, 1).expect("positive shapes");
        let comp = BetaComponent { a, b, w: eps * c.w / mass };
        drift += comp.w * (2.0 * a / (a + b) - 1.0);
        beta.push(comp);
    }
    let inner: f64 = atoms.iter().map(|a| a.w).sum::<f64>() + beta.iter().map(|c| c.w).sum::<f64>();
    let w1 = 0.5 * (1.0 - inner + eps * p.drift - drift);
    let w0 = 0.5 * (1.0 - inner - eps * p.drift + drift);
    finish_family(atoms, beta, w0, w1, eps)
}

/// `(μ^l, μ^r, p)` with `μ^r = qμ/p`, `μ^l = (1-q)μ/(1-p)`, `p = ∫q μ`.
pub fn split_left_right(
    mu: &CharacteristicMeasure,
) -> Result<(CharacteristicMeasure, CharacteristicMeasure, f64)> {
    if !mu.is_probability() {
        return Err(Error::NotProbability { mass: mu.total_mass() });
    }
    let p = mu.moment(1, 0);
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::DegenerateSplit { p_right: p });
    }
    let mut la = Vec::new();
    let mut ra = Vec::new();
    for at in mu.atoms() {
        if at.q < 1.0 {
            la.push(Atom { q: at.q, w: at.w * (1.0 - at.q) / (1.0 - p) });
        }
        if at.q > 0.0 {
            ra.push(Atom { q: at.q, w: at.w * at.q / p });
        }
    }
    let mut lb = Vec::new();
    let mut rb = Vec::new();
    for c in mu.beta_components() {
        let s = c.a + c.b;
        lb.push(BetaComponent { a: c.a, b: c.b + 1.0, w: c.w * (c.b / s) / (1.0 - p) });
        rb.push(BetaComponent { a: c.a + 1.0, b: c.b, w: c.w * (c.a / s) / p });
    }
    Ok((CharacteristicMeasure::new(la, lb)?, CharacteristicMeasure::new(ra, rb)?, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuconReport {
    pub eps: Vec<f64>,
    pub beta_hat: Vec<f64>,
    /// `nu_moment_hats[i][k][l] = ε^{-1} ∫ q^{k+1} (1-q)^{l+1} μ_ε`, k,l <= 4.
    pub nu_moment_hats: Vec<[[f64; 5]; 5]>,
}

pub fn mucon_verify(
    family: impl Fn(f64) -> Result<CharacteristicMeasure>,
    eps_list: &[f64],
) -> Result<MuconReport> {
    let mut rep = MuconReport { eps: eps_list.to_vec(), beta_hat: vec![], nu_moment_hats: vec![] };
    for &eps in eps_list {
        let mu = family(eps)?;
        if !mu.is_probability() {
            return Err(Error::NotProbability { mass: mu.total_mass() });
        }
        rep.beta_hat.push((2.0 * mu.moment(1, 0) - mu.total_mass()) / eps);
        let mut m = [[0.0; 5]; 5];
        for (k, row) in m.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v = mu.moment(k as u32 + 1, l as u32 + 1) / eps;
            }
        }
        rep.nu_moment_hats.push(m);
    }
    Ok(rep)
}

#[derive(Debug, Clone)]
enum Piece {
    Point(f64),
    Density(Beta<f64>),
}

/// Pre-built sampler for a probability measure.
#[derive(Debug, Clone)]
pub struct QSampler {
    cum: Vec<f64>,
    pieces: Vec<Piece>,
}

impl QSampler {
    pub fn new(mu: &CharacteristicMeasure) -> Result<Self> {
        if !mu.is_probability() {
            return Err(Error::NotProbability { mass: mu.total_mass() });
        }
        let mut cum = Vec::new();
        let mut pieces = Vec::new();
        let mut acc = 0.0;
        for at in mu.atoms().iter().filter(|a| a.w > 0.0) {
            acc += at.w;
            cum.push(acc);
            pieces.push(Piece::Point(at.q));
        }
        for c in mu.beta_components().iter().filter(|c| c.w > 0.0) {
            acc += c.w;
            cum.push(acc);
            let d = Beta::new(c.a, c.b).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
            pieces.push(Piece::Density(d));
        }
        Ok(Self { cum, pieces })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.cum[self.cum.len() - 1];
        let i = self.cum.partition_point(|&c| c <= u).min(self.pieces.len() - 1);
        match &self.pieces[i] {
            Piece::Point(q) => *q,
            Piece::Density(d) => d.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn moment_examples() {
        assert!(close(CharacteristicMeasure::dirac(0.5).unwrap().moment(1, 1), 0.25, 1e-15));
        assert!(close(CharacteristicMeasure::lebesgue().moment(1, 1), 1.0 / 6.0, 1e-15));
        let m = CharacteristicMeasure::atoms_from(&[(0.25, 0.5), (0.75, 0.5)]).unwrap();
        assert!(close(m.moment(2, 0), 5.0 / 16.0, 1e-15));
        assert_eq!(CharacteristicMeasure::zero().moment(3, 2), 0.0);
    }

    #[test]
    fn speeds_examples() {
        let s = stickiness_and_speeds(&FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap());
        assert_eq!((s.theta, s.beta_minus, s.beta_plus), (2.0, -4.0, 4.0));
        let para = CharacteristicMeasure::beta_density(2.0, 2.0, 1.0).unwrap();
        let s = stickiness_and_speeds(&FlowParams::new(0.0, para).unwrap());
        assert!(close(s.beta_plus, 6.0, 1e-14) && close(s.beta_minus, -6.0, 1e-14));
        let s = stickiness_and_speeds(&FlowParams::new(0.0, CharacteristicMeasure::lebesgue()).unwrap());
        assert_eq!((s.theta, s.beta_minus, s.beta_plus), (2.0, f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn beta_pm_examples() {
        let nu = CharacteristicMeasure::atoms_from(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let p = FlowParams::new(0.0, nu).unwrap();
        assert_eq!(beta_pm(&p, 1, Side::Plus), 0.0);
        assert_eq!(beta_pm(&p, 2, Side::Plus), 4.0);
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for m in 1..=64 {
            let v = beta_pm(&p, m, Side::Plus);
            assert!(v >= last);
            last = v;
        }
        assert!(close(last, 4.0, 1e-12));
    }

    #[test]
    fn theta_examples() {
        let t = theta_from_flow(&FlowParams::new(0.0, CharacteristicMeasure::lebesgue()).unwrap(), 4).unwrap();
        assert!(close(t.get(1, 1), 1.0, 1e-15));
        let t = theta_from_flow(&FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap(), 4).unwrap();
        assert!(close(t.get(2, 1), 0.5, 1e-15));
        let t = ThetaTable::from_fn(6, |k, l| if k + l == 0 { 2.0 } else { 2f64.powi(1 - (k + l) as i32) }).unwrap();
        let fm = flow_from_theta(&t).unwrap();
        assert_eq!(fm.drift, 0.0);
        assert!(close(fm.moments[0][0], 0.5, 1e-15));
        let fm = flow_from_theta(&theta_from_flow(&FlowParams::new(1.0, CharacteristicMeasure::zero()).unwrap(), 3).unwrap()).unwrap();
        assert_eq!(fm.drift, 1.0);
        assert!(fm.moments.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn theta_rejects_broken_recursion() {
        assert!(matches!(ThetaTable::from_fn(2, |_, _| 1.0), Err(Error::InvalidTheta(_))));
    }

    #[test]
    fn net_family_example() {
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let mu = mu_k_net_family(&p, 0.01).unwrap();
        assert!(close(mu.atom_weight_at(0.5), 0.04, 1e-14));
        assert!(close(mu.atom_weight_at(0.0), 0.48, 1e-14));
        assert!(close(mu.atom_weight_at(1.0), 0.48, 1e-14));
        assert!(mu.is_probability());
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.0).unwrap()).unwrap();
        assert_eq!(mu_k_net_family(&p, 0.01), Err(Error::InfiniteB));
        let p = FlowParams::new(0.0, CharacteristicMeasure::lebesgue()).unwrap();
        assert_eq!(mu_k_net_family(&p, 0.01), Err(Error::InfiniteB));
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        assert!(matches!(mu_k_net_family(&p, 0.5), Err(Error::EpsTooLarge { .. })));
    }

    #[test]
    fn parabolic_family_is_lebesgue_inside() {
        let p = FlowParams::new(0.0, CharacteristicMeasure::beta_density(2.0, 2.0, 1.0).unwrap()).unwrap();
        let mu = mu_k_net_family(&p, 0.01).unwrap();
        let c = mu.beta_components()[0];
        assert_eq!((c.a, c.b), (1.0, 1.0));
        assert!(close(c.w, 0.06, 1e-14));
    }

    #[test]
    fn split_examples() {
        let (l, r, p) = split_left_right(&CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(l.atom_weight_at(0.5), 1.0);
        assert_eq!(r.atom_weight_at(0.5), 1.0);
        let (l, r, p) = split_left_right(&CharacteristicMeasure::lebesgue()).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(l.beta_components()[0], BetaComponent { a: 1.0, b: 2.0, w: 1.0 });
        assert_eq!(r.beta_components()[0], BetaComponent { a: 2.0, b: 1.0, w: 1.0 });
        assert!(matches!(
            split_left_right(&CharacteristicMeasure::dirac(0.0).unwrap()),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn mucon_on_net_family() {
        let p = FlowParams::new(1.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let rep = mucon_verify(|e| mu_k_net_family(&p, e), &[0.1, 0.01, 0.001]).unwrap();
        for (i, m) in rep.nu_moment_hats.iter().enumerate() {
            assert!(close(rep.beta_hat[i], 1.0, 1e-10));
            for (k, row) in m.iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    assert!(close(*v, p.nu.moment(k as u32, l as u32), 1e-10));
                }
            }
        }
        let bern = CharacteristicMeasure::atoms_from(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let rep = mucon_verify(|_| Ok(bern.clone()), &[0.1, 0.01]).unwrap();
        assert!(rep.beta_hat.iter().all(|&b| b == 0.0));
        assert!(rep.nu_moment_hats.iter().flatten().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn eps_family_for_lebesgue_converges() {
        let p = FlowParams::new(0.7, CharacteristicMeasure::lebesgue()).unwrap();
        let rep = mucon_verify(|e| mu_eps_family(&p, e), &[1e-2, 1e-4, 1e-6]).unwrap();
        for (i, m) in rep.nu_moment_hats.iter().enumerate() {
            assert!(close(rep.beta_hat[i], 0.7, 1e-10));
            assert!(close(m[0][0], 1.0, 1e-10));
        }
        let err = |i: usize| (rep.nu_moment_hats[i][1][1] - 1.0 / 6.0).abs();
        assert!(err(2) < err(1) && err(1) < err(0) && err(2) < 1e-3);
        let erosion = FlowParams::new(0.0, CharacteristicMeasure::atoms_from(&[(0.0, 0.5), (1.0, 0.5)]).unwrap()).unwrap();
        let rep = mucon_verify(|e| mu_eps_family(&erosion, e), &[1e-6]).unwrap();
        assert!(close(rep.beta_hat[0], 0.0, 1e-9));
        assert!(close(rep.nu_moment_hats[0][0][0], 1.0, 1e-9));
        assert!(close(rep.nu_moment_hats[0][1][0], 0.5, 1e-2));
    }

    #[test]
    fn text_round_trip() {
        let m = CharacteristicMeasure::new(
            vec![Atom { q: 0.1, w: 1.0 / 3.0 }],
            vec![BetaComponent { a: 2.5, b: 0.7, w: std::f64::consts::PI }],
        )
        .unwrap();
        assert_eq!(CharacteristicMeasure::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_error_names_key() {
        let e = CharacteristicMeasure::from_text("atoms = [[1.5, 1.0]]").unwrap_err();
        assert_eq!(e, Error::Parse { key: "atoms[0]".into(), msg: "need location in [0,1] and weight >= 0".into() });
        let t: toml::Table = "atoms = [[0.5]]".parse().unwrap();
        match CharacteristicMeasure::from_toml(&t, "nu").unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "nu.atoms[0]"),
            e => panic!("{e}"),
        }
    }
}
