//! Monte Carlo estimators with standard errors, diffusive rescaling, and the
//! exact discrete targets they are compared against.
//!
//! Replica `i` of an experiment with master seed `m` draws everything from
//! `derive_seed(m, "replica", i)`; replica values are reduced in index order.

use crate::environment::{check_speeds, derive_seed, pair_site, pair_uniform, site_omega, OmegaSource};
use crate::error::{Error, Result};
use crate::exec;
use crate::measures::{mu_eps_family, stickiness_and_speeds, CharacteristicMeasure, FlowParams, QSampler};
use crate::nets::density_table;
use crate::walks::{hw_step, MassProfile};

/// What is needed to rerun an estimate bit for bit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SeedManifest {
    pub experiment: String,
    pub master_seed: u64,
    pub replicas: usize,
}

impl SeedManifest {
    pub fn new(experiment: &str, master_seed: u64, replicas: usize) -> Self {
        Self { experiment: experiment.to_string(), master_seed, replicas }
    }

    pub fn replica_seed(&self, i: usize) -> u64 {
        replica_seed(self.master_seed, i)
    }
}

pub fn replica_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, "replica", i as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_replicas: usize,
    pub manifest: SeedManifest,
}

impl MCEstimate {
    /// `(mean - target) / stderr`; zero when both the error and the gap vanish.
    pub fn z(&self, target: f64) -> f64 {
        let gap = self.mean - target;
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap == 0.0 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z(target).abs() <= sigmas
    }
}

/// Two-sided |z| limit for each of `m` simultaneous tests such that the
/// familywise error matches a single two-sided `sigma` test (Bonferroni).
pub fn familywise_z(sigma: f64, m: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::standard();
    let alpha = 2.0 * (1.0 - n.cdf(sigma));
    n.inverse_cdf(1.0 - alpha / (2.0 * m.max(1) as f64))
}

/// Welford running mean and sum of squared deviations; [`Welford::merge`]
/// is the pairwise update of Chan, Golub and LeVeque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance with `n - 1` in the denominator.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self, manifest: SeedManifest) -> MCEstimate {
        MCEstimate { mean: self.mean, stderr: self.stderr(), n_replicas: self.n as usize, manifest }
    }
}

pub fn mc_accumulate(values: impl IntoIterator<Item = f64>, manifest: SeedManifest) -> MCEstimate {
    let mut w = Welford::default();
    values.into_iter().for_each(|v| w.push(v));
    w.estimate(manifest)
}

/// Runs `f(i, replica_seed)` for every replica and accumulates in index order.
pub fn run_replicas(manifest: &SeedManifest, f: impl Fn(usize, u64) -> f64 + Sync + Send) -> MCEstimate {
    let m = manifest.master_seed;
    let values = exec::map_indexed(manifest.replicas, |i| f(i, replica_seed(m, i)));
    mc_accumulate(values, manifest.clone())
}

/// A point `(εx, ε²t)` of a rescaled profile carrying the mass of site `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledPoint {
    pub x: f64,
    pub t: f64,
    pub mass: f64,
}

pub fn rescale_profile(rho: &MassProfile, eps: f64) -> Vec<RescaledPoint> {
    let t = eps * eps * rho.time() as f64;
    rho.iter().filter(|&(_, m)| m > 0.0).map(|(x, m)| RescaledPoint { x: eps * x as f64, t, mass: m }).collect()
}

/// `∫φ dρ̄` for a rescaled profile.
pub fn integrate_points(points: &[RescaledPoint], phi: impl Fn(f64) -> f64) -> f64 {
    crate::walks::compensated_sum(points.iter().map(|p| p.mass * phi(p.x)))
}

/// Continuous piecewise-linear function, zero outside its first and last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// Knots with increasing abscissae; the end values must be 0.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument("test function knots must be increasing, at least two".into()));
        }
        if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 0.0 {
            return Err(Error::InvalidArgument("test function must vanish at its end knots".into()));
        }
        Ok(Self { knots })
    }

    /// Tent of height 1 on `[c - h, c + h]`.
    pub fn triangle(c: f64, h: f64) -> Self {
        Self { knots: vec![(c - h, 0.0), (c, 1.0), (c + h, 0.0)] }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn shifted(&self, a: f64) -> Self {
        Self { knots: self.knots.iter().map(|&(x, y)| (x + a, y)).collect() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return 0.0;
        }
        let k = self.knots.partition_point(|&(kx, _)| kx <= x);
        let (x0, y0) = self.knots[k - 1];
        let (x1, y1) = self.knots[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn integral(&self) -> f64 {
        self.knots.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
    }

    /// `∫φψ`, exact: Simpson's rule on the merged knots.
    pub fn product_integral(&self, other: &Self) -> f64 {
        let mut xs: Vec<f64> = self.knots.iter().chain(other.knots.iter()).map(|k| k.0).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        xs.windows(2)
            .map(|w| {
                let f = |x: f64| self.eval(x) * other.eval(x);
                (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1]))
            })
            .sum()
    }
}

/// Environment law used for a flow at scale `eps`.
pub fn flow_measure(p: &FlowParams, eps: f64) -> Result<CharacteristicMeasure> {
    mu_eps_family(p, eps)
}

/// ω drawn on demand, identical to the draw of an environment sampled with
/// the same seed.
pub struct LazyOmega {
    sampler: QSampler,
    seed: u64,
}

impl LazyOmega {
    pub fn new(mu: &CharacteristicMeasure, seed: u64) -> Result<Self> {
        Ok(Self { sampler: QSampler::new(mu)?, seed })
    }
}

impl OmegaSource for LazyOmega {
    fn omega(&self, x: i64, t: i64) -> Result<f64> {
        Ok(site_omega(&self.sampler, self.seed, x, t))
    }
}

fn steps_for(eps: f64, horizon: f64) -> Result<i64> {
    if !(eps > 0.0 && eps < 1.0) || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("need 0 < eps < 1 and T > 0, got eps = {eps}, T = {horizon}")));
    }
    Ok((horizon / (eps * eps)).round().max(1.0) as i64)
}

/// Rightmost point of `supp ρ_n` for `ρ_0 = δ_0`. The rightmost mass moves
/// right exactly when its ω is positive, so this follows one site per step.
pub fn rightmost_support(omega: &dyn OmegaSource, steps: i64) -> Result<i64> {
    let mut r = 0;
    for t in 0..steps {
        r += if omega.omega(r, t)? > 0.0 { 1 } else { -1 };
    }
    Ok(r)
}

/// `ε r_N / T` with `N = T/ε²`, whose mean under the flow law is `β_+`.
pub fn speed_estimate(p: &FlowParams, eps: f64, horizon: f64, replicas: usize, seed: u64) -> Result<MCEstimate> {
    if !stickiness_and_speeds(p).beta_plus.is_finite() {
        return Err(Error::InfiniteSpeed);
    }
    let mu = flow_measure(p, eps)?;
    let n = steps_for(eps, horizon)?;
    let t_eff = n as f64 * eps * eps;
    let sampler = QSampler::new(&mu)?;
    let manifest = SeedManifest::new("speed", seed, replicas);
    Ok(run_replicas(&manifest, |_, s| {
        let omega = LazyOmega { sampler: sampler.clone(), seed: s };
        eps * rightmost_support(&omega, n).expect("lazy omega is total") as f64 / t_eff
    }))
}

/// Number of sites of row `t` in `[-h, h]`.
pub fn interior_sites(h: i64, t: i64) -> i64 {
    (-h..=h).filter(|x| (x + t).rem_euclid(2) == 0).count() as i64
}

/// Forward net reach from every site of row 0 in `[-h - t, h + t]`, kept
/// inside the shrinking cone that can still reach `[-h, h]` at time `t`.
/// Calls `visit(u, row, lo)` for `u = 0..=t`, `row[x - lo]` flagging reached `x`.
fn lazy_forward_reach(
    b_minus: f64,
    b_plus: f64,
    seed: u64,
    h: i64,
    t: i64,
    mut visit: impl FnMut(i64, &[bool], i64),
) {
    let lo = -h - t;
    let hi = h + t;
    let mut cur = vec![false; (hi - lo + 1) as usize];
    for x in lo..=hi {
        cur[(x - lo) as usize] = x.rem_euclid(2) == 0;
    }
    let mut next = vec![false; cur.len()];
    visit(0, &cur, lo);
    for u in 0..t {
        next.fill(false);
        let (a, b) = (lo + u, hi - u);
        let (na, nb) = (a + 1, b - 1);
        for x in a..=b {
            if !cur[(x - lo) as usize] {
                continue;
            }
            let (l, r) = pair_site(b_minus, b_plus, pair_uniform(seed, x, u));
            for y in [x + l as i64, x + r as i64] {
                if y >= na && y <= nb {
                    next[(y - lo) as usize] = true;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        visit(u + 1, &cur, lo);
    }
}

/// Fraction of the sites of row `t` in `[-h, h]` hit by net paths from row 0.
pub fn density_replica(b_minus: f64, b_plus: f64, t: i64, h: i64, seed: u64) -> f64 {
    let mut hits = 0;
    lazy_forward_reach(b_minus, b_plus, seed, h, t, |u, row, lo| {
        if u == t {
            hits = (-h..=h).filter(|&x| row[(x - lo) as usize]).count();
        }
    });
    hits as f64 / interior_sites(h, t) as f64
}

pub fn density_estimate(
    b_minus: f64,
    b_plus: f64,
    t: i64,
    half_width: i64,
    replicas: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_speeds(b_minus, b_plus)?;
    if t < 0 || half_width < 0 {
        return Err(Error::InvalidArgument("time and half width must be nonnegative".into()));
    }
    let manifest = SeedManifest::new("density", seed, replicas);
    Ok(run_replicas(&manifest, |_, s| density_replica(b_minus, b_plus, t, half_width, s)))
}

/// `(2ε)^{-1} D_{T/ε²}` for speeds `±bε`: the density per unit rescaled length.
pub fn rescaled_density_exact(b: f64, eps: f64, horizon: f64) -> Result<f64> {
    let n = steps_for(eps, horizon)? as usize;
    Ok(density_table(-b * eps, b * eps, n)?[n] / (2.0 * eps))
}

/// Relevant separation points of the slab `[-h, h] × [0, u)` in the field
/// drawn with `pair_uniform(seed, ·)`.
pub fn relevant_count_replica(b_minus: f64, b_plus: f64, u: i64, h: i64, seed: u64) -> u64 {
    let width = (2 * h + 1) as usize;
    let mut fwd = vec![false; width * u as usize];
    lazy_forward_reach(b_minus, b_plus, seed, h, u, |t, row, lo| {
        if t < u {
            for x in -h..=h {
                fwd[t as usize * width + (x + h) as usize] = row[(x - lo) as usize];
            }
        }
    });
    // Dual net: from odd (y, v) to (y - l, v - 1) and (y - r, v - 1) with
    // (l, r) the pair at (y, v - 1). Start from every odd site of row u and
    // keep the shrinking cone over [-h, h].
    let lo = -h - u;
    let hi = h + u;
    let mut cur: Vec<bool> = (lo..=hi).map(|y| (y + u).rem_euclid(2) == 1).collect();
    let mut next = vec![false; cur.len()];
    let mut count = 0;
    for k in 0..u {
        let t = u - k - 1;
        let (a, b) = (lo + k, hi - k);
        next.fill(false);
        for y in a..=b {
            if !cur[(y - lo) as usize] {
                continue;
            }
            let (l, r) = pair_site(b_minus, b_plus, pair_uniform(seed, y, t));
            if l < r && (-h..=h).contains(&y) && fwd[t as usize * width + (y + h) as usize] {
                count += 1;
            }
            for ny in [y - l as i64, y - r as i64] {
                if ny > a && ny < b {
                    next[(ny - lo) as usize] = true;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    count
}

pub fn relevant_count_estimate(
    b_minus: f64,
    b_plus: f64,
    height: i64,
    half_width: i64,
    replicas: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_speeds(b_minus, b_plus)?;
    if height < 1 || half_width < 0 {
        return Err(Error::InvalidArgument("need height >= 1 and half width >= 0".into()));
    }
    let manifest = SeedManifest::new("relevant", seed, replicas);
    Ok(run_replicas(&manifest, |_, s| relevant_count_replica(b_minus, b_plus, height, half_width, s) as f64))
}

/// `Σ_t #sites(t) · ½(b+ - b-) · D_t · D_{u-t-1}`: forward reach, separation
/// and dual reach of a site depend on disjoint rows, hence are independent.
pub fn relevant_count_exact(b_minus: f64, b_plus: f64, height: i64, half_width: i64) -> Result<f64> {
    let d = density_table(b_minus, b_plus, height.max(1) as usize)?;
    let p_sep = 0.5 * (b_plus - b_minus);
    Ok((0..height)
        .map(|t| interior_sites(half_width, t) as f64 * p_sep * d[t as usize] * d[(height - t - 1) as usize])
        .sum())
}

/// Exact expected relevant count per unit rescaled width for speeds `±bε`
/// on a slab of rescaled height `T`.
pub fn rescaled_relevant_exact(b: f64, eps: f64, horizon: f64) -> Result<f64> {
    let n = steps_for(eps, horizon)?;
    let d = density_table(-b * eps, b * eps, n as usize)?;
    let p_sep = b * eps;
    // Half a site per unit of x, 1/(2ε) sites per unit of rescaled width.
    let per_row: f64 = (0..n).map(|t| p_sep * d[t as usize] * d[(n - t - 1) as usize]).sum();
    Ok(per_row / (2.0 * eps))
}

/// Second moment `E[ρ_n(x) ρ_n(x + d)]`, `d = 0, 2, .., dmax`, of the flow
/// started from mass `c` on every site, by the exact recursion for
/// pair correlations. With `m = E ω`, `v = E ω(1-ω)`:
/// `C'(0) = (1 - 2m + 2E ω²) C(0) + 2m(1-m) C(2)`,
/// `C'(2) = (m² + (1-m)²) C(2) + m(1-m) C(4) + v C(0)`,
/// `C'(d) = (m² + (1-m)²) C(d) + m(1-m) (C(d+2) + C(d-2))` for `d >= 4`.
pub fn pair_correlation_exact(mu: &CharacteristicMeasure, c: f64, steps: usize, dmax: usize) -> Vec<f64> {
    let m = mu.moment(1, 0);
    let m2 = mu.moment(2, 0);
    let v = m - m2;
    let stay = m * m + (1.0 - m) * (1.0 - m);
    let cross = m * (1.0 - m);
    let len = dmax / 2 + steps + 3;
    let mut cur = vec![c * c; len];
    let mut next = cur.clone();
    let get = |a: &[f64], j: usize| a.get(j).copied().unwrap_or(c * c);
    for _ in 0..steps {
        next[0] = (1.0 - 2.0 * m + 2.0 * m2) * cur[0] + 2.0 * cross * get(&cur, 1);
        next[1] = stay * cur[1] + cross * get(&cur, 2) + v * cur[0];
        for j in 2..len {
            next[j] = stay * cur[j] + cross * (get(&cur, j + 1) + cur[j - 1]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.truncate(dmax / 2 + 1);
    cur
}

/// Targets and estimates for the moments of `∫φ dρ̄_T`, `∫ψ dρ̄_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantEstimate {
    pub horizon: f64,
    /// `∫φ dρ̄_T`.
    pub first: MCEstimate,
    /// `∫φ dρ̄_T ∫ψ dρ̄_T`.
    pub second: MCEstimate,
    /// `second - ∫φ ∫ψ`.
    pub excess: MCEstimate,
    /// `E ∫φ dρ̄_T` on the lattice (the exactly conserved mean).
    pub first_exact: f64,
    /// `E[∫φ dρ̄_T ∫ψ dρ̄_T]` from [`pair_correlation_exact`].
    pub second_exact: f64,
    pub first_continuum: f64,
    /// `∫φ∫ψ + ∫φψ / (2ν([0,1]))`.
    pub second_continuum: f64,
    pub excess_continuum: f64,
}

/// Lattice half width needed so that no boundary effect reaches the
/// translates of the test functions by time `T`.
pub fn invariant_half_width(eps: f64, horizon: f64, reach: f64) -> Result<i64> {
    Ok((reach / eps).ceil() as i64 + steps_for(eps, horizon)? + 2)
}

/// `E ∫φ dρ̄_T` and `E ∫φ dρ̄_T ∫ψ dρ̄_T` with `ρ̄_0` equal to mass `2ε`
/// on every site (Lebesgue measure after rescaling). `translates` shifted
/// copies of `(φ, ψ)` are averaged within each replica. `half_width` is the
/// lattice half width of the initial profile and must cover the light cone.
#[allow(clippy::too_many_arguments)]
pub fn invariant_moment_estimate(
    p: &FlowParams,
    eps: f64,
    horizon: f64,
    half_width: i64,
    replicas: usize,
    seed: u64,
    phi: &PiecewiseLinear,
    psi: &PiecewiseLinear,
    translates: usize,
) -> Result<InvariantEstimate> {
    let nu_mass = p.nu.total_mass();
    if nu_mass <= 0.0 {
        return Err(Error::InvalidArgument("invariant moments need ν ≠ 0".into()));
    }
    let mu = flow_measure(p, eps)?;
    let n = steps_for(eps, horizon)?;
    let translates = translates.max(1);
    let (lo_phi, hi_phi) = phi.support();
    let (lo_psi, hi_psi) = psi.support();
    let radius = lo_phi.abs().max(hi_phi.abs()).max(lo_psi.abs()).max(hi_psi.abs());
    // Even lattice shift between translates.
    let shift = 2 * (radius / eps).ceil() as i64 + 2;
    let span = shift * (translates as i64 - 1);
    let reach = (radius / eps).ceil() as i64 + span;
    let needed = reach + n + 1;
    if half_width < needed {
        return Err(Error::WindowTooSmall { needed, got: half_width });
    }
    let c = 2.0 * eps;
    let offsets: Vec<i64> = (0..translates as i64).map(|k| k * shift - span / 2 / 2 * 2).collect();
    let sampler = QSampler::new(&mu)?;
    let values: Vec<(f64, f64)> = exec::map_indexed(replicas, |i| {
        let omega = LazyOmega { sampler: sampler.clone(), seed: replica_seed(seed, i) };
        let mut rho = MassProfile::from_fn(0, -half_width, half_width, |_| c).expect("flat profile");
        for k in 0..n {
            rho = hw_step(&omega, &rho).expect("lazy omega is total").restricted(-half_width + k + 1, half_width - k - 1);
        }
        let (mut a, mut b) = (0.0, 0.0);
        for &o in &offsets {
            let (fa, fb) = (phi.shifted(eps * o as f64), psi.shifted(eps * o as f64));
            let xa: f64 = rho.iter().map(|(x, m)| m * fa.eval(eps * x as f64)).sum();
            let xb: f64 = rho.iter().map(|(x, m)| m * fb.eval(eps * x as f64)).sum();
            a += xa;
            b += xa * xb;
        }
        (a / translates as f64, b / translates as f64)
    });
    let int_phi = phi.integral();
    let int_psi = psi.integral();
    let product = int_phi * int_psi;
    let manifest = SeedManifest::new("invariant", seed, replicas);
    let first = mc_accumulate(values.iter().map(|v| v.0), manifest.clone());
    let second = mc_accumulate(values.iter().map(|v| v.1), manifest.clone());
    let excess = mc_accumulate(values.iter().map(|v| v.1 - product), manifest);

    // Exact lattice targets at time n: sites x with x + n even.
    let sites = |f: &PiecewiseLinear| -> Vec<(i64, f64)> {
        let (lo, hi) = f.support();
        let a = (lo / eps).floor() as i64 - 1;
        let b = (hi / eps).ceil() as i64 + 1;
        (a..=b).filter(|x| (x + n).rem_euclid(2) == 0).map(|x| (x, f.eval(eps * x as f64))).filter(|s| s.1 != 0.0).collect()
    };
    let sp = sites(phi);
    let ss = sites(psi);
    let first_exact = c * sp.iter().map(|s| s.1).sum::<f64>();
    let dmax = sp.iter().flat_map(|a| ss.iter().map(move |b| (a.0 - b.0).unsigned_abs() as usize)).max().unwrap_or(0);
    let corr = pair_correlation_exact(&mu, c, n as usize, dmax);
    let second_exact = sp
        .iter()
        .flat_map(|a| ss.iter().map(|b| a.1 * b.1 * corr[(a.0 - b.0).unsigned_abs() as usize / 2]))
        .sum();
    let excess_continuum = phi.product_integral(psi) / (2.0 * nu_mass);
    Ok(InvariantEstimate {
        horizon,
        first,
        second,
        excess,
        first_exact,
        second_exact,
        first_continuum: int_phi,
        second_continuum: product + excess_continuum,
        excess_continuum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, LatticeWindow};
    use crate::walks::evolve_profile;

    #[test]
    fn familywise_limit() {
        assert!((familywise_z(3.0, 1) - 3.0).abs() < 1e-9);
        assert!(familywise_z(3.0, 90) > 4.0);
    }

    #[test]
    fn constant_stream_has_zero_error() {
        let e = mc_accumulate(std::iter::repeat_n(2.5, 100), SeedManifest::default());
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn fair_coin_stream() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(7);
        let e = mc_accumulate((0..1_000_000).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }), SeedManifest::default());
        assert!(e.mean.abs() <= 0.003);
    }

    #[test]
    fn welford_matches_two_pass_and_merges() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 1e3 + 1e9).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        assert!((w.mean() - mean).abs() <= 1e-12 * mean.abs());
        assert!((w.variance() - var).abs() <= 1e-12 * var);
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - mean).abs() <= 1e-12 * mean.abs());
        assert!((a.variance() - var).abs() <= 1e-10 * var);
    }

    #[test]
    fn rescaling_examples() {
        let rho = MassProfile::from_pairs(2, &[(-2, 0.25), (0, 0.5), (4, 0.25)]).unwrap();
        let id = rescale_profile(&rho, 1.0);
        assert_eq!(id.len(), 3);
        assert_eq!((id[2].x, id[2].t, id[2].mass), (4.0, 2.0, 0.25));
        let r = rescale_profile(&rho, 0.1);
        assert!((integrate_points(&r, |_| 1.0) - rho.total_mass()).abs() < 1e-15);
        let first: f64 = rho.iter().map(|(x, m)| x as f64 * m).sum();
        assert!((integrate_points(&r, |x| x) - 0.1 * first).abs() < 1e-15);
    }

    #[test]
    fn piecewise_linear_integrals() {
        let t = PiecewiseLinear::triangle(0.0, 1.0);
        assert!((t.integral() - 1.0).abs() < 1e-15);
        assert!((t.product_integral(&t) - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(t.eval(0.5), 0.5);
        assert!(PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn rightmost_support_matches_profile() {
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let mu = flow_measure(&p, 0.2).unwrap();
        let w = LatticeWindow::cone(0, 0, 30);
        let env = sample_environment(&mu, w, 11).unwrap();
        let hist = evolve_profile(&env, &MassProfile::delta(0, 0), 30).unwrap();
        let lazy = LazyOmega::new(&mu, 11).unwrap();
        for n in [0, 1, 5, 30] {
            let r = rightmost_support(&lazy, n).unwrap();
            assert_eq!(Some(&r), hist[n as usize].support().last());
        }
    }

    #[test]
    fn speed_of_a_single_drifting_walker() {
        let p = FlowParams::new(1.0, CharacteristicMeasure::zero()).unwrap();
        let e = speed_estimate(&p, 0.05, 1.0, 2000, 3).unwrap();
        assert!(e.within(1.0, 3.0), "{e:?}");
        let leb = FlowParams::new(0.0, CharacteristicMeasure::lebesgue()).unwrap();
        assert_eq!(speed_estimate(&leb, 0.05, 1.0, 10, 3), Err(Error::InfiniteSpeed));
    }

    #[test]
    fn speed_scales_with_the_lattice() {
        // (β/a, ν/a) on the (aε) lattice, times a, against (β, ν) on ε.
        let a = 2.0;
        let p = FlowParams::new(0.5, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let q = FlowParams::new(0.25, CharacteristicMeasure::dirac(0.5).unwrap().scaled(1.0 / a).unwrap()).unwrap();
        let e1 = speed_estimate(&p, 0.05, 1.0, 3000, 5).unwrap();
        let e2 = speed_estimate(&q, 0.1, 1.0, 3000, 6).unwrap();
        let z = (e1.mean - a * e2.mean) / (e1.stderr.powi(2) + (a * e2.stderr).powi(2)).sqrt();
        assert!(z.abs() < 3.0, "z = {z}");
    }

    #[test]
    fn density_replica_matches_materialized_field() {
        use crate::environment::sample_pair_field;
        use crate::nets::forward_reach;
        let (bm, bp, t, h) = (-0.3, 0.4, 12, 6);
        let w = LatticeWindow::new(-h - t, h + t, 0, t).unwrap();
        let pair = sample_pair_field(bm, bp, w, 21).unwrap();
        let reached: std::collections::BTreeSet<(i64, i64)> = forward_reach(&pair, 0, t).unwrap().into_iter().collect();
        let hits = (-h..=h).filter(|&x| reached.contains(&(x, t))).count();
        let f = density_replica(bm, bp, t, h, 21);
        assert_eq!(f, hits as f64 / interior_sites(h, t) as f64);
    }

    #[test]
    fn relevant_replica_matches_materialized_field() {
        use crate::environment::sample_pair_field;
        use crate::nets::relevant_separation_points;
        let (bm, bp, u, h) = (-0.5, 0.5, 10, 5);
        for seed in 0..5 {
            let w = LatticeWindow::new(-h - u - 1, h + u + 1, -1, u + 1).unwrap();
            let pair = sample_pair_field(bm, bp, w, seed).unwrap();
            // The materialized version starts from every window site; restrict
            // the count to the same interior.
            let pts = relevant_separation_points(&pair, 0, u).unwrap();
            let inner = pts.iter().filter(|p| p.0.abs() <= h).count() as u64;
            assert_eq!(relevant_count_replica(bm, bp, u, h, seed), inner, "seed {seed}");
        }
    }

    #[test]
    fn pair_correlation_conserves_and_matches_brute_force() {
        let mu = CharacteristicMeasure::atoms_from(&[(0.0, 0.3), (0.5, 0.3), (0.9, 0.4)]).unwrap();
        let c = 0.5;
        let steps = 6;
        let corr = pair_correlation_exact(&mu, c, steps, 8);
        // Brute force over all environments of a small window is too big; use
        // Monte Carlo over many environments against the exact value at d = 0.
        let sampler = QSampler::new(&mu).unwrap();
        let mut acc = [Welford::default(), Welford::default()];
        for s in 0..40_000u64 {
            let om = LazyOmega { sampler: sampler.clone(), seed: s };
            let mut rho = MassProfile::from_fn(0, -20, 20, |_| c).unwrap();
            for _ in 0..steps {
                rho = hw_step(&om, &rho).unwrap();
            }
            acc[0].push(rho.get(0).powi(2));
            acc[1].push(rho.get(0) * rho.get(2));
        }
        for (j, a) in acc.iter().enumerate() {
            let z = (a.mean() - corr[j]) / a.stderr();
            assert!(z.abs() < 4.0, "d = {}: mc {} exact {} z {z}", 2 * j, a.mean(), corr[j]);
        }
        // Far correlations stay at c².
        assert!((corr[4] - c * c).abs() < 0.5 * c * c);
    }

    #[test]
    fn invariant_window_is_enforced() {
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let phi = PiecewiseLinear::triangle(0.0, 1.0);
        let r = invariant_moment_estimate(&p, 0.1, 0.5, 10, 2, 1, &phi, &phi, 1);
        assert!(matches!(r, Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn invariant_first_moment_is_conserved() {
        let p = FlowParams::new(0.0, CharacteristicMeasure::dirac(0.5).unwrap()).unwrap();
        let phi = PiecewiseLinear::triangle(0.0, 1.0);
        let hw = invariant_half_width(0.1, 0.5, 1.0).unwrap();
        let e = invariant_moment_estimate(&p, 0.1, 0.5, hw, 200, 9, &phi, &phi, 1).unwrap();
        assert!(e.first.within(e.first_exact, 3.0), "{:?} vs {}", e.first, e.first_exact);
        assert!(e.second.within(e.second_exact, 3.0), "{:?} vs {}", e.second, e.second_exact);
    }

    #[test]
    fn product_formula_is_positive_and_scales() {
        let a = relevant_count_exact(-0.2, 0.2, 50, 10).unwrap();
        let b = relevant_count_exact(-0.2, 0.2, 50, 20).unwrap();
        assert!(a > 0.0 && b > a);
        assert!((rescaled_density_exact(1.0, 0.01, 1.0).unwrap() - crate::nets::psi_continuum(1.0, 1.0)).abs() < 0.05);
    }
}
