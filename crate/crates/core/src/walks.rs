//! Kernels of the discrete flow, the mass-profile process and n-point motions.

use crate::environment::{derive_seed, is_even_site, Environment, OmegaSource};
use crate::error::{Error, Result};
use crate::measures::{CharacteristicMeasure, QSampler};
use rand::{Rng, RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;
use std::collections::BTreeMap;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Nonnegative masses on one time slice, stored on the strip
/// `start, start + 2, ...`; sites off the strip carry no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    time: i64,
    start: i64,
    masses: Vec<f64>,
}

impl MassProfile {
    pub fn delta(x: i64, t: i64) -> Self {
        assert!(is_even_site(x, t), "({x}, {t}) is not an even site");
        Self { time: t, start: x, masses: vec![1.0] }
    }

    pub fn from_map(time: i64, map: &BTreeMap<i64, f64>) -> Result<Self> {
        let pairs: Vec<(i64, f64)> = map.iter().map(|(&x, &m)| (x, m)).collect();
        Self::from_pairs(time, &pairs)
    }

    pub fn from_pairs(time: i64, pairs: &[(i64, f64)]) -> Result<Self> {
        for &(x, m) in pairs {
            if !is_even_site(x, time) {
                return Err(Error::OddSite { x, t: time });
            }
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidArgument(format!("mass {m} at {x} is not a nonnegative number")));
            }
        }
        let Some(lo) = pairs.iter().map(|p| p.0).min() else {
            return Ok(Self { time, start: time.rem_euclid(2), masses: vec![] });
        };
        let hi = pairs.iter().map(|p| p.0).max().unwrap();
        let mut masses = vec![0.0; ((hi - lo) / 2 + 1) as usize];
        for &(x, m) in pairs {
            masses[((x - lo) / 2) as usize] += m;
        }
        Ok(Self { time, start: lo, masses })
    }

    /// Mass `f(x)` at every even site of `[lo, hi]` on slice `time`.
    pub fn from_fn(time: i64, lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Result<Self> {
        let lo = lo + (lo + time).rem_euclid(2);
        let pairs: Vec<(i64, f64)> = (lo..=hi).step_by(2).map(|x| (x, f(x))).collect();
        Self::from_pairs(time, &pairs)
    }

    pub fn time(&self) -> i64 {
        self.time
    }

    pub fn get(&self, x: i64) -> f64 {
        if (x - self.start).rem_euclid(2) != 0 || x < self.start {
            return 0.0;
        }
        self.masses.get(((x - self.start) / 2) as usize).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses.iter().enumerate().map(move |(i, &m)| (self.start + 2 * i as i64, m))
    }

    pub fn support(&self) -> Vec<i64> {
        self.iter().filter(|&(_, m)| m > 0.0).map(|(x, _)| x).collect()
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.masses.iter().copied())
    }

    pub fn to_map(&self) -> BTreeMap<i64, f64> {
        self.iter().filter(|&(_, m)| m > 0.0).collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { masses: self.masses.iter().map(|m| m * a).collect(), ..self.clone() }
    }

    /// Drops the mass outside `[lo, hi]`.
    pub fn restricted(&self, lo: i64, hi: i64) -> Self {
        let keep: Vec<f64> = self.iter().map(|(x, m)| if (lo..=hi).contains(&x) { m } else { 0.0 }).collect();
        Self { masses: keep, ..self.clone() }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        let Some(first) = self.masses.iter().position(|&m| m != 0.0) else {
            self.masses.clear();
            return self;
        };
        let last = self.masses.iter().rposition(|&m| m != 0.0).unwrap();
        self.masses.truncate(last + 1);
        self.masses.drain(..first);
        self.start += 2 * first as i64;
        self
    }
}

/// One step: mass at `x` sends `ω_{(x,t)}` of itself to `x+1`, the rest to `x-1`.
pub fn hw_step<E: OmegaSource + ?Sized>(env: &E, rho: &MassProfile) -> Result<MassProfile> {
    let mut next = vec![0.0; rho.masses.len() + 1];
    for (i, &m) in rho.masses.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let x = rho.start + 2 * i as i64;
        let right = env.omega(x, rho.time)? * m;
        next[i] += m - right;
        next[i + 1] += right;
    }
    Ok(MassProfile { time: rho.time + 1, start: rho.start - 1, masses: next }.trimmed())
}

fn check_profile_cone(env: &Environment, rho: &MassProfile, steps: i64) -> Result<()> {
    let supp = rho.support();
    if let (Some(&lo), Some(&hi)) = (supp.first(), supp.last()) {
        env.window().check_cone(lo, rho.time, steps)?;
        env.window().check_cone(hi, rho.time, steps)?;
    }
    Ok(())
}

pub fn evolve_profile(env: &Environment, rho0: &MassProfile, horizon: i64) -> Result<Vec<MassProfile>> {
    check_profile_cone(env, rho0, horizon)?;
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(rho0.clone());
    for _ in 0..horizon {
        let next = hw_step(env, out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

/// `y ↦ K_{s,t}(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub source: (i64, i64),
    pub probs: MassProfile,
}

impl KernelRow {
    pub fn time(&self) -> i64 {
        self.probs.time()
    }

    pub fn get(&self, y: i64) -> f64 {
        self.probs.get(y)
    }
}

pub fn kernel_row(env: &Environment, x: i64, s: i64, t: i64) -> Result<KernelRow> {
    if !is_even_site(x, s) {
        return Err(Error::OddSite { x, t: s });
    }
    if t < s {
        return Err(Error::InvalidArgument(format!("kernel end time {t} before start {s}")));
    }
    env.window().check_cone(x, s, t - s)?;
    let mut rho = MassProfile::delta(x, s);
    for _ in s..t {
        rho = hw_step(env, &rho)?;
    }
    Ok(KernelRow { source: (x, s), probs: rho })
}

/// `Σ_y ρ0(y) K_{0,t}(y, ·)`, the kernel-row route to [`evolve_profile`].
pub fn profile_from_kernels(env: &Environment, rho0: &MassProfile, horizon: i64) -> Result<MassProfile> {
    let mut acc: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (y, m) in rho0.iter().filter(|&(_, m)| m > 0.0) {
        let row = kernel_row(env, y, rho0.time(), rho0.time() + horizon)?;
        for (z, p) in row.probs.iter() {
            acc.entry(z).or_default().push(m * p);
        }
    }
    let pairs: Vec<(i64, f64)> = acc.into_iter().map(|(z, v)| (z, compensated_sum(v))).collect();
    Ok(MassProfile::from_pairs(rho0.time() + horizon, &pairs)?.trimmed())
}

/// Positions of n walkers at times `start_time ..= start_time + len - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NPointPath {
    start_time: i64,
    n: usize,
    positions: Vec<i64>,
}

impl NPointPath {
    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Positions after `k` steps.
    pub fn at(&self, k: usize) -> &[i64] {
        &self.positions[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> &[i64] {
        self.at(self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Quenched(&'a Environment),
    Averaged,
}

/// Advances `pos` one step. Walkers sharing a site share one `q`, drawn from
/// `law` (averaged) or read from `env` (quenched); each then steps right with
/// probability `q`.
pub fn npoint_step<R: Rng + ?Sized>(
    pos: &mut [i64],
    t: i64,
    law: Option<&QSampler>,
    env: Option<&Environment>,
    rng: &mut R,
    qbuf: &mut Vec<f64>,
) -> Result<()> {
    qbuf.clear();
    for i in 0..pos.len() {
        let q = match (0..i).find(|&j| pos[j] == pos[i]) {
            Some(j) => qbuf[j],
            None => match (law, env) {
                (_, Some(env)) => env.get(pos[i], t)?,
                (Some(law), None) => law.sample(rng),
                (None, None) => unreachable!("npoint_step needs a law or an environment"),
            },
        };
        qbuf.push(q);
    }
    for (x, &q) in pos.iter_mut().zip(qbuf.iter()) {
        let u: f64 = rng.random();
        *x += if u < q { 1 } else { -1 };
    }
    Ok(())
}

pub fn npoint_sample(mu: &CharacteristicMeasure, x0: &[i64], horizon: i64, seed: u64, mode: Mode<'_>) -> Result<NPointPath> {
    if let Some(&x) = x0.iter().find(|&&x| x.rem_euclid(2) != 0) {
        return Err(Error::OddSite { x, t: 0 });
    }
    let law = match mode {
        Mode::Averaged => Some(QSampler::new(mu)?),
        Mode::Quenched(_) => None,
    };
    let env = match mode {
        Mode::Quenched(e) => Some(e),
        Mode::Averaged => None,
    };
    let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(seed, "npoint", 0));
    let mut positions = Vec::with_capacity(x0.len() * (horizon as usize + 1));
    positions.extend_from_slice(x0);
    let mut pos = x0.to_vec();
    let mut qbuf = Vec::with_capacity(x0.len());
    for t in 0..horizon {
        npoint_step(&mut pos, t, law.as_ref(), env, &mut rng, &mut qbuf)?;
        positions.extend_from_slice(&pos);
    }
    Ok(NPointPath { start_time: 0, n: x0.len(), positions })
}

/// Probability that k given walkers at one site step right and l others left.
pub fn split_probability(mu: &CharacteristicMeasure, k: u32, l: u32) -> f64 {
    mu.moment(k, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, LatticeWindow};

    fn env_fn(w: LatticeWindow, f: impl Fn(i64, i64) -> f64 + Sync + Send) -> Environment {
        Environment::from_fn(w, f).unwrap()
    }

    #[test]
    fn one_step_example() {
        let env = env_fn(LatticeWindow::cone(0, 0, 1), |_, _| 0.3);
        let r = hw_step(&env, &MassProfile::delta(0, 0)).unwrap();
        assert_eq!(r.get(1), 0.3);
        assert_eq!(r.get(-1), 0.7);
        assert_eq!(r.time(), 1);
    }

    #[test]
    fn all_right_shifts() {
        let env = env_fn(LatticeWindow::new(-20, 20, 0, 9).unwrap(), |_, _| 1.0);
        let rho = MassProfile::from_pairs(0, &[(-4, 0.25), (2, 0.75)]).unwrap();
        let h = evolve_profile(&env, &rho, 5).unwrap();
        assert_eq!(h[5].get(1), 0.25);
        assert_eq!(h[5].get(7), 0.75);
        let k = kernel_row(&env, 0, 0, 6).unwrap();
        assert_eq!(k.get(6), 1.0);
        assert_eq!(kernel_row(&env, 1, 3, 3).unwrap().probs.to_map(), BTreeMap::from([(1, 1.0)]));
    }

    #[test]
    fn two_step_expansion() {
        let w = LatticeWindow::cone(0, 0, 2);
        let om = |x: i64, t: i64| 0.1 + 0.07 * (x + 3 * t + 5) as f64;
        let env = env_fn(w, om);
        let h = evolve_profile(&env, &MassProfile::delta(0, 0), 2).unwrap();
        let a = om(0, 0);
        let (l, r) = (om(-1, 1), om(1, 1));
        assert!((h[2].get(2) - a * r).abs() < 1e-15);
        assert!((h[2].get(0) - (a * (1.0 - r) + (1.0 - a) * l)).abs() < 1e-15);
        assert!((h[2].get(-2) - (1.0 - a) * (1.0 - l)).abs() < 1e-15);
    }

    #[test]
    fn cone_violation_is_an_error() {
        let env = env_fn(LatticeWindow::new(-3, 3, 0, 3).unwrap(), |_, _| 0.5);
        assert!(matches!(kernel_row(&env, 0, 0, 5), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn conservation_over_many_steps() {
        let mu = CharacteristicMeasure::beta_density(2.0, 2.0, 1.0).unwrap();
        let env = sample_environment(&mu, LatticeWindow::cone(0, 0, 1000), 17).unwrap();
        let h = evolve_profile(&env, &MassProfile::delta(0, 0), 1000).unwrap();
        assert!((h[1000].total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn npoint_pair_same_site() {
        let mu = CharacteristicMeasure::atoms_from(&[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        for s in 0..200 {
            let p = npoint_sample(&mu, &[0, 0], 5, s, Mode::Averaged).unwrap();
            assert!((0..p.len()).all(|k| p.at(k)[0] == p.at(k)[1]));
        }
        assert_eq!(split_probability(&CharacteristicMeasure::dirac(0.5).unwrap(), 2, 1), 0.125);
        assert_eq!(split_probability(&mu, 1, 1), 0.0);
        assert!((split_probability(&CharacteristicMeasure::beta_density(2.0, 2.0, 1.0).unwrap(), 1, 1) - 0.2).abs() < 1e-15);
    }
}
