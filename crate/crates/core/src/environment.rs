//! Seeded environments, arrow fields and arrow pair fields on finite windows
//! of the even lattice `{(x, t) : x + t even}`.

use crate::error::{Error, Result};
use crate::exec;
use crate::measures::{mu_k_net_family, CharacteristicMeasure, FlowParams, QSampler};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;
use std::collections::BTreeMap;
use std::io::Write;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, 64 bit.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for item `index` of stream `tag` under `master`:
/// `mix64(mix64(mix64(master) ^ fnv1a64(tag)) ^ index)` with golden-ratio
/// offsets between rounds.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let h = mix64(master.wrapping_add(GOLDEN));
    let h = mix64(h ^ fnv1a64(tag).wrapping_add(GOLDEN.wrapping_mul(2)));
    mix64(h ^ index.wrapping_add(GOLDEN.wrapping_mul(3)))
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Window-independent identifier of a lattice site (|x|, |t| < 2^31).
pub fn site_id(x: i64, t: i64) -> u64 {
    (zigzag(t) << 32) | (zigzag(x) & 0xffff_ffff)
}

pub fn site_rng(master: u64, tag: &str, x: i64, t: i64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(derive_seed(master, tag, site_id(x, t)))
}

/// The draw of ω at `(x, t)` that [`sample_environment`] places there.
pub fn site_omega(sampler: &QSampler, seed: u64, x: i64, t: i64) -> f64 {
    sampler.sample(&mut site_rng(seed, "omega", x, t))
}

pub const fn is_even_site(x: i64, t: i64) -> bool {
    (x + t).rem_euclid(2) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeWindow {
    pub x_min: i64,
    pub x_max: i64,
    pub t_min: i64,
    pub t_max: i64,
}

impl LatticeWindow {
    pub fn new(x_min: i64, x_max: i64, t_min: i64, t_max: i64) -> Result<Self> {
        if x_min > x_max || t_min > t_max {
            return Err(Error::InvalidArgument(format!("empty window [{x_min},{x_max}]x[{t_min},{t_max}]")));
        }
        Ok(Self { x_min, x_max, t_min, t_max })
    }

    /// Smallest window holding every site used by `steps` steps from `(x, s)`.
    pub fn cone(x: i64, s: i64, steps: i64) -> Self {
        let h = steps.max(1);
        Self { x_min: x - h, x_max: x + h, t_min: s, t_max: s + h - 1 }
    }

    pub fn stride(&self) -> usize {
        ((self.x_max - self.x_min) / 2 + 1) as usize
    }

    pub fn rows(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn slots(&self) -> usize {
        self.stride() * self.rows()
    }

    pub fn first_x(&self, t: i64) -> i64 {
        self.x_min + (self.x_min + t).rem_euclid(2)
    }

    pub fn contains(&self, x: i64, t: i64) -> bool {
        is_even_site(x, t) && (self.x_min..=self.x_max).contains(&x) && (self.t_min..=self.t_max).contains(&t)
    }

    pub fn index(&self, x: i64, t: i64) -> Option<usize> {
        if !self.contains(x, t) {
            return None;
        }
        let row = (t - self.t_min) as usize;
        Some(row * self.stride() + ((x - self.first_x(t)) / 2) as usize)
    }

    pub fn check(&self, x: i64, t: i64) -> Result<usize> {
        if !is_even_site(x, t) {
            return Err(Error::OddSite { x, t });
        }
        self.index(x, t).ok_or(Error::OutOfWindow { x, t })
    }

    /// Site of slot `col` in row `row`, if it lies in the window.
    pub fn slot_site(&self, row: usize, col: usize) -> Option<(i64, i64)> {
        let t = self.t_min + row as i64;
        let x = self.first_x(t) + 2 * col as i64;
        (x <= self.x_max).then_some((x, t))
    }

    pub fn row_sites(&self, t: i64) -> impl Iterator<Item = i64> + '_ {
        (self.first_x(t)..=self.x_max).step_by(2)
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (self.t_min..=self.t_max).flat_map(move |t| self.row_sites(t).map(move |x| (x, t)))
    }

    /// Checks that every site of the forward cone of `(x, s)` over `steps`
    /// steps lies in the window.
    pub fn check_cone(&self, x: i64, s: i64, steps: i64) -> Result<()> {
        if steps <= 0 {
            return Ok(());
        }
        let last = s + steps - 1;
        if s < self.t_min {
            return Err(Error::OutOfWindow { x, t: s });
        }
        if last > self.t_max {
            return Err(Error::OutOfWindow { x, t: last });
        }
        let reach = steps - 1;
        if x - reach < self.x_min {
            return Err(Error::OutOfWindow { x: x - reach, t: last });
        }
        if x + reach > self.x_max {
            return Err(Error::OutOfWindow { x: x + reach, t: last });
        }
        Ok(())
    }
}

fn fill<T: Copy + Send>(w: &LatticeWindow, blank: T, f: impl Fn(i64, i64) -> T + Sync + Send) -> Vec<T> {
    let mut data = vec![blank; w.slots()];
    exec::for_each_row(&mut data, w.stride(), |row, slots| {
        for (col, v) in slots.iter_mut().enumerate() {
            if let Some((x, t)) = w.slot_site(row, col) {
                *v = f(x, t);
            }
        }
    });
    data
}

/// Reads ω at a site.
pub trait OmegaSource {
    fn omega(&self, x: i64, t: i64) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct Environment {
    window: LatticeWindow,
    omega: Vec<f64>,
    seed: u64,
    mu: CharacteristicMeasure,
}

/// Slot-wise bit equality, so the NaN padding of unused slots compares equal.
fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl PartialEq for Environment {
    fn eq(&self, o: &Self) -> bool {
        self.window == o.window && self.seed == o.seed && self.mu == o.mu && same_bits(&self.omega, &o.omega)
    }
}

impl PartialEq for Marks {
    fn eq(&self, o: &Self) -> bool {
        self.window == o.window && same_bits(&self.values, &o.values)
    }
}

pub fn sample_environment(mu: &CharacteristicMeasure, w: LatticeWindow, seed: u64) -> Result<Environment> {
    let sampler = QSampler::new(mu)?;
    let omega = fill(&w, f64::NAN, |x, t| site_omega(&sampler, seed, x, t));
    Ok(Environment { window: w, omega, seed, mu: mu.clone() })
}

impl Environment {
    /// Environment with `ω = f(x, t)`; `seed` and `mu` are recorded only.
    pub fn from_fn(w: LatticeWindow, f: impl Fn(i64, i64) -> f64 + Sync + Send) -> Result<Self> {
        let omega = fill(&w, f64::NAN, f);
        for (x, t) in w.sites() {
            let v = omega[w.index(x, t).expect("site in window")];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("omega({x},{t}) = {v} not in [0,1]")));
            }
        }
        Ok(Self { window: w, omega, seed: 0, mu: CharacteristicMeasure::zero() })
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mu(&self) -> &CharacteristicMeasure {
        &self.mu
    }

    pub fn get(&self, x: i64, t: i64) -> Result<f64> {
        Ok(self.omega[self.window.check(x, t)?])
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.sites().map(|(x, t)| self.omega[self.window.index(x, t).expect("site in window")])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,t,omega")?;
        for (x, t) in self.window.sites() {
            writeln!(out, "{x},{t},{}", crate::io::fmt_real(self.omega[self.window.index(x, t).unwrap()]))?;
        }
        Ok(())
    }
}

impl OmegaSource for Environment {
    fn omega(&self, x: i64, t: i64) -> Result<f64> {
        self.get(x, t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowField {
    window: LatticeWindow,
    alpha: Vec<i8>,
    seed: u64,
}

/// `α_z = +1` with probability `ω_z`, independently given ω.
pub fn sample_alpha(env: &Environment, seed: u64) -> ArrowField {
    let w = *env.window();
    let alpha = fill(&w, 0i8, |x, t| {
        let u: f64 = site_rng(seed, "alpha", x, t).random();
        if u < env.get(x, t).expect("site in window") {
            1
        } else {
            -1
        }
    });
    ArrowField { window: w, alpha, seed }
}

impl ArrowField {
    pub fn from_fn(w: LatticeWindow, f: impl Fn(i64, i64) -> i8 + Sync + Send) -> Result<Self> {
        let alpha = fill(&w, 0i8, f);
        if let Some((x, t)) = w.sites().find(|&(x, t)| alpha[w.index(x, t).unwrap()].abs() != 1) {
            return Err(Error::InvalidArgument(format!("alpha({x},{t}) is not +-1")));
        }
        Ok(Self { window: w, alpha, seed: 0 })
    }

    /// I.i.d. arrows with `P[α = +1] = p_right`.
    pub fn iid(w: LatticeWindow, p_right: f64, seed: u64) -> Self {
        let alpha = fill(&w, 0i8, |x, t| {
            let u: f64 = site_rng(seed, "arrow", x, t).random();
            if u < p_right {
                1
            } else {
                -1
            }
        });
        Self { window: w, alpha, seed }
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, x: i64, t: i64) -> Result<i8> {
        Ok(self.alpha[self.window.check(x, t)?])
    }

    pub(crate) fn set(&mut self, x: i64, t: i64, a: i8) -> Result<()> {
        let i = self.window.check(x, t)?;
        self.alpha[i] = a;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,t,alpha")?;
        for (x, t) in self.window.sites() {
            writeln!(out, "{x},{t},{}", self.alpha[self.window.index(x, t).unwrap()])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowPairField {
    window: LatticeWindow,
    left: Vec<i8>,
    right: Vec<i8>,
    seed: u64,
}

impl ArrowPairField {
    pub fn from_fn(w: LatticeWindow, f: impl Fn(i64, i64) -> (i8, i8) + Sync + Send) -> Result<Self> {
        let both = fill(&w, (0i8, 0i8), f);
        for (x, t) in w.sites() {
            let (l, r) = both[w.index(x, t).unwrap()];
            if l.abs() != 1 || r.abs() != 1 || l > r {
                return Err(Error::InvalidArgument(format!("pair ({l},{r}) at ({x},{t}) is not ordered +-1")));
            }
        }
        Ok(Self {
            window: w,
            left: both.iter().map(|p| p.0).collect(),
            right: both.iter().map(|p| p.1).collect(),
            seed: 0,
        })
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, x: i64, t: i64) -> Result<(i8, i8)> {
        let i = self.window.check(x, t)?;
        Ok((self.left[i], self.right[i]))
    }

    pub fn is_separation(&self, x: i64, t: i64) -> Result<bool> {
        let (l, r) = self.get(x, t)?;
        Ok(l < r)
    }

    pub fn separation_sites(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.window.sites().filter(|&(x, t)| {
            let i = self.window.index(x, t).unwrap();
            self.left[i] < self.right[i]
        })
    }
}

/// Separation pair `(-1,+1)` with probability `(b+ - b-)/2`, `(+1,+1)` with
/// probability `(1 + b-)/2`, `(-1,-1)` otherwise; so `E α^l = b-`, `E α^r = b+`.
pub fn pair_site(b_minus: f64, b_plus: f64, u: f64) -> (i8, i8) {
    let p_up = 0.5 * (1.0 + b_minus);
    let p_sep = 0.5 * (b_plus - b_minus);
    if u < p_up {
        (1, 1)
    } else if u < p_up + p_sep {
        (-1, 1)
    } else {
        (-1, -1)
    }
}

pub fn check_speeds(b_minus: f64, b_plus: f64) -> Result<()> {
    if !(-1.0 <= b_minus && b_minus <= b_plus && b_plus <= 1.0) {
        return Err(Error::BadSpeeds { b_minus, b_plus });
    }
    Ok(())
}

/// The uniform drawn at `(x, t)` by [`sample_pair_field`].
pub fn pair_uniform(seed: u64, x: i64, t: i64) -> f64 {
    (derive_seed(seed, "pair", site_id(x, t)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// I.i.d. pair field with speeds `b_minus = E α^l`, `b_plus = E α^r`.
pub fn sample_pair_field(b_minus: f64, b_plus: f64, w: LatticeWindow, seed: u64) -> Result<ArrowPairField> {
    check_speeds(b_minus, b_plus)?;
    let mut f = ArrowPairField::from_fn(w, |x, t| pair_site(b_minus, b_plus, pair_uniform(seed, x, t)))?;
    f.seed = seed;
    Ok(f)
}

/// Marks `ω̄` on separation sites; absent sites hold NaN.
#[derive(Debug, Clone)]
pub struct Marks {
    window: LatticeWindow,
    values: Vec<f64>,
}

impl Marks {
    pub fn from_map(w: LatticeWindow, map: &BTreeMap<(i64, i64), f64>) -> Result<Self> {
        let mut values = vec![f64::NAN; w.slots()];
        for (&(x, t), &v) in map {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("mark {v} at ({x},{t}) not in (0,1)")));
            }
            values[w.check(x, t)?] = v;
        }
        Ok(Self { window: w, values })
    }

    pub fn get(&self, x: i64, t: i64) -> Option<f64> {
        let v = self.values[self.window.index(x, t)?];
        (!v.is_nan()).then_some(v)
    }

    pub fn to_map(&self) -> BTreeMap<(i64, i64), f64> {
        self.window.sites().filter_map(|(x, t)| self.get(x, t).map(|v| ((x, t), v))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetEnvironment {
    pub pair: ArrowPairField,
    pub marks: Marks,
    pub mu: CharacteristicMeasure,
}

pub fn sample_net_environment(p: &FlowParams, w: LatticeWindow, eps: f64, seed: u64) -> Result<NetEnvironment> {
    let mu = mu_k_net_family(p, eps)?;
    let w1 = mu.atom_weight_at(1.0);
    let interior = CharacteristicMeasure::new(
        mu.atoms().iter().filter(|a| a.q > 0.0 && a.q < 1.0).copied().collect(),
        mu.beta_components().to_vec(),
    )?;
    let p_sep = interior.total_mass();
    let nu_bar = if p_sep > 0.0 { Some(QSampler::new(&interior.scaled(1.0 / p_sep)?)?) } else { None };
    let cells = fill(&w, (0i8, 0i8, f64::NAN), |x, t| {
        let mut rng = site_rng(seed, "net", x, t);
        let u: f64 = rng.random();
        if u < p_sep {
            (-1, 1, nu_bar.as_ref().expect("separation law").sample(&mut rng))
        } else if u < p_sep + w1 {
            (1, 1, f64::NAN)
        } else {
            (-1, -1, f64::NAN)
        }
    });
    let pair = ArrowPairField {
        window: w,
        left: cells.iter().map(|c| c.0).collect(),
        right: cells.iter().map(|c| c.1).collect(),
        seed,
    };
    let marks = Marks { window: w, values: cells.iter().map(|c| c.2).collect() };
    Ok(NetEnvironment { pair, marks, mu })
}

impl NetEnvironment {
    /// ω equal to the mark at separation sites and to `(α + 1)/2` elsewhere.
    pub fn to_environment(&self) -> Result<Environment> {
        let w = *self.pair.window();
        let mut omega = vec![f64::NAN; w.slots()];
        for (x, t) in w.sites() {
            let i = w.index(x, t).unwrap();
            let (l, r) = (self.pair.left[i], self.pair.right[i]);
            omega[i] = if l < r {
                self.marks.get(x, t).ok_or(Error::MissingMark { x, t })?
            } else {
                (l as f64 + 1.0) / 2.0
            };
        }
        Ok(Environment { window: w, omega, seed: self.pair.seed, mu: self.mu.clone() })
    }
}
