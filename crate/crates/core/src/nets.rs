//! Discrete nets: reachable sets, the density of the branching-coalescing
//! point set, relevant separation points and webs sampled inside a net.

use crate::environment::{
    check_speeds, is_even_site, site_rng, ArrowField, ArrowPairField, LatticeWindow, Marks,
};
use crate::error::{Error, Result};
use crate::walks::{KernelRow, MassProfile};
use rand::RngExt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachSet {
    pub time: i64,
    pub positions: Vec<i64>,
}

/// Positions at time `t` of all net paths started from `a × {t0}`.
pub fn reachable_set(pair: &ArrowPairField, a: &[i64], t0: i64, t: i64) -> Result<ReachSet> {
    if t < t0 {
        return Err(Error::InvalidArgument(format!("end time {t} before start {t0}")));
    }
    let mut cur: Vec<i64> = a.to_vec();
    cur.sort_unstable();
    cur.dedup();
    for &x in &cur {
        if !is_even_site(x, t0) {
            return Err(Error::OddSite { x, t: t0 });
        }
    }
    if let (Some(&lo), Some(&hi)) = (cur.first(), cur.last()) {
        pair.window().check_cone(lo, t0, t - t0)?;
        pair.window().check_cone(hi, t0, t - t0)?;
    }
    let mut next = Vec::with_capacity(cur.len() * 2);
    for u in t0..t {
        next.clear();
        for &x in &cur {
            let (l, r) = pair.get(x, u)?;
            next.push(x + l as i64);
            next.push(x + r as i64);
        }
        next.dedup();
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(ReachSet { time: t, positions: cur })
}

/// Slot of `x` in a row of `w` at time `t` (any `t`, not only window times).
fn row_slot(w: &LatticeWindow, x: i64, t: i64) -> Option<usize> {
    if x < w.x_min || x > w.x_max || !is_even_site(x, t) {
        return None;
    }
    Some(((x - w.first_x(t)) / 2) as usize)
}

/// Rows `s..=u` of the set reached by net paths from every window site of row `s`.
fn reach_rows(pair: &ArrowPairField, s: i64, u: i64) -> Vec<Vec<bool>> {
    let w = pair.window();
    let stride = w.stride();
    let mut rows = Vec::with_capacity((u - s + 1) as usize);
    let mut cur = vec![false; stride];
    for x in w.row_sites(s) {
        cur[row_slot(w, x, s).unwrap()] = true;
    }
    for t in s..u {
        let mut next = vec![false; stride];
        for x in w.row_sites(t) {
            if !cur[row_slot(w, x, t).unwrap()] {
                continue;
            }
            let (l, r) = pair.get(x, t).expect("site in window");
            for y in [x + l as i64, x + r as i64] {
                if let Some(j) = row_slot(w, y, t + 1) {
                    next[j] = true;
                }
            }
        }
        rows.push(std::mem::replace(&mut cur, next));
    }
    rows.push(cur);
    rows
}

impl ArrowPairField {
    /// The field seen by dual walkers after the map `(y, u) ↦ (1 - y, -u)`:
    /// its arrow pair at even `(x, s)` is the pair at `(1 - x, -s - 1)`.
    pub fn rotated(&self) -> ArrowPairField {
        let w = self.window();
        let rw = LatticeWindow { x_min: 1 - w.x_max, x_max: 1 - w.x_min, t_min: -w.t_max - 1, t_max: -w.t_min - 1 };
        ArrowPairField::from_fn(rw, |x, s| self.get(1 - x, -s - 1).expect("rotated site in window"))
            .expect("rotation preserves order")
    }
}

/// Sites reached at times `s..=u` by net paths from all window sites at time `s`;
/// paths leaving the window are dropped.
pub fn forward_reach(pair: &ArrowPairField, s: i64, u: i64) -> Result<Vec<(i64, i64)>> {
    let w = pair.window();
    if s < w.t_min || u > w.t_max + 1 || u < s {
        return Err(Error::OutOfWindow { x: w.x_min, t: if s < w.t_min { s } else { u } });
    }
    let rows = reach_rows(pair, s, u);
    Ok(collect_rows(w, s, &rows))
}

fn collect_rows(w: &LatticeWindow, s: i64, rows: &[Vec<bool>]) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let t = s + k as i64;
        for x in w.row_sites(t) {
            if row[row_slot(w, x, t).unwrap()] {
                out.push((x, t));
            }
        }
    }
    out
}

/// Odd sites at times `s..=u` reached by dual net paths started from every odd
/// site in row `u`, via the rotated field.
pub fn dual_reach(pair: &ArrowPairField, s: i64, u: i64) -> Result<Vec<(i64, i64)>> {
    let rot = pair.rotated();
    let mut sites: Vec<(i64, i64)> = forward_reach(&rot, -u, -s)?.into_iter().map(|(x, t)| (1 - x, -t)).collect();
    sites.sort_by_key(|&(x, t)| (t, x));
    Ok(sites)
}

/// Separation sites `(x, t)`, `s <= t < u`, reached by a net path from time `s`
/// and whose odd neighbour `(x, t + 1)` is reached by a dual net path from time `u`.
pub fn relevant_separation_points(pair: &ArrowPairField, s: i64, u: i64) -> Result<Vec<(i64, i64)>> {
    let w = *pair.window();
    if s < w.t_min || u > w.t_max + 1 || s >= u {
        return Err(Error::OutOfWindow { x: w.x_min, t: if s < w.t_min { s } else { u } });
    }
    let fwd = reach_rows(pair, s, u - 1);
    let rot = pair.rotated();
    let rw = *rot.window();
    let dual = reach_rows(&rot, -u, -(s + 1));
    let mut out = Vec::new();
    for t in s..u {
        let frow = &fwd[(t - s) as usize];
        let drow = &dual[(u - t - 1) as usize];
        for x in w.row_sites(t) {
            let (l, r) = pair.get(x, t)?;
            if l < r && frow[row_slot(&w, x, t).unwrap()] {
                if let Some(j) = row_slot(&rw, 1 - x, -(t + 1)) {
                    if drow[j] {
                        out.push((x, t));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `Ψ(t)` for `t = 0..=tmax`: the probability that a lazy walk from 1 with
/// up-probability `(1-b-)(1+b+)/4` and down-probability `(1+b-)(1-b+)/4`
/// has not hit 0 by time `t`.
pub fn density_table(b_minus: f64, b_plus: f64, tmax: usize) -> Result<Vec<f64>> {
    check_speeds(b_minus, b_plus)?;
    let up = 0.25 * (1.0 - b_minus) * (1.0 + b_plus);
    let down = 0.25 * (1.0 + b_minus) * (1.0 - b_plus);
    let hold = 1.0 - up - down;
    let mut p = vec![0.0; tmax + 3];
    p[1] = 1.0;
    let mut out = Vec::with_capacity(tmax + 1);
    out.push(1.0);
    let mut next = vec![0.0; p.len()];
    for step in 0..tmax {
        let top = (step + 2).min(p.len() - 2);
        next[..=top + 1].fill(0.0);
        for d in 1..=top {
            let m = p[d];
            next[d] += hold * m;
            next[d + 1] += up * m;
            if d > 1 {
                next[d - 1] += down * m;
            }
        }
        std::mem::swap(&mut p, &mut next);
        out.push(crate::walks::compensated_sum(p[1..=top + 1].iter().copied()));
    }
    Ok(out)
}

pub fn density_exact(b_minus: f64, b_plus: f64, t: usize) -> Result<f64> {
    Ok(density_table(b_minus, b_plus, t)?[t])
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `e^{-b²t}/√(πt) + 2bΦ(b√(2t))`.
pub fn psi_continuum(b: f64, t: f64) -> f64 {
    (-b * b * t).exp() / (std::f64::consts::PI * t).sqrt() + 2.0 * b * normal_cdf(b * (2.0 * t).sqrt())
}

/// `∫_0^T 2b Ψ_b(t) Ψ_b(T - t) dt`, the continuum density of relevant
/// separation points per unit width of a slab of height `T`.
pub fn relevant_density_continuum(b: f64, height: f64) -> f64 {
    // t = T sin²θ removes the inverse square roots at both ends; midpoint rule.
    let n = 20_000;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    (0..n)
        .map(|i| {
            let (s, c) = ((i as f64 + 0.5) * h).sin_cos();
            let t = height * s * s;
            2.0 * b * psi_continuum(b, t) * psi_continuum(b, height - t) * 2.0 * height * s * c
        })
        .sum::<f64>()
        * h
}

/// How a web inside the net resolves separation sites.
#[derive(Debug, Clone, Copy)]
pub enum WebChoice<'a> {
    /// Right arrow with probability `r`.
    Uniform(f64),
    /// Right arrow with probability equal to the site's mark.
    Marks(&'a Marks),
}

pub fn sample_web_in_net(pair: &ArrowPairField, choice: WebChoice<'_>, seed: u64) -> Result<ArrowField> {
    let w = *pair.window();
    if let WebChoice::Marks(m) = choice {
        if let Some((x, t)) = pair.separation_sites().find(|&(x, t)| m.get(x, t).is_none()) {
            return Err(Error::MissingMark { x, t });
        }
    }
    ArrowField::from_fn(w, |x, t| {
        let (l, r) = pair.get(x, t).expect("site in window");
        if l == r {
            return l;
        }
        let p = match choice {
            WebChoice::Uniform(r) => r,
            WebChoice::Marks(m) => m.get(x, t).expect("checked above"),
        };
        let u: f64 = site_rng(seed, "web", x, t).random();
        if u < p {
            r
        } else {
            l
        }
    })
}

/// Kernel row of the flow carried by a marked net: at a separation site a
/// `ω̄` fraction of the mass follows the right arrow, the rest the left one.
pub fn net_flow_kernel(pair: &ArrowPairField, marks: &Marks, x: i64, s: i64, t: i64) -> Result<KernelRow> {
    if !is_even_site(x, s) {
        return Err(Error::OddSite { x, t: s });
    }
    pair.window().check_cone(x, s, t - s)?;
    let mut masses = vec![1.0];
    let mut start = x;
    for u in s..t {
        let mut next = vec![0.0; masses.len() + 1];
        for (i, &m) in masses.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let y = start + 2 * i as i64;
            let (l, r) = pair.get(y, u)?;
            let right = if l < r {
                marks.get(y, u).ok_or(Error::MissingMark { x: y, t: u })? * m
            } else if l == 1 {
                m
            } else {
                0.0
            };
            next[i] += m - right;
            next[i + 1] += right;
        }
        masses = next;
        start -= 1;
    }
    let pairs: Vec<(i64, f64)> =
        masses.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(i, &m)| (start + 2 * i as i64, m)).collect();
    Ok(KernelRow { source: (x, s), probs: MassProfile::from_pairs(t, &pairs)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_pair_field;

    #[test]
    fn density_examples() {
        assert_eq!(density_exact(0.0, 0.0, 0).unwrap(), 1.0);
        assert!((density_exact(0.0, 0.0, 1).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(density_exact(0.2, 0.1, 3), Err(Error::BadSpeeds { .. })));
        let tab = density_table(-0.3, 0.4, 200).unwrap();
        assert!(tab.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn psi_has_the_right_limits() {
        assert!((psi_continuum(1.0, 1e6) - 2.0).abs() < 1e-6);
        assert!((psi_continuum(0.0, 1.0) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn no_separation_gives_web_image() {
        let w = LatticeWindow::new(-20, 20, 0, 10).unwrap();
        let f = ArrowPairField::from_fn(w, |_, _| (1, 1)).unwrap();
        let r = reachable_set(&f, &[-4, 0, 4], 0, 5).unwrap();
        assert_eq!(r.positions, vec![1, 5, 9]);
        let g = ArrowPairField::from_fn(w, |_, _| (-1, 1)).unwrap();
        let r = reachable_set(&g, &[0], 0, 4).unwrap();
        assert_eq!(r.positions, vec![-4, -2, 0, 2, 4]);
    }

    #[test]
    fn rotation_matches_direct_backward_dp() {
        let w = LatticeWindow::new(-30, 30, 0, 19).unwrap();
        let f = sample_pair_field(-0.2, 0.3, w, 8).unwrap();
        let (s, u) = (0, 20);
        // Direct backward DP over odd sites.
        let mut cur: Vec<i64> = (w.x_min..=w.x_max).filter(|&y| (y + u).rem_euclid(2) == 1).collect();
        let mut direct: Vec<(i64, i64)> = cur.iter().map(|&y| (y, u)).collect();
        for t in (s + 1..=u).rev() {
            let mut next = Vec::new();
            for &y in &cur {
                if let Ok((l, r)) = f.get(y, t - 1) {
                    for z in [y - l as i64, y - r as i64] {
                        if (w.x_min..=w.x_max).contains(&z) {
                            next.push(z);
                        }
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            direct.extend(next.iter().map(|&y| (y, t - 1)));
            cur = next;
        }
        direct.sort_by_key(|&(x, t)| (t, x));
        assert_eq!(dual_reach(&f, s, u).unwrap(), direct);
    }
}
