//! Forward and dual web paths of an arrow field.

use crate::environment::{is_even_site, ArrowField};
use crate::error::{Error, Result};

/// `p(t+1) = p(t) + α_{(p(t), t)}` from `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebPath {
    pub start: (i64, i64),
    pub steps: Vec<i8>,
}

impl WebPath {
    pub fn end_time(&self) -> i64 {
        self.start.1 + self.steps.len() as i64
    }

    /// Position at time `t`, if `t` lies in the path's time span.
    pub fn position(&self, t: i64) -> Option<i64> {
        let k = t - self.start.1;
        if k < 0 || k > self.steps.len() as i64 {
            return None;
        }
        Some(self.start.0 + self.steps[..k as usize].iter().map(|&s| s as i64).sum::<i64>())
    }

    pub fn positions(&self) -> Vec<i64> {
        let mut x = self.start.0;
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(x);
        for &s in &self.steps {
            x += s as i64;
            out.push(x);
        }
        out
    }
}

/// `p̂(t-1) = p̂(t) - α_{(p̂(t), t-1)}` from an odd `start`, going down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualWebPath {
    pub start: (i64, i64),
    pub steps: Vec<i8>,
}

impl DualWebPath {
    pub fn end_time(&self) -> i64 {
        self.start.1 - self.steps.len() as i64
    }

    pub fn position(&self, t: i64) -> Option<i64> {
        let k = self.start.1 - t;
        if k < 0 || k > self.steps.len() as i64 {
            return None;
        }
        Some(self.start.0 - self.steps[..k as usize].iter().map(|&s| s as i64).sum::<i64>())
    }
}

/// The even site whose arrow moves a dual walker standing at odd `(y, u)`.
pub const fn dual_arrow_site(y: i64, u: i64) -> (i64, i64) {
    (y, u - 1)
}

pub fn forward_path(field: &ArrowField, z: (i64, i64), horizon: i64) -> Result<WebPath> {
    let (x0, s) = z;
    if !is_even_site(x0, s) {
        return Err(Error::OddSite { x: x0, t: s });
    }
    field.window().check_cone(x0, s, horizon)?;
    let mut x = x0;
    let mut steps = Vec::with_capacity(horizon.max(0) as usize);
    for t in s..s + horizon {
        let a = field.get(x, t)?;
        steps.push(a);
        x += a as i64;
    }
    Ok(WebPath { start: z, steps })
}

pub fn dual_path(field: &ArrowField, z: (i64, i64), horizon: i64) -> Result<DualWebPath> {
    let (y0, u0) = z;
    if is_even_site(y0, u0) {
        return Err(Error::InvalidArgument(format!("dual start ({y0}, {u0}) is not an odd site")));
    }
    let mut y = y0;
    let mut steps = Vec::with_capacity(horizon.max(0) as usize);
    for u in (u0 - horizon + 1..=u0).rev() {
        let (ax, at) = dual_arrow_site(y, u);
        let a = field.get(ax, at)?;
        steps.push(a);
        y -= a as i64;
    }
    Ok(DualWebPath { start: z, steps })
}

/// First time both paths occupy the same site, within `horizon` steps of the
/// later start.
pub fn coalescence_time(field: &ArrowField, z1: (i64, i64), z2: (i64, i64), horizon: i64) -> Result<Option<i64>> {
    let s = z1.1.max(z2.1);
    let end = s + horizon;
    let p1 = forward_path(field, z1, end - z1.1)?;
    let p2 = forward_path(field, z2, end - z2.1)?;
    Ok((s..=end).find(|&t| p1.position(t) == p2.position(t)))
}

/// The field with `α_z` negated.
pub fn switch_point(field: &ArrowField, z: (i64, i64)) -> Result<ArrowField> {
    let mut out = field.clone();
    let a = field.get(z.0, z.1)?;
    out.set(z.0, z.1, -a)?;
    Ok(out)
}

/// `P(τ <= t)` for `t = 0..=horizon`, where τ is the first time two symmetric
/// i.i.d. web walkers started two apart meet. Half their distance is a lazy
/// walk: `±1` with probability 1/4 each, absorbed at 0.
pub fn coalescence_cdf_exact(horizon: usize) -> Vec<f64> {
    let mut p = vec![0.0; horizon + 3];
    p[1] = 1.0;
    let mut absorbed = 0.0;
    let mut out = vec![0.0];
    for _ in 0..horizon {
        let mut next = vec![0.0; p.len()];
        for d in 1..p.len() - 1 {
            let m = p[d];
            if m == 0.0 {
                continue;
            }
            next[d] += 0.5 * m;
            next[d + 1] += 0.25 * m;
            next[d - 1] += 0.25 * m;
        }
        absorbed += next[0];
        next[0] = 0.0;
        p = next;
        out.push(absorbed);
    }
    out
}
