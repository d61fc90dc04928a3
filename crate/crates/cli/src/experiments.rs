//! One function per experiment kind. Each returns report rows plus any
//! plot-ready files; gates are judged later from the rows.

use crate::config::{bad, Config, ConfigError, Section};
use crate::report::{Gate, Row};
use hwflow::environment::{derive_seed, sample_environment, sample_net_environment, sample_pair_field, ArrowField, ArrowPairField, LatticeWindow};
use hwflow::estimators::{
    density_estimate, flow_measure, invariant_half_width, invariant_moment_estimate, relevant_count_estimate,
    relevant_count_exact, replica_seed, rescaled_density_exact, rescaled_relevant_exact, speed_estimate, LazyOmega,
    PiecewiseLinear, Welford,
};
use hwflow::exec;
use hwflow::io::{emit_plotdata, fmt_real};
use hwflow::measures::{beta_pm, flow_from_theta, stickiness_and_speeds, theta_from_flow, CharacteristicMeasure, FlowParams, Side};
use hwflow::mp_oracle::{apply_a_theta, martingale_residuals_mc, IndexSet};
use hwflow::nets::{density_table, net_flow_kernel, psi_continuum, reachable_set, relevant_density_continuum};
use hwflow::walks::{hw_step, kernel_row, npoint_sample, split_probability, MassProfile, Mode};
use hwflow::webs::{coalescence_cdf_exact, coalescence_time};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] hwflow::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Default)]
pub struct Output {
    pub rows: Vec<Row>,
    pub files: Vec<(String, Vec<u8>)>,
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub run: Section,
    pub exact_tol: f64,
    pub gates: Section,
}

pub fn run(c: &Ctx<'_>) -> Result<Output, RunError> {
    match c.cfg.kind.as_str() {
        "oracle" => oracle(c),
        "npoint" => match mode(c, &["split", "residuals"])?.as_str() {
            "split" => npoint_split(c),
            _ => npoint_residuals(c),
        },
        "flow" => match mode(c, &["profile", "kernel", "speed"])?.as_str() {
            "profile" => flow_profile(c),
            "kernel" => flow_kernel(c),
            _ => flow_speed(c),
        },
        "density" => density(c),
        "relevant" => relevant(c),
        "invariant" => invariant(c),
        "web" => web(c),
        "net" => net(c),
        k => Err(bad("kind", format!("unknown kind `{k}`")).into()),
    }
}

fn mode(c: &Ctx<'_>, allowed: &[&str]) -> Result<String, ConfigError> {
    let m = c.run.string("mode", Some(allowed[0]))?;
    if !allowed.contains(&m.as_str()) {
        return Err(bad("run.mode", format!("`{m}` is not one of {}", allowed.join(", "))));
    }
    Ok(m)
}

fn flow_params(label: &str, p: &FlowParams) -> serde_json::Value {
    json!({ "flow": label, "drift": p.drift, "nu_mass": p.nu.total_mass() })
}

fn random_flow(rng: &mut Pcg64Mcg) -> FlowParams {
    let drift = rng.random_range(-2.0..2.0);
    let k = rng.random_range(0..3);
    let pairs: Vec<(f64, f64)> = (0..k).map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.0..1.5))).collect();
    let mut nu = CharacteristicMeasure::atoms_from(&pairs).expect("atoms in range");
    if rng.random::<bool>() {
        let (a, b, w) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(0.0..2.0));
        nu = nu.plus(&CharacteristicMeasure::beta_density(a, b, w).expect("valid shapes"));
    }
    FlowParams::new(drift, nu).expect("finite drift")
}

fn round_trip_error(p: &FlowParams, kmax: usize) -> Result<f64, RunError> {
    let theta = theta_from_flow(p, kmax)?;
    let back = flow_from_theta(&theta)?;
    let mut err = (back.drift - p.drift).abs();
    for k in 0..kmax {
        for l in 0..kmax {
            err = err.max((back.moments[k][l] - p.nu.moment(k as u32, l as u32)).abs());
        }
    }
    for m in 1..=kmax {
        err = err.max((theta.beta_plus(m) - beta_pm(p, m as u32, Side::Plus)).abs());
    }
    Ok(err)
}

fn oracle(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["kmax", "identity_cases", "roundtrip_cases"])?;
    let kmax = c.run.usize("kmax", Some(6))?;
    let cases = c.run.usize("identity_cases", Some(10_000))?;
    let trips = c.run.usize("roundtrip_cases", Some(1000))?;
    let id_tol = c.gates.f64("identity_tol", Some(1e-10))?;
    let flows = c.cfg.flows()?;
    let expects = c.cfg.expectations()?;
    let mut out = Output::default();
    for (i, (label, p)) in flows.iter().enumerate() {
        let s = stickiness_and_speeds(p);
        let expect = expects.get(i);
        if let Some(e) = expect {
            e.allow(&["theta", "beta_minus", "beta_plus"])?;
        }
        for (name, v) in [("theta", s.theta), ("beta_minus", s.beta_minus), ("beta_plus", s.beta_plus)] {
            let mut row = Row::new(&format!("oracle.{name}"), flow_params(label, p), v);
            if let Some(t) = expect.map(|e| e.opt_f64(name)).transpose()?.flatten() {
                row = row.target(t, Gate::Abs(c.exact_tol));
            }
            out.rows.push(row);
        }
        let err = round_trip_error(p, kmax)?;
        out.rows.push(Row::new("oracle.theta_round_trip", json!({ "flow": label, "kmax": kmax }), err).target(0.0, Gate::Abs(id_tol)));
    }

    let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(c.seed, "oracle", 0));
    if cases > 0 {
        let (mut id, mut shift): (f64, f64) = (0.0, 0.0);
        for _ in 0..cases {
            let p = random_flow(&mut rng);
            let theta = theta_from_flow(&p, kmax)?;
            let shifted = theta.shifted(rng.random_range(-3.0..3.0));
            let n = rng.random_range(1..=kmax.min(6));
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
            let d = IndexSet::from_mask(n, rng.random_range(1..1u32 << n))?;
            let a = apply_a_theta(&theta, &d, &x)?;
            let b = apply_a_theta(&shifted, &d, &x)?;
            id = id.max((a.literal - a.closed_form).abs()).max((b.literal - b.closed_form).abs());
            shift = shift.max((a.literal - b.literal).abs());
        }
        let params = json!({ "cases": cases, "kmax": kmax });
        out.rows.push(Row::new("oracle.operator_identity", params.clone(), id).target(0.0, Gate::Abs(id_tol)));
        out.rows.push(Row::new("oracle.theta_shift_invariance", params, shift).target(0.0, Gate::Abs(id_tol)));
    }
    if trips > 0 {
        let mut err: f64 = 0.0;
        for _ in 0..trips {
            err = err.max(round_trip_error(&random_flow(&mut rng), kmax)?);
        }
        out.rows.push(
            Row::new("oracle.random_round_trip", json!({ "cases": trips, "kmax": kmax }), err).target(0.0, Gate::Abs(id_tol)),
        );
    }
    Ok(out)
}

fn npoint_split(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["mode", "measures", "n_max", "replicas"])?;
    let measures = c.cfg.measures()?;
    let n_max = c.run.usize("n_max", Some(4))?;
    if !(1..=16).contains(&n_max) {
        return Err(bad("run.n_max", "must lie in 1..=16").into());
    }
    let replicas = c.run.usize("replicas", Some(100_000))?;
    let mut out = Output::default();
    for (mi, mu) in measures.iter().enumerate() {
        for n in 1..=n_max {
            if mu.beta_components().is_empty() {
                let mut err: f64 = 0.0;
                let mut total = 0.0;
                for pattern in 0..1u32 << n {
                    let p: f64 = mu
                        .atoms()
                        .iter()
                        .map(|a| a.w * (0..n).map(|i| if pattern >> i & 1 == 1 { a.q } else { 1.0 - a.q }).product::<f64>())
                        .sum();
                    total += p;
                    let k = pattern.count_ones();
                    err = err.max((p - split_probability(mu, k, n as u32 - k)).abs());
                }
                err = err.max((total - 1.0).abs());
                out.rows.push(Row::new("npoint.enumeration", json!({ "measure": mi, "n": n }), err).target(0.0, Gate::Abs(c.exact_tol)));
            }
            if replicas == 0 {
                continue;
            }
            let tag = format!("split/{mi}/{n}");
            let patterns: Vec<Result<usize, hwflow::Error>> = exec::map_indexed(replicas, |r| {
                let path = npoint_sample(mu, &vec![0; n], 1, derive_seed(c.seed, &tag, r as u64), Mode::Averaged)?;
                Ok(path.at(1).iter().enumerate().fold(0, |acc, (i, &x)| acc | ((x > 0) as usize) << i))
            });
            let mut counts = vec![0u64; 1 << n];
            for p in patterns {
                counts[p?] += 1;
            }
            for (pattern, &hits) in counts.iter().enumerate() {
                let k = pattern.count_ones();
                let p = split_probability(mu, k, n as u32 - k);
                let f = hits as f64 / replicas as f64;
                let bits: String = (0..n).map(|i| if pattern >> i & 1 == 1 { 'R' } else { 'L' }).collect();
                let row = Row::new("npoint.split", json!({ "measure": mi, "n": n, "pattern": bits }), f)
                    .mc((p * (1.0 - p) / replicas as f64).sqrt(), replicas);
                out.rows.push(if p > 0.0 { row.target(p, Gate::Z("split")) } else { row.target(0.0, Gate::Abs(0.0)) });
            }
        }
    }
    Ok(out)
}

fn single_flow(c: &Ctx<'_>) -> Result<(String, FlowParams), RunError> {
    let mut flows = c.cfg.flows()?;
    if flows.len() != 1 {
        return Err(bad("flows", "this experiment takes exactly one flow").into());
    }
    Ok(flows.remove(0))
}

fn npoint_residuals(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["mode", "eps", "horizon", "replicas", "starts"])?;
    let (label, p) = single_flow(c)?;
    let eps = c.run.f64("eps", Some(0.02))?;
    let horizon = c.run.f64("horizon", Some(1.0))?;
    let replicas = c.run.usize("replicas", Some(10_000))?;
    let starts = c.run.i64_rows("starts", Some(vec![vec![0, 0], vec![0, 0, 0]]))?;
    let mut out = Output::default();
    for (si, x0) in starts.iter().enumerate() {
        let r = martingale_residuals_mc(&p, eps, x0, horizon, replicas, derive_seed(c.seed, "residuals", si as u64))?;
        for s in &r.stats {
            let params = json!({ "flow": label, "eps": eps, "horizon": horizon, "start": x0, "statistic": s.name });
            let row = Row::new("npoint.residual", params, s.estimate.mean).mc(s.estimate.stderr, replicas);
            out.rows.push(if s.gated { row.target(0.0, Gate::Z("residual")) } else { row.info_target(0.0) });
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        out.files.push((format!("residuals_{si}.csv"), buf));
    }
    Ok(out)
}

fn flow_profile(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["mode", "eps", "horizon", "init", "half_width", "every"])?;
    let (label, p) = single_flow(c)?;
    let eps = c.run.f64("eps", Some(0.05))?;
    let horizon = c.run.f64("horizon", Some(0.2))?;
    let every = c.run.usize("every", Some(1))?.max(1);
    let half = c.run.i64("half_width", Some((3.0 / eps).ceil() as i64))?;
    let init = c.run.string("init", Some("lebesgue"))?;
    let rho0 = match init.as_str() {
        "lebesgue" => MassProfile::from_fn(0, -half, half, |_| 2.0 * eps)?,
        "delta" => MassProfile::delta(0, 0),
        other => return Err(bad("run.init", format!("`{other}` is not one of lebesgue, delta")).into()),
    };
    let mu = flow_measure(&p, eps)?;
    let omega = LazyOmega::new(&mu, derive_seed(c.seed, "environment", 0))?;
    let steps = (horizon / (eps * eps)).round().max(1.0) as i64;
    let mut history = vec![rho0.clone()];
    let mut rho = rho0.clone();
    for k in 1..=steps {
        rho = hw_step(&omega, &rho)?;
        if k % every as i64 == 0 || k == steps {
            history.push(rho.clone());
        }
    }
    let mut buf = Vec::new();
    emit_plotdata(&history, &mut buf)?;
    let m0 = rho0.total_mass();
    let params = json!({ "flow": label, "eps": eps, "horizon": horizon, "steps": steps, "init": init });
    let mut out = Output::default();
    out.rows.push(Row::new("flow.total_mass", params, rho.total_mass()).target(m0, Gate::Abs(1e-9 * m0.max(1.0))));
    out.files.push(("plotdata.csv".into(), buf));
    Ok(out)
}

fn flow_kernel(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["mode", "measures", "environments", "half_width", "times", "mass_steps"])?;
    let mu = c.cfg.measures()?.into_iter().next().ok_or_else(|| bad("run.measures", "needs one measure"))?;
    let envs = c.run.usize("environments", Some(100))?;
    let half = c.run.i64("half_width", Some(32))?;
    let times = c.run.f64s("times", Some(&[0.0, 15.0, 30.0]))?;
    let [s, t, u] = times[..] else {
        return Err(bad("run.times", "expected three times s <= t <= u").into());
    };
    let (s, t, u) = (s as i64, t as i64, u as i64);
    if !(0 <= s && s <= t && t <= u && u < 2 * half) {
        return Err(bad("run.times", "need 0 <= s <= t <= u < 2 half_width").into());
    }
    let mass_steps = c.run.i64("mass_steps", Some(10_000))?;
    let w = LatticeWindow::new(-half, half - 1, 0, 2 * half - 1)?;
    let errs: Vec<Result<f64, hwflow::Error>> = exec::map_indexed(envs, |i| {
        let env = sample_environment(&mu, w, derive_seed(c.seed, "environment", i as u64))?;
        let direct = kernel_row(&env, 0, s, u)?;
        let mid = kernel_row(&env, 0, s, t)?;
        let mut composed = BTreeMap::<i64, f64>::new();
        for (y, p) in mid.probs.iter() {
            for (z, q) in kernel_row(&env, y, t, u)?.probs.iter() {
                *composed.entry(z).or_default() += p * q;
            }
        }
        let mut worst: f64 = 0.0;
        for (&z, &v) in &composed {
            worst = worst.max((v - direct.get(z)).abs());
        }
        for (z, v) in direct.probs.iter() {
            worst = worst.max((v - composed.get(&z).copied().unwrap_or(0.0)).abs());
        }
        Ok(worst)
    });
    let mut worst: f64 = 0.0;
    for e in errs {
        worst = worst.max(e?);
    }
    let mut out = Output::default();
    out.rows.push(
        Row::new("flow.chapman_kolmogorov", json!({ "environments": envs, "s": s, "t": t, "u": u }), worst)
            .target(0.0, Gate::Abs(c.exact_tol)),
    );
    let omega = LazyOmega::new(&mu, derive_seed(c.seed, "mass", 0))?;
    let mut rho = MassProfile::from_pairs(0, &[(-10, 0.2), (0, 0.5), (14, 0.3)])?;
    for _ in 0..mass_steps {
        rho = hw_step(&omega, &rho)?;
    }
    out.rows.push(
        Row::new("flow.mass_conservation", json!({ "steps": mass_steps }), rho.total_mass())
            .target(1.0, Gate::Abs(c.gates.f64("mass_tol", Some(1e-9))?)),
    );
    Ok(out)
}

fn flow_speed(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["mode", "eps", "horizon", "replicas"])?;
    let eps = c.run.f64("eps", Some(0.02))?;
    let horizon = c.run.f64("horizon", Some(1.0))?;
    let replicas = c.run.usize("replicas", Some(10_000))?;
    let mut out = Output::default();
    for (i, (label, p)) in c.cfg.flows()?.iter().enumerate() {
        let e = speed_estimate(p, eps, horizon, replicas, derive_seed(c.seed, "speed", i as u64))?;
        let mut params = flow_params(label, p);
        params["eps"] = json!(eps);
        params["horizon"] = json!(horizon);
        out.rows.push(
            Row::new("flow.speed", params, e.mean)
                .mc(e.stderr, replicas)
                .target(stickiness_and_speeds(p).beta_plus, Gate::Z("speed")),
        );
    }
    Ok(out)
}

fn density(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["b_minus", "b_plus", "t", "half_width", "replicas", "rescaled_b", "rescaled_eps", "rescaled_t", "plateau_t"])?;
    let bm = c.run.f64("b_minus", Some(-0.05))?;
    let bp = c.run.f64("b_plus", Some(0.05))?;
    let t = c.run.i64("t", Some(400))?;
    let half = c.run.i64("half_width", Some(100))?;
    let replicas = c.run.usize("replicas", Some(10_000))?;
    let table = density_table(bm, bp, t.max(0) as usize)?;
    let mut out = Output::default();
    let e = density_estimate(bm, bp, t, half, replicas, c.seed)?;
    out.rows.push(
        Row::new("density.mc", json!({ "b_minus": bm, "b_plus": bp, "t": t, "half_width": half }), e.mean)
            .mc(e.stderr, replicas)
            .target(table[t as usize], Gate::Z("density")),
    );
    if let Some(b) = c.run.opt_f64("rescaled_b")? {
        let eps = c.run.f64("rescaled_eps", Some(0.02))?;
        let horizon = c.run.f64("rescaled_t", Some(1.0))?;
        let r = rescaled_density_exact(b, eps, horizon)?;
        let tol = c.gates.f64("rel_tol", Some(0.02))?;
        out.rows.push(
            Row::new("density.rescaled", json!({ "b": b, "eps": eps, "t": horizon }), r)
                .target(psi_continuum(b, horizon), Gate::Rel(tol)),
        );
    }
    if let Some(far) = c.run.opt_f64("plateau_t")? {
        let far = far as usize;
        // Per unit lattice length; the target 2bε is b+ - b- on the lattice.
        let plateau = density_table(bm, bp, far)?[far] / 2.0;
        let tol = c.gates.f64("plateau_rel_tol", Some(0.05))?;
        out.rows.push(
            Row::new("density.plateau", json!({ "b_minus": bm, "b_plus": bp, "t": far }), plateau)
                .target(bp - bm, Gate::Rel(tol)),
        );
    }
    let mut csv = String::from("t,density\n");
    for (k, d) in table.iter().enumerate() {
        let _ = writeln!(csv, "{k},{}", fmt_real(*d));
    }
    out.files.push(("density_exact.csv".into(), csv.into_bytes()));
    Ok(out)
}

fn relevant(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["b_minus", "b_plus", "height", "half_width", "replicas", "rescaled_b", "rescaled_eps", "rescaled_t"])?;
    let bm = c.run.f64("b_minus", Some(-0.02))?;
    let bp = c.run.f64("b_plus", Some(0.02))?;
    let height = c.run.i64("height", Some(2500))?;
    let half = c.run.i64("half_width", Some(500))?;
    let replicas = c.run.usize("replicas", Some(100))?;
    let mut out = Output::default();
    let e = relevant_count_estimate(bm, bp, height, half, replicas, c.seed)?;
    out.rows.push(
        Row::new("relevant.mc", json!({ "b_minus": bm, "b_plus": bp, "height": height, "half_width": half }), e.mean)
            .mc(e.stderr, replicas)
            .target(relevant_count_exact(bm, bp, height, half)?, Gate::Z("relevant")),
    );
    if let Some(b) = c.run.opt_f64("rescaled_b")? {
        let eps = c.run.f64("rescaled_eps", Some(0.02))?;
        let horizon = c.run.f64("rescaled_t", Some(1.0))?;
        let tol = c.gates.f64("rel_tol", Some(0.05))?;
        out.rows.push(
            Row::new("relevant.rescaled", json!({ "b": b, "eps": eps, "t": horizon }), rescaled_relevant_exact(b, eps, horizon)?)
                .target(relevant_density_continuum(b, horizon), Gate::Rel(tol)),
        );
    }
    Ok(out)
}

fn invariant(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["eps", "horizons", "replicas", "translates", "phi", "psi"])?;
    let eps = c.run.f64("eps", Some(0.05))?;
    let horizons = c.run.f64s("horizons", Some(&[0.5, 1.0, 2.0, 4.0]))?;
    let last = horizons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let replicas = c.run.usize("replicas", Some(250))?;
    let translates = c.run.usize("translates", Some(38))?.max(1);
    let test_fn = |k: &str| -> Result<PiecewiseLinear, RunError> {
        match c.run.knots(k)? {
            Some(knots) => PiecewiseLinear::new(knots).map_err(|e| bad(&format!("run.{k}"), e.to_string()).into()),
            None => Ok(PiecewiseLinear::triangle(0.0, 1.0)),
        }
    };
    let (phi, psi) = (test_fn("phi")?, test_fn("psi")?);
    let radius = [phi.support(), psi.support()].iter().map(|s| s.0.abs().max(s.1.abs())).fold(0.0, f64::max);
    let shift = 2 * (radius / eps).ceil() as i64 + 2;
    let mut out = Output::default();
    for (i, (label, p)) in c.cfg.flows()?.iter().enumerate() {
        for (j, &t) in horizons.iter().enumerate() {
            let hw = invariant_half_width(eps, t, radius)? + shift * translates as i64;
            let seed = derive_seed(c.seed, &format!("invariant/{i}"), j as u64);
            let e = invariant_moment_estimate(p, eps, t, hw, replicas, seed, &phi, &psi, translates)?;
            let params = |stat: &str| json!({ "flow": label, "eps": eps, "horizon": t, "statistic": stat });
            out.rows.push(Row::new("invariant.first", params("first"), e.first.mean).mc(e.first.stderr, replicas).target(e.first_exact, Gate::Z("first")));
            out.rows.push(
                Row::new("invariant.second", params("second"), e.second.mean).mc(e.second.stderr, replicas).info_target(e.second_exact),
            );
            let lattice = e.second_exact - e.first_continuum * e.first_continuum;
            out.rows.push(
                Row::new("invariant.excess_lattice", params("excess"), e.excess.mean).mc(e.excess.stderr, replicas).info_target(lattice),
            );
            let row = Row::new("invariant.excess", params("excess"), e.excess.mean).mc(e.excess.stderr, replicas);
            out.rows.push(if t == last {
                row.target(e.excess_continuum, Gate::Z("excess"))
            } else {
                row.info_target(e.excess_continuum)
            });
        }
    }
    Ok(out)
}

fn web(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["horizon", "replicas", "times"])?;
    let horizon = c.run.i64("horizon", Some(64))?;
    if horizon < 1 {
        return Err(bad("run.horizon", "must be positive").into());
    }
    let replicas = c.run.usize("replicas", Some(10_000))?;
    let times: Vec<i64> = c.run.f64s("times", Some(&[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]))?.iter().map(|&t| t as i64).collect();
    if let Some(i) = times.iter().position(|&t| t < 0 || t > horizon) {
        return Err(bad(&format!("run.times[{i}]"), "must lie in 0..=horizon").into());
    }
    let w = LatticeWindow::new(-horizon - 4, horizon + 6, 0, horizon + 1)?;
    let taus: Vec<Result<Option<i64>, hwflow::Error>> = exec::map_indexed(replicas, |i| {
        let field = ArrowField::iid(w, 0.5, replica_seed(c.seed, i));
        coalescence_time(&field, (0, 0), (2, 0), horizon)
    });
    let mut hits = vec![Welford::default(); horizon as usize + 1];
    for tau in taus {
        let tau = tau?;
        for (t, h) in hits.iter_mut().enumerate() {
            h.push(f64::from(tau.is_some_and(|s| s <= t as i64)));
        }
    }
    let exact = coalescence_cdf_exact(horizon as usize);
    let mut out = Output::default();
    for &t in &times {
        let h = &hits[t as usize];
        let stderr = (exact[t as usize] * (1.0 - exact[t as usize]) / replicas as f64).sqrt();
        out.rows.push(
            Row::new("web.coalescence_cdf", json!({ "t": t, "gap": 2 }), h.mean())
                .mc(stderr, replicas)
                .target(exact[t as usize], if stderr > 0.0 { Gate::Z("cdf") } else { Gate::Abs(0.0) }),
        );
    }
    let mut csv = String::from("t,mc,exact\n");
    for (t, h) in hits.iter().enumerate() {
        let _ = writeln!(csv, "{t},{},{}", fmt_real(h.mean()), fmt_real(exact[t]));
    }
    out.files.push(("coalescence_cdf.csv".into(), csv.into_bytes()));
    Ok(out)
}

fn brute_reach(pair: &ArrowPairField, a: &[i64], t0: i64, t: i64) -> Result<BTreeSet<i64>, hwflow::Error> {
    let steps = (t - t0) as u32;
    let mut out = BTreeSet::new();
    for &x0 in a {
        for choice in 0..1u64 << steps {
            let mut x = x0;
            for k in 0..steps {
                let (l, r) = pair.get(x, t0 + k as i64)?;
                x += if choice >> k & 1 == 1 { r } else { l } as i64;
            }
            out.insert(x);
        }
    }
    Ok(out)
}

fn net(c: &Ctx<'_>) -> Result<Output, RunError> {
    c.run.allow(&["eps", "instances", "reach_cases", "b_minus", "b_plus"])?;
    let eps = c.run.f64("eps", Some(0.05))?;
    let instances = c.run.usize("instances", Some(40))?;
    let reach_cases = c.run.usize("reach_cases", Some(200))?;
    let bm = c.run.f64("b_minus", Some(-0.4))?;
    let bp = c.run.f64("b_plus", Some(0.5))?;
    let w = LatticeWindow::new(-8, 7, 0, 15)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, (_, p)) in c.cfg.flows()?.iter().enumerate() {
        for s in 0..instances {
            let net = sample_net_environment(p, w, eps, derive_seed(c.seed, &format!("net/{i}"), s as u64))?;
            let env = net.to_environment()?;
            for x in [-2i64, 0, 2] {
                let a = net_flow_kernel(&net.pair, &net.marks, x, 0, 6)?;
                let b = kernel_row(&env, x, 0, 6)?;
                for y in -8..=8 {
                    worst = worst.max((a.get(y) - b.get(y)).abs());
                }
            }
            count += 1;
        }
    }
    let mut out = Output::default();
    out.rows.push(
        Row::new("net.kernel_equivalence", json!({ "eps": eps, "instances": count }), worst).target(0.0, Gate::Abs(c.exact_tol)),
    );
    let w8 = LatticeWindow::new(-4, 3, 0, 7)?;
    let mut mismatches = 0u32;
    let mut cases = 0;
    for s in 0..reach_cases {
        let pair = sample_pair_field(bm, bp, w8, derive_seed(c.seed, "reach", s as u64))?;
        for (a, t) in [(vec![0i64], 3i64), (vec![-2, 0, 2], 1), (vec![0, 2], 1), (vec![-1, 1], 2)] {
            let t0 = a[0].rem_euclid(2);
            let fast: BTreeSet<i64> = reachable_set(&pair, &a, t0, t0 + t)?.positions.into_iter().collect();
            mismatches += u32::from(fast != brute_reach(&pair, &a, t0, t0 + t)?);
            cases += 1;
        }
    }
    out.rows.push(
        Row::new("net.reachable_set", json!({ "b_minus": bm, "b_plus": bp, "cases": cases }), f64::from(mismatches))
            .target(0.0, Gate::Abs(0.0)),
    );
    Ok(out)
}
