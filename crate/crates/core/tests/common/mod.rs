#![allow(dead_code)]

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use turnover::crosssection::combined_loss;
use turnover::exitgrid::RegimeModel;
use turnover::marketdata::{DailyBar, InstrumentId, Panel, Sector, Status};

pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn d0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 6).unwrap()
}

pub fn bar(id: &str, date: NaiveDate, open: f64, high: f64, low: f64, close: f64, volume: f64) -> DailyBar {
    DailyBar {
        instrument_id: InstrumentId::new(id),
        date,
        open,
        high,
        low,
        close,
        volume,
        turnover: volume * close,
        market_cap: 1e10,
        sector: Sector::ALL[0],
        status: if volume == 0.0 { Status::Suspended } else { Status::Normal },
    }
}

/// One instrument following the given (open, high, low, close) path.
pub fn path_panel(id: &str, ohlc: &[(f64, f64, f64, f64)], volume: f64) -> Panel {
    let dates = weekdays(d0(), ohlc.len());
    let bars = ohlc.iter().zip(&dates).map(|(&(o, h, l, c), &d)| bar(id, d, o, h, l, c, volume)).collect();
    Panel::with_calendar(dates, bars).unwrap()
}

/// Flat bars at `price` for `n` days, then the given closes as flat bars.
pub fn flat_bars(id: &str, dates: &[NaiveDate], price: f64, volume: f64) -> Vec<DailyBar> {
    dates.iter().map(|&d| bar(id, d, price, price, price, price, volume)).collect()
}

/// Dense QP oracle for the sizing projection: min Σ(w − t)² under the same
/// constraints, solved by an active-set method. `None` when infeasible.
pub fn qp_projection(
    raw: &[f64],
    sectors: &[usize],
    large: &[bool],
    cs: &turnover::sizing::ConstraintSet,
) -> Option<Vec<f64>> {
    let n = raw.len();
    let sum: f64 = raw.iter().sum();
    let t: Vec<f64> = raw.iter().map(|w| w / sum * cs.budget).collect();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 2.0;
    }
    let c: Vec<f64> = t.iter().map(|v| -2.0 * v).collect();
    let mut a: Vec<f64> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let row = |coef: Vec<f64>, rhs: f64, a: &mut Vec<f64>, b: &mut Vec<f64>| {
        a.extend(coef);
        b.push(rhs);
    };
    row(vec![1.0; n], cs.budget, &mut a, &mut b);
    let mut meq = 1;
    for i in 0..n {
        if raw[i] <= 0.0 {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            row(e, 0.0, &mut a, &mut b);
            meq += 1;
        }
    }
    for i in 0..n {
        if raw[i] > 0.0 {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            row(e.clone(), cs.w_max, &mut a, &mut b);
            e[i] = -1.0;
            row(e, -cs.w_min, &mut a, &mut b);
        }
    }
    let n_sectors = sectors.iter().max().map_or(0, |m| m + 1);
    for s in 0..n_sectors {
        let e: Vec<f64> = (0..n).map(|i| if sectors[i] == s { 1.0 } else { 0.0 }).collect();
        row(e, cs.sector_cap, &mut a, &mut b);
    }
    let e: Vec<f64> = (0..n).map(|i| if large[i] { 1.0 } else { 0.0 }).collect();
    row(e.clone(), cs.largecap_max, &mut a, &mut b);
    row(e.iter().map(|v| -v).collect(), -cs.largecap_min, &mut a, &mut b);
    quadprog::solve_qp(&mut q, &c, &a, &b, meq, false).ok().map(|s| s.sol)
}

pub fn sample_mixture(n: usize, seed: u64, w: [f64; 3], mu: [f64; 3], sd: [f64; 3]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let k = if u < w[0] { 0 } else if u < w[0] + w[1] { 1 } else { 2 };
            Normal::new(mu[k], sd[k]).unwrap().sample(&mut rng)
        })
        .collect()
}

/// Plain EM on densities, no penalty, no floors.
pub fn textbook_em(xs: &[f64], init: ([f64; 3], [f64; 3], [f64; 3]), iters: usize) -> Vec<f64> {
    let (mut w, mut mu, mut sd) = init;
    let pdf = |x: f64, m: f64, s: f64| (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let nll = |w: &[f64; 3], mu: &[f64; 3], sd: &[f64; 3]| -> f64 {
        -xs.iter().map(|&x| (0..3).map(|k| w[k] * pdf(x, mu[k], sd[k])).sum::<f64>().ln()).sum::<f64>()
    };
    let mut trace = vec![nll(&w, &mu, &sd)];
    for _ in 0..iters {
        let resp: Vec<[f64; 3]> = xs
            .iter()
            .map(|&x| {
                let p = [w[0] * pdf(x, mu[0], sd[0]), w[1] * pdf(x, mu[1], sd[1]), w[2] * pdf(x, mu[2], sd[2])];
                let s = p[0] + p[1] + p[2];
                [p[0] / s, p[1] / s, p[2] / s]
            })
            .collect();
        for k in 0..3 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            w[k] = nk / xs.len() as f64;
            mu[k] = resp.iter().zip(xs).map(|(r, x)| r[k] * x).sum::<f64>() / nk;
            sd[k] = (resp.iter().zip(xs).map(|(r, x)| r[k] * (x - mu[k]).powi(2)).sum::<f64>() / nk).sqrt();
        }
        trace.push(nll(&w, &mu, &sd));
    }
    trace
}

pub fn simulate_garch(omega: f64, alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let r = v.sqrt() * z;
        out.push(r);
        v = omega + alpha * r * r + beta * v;
    }
    out
}

pub fn fd_check(scores: &[f64], returns: &[f64], alpha: f64) -> f64 {
    let (_, g) = combined_loss(scores, returns, alpha).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..scores.len() {
        let mut a = scores.to_vec();
        let mut b = scores.to_vec();
        a[i] += h;
        b[i] -= h;
        let fd = (combined_loss(&a, returns, alpha).unwrap().0 - combined_loss(&b, returns, alpha).unwrap().0) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
        worst = worst.max(rel);
    }
    worst
}

pub fn random_model(rng: &mut ChaCha8Rng) -> RegimeModel<f64> {
    let simplex = |rng: &mut ChaCha8Rng| {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
        let s: f64 = v.iter().sum();
        v.map(|x| x / s)
    };
    RegimeModel {
        initial: simplex(rng),
        transition: [simplex(rng), simplex(rng), simplex(rng)],
        means: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        stdevs: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
    }
}

pub fn path_log_prob(m: &RegimeModel<f64>, obs: &[f64], path: &[usize]) -> f64 {
    let lpdf = |x: f64, k: usize| {
        let z = (x - m.means[k]) / m.stdevs[k];
        -0.5 * z * z - m.stdevs[k].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    let mut lp = m.initial[path[0]].ln() + lpdf(obs[0], path[0]);
    for t in 1..obs.len() {
        lp += m.transition[path[t - 1]][path[t]].ln() + lpdf(obs[t], path[t]);
    }
    lp
}

pub fn simulate_hmm(m: &RegimeModel<f64>, n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |p: &[f64; 3], rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return k;
            }
        }
        2
    };
    let mut s = draw(&m.initial, &mut rng);
    let mut obs = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        obs.push(Normal::new(m.means[s], m.stdevs[s]).unwrap().sample(&mut rng));
        states.push(s);
        s = draw(&m.transition[s], &mut rng);
    }
    (obs, states)
}
