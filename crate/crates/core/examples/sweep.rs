//! Runs the five variants over several seeds and prints the per-seed metrics.
//!
//! `cargo run --release --example sweep -- [CONFIG|-] [SEEDS] [v]`

use quadrcac::config::ScenarioConfig;
use quadrcac::harness::{compare, Variant};
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base = match args.get(1) {
        Some(p) if p != "-" => ScenarioConfig::load(p.as_ref()).expect("config"),
        _ => ScenarioConfig::default(),
    };
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let tables: Vec<_> = (1..=seeds)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = base.clone();
            cfg.noise.seed = seed;
            compare(&cfg, &Variant::ALL, None).expect("compare")
        })
        .collect();
    let verbose = args.get(3).is_some();
    if verbose {
        println!("seed variant      j_r     j_w     bpr   drift  thmax  osc");
    }
    for t in tables.iter().filter(|_| verbose) {
        for r in &t.rows {
            match &r.metrics {
                Some(m) => println!(
                    "{:4} {:6} {:8.4} {:7.4} {:7.3} {:6.2} {:6.3} {}",
                    t.seed,
                    r.variant.as_str(),
                    m.j_r,
                    m.j_omega,
                    m.band_power_ratio,
                    m.drift_ratio(),
                    m.theta_max_norm,
                    m.oscillation_flag
                ),
                None => println!("{:4} {:6} failed: {}", t.seed, r.variant.as_str(), r.error.as_deref().unwrap_or("")),
            }
        }
    }
    println!("variant   j_r(mean)  j_w(mean)  bpr(min..max)   drift(min)  thmax(max)  osc  failed");
    for v in Variant::ALL {
        let ms: Vec<_> = tables.iter().filter_map(|t| t.metrics(v)).collect();
        let n = ms.len().max(1) as f64;
        let mean = |f: &dyn Fn(&quadrcac::MetricsReport) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
        let min = |f: &dyn Fn(&quadrcac::MetricsReport) -> f64| ms.iter().map(|m| f(m)).fold(f64::MAX, f64::min);
        let max = |f: &dyn Fn(&quadrcac::MetricsReport) -> f64| ms.iter().map(|m| f(m)).fold(f64::MIN, f64::max);
        println!(
            "{:6} {:9.4} {:9.4}  {:6.3}..{:6.3}  {:8.2}  {:9.3}  {:3}  {}",
            v.as_str(),
            mean(&|m| m.j_r),
            mean(&|m| m.j_omega),
            min(&|m| m.band_power_ratio),
            max(&|m| m.band_power_ratio),
            min(&|m| m.drift_ratio()),
            max(&|m| m.theta_max_norm),
            ms.iter().filter(|m| m.oscillation_flag).count(),
            tables.len() - ms.len()
        );
    }
    let mut m5 = f64::MAX;
    let mut m5j = f64::MAX;
    let mut m6 = f64::MAX;
    let mut m6s = f64::MAX;
    let mut c4 = 0;
    let mut c5 = 0;
    let mut c6 = 0;
    for t in &tables {
        let get = |v| t.metrics(v);
        let (Some(fx), Some(nd)) = (get(Variant::Fixed), get(Variant::None)) else { continue };
        if nd.oscillation_flag && nd.drift_ratio() >= 3.0 {
            c4 += 1;
        }
        let dz: Vec<_> = [Variant::N1, Variant::N2, Variant::N3].iter().filter_map(|v| get(*v)).collect();
        if dz.len() == 3
            && dz.iter().all(|m| {
                !m.oscillation_flag && m.j_omega <= 0.5 * nd.j_omega && m.band_power_ratio * 5.0 <= nd.band_power_ratio
            })
        {
            c5 += 1;
        }
        for m in &dz {
            m5 = m5.min((nd.band_power_ratio / 5.0).min(0.2) - m.band_power_ratio);
            m5j = m5j.min(0.5 * nd.j_omega - m.j_omega);
        }
        let jr: Vec<f64> = dz.iter().map(|m| m.j_r).collect();
        for j in jr.iter().chain([nd.j_r].iter()) {
            m6 = m6.min((fx.j_r - j) / fx.j_r);
        }
        let lo = jr.iter().cloned().fold(f64::MAX, f64::min);
        let hi = jr.iter().cloned().fold(0.0, f64::max);
        m6s = m6s.min(1.1 - jr.iter().cloned().fold(0.0, f64::max) / jr.iter().cloned().fold(f64::MAX, f64::min));
        if dz.len() == 3 && nd.j_r <= fx.j_r && jr.iter().all(|j| *j <= fx.j_r) && hi <= 1.1 * lo {
            c6 += 1;
        }
    }
    println!("criterion 4: {c4}/{seeds}  criterion 5: {c5}/{seeds}  criterion 6: {c6}/{seeds}");
    println!("margins: bpr {m5:.3}  j_w {m5j:.4}  j_r {m6:.3}  spread {m6s:.3}");
}
