use licfg::cfg::*;
use licfg::data::*;
use licfg::metrics::*;
fn main() {
    let a: Vec<String> = std::env::args().collect();
    let epochs: usize = a[1].parse().unwrap();
    let kind = a[2].as_str();
    let seed: u64 = a[3].parse().unwrap();
    let grid = a.get(4).map(|s| s == "grid").unwrap_or(false);
    let mut cfg = TrainConfig { epochs, seed, ..Default::default() };
    for kv in a.iter().skip(5) {
        let (k, v) = kv.split_once('=').unwrap();
        match k { "eta_m" => cfg.eta_m = v.parse().unwrap(), "lr" => cfg.lr = v.parse().unwrap(),
                  "delta" => cfg.delta = v.parse().unwrap(), "gamma" => cfg.penalty.gamma = v.parse().unwrap(),
                  "reg" => cfg.regression_steps = v.parse().unwrap(), "u" => cfg.d_updates = v.parse().unwrap(), _ => panic!() }
    }
    let gamma = cfg.penalty.gamma;
    cfg.penalty = match kind { "none" => Penalty::none(), "c1" => Penalty{kind: PenaltyKind::Centered1, gamma}, "c0" => Penalty{kind: PenaltyKind::Centered0, gamma}, e => Penalty{kind: PenaltyKind::CenteredEps{eps_norm: e.parse().unwrap()}, gamma} };
    let m = if grid { grid_mixture() } else { ring_mixture() };
    let mut t = Trainer::new(cfg.clone(), m.clone()).unwrap();
    let start = std::time::Instant::now();
    for e in 1..=epochs {
        let r = match t.run_epoch() { Ok((r, _)) => r, Err(err) => { println!("{kind} seed {seed}: {err}"); return; } };
        if e % (epochs / 8).max(1) == 0 || e == epochs {
            let x = t.generate(2000).unwrap();
            let (hit, hq) = mode_coverage(&x, &m, 3.0, 10).unwrap();
            let (_, hq5) = mode_coverage(&x, &m, 10.0, 10).unwrap();
            let (_, hq25) = mode_coverage(&x, &m, 25.0, 10).unwrap();
            println!("{kind} s{seed} e{e}: modes {hit} hq3 {hq:.3} hq10 {hq5:.3} hq25 {hq25:.3} d {:.3} pen {:.4} gn {:.3} g {:.4} t {:.0}s", r.d_loss, r.penalty, r.grad_norm_mean, r.g_loss, start.elapsed().as_secs_f64());
        }
    }
}
