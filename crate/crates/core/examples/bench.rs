use licfg::cfg::*;
use licfg::data::*;
fn main() {
    let epochs: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let kind = std::env::args().nth(2).unwrap();
    let seed: u64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(0);
    let grid = std::env::args().nth(4).is_some();
    let k = match kind.as_str() { "none" => PenaltyKind::None, "c1" => PenaltyKind::Centered1, "c0" => PenaltyKind::Centered0, e => PenaltyKind::CenteredEps{eps_norm: e.parse().unwrap()} };
    let cfg = TrainConfig { epochs, seed, penalty: Penalty{kind: k, gamma: if kind=="none" {0.0} else {0.1}}, ..Default::default() };
    let m = if grid { grid_mixture() } else { ring_mixture() };
    let t = std::time::Instant::now();
    let r = train(&cfg, &m);
    match r {
        Ok(run) => {
            let z = sample_latent(2000, 2, 99);
            let x = run.generator.forward(&z).unwrap();
            let mut hit = vec![0usize; m.len()]; let mut hq=0;
            for row in x.iter_rows().take(2000) { for (i,c) in m.centers().iter().enumerate() { if ((row[0]-c[0]).powi(2)+(row[1]-c[1]).powi(2)).sqrt() < 0.06 { hit[i]+=1; hq+=1; } } }
            let last = run.log.records.last().unwrap();
            println!("{kind} seed {seed}: modes {} hq {:.3} dloss {:.3} gn {:.3} time {:.1}s", hit.iter().filter(|&&h| h>0).count(), hq as f64/2000.0, last.d_loss, last.grad_norm_mean, t.elapsed().as_secs_f64());
        }
        Err(e) => println!("{kind} seed {seed}: {e} time {:.1}s", t.elapsed().as_secs_f64()),
    }
}
