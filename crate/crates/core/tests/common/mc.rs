//! Monte Carlo estimates for the DDoS model, sampled forward from the
//! stated distributions with no discretization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Uniform};

pub const DEFENCES: [f64; 5] = [0.0, 2.0, 5.0, 10.0, 100.0];
pub const SEED: u64 = 0x5eed_dd05;

fn defence_cost(d: f64) -> f64 {
    match d as i64 {
        0 => 0.0,
        2 => 2400.0,
        5 => 3600.0,
        10 => 4800.0,
        100 => 12000.0,
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub defender: Estimate,
    pub attacker: Estimate,
}

struct Acc {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Acc {
    fn new() -> Self {
        Acc { n: 0.0, sum: 0.0, sq: 0.0 }
    }
    fn add(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sq += x * x;
    }
    fn estimate(&self) -> Estimate {
        let mean = self.sum / self.n;
        let var = (self.sq / self.n - mean * mean).max(0.0) * self.n / (self.n - 1.0);
        Estimate {
            mean,
            se: (var / self.n).sqrt(),
        }
    }
}

/// Estimates both utilities with D = `d` and A = `a` fixed.
pub fn cell(d: f64, a: u64, samples: usize, seed: u64) -> Cell {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((d as u64) << 32) ^ a);
    let ua = Uniform::new(4.8, 5.6).unwrap();
    let ub = Uniform::new(0.8, 1.2).unwrap();
    let ua1 = Uniform::new(3.6, 4.8).unwrap();
    let ulr = Uniform::new(0.00521, 0.00833).unwrap();
    let lbd = Normal::new(2_430_000.0, 400_000f64.sqrt()).unwrap();
    let doa = Binomial::new(a, 0.002).unwrap();
    let sv: f64 = 1_500_000.0;
    let (mut du, mut au) = (Acc::new(), Acc::new());
    for _ in 0..samples {
        let al = Gamma::new(ua.sample(&mut rng), ub.sample(&mut rng)).unwrap().sample(&mut rng);
        let success = ((al - d).max(0.0) / (d + 1.0e-4)).min(1.0);
        let at = if a == 0 || success <= 0.0 {
            0
        } else if success >= 1.0 {
            a
        } else {
            Binomial::new(a, success).unwrap().sample(&mut rng)
        };
        let detected = doa.sample(&mut rng) > 0;
        let elbd = if detected { lbd.sample(&mut rng) } else { 0.0 };
        let aah = Gamma::new(ua1.sample(&mut rng), ub.sample(&mut rng)).unwrap().sample(&mut rng);
        let dod = aah * at as f64;
        let lr = ulr.sample(&mut rng);
        let ism = sv.min(dod * lr * sv);
        du.add(-ism - defence_cost(d));
        au.add(ism - elbd - 792.0 * a as f64);
    }
    Cell {
        defender: du.estimate(),
        attacker: au.estimate(),
    }
}
