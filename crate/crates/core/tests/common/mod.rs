#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tradewar_core::{EconomyData, Sector};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

/// Random positive flows, optional services and IO, random goods tariffs.
pub fn random_economy(rng: &mut Rng, countries: usize, sectors: usize, services: bool, io: bool) -> EconomyData {
    let ids = (0..countries).map(|i| format!("C{}", i + 1)).collect();
    let secs = (0..sectors)
        .map(|s| {
            let sigma = rng.range(2.0, 8.0);
            if services && s + 1 == sectors {
                Sector::service(format!("S{}", s + 1), sigma)
            } else {
                Sector::goods(format!("G{}", s + 1), sigma)
            }
        })
        .collect();
    let mut data = EconomyData::empty(ids, secs);
    let d = data.dims();
    for i in 0..countries {
        for j in 0..countries {
            for s in 0..sectors {
                data.set_flow(i, j, s, rng.range(5.0, 10.0));
                if i != j && !data.sectors[s].is_service {
                    data.tariffs.set(i, j, s, 1.0 + rng.range(0.0, 0.2));
                }
            }
        }
    }
    if io {
        for j in 0..countries {
            for s in 0..sectors {
                let sales = data.sales(j, s);
                for k in 0..sectors {
                    data.io_usage[d.io(j, s, k)] = rng.range(0.0, 0.4) * sales / sectors as f64;
                }
            }
        }
    }
    data.gdp = vec![100.0; countries];
    data
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if y.abs() > 1e-12 { (x - y).abs() / y.abs() } else { (x - y).abs() })
        .fold(0.0, f64::max)
}
