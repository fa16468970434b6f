//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use mlcvqkd::features::{FeatureVector, LabeledSample};
use mlcvqkd::statespace::{Label, LabelSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force ML-kNN with Laplace smoothing (`s = 1`, `t = 1`) in exact
/// integer arithmetic. Features must be integer valued.
pub struct CountingOracle {
    pub k: usize,
    pub points: Vec<Vec<i64>>,
    pub labels: Vec<LabelSet>,
    pub with_label: Vec<Vec<u64>>,
    pub without_label: Vec<Vec<u64>>,
}

/// Exact posterior ratio `num / den` and the labels it selects.
pub struct OracleDecision {
    pub counts: [usize; 4],
    pub ratio_num: [u128; 4],
    pub ratio_den: [u128; 4],
    pub labels: LabelSet,
}

fn dist2(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl CountingOracle {
    fn neighbours(&self, x: &[i64], exclude: Option<usize>) -> Vec<usize> {
        let mut all: Vec<(i64, usize)> = (0..self.points.len())
            .filter(|&i| Some(i) != exclude)
            .map(|i| (dist2(x, &self.points[i]), i))
            .collect();
        all.sort();
        all.truncate(self.k);
        all.into_iter().map(|(_, i)| i).collect()
    }

    pub fn fit(points: Vec<Vec<i64>>, labels: Vec<LabelSet>, k: usize) -> Self {
        let mut o = CountingOracle {
            k,
            points,
            labels,
            with_label: vec![vec![0; k + 1]; 4],
            without_label: vec![vec![0; k + 1]; 4],
        };
        for i in 0..o.points.len() {
            let nb = o.neighbours(&o.points[i].clone(), Some(i));
            for l in Label::ALL {
                let c = nb.iter().filter(|&&n| o.labels[n].contains(l)).count();
                if o.labels[i].contains(l) {
                    o.with_label[l.index()][c] += 1;
                } else {
                    o.without_label[l.index()][c] += 1;
                }
            }
        }
        o
    }

    pub fn prior(&self, l: Label) -> (u128, u128) {
        let m = self.points.len() as u128;
        let count = self.labels.iter().filter(|s| s.contains(l)).count() as u128;
        (1 + count, 2 + m)
    }

    pub fn conditional(&self, l: Label, with: bool, c: usize) -> (u128, u128) {
        let row = if with {
            &self.with_label[l.index()]
        } else {
            &self.without_label[l.index()]
        };
        let total: u64 = row.iter().sum();
        (1 + row[c] as u128, (self.k as u128 + 1) + total as u128)
    }

    pub fn decide(&self, x: &[i64]) -> OracleDecision {
        let nb = self.neighbours(x, None);
        let mut d = OracleDecision {
            counts: [0; 4],
            ratio_num: [0; 4],
            ratio_den: [0; 4],
            labels: LabelSet::EMPTY,
        };
        for l in Label::ALL {
            let j = l.index();
            let c = nb.iter().filter(|&&n| self.labels[n].contains(l)).count();
            let (a, big_d) = self.prior(l);
            let (b, e) = self.conditional(l, true, c);
            let (b2, e2) = self.conditional(l, false, c);
            d.counts[j] = c;
            d.ratio_num[j] = a * b * e2;
            d.ratio_den[j] = (big_d - a) * b2 * e;
            if d.ratio_num[j] > d.ratio_den[j] {
                d.labels.insert(l);
            }
        }
        d
    }
}

pub fn to_features(x: &[i64]) -> FeatureVector {
    FeatureVector::new(x.iter().map(|&v| v as f64).collect()).unwrap()
}

/// Random integer-valued multi-label fixture.
pub struct Fixture {
    pub k: usize,
    pub points: Vec<Vec<i64>>,
    pub labels: Vec<LabelSet>,
    pub queries: Vec<Vec<i64>>,
}

impl Fixture {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=5);
        let m = rng.random_range(k + 1..=50);
        let width = rng.random_range(1..=4);
        let span = rng.random_range(2..=8);
        let point = |rng: &mut ChaCha8Rng| {
            (0..width)
                .map(|_| rng.random_range(0..span))
                .collect::<Vec<i64>>()
        };
        let points: Vec<Vec<i64>> = (0..m).map(|_| point(&mut rng)).collect();
        let labels = (0..m)
            .map(|_| LabelSet::from_flags(std::array::from_fn(|_| rng.random_bool(0.4))))
            .collect();
        let queries = (0..10).map(|_| point(&mut rng)).collect();
        Fixture {
            k,
            points,
            labels,
            queries,
        }
    }

    pub fn samples(&self) -> Vec<LabeledSample> {
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(p, &labels)| LabeledSample {
                features: to_features(p),
                labels,
                true_state: 1,
            })
            .collect()
    }
}

/// Probability that a random positive outscores a random negative, ties 1/2.
pub fn mann_whitney(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(truth)
        .filter(|(_, &t)| !t)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Compares an `f64` with an exact fraction.
pub fn close_to_fraction(x: f64, num: u128, den: u128, rel: f64) -> bool {
    let exact = num as f64 / den as f64;
    (x - exact).abs() <= rel * exact.abs().max(f64::MIN_POSITIVE)
}
