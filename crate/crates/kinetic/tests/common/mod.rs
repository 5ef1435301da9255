#![allow(dead_code)]

use std::collections::BTreeMap;

use kinetic_core::explorer::{Classification, Explorer};
use kinetic_core::progmodel::guard_intersect;
use kinetic_core::reach::{multi_step_reach, reach_net};
use kinetic_core::stl::{robustness, Formula, Trace};
use kinetic_core::IntervalBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn controls_for(ex: &Explorer, seq: &[usize], committed: usize) -> Vec<IntervalBox> {
    let hull = ex.table.hull().unwrap();
    (0..ex.horizon)
        .map(|t| {
            if t < committed {
                ex.table.get(seq[t]).unwrap().clone()
            } else {
                hull.clone()
            }
        })
        .collect()
}

fn class_from(lo: f64, hi: f64, ex: &Explorer) -> Classification {
    let rho_min = lo - ex.spec.err_hi;
    let rho_max = hi - ex.spec.err_lo;
    if rho_min > ex.eps_bar {
        Classification::Safe
    } else if rho_max < -ex.eps_bar {
        Classification::Unsafe
    } else {
        Classification::Uncertain
    }
}

/// Walks each of the `k^H` branch sequences from the root, stopping at the
/// first prefix that is Safe, Unsafe, Unreachable, or Uncertain without a
/// one-step successor, and records that prefix.
pub fn brute_force(ex: &Explorer) -> BTreeMap<Vec<usize>, Classification> {
    let paths: Vec<usize> = ex.table.paths().collect();
    let k = paths.len();
    let h = ex.horizon;
    let mut out = BTreeMap::new();
    for code in 0..k.pow(h as u32) {
        let mut seq = Vec::with_capacity(h);
        let mut c = code;
        for _ in 0..h {
            seq.push(paths[c % k]);
            c /= k;
        }
        seq.reverse();
        let mut states: Vec<IntervalBox> = Vec::new();
        let mut prev = ex.x0.clone();
        for l in 1..=h {
            let prefix = seq[..l].to_vec();
            let (ok, entry) = guard_intersect(&prev, &ex.program.paths[seq[l - 1]].guard).unwrap();
            if !ok {
                out.insert(prefix, Classification::Unreachable);
                break;
            }
            states.push(entry.clone());
            let controls = controls_for(ex, &seq, l);
            let class = match multi_step_reach(ex.net, &entry, &controls[l - 1..], h - l + 1) {
                Ok(r) => {
                    let mut trace = states[..l - 1].to_vec();
                    trace.extend(r.states);
                    match ex.spec.reach(&trace) {
                        Ok(iv) => class_from(iv.lo, iv.hi, ex),
                        Err(_) => Classification::Uncertain,
                    }
                }
                Err(_) => Classification::Uncertain,
            };
            if class != Classification::Uncertain || l == h {
                out.insert(prefix, class);
                break;
            }
            match reach_net(ex.net, &entry.concat(&controls[l - 1])) {
                Ok(next) => prev = next,
                Err(_) => {
                    out.insert(prefix, Classification::Uncertain);
                    break;
                }
            }
        }
    }
    out
}

pub struct RolloutCheck {
    pub accepted: usize,
    pub attempts: usize,
    pub contradictions: usize,
}

/// Samples trajectories of the net consistent with `prefix` (controls drawn
/// from the branch ranges, then from random branches) and counts those whose
/// exact robustness contradicts `class`.
pub fn rollouts(
    ex: &Explorer,
    formula: &Formula,
    prefix: &[usize],
    class: Classification,
    want: usize,
    max_attempts: usize,
    seed: u64,
) -> RolloutCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths: Vec<usize> = ex.table.paths().collect();
    let entry = guard_intersect(&ex.x0, &ex.program.paths[prefix[0]].guard).unwrap().1;
    let mut res = RolloutCheck {
        accepted: 0,
        attempts: 0,
        contradictions: 0,
    };
    'outer: while res.accepted < want && res.attempts < max_attempts {
        res.attempts += 1;
        let mut x = entry.sample(&mut rng);
        let mut xs = vec![x.clone()];
        for t in 0..ex.horizon {
            let p = match prefix.get(t) {
                Some(&p) => {
                    if !ex.program.paths[p].guard.holds(&x) {
                        continue 'outer;
                    }
                    p
                }
                None => paths[rng.random_range(0..paths.len())],
            };
            let mut input = x.clone();
            input.extend(ex.table.get(p).unwrap().sample(&mut rng));
            x = match ex.net.forward(&input) {
                Ok(y) => y,
                Err(_) => continue 'outer,
            };
            xs.push(x.clone());
        }
        res.accepted += 1;
        let rho = robustness(formula, &Trace::new(xs).unwrap(), 0).unwrap();
        let bad = match class {
            Classification::Safe => rho <= 0.0,
            Classification::Unsafe => rho >= 0.0,
            _ => false,
        };
        res.contradictions += usize::from(bad);
    }
    res
}
