use kinetic_core::stl::{compile, parse, robustness, satisfies, CompileConfig, Formula, Trace};
use kinetic_core::{Interval, IntervalBox};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Robustness by the textbook definitions, with Until as the full double
/// max/min over `t' ∈ [lo, hi]`, `τ ∈ [0, t']`.
fn brute(f: &Formula, xs: &[Vec<f64>], t: usize) -> f64 {
    match f {
        Formula::Pred { w, b } => w.iter().zip(&xs[t]).map(|(a, x)| a * x).fold(*b, |s, v| s + v),
        Formula::Not(g) => -brute(g, xs, t),
        Formula::And(a, b) => brute(a, xs, t).min(brute(b, xs, t)),
        Formula::Or(a, b) => brute(a, xs, t).max(brute(b, xs, t)),
        Formula::Globally { lo, hi, f } => {
            let mut m = f64::INFINITY;
            for s in *lo..=*hi {
                m = m.min(brute(f, xs, t + s));
            }
            m
        }
        Formula::Finally { lo, hi, f } => {
            let mut m = f64::NEG_INFINITY;
            for s in *lo..=*hi {
                m = m.max(brute(f, xs, t + s));
            }
            m
        }
        Formula::Until { lo, hi, lhs, rhs } => {
            let mut best = f64::NEG_INFINITY;
            for tp in *lo..=*hi {
                let mut m = brute(rhs, xs, t + tp);
                for tau in 0..=tp {
                    m = m.min(brute(lhs, xs, t + tau));
                }
                best = best.max(m);
            }
            best
        }
    }
}

fn leaf() -> impl Strategy<Value = Formula> {
    (prop::collection::vec(-2.0..2.0f64, 2), -2.0..2.0f64).prop_map(|(w, b)| Formula::pred(w, b))
}

fn window() -> impl Strategy<Value = (usize, usize)> {
    (0usize..3, 0usize..3).prop_map(|(lo, len)| (lo, lo + len))
}

fn formula() -> impl Strategy<Value = Formula> {
    leaf()
        .prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (window(), inner.clone()).prop_map(|((lo, hi), f)| Formula::globally(lo, hi, f)),
                (window(), inner.clone()).prop_map(|((lo, hi), f)| Formula::finally(lo, hi, f)),
                (window(), inner.clone(), inner).prop_map(|((lo, hi), a, b)| Formula::until(lo, hi, a, b)),
            ]
        })
        .prop_filter("fits a 6-state trace", |f| f.needed_steps() <= 5)
}

fn trace(len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), len)
}

fn case() -> impl Strategy<Value = (Formula, Vec<Vec<f64>>)> {
    formula().prop_flat_map(|f| {
        let n = f.needed_steps() + 1;
        (Just(f), (n..=6).prop_flat_map(trace))
    })
}

fn signals() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

proptest! {
    #[test]
    fn robustness_matches_brute_force((f, xs) in case()) {
        let tr = Trace::new(xs.clone()).unwrap();
        let slack = tr.horizon() - f.needed_steps();
        for t in 0..=slack {
            prop_assert_eq!(robustness(&f, &tr, t).unwrap(), brute(&f, &xs, t));
        }
    }

    #[test]
    fn sign_of_robustness_decides_satisfaction((f, xs) in case()) {
        let tr = Trace::new(xs).unwrap();
        let r = robustness(&f, &tr, 0).unwrap();
        let s = satisfies(&f, &tr, 0).unwrap();
        if r > 0.0 {
            prop_assert!(s);
        }
        if r < 0.0 {
            prop_assert!(!s);
        }
    }

    #[test]
    fn finally_globally_duality((f, xs) in case(), (lo, hi) in window()) {
        let g = Formula::globally(lo, hi, Formula::not(f.clone()));
        let fin = Formula::finally(lo, hi, f.clone());
        prop_assume!(fin.needed_steps() < xs.len());
        let tr = Trace::new(xs).unwrap();
        prop_assert_eq!(robustness(&fin, &tr, 0).unwrap(), -robustness(&g, &tr, 0).unwrap());
        let and = Formula::and(f.clone(), Formula::not(f.clone()));
        let or = Formula::not(Formula::or(Formula::not(f.clone()), f));
        prop_assert_eq!(robustness(&and, &tr, 0).unwrap(), robustness(&or, &tr, 0).unwrap());
    }

    #[test]
    fn text_round_trips(f in formula()) {
        prop_assert_eq!(parse(&f.to_text(&signals()), &signals()).unwrap(), f);
    }

    #[test]
    fn compiled_error_is_certified((f, xs) in case(), n in prop::sample::select(vec![8usize, 32, 64])) {
        let h = xs.len() - 1;
        let mut cfg = CompileConfig::new(h, vec![Interval::new(-3.0, 3.0).unwrap(); 2]);
        cfg.degree = n;
        let c = compile(&f, &cfg).unwrap();
        let tr = Trace::new(xs).unwrap();
        let diff = c.eval(&tr).unwrap() - robustness(&f, &tr, 0).unwrap();
        prop_assert!(diff >= c.err_lo && diff <= c.err_hi, "{diff} not in [{}, {}]", c.err_lo, c.err_hi);
        prop_assert!(diff.abs() <= c.nested_bound() + 1e-9);
    }

    #[test]
    fn compiled_reach_contains_evaluations((f, xs) in case()) {
        let h = xs.len() - 1;
        let c = compile(&f, &CompileConfig::new(h, vec![Interval::new(-3.0, 3.0).unwrap(); 2])).unwrap();
        let boxes: Vec<IntervalBox> = xs
            .iter()
            .map(|x| IntervalBox::new(x.iter().map(|v| Interval::new((v - 0.2).max(-3.0), (v + 0.2).min(3.0)).unwrap()).collect()))
            .collect();
        let r = c.reach(&boxes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(h as u64);
        for _ in 0..50 {
            let tr = Trace::new(boxes.iter().map(|b| b.sample(&mut rng)).collect()).unwrap();
            let v = c.eval(&tr).unwrap();
            prop_assert!(r.lo <= v && v <= r.hi, "{v} outside {r:?}");
        }
    }
}

#[test]
fn watertank_spec_on_rising_trace() {
    let f = parse("G[0,2](TankHeight <= 8)", &["TankHeight".to_string()]).unwrap();
    let tr = Trace::new(vec![vec![5.0], vec![6.0], vec![7.0]]).unwrap();
    assert_eq!(robustness(&f, &tr, 0).unwrap(), 1.0);
}

#[test]
fn short_traces_are_rejected() {
    let f = Formula::globally(0, 3, Formula::pred(vec![1.0], 0.0));
    let tr = Trace::new(vec![vec![0.0]; 3]).unwrap();
    assert!(robustness(&f, &tr, 0).is_err());
    assert!(robustness(&f, &Trace::new(vec![vec![0.0]; 4]).unwrap(), 1).is_err());
}
