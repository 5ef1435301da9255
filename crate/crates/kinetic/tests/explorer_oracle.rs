mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use kinetic_core::explorer::{check_partition, Classification, ExplorationResult, Explorer};
use kinetic_core::fixtures;
use kinetic_core::stl::{compile, parse, CompileConfig, CompiledStlNet, Formula};
use kinetic_core::{DeepBernNet, IntervalBox};

fn net() -> &'static DeepBernNet {
    static NET: OnceLock<DeepBernNet> = OnceLock::new();
    NET.get_or_init(|| fixtures::train_watertank_net().unwrap().0)
}

fn spec_for(f: &Formula, h: usize) -> CompiledStlNet {
    compile(f, &CompileConfig::new(h, fixtures::watertank_surrogate().state_domain.dims().to_vec())).unwrap()
}

fn recorded(r: &ExplorationResult) -> BTreeMap<Vec<usize>, Classification> {
    let mut m = BTreeMap::new();
    for (set, c) in [
        (&r.safe, Classification::Safe),
        (&r.unsafe_, Classification::Unsafe),
        (&r.uncertain, Classification::Uncertain),
        (&r.unreachable, Classification::Unreachable),
    ] {
        for p in set {
            assert!(m.insert(p.clone(), c).is_none(), "{p:?} recorded twice");
        }
    }
    m
}

/// Compares against the brute-force enumerator and validates decisive
/// prefixes by rollouts; returns the number of accepted rollouts.
fn check(f: &Formula, h: usize, x0: IntervalBox) -> (ExplorationResult, usize) {
    let prog = fixtures::watertank_program();
    let spec = spec_for(f, h);
    let ex = Explorer::new(net(), &spec, &prog, x0, h, 0.0).unwrap();
    let res = ex.explore().unwrap();
    assert!(check_partition(&res));
    assert_eq!(recorded(&res), common::brute_force(&ex), "H={h}");
    let decisive = res
        .safe
        .iter()
        .map(|p| (p, Classification::Safe))
        .chain(res.unsafe_.iter().map(|p| (p, Classification::Unsafe)));
    let mut accepted = 0;
    for (prefix, class) in decisive {
        let r = common::rollouts(&ex, f, prefix, class, 1000, 100_000, 11);
        assert_eq!(r.contradictions, 0, "{prefix:?} {class:?}");
        accepted += r.accepted;
    }
    (res, accepted)
}

#[test]
fn explorer_matches_brute_force_on_watertank() {
    let (res, _) = check(&fixtures::watertank_spec().truncated(4), 4, fixtures::watertank_x0());
    assert!(res.counters.visited < 4usize.pow(5));
}

#[test]
fn explorer_matches_brute_force_with_decisive_nodes() {
    let signals = vec!["TankHeight".to_string()];
    let narrow = IntervalBox::from_bounds(&[(4.0, 4.5)]).unwrap();
    let cases = [
        ("G[0,3](TankHeight <= 20)", fixtures::watertank_x0(), Classification::Safe),
        ("G[0,3](TankHeight >= -9)", narrow.clone(), Classification::Safe),
        ("G[0,3](TankHeight >= 40)", fixtures::watertank_x0(), Classification::Unsafe),
        ("F[0,3](TankHeight >= 9)", narrow, Classification::Uncertain),
    ];
    for (text, x0, expect) in cases {
        let f = parse(text, &signals).unwrap();
        let (res, accepted) = check(&f, 3, x0);
        match expect {
            Classification::Safe => assert!(!res.safe.is_empty() && accepted > 0, "{text}"),
            Classification::Unsafe => assert!(!res.unsafe_.is_empty() && accepted > 0, "{text}"),
            _ => assert!(res.safe.is_empty() && res.unsafe_.is_empty(), "{text}"),
        }
    }
}

#[test]
fn level_order_driver_matches_queue() {
    let prog = fixtures::watertank_program();
    let f = fixtures::watertank_spec().truncated(5);
    let spec = spec_for(&f, 5);
    let ex = Explorer::new(net(), &spec, &prog, fixtures::watertank_x0(), 5, 0.0).unwrap();
    let a = ex.explore().unwrap();
    let b = ex.explore_levels(|level| level.iter().map(|n| ex.process(n)).collect()).unwrap();
    assert_eq!(a, b);
    let c = kinetic::parallel::explore(&ex, 4).unwrap();
    assert_eq!(a, c);
}
