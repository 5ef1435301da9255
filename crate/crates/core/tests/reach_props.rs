use kinetic_core::deepbern::{Activation, AffineLayer, Layer};
use kinetic_core::reach::{multi_step_reach, propagate_affine, reach_net, tightness};
use kinetic_core::{BernsteinPoly, DeepBernNet, Interval, IntervalBox};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random net on `[-1, 1]^d_in` whose hidden activation domains cover the
/// pre-activations reachable from the input domain.
fn random_net(seed: u64, d_in: usize, hidden: &[usize], d_out: usize, degree: usize) -> DeepBernNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = vec![Interval::new(-1.0, 1.0).unwrap(); d_in];
    let mut bx = IntervalBox::new(domain.clone());
    let mut layers = Vec::new();
    let mut prev = d_in;
    for (i, &w) in hidden.iter().chain([d_out].iter()).enumerate() {
        let weights = (0..prev * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..w).map(|_| rng.random_range(-0.5..0.5)).collect();
        let affine = AffineLayer::new(prev, w, weights, bias).unwrap();
        let z = propagate_affine(&affine, &bx).unwrap();
        let activation = if i == hidden.len() {
            Activation::Identity
        } else {
            Activation::Bernstein(
                z.dims()
                    .iter()
                    .map(|iv| {
                        let d = iv.inflate(1.1, 1e-3);
                        let c = (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect();
                        BernsteinPoly::new(d, c).unwrap()
                    })
                    .collect(),
            )
        };
        let next = match &activation {
            Activation::Identity => z,
            Activation::Bernstein(p) => IntervalBox::new(p.iter().map(|p| p.enclosure()).collect()),
        };
        layers.push(Layer { affine, activation });
        bx = next;
        prev = w;
    }
    DeepBernNet::new(domain, layers, 0.0, 1.0).unwrap()
}

fn sub_box(rng: &mut ChaCha8Rng, outer: &IntervalBox) -> IntervalBox {
    IntervalBox::new(
        outer
            .dims()
            .iter()
            .map(|d| {
                let a = rng.random_range(d.lo..d.hi);
                let b = rng.random_range(d.lo..d.hi);
                Interval::new(a.min(b), a.max(b)).unwrap()
            })
            .collect(),
    )
}

fn inside(outer: &IntervalBox, inner: &IntervalBox, tol: f64) -> bool {
    outer
        .dims()
        .iter()
        .zip(inner.dims())
        .all(|(o, i)| i.lo >= o.lo - tol && i.hi <= o.hi + tol)
}

fn arch() -> impl Strategy<Value = (u64, usize, Vec<usize>, usize, usize)> {
    (
        any::<u64>(),
        1usize..4,
        prop::collection::vec(1usize..6, 1..3),
        1usize..3,
        1usize..6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reach_contains_sampled_forwards((seed, d_in, hidden, d_out, deg) in arch()) {
        let net = random_net(seed, d_in, &hidden, d_out, deg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..4 {
            let b = sub_box(&mut rng, &net.input_box());
            let r = reach_net(&net, &b).unwrap();
            for _ in 0..200 {
                let y = net.forward(&b.sample(&mut rng)).unwrap();
                prop_assert!(r.contains_point(&y), "{y:?} outside {r:?}");
            }
        }
    }

    #[test]
    fn reach_is_isotone((seed, d_in, hidden, d_out, deg) in arch()) {
        let net = random_net(seed, d_in, &hidden, d_out, deg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for _ in 0..8 {
            let outer = sub_box(&mut rng, &net.input_box());
            let inner = sub_box(&mut rng, &outer);
            let ro = reach_net(&net, &outer).unwrap();
            let ri = reach_net(&net, &inner).unwrap();
            prop_assert!(inside(&ro, &ri, 1e-9), "{ri:?} not in {ro:?}");
        }
    }

    #[test]
    fn point_box_reach_contains_forward((seed, d_in, hidden, d_out, deg) in arch()) {
        let net = random_net(seed, d_in, &hidden, d_out, deg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let x = net.input_box().sample(&mut rng);
        let r = reach_net(&net, &IntervalBox::point(&x)).unwrap();
        let y = net.forward(&x).unwrap();
        prop_assert!(r.contains_point(&y));
        for d in r.dims() {
            prop_assert!(d.width() <= 1e-9 * (1.0 + d.lo.abs()));
        }
    }

    #[test]
    fn multi_step_reach_contains_rollouts(seed in any::<u64>(), deg in 1usize..4) {
        // One state, one control, contracting so the state stays in [-1, 1].
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = BernsteinPoly::new(
            Interval::new(-1.0, 1.0).unwrap(),
            (0..=deg).map(|_| rng.random_range(-0.4..0.4)).collect(),
        )
        .unwrap();
        let l1 = AffineLayer::new(2, 1, vec![0.6, 0.4], vec![0.0]).unwrap();
        let l2 = AffineLayer::new(1, 1, vec![1.0], vec![0.0]).unwrap();
        let net = DeepBernNet::new(
            vec![Interval::new(-1.0, 1.0).unwrap(); 2],
            vec![
                Layer { affine: l1, activation: Activation::Bernstein(vec![p]) },
                Layer { affine: l2, activation: Activation::Identity },
            ],
            0.0,
            1.0,
        )
        .unwrap();
        let x0 = IntervalBox::new(vec![Interval::new(-0.3, 0.2).unwrap()]);
        let controls: Vec<IntervalBox> = (0..5).map(|_| sub_box(&mut rng, &IntervalBox::new(vec![Interval::new(-1.0, 1.0).unwrap()]))).collect();
        let r = multi_step_reach(&net, &x0, &controls, 5).unwrap();
        prop_assert_eq!(r.states.len(), 6);
        for _ in 0..200 {
            let mut x = x0.sample(&mut rng);
            for (t, u) in controls.iter().enumerate() {
                let mut input = x.clone();
                input.extend(u.sample(&mut rng));
                x = net.forward(&input).unwrap();
                prop_assert!(r.states[t + 1].contains_point(&x), "step {t}");
            }
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences((seed, d_in, hidden, d_out, deg) in arch()) {
        let net = random_net(seed, d_in, &hidden, d_out, deg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let inputs: Vec<Vec<f64>> = (0..5).map(|_| net.input_box().sample(&mut rng)).collect();
        let targets: Vec<Vec<f64>> = (0..5).map(|_| (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (_, grad) = net.loss_and_gradient(&inputs, &targets).unwrap();
        let params = net.params();
        prop_assert_eq!(grad.len(), params.len());
        let h = 1e-6;
        for i in (0..params.len()).step_by(1 + params.len() / 25) {
            let mut plus = net.clone();
            let mut p = params.clone();
            p[i] += h;
            plus.set_params(&p).unwrap();
            let mut minus = net.clone();
            p[i] -= 2.0 * h;
            minus.set_params(&p).unwrap();
            let fd = (plus.loss_and_gradient(&inputs, &targets).unwrap().0
                - minus.loss_and_gradient(&inputs, &targets).unwrap().0)
                / (2.0 * h);
            prop_assert!((grad[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "param {i}: {} vs {fd}", grad[i]);
        }
    }
}

#[test]
fn escaping_boxes_are_errors() {
    let net = random_net(9, 2, &[3], 1, 3);
    let wide = IntervalBox::new(vec![Interval::new(-2.0, 1.0).unwrap(), Interval::new(-1.0, 1.0).unwrap()]);
    assert!(reach_net(&net, &wide).is_err());
}

#[test]
fn tightness_inverts_the_reported_percentage() {
    assert!((tightness(74.9016, 17.68).unwrap() - 323.59).abs() < 0.5);
    assert!(tightness(1.0, 0.0).is_err());
}
