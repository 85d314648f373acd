use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qrlab::collimation::{is_eps_located, is_eps_sharp, is_strictly_eps_sharp};
use qrlab::interval::Interval;
use qrlab::operator::{ComplexMatrix, HermitianOperator};
use qrlab::qr::{qr_add, qr_mul, rational_approximation, Budget, QrNumber};
use qrlab::state::{
    conditions_intersect, perturb_nonzero, random_state, sample_states, trace_distance, Ball, Condition,
    DensityState,
};

fn hermitian(dim: usize, entries: &[f64]) -> HermitianOperator {
    let mut re = vec![vec![0.0; dim]; dim];
    let mut im = vec![vec![0.0; dim]; dim];
    let mut k = 0;
    let mut next = || {
        k += 1;
        entries[(k - 1) % entries.len()]
    };
    for r in 0..dim {
        re[r][r] = next();
        for c in r + 1..dim {
            re[r][c] = next();
            re[c][r] = re[r][c];
            im[r][c] = next();
            im[c][r] = -im[r][c];
        }
    }
    HermitianOperator::new(ComplexMatrix::from_parts(&re, &im).unwrap()).unwrap()
}

fn state(dim: usize, seed: u64) -> DensityState {
    random_state(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn op_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=4, prop::collection::vec(-2.0f64..2.0, 16))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expectation_is_lipschitz((dim, e) in op_strategy(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = hermitian(dim, &e);
        let (r1, r2) = (state(dim, s1), state(dim, s2));
        let gap = (r1.expectation(&a) - r2.expectation(&a)).abs();
        prop_assert!(gap <= a.op_norm().unwrap() * trace_distance(&r1, &r2).unwrap() + 1e-9);
    }

    #[test]
    fn distinct_states_are_separated(dim in 2usize..=4, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (r1, r2) = (state(dim, s1), state(dim, s2));
        let d = trace_distance(&r1, &r2).unwrap();
        prop_assume!(d > 1e-9);
        let w1 = Condition::ball(r1, d / 2.0).unwrap();
        let w2 = Condition::ball(r2, d / 2.0).unwrap();
        prop_assert!(!conditions_intersect(&w1, &w2).unwrap().nonempty);
    }

    #[test]
    fn intersection_is_symmetric_and_reflexive(
        dim in 2usize..=3, s1 in any::<u64>(), s2 in any::<u64>(), r1 in 0.05f64..1.0, r2 in 0.05f64..1.0,
    ) {
        let w1 = Condition::ball(state(dim, s1), r1).unwrap();
        let w2 = Condition::ball(state(dim, s2), r2).unwrap();
        prop_assert!(conditions_intersect(&w1, &w1).unwrap().nonempty);
        let ab = conditions_intersect(&w1, &w2).unwrap();
        let ba = conditions_intersect(&w2, &w1).unwrap();
        prop_assert_eq!(ab.nonempty, ba.nonempty);
        if let Some(x) = ab.witness {
            prop_assert!(w1.contains(&x).unwrap() && w2.contains(&x).unwrap());
        }
    }

    #[test]
    fn level_sets_have_empty_interior((dim, e) in op_strategy(), seed in any::<u64>()) {
        let a = hermitian(dim, &e);
        let rho = state(dim, seed);
        let alpha = rho.expectation(&a);
        for eps in [1e-1, 1e-3, 1e-6] {
            let sigma = perturb_nonzero(&rho, &a, eps).unwrap();
            prop_assert!(trace_distance(&rho, &sigma).unwrap() < eps);
            prop_assert!(sigma.expectation(&a) != alpha);
        }
    }

    #[test]
    fn distinct_operators_differ_on_every_ball(
        (dim, e) in op_strategy(), f in prop::collection::vec(-2.0f64..2.0, 16), seed in any::<u64>(), r in 1e-4f64..0.5,
    ) {
        let (a, b) = (hermitian(dim, &e), hermitian(dim, &f));
        let diff = a.add(&b.scale(-1.0)).unwrap();
        prop_assume!(diff.op_norm().unwrap() > 1e-6);
        let ball = Ball::new(state(dim, seed), r).unwrap();
        let sigma = perturb_nonzero(&ball.center, &diff, r).unwrap();
        prop_assert!(ball.contains(&sigma).unwrap());
        prop_assert!(sigma.expectation(&a) != sigma.expectation(&b));
    }

    #[test]
    fn restriction_shrinks_the_range((dim, e) in op_strategy(), seed in any::<u64>(), r in 0.1f64..0.8, t in 0.1f64..0.9) {
        let a = hermitian(dim, &e);
        let center = state(dim, seed);
        let outer = QrNumber::linear(a.clone(), Condition::ball(center.clone(), r).unwrap()).unwrap();
        let inner = outer.restrict(Condition::ball(center, r * t).unwrap()).unwrap();
        let budget = Budget::new(64, seed);
        let (vo, vi) = (outer.eval_range(&budget).unwrap(), inner.eval_range(&budget).unwrap());
        let enc = outer.enclosure().unwrap();
        prop_assert!(enc.lo <= vi.lo + 1e-12 && vi.hi <= enc.hi + 1e-12);
        let tol = 1e-3 * (1.0 + a.op_norm().unwrap());
        prop_assert!(vo.lo <= vi.lo + tol && vi.hi <= vo.hi + tol);
    }

    #[test]
    fn arithmetic_laws_hold_pointwise(
        (dim, e) in op_strategy(), f in prop::collection::vec(-2.0f64..2.0, 16), g in prop::collection::vec(-2.0f64..2.0, 16),
        seed in any::<u64>(),
    ) {
        let w = Condition::ball(state(dim, seed), 0.5).unwrap();
        let q = |x: &[f64]| QrNumber::linear(hermitian(dim, x), w.clone()).unwrap();
        let (a, b, c) = (q(&e), q(&f), q(&g));
        let pairs = [
            (qr_add(&qr_add(&a, &b).unwrap(), &c).unwrap(), qr_add(&a, &qr_add(&b, &c).unwrap()).unwrap()),
            (qr_mul(&qr_mul(&a, &b).unwrap(), &c).unwrap(), qr_mul(&a, &qr_mul(&b, &c).unwrap()).unwrap()),
            (qr_add(&a, &b).unwrap(), qr_add(&b, &a).unwrap()),
            (qr_mul(&a, &b).unwrap(), qr_mul(&b, &a).unwrap()),
            (
                qr_mul(&a, &qr_add(&b, &c).unwrap()).unwrap(),
                qr_add(&qr_mul(&a, &b).unwrap(), &qr_mul(&a, &c).unwrap()).unwrap(),
            ),
        ];
        for s in sample_states(&w, 100, seed).unwrap() {
            for (x, y) in &pairs {
                let (u, v) = (x.eval_at(&s).unwrap(), y.eval_at(&s).unwrap());
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()), "{} vs {}", u, v);
            }
        }
    }

    #[test]
    fn rationals_approximate_sections(b in prop::array::uniform3(-0.55f64..0.55), az in -1.0f64..1.0, tol in 0.005f64..0.1) {
        let a = HermitianOperator::pauli_dot([0.3, -0.2, az]);
        let rho = DensityState::from_bloch(b).unwrap();
        let q = QrNumber::linear(a, Condition::ball(rho.clone(), 0.3).unwrap()).unwrap();
        let approx = rational_approximation(&q, &rho, tol, 0.1, &Budget::new(64, 1)).unwrap();
        prop_assert!(!approx.condition.is_empty());
        let r = *approx.value.numer() as f64 / *approx.value.denom() as f64;
        for s in sample_states(&approx.condition, 50, 3).unwrap() {
            prop_assert!((q.eval_at(&s).unwrap() - r).abs() < tol);
        }
    }
}

fn qubit_instance(seed: u64) -> (HermitianOperator, Interval, f64, Condition) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
    let op = HermitianOperator::pauli_dot(a);
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let len = rng.random_range(0.9..0.999);
    let c = [len * a[0] / n, len * a[1] / n, len * a[2] / n];
    let value = n * len;
    let half = rng.random_range(0.1..2.0) * n;
    let i = Interval::new(value - half, value + half).unwrap();
    let w = Condition::ball(DensityState::from_bloch(c).unwrap(), rng.random_range(0.001..0.05)).unwrap();
    (op, i, rng.random_range(0.05..0.6), w)
}

#[test]
fn sharp_values_register_near_the_midpoint() {
    let mut sharp = 0;
    for seed in 0..150 {
        let (a, i, eps, w) = qubit_instance(seed);
        let budget = Budget::new(200, seed);
        let rep = is_eps_sharp(&a, &i, eps, &w, &budget).unwrap();
        if !rep.verdicts.sharp {
            continue;
        }
        sharp += 1;
        assert!(rep.verdicts.located);
        let q = QrNumber::linear(a.clone(), w.clone()).unwrap();
        for s in sample_states(&w, 200, seed).unwrap() {
            assert!((q.eval_at(&s).unwrap() - i.midpoint()).abs() <= eps * i.width() / 2.0 + 1e-12);
        }
    }
    assert!(sharp >= 30, "only {sharp} sharp instances");
}

#[test]
fn enlarging_the_interval_keeps_location() {
    for seed in 0..150 {
        let (a, i, eps, w) = qubit_instance(seed);
        if !is_eps_located(&a, &i, eps, &w).unwrap() {
            continue;
        }
        for grow in [0.01, 0.3, 2.0] {
            let wider = Interval::new(i.lo - grow, i.hi + grow * 0.5).unwrap();
            assert!(is_eps_located(&a, &wider, eps, &w).unwrap(), "seed {seed} grow {grow}");
        }
    }
}

#[test]
fn eigenstate_balls_are_strict_when_sharp() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    for k in 0..200 {
        let dim = rng.random_range(2..=4);
        let diag: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let entries: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vecs = hermitian(dim, &entries).spectrum().unwrap().eigenvectors().clone();
        let a = HermitianOperator::diagonal(&diag).conjugate_by(&ComplexMatrix::new(vecs.clone()).unwrap()).unwrap();
        let j = rng.random_range(0..dim);
        let eigenstate = DensityState::pure(&vecs.column(j).into_owned()).unwrap();
        let eps = rng.random_range(0.05..0.5);
        let delta = 10f64.powf(-rng.random_range(0.0..3.0)) * eps / 3.0;
        let half = rng.random_range(0.05..1.0);
        let i = Interval::new(diag[j] - half, diag[j] + half).unwrap();
        let w = Condition::ball(eigenstate, delta).unwrap();
        let rep = is_strictly_eps_sharp(&a, &i, eps, &w, &Budget::new(50, k)).unwrap();
        if rep.verdicts.sharp {
            checked += 1;
            assert_eq!(rep.verdicts.strict, Some(true), "instance {k}");
        }
    }
    assert!(checked >= 20, "only {checked} sharp instances");
}
