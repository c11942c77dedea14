use clairaut::bracket::{curvature_fd, ExprObservable};
use clairaut::evolution::integrate;
use clairaut::expr::{parse, Scope};
use clairaut::model::Window;
use clairaut::verification::independence_spread;
use clairaut::{corpus, ClairautSystem, Convention, GaugeChoice, Model, Observable, Tolerances};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::sync::OnceLock;

fn corpus_system(name: &str) -> ClairautSystem {
    let spec = corpus::load(name).unwrap();
    ClairautSystem::build(spec.model, spec.tolerances).unwrap()
}

fn mixed() -> &'static ClairautSystem {
    static S: OnceLock<ClairautSystem> = OnceLock::new();
    S.get_or_init(|| corpus_system("mixed_3d"))
}

fn four_d() -> &'static ClairautSystem {
    static S: OnceLock<ClairautSystem> = OnceLock::new();
    S.get_or_init(|| corpus_system("first_order_4d"))
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

const MIXED_OBS: [&str; 4] = ["q1*q3 + p3^2", "sin(q2)*p3", "q1^2 - q3*p3", "cos(q1 + p3) + q2"];
const FOUR_D_OBS: [&str; 3] = ["q1*q2", "sin(q3) + q4^2", "q1*q4 - q2^2"];

fn obs(sys: &ClairautSystem, text: &str) -> ExprObservable {
    ExprObservable::parse(sys, text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nonsingular_models_have_full_rank(n in 1..4usize, k in 0.1..2.0f64) {
        let names: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
        let kinetic: Vec<String> = names.iter().map(|q| format!("0.5*d({q})^2")).collect();
        let potential: Vec<String> = names.iter().map(|q| format!("k*{q}^2")).collect();
        let l = format!("{} - ({})", kinetic.join(" + "), potential.join(" + "));
        let sys = ClairautSystem::build(Model::new(&names, &[("k".to_string(), k)], &l).unwrap(), Tolerances::default()).unwrap();
        prop_assert_eq!(sys.split().rank, n);
        prop_assert!(sys.split().degenerate.is_empty());
    }

    #[test]
    fn rank_is_invariant_under_relabeling(perm in Just(vec!["q1", "q2", "q3"]).prop_shuffle()) {
        let l = "0.5*d(q3)^2 + (0.5*q2 + q3)*d(q1) - 0.5*q1*d(q2) - 0.5*(q1^2 + q2^2 + q3^2)";
        let sys = ClairautSystem::build(Model::new(&perm, &[], l).unwrap(), Tolerances::default()).unwrap();
        prop_assert_eq!(sys.split().rank, 1);
        let t = sys.model().table();
        prop_assert_eq!(t.coord_name(sys.split().regular[0]), "q3");
    }

    #[test]
    fn regular_minor_inverts(seed in 0..1000u64) {
        let sys = mixed();
        let split = sys.split();
        for s in clairaut::analysis::sample_points(3, 4, seed) {
            let w = sys.hessian().at(&s.q, &s.v).unwrap();
            let r = split.rank;
            let minor = DMatrix::from_fn(r, r, |i, j| w[(split.regular[i], split.regular[j])]);
            let inv = minor.clone().try_inverse().unwrap();
            prop_assert!((minor * inv - DMatrix::identity(r, r)).amax() <= 1e-10);
        }
    }

    #[test]
    fn degenerate_hamiltonians_are_probe_independent(seed in 0..10_000u64) {
        for name in ["rank1_gauge", "first_order", "mixed_3d"] {
            let sys = corpus_system(name);
            let spread = independence_spread(&sys, 5, seed).unwrap();
            prop_assert!(spread <= 1e-8, "{name}: {spread}");
        }
    }

    #[test]
    fn envelope_matches_standard_hamiltonian(q in -2.0..2.0f64, p in -3.0..3.0f64) {
        for name in ["free_particle", "oscillator", "quartic"] {
            let sys = corpus_system(name);
            let a = sys.h_physical(&[q], &[p]).unwrap();
            let b = sys.h_standard(&[q], &[p]).unwrap();
            prop_assert!((a - b).abs() <= 1e-10, "{name}");
        }
    }

    #[test]
    fn h_mix_derivative_identities(q in coords(3), p in -1.0..1.0f64, pbar in coords(2), v in coords(2)) {
        let sys = mixed();
        let h = 1e-6;
        let res = sys.resolve_velocities(&q, &[p], &v, None).unwrap();
        let reg = res.velocities[sys.split().regular[0]];
        let dp = (sys.h_mix(&q, &[p + h], &pbar, &v).unwrap() - sys.h_mix(&q, &[p - h], &pbar, &v).unwrap()) / (2.0 * h);
        prop_assert!((dp - reg).abs() <= 1e-6, "{dp} vs {reg}");
        for a in 0..2 {
            let (mut up, mut dn) = (pbar.clone(), pbar.clone());
            up[a] += h;
            dn[a] -= h;
            let d = (sys.h_mix(&q, &[p], &up, &v).unwrap() - sys.h_mix(&q, &[p], &dn, &v).unwrap()) / (2.0 * h);
            prop_assert!((d - v[a]).abs() <= 1e-6);
        }
    }

    #[test]
    fn h_mix_is_affine_in_pbar(q in coords(3), p in -1.0..1.0f64, a in coords(2), b in coords(2), v in coords(2), s in -2.0..2.0f64) {
        let sys = mixed();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect();
        let ha = sys.h_mix(&q, &[p], &a, &v).unwrap();
        let hb = sys.h_mix(&q, &[p], &b, &v).unwrap();
        let hm = sys.h_mix(&q, &[p], &mix, &v).unwrap();
        prop_assert!((hm - (ha + s * (hb - ha))).abs() <= 1e-10);
    }

    #[test]
    fn curvature_is_antisymmetric(q3 in coords(3), p in -1.0..1.0f64, q4 in coords(4)) {
        let f = mixed().frame(&q3, &[p], None).unwrap();
        let c = f.curvature();
        prop_assert!((c + c.transpose()).amax() <= 1e-12);
        let f = four_d().frame(&q4, &[], None).unwrap();
        let c = f.curvature();
        prop_assert!((c + c.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn curvature_matches_finite_differences(q in coords(3), p in -1.0..1.0f64) {
        let sys = mixed();
        let f = sys.frame(&q, &[p], None).unwrap();
        let fd = curvature_fd(sys, &q, &[p], 1e-5).unwrap();
        prop_assert!((f.curvature() - fd).amax() <= 1e-6);
    }

    #[test]
    fn bracket_is_bilinear(q in coords(3), p in -1.0..1.0f64, a in -2.0..2.0f64, b in -2.0..2.0f64, i in 0..4usize, j in 0..4usize, k in 0..4usize) {
        let sys = mixed();
        let f = sys.frame(&q, &[p], None).unwrap();
        let (x, y, z) = (MIXED_OBS[i], MIXED_OBS[j], MIXED_OBS[k]);
        let combo = obs(sys, &format!("({a:?})*({x}) + ({b:?})*({y})"));
        for conv in [Convention::A, Convention::B] {
            let gz = obs(sys, z).gradient(&f).unwrap();
            let lhs = f.bracket_f(&combo.gradient(&f).unwrap(), &gz, conv).unwrap();
            let bx = f.bracket_f(&obs(sys, x).gradient(&f).unwrap(), &gz, conv).unwrap();
            let by = f.bracket_f(&obs(sys, y).gradient(&f).unwrap(), &gz, conv).unwrap();
            prop_assert!((lhs - a * bx - b * by).abs() <= 1e-9);
        }
    }

    #[test]
    fn d_alpha_is_a_derivation(q in coords(4), i in 0..3usize, j in 0..3usize) {
        let sys = four_d();
        let f = sys.frame(&q, &[], None).unwrap();
        let (x, y) = (obs(sys, FOUR_D_OBS[i]), obs(sys, FOUR_D_OBS[j]));
        let xy = obs(sys, &format!("({})*({})", FOUR_D_OBS[i], FOUR_D_OBS[j]));
        let (gx, gy, gxy) = (x.gradient(&f).unwrap(), y.gradient(&f).unwrap(), xy.gradient(&f).unwrap());
        let (vx, vy) = (x.value(&f).unwrap(), y.value(&f).unwrap());
        for a in 0..f.h.len() {
            let lhs = f.d_alpha(&gxy, a);
            let rhs = vx * f.d_alpha(&gy, a) + vy * f.d_alpha(&gx, a);
            prop_assert!((lhs - rhs).abs() <= 1e-8);
        }
    }

    #[test]
    fn d_alpha_is_a_derivation_with_regular_sector(q in coords(3), p in -1.0..1.0f64, i in 0..4usize, j in 0..4usize) {
        let sys = mixed();
        let f = sys.frame(&q, &[p], None).unwrap();
        let (x, y) = (obs(sys, MIXED_OBS[i]), obs(sys, MIXED_OBS[j]));
        let xy = obs(sys, &format!("({})*({})", MIXED_OBS[i], MIXED_OBS[j]));
        let (gx, gy, gxy) = (x.gradient(&f).unwrap(), y.gradient(&f).unwrap(), xy.gradient(&f).unwrap());
        let (vx, vy) = (x.value(&f).unwrap(), y.value(&f).unwrap());
        for a in 0..f.h.len() {
            let lhs = f.d_alpha(&gxy, a);
            let rhs = vx * f.d_alpha(&gy, a) + vy * f.d_alpha(&gx, a);
            prop_assert!((lhs - rhs).abs() <= 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trajectories_ignore_the_sample_seed(seed in 0..u64::MAX) {
        let spec = corpus::load("first_order").unwrap();
        let base = ClairautSystem::build(spec.model.clone(), spec.tolerances).unwrap();
        let tol = Tolerances { seed, ..spec.tolerances };
        let other = ClairautSystem::build(spec.model.clone(), tol).unwrap();
        let start = spec.initial_point(&base).unwrap();
        let w = Window { t0: 0.0, t1: 0.5, dt: 1e-2 };
        let a = integrate(&base, &start, &w, None, Convention::B).unwrap();
        let b = integrate(&other, &start, &w, None, Convention::B).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn full_rank_trajectory_ignores_gauge(c in -1.0..1.0f64) {
        let sys = corpus_system("first_order");
        let spec = corpus::load("first_order").unwrap();
        let start = spec.initial_point(&sys).unwrap();
        let w = Window { t0: 0.0, t1: 0.5, dt: 1e-2 };
        let mut g = GaugeChoice::zeros(2);
        g.set(0, parse(&format!("{c:?}*sin(t)"), sys.model().table(), Scope::GAUGE).unwrap(), &sys).unwrap();
        let a = integrate(&sys, &start, &w, None, Convention::B).unwrap();
        let b = integrate(&sys, &start, &w, Some(&g), Convention::B).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn zero_gauge_freezes_degenerate_coordinates() {
    let spec = corpus::load("rank1_gauge").unwrap();
    let sys = ClairautSystem::build(spec.model.clone(), spec.tolerances).unwrap();
    let start = spec.initial_point(&sys).unwrap();
    let g = GaugeChoice::zeros(1);
    let traj = integrate(&sys, &start, &spec.window.unwrap(), Some(&g), Convention::B).unwrap();
    let q2 = start.q[1];
    assert!(traj.samples.iter().all(|s| (s.q[1] - q2).abs() <= 1e-12));
}

#[test]
fn rk4_order_on_smooth_models() {
    for name in ["oscillator", "first_order", "first_order_4d", "mixed_3d"] {
        let spec = corpus::load(name).unwrap();
        let sys = ClairautSystem::build(spec.model.clone(), spec.tolerances).unwrap();
        let start = spec.initial_point(&sys).unwrap();
        let el = |dt| {
            let tr = integrate(&sys, &start, &Window { t0: 0.0, t1: 10.0, dt }, None, Convention::B).unwrap();
            tr.max_el_residual().unwrap()
        };
        let ratio = el(0.05) / el(0.025);
        assert!((8.0..=32.0).contains(&ratio), "{name}: {ratio}");
    }
}
