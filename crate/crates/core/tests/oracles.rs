mod common;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use reebflow::coefficients::{GreenKuboEnsemble, GreenKuboSpec, PointwiseAB};
use reebflow::corrector::{effective_matrices, CellProblemBasis, CorrectorSet};
use reebflow::fastslow::{ensemble_run, exit_probability_experiment, exit_time_experiment, FastSlow, SimConfig};
use reebflow::graph_process::{solve_backward_pde, simulate_graph, GraphDiffusionConfig, PdeGridSpec};
use reebflow::hamiltonian::{
    find_critical_points, line_integral, trace_level, trace_separatrix, CriticalKind, HamiltonianModel, ScalarField,
    SearchBox, TraceOptions,
};
use reebflow::reeb::{build_reeb, GraphPoint, ReebGraph, Vertex, VertexKind};
use reebflow::rng::{path_rng, tag};
use reebflow::stats::{ks_two_sample, scaling_fit};
use reebflow::torus::{measure_mean, stationary_density, FastProcessSpec, FastStepper};

use common::{bessel_i, dart_area, dumbbell, flat_harmonic};

#[test]
fn von_mises_density_matches_quadrature() {
    let mu = stationary_density(&FastProcessSpec::von_mises(1.0, 2f64.sqrt())).unwrap();
    let z = TAU * bessel_i(0, 1.0);
    for (y, p) in mu.nodes.iter().zip(&mu.density) {
        assert!((p - y.cos().exp() / z).abs() < 1e-10);
    }
    let ratio = bessel_i(1, 1.0) / bessel_i(0, 1.0);
    assert!((ratio - 0.446390).abs() < 1e-6);
    assert!((measure_mean(f64::cos, &mu) - ratio).abs() < 1e-12);
    assert!(measure_mean(f64::sin, &mu).abs() < 1e-14);
    assert!((measure_mean(|_| 1.0, &mu) - 1.0).abs() < 1e-14);
}

#[test]
fn drifting_circles_are_uniform() {
    for c in [0.0, 0.7] {
        let mu = stationary_density(&FastProcessSpec::constant_drift(c, 2f64.sqrt())).unwrap();
        assert!(mu.density.iter().all(|p| (p - 1.0 / TAU).abs() < 1e-12));
    }
}

#[test]
fn fast_process_equilibrates() {
    let spec = FastProcessSpec::von_mises(1.0, 2f64.sqrt());
    let mu = stationary_density(&spec).unwrap();
    let stepper = FastStepper::new(&spec).unwrap();
    let (eps, dt) = (0.1, 5e-4);
    let n = 100_000;
    let steps = (1.0 / dt) as usize;
    let wrap = |y: f64| y.rem_euclid(TAU);
    let end: Vec<f64> = (0..n)
        .map(|p| {
            let mut rng = path_rng(9, tag::FASTSLOW, p);
            let mut y = 0.0;
            for _ in 0..steps {
                y = stepper.advance(y, dt, eps, 0.0, rng.sample(StandardNormal));
            }
            wrap(y)
        })
        .collect();
    let reference: Vec<f64> = (0..n).map(|p| wrap(mu.sample(&mut path_rng(10, tag::FASTSLOW, p)))).collect();
    let ks = ks_two_sample(&end, &reference).unwrap();
    assert!(ks.statistic < 0.01, "{ks:?}");
}

#[test]
fn flat_effective_matrix_and_pointwise_coefficients() {
    let model = HamiltonianModel::axis_aligned(ScalarField::Dumbbell, 1.0);
    let mu = stationary_density(&FastProcessSpec::constant_drift(0.0, 2f64.sqrt())).unwrap();
    let basis = CellProblemBasis::from_model(&model, &mu).unwrap();
    let m = effective_matrices(&CorrectorSet::solve(&basis, &mu).unwrap(), &basis, &mu).unwrap();
    let ab = PointwiseAB::new(&model, &m).unwrap();
    for x in [[0.3, -0.7], [2.0, 0.0], [0.0, 1.0]] {
        let g = ScalarField::Dumbbell.grad(x);
        assert!((ab.a(x) - (g[0] * g[0] + g[1] * g[1])).abs() < 1e-8);
    }
    assert!(ab.a([0.0, 0.0]).abs() < 1e-14);
    for x in [[1.0, 0.0], [-1.0, 0.0]] {
        assert!((ab.b(x) - 1.5).abs() < 1e-8);
    }
}

#[test]
fn green_kubo_at_a_plane_point() {
    let model = HamiltonianModel::axis_aligned(ScalarField::Dumbbell, 1.0);
    let fast = FastProcessSpec::constant_drift(0.0, 2f64.sqrt());
    let mu = stationary_density(&fast).unwrap();
    let basis = CellProblemBasis::from_model(&model, &mu).unwrap();
    let spec = GreenKuboSpec { paths: 8000, horizon: 6.0, ..GreenKuboSpec::default() };
    let ens = GreenKuboEnsemble::simulate(&model, &basis, &fast, &mu, &spec).unwrap();
    let m = effective_matrices(&CorrectorSet::solve(&basis, &mu).unwrap(), &basis, &mu).unwrap();
    let ab = PointwiseAB::new(&model, &m).unwrap();
    for x in [[0.0, 1.0], [2.0, 0.0]] {
        let est = ens.estimate(&ab.weights(x));
        assert!((2.0 * est.value - ab.a(x)).abs() < 3.0 * 2.0 * est.se, "{x:?}: {est:?} vs {}", ab.a(x));
    }
}

#[test]
fn critical_points_of_the_builtins() {
    let box_ = SearchBox::default();
    let cps = find_critical_points(&ScalarField::Dumbbell, box_, 8).unwrap();
    assert_eq!(cps.len(), 3);
    let saddle = cps.iter().find(|c| c.kind == CriticalKind::Saddle).unwrap();
    assert!(saddle.location[0].abs() < 1e-10 && (saddle.value - 0.25).abs() < 1e-12);
    let harmonic = find_critical_points(&ScalarField::Harmonic, box_, 8).unwrap();
    assert_eq!(harmonic.len(), 1);
    let perturbed = find_critical_points(&ScalarField::PerturbedDumbbell { a: 0.05 }, box_, 8).unwrap();
    assert_eq!(perturbed.len(), 3);
    for c in &cps {
        let near = perturbed
            .iter()
            .filter(|p| p.kind == c.kind)
            .map(|p| (p.location[0] - c.location[0]).hypot(p.location[1] - c.location[1]))
            .fold(f64::INFINITY, f64::min);
        assert!(near < 0.1);
    }
}

#[test]
fn level_curves_and_line_integrals() {
    let opts = TraceOptions::default();
    let circle = trace_level(&ScalarField::Harmonic, [2.0, 0.0], 2.0, &opts).unwrap();
    let dev = circle.points.iter().map(|p| (p[0].hypot(p[1]) - 2.0).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-8);
    for h in [0.5, 1.0, 2.0] {
        let c = trace_level(&ScalarField::Harmonic, [(2.0 * h as f64).sqrt(), 0.0], h, &opts).unwrap();
        assert!((line_integral(&c, |_| 1.0) - TAU).abs() < 1e-6);
    }
    let grad2 = |x: [f64; 2]| x[0] * x[0] + x[1] * x[1];
    assert!((line_integral(&circle, grad2) - 8.0 * PI).abs() < 1e-6);

    let f = ScalarField::Dumbbell;
    let well = trace_level(&f, [1.3, 0.0], f.value([1.3, 0.0]), &opts).unwrap();
    assert!(well.points.iter().all(|p| p[0] > 0.0));
    let outer = trace_level(&f, [0.0, 0.5f64.sqrt()], 0.5, &opts).unwrap();
    let (dart, se) = dart_area([-2.0, -1.0], [2.0, 1.0], 2_000_000, 3, |x| f.value(x) <= 0.5);
    assert!(((outer.enclosed_area() - dart) / dart).abs() < 0.005, "{} vs {dart} ± {se}", outer.enclosed_area());
}

#[test]
fn separatrix_lobes_enclose_the_wells() {
    let f = ScalarField::Dumbbell;
    let cps = find_critical_points(&f, SearchBox::default(), 8).unwrap();
    let saddle = cps.iter().find(|c| c.kind == CriticalKind::Saddle).unwrap();
    let opts = TraceOptions::default();
    let (dart, _) = dart_area([0.0, -1.0], [2.0, 1.0], 2_000_000, 5, |x| f.value(x) <= 0.25);
    for side in [1.0, -1.0] {
        let lobe = trace_separatrix(&f, saddle, side, 1e-4, &opts).unwrap();
        assert!(lobe.points.iter().all(|p| (f.value(*p) - 0.25).abs() < 1e-9));
        assert!(lobe.points.iter().all(|p| p[0] * side >= -1e-3));
        assert!(((lobe.enclosed_area() - dart) / dart).abs() < 0.01);
    }
}

#[test]
fn graph_topology_projection_and_distance() {
    let f = ScalarField::Dumbbell;
    let cps = find_critical_points(&f, SearchBox::default(), 8).unwrap();
    let g = build_reeb(&cps, &f, 4.0, SearchBox::default()).unwrap();
    assert_eq!(g.edges.len(), 3);
    let o = g.interior_vertices().next().unwrap().id;
    let signs: Vec<f64> = (0..3).map(|k| g.edge(k).sign_at(o)).collect();
    assert_eq!(signs, vec![-1.0, -1.0, 1.0]);
    assert_eq!(g.project(&f, [-1.0, 0.0]).unwrap().h, 0.0);
    let p = g.project(&f, [0.0, 1.0]).unwrap();
    assert_eq!(p.k, 2);
    assert!((p.h - 0.75).abs() < 1e-15);

    let pert = ScalarField::PerturbedDumbbell { a: 0.05 };
    let pc = find_critical_points(&pert, SearchBox::default(), 8).unwrap();
    let gp = build_reeb(&pc, &pert, 4.0, SearchBox::default()).unwrap();
    let mut a = g.shape();
    let mut b = gp.shape();
    a.sort_by_key(|s| format!("{s:?}"));
    b.sort_by_key(|s| format!("{s:?}"));
    assert_eq!(a, b);

    // two saddles at 1 and 2 on a chain of edges
    let v = |id, kind, value| Vertex { id, kind, value, critical: None };
    let chain = ReebGraph::from_parts(
        vec![
            v(0, VertexKind::Exterior, 0.0),
            v(1, VertexKind::Interior, 1.0),
            v(2, VertexKind::Interior, 2.0),
            v(3, VertexKind::Exterior, 0.5),
            v(4, VertexKind::Exterior, 3.0),
        ],
        &[(0, 1), (1, 2), (3, 2), (2, 4)],
        4.0,
    )
    .unwrap();
    let d = chain.distance(GraphPoint { k: 0, h: 0.3 }, GraphPoint { k: 2, h: 1.5 });
    assert!((d - ((0.3f64 - 1.0).abs() + 1.0 + (2.0f64 - 1.5).abs())).abs() < 1e-15);
}

#[test]
fn coefficient_tables_of_the_harmonic_model() {
    let sys = flat_harmonic();
    let a2 = 0.3f64 * 0.3;
    for h in [0.5, 1.0, 2.0] {
        assert!((sys.tables.q(0, h) - TAU).abs() < 1e-6);
        let (a, _) = sys.tables.generator(0, h);
        assert!((a - 2.0 * h * a2).abs() < 1e-5 * (1.0 + h));
    }
}

#[test]
fn dumbbell_vertex_products_converge() {
    let sys = dumbbell();
    let o = sys.graph.interior_vertices().next().unwrap().id;
    for &k in &sys.graph.adjacency[o] {
        let fit = sys.tables.fit(k, o).unwrap();
        let d: Vec<f64> = fit.p_samples.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(d.last().unwrap() < &d[0], "Cauchy differences grow on edge {k}: {d:?}");
    }
    let w = &sys.weights[0];
    let outer = w.entries.iter().find(|e| e.sign > 0.0).unwrap();
    let wells: f64 = w.entries.iter().filter(|e| e.sign < 0.0).map(|e| e.p).sum();
    assert!(((outer.p - wells) / outer.p).abs() < 0.01);
}

#[test]
fn pde_short_time_and_constants() {
    let sys = dumbbell();
    let spec = PdeGridSpec::default();
    let f0 = |p: GraphPoint| if p.k == 2 { (p.h - 0.25).sin() } else { 0.1 * (0.25 - p.h) };
    let sol = solve_backward_pde(&sys.dynamics(), &f0, 0.0, &spec).unwrap();
    for p in [GraphPoint { k: 2, h: 1.0 }, GraphPoint { k: 0, h: 0.1 }] {
        assert!((sol.eval(p).unwrap() - f0(p)).abs() < 1e-5);
    }
    let one = |_: GraphPoint| 1.0;
    let sol = solve_backward_pde(&sys.dynamics(), &one, 1.0, &spec).unwrap();
    assert!(sol.edges.iter().flat_map(|e| e.2.iter()).all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn ks_oracles() {
    let mut rng = path_rng(1, tag::BOOTSTRAP, 0);
    let a: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
    assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
    let b: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() + 0.5).collect();
    assert!((ks_two_sample(&a, &b).unwrap().statistic - 0.5).abs() < 0.02);
}

#[test]
fn ks_is_calibrated_on_graph_diffusion() {
    let sys = flat_harmonic();
    let start = GraphPoint { k: 0, h: 1.0 };
    let reps = 100;
    let mut ok = 0;
    for r in 0..reps {
        let run = |seed: u64| {
            let cfg = GraphDiffusionConfig { dt: 1e-3, paths: 10_000, seed, ..GraphDiffusionConfig::default() };
            let e = simulate_graph(&sys.dynamics(), &cfg, start, &[0.05]).unwrap();
            e.states[0].iter().map(|p| p.h).collect::<Vec<f64>>()
        };
        let ks = ks_two_sample(&run(2 * r + 100), &run(2 * r + 101)).unwrap();
        ok += usize::from(ks.p_value > 0.01);
    }
    assert!(ok >= 95, "{ok} of {reps}");
}

#[test]
fn scaling_fit_oracles() {
    let xs = [0.04, 0.02, 0.01, 0.005];
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    assert!((scaling_fit(&xs, &sq, None, 1).unwrap().slope - 2.0).abs() < 1e-12);
    let constant = scaling_fit(&xs, &[3.0; 4], None, 1).unwrap();
    assert!(constant.slope.abs() < 1e-12 && constant.ci.0 <= 0.0 && constant.ci.1 >= 0.0);
    // the log factor pulls the fitted slope to 0.8 + mean(1/ln x), well below 0.8
    let synth: Vec<f64> = xs.iter().map(|x: &f64| x.powf(0.8) * x.ln().abs()).collect();
    let fit = scaling_fit(&xs, &synth, None, 1).unwrap();
    let local: f64 = 0.8 + xs.iter().map(|x: &f64| 1.0 / x.ln()).sum::<f64>() / xs.len() as f64;
    assert!((fit.slope - local).abs() < 0.01, "{} vs {local}", fit.slope);
}

#[test]
fn paths_reach_the_wells_more_often_with_time() {
    let sys = dumbbell();
    let cfg = SimConfig { eps: 0.1, paths: 2000, output_times: vec![0.25, 0.5, 1.0], ..SimConfig::default() };
    let sim = FastSlow::new(sys, cfg).unwrap();
    let ens = ensemble_run(&sim, GraphPoint { k: 2, h: 0.75 }).unwrap();
    let f: Vec<f64> = ens.times.iter().map(|&t| ens.separatrix_fraction(t)).collect();
    assert!(f[0] > 0.0 && f.windows(2).all(|w| w[1] >= w[0]), "{f:?}");
}

#[test]
fn exit_probability_tends_to_one_near_the_target() {
    let sys = dumbbell();
    let cfg = SimConfig { eps: 0.01, paths: 200, t_end: 50.0, output_times: vec![], ..SimConfig::default() };
    let sim = FastSlow::new(sys, cfg).unwrap();
    let rows = exit_probability_experiment(&sim, &[0.5, 0.97]).unwrap();
    assert!(rows[1].p_hat > rows[0].p_hat);
    assert!(rows[1].p_hat > 0.9, "{rows:?}");
}

#[test]
fn exit_times_shrink_with_alpha() {
    let sys = dumbbell();
    let mean = |alpha: f64| {
        let cfg = SimConfig { eps: 0.02, alpha, paths: 100, t_end: 50.0, output_times: vec![], ..SimConfig::default() };
        let sim = FastSlow::new(sys, cfg).unwrap();
        exit_time_experiment(&sim, &[0.02], 0.0, &TraceOptions::default()).unwrap()[0].mean
    };
    let (a, b) = (mean(0.3), mean(0.45));
    assert!(b < a, "{a} vs {b}");
}
