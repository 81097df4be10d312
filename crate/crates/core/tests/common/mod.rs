//! Central-difference gradient oracle shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotequiv::backbones::Backbone;
use rotequiv::equivariance::{PoolMode, WrapTrace};
use rotequiv::nn::{NetworkSpec, ParameterSet, Session};
use rotequiv::rotgroup::RotationGroup;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`.
pub fn rel_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt() + b.mapv(|v| v * v).sum().sqrt();
    diff / scale.max(1e-12)
}

/// Numeric gradient of `f` with respect to one array, by central differences.
pub fn numeric_grad(x: &Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut g = Array2::zeros(x.dim());
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + FD_STEP;
        let up = f(&probe);
        probe[idx] = orig - FD_STEP;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

/// Relative error per parameter tensor between `analytic` and central
/// differences of `loss`.
pub fn param_errors(
    params: &ParameterSet,
    analytic: &ParameterSet,
    loss: impl Fn(&ParameterSet) -> f64,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for name in params.names() {
        let base = params.get(name).unwrap().clone();
        let num = numeric_grad(&base, |probe| {
            let mut p = params.clone();
            p.insert(name.clone(), probe.clone());
            loss(&p)
        });
        out.push((name.clone(), rel_error(&num, analytic.get(name).unwrap())));
    }
    out
}

pub fn assert_all_below(errors: &[(String, f64)], tol: f64, context: &str) {
    for (name, e) in errors {
        assert!(e < &tol, "{context}: `{name}` relative error {e:e} >= {tol:e}");
    }
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Relative errors of every parameter gradient and the input gradient of a
/// network under the loss `Σ out ⊙ proj` for a fixed random projection.
pub fn net_errors(net: &NetworkSpec, input: &Array2<f64>, seed: u64) -> Vec<(String, f64)> {
    let params = ParameterSet::init(&net.param_specs(), &mut ChaCha8Rng::seed_from_u64(seed));
    let proj = {
        let mut s = Session::new(net);
        let out = s.forward(&params, input.clone()).unwrap();
        random_matrix(out.nrows(), out.ncols(), seed + 1)
    };
    let loss = |p: &ParameterSet, x: &Array2<f64>| {
        let mut s = Session::new(net);
        (s.forward(p, x.clone()).unwrap() * &proj).sum()
    };
    let mut s = Session::new(net);
    s.forward(&params, input.clone()).unwrap();
    let mut grads = params.zeros_like();
    let d_input = s.backward(&params, &proj, &mut grads).unwrap();
    let mut errors = param_errors(&params, &grads, |p| loss(p, input));
    let num = numeric_grad(input, |x| loss(&params, x));
    errors.push(("<input>".into(), rel_error(&num, &d_input)));
    errors
}

/// Parameter-gradient errors of the group-wrapped backbone on a random cloud.
pub fn wrapped_errors(group: &str, bb: &Backbone, mode: PoolMode, n: usize, seed: u64) -> Vec<(String, f64)> {
    let g = RotationGroup::by_name(group, bb.layout().spatial_dim).unwrap();
    let params = ParameterSet::init(&bb.param_specs(), &mut ChaCha8Rng::seed_from_u64(seed));
    let x = random_matrix(n, bb.input_width(), seed + 1);
    let proj = random_matrix(g.order(), bb.output_width(), seed + 2);
    let loss = |p: &ParameterSet| {
        let t = WrapTrace::forward(&g, bb, p, x.view(), mode).unwrap();
        (&t.map * &proj).sum()
    };
    let trace = WrapTrace::forward(&g, bb, &params, x.view(), mode).unwrap();
    let mut grads = params.zeros_like();
    trace.backward(&params, &proj, &mut grads).unwrap();
    param_errors(&params, &grads, loss)
}
