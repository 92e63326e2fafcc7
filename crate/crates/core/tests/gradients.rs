//! Reverse-mode gradients against central finite differences, 64-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synergy_core::consolidation::consolidation_loss;
use synergy_core::models::{build_mlp, build_small_cnn, Network};
use synergy_core::{Result, Tape, Tensor, Var};

const TRIALS: usize = 100;
const REL_TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn random(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    // Keep values away from zero so ReLU kinks sit far outside the FD step.
    let data = (0..n)
        .map(|_| {
            let v: f64 = r.random_range(0.05..1.5);
            if r.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random projection `Σ out ⊙ R` turning any output into a scalar.
fn project(tape: &mut Tape<f64>, out: Var, r: &mut ChaCha8Rng) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(random(r, &shape));
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL_TOL * analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Builds `f` on fresh tapes, compares every input coordinate's gradient to
/// a central difference.
fn check<F>(name: &str, inputs: &[Tensor<f64>], f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars).unwrap();
    tape.backward(out).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let g = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            let num = (eval(&plus) - eval(&minus)) / (2.0 * H);
            assert!(close(g[i], num), "{name}: input {k}[{i}] analytic {} vs numeric {num}", g[i]);
        }
    }
}

fn rng(label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(label)
}

#[test]
fn matmul_and_bias() {
    let mut r = rng(1);
    for _ in 0..TRIALS {
        let (n, k, m) = (r.random_range(1..4), r.random_range(1..5), r.random_range(1..4));
        let ins = [random(&mut r, &[n, k]), random(&mut r, &[k, m]), random(&mut r, &[m])];
        let seed = r.random::<u64>();
        check("matmul+bias", &ins, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            project(t, y, &mut rng(seed))
        });
    }
}

#[test]
fn relu_reshape_elementwise() {
    let mut r = rng(2);
    for _ in 0..TRIALS {
        let (n, c) = (r.random_range(1..4), r.random_range(2..6));
        let ins = [random(&mut r, &[n, c]), random(&mut r, &[n, c])];
        let s = r.random_range(-2.0..2.0);
        let seed = r.random::<u64>();
        check("relu/add/sub/mul/scale/reshape", &ins, |t, v| {
            let a = t.relu(v[0]);
            let b = t.add(a, v[1])?;
            let c2 = t.sub(b, v[0])?;
            let d = t.mul(c2, v[1])?;
            let e = t.scale(d, s);
            let f = t.reshape(e, vec![n * c])?;
            project(t, f, &mut rng(seed))
        });
    }
}

#[test]
fn conv2d() {
    let mut r = rng(3);
    for _ in 0..TRIALS {
        let (n, c, o) = (r.random_range(1..3), r.random_range(1..3), r.random_range(1..3));
        let size = r.random_range(3..6);
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let padding = r.random_range(0..2);
        let ins = [random(&mut r, &[n, c, size, size]), random(&mut r, &[o, c, k, k]), random(&mut r, &[o])];
        let seed = r.random::<u64>();
        check("conv2d", &ins, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
            project(t, y, &mut rng(seed))
        });
    }
}

#[test]
fn softmax_family() {
    let mut r = rng(4);
    for _ in 0..TRIALS {
        let (n, c) = (r.random_range(1..5), r.random_range(2..6));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let ins = [random(&mut r, &[n, c])];
        let seed = r.random::<u64>();
        check("log_softmax", &ins, |t, v| {
            let y = t.log_softmax(v[0])?;
            project(t, y, &mut rng(seed))
        });
        check("softmax_cross_entropy", &ins, |t, v| t.softmax_cross_entropy(v[0], &labels));
        check("select_per_row", &ins, |t, v| {
            let y = t.select_per_row(v[0], &labels)?;
            project(t, y, &mut rng(seed))
        });
    }
}

#[test]
fn reductions_and_distances() {
    let mut r = rng(5);
    for _ in 0..TRIALS {
        let (n, c) = (r.random_range(1..4), r.random_range(1..5));
        let ins = [random(&mut r, &[n, c]), random(&mut r, &[n, c])];
        let anchor: Vec<f64> = (0..n * c).map(|_| r.random_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..n * c).map(|_| r.random_range(0.0..2.0)).collect();
        check("mse", &ins, |t, v| t.mse(v[0], v[1]));
        check("mean", &ins, |t, v| t.mean(v[0]));
        check("sum", &ins, |t, v| Ok(t.sum(v[1])));
        check("weighted_sq_dist", &ins, |t, v| t.weighted_sq_dist(v[0], &anchor, &weights));
    }
}

/// Flattened network parameters as tape inputs, rebuilt into `ParamVars`
/// through a scratch network.
fn net_inputs(net: &Network<f64>) -> Vec<Tensor<f64>> {
    net.params().to_vec()
}

fn with_params(net: &Network<f64>, params: &[Tensor<f64>]) -> Network<f64> {
    let mut n = net.clone();
    let flat: Vec<f64> = params.iter().flat_map(|p| p.data().to_vec()).collect();
    n.set_flat_params(&flat).unwrap();
    n
}

/// Composite losses over a network. The gradient is taken through the
/// network's own binding so parameter ordering matches training.
fn check_network_loss<F>(name: &str, net: &Network<f64>, f: F)
where
    F: Fn(&mut Tape<f64>, &Network<f64>, &synergy_core::models::ParamVars) -> Result<Var>,
{
    let params = net_inputs(net);
    let eval = |ps: &[Tensor<f64>]| -> f64 {
        let n = with_params(net, ps);
        let mut tape = Tape::new();
        let pv = n.bind(&mut tape);
        let out = f(&mut tape, &n, &pv).unwrap();
        tape.value(out).item().unwrap()
    };
    let mut tape = Tape::new();
    let pv = net.bind(&mut tape);
    let out = f(&mut tape, net, &pv).unwrap();
    tape.backward(out).unwrap();
    let mut r = rng(99);
    for (k, v) in pv.vars().iter().enumerate() {
        let g = tape.grad(*v).unwrap().to_vec();
        // A random subset of coordinates keeps the CNN cases quick.
        let picks: Vec<usize> = if g.len() <= 12 {
            (0..g.len()).collect()
        } else {
            (0..12).map(|_| r.random_range(0..g.len())).collect()
        };
        for i in picks {
            let mut plus = params.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = params.clone();
            minus[k].data_mut()[i] -= H;
            let num = (eval(&plus) - eval(&minus)) / (2.0 * H);
            assert!(close(g[i], num), "{name}: param {k}[{i}] analytic {} vs numeric {num}", g[i]);
        }
    }
}

struct Case {
    net: Network<f64>,
    xb: Tensor<f64>,
    yb: Vec<usize>,
    xm: Tensor<f64>,
    ym: Vec<usize>,
    target: Tensor<f64>,
    anchor: Network<f64>,
    fisher: Vec<f64>,
}

fn case(r: &mut ChaCha8Rng, cnn: bool) -> Case {
    let classes = 3;
    let seed = r.random::<u64>();
    let (net, shape): (Network<f64>, Vec<usize>) = if cnn {
        (build_small_cnn(1, 6, classes, seed).unwrap(), vec![1, 6, 6])
    } else {
        (build_mlp(4, 5, classes, seed).unwrap(), vec![4])
    };
    let batch = |r: &mut ChaCha8Rng, n: usize| {
        let mut s = vec![n];
        s.extend(&shape);
        random(r, &s)
    };
    let (nb, nm) = (r.random_range(1..4), r.random_range(1..4));
    let xb = batch(r, nb);
    let xm = batch(r, nm);
    let yb = (0..nb).map(|_| r.random_range(0..classes)).collect();
    let ym = (0..nm).map(|_| r.random_range(0..classes)).collect();
    let target = random(r, &[nm, classes]);
    let mut anchor = net.clone();
    let flat: Vec<f64> = net.flat_params().iter().map(|p| p + r.random_range(-0.3..0.3)).collect();
    anchor.set_flat_params(&flat).unwrap();
    let fisher = (0..net.param_count()).map(|_| r.random_range(0.0..1.0)).collect();
    Case { net, xb, yb, xm, ym, target, anchor, fisher }
}

fn supervised(t: &mut Tape<f64>, n: &Network<f64>, pv: &synergy_core::models::ParamVars, c: &Case) -> Result<(Var, Var)> {
    let xb = t.constant(c.xb.clone());
    let lb = n.forward(t, pv, xb)?;
    let l1 = t.softmax_cross_entropy(lb, &c.yb)?;
    let xm = t.constant(c.xm.clone());
    let lm = n.forward(t, pv, xm)?;
    let l2 = t.softmax_cross_entropy(lm, &c.ym)?;
    Ok((t.add(l1, l2)?, lm))
}

fn composite_suite(cnn: bool, seed: u64) {
    let mut r = rng(seed);
    for _ in 0..TRIALS {
        let c = case(&mut r, cnn);
        let (lambda, beta) = (r.random_range(0.1..2.0), r.random_range(0.1..2.0));
        check_network_loss("supervised", &c.net, |t, n, pv| Ok(supervised(t, n, pv, &c)?.0));
        check_network_loss("semantic consistency", &c.net, |t, n, pv| {
            let xm = t.constant(c.xm.clone());
            let lm = n.forward(t, pv, xm)?;
            let target = t.constant(c.target.clone());
            t.mse(lm, target)
        });
        check_network_loss("consolidation", &c.net, |t, _, pv| consolidation_loss(t, pv, &c.anchor, &c.fisher));
        check_network_loss("total", &c.net, |t, n, pv| {
            let (sl, lm) = supervised(t, n, pv, &c)?;
            let target = t.constant(c.target.clone());
            let sr = t.mse(lm, target)?;
            let sr = t.scale(sr, lambda);
            let sc = consolidation_loss(t, pv, &c.anchor, &c.fisher)?;
            let sc = t.scale(sc, beta);
            let a = t.add(sl, sr)?;
            t.add(a, sc)
        });
    }
}

#[test]
fn composite_losses_mlp() {
    composite_suite(false, 6);
}

#[test]
fn composite_losses_cnn() {
    composite_suite(true, 7);
}
