//! Central-difference checks for every tape op and loss kind.
//!
//! Each op is wrapped as `f(x) = Σ c ⊙ op(x)` with fixed random `c`, so the
//! whole Jacobian is exercised through one scalar.

use mtlrank_core::{finite_diff_check, losses, LossSpec, Mode, NodeId, Tape, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-6;

pub const OPS: [&str; 19] = [
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "transpose",
    "reshape",
    "concat",
    "softmax",
    "logsumexp",
    "log",
    "exp",
    "relu",
    "layernorm",
    "dropout",
    "masked_fill",
    "sum",
    "mean",
    "gather_rows",
];

type Build = Box<dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId, TensorError>>;

struct Case {
    shapes: Vec<Vec<usize>>,
    point: Vec<f64>,
    build: Build,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=4)
}

fn case(kind: &str, rng: &mut ChaCha8Rng) -> Case {
    let (r, c) = (dim(rng), dim(rng));
    let n = r * c;
    let one = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (vec![vec![r, c]], uniform(rng, n, lo, hi));
    let (shapes, point, build): (Vec<Vec<usize>>, Vec<f64>, Build) = match kind {
        "matmul" => {
            let k = dim(rng);
            let point = uniform(rng, r * k + k * c, -2.0, 2.0);
            (vec![vec![r, k], vec![k, c]], point, Box::new(|t, x| t.matmul(x[0], x[1])))
        }
        "add" | "sub" | "mul" => {
            let other = match rng.random_range(0..4) {
                0 => vec![r, c],
                1 => vec![1, c],
                2 => vec![c],
                _ => vec![r, 1],
            };
            let m: usize = other.iter().product();
            let point = uniform(rng, n + m, -2.0, 2.0);
            let build: Build = match kind {
                "add" => Box::new(|t, x| t.add(x[0], x[1])),
                "sub" => Box::new(|t, x| t.sub(x[1], x[0])),
                _ => Box::new(|t, x| t.mul(x[0], x[1])),
            };
            (vec![vec![r, c], other], point, build)
        }
        "scale" => {
            let factor = rng.random_range(-3.0..3.0);
            let (s, p) = one(rng, -2.0, 2.0);
            (s, p, Box::new(move |t, x| t.scale(x[0], factor)))
        }
        "transpose" => {
            let (s, p) = one(rng, -2.0, 2.0);
            (s, p, Box::new(|t, x| t.transpose(x[0])))
        }
        "reshape" => {
            let target = if rng.random() { vec![c, r] } else { vec![n] };
            let (s, p) = one(rng, -2.0, 2.0);
            (s, p, Box::new(move |t, x| t.reshape(x[0], &target)))
        }
        "concat" => {
            let axis = rng.random_range(0..2);
            let other = if axis == 0 { vec![dim(rng), c] } else { vec![r, dim(rng)] };
            let m: usize = other.iter().product();
            let point = uniform(rng, n + m, -2.0, 2.0);
            (vec![vec![r, c], other], point, Box::new(move |t, x| t.concat(&[x[0], x[1]], axis)))
        }
        "softmax" => {
            let (s, p) = one(rng, -3.0, 3.0);
            (s, p, Box::new(|t, x| t.softmax(x[0])))
        }
        "logsumexp" => {
            let (s, p) = one(rng, -3.0, 3.0);
            (s, p, Box::new(|t, x| t.logsumexp(x[0])))
        }
        "log" => {
            let (s, p) = one(rng, 0.5, 3.0);
            (s, p, Box::new(|t, x| t.log(x[0])))
        }
        "exp" => {
            let (s, p) = one(rng, -2.0, 2.0);
            (s, p, Box::new(|t, x| t.exp(x[0])))
        }
        "relu" => {
            // keep every input at least 0.1 away from the kink
            let point = (0..n)
                .map(|_| {
                    let v = rng.random_range(0.1..2.0);
                    if rng.random() { v } else { -v }
                })
                .collect();
            (vec![vec![r, c]], point, Box::new(|t, x| t.relu(x[0])))
        }
        "layernorm" => {
            let c = c.max(2);
            let mut point = uniform(rng, r * c, -2.0, 2.0);
            point.extend(uniform(rng, 2 * c, -1.5, 1.5));
            (
                vec![vec![r, c], vec![c], vec![c]],
                point,
                Box::new(|t, x| t.layernorm(x[0], x[1], x[2], 1e-5)),
            )
        }
        "dropout" => {
            let keep = rng.random_range(0.3..0.95);
            let seed: u64 = rng.random();
            let (s, p) = one(rng, -2.0, 2.0);
            // the same seed on every evaluation fixes the mask across probes
            let build: Build = Box::new(move |t, x| {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
                t.dropout(x[0], keep, Mode::Train, &mut drop_rng)
            });
            (s, p, build)
        }
        "masked_fill" => {
            let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let (s, p) = one(rng, -2.0, 2.0);
            if rng.random() {
                let value = rng.random_range(-1.0..1.0);
                (s, p, Box::new(move |t, x| t.masked_fill(x[0], &mask, value)))
            } else {
                for row in mask.chunks_mut(c) {
                    row[0] = false;
                }
                let build: Build = Box::new(move |t, x| {
                    let filled = t.masked_fill(x[0], &mask, f64::NEG_INFINITY)?;
                    t.softmax(filled)
                });
                (s, p, build)
            }
        }
        "sum" | "mean" => {
            let axis = match rng.random_range(0..3) {
                0 => None,
                a => Some(a - 1),
            };
            let (s, p) = one(rng, -2.0, 2.0);
            let build: Build = if kind == "sum" {
                Box::new(move |t, x| t.sum(x[0], axis))
            } else {
                Box::new(move |t, x| t.mean(x[0], axis))
            };
            (s, p, build)
        }
        "gather_rows" => {
            let m = rng.random_range(1..=6);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..r)).collect();
            let (s, p) = one(rng, -2.0, 2.0);
            (s, p, Box::new(move |t, x| t.gather_rows(x[0], &idx)))
        }
        other => panic!("unknown op {other}"),
    };
    Case { shapes, point, build }
}

fn leaves(tape: &mut Tape, shapes: &[Vec<usize>], point: &[f64]) -> Vec<NodeId> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::new(s.clone(), point[offset..offset + n].to_vec()).expect("shape");
            offset += n;
            tape.leaf(t)
        })
        .collect()
}

fn value_and_grad(
    shapes: &[Vec<usize>],
    point: &[f64],
    proj_seed: u64,
    build: &dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId, TensorError>,
) -> Result<(f64, Vec<f64>), TensorError> {
    let mut tape = Tape::new();
    let inputs = leaves(&mut tape, shapes, point);
    let out = build(&mut tape, &inputs)?;
    let out_shape = tape.value(out).shape().to_vec();
    let numel: usize = out_shape.iter().product();
    let mut proj_rng = ChaCha8Rng::seed_from_u64(proj_seed);
    let coeffs = Tensor::new(out_shape, uniform(&mut proj_rng, numel, -1.0, 1.0))?;
    let c = tape.leaf(coeffs);
    let weighted = tape.mul(out, c)?;
    let y = tape.sum(weighted, None)?;
    let value = tape.value(y).item().expect("scalar");
    let grads = tape.backward(y)?;
    let mut g = Vec::with_capacity(point.len());
    for id in inputs {
        grads.extend_into(id, &mut g);
    }
    Ok((value, g))
}

/// Worst relative error for one random instance of `kind`.
pub fn op_error(kind: &str, seed: u64) -> Result<f64, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = case(kind, &mut rng);
    let proj_seed: u64 = rng.random();
    finite_diff_check(|p| value_and_grad(&case.shapes, p, proj_seed, &*case.build), &case.point, H)
}

/// Random `(B × L)` scores, integer grades in `0..=4` and a mask with at
/// least one valid item per list.
pub fn random_lists(rng: &mut impl Rng, max_len: usize) -> (usize, usize, Vec<f64>, Vec<f64>, Vec<bool>) {
    let b = rng.random_range(1..=3);
    let l = rng.random_range(2..=max_len);
    let scores = (0..b * l).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..b * l).map(|_| rng.random_range(0..=4) as f64).collect();
    let mut mask: Vec<bool> = (0..b * l).map(|_| rng.random_bool(0.8)).collect();
    for row in mask.chunks_mut(l) {
        if !row.iter().any(|m| *m) {
            row[0] = true;
        }
    }
    (b, l, scores, labels, mask)
}

/// Worst relative error of `∂loss/∂scores` for one random instance.
pub fn loss_error(spec: &LossSpec, seed: u64) -> Result<f64, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, l, scores, labels, mask) = random_lists(&mut rng, 8);
    finite_diff_check(
        |p| {
            let mut tape = Tape::new();
            let s = tape.leaf(Tensor::matrix(b, l, p.to_vec()));
            let y = losses::loss(&mut tape, spec, s, &labels, &mask)?;
            let value = tape.value(y).item().expect("scalar");
            Ok((value, tape.backward(y)?.wrt(s).into_data()))
        },
        &scores,
        H,
    )
}
