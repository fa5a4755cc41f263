//! Tape-based reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value on the tape is an `Array2<f64>`; row vectors are `1 x d`
//! matrices and scalars are `1 x 1`. Operations record a backward closure
//! that scatters the output gradient onto the parents, so `backward` on a
//! scalar loss yields gradients for every node created on the tape.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{Array1, Array2, Axis};

pub type Matrix = Array2<f64>;

type BackFn = Box<dyn Fn(&Matrix, &mut dyn FnMut(usize, Matrix))>;

struct Node {
    value: Matrix,
    back: Option<BackFn>,
}

/// A single-use computation tape. Build one per forward/backward pass.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Rc<Tape> {
        Rc::new(Tape {
            nodes: RefCell::new(Vec::new()),
        })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }
}

fn push(tape: &Rc<Tape>, value: Matrix, back: Option<BackFn>) -> Var {
    let mut nodes = tape.nodes.borrow_mut();
    nodes.push(Node { value, back });
    Var {
        tape: Rc::clone(tape),
        idx: nodes.len() - 1,
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Rc<Tape>,
    idx: usize,
}

/// Create a leaf variable (gradients are tracked and retrievable).
pub fn leaf(tape: &Rc<Tape>, value: Matrix) -> Var {
    push(tape, value, None)
}

/// Create a constant (a leaf whose gradient is simply never read).
pub fn constant(tape: &Rc<Tape>, value: Matrix) -> Var {
    push(tape, value, None)
}

impl Var {
    pub fn value(&self) -> Matrix {
        self.tape.nodes.borrow()[self.idx].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        let nodes = self.tape.nodes.borrow();
        let s = nodes[self.idx].value.dim();
        s
    }

    pub fn scalar(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.idx].value;
        assert_eq!(v.dim(), (1, 1), "scalar() on non-1x1 value");
        v[[0, 0]]
    }

    fn tape(&self) -> &Rc<Tape> {
        &self.tape
    }

    pub fn tape_handle(&self) -> Rc<Tape> {
        Rc::clone(&self.tape)
    }

    pub fn add(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.dim(), b.dim(), "add: shape mismatch");
        let (i, j) = (self.idx, other.idx);
        push(
            self.tape(),
            &a + &b,
            Some(Box::new(move |g, acc| {
                acc(i, g.clone());
                acc(j, g.clone());
            })),
        )
    }

    pub fn sub(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.dim(), b.dim(), "sub: shape mismatch");
        let (i, j) = (self.idx, other.idx);
        push(
            self.tape(),
            &a - &b,
            Some(Box::new(move |g, acc| {
                acc(i, g.clone());
                acc(j, -g);
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.dim(), b.dim(), "mul: shape mismatch");
        let (i, j) = (self.idx, other.idx);
        push(
            self.tape(),
            &a * &b,
            Some(Box::new(move |g, acc| {
                acc(i, g * &b);
                acc(j, g * &a);
            })),
        )
    }

    pub fn scale(&self, c: f64) -> Var {
        let a = self.value();
        let i = self.idx;
        push(
            self.tape(),
            a * c,
            Some(Box::new(move |g, acc| acc(i, g * c))),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let a = self.value();
        let i = self.idx;
        push(
            self.tape(),
            a + c,
            Some(Box::new(move |g, acc| acc(i, g.clone()))),
        )
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn matmul(&self, other: &Var) -> Var {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul: inner dims differ");
        let (i, j) = (self.idx, other.idx);
        let out = a.dot(&b);
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                acc(i, g.dot(&b.t()));
                acc(j, a.t().dot(g));
            })),
        )
    }

    pub fn transpose(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        push(
            self.tape(),
            a.t().to_owned(),
            Some(Box::new(move |g, acc| acc(i, g.t().to_owned()))),
        )
    }

    /// Broadcast-add a `1 x c` row to every row.
    pub fn add_row(&self, row: &Var) -> Var {
        let (a, r) = (self.value(), row.value());
        assert_eq!(r.nrows(), 1, "add_row: bias must be 1 x c");
        assert_eq!(a.ncols(), r.ncols(), "add_row: width mismatch");
        let (i, j) = (self.idx, row.idx);
        push(
            self.tape(),
            &a + &r,
            Some(Box::new(move |g, acc| {
                acc(i, g.clone());
                acc(j, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    pub fn sigmoid(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let s = a.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let s2 = s.clone();
        push(
            self.tape(),
            s,
            Some(Box::new(move |g, acc| acc(i, g * &s2 * &(1.0 - &s2)))),
        )
    }

    pub fn tanh(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let t = a.mapv(f64::tanh);
        let t2 = t.clone();
        push(
            self.tape(),
            t,
            Some(Box::new(move |g, acc| acc(i, g * &(1.0 - &t2 * &t2)))),
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        let a = self.value();
        let i = self.idx;
        let out = a.mapv(|x| if x >= 0.0 { x } else { slope * x });
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                acc(i, g * &a.mapv(|x| if x >= 0.0 { 1.0 } else { slope }))
            })),
        )
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    pub fn exp(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let e = a.mapv(f64::exp);
        let e2 = e.clone();
        push(
            self.tape(),
            e,
            Some(Box::new(move |g, acc| acc(i, g * &e2))),
        )
    }

    /// Clamp with pass-through gradient strictly inside the range.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        let a = self.value();
        let i = self.idx;
        let out = a.mapv(|x| x.clamp(lo, hi));
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                acc(i, g * &a.mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 }))
            })),
        )
    }

    pub fn sum_all(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let dim = a.dim();
        let s = Array2::from_elem((1, 1), a.sum());
        push(
            self.tape(),
            s,
            Some(Box::new(move |g, acc| {
                acc(i, Array2::from_elem(dim, g[[0, 0]]))
            })),
        )
    }

    pub fn mean_all(&self) -> Var {
        let (r, c) = self.shape();
        self.sum_all().scale(1.0 / (r * c) as f64)
    }

    /// Per-row sum, producing an `n x 1` column.
    pub fn row_sum(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let cols = a.ncols();
        let s = a.sum_axis(Axis(1)).insert_axis(Axis(1));
        push(
            self.tape(),
            s,
            Some(Box::new(move |g, acc| {
                let mut out = Array2::zeros(a.dim());
                for r in 0..a.nrows() {
                    for c in 0..cols {
                        out[[r, c]] = g[[r, 0]];
                    }
                }
                acc(i, out)
            })),
        )
    }

    /// Select rows by index (rows may repeat).
    pub fn gather_rows(&self, idx: &[usize]) -> Var {
        let a = self.value();
        let i = self.idx;
        let cols = a.ncols();
        let mut out = Array2::zeros((idx.len(), cols));
        for (k, &r) in idx.iter().enumerate() {
            out.row_mut(k).assign(&a.row(r));
        }
        let idx = idx.to_vec();
        let dim = a.dim();
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut da = Array2::zeros(dim);
                for (k, &r) in idx.iter().enumerate() {
                    let mut row = da.row_mut(r);
                    row += &g.row(k);
                }
                acc(i, da)
            })),
        )
    }

    /// Scatter-add rows of `self` into a fresh `out_rows x cols` matrix:
    /// `out[idx[k]] += self[k]`.
    pub fn scatter_add_rows(&self, idx: &[usize], out_rows: usize) -> Var {
        let a = self.value();
        assert_eq!(a.nrows(), idx.len(), "scatter_add_rows: index length");
        let i = self.idx;
        let cols = a.ncols();
        let mut out = Array2::zeros((out_rows, cols));
        for (k, &r) in idx.iter().enumerate() {
            let mut row = out.row_mut(r);
            row += &a.row(k);
        }
        let idx = idx.to_vec();
        let in_dim = a.dim();
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut da = Array2::zeros(in_dim);
                for (k, &r) in idx.iter().enumerate() {
                    da.row_mut(k).assign(&g.row(r));
                }
                acc(i, da)
            })),
        )
    }

    /// Multiply row `k` by the constant `coeffs[k]`.
    pub fn scale_rows(&self, coeffs: &Array1<f64>) -> Var {
        let a = self.value();
        assert_eq!(a.nrows(), coeffs.len(), "scale_rows: length mismatch");
        let i = self.idx;
        let c = coeffs.clone();
        let mut out = a.clone();
        for (k, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            row *= c[k];
        }
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut dg = g.clone();
                for (k, mut row) in dg.axis_iter_mut(Axis(0)).enumerate() {
                    row *= c[k];
                }
                acc(i, dg)
            })),
        )
    }

    /// Take a column slice `[lo, hi)`.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Var {
        let a = self.value();
        assert!(hi <= a.ncols() && lo < hi, "slice_cols: bad range");
        let i = self.idx;
        let dim = a.dim();
        let out = a.slice(ndarray::s![.., lo..hi]).to_owned();
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut da = Array2::zeros(dim);
                da.slice_mut(ndarray::s![.., lo..hi]).assign(g);
                acc(i, da)
            })),
        )
    }

    /// Row-wise numerically stable log-softmax.
    pub fn log_softmax_rows(&self) -> Var {
        let a = self.value();
        let i = self.idx;
        let mut out = a.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| x - m);
            let lse = row.mapv(f64::exp).sum().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let soft = out.mapv(f64::exp);
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let row_g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(i, g - &(&soft * &row_g));
            })),
        )
    }

    /// Pick one entry per row, producing an `n x 1` column.
    pub fn pick(&self, targets: &[usize]) -> Var {
        let a = self.value();
        assert_eq!(a.nrows(), targets.len(), "pick: target length");
        let i = self.idx;
        let mut out = Array2::zeros((targets.len(), 1));
        for (k, &t) in targets.iter().enumerate() {
            out[[k, 0]] = a[[k, t]];
        }
        let targets = targets.to_vec();
        let dim = a.dim();
        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut da = Array2::zeros(dim);
                for (k, &t) in targets.iter().enumerate() {
                    da[[k, t]] = g[[k, 0]];
                }
                acc(i, da)
            })),
        )
    }

    /// 1-D convolution of a stacked `4 x d` grid per row with `C` kernels of
    /// size `4 x 3`, stride 1, same padding along the width axis.
    ///
    /// `self` is `n x 4d` (four concatenated `d`-wide rows), `kernels` is
    /// `C x 12` (row-major `4 x 3` per channel); the output is `n x (C*d)`.
    pub fn conv4x3(&self, kernels: &Var, d: usize) -> Var {
        let x = self.value();
        let k = kernels.value();
        assert_eq!(x.ncols(), 4 * d, "conv4x3: input must be n x 4d");
        assert_eq!(k.ncols(), 12, "conv4x3: kernels must be C x 12");
        let n = x.nrows();
        let channels = k.nrows();
        let (i, j) = (self.idx, kernels.idx);

        let grid = move |xm: &Matrix, b: usize, row: usize, p: isize| -> f64 {
            if p < 0 || p as usize >= d {
                0.0
            } else {
                xm[[b, row * d + p as usize]]
            }
        };

        let mut out = Array2::zeros((n, channels * d));
        for b in 0..n {
            for c in 0..channels {
                for p in 0..d {
                    let mut s = 0.0;
                    for row in 0..4 {
                        for kk in 0..3 {
                            s += k[[c, row * 3 + kk]]
                                * grid(&x, b, row, p as isize + kk as isize - 1);
                        }
                    }
                    out[[b, c * d + p]] = s;
                }
            }
        }

        push(
            self.tape(),
            out,
            Some(Box::new(move |g, acc| {
                let mut dx = Array2::zeros((n, 4 * d));
                let mut dk = Array2::zeros((channels, 12));
                for b in 0..n {
                    for c in 0..channels {
                        for p in 0..d {
                            let go = g[[b, c * d + p]];
                            if go == 0.0 {
                                continue;
                            }
                            for row in 0..4 {
                                for kk in 0..3 {
                                    let q = p as isize + kk as isize - 1;
                                    if q >= 0 && (q as usize) < d {
                                        dx[[b, row * d + q as usize]] += go * k[[c, row * 3 + kk]];
                                        dk[[c, row * 3 + kk]] += go * grid(&x, b, row, q);
                                    }
                                }
                            }
                        }
                    }
                }
                acc(i, dx);
                acc(j, dk);
            })),
        )
    }
}

/// Concatenate along columns.
pub fn concat_cols(parts: &[&Var]) -> Var {
    assert!(!parts.is_empty());
    let tape = Rc::clone(parts[0].tape());
    let values: Vec<Matrix> = parts.iter().map(|v| v.value()).collect();
    let n = values[0].nrows();
    for v in &values {
        assert_eq!(v.nrows(), n, "concat_cols: row counts differ");
    }
    let total: usize = values.iter().map(|v| v.ncols()).sum();
    let mut out = Array2::zeros((n, total));
    let mut offset = 0;
    let mut spans = Vec::new();
    for (part, v) in parts.iter().zip(&values) {
        out.slice_mut(ndarray::s![.., offset..offset + v.ncols()])
            .assign(v);
        spans.push((part.idx, offset, v.ncols()));
        offset += v.ncols();
    }
    push(
        &tape,
        out,
        Some(Box::new(move |g, acc| {
            for &(idx, off, width) in &spans {
                acc(idx, g.slice(ndarray::s![.., off..off + width]).to_owned());
            }
        })),
    )
}

/// Gradients of a scalar loss with respect to every node on its tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`, or a zero matrix if the loss does not depend on it.
    pub fn get(&self, v: &Var) -> Matrix {
        match self.grads.get(v.idx).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Array2::zeros((r, c))
            }
        }
    }
}

/// Reverse pass from a `1 x 1` loss node.
pub fn backward(loss: &Var) -> Gradients {
    assert_eq!(loss.shape(), (1, 1), "backward requires a scalar loss");
    let nodes = loss.tape.nodes.borrow();
    let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
    grads[loss.idx] = Some(Array2::from_elem((1, 1), 1.0));
    for i in (0..=loss.idx).rev() {
        let g = match &grads[i] {
            Some(g) => g.clone(),
            None => continue,
        };
        if let Some(back) = &nodes[i].back {
            back(&g, &mut |p, contrib| match &mut grads[p] {
                Some(existing) => *existing += &contrib,
                slot @ None => *slot = Some(contrib),
            });
        }
    }
    Gradients { grads }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_matrix(rng: &mut StdRng, r: usize, c: usize) -> Matrix {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central finite differences of `f` w.r.t. one input matrix.
    fn fd_grad<F: Fn(&[Matrix]) -> f64>(f: &F, inputs: &[Matrix], which: usize) -> Matrix {
        let h = 1e-6;
        let mut g = Array2::zeros(inputs[which].dim());
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                let mut plus = inputs.to_vec();
                plus[which][[r, c]] += h;
                let mut minus = inputs.to_vec();
                minus[which][[r, c]] -= h;
                g[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
        }
        g
    }

    fn check_op<F>(inputs: Vec<Matrix>, forward: F)
    where
        F: Fn(&[Var]) -> Var,
    {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| leaf(&tape, m.clone())).collect();
        let loss = forward(&vars);
        let grads = backward(&loss);

        let scalar_of = |ms: &[Matrix]| -> f64 {
            let t = Tape::new();
            let vs: Vec<Var> = ms.iter().map(|m| leaf(&t, m.clone())).collect();
            forward(&vs).scalar()
        };
        for which in 0..inputs.len() {
            let fd = fd_grad(&scalar_of, &inputs, which);
            let ad = grads.get(&vars[which]);
            for (a, b) in ad.iter().zip(fd.iter()) {
                assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())),
                    "grad mismatch: ad={a} fd={b}"
                );
            }
        }
    }

    #[test]
    fn add_mul_matmul_grads() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 3, 4);
        let w = rand_matrix(&mut rng, 4, 2);
        check_op(vec![a, b, w], |v| {
            v[0].add(&v[1]).mul(&v[0]).matmul(&v[2]).tanh().sum_all()
        });
    }

    #[test]
    fn activation_grads() {
        let mut rng = StdRng::seed_from_u64(8);
        let a = rand_matrix(&mut rng, 4, 3);
        check_op(vec![a.clone()], |v| v[0].sigmoid().sum_all());
        check_op(vec![a.clone()], |v| v[0].leaky_relu(0.2).sum_all());
        check_op(vec![a.clone()], |v| v[0].exp().mean_all());
        check_op(vec![a], |v| v[0].clamp(-0.5, 0.5).sum_all());
    }

    #[test]
    fn gather_scatter_grads() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = rand_matrix(&mut rng, 5, 3);
        check_op(vec![a.clone()], |v| {
            v[0].gather_rows(&[0, 2, 2, 4]).sigmoid().sum_all()
        });
        check_op(vec![a], |v| {
            v[0].scatter_add_rows(&[1, 1, 0, 3, 2], 4).tanh().sum_all()
        });
    }

    #[test]
    fn softmax_pick_grads() {
        let mut rng = StdRng::seed_from_u64(10);
        let a = rand_matrix(&mut rng, 4, 6);
        check_op(vec![a], |v| {
            v[0].log_softmax_rows().pick(&[1, 0, 5, 3]).sum_all()
        });
    }

    #[test]
    fn concat_slice_grads() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = rand_matrix(&mut rng, 3, 2);
        let b = rand_matrix(&mut rng, 3, 3);
        check_op(vec![a, b], |v| {
            concat_cols(&[&v[0], &v[1]])
                .slice_cols(1, 4)
                .sigmoid()
                .sum_all()
        });
    }

    #[test]
    fn conv4x3_grads() {
        let mut rng = StdRng::seed_from_u64(12);
        let d = 5;
        let x = rand_matrix(&mut rng, 2, 4 * d);
        let k = rand_matrix(&mut rng, 3, 12);
        check_op(vec![x, k], |v| v[0].conv4x3(&v[1], d).tanh().sum_all());
    }

    #[test]
    fn row_ops_grads() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = rand_matrix(&mut rng, 4, 3);
        let bias = rand_matrix(&mut rng, 1, 3);
        check_op(vec![a.clone(), bias], |v| {
            v[0].add_row(&v[1]).sigmoid().sum_all()
        });
        check_op(vec![a], |v| {
            v[0].scale_rows(&array![0.5, -1.0, 2.0, 0.0])
                .row_sum()
                .tanh()
                .sum_all()
        });
    }

    #[test]
    fn log_softmax_rows_sum_to_one() {
        let tape = Tape::new();
        let x = leaf(&tape, array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]]);
        let p = x.log_softmax_rows().exp().value();
        for row in p.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
