//! Forward tensor operations with recorded reverse-mode derivatives.
//!
//! Every operation validates operand shapes up front and, when recording is
//! active, attaches a backward closure that maps the output gradient to
//! per-parent gradient contributions. Reductions use a fixed left-to-right
//! order so single-threaded runs are bit-reproducible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::{grad_enabled, BackwardFn, Node, Tensor};

/// Large negative fill for masked attention logits; exp underflows to zero.
const MASK_FILL: f64 = -1e30;

fn make(
    shape: Vec<usize>,
    values: Vec<f64>,
    parents: Vec<Tensor>,
    backward: impl FnOnce() -> BackwardFn,
) -> Tensor {
    if grad_enabled() && parents.iter().any(Tensor::tracked) {
        let node = Node {
            backward: backward(),
            parents,
        };
        Tensor::build(shape, values, false, Some(node))
    } else {
        Tensor::build(shape, values, false, None)
    }
}

/// True when `rhs` broadcasts over the leading axes of `lhs`.
fn suffix_of(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

/// Sums `grad` (of the broadcast shape) down to the suffix operand's shape.
fn reduce_to_suffix(grad: &[f64], suffix_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; suffix_len];
    for (i, g) in grad.iter().enumerate() {
        out[i % suffix_len] += g;
    }
    out
}

/// Elementwise sum; `b` may broadcast over the leading axes of `a`.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if !suffix_of(&sa, &sb) {
        return Err(Error::ShapeMismatch {
            op: "add",
            lhs: sa,
            rhs: sb,
        });
    }
    let (av, bv) = (a.values(), b.values());
    let rlen = bv.len();
    let values: Vec<f64> = av.iter().enumerate().map(|(i, x)| x + bv[i % rlen]).collect();
    drop((av, bv));
    Ok(make(sa, values, vec![a.clone(), b.clone()], || {
        Box::new(move |grad, _out, _parents| {
            let db = if rlen == grad.len() {
                grad.to_vec()
            } else {
                reduce_to_suffix(grad, rlen)
            };
            vec![Some(grad.to_vec()), Some(db)]
        })
    }))
}

/// Elementwise product; `b` may broadcast over the leading axes of `a`.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if !suffix_of(&sa, &sb) {
        return Err(Error::ShapeMismatch {
            op: "mul",
            lhs: sa,
            rhs: sb,
        });
    }
    let (av, bv) = (a.values(), b.values());
    let rlen = bv.len();
    let values: Vec<f64> = av.iter().enumerate().map(|(i, x)| x * bv[i % rlen]).collect();
    drop((av, bv));
    Ok(make(sa, values, vec![a.clone(), b.clone()], || {
        Box::new(move |grad, _out, parents| {
            let av = parents[0].values();
            let bv = parents[1].values();
            let da: Vec<f64> = grad
                .iter()
                .enumerate()
                .map(|(i, g)| g * bv[i % rlen])
                .collect();
            let mut db = vec![0.0; rlen];
            for (i, g) in grad.iter().enumerate() {
                db[i % rlen] += g * av[i];
            }
            vec![Some(da), Some(db)]
        })
    }))
}

/// Multiplication by a constant.
pub fn scale(a: &Tensor, factor: f64) -> Tensor {
    let values: Vec<f64> = a.values().iter().map(|x| x * factor).collect();
    make(a.shape(), values, vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| {
            vec![Some(grad.iter().map(|g| g * factor).collect())]
        })
    })
}

// Dense kernels. Plain index loops over row slices; the inner loops
// auto-vectorize under opt-level >= 2.

pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// out[m,k] += a[m,n] . b[k,n]^T
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o += acc;
        }
    }
}

/// out[k,n] += a[m,k]^T . b[m,n]
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for l in 0..m {
        let a_row = &a[l * k..(l + 1) * k];
        let b_row = &b[l * n..(l + 1) * n];
        for (i, &a_li) in a_row.iter().enumerate() {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_li * bv;
            }
        }
    }
}

/// 2-D matrix product `[M,K] x [K,N] -> [M,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: sa,
            rhs: sb,
        });
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut values = vec![0.0; m * n];
    matmul_nn(&a.values(), &b.values(), m, k, n, &mut values);
    Ok(make(vec![m, n], values, vec![a.clone(), b.clone()], || {
        Box::new(move |grad, _out, parents| {
            let av = parents[0].values();
            let bv = parents[1].values();
            let mut da = vec![0.0; m * k];
            matmul_nt(grad, &bv, m, n, k, &mut da);
            let mut db = vec![0.0; k * n];
            matmul_tn(&av, grad, m, k, n, &mut db);
            vec![Some(da), Some(db)]
        })
    }))
}

/// Batched matrix product `[B,M,K] x [B,K,N] -> [B,M,N]`; with
/// `transpose_rhs` the right operand is `[B,N,K]` and used transposed.
pub fn bmm(a: &Tensor, b: &Tensor, transpose_rhs: bool) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    let compatible = sa.len() == 3
        && sb.len() == 3
        && sa[0] == sb[0]
        && if transpose_rhs {
            sa[2] == sb[2]
        } else {
            sa[2] == sb[1]
        };
    if !compatible {
        return Err(Error::ShapeMismatch {
            op: if transpose_rhs { "bmm_nt" } else { "bmm" },
            lhs: sa,
            rhs: sb,
        });
    }
    let (batch, m, k) = (sa[0], sa[1], sa[2]);
    let n = if transpose_rhs { sb[1] } else { sb[2] };
    let mut values = vec![0.0; batch * m * n];
    {
        let av = a.values();
        let bv = b.values();
        for bi in 0..batch {
            let a_blk = &av[bi * m * k..(bi + 1) * m * k];
            let b_blk = &bv[bi * k * n..(bi + 1) * k * n];
            let out_blk = &mut values[bi * m * n..(bi + 1) * m * n];
            if transpose_rhs {
                matmul_nt(a_blk, b_blk, m, k, n, out_blk);
            } else {
                matmul_nn(a_blk, b_blk, m, k, n, out_blk);
            }
        }
    }
    Ok(make(
        vec![batch, m, n],
        values,
        vec![a.clone(), b.clone()],
        || {
            Box::new(move |grad, _out, parents| {
                let av = parents[0].values();
                let bv = parents[1].values();
                let mut da = vec![0.0; batch * m * k];
                let mut db = vec![0.0; bv.len()];
                for bi in 0..batch {
                    let g_blk = &grad[bi * m * n..(bi + 1) * m * n];
                    let a_blk = &av[bi * m * k..(bi + 1) * m * k];
                    let b_blk = &bv[bi * k * n..(bi + 1) * k * n];
                    let da_blk = &mut da[bi * m * k..(bi + 1) * m * k];
                    let db_blk = &mut db[bi * k * n..(bi + 1) * k * n];
                    if transpose_rhs {
                        // out = a . b^T with b: [n,k]
                        matmul_nn(g_blk, b_blk, m, n, k, da_blk);
                        matmul_tn(g_blk, a_blk, m, n, k, db_blk);
                    } else {
                        matmul_nt(g_blk, b_blk, m, n, k, da_blk);
                        matmul_tn(a_blk, g_blk, m, k, n, db_blk);
                    }
                }
                vec![Some(da), Some(db)]
            })
        },
    ))
}

pub fn transpose2d(a: &Tensor) -> Result<Tensor> {
    let sa = a.shape();
    if sa.len() != 2 {
        return Err(Error::InvalidShape {
            op: "transpose2d",
            detail: format!("expected rank 2, got {:?}", sa),
        });
    }
    let (r, c) = (sa[0], sa[1]);
    let av = a.values();
    let mut values = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            values[j * r + i] = av[i * c + j];
        }
    }
    drop(av);
    Ok(make(vec![c, r], values, vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| {
            let mut dg = vec![0.0; r * c];
            for j in 0..c {
                for i in 0..r {
                    dg[i * c + j] = grad[j * r + i];
                }
            }
            vec![Some(dg)]
        })
    }))
}

/// Reinterprets the value buffer under a new shape of equal volume.
pub fn reshape(a: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    let volume: usize = shape.iter().product();
    if volume != a.len() {
        return Err(Error::InvalidShape {
            op: "reshape",
            detail: format!("cannot view {:?} as {:?}", a.shape(), shape),
        });
    }
    Ok(make(shape, a.to_vec(), vec![a.clone()], || {
        Box::new(|grad, _out, _parents| vec![Some(grad.to_vec())])
    }))
}

/// Gathers rows of a `[N, m]` table. `None` entries produce zero rows and
/// receive no gradient, which is how padding positions are represented.
pub fn gather_rows(table: &Tensor, indices: &[Option<usize>]) -> Result<Tensor> {
    let st = table.shape();
    if st.len() != 2 {
        return Err(Error::InvalidShape {
            op: "gather_rows",
            detail: format!("expected rank 2 table, got {:?}", st),
        });
    }
    let (rows, width) = (st[0], st[1]);
    let tv = table.values();
    let mut values = vec![0.0; indices.len() * width];
    for (i, idx) in indices.iter().enumerate() {
        if let Some(r) = *idx {
            if r >= rows {
                return Err(Error::IndexOutOfRange { index: r, len: rows });
            }
            values[i * width..(i + 1) * width].copy_from_slice(&tv[r * width..(r + 1) * width]);
        }
    }
    drop(tv);
    let captured: Vec<Option<usize>> = indices.to_vec();
    Ok(make(
        vec![indices.len(), width],
        values,
        vec![table.clone()],
        move || {
            Box::new(move |grad, _out, _parents| {
                let mut dt = vec![0.0; rows * width];
                for (i, idx) in captured.iter().enumerate() {
                    if let Some(r) = *idx {
                        let src = &grad[i * width..(i + 1) * width];
                        let dst = &mut dt[r * width..(r + 1) * width];
                        for (d, g) in dst.iter_mut().zip(src) {
                            *d += g;
                        }
                    }
                }
                vec![Some(dt)]
            })
        },
    ))
}

/// Softmax over the last axis.
pub fn softmax_last(a: &Tensor) -> Result<Tensor> {
    let sa = a.shape();
    let cols = *sa.last().ok_or(Error::InvalidShape {
        op: "softmax_last",
        detail: "rank 0 tensor".into(),
    })?;
    let av = a.values();
    let mut values = vec![0.0; av.len()];
    for (row, out_row) in av.chunks_exact(cols).zip(values.chunks_exact_mut(cols)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &x) in out_row.iter_mut().zip(row) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in out_row.iter_mut() {
            *o /= sum;
        }
    }
    drop(av);
    Ok(make(sa, values, vec![a.clone()], || {
        Box::new(move |grad, out, _parents| {
            let mut dg = vec![0.0; grad.len()];
            for ((g_row, s_row), d_row) in grad
                .chunks_exact(cols)
                .zip(out.chunks_exact(cols))
                .zip(dg.chunks_exact_mut(cols))
            {
                let dot: f64 = g_row.iter().zip(s_row).map(|(g, s)| g * s).sum();
                for ((d, &g), &s) in d_row.iter_mut().zip(g_row).zip(s_row) {
                    *d = s * (g - dot);
                }
            }
            vec![Some(dg)]
        })
    }))
}

/// Fills entries above the diagonal of the trailing `[L, L]` matrices with a
/// large negative constant so softmax assigns them zero weight.
pub fn causal_mask_fill(a: &Tensor) -> Result<Tensor> {
    let sa = a.shape();
    let rank = sa.len();
    if rank < 2 || sa[rank - 1] != sa[rank - 2] {
        return Err(Error::InvalidShape {
            op: "causal_mask_fill",
            detail: format!("expected trailing square matrices, got {:?}", sa),
        });
    }
    let l = sa[rank - 1];
    let mut values = a.to_vec();
    for block in values.chunks_exact_mut(l * l) {
        for i in 0..l {
            for j in (i + 1)..l {
                block[i * l + j] = MASK_FILL;
            }
        }
    }
    Ok(make(sa, values, vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| {
            let mut dg = grad.to_vec();
            for block in dg.chunks_exact_mut(l * l) {
                for i in 0..l {
                    for j in (i + 1)..l {
                        block[i * l + j] = 0.0;
                    }
                }
            }
            vec![Some(dg)]
        })
    }))
}

/// Layer normalization over the last axis with learned gain and bias.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let sx = x.shape();
    let cols = *sx.last().ok_or(Error::InvalidShape {
        op: "layer_norm",
        detail: "rank 0 input".into(),
    })?;
    if gamma.shape() != vec![cols] || beta.shape() != vec![cols] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: sx,
            rhs: gamma.shape(),
        });
    }
    let xv = x.values();
    let gv = gamma.values();
    let bv = beta.values();
    let mut values = vec![0.0; xv.len()];
    for (row, out_row) in xv.chunks_exact(cols).zip(values.chunks_exact_mut(cols)) {
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        for ((o, &v), (&g, &b)) in out_row.iter_mut().zip(row).zip(gv.iter().zip(bv.iter())) {
            *o = (v - mean) * inv_std * g + b;
        }
    }
    drop((xv, gv, bv));
    Ok(make(
        sx,
        values,
        vec![x.clone(), gamma.clone(), beta.clone()],
        || {
            Box::new(move |grad, _out, parents| {
                let xv = parents[0].values();
                let gv = parents[1].values();
                let mut dx = vec![0.0; xv.len()];
                let mut dgamma = vec![0.0; cols];
                let mut dbeta = vec![0.0; cols];
                let c = cols as f64;
                for ((row, g_row), dx_row) in xv
                    .chunks_exact(cols)
                    .zip(grad.chunks_exact(cols))
                    .zip(dx.chunks_exact_mut(cols))
                {
                    let mean = row.iter().sum::<f64>() / c;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv_std).collect();
                    let dxhat: Vec<f64> = g_row.iter().zip(gv.iter()).map(|(g, w)| g * w).collect();
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(&xhat).map(|(d, h)| d * h).sum();
                    for i in 0..cols {
                        dgamma[i] += g_row[i] * xhat[i];
                        dbeta[i] += g_row[i];
                        dx_row[i] = inv_std * (dxhat[i] - s1 / c - xhat[i] * s2 / c);
                    }
                }
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            })
        },
    ))
}

pub fn relu(a: &Tensor) -> Tensor {
    let values: Vec<f64> = a.values().iter().map(|&x| x.max(0.0)).collect();
    make(a.shape(), values, vec![a.clone()], || {
        Box::new(|grad, out, _parents| {
            let dg: Vec<f64> = grad
                .iter()
                .zip(out)
                .map(|(g, &o)| if o > 0.0 { *g } else { 0.0 })
                .collect();
            vec![Some(dg)]
        })
    })
}

/// Inverted dropout with the given drop `rate`; draws one uniform per entry
/// from the caller's generator. `rate == 0` is the identity.
pub fn dropout<R: Rng>(a: &Tensor, rate: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument {
            context: format!("dropout rate must be in [0, 1), got {rate}"),
        });
    }
    if rate == 0.0 {
        return Ok(a.clone());
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..a.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect();
    let values: Vec<f64> = a.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(make(a.shape(), values, vec![a.clone()], move || {
        Box::new(move |grad, _out, _parents| {
            vec![Some(grad.iter().zip(&mask).map(|(g, m)| g * m).collect())]
        })
    }))
}

/// Mean cross-entropy of `[R, C]` logits against integer targets; `None`
/// targets are ignored and contribute neither loss nor gradient.
pub fn cross_entropy(logits: &Tensor, targets: &[Option<usize>]) -> Result<Tensor> {
    let sl = logits.shape();
    if sl.len() != 2 || sl[0] != targets.len() {
        return Err(Error::InvalidShape {
            op: "cross_entropy",
            detail: format!("logits {:?} vs {} targets", sl, targets.len()),
        });
    }
    let cols = sl[1];
    let active = targets.iter().flatten().count();
    if active == 0 {
        return Err(Error::InvalidArgument {
            context: "cross_entropy: every target is ignored".into(),
        });
    }
    let lv = logits.values();
    let mut total = 0.0;
    for (row, target) in lv.chunks_exact(cols).zip(targets) {
        if let Some(t) = *target {
            if t >= cols {
                return Err(Error::IndexOutOfRange { index: t, len: cols });
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
    }
    drop(lv);
    let captured: Vec<Option<usize>> = targets.to_vec();
    Ok(make(
        vec![],
        vec![total / active as f64],
        vec![logits.clone()],
        move || {
            Box::new(move |grad, _out, parents| {
                let lv = parents[0].values();
                let coeff = grad[0] / active as f64;
                let mut dl = vec![0.0; lv.len()];
                for ((row, target), d_row) in lv
                    .chunks_exact(cols)
                    .zip(&captured)
                    .zip(dl.chunks_exact_mut(cols))
                {
                    if let Some(t) = *target {
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                        for (j, (d, &x)) in d_row.iter_mut().zip(row).enumerate() {
                            let p = (x - max).exp() / sum;
                            *d = coeff * (p - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                }
                vec![Some(dl)]
            })
        },
    ))
}

/// Slice `[start, start+len)` of the last axis.
pub fn narrow_last(a: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let sa = a.shape();
    let cols = *sa.last().ok_or(Error::InvalidShape {
        op: "narrow_last",
        detail: "rank 0 tensor".into(),
    })?;
    if start + len > cols {
        return Err(Error::InvalidShape {
            op: "narrow_last",
            detail: format!("slice {start}..{} exceeds width {cols}", start + len),
        });
    }
    let av = a.values();
    let rows = av.len() / cols;
    let mut values = Vec::with_capacity(rows * len);
    for row in av.chunks_exact(cols) {
        values.extend_from_slice(&row[start..start + len]);
    }
    drop(av);
    let mut out_shape = sa;
    *out_shape.last_mut().unwrap() = len;
    Ok(make(out_shape, values, vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| {
            let mut dg = vec![0.0; rows * cols];
            for (g_row, d_row) in grad.chunks_exact(len).zip(dg.chunks_exact_mut(cols)) {
                d_row[start..start + len].copy_from_slice(g_row);
            }
            vec![Some(dg)]
        })
    }))
}

/// Concatenates tensors along the last axis; leading dims must match.
pub fn concat_last(parts: &[Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::EmptyInput {
            context: "concat_last",
        });
    }
    let lead: Vec<usize> = {
        let s = parts[0].shape();
        s[..s.len() - 1].to_vec()
    };
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| {
            let s = p.shape();
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat_last",
                    lhs: parts[0].shape(),
                    rhs: s,
                });
            }
            Ok(*s.last().unwrap())
        })
        .collect::<Result<_>>()?;
    let total: usize = widths.iter().sum();
    let rows: usize = lead.iter().product();
    let mut values = vec![0.0; rows * total];
    let mut offset = 0;
    for (part, &w) in parts.iter().zip(&widths) {
        let pv = part.values();
        for (r, row) in pv.chunks_exact(w).enumerate() {
            values[r * total + offset..r * total + offset + w].copy_from_slice(row);
        }
        offset += w;
    }
    let mut out_shape = lead;
    out_shape.push(total);
    Ok(make(out_shape, values, parts.to_vec(), move || {
        Box::new(move |grad, _out, _parents| {
            let mut offset = 0;
            widths
                .iter()
                .map(|&w| {
                    let mut dp = vec![0.0; rows * w];
                    for (r, d_row) in dp.chunks_exact_mut(w).enumerate() {
                        d_row.copy_from_slice(&grad[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    Some(dp)
                })
                .collect()
        })
    }))
}

/// Sum of all entries as a scalar.
pub fn sum_all(a: &Tensor) -> Tensor {
    let total: f64 = a.values().iter().sum();
    let len = a.len();
    make(vec![], vec![total], vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| vec![Some(vec![grad[0]; len])])
    })
}

/// Mean of all entries as a scalar.
pub fn mean_all(a: &Tensor) -> Tensor {
    let len = a.len();
    let total: f64 = a.values().iter().sum();
    make(vec![], vec![total / len as f64], vec![a.clone()], || {
        Box::new(move |grad, _out, _parents| vec![Some(vec![grad[0] / len as f64; len])])
    })
}
