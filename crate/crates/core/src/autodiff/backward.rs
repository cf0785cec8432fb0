use alloc::vec;
use alloc::vec::Vec;

use super::ops::{clamp_prob, conv_visit, corners, focal_term_grad};
use super::{Node, Op, Tape, Var};
use crate::error::Result;
use crate::real::Real;
use crate::tensor::Tensor;

/// Gradients of every `requires_grad` leaf reachable from the loss.
#[derive(Debug)]
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
    shapes: Vec<Vec<usize>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, v: Var) -> Option<&[R]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn tensor(&self, v: Var) -> Option<Tensor<R>> {
        self.get(v)
            .map(|g| Tensor::new(&self.shapes[v.0], g.to_vec()).expect("gradient matches node shape"))
    }

    /// Moves a gradient out, leaving `None`.
    pub fn take(&mut self, v: Var) -> Option<Vec<R>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Adds into the gradient buffer of `v`, allocating it on first use.
fn with_grad<R: Real>(
    grads: &mut [Option<Vec<R>>],
    nodes: &[Node<R>],
    v: Var,
    f: impl FnOnce(&mut [R]),
) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let buf = grads[v.0].get_or_insert_with(|| vec![R::zero(); nodes[v.0].value.len()]);
    f(buf);
}

impl<R: Real> Tape<R> {
    /// Reverse sweep from a scalar loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<R>> {
        self.check_scalar(loss)?;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<R>>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![R::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            propagate(nodes, &mut grads, node, &g);
        }
        // Only leaf gradients are reported.
        for (i, n) in nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.into_iter().map(|n| n.shape).collect(),
        })
    }
}

fn propagate<R: Real>(nodes: &[Node<R>], grads: &mut [Option<Vec<R>>], node: &Node<R>, g: &[R]) {
    let val = |v: Var| -> &[R] { &nodes[v.0].value };
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            let (av, bv) = (val(a), val(b));
            with_grad(grads, nodes, a, |ga| {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        ga[i * k + p] += grow.iter().zip(brow).map(|(&x, &y)| x * y).sum::<R>();
                    }
                }
            });
            with_grad(grads, nodes, b, |gb| {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s = av[i * k + p];
                        if s == R::zero() {
                            continue;
                        }
                        for (o, &x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += s * x;
                        }
                    }
                }
            });
        }
        &Op::Transpose { a, m, n } => with_grad(grads, nodes, a, |ga| {
            for i in 0..m {
                for j in 0..n {
                    ga[i * n + j] += g[j * m + i];
                }
            }
        }),
        &Op::Reshape { a } => with_grad(grads, nodes, a, |ga| add_into(ga, g)),
        &Op::Add { a, b } => {
            with_grad(grads, nodes, a, |ga| add_into(ga, g));
            with_grad(grads, nodes, b, |gb| add_into(gb, g));
        }
        &Op::Sub { a, b } => {
            with_grad(grads, nodes, a, |ga| add_into(ga, g));
            with_grad(grads, nodes, b, |gb| {
                for (o, &x) in gb.iter_mut().zip(g) {
                    *o -= x;
                }
            });
        }
        &Op::Mul { a, b } => {
            let (av, bv) = (val(a), val(b));
            with_grad(grads, nodes, a, |ga| {
                for ((o, &x), &y) in ga.iter_mut().zip(g).zip(bv) {
                    *o += x * y;
                }
            });
            with_grad(grads, nodes, b, |gb| {
                for ((o, &x), &y) in gb.iter_mut().zip(g).zip(av) {
                    *o += x * y;
                }
            });
        }
        &Op::AddRow { a, bias, n } => {
            with_grad(grads, nodes, a, |ga| add_into(ga, g));
            with_grad(grads, nodes, bias, |gb| {
                for row in g.chunks(n) {
                    add_into(gb, row);
                }
            });
        }
        &Op::AddChannel { a, bias, plane } => {
            with_grad(grads, nodes, a, |ga| add_into(ga, g));
            with_grad(grads, nodes, bias, |gb| {
                for (o, ch) in gb.iter_mut().zip(g.chunks(plane)) {
                    *o += ch.iter().copied().sum::<R>();
                }
            });
        }
        &Op::Scale { a, s } | &Op::GradScale { a, s } => with_grad(grads, nodes, a, |ga| {
            for (o, &x) in ga.iter_mut().zip(g) {
                *o += s * x;
            }
        }),
        &Op::Relu { a } => {
            let av = val(a);
            with_grad(grads, nodes, a, |ga| {
                for ((o, &x), &inp) in ga.iter_mut().zip(g).zip(av) {
                    if inp > R::zero() {
                        *o += x;
                    }
                }
            })
        }
        &Op::Sigmoid { a } => with_grad(grads, nodes, a, |ga| {
            for ((o, &x), &y) in ga.iter_mut().zip(g).zip(&node.value) {
                *o += x * y * (R::one() - y);
            }
        }),
        &Op::Softmax {
            a,
            outer,
            len,
            inner,
        } => with_grad(grads, nodes, a, |ga| {
            let y = &node.value;
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| o * len * inner + j * inner + i;
                    let dot: R = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                    for j in 0..len {
                        ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
                    }
                }
            }
        }),
        Op::LayerNorm {
            x,
            gain,
            bias,
            n,
            xhat,
            rstd,
        } => {
            let n = *n;
            let gv = val(*gain);
            with_grad(grads, nodes, *x, |gx| {
                let inv_n = R::one() / R::of(n as f64);
                for (r, &rs) in rstd.iter().enumerate() {
                    let row = r * n..(r + 1) * n;
                    let mut mean_d = R::zero();
                    let mut mean_dh = R::zero();
                    for j in 0..n {
                        let d = g[row.start + j] * gv[j];
                        mean_d += d;
                        mean_dh += d * xhat[row.start + j];
                    }
                    mean_d *= inv_n;
                    mean_dh *= inv_n;
                    for j in 0..n {
                        let d = g[row.start + j] * gv[j];
                        gx[row.start + j] += rs * (d - mean_d - xhat[row.start + j] * mean_dh);
                    }
                }
            });
            with_grad(grads, nodes, *gain, |gg| {
                for (gr, hr) in g.chunks(n).zip(xhat.chunks(n)) {
                    for ((o, &d), &h) in gg.iter_mut().zip(gr).zip(hr) {
                        *o += d * h;
                    }
                }
            });
            with_grad(grads, nodes, *bias, |gb| {
                for gr in g.chunks(n) {
                    add_into(gb, gr);
                }
            });
        }
        &Op::Conv2d { x, k, geom } => {
            let (xv, kv) = (val(x), val(k));
            let gm = geom;
            with_grad(grads, nodes, x, |gx| {
                conv_visit(&gm, |ko, ci, ky, kx, oy, range| {
                    let wgt = kv[((ko * gm.c + ci) * gm.kh + ky) * gm.kw + kx];
                    let iy = oy * gm.stride + ky - gm.pad;
                    let grow = &g[(ko * gm.oh + oy) * gm.ow..(ko * gm.oh + oy + 1) * gm.ow];
                    for ox in range {
                        let ix = ox * gm.stride + kx - gm.pad;
                        gx[(ci * gm.h + iy) * gm.w + ix] += wgt * grow[ox];
                    }
                });
            });
            with_grad(grads, nodes, k, |gk| {
                conv_visit(&gm, |ko, ci, ky, kx, oy, range| {
                    let iy = oy * gm.stride + ky - gm.pad;
                    let grow = &g[(ko * gm.oh + oy) * gm.ow..(ko * gm.oh + oy + 1) * gm.ow];
                    let mut acc = R::zero();
                    for ox in range {
                        let ix = ox * gm.stride + kx - gm.pad;
                        acc += xv[(ci * gm.h + iy) * gm.w + ix] * grow[ox];
                    }
                    gk[((ko * gm.c + ci) * gm.kh + ky) * gm.kw + kx] += acc;
                });
            });
        }
        Op::Attention {
            q,
            k,
            v,
            geom,
            probs,
        } => attention_backward(nodes, grads, g, *q, *k, *v, *geom, probs),
        Op::Bilinear {
            map,
            channels,
            plane,
            taps,
        } => with_grad(grads, nodes, *map, |gm| {
            for (p, tap) in taps.iter().enumerate() {
                for ch in 0..*channels {
                    let d = g[p * channels + ch];
                    for &(i, wt) in tap {
                        gm[ch * plane + i] += wt * d;
                    }
                }
            }
        }),
        Op::Deform {
            value,
            offsets,
            weights,
            layout,
        } => {
            let (vv, ov, wv) = (val(*value), val(*offsets), val(*weights));
            let d = nodes[value.0].shape[1];
            let (nh, nl, np) = (layout.heads, layout.levels.len(), layout.points);
            let dh = d / nh;
            let half = R::of(0.5);
            let one = R::one();
            let need_v = nodes[value.0].needs_grad;
            let need_o = nodes[offsets.0].needs_grad;
            let need_w = nodes[weights.0].needs_grad;
            let mut gv = if need_v { vec![R::zero(); vv.len()] } else { Vec::new() };
            let mut go = if need_o { vec![R::zero(); ov.len()] } else { Vec::new() };
            let mut gw = if need_w { vec![R::zero(); wv.len()] } else { Vec::new() };
            let zero_row = vec![R::zero(); dh];
            for (q, &(rx, ry)) in layout.refs.iter().enumerate() {
                for h in 0..nh {
                    let grow = &g[q * d + h * dh..q * d + (h + 1) * dh];
                    for (l, lvl) in layout.levels.iter().enumerate() {
                        for p in 0..np {
                            let s = ((q * nh + h) * nl + l) * np + p;
                            let a = wv[s];
                            let px = rx * R::of(lvl.w as f64) + ov[2 * s] - half;
                            let py = ry * R::of(lvl.h as f64) + ov[2 * s + 1] - half;
                            let (idx, fx, fy) = corners(px, py, lvl.w, lvl.h);
                            let rows: [&[R]; 4] = core::array::from_fn(|c| match idx[c] {
                                Some(ci) => {
                                    let r = (lvl.start + ci) * d + h * dh;
                                    &vv[r..r + dh]
                                }
                                None => &zero_row[..],
                            });
                            // g · v at each corner
                            let dots: [R; 4] = core::array::from_fn(|c| {
                                grow.iter().zip(rows[c]).map(|(&x, &y)| x * y).sum::<R>()
                            });
                            let cw = [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy];
                            if need_w {
                                gw[s] += (0..4).map(|c| cw[c] * dots[c]).sum::<R>();
                            }
                            if need_o {
                                go[2 * s] += a
                                    * ((dots[1] - dots[0]) * (one - fy) + (dots[3] - dots[2]) * fy);
                                go[2 * s + 1] += a
                                    * ((dots[2] - dots[0]) * (one - fx) + (dots[3] - dots[1]) * fx);
                            }
                            if need_v {
                                for c in 0..4 {
                                    if let Some(ci) = idx[c] {
                                        let r = (lvl.start + ci) * d + h * dh;
                                        let f = a * cw[c];
                                        for (o, &x) in gv[r..r + dh].iter_mut().zip(grow) {
                                            *o += f * x;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            with_grad(grads, nodes, *value, |b| add_into(b, &gv));
            with_grad(grads, nodes, *offsets, |b| add_into(b, &go));
            with_grad(grads, nodes, *weights, |b| add_into(b, &gw));
        }
        Op::ConcatRows { parts } => {
            let mut at = 0;
            for &p in parts {
                let len = nodes[p.0].value.len();
                with_grad(grads, nodes, p, |gp| add_into(gp, &g[at..at + len]));
                at += len;
            }
        }
        &Op::SliceRows { a, offset } => with_grad(grads, nodes, a, |ga| {
            add_into(&mut ga[offset..offset + g.len()], g)
        }),
        &Op::Sum { a } => with_grad(grads, nodes, a, |ga| {
            for o in ga.iter_mut() {
                *o += g[0];
            }
        }),
        &Op::Mean { a } => with_grad(grads, nodes, a, |ga| {
            let s = g[0] / R::of(ga.len() as f64);
            for o in ga.iter_mut() {
                *o += s;
            }
        }),
        Op::Focal {
            p,
            target,
            gamma,
            alpha,
            positives,
        } => {
            let pv = val(*p);
            let scale = g[0] / R::of(*positives as f64);
            // Gradient is evaluated at the clamped probability so saturated
            // peaks still receive a signal.
            with_grad(grads, nodes, *p, |gp| {
                for ((o, &pr), &y) in gp.iter_mut().zip(pv).zip(target) {
                    *o += scale * focal_term_grad(clamp_prob(pr), y, *gamma, *alpha);
                }
            });
        }
        &Op::Bce { p, label } => {
            let pr = clamp_prob(val(p)[0]);
            with_grad(grads, nodes, p, |gp| {
                gp[0] += g[0] * (-(label / pr) + (R::one() - label) / (R::one() - pr));
            });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<R: Real>(
    nodes: &[Node<R>],
    grads: &mut [Option<Vec<R>>],
    g: &[R],
    q: Var,
    k: Var,
    v: Var,
    geom: super::AttnGeom,
    probs: &[R],
) {
    let super::AttnGeom { nq, nk, d, heads } = geom;
    let dh = d / heads;
    let scale = R::one() / R::of(dh as f64).sqrt();
    let (qv, kv, vv) = (&nodes[q.0].value, &nodes[k.0].value, &nodes[v.0].value);
    let mut gq = vec![R::zero(); qv.len()];
    let mut gk = vec![R::zero(); kv.len()];
    let mut gv = vec![R::zero(); vv.len()];
    let mut ds = vec![R::zero(); nk];
    for h in 0..heads {
        let c0 = h * dh;
        for i in 0..nq {
            let p = &probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            let gi = &g[i * d + c0..i * d + c0 + dh];
            let mut dot = R::zero();
            for j in 0..nk {
                let vj = &vv[j * d + c0..j * d + c0 + dh];
                let dp = gi.iter().zip(vj).map(|(&a, &b)| a * b).sum::<R>();
                ds[j] = dp;
                dot += dp * p[j];
                for (o, &x) in gv[j * d + c0..j * d + c0 + dh].iter_mut().zip(gi) {
                    *o += p[j] * x;
                }
            }
            for j in 0..nk {
                ds[j] = p[j] * (ds[j] - dot) * scale;
            }
            for j in 0..nk {
                let s = ds[j];
                let kj = &kv[j * d + c0..j * d + c0 + dh];
                for (o, &x) in gq[i * d + c0..i * d + c0 + dh].iter_mut().zip(kj) {
                    *o += s * x;
                }
                let qi = &qv[i * d + c0..i * d + c0 + dh];
                for (o, &x) in gk[j * d + c0..j * d + c0 + dh].iter_mut().zip(qi) {
                    *o += s * x;
                }
            }
        }
    }
    with_grad(grads, nodes, q, |b| add_into(b, &gq));
    with_grad(grads, nodes, k, |b| add_into(b, &gk));
    with_grad(grads, nodes, v, |b| add_into(b, &gv));
}

#[inline]
fn add_into<R: Real>(dst: &mut [R], src: &[R]) {
    for (o, &x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}
