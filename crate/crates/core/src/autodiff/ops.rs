use alloc::vec;
use alloc::vec::Vec;
use alloc::sync::Arc;

use super::{AttnGeom, ConvGeom, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the losses.
pub const PROB_EPS: f64 = 1e-7;

/// One level of a multi-scale token set, stored row-major at `start..start + h * w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeformLevel {
    pub h: usize,
    pub w: usize,
    pub start: usize,
}

/// Static geometry of a multi-scale sampling attention call.
///
/// Offsets are laid out `[query, head, level, point, xy]` in pixel units of
/// the sampled level; weights are `[query, head, level * point]` and should
/// already be normalized per head. Reference points are normalized `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformLayout<R> {
    pub levels: Vec<DeformLevel>,
    pub refs: Vec<(R, R)>,
    pub heads: usize,
    pub points: usize,
}

impl<R: Real> DeformLayout<R> {
    pub fn tokens(&self) -> usize {
        self.levels.iter().map(|l| l.h * l.w).sum()
    }
}

/// Bilinear corner taps with zero padding outside the grid.
#[inline]
pub(crate) fn corners<R: Real>(px: R, py: R, w: usize, h: usize) -> ([Option<usize>; 4], R, R) {
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let x0 = x0.to_i64().unwrap_or(i64::MIN / 2);
    let y0 = y0.to_i64().unwrap_or(i64::MIN / 2);
    let at = |x: i64, y: i64| -> Option<usize> {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            Some(y as usize * w + x as usize)
        } else {
            None
        }
    };
    (
        [at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1)],
        fx,
        fy,
    )
}

impl<R: Real> Tape<R> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let s = av[i * k + p];
                if s == R::zero() {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &x) in row.iter_mut().zip(brow) {
                    *o += s * x;
                }
            }
        }
        self.charge(2 * (m * k * n) as u64);
        Ok(self.push(out, vec![m, n], Op::MatMul { a, b, m, k, n }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::dim("transpose", s, &[2]));
        }
        let (m, n) = (s[0], s[1]);
        let av = self.value(a);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        Ok(self.push(out, vec![n, m], Op::Transpose { a, m, n }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() {
            return Err(Error::dim("reshape", self.shape(a), shape));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(out, shape.to_vec(), Op::Reshape { a }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(R, R) -> R) -> Vec<R> {
        let out: Vec<R> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.charge(out.len() as u64);
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Mul { a, b }))
    }

    /// `a[m, n] + bias[n]` broadcast over rows.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(bias).to_vec());
        let n = *sa.last().unwrap_or(&0);
        if sb.iter().product::<usize>() != n {
            return Err(Error::dim("add_row_bias", &sa, &sb));
        }
        let bv = self.value(bias);
        let out: Vec<R> = self
            .value(a)
            .chunks(n)
            .flat_map(|row| row.iter().zip(bv).map(|(&x, &b)| x + b))
            .collect();
        self.charge(out.len() as u64);
        Ok(self.push(out, sa, Op::AddRow { a, bias, n }))
    }

    /// `a[C, ...] + bias[C]` broadcast over each channel plane.
    pub fn add_channel_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(bias).to_vec());
        let c = sb.iter().product::<usize>();
        if sa.is_empty() || sa[0] != c {
            return Err(Error::dim("add_channel_bias", &sa, &sb));
        }
        let plane = self.value(a).len() / c;
        let bv = self.value(bias);
        let out: Vec<R> = self
            .value(a)
            .chunks(plane)
            .zip(bv)
            .flat_map(|(ch, &b)| ch.iter().map(move |&x| x + b))
            .collect();
        self.charge(out.len() as u64);
        Ok(self.push(out, sa, Op::AddChannel { a, bias, plane }))
    }

    pub fn scale(&mut self, a: Var, s: R) -> Var {
        let out: Vec<R> = self.value(a).iter().map(|&x| x * s).collect();
        self.charge(out.len() as u64);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Scale { a, s })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out: Vec<R> = self.value(a).iter().map(|&x| x.max(R::zero())).collect();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out: Vec<R> = self
            .value(a)
            .iter()
            .map(|&x| R::one() / (R::one() + (-x).exp()))
            .collect();
        self.charge(4 * out.len() as u64);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Sigmoid { a })
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::Input(alloc::format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a);
        let mut out = vec![R::zero(); x.len()];
        // accumulate in f64 and round once per entry so f32 rows sum to one
        // within a few ulps regardless of their length
        let mut e = vec![0f64; len];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(x[at(j)].as_f64());
                }
                let mut total = 0.0;
                for (j, ej) in e.iter_mut().enumerate() {
                    *ej = num_traits::Float::exp(x[at(j)].as_f64() - max);
                    total += *ej;
                }
                for (j, ej) in e.iter().enumerate() {
                    out[at(j)] = R::of(ej / total);
                }
            }
        }
        self.charge(4 * x.len() as u64);
        Ok(self.push(out, shape, Op::Softmax { a, outer, len, inner }))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: R) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap_or(&0);
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::dim("layer_norm", &shape, self.shape(gain)));
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let rows = xv.len() / n;
        let inv_n = R::one() / R::of(n as f64);
        let mut xhat = vec![R::zero(); xv.len()];
        let mut rstd = vec![R::zero(); rows];
        let mut out = vec![R::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<R>() * inv_n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() * inv_n;
            let rs = R::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv[j] + bv[j];
            }
        }
        self.charge(8 * xv.len() as u64);
        Ok(self.push(
            out,
            shape,
            Op::LayerNorm {
                x,
                gain,
                bias,
                n,
                xhat,
                rstd,
            },
        ))
    }

    /// Cross-correlation of `x[C, H, W]` with `kernels[K, C, kh, kw]`, zero padded.
    pub fn conv2d(&mut self, x: Var, kernels: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernels).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sk[1] != sx[0] {
            return Err(Error::dim("conv2d", &sx, &sk));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be at least 1".into()));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let (k, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::dim("conv2d", &sx, &sk));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let g = ConvGeom {
            c,
            h,
            w,
            k,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        };
        let xv = self.value(x);
        let kv = self.value(kernels);
        let mut out = vec![R::zero(); k * oh * ow];
        conv_visit(&g, |ko, ci, ky, kx, oy, ox_range| {
            let wgt = kv[((ko * c + ci) * kh + ky) * kw + kx];
            let iy = oy * stride + ky - pad;
            let orow = &mut out[(ko * oh + oy) * ow..(ko * oh + oy + 1) * ow];
            for ox in ox_range {
                let ix = ox * stride + kx - pad;
                orow[ox] += wgt * xv[(ci * h + iy) * w + ix];
            }
        });
        self.charge(2 * (c * kh * kw * k * oh * ow) as u64);
        Ok(self.push(out, vec![k, oh, ow], Op::Conv2d { x, k: kernels, geom: g }))
    }

    /// Per-head scaled dot-product attention without projections.
    ///
    /// `q[Nq, D]`, `k[Nk, D]`, `v[Nk, D]`; head `h` uses columns
    /// `h * D / heads .. (h + 1) * D / heads` and scale `1 / sqrt(D / heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (sq, sk, sv) = (self.shape(q), self.shape(k), self.shape(v));
        if sq.len() != 2 || sk.len() != 2 || sq[1] != sk[1] {
            return Err(Error::dim("attention", sq, sk));
        }
        if sk != sv {
            return Err(Error::dim("attention", sk, sv));
        }
        let (nq, nk, d) = (sq[0], sk[0], sq[1]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(alloc::format!(
                "model width {d} is not divisible by {heads} heads"
            )));
        }
        let dh = d / heads;
        let scale = R::one() / R::of(dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![R::zero(); heads * nq * nk];
        let mut out = vec![R::zero(); nq * d];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..nq {
                let qi = &qv[i * d + cols.start..i * d + cols.end];
                let p = &mut probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                let mut max = R::neg_infinity();
                for j in 0..nk {
                    let kj = &kv[j * d + cols.start..j * d + cols.end];
                    let s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<R>() * scale;
                    p[j] = s;
                    max = max.max(s);
                }
                let mut total = R::zero();
                for pj in p.iter_mut() {
                    *pj = (*pj - max).exp();
                    total += *pj;
                }
                for pj in p.iter_mut() {
                    *pj /= total;
                }
                let oi = &mut out[i * d + cols.start..i * d + cols.end];
                for j in 0..nk {
                    let vj = &vv[j * d + cols.start..j * d + cols.end];
                    for (o, &x) in oi.iter_mut().zip(vj) {
                        *o += p[j] * x;
                    }
                }
            }
        }
        self.charge((heads * (4 * nq * nk * dh + 4 * nq * nk)) as u64);
        let geom = AttnGeom { nq, nk, d, heads };
        Ok(self.push(
            out,
            vec![nq, d],
            Op::Attention {
                q,
                k,
                v,
                geom,
                probs,
            },
        ))
    }

    /// Samples `map[C, H, W]` at normalized points, returning `[points, C]`.
    ///
    /// Point `(x, y)` addresses pixel coordinate `(x * W - 0.5, y * H - 0.5)`,
    /// so `((j + 0.5) / W, (i + 0.5) / H)` is the center of cell `(i, j)`.
    /// Coordinates are clamped to the outermost cell centers.
    pub fn bilinear_sample(&mut self, map: Var, points: &[(R, R)]) -> Result<Var> {
        let s = self.shape(map).to_vec();
        if s.len() != 3 {
            return Err(Error::dim("bilinear_sample", &s, &[3]));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut taps = Vec::with_capacity(points.len());
        for (i, &(x, y)) in points.iter().enumerate() {
            let inside = |t: R| t >= R::zero() && t <= R::one();
            if !inside(x) || !inside(y) {
                return Err(Error::Input(alloc::format!(
                    "sample point {i} = ({}, {}) is outside the unit square",
                    x.as_f64(),
                    y.as_f64()
                )));
            }
            let half = R::of(0.5);
            let px = (x * R::of(w as f64) - half)
                .max(R::zero())
                .min(R::of((w - 1) as f64));
            let py = (y * R::of(h as f64) - half)
                .max(R::zero())
                .min(R::of((h - 1) as f64));
            let x0 = px.floor().to_usize().unwrap_or(0);
            let y0 = py.floor().to_usize().unwrap_or(0);
            let (fx, fy) = (px - R::of(x0 as f64), py - R::of(y0 as f64));
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let one = R::one();
            taps.push([
                (y0 * w + x0, (one - fx) * (one - fy)),
                (y0 * w + x1, fx * (one - fy)),
                (y1 * w + x0, (one - fx) * fy),
                (y1 * w + x1, fx * fy),
            ]);
        }
        let plane = h * w;
        let mv = self.value(map);
        let mut out = vec![R::zero(); points.len() * c];
        for (p, tap) in taps.iter().enumerate() {
            for ch in 0..c {
                let base = &mv[ch * plane..(ch + 1) * plane];
                out[p * c + ch] = tap.iter().map(|&(i, wt)| wt * base[i]).sum();
            }
        }
        self.charge(8 * (points.len() * c) as u64);
        Ok(self.push(
            out,
            vec![points.len(), c],
            Op::Bilinear {
                map,
                channels: c,
                plane,
                taps,
            },
        ))
    }

    /// Multi-scale sampling attention: each query mixes `heads * levels * points`
    /// bilinear samples of `value[tokens, D]` (zero padded) with the given weights.
    pub fn deform_sample(
        &mut self,
        value: Var,
        offsets: Var,
        weights: Var,
        layout: Arc<DeformLayout<R>>,
    ) -> Result<Var> {
        let sv = self.shape(value).to_vec();
        let nq = layout.refs.len();
        let (nh, nl, np) = (layout.heads, layout.levels.len(), layout.points);
        if sv.len() != 2 || sv[0] != layout.tokens() || nh == 0 || sv[1] % nh != 0 {
            return Err(Error::dim("deform_sample", &sv, &[layout.tokens(), nh]));
        }
        if self.value(offsets).len() != nq * nh * nl * np * 2 {
            return Err(Error::dim("deform_sample", self.shape(offsets), &[nq, nh * nl * np * 2]));
        }
        if self.value(weights).len() != nq * nh * nl * np {
            return Err(Error::dim("deform_sample", self.shape(weights), &[nq, nh * nl * np]));
        }
        let d = sv[1];
        let dh = d / nh;
        let (vv, ov, wv) = (self.value(value), self.value(offsets), self.value(weights));
        let mut out = vec![R::zero(); nq * d];
        let half = R::of(0.5);
        for q in 0..nq {
            let (rx, ry) = layout.refs[q];
            for h in 0..nh {
                let orow = &mut out[q * d + h * dh..q * d + (h + 1) * dh];
                for (l, lvl) in layout.levels.iter().enumerate() {
                    for p in 0..np {
                        let s = ((q * nh + h) * nl + l) * np + p;
                        let a = wv[s];
                        let px = rx * R::of(lvl.w as f64) + ov[2 * s] - half;
                        let py = ry * R::of(lvl.h as f64) + ov[2 * s + 1] - half;
                        let (idx, fx, fy) = corners(px, py, lvl.w, lvl.h);
                        let one = R::one();
                        let cw = [
                            (one - fx) * (one - fy),
                            fx * (one - fy),
                            (one - fx) * fy,
                            fx * fy,
                        ];
                        for (ci, wt) in idx.iter().zip(cw) {
                            if let Some(ci) = ci {
                                let row = (lvl.start + ci) * d + h * dh;
                                let f = a * wt;
                                for (o, &x) in orow.iter_mut().zip(&vv[row..row + dh]) {
                                    *o += f * x;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.charge((10 * nq * nh * nl * np * dh) as u64);
        Ok(self.push(
            out,
            vec![nq, d],
            Op::Deform {
                value,
                offsets,
                weights,
                layout,
            },
        ))
    }

    /// Concatenates along the leading axis; trailing dimensions must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("concat of zero tensors".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::dim("concat_rows", self.shape(*first), s));
            }
            rows += s[0];
            out.extend_from_slice(self.value(p));
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        Ok(self.push(
            out,
            shape,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Rows `start..start + len` of the leading axis.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.is_empty() || len == 0 || start + len > s[0] {
            return Err(Error::dim("slice_rows", &s, &[start, len]));
        }
        let row: usize = s[1..].iter().product();
        let out = self.value(a)[start * row..(start + len) * row].to_vec();
        let mut shape = s;
        shape[0] = len;
        Ok(self.push(
            out,
            shape,
            Op::SliceRows {
                a,
                offset: start * row,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().copied().sum::<R>();
        self.charge(self.value(a).len() as u64);
        self.push(vec![total], vec![1], Op::Sum { a })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let total = self.value(a).iter().copied().sum::<R>() / R::of(n as f64);
        self.charge(n as u64 + 1);
        self.push(vec![total], vec![1], Op::Mean { a })
    }

    /// Penalty-reduced pixelwise focal loss of a probability map against a
    /// target map whose peaks are exactly 1, averaged over the peak count.
    pub fn focal_loss(&mut self, p: Var, target: &[R], gamma: R, alpha: R) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != target.len() {
            return Err(Error::dim("focal_loss", self.shape(p), &[target.len()]));
        }
        let positives = target.iter().filter(|&&y| y == R::one()).count();
        if positives == 0 {
            return Err(Error::Input("focal loss target has no peak of value 1".into()));
        }
        let mut total = R::zero();
        for (&pr, &y) in pv.iter().zip(target) {
            total += focal_term(clamp_prob(pr), y, gamma, alpha);
        }
        let loss = total / R::of(positives as f64);
        self.charge(6 * pv.len() as u64);
        Ok(self.push(
            vec![loss],
            vec![1],
            Op::Focal {
                p,
                target: target.to_vec(),
                gamma,
                alpha,
                positives,
            },
        ))
    }

    /// Binary cross-entropy of a probability against a 0/1 label.
    pub fn bce(&mut self, p: Var, label: R) -> Result<Var> {
        if self.value(p).len() != 1 {
            return Err(Error::dim("bce", self.shape(p), &[1]));
        }
        let pr = clamp_prob(self.value(p)[0]);
        let loss = -(label * pr.ln() + (R::one() - label) * (R::one() - pr).ln());
        self.charge(6);
        Ok(self.push(vec![loss], vec![1], Op::Bce { p, label }))
    }
}

#[inline]
pub(crate) fn clamp_prob<R: Real>(p: R) -> R {
    p.max(R::of(PROB_EPS)).min(R::one() - R::of(PROB_EPS))
}

#[inline]
pub(crate) fn focal_term<R: Real>(p: R, y: R, gamma: R, alpha: R) -> R {
    if y == R::one() {
        -(R::one() - p).powf(gamma) * p.ln()
    } else {
        -(R::one() - y).powf(alpha) * p.powf(gamma) * (R::one() - p).ln()
    }
}

/// d(focal_term)/dp at an already clamped `p`.
#[inline]
pub(crate) fn focal_term_grad<R: Real>(p: R, y: R, gamma: R, alpha: R) -> R {
    let one = R::one();
    if y == one {
        gamma * (one - p).powf(gamma - one) * p.ln() - (one - p).powf(gamma) / p
    } else {
        -(one - y).powf(alpha) * (gamma * p.powf(gamma - one) * (one - p).ln() - p.powf(gamma) / (one - p))
    }
}

/// Visits every (out-channel, in-channel, ky, kx, oy) with the in-bounds ox range.
#[inline]
pub(crate) fn conv_visit(
    g: &ConvGeom,
    mut f: impl FnMut(usize, usize, usize, usize, usize, core::ops::Range<usize>),
) {
    for ko in 0..g.k {
        for ci in 0..g.c {
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    // ox valid iff 0 <= ox*stride + kx - pad < w
                    let lo = if kx >= g.pad {
                        0
                    } else {
                        (g.pad - kx + g.stride - 1) / g.stride
                    };
                    let hi = if g.w + g.pad > kx {
                        ((g.w + g.pad - kx - 1) / g.stride + 1).min(g.ow)
                    } else {
                        0
                    };
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let iy = oy * g.stride + ky;
                        if iy < g.pad || iy - g.pad >= g.h {
                            continue;
                        }
                        f(ko, ci, ky, kx, oy, lo..hi);
                    }
                }
            }
        }
    }
}

impl<R: Real> Tape<R> {
    /// Identity in the forward pass; multiplies the incoming gradient by `s`
    /// (`s = -1` gives a gradient-reversal layer).
    pub fn grad_scale(&mut self, a: Var, s: R) -> Var {
        let out = self.value(a).to_vec();
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::GradScale { a, s })
    }
}
