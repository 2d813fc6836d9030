//! Scalar-loop reference implementations written from the textbook formulas,
//! sharing no code with the library.

use std::collections::{HashMap, VecDeque};

/// A `[c, h, w]` image in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Img {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Img {
    pub fn new(c: usize, h: usize, w: usize, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), c * h * w);
        Self { c, h, w, v }
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self::new(c, h, w, vec![0.0; c * h * w])
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }

    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.v[(c * self.h + y) * self.w + x]
    }

    pub fn concat(parts: &[&Img]) -> Img {
        let (h, w) = (parts[0].h, parts[0].w);
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&p.v);
        }
        Img::new(parts.iter().map(|p| p.c).sum(), h, w, v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Img {
        Img::new(self.c, self.h, self.w, self.v.iter().map(|&x| f(x)).collect())
    }
}

/// `out[o][y][x] = b[o] + sum w[o][i][ky][kx] * in[i][y*s+ky-p][x*s+kx-p]`, zero outside.
pub fn conv2d(x: &Img, w: &[f64], b: Option<&[f64]>, cout: usize, k: usize, stride: usize, pad: usize) -> Img {
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut out = Img::zeros(cout, oh, ow);
    for o in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.map_or(0.0, |b| b[o]);
                for i in 0..x.c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as i64 - pad as i64;
                            let ix = (ox * stride + kx) as i64 - pad as i64;
                            if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                acc += w[((o * x.c + i) * k + ky) * k + kx] * x.at(i, iy as usize, ix as usize);
                            }
                        }
                    }
                }
                *out.at_mut(o, oy, ox) = acc;
            }
        }
    }
    out
}

/// Scatter form: each input pixel adds `x * w[i][o]` onto a `k x k` window
/// at `(y*s - p, x*s - p)`. Weight layout `[cin, cout, k, k]`.
pub fn conv_transpose2d(x: &Img, w: &[f64], b: &[f64], cout: usize, k: usize, stride: usize, pad: usize) -> Img {
    let oh = (x.h - 1) * stride + k - 2 * pad;
    let ow = (x.w - 1) * stride + k - 2 * pad;
    let mut out = Img::zeros(cout, oh, ow);
    for o in 0..cout {
        for y in 0..oh {
            for xx in 0..ow {
                *out.at_mut(o, y, xx) = b[o];
            }
        }
    }
    for i in 0..x.c {
        for y in 0..x.h {
            for xx in 0..x.w {
                for o in 0..cout {
                    for ky in 0..k {
                        for kx in 0..k {
                            let oy = (y * stride + ky) as i64 - pad as i64;
                            let ox = (xx * stride + kx) as i64 - pad as i64;
                            if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                *out.at_mut(o, oy as usize, ox as usize) +=
                                    x.at(i, y, xx) * w[((i * cout + o) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn relu(x: &Img) -> Img {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Weights of one convolution: `(weight, bias)`.
pub type ConvParams = (Vec<f64>, Option<Vec<f64>>);

/// Dense block: conv `j` sees the input and every earlier conv output (3x3,
/// ReLU); a 1x1 fusion over all of them is scaled by `alpha` and added back.
pub fn rdb(x: &Img, convs: &[ConvParams], growth: usize, fusion: &ConvParams, alpha: f64) -> Img {
    let mut feats = vec![x.clone()];
    for (w, b) in convs {
        let inp = Img::concat(&feats.iter().collect::<Vec<_>>());
        feats.push(relu(&conv2d(&inp, w, b.as_deref(), growth, 3, 1, 1)));
    }
    let all = Img::concat(&feats.iter().collect::<Vec<_>>());
    let f = conv2d(&all, &fusion.0, fusion.1.as_deref(), x.c, 1, 1, 0);
    Img::new(x.c, x.h, x.w, x.v.iter().zip(&f.v).map(|(a, b)| a + alpha * b).collect())
}

/// Squeeze-and-excitation gating with plain matrix-vector products.
/// `w1` is `[C/r, C]`, `w2` is `[C, C/r]`.
pub fn channel_attention(f: &Img, w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64]) -> Img {
    let c = f.c;
    let hidden = b1.len();
    let z: Vec<f64> = (0..c)
        .map(|ch| f.v[ch * f.h * f.w..(ch + 1) * f.h * f.w].iter().sum::<f64>() / (f.h * f.w) as f64)
        .collect();
    let z1: Vec<f64> = (0..hidden)
        .map(|j| (b1[j] + (0..c).map(|i| w1[j * c + i] * z[i]).sum::<f64>()).max(0.0))
        .collect();
    let z2: Vec<f64> = (0..c)
        .map(|i| sigmoid(b2[i] + (0..hidden).map(|j| w2[i * hidden + j] * z1[j]).sum::<f64>()))
        .collect();
    let mut out = f.clone();
    for ch in 0..c {
        for y in 0..f.h {
            for x in 0..f.w {
                *out.at_mut(ch, y, x) *= z2[ch];
            }
        }
    }
    out
}

fn luma_img(x: &Img) -> Img {
    let mut out = Img::zeros(1, x.h, x.w);
    for y in 0..x.h {
        for xx in 0..x.w {
            *out.at_mut(0, y, xx) = 0.299 * x.at(0, y, xx) + 0.587 * x.at(1, y, xx) + 0.114 * x.at(2, y, xx);
        }
    }
    out
}

pub fn psnr(a: &Img, b: &Img, luma: bool) -> f64 {
    let (a, b) = if luma { (luma_img(a), luma_img(b)) } else { (a.clone(), b.clone()) };
    let mut se = 0.0;
    for i in 0..a.v.len() {
        se += (a.v[i] - b.v[i]).powi(2);
    }
    let mse = se / a.v.len() as f64;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// Mean SSIM over every fully contained 11x11 window, Gaussian-weighted
/// (sigma 1.5, weights normalised over the 2-D window), averaged over channels.
pub fn ssim(a: &Img, b: &Img, luma: bool) -> f64 {
    let (a, b) = if luma { (luma_img(a), luma_img(b)) } else { (a.clone(), b.clone()) };
    let n = 11usize;
    let mut g = vec![0.0; n * n];
    for dy in 0..n {
        for dx in 0..n {
            let (u, v) = (dy as f64 - 5.0, dx as f64 - 5.0);
            g[dy * n + dx] = (-(u * u + v * v) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut chan_sum = 0.0;
    for ch in 0..a.c {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=a.h - n {
            for x0 in 0..=a.w - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for dy in 0..n {
                    for dx in 0..n {
                        let wt = g[dy * n + dx];
                        ma += wt * a.at(ch, y0 + dy, x0 + dx);
                        mb += wt * b.at(ch, y0 + dy, x0 + dx);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for dy in 0..n {
                    for dx in 0..n {
                        let wt = g[dy * n + dx];
                        let (p, q) = (a.at(ch, y0 + dy, x0 + dx) - ma, b.at(ch, y0 + dy, x0 + dx) - mb);
                        va += wt * p * p;
                        vb += wt * q * q;
                        cov += wt * p * q;
                    }
                }
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        chan_sum += sum / count as f64;
    }
    chan_sum / a.c as f64
}

/// Every string over `alphabet` with length at most `max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in alphabet {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Shortest-path distances in the graph whose vertices are `strings` and
/// whose edges are single insertions, deletions or substitutions. Returns a
/// dense `[n x n]` table indexed like `strings`.
///
/// Restricting the vertex set to strings no longer than the longest endpoint
/// loses nothing: an optimal edit script can delete first, substitute next and
/// insert last, so its intermediate strings never grow past that length.
pub fn edit_graph_distances(strings: &[String], alphabet: &[char]) -> Vec<Vec<u8>> {
    let index: HashMap<&str, usize> = strings.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let neighbours: Vec<Vec<usize>> = strings
        .iter()
        .map(|s| {
            let chars: Vec<char> = s.chars().collect();
            let mut nb = Vec::new();
            let mut push = |t: Vec<char>| {
                let t: String = t.into_iter().collect();
                if let Some(&j) = index.get(t.as_str()) {
                    nb.push(j);
                }
            };
            for i in 0..chars.len() {
                let mut t = chars.clone();
                t.remove(i);
                push(t);
                for &c in alphabet {
                    if c != chars[i] {
                        let mut t = chars.clone();
                        t[i] = c;
                        push(t);
                    }
                }
            }
            for i in 0..=chars.len() {
                for &c in alphabet {
                    let mut t = chars.clone();
                    t.insert(i, c);
                    push(t);
                }
            }
            nb
        })
        .collect();
    (0..strings.len())
        .map(|src| {
            let mut dist = vec![u8::MAX; strings.len()];
            dist[src] = 0;
            let mut q = VecDeque::from([src]);
            while let Some(u) = q.pop_front() {
                for &v in &neighbours[u] {
                    if dist[v] == u8::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}
