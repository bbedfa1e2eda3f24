use ndarray::Array2;

/// Mask pixels that touch a non-mask pixel (4-neighbourhood) or the image edge.
pub fn inner_boundary(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        if !mask[[r, c]] {
            return false;
        }
        if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
            return true;
        }
        !(mask[[r - 1, c]] && mask[[r + 1, c]] && mask[[r, c - 1]] && mask[[r, c + 1]])
    })
}

/// Exact Euclidean distance from every pixel to the nearest pixel of the
/// mask's inner boundary. An empty mask yields infinity everywhere.
pub fn boundary_distance(mask: &Array2<bool>) -> Array2<f64> {
    let seeds = inner_boundary(mask);
    let mut sq = squared_edt(&seeds);
    sq.mapv_inplace(f64::sqrt);
    sq
}

/// Squared distance to the nearest `true` seed, by two separable passes of
/// the lower-envelope-of-parabolas transform.
pub fn squared_edt(seeds: &Array2<bool>) -> Array2<f64> {
    let (h, w) = seeds.dim();
    let mut grid = seeds.mapv(|s| if s { 0.0 } else { f64::INFINITY });
    let mut line = Vec::new();
    let mut out = Vec::new();
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| grid[[r, c]]));
        transform_1d(&line, &mut out);
        for r in 0..h {
            grid[[r, c]] = out[r];
        }
    }
    for r in 0..h {
        line.clear();
        line.extend((0..w).map(|c| grid[[r, c]]));
        transform_1d(&line, &mut out);
        for c in 0..w {
            grid[[r, c]] = out[c];
        }
    }
    grid
}

fn transform_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if finite.is_empty() {
        return;
    }
    let mut v = Vec::with_capacity(finite.len());
    let mut z = Vec::with_capacity(finite.len() + 1);
    for &q in &finite {
        let mut s = f64::NEG_INFINITY;
        while let Some(&p) = v.last() {
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[z.len() - 1] {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        if v.is_empty() {
            s = f64::NEG_INFINITY;
        }
        v.push(q);
        z.push(s);
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}
