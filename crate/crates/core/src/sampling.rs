//! Deterministic sampling helpers: seed splitting, direction sets,
//! barycentric grids, and box lattices.
//!
//! All sampling is a pure function of (root seed, query point, sizes), so
//! verdicts do not depend on grid ordering or thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a point's coordinate bits. Used instead of a grid index so that
/// enlarging a grid never changes the seed a given point is queried with.
pub fn point_hash(point: &[f64]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for c in point {
        // normalize -0.0 to 0.0 so equal points hash equally
        let bits = if *c == 0.0 { 0u64 } else { c.to_bits() };
        h ^= bits;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Derive a child seed from a root seed, a stream tag, and a point hash.
pub fn derive_seed(root: u64, tag: u64, hash: u64) -> u64 {
    splitmix64(root ^ splitmix64(tag) ^ hash)
}

pub fn rng_for(root: u64, tag: u64, point: &[f64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag, point_hash(point)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` unit directions in `dim` dimensions.
///
/// dim 1 gives the two signs, dim 2 an even angular fan; higher dimensions
/// use seeded normalized Gaussians. Deterministic for fixed arguments.
pub fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim >= 1);
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * (i as f64) / (count as f64);
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        _ => {
            let mut rng = rng_from(seed);
            let mut dirs = Vec::with_capacity(count);
            while dirs.len() < count {
                let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                let n = norm(&v);
                if n > 1e-12 {
                    dirs.push(v.iter().map(|c| c / n).collect());
                }
            }
            dirs
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniform draws
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// All weight vectors `(i_1, .., i_k) / q` with nonnegative integers summing
/// to `q`, enumerated in lexicographic order.
pub fn barycentric_grid(k: usize, q: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; k];
    fill_compositions(k, q, 0, &mut current, &mut out);
    out
}

fn fill_compositions(k: usize, rem: usize, idx: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    if idx == k - 1 {
        cur[idx] = rem;
        let q: usize = cur.iter().sum();
        out.push(cur.iter().map(|i| *i as f64 / q.max(1) as f64).collect());
        return;
    }
    for i in 0..=rem {
        cur[idx] = i;
        fill_compositions(k, rem - i, idx + 1, cur, out);
    }
}

/// Uniform lattice over a box, `resolution` points per axis (inclusive of
/// both endpoints; a resolution of 1 yields the box center).
pub fn box_lattice(box_bounds: &[(f64, f64)], resolution: usize) -> Vec<Vec<f64>> {
    let n = box_bounds.len();
    let mut points = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = (0..n)
            .map(|a| {
                let (lo, hi) = box_bounds[a];
                if resolution <= 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * idx[a] as f64 / (resolution - 1) as f64
                }
            })
            .collect();
        points.push(p);
        // odometer increment
        let mut a = 0;
        loop {
            if a == n {
                return points;
            }
            idx[a] += 1;
            if idx[a] < resolution.max(1) {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b))
}

/// Distance from `p` to the convex hull of `vertices` (Frank-Wolfe on the
/// simplex; exact for a single vertex, accurate to ~1e-12 at fixture scale).
pub fn dist_to_hull(p: &[f64], vertices: &[Vec<f64>]) -> f64 {
    assert!(!vertices.is_empty());
    if vertices.len() == 1 {
        return dist(p, &vertices[0]);
    }
    let k = vertices.len();
    let mut w = vec![1.0 / k as f64; k];
    let mut z: Vec<f64> = combination(vertices, &w);
    for _ in 0..500 {
        let g = sub(&z, p);
        // vertex minimizing <g, v>
        let (best, _) = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(&g, v)))
            .fold((0usize, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
        let d = sub(&vertices[best], &z);
        let denom = dot(&d, &d);
        if denom < 1e-30 {
            break;
        }
        let step = (-dot(&g, &d) / denom).clamp(0.0, 1.0);
        if step * norm(&d) < 1e-15 {
            break;
        }
        for (wi, _) in w.iter_mut().zip(0..) {
            *wi *= 1.0 - step;
        }
        w[best] += step;
        z = combination(vertices, &w);
    }
    dist(p, &z)
}

pub fn combination(vertices: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = vertices[0].len();
    let mut out = vec![0.0; n];
    for (v, w) in vertices.iter().zip(weights) {
        for (o, c) in out.iter_mut().zip(v) {
            *o += w * c;
        }
    }
    out
}

/// Deterministic uniform draw from a box.
pub fn random_point_in_box(box_bounds: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    box_bounds
        .iter()
        .map(|(lo, hi)| if hi > lo { rng.gen_range(*lo..*hi) } else { *lo })
        .collect()
}
