#![allow(dead_code)]

use deformapprox::mesh::{TriMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected triangulated grid with random diagonals and jittered 3D positions.
pub fn random_grid_mesh(rows: usize, cols: usize, seed: u64) -> TriMesh<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            positions.push([
                j as f64 + rng.gen_range(-0.3..0.3),
                i as f64 + rng.gen_range(-0.3..0.3),
                rng.gen_range(-1.0..1.0),
            ]);
        }
    }
    let mut triangles = Vec::new();
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let a = i * cols + j;
            let (b, c, d) = (a + 1, a + cols, a + cols + 1);
            if rng.gen::<bool>() {
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            } else {
                triangles.push([a, b, c]);
                triangles.push([b, d, c]);
            }
        }
    }
    TriMesh::new(positions, triangles).unwrap()
}

pub fn random_positions(n: usize, scale: f64, seed: u64) -> Vec<Vec3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)]).collect()
}

/// `D − A` built directly from the triangle list.
pub fn dense_laplacian(n: usize, triangles: &[[usize; 3]]) -> Vec<Vec<f64>> {
    let mut adj = vec![vec![false; n]; n];
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] {
                l[i][j] = -1.0;
                l[i][i] += 1.0;
            }
        }
    }
    l
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn max_abs_diff(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).abs())).fold(0.0, f64::max)
}

/// Worst relative disagreement between backprop and central differences for
/// a random float64 network and batch.
pub fn gradient_check(widths: &[usize], rows: usize, seed: u64) -> f64 {
    use deformapprox::linalg::Matrix;
    use deformapprox::neural::Mlp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Mlp<f64> = Mlp::xavier(widths, &mut rng).unwrap();
    for p in net.params_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    let (n_in, n_out) = (widths[0], *widths.last().unwrap());
    let x = Matrix::from_vec(rows, n_in, (0..rows * n_in).map(|_| rng.gen_range(-1.5..1.5)).collect());
    let y = Matrix::from_vec(rows, n_out, (0..rows * n_out).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let (_, grad) = net.backward(&x, &y).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let base = net.params()[i];
        net.params_mut()[i] = base + h;
        let up = net.loss(&x, &y).unwrap();
        net.params_mut()[i] = base - h;
        let down = net.loss(&x, &y).unwrap();
        net.params_mut()[i] = base;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}
