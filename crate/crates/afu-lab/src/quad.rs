//! Gauss–Legendre quadrature and a few small numeric helpers.

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// 8-point Gauss–Legendre rule on [a, b].
pub fn gauss8<T, F>(a: f64, b: f64, mut f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    F: FnMut(f64) -> T,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = T::default();
    for k in 0..4 {
        let dx = half * GL8_X[k];
        acc = acc + (f(mid - dx) + f(mid + dx)) * (GL8_W[k] * half);
    }
    acc
}

/// Ordinary least squares for y = c0 + c1 x. Returns (c0, c1, se_c1, residual rms).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - c1 * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let se = if sxx > 0.0 { (ss / dof / sxx).sqrt() } else { f64::INFINITY };
    (c0, c1, se, (ss / n).sqrt())
}

/// Least squares for y = c0 + c1 x + c2 x². Returns ([c0, c1, c2], se of c2).
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> ([f64; 3], f64) {
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&a, &b) in x.iter().zip(y) {
        let p = [1.0, a, a * a];
        for i in 0..3 {
            r[i] += p[i] * b;
            for j in 0..3 {
                m[i][j] += p[i] * p[j];
            }
        }
    }
    let inv = match invert3(&m) {
        Some(inv) => inv,
        None => return ([0.0; 3], f64::INFINITY),
    };
    let mut c = [0.0; 3];
    for i in 0..3 {
        c[i] = (0..3).map(|j| inv[i][j] * r[j]).sum();
    }
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - c[0] - c[1] * a - c[2] * a * a).powi(2))
        .sum();
    let dof = (x.len() as f64 - 3.0).max(1.0);
    let se = (ss / dof * inv[2][2]).max(0.0).sqrt();
    (c, se)
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    Some(inv)
}

/// Dyadic values 2^-1, 2^-2, ..., 2^-m_max.
pub fn dyadic(m_max: u32) -> impl Iterator<Item = f64> {
    (1..=m_max).map(|m| 0.5f64.powi(m as i32))
}
