//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13 (Higham's 2005 selection).

use crate::linalg::RealMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(m: &RealMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(V - U)^{-1} (V + U)`.
fn pade_quotient(u: &RealMatrix, v: &RealMatrix) -> RealMatrix {
    let p = v + u;
    let q = v - u;
    // q is well conditioned for arguments inside the theta bounds.
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular within the theta bounds")
}

fn pade_low(a: &RealMatrix, b: &[f64]) -> RealMatrix {
    let n = a.nrows();
    let id = RealMatrix::identity(n, n);
    let a2 = a * a;
    let mut even = id.clone() * b[0];
    let mut odd = id * b[1];
    let mut pow = a2.clone();
    let m = b.len() - 1;
    let mut k = 2;
    while k <= m {
        even += &pow * b[k];
        if k < m {
            odd += &pow * b[k + 1];
        }
        pow = &pow * &a2;
        k += 2;
    }
    let u = a * odd;
    pade_quotient(&u, &even)
}

fn pade13(a: &RealMatrix) -> RealMatrix {
    let n = a.nrows();
    let b = &B13;
    let id = RealMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    pade_quotient(&u, &v)
}

/// `exp(M)` for a square matrix.
pub fn mat_exp(m: &RealMatrix) -> RealMatrix {
    assert!(m.is_square(), "mat_exp of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let norm = norm1(m);
    if norm == 0.0 {
        return RealMatrix::identity(n, n);
    }
    for (deg, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(m, b);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = m / 2f64.powi(s);
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
