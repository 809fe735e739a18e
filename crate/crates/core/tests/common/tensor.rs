//! Brute-force 3×3 continuum mechanics used only as a test oracle.

pub type M3 = [[f64; 3]; 3];

pub const IDENTITY: M3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn scale(a: &M3, s: f64) -> M3 {
    a.map(|row| row.map(|x| x * s))
}

pub fn sub(a: &M3, b: &M3) -> M3 {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn trace(a: &M3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn cofactor(a: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
            let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
            out[i][j] = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
        }
    }
    out
}

pub fn det(a: &M3) -> f64 {
    let c = cofactor(a);
    (0..3).map(|j| a[0][j] * c[0][j]).sum()
}

/// `F⁻ᵀ = cof F / det F`.
pub fn inverse_transpose(a: &M3) -> M3 {
    scale(&cofactor(a), 1.0 / det(a))
}

/// Eigenvalues and unit eigenvectors (columns) of a symmetric matrix by
/// cyclic Jacobi rotations.
pub fn symmetric_eigen(a: &M3) -> ([f64; 3], M3) {
    let mut a = *a;
    let mut v = IDENTITY;
    for _ in 0..100 {
        let off: f64 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-40 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = IDENTITY;
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            a = mul(&transpose(&rot), &mul(&a, &rot));
            v = mul(&v, &rot);
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

pub fn uniaxial_f(lambda: f64) -> M3 {
    let l = 1.0 / lambda.sqrt();
    [[lambda, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]]
}

pub fn shear_f(gamma: f64) -> M3 {
    [[1.0, gamma, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// `(I1, I2, I3)` of `C = FᵀF`.
pub fn invariants(f: &M3) -> (f64, f64, f64) {
    let c = mul(&transpose(f), f);
    (trace(&c), trace(&cofactor(&c)), det(&c))
}

/// Principal stretches, largest first.
pub fn principal_stretches(f: &M3) -> [f64; 3] {
    let (vals, _) = symmetric_eigen(&mul(&transpose(f), f));
    let mut s = vals.map(f64::sqrt);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Removes the pressure `p` so that `P22 = 0`, given the pressure-free
/// part of P.
fn eliminate_pressure(partial: &M3, f: &M3) -> M3 {
    let fit = inverse_transpose(f);
    let p = partial[1][1] / fit[1][1];
    sub(partial, &scale(&fit, p))
}

/// Nominal stress of an incompressible invariant energy:
/// `P = 2(ψ1 + I1ψ2)F − 2ψ2FC − pF⁻ᵀ`.
pub fn piola_invariant(f: &M3, psi: impl Fn(f64, f64) -> (f64, f64)) -> M3 {
    let (i1, i2, _) = invariants(f);
    let (d1, d2) = psi(i1, i2);
    let c = mul(&transpose(f), f);
    let partial = sub(&scale(f, 2.0 * (d1 + i1 * d2)), &scale(&mul(f, &c), 2.0 * d2));
    eliminate_pressure(&partial, f)
}

/// Nominal stress of an incompressible additive energy Σ w(λᵢ):
/// Kirchhoff stress `Σ λᵢ w′(λᵢ) nᵢ⊗nᵢ − pI` mapped by `F⁻ᵀ`.
pub fn piola_principal(f: &M3, dw: impl Fn(f64) -> f64) -> M3 {
    let b = mul(f, &transpose(f));
    let (vals, vecs) = symmetric_eigen(&b);
    let mut tau = [[0.0; 3]; 3];
    for k in 0..3 {
        let l = vals[k].sqrt();
        let w = l * dw(l);
        for i in 0..3 {
            for j in 0..3 {
                tau[i][j] += w * vecs[i][k] * vecs[j][k];
            }
        }
    }
    eliminate_pressure(&mul(&tau, &inverse_transpose(f)), f)
}

// Hand-differentiated energies; the oracle never sees the symbolic engine.
pub const INVARIANT: &str = "0.5*(I1-3) + 0.3*square(I2-3) + 0.02*exp(4*(I2-3)) + 0.1*(I1-3)*(I2-3)";
pub fn invariant_gradient(i1: f64, i2: f64) -> (f64, f64) {
    let (u1, u2) = (i1 - 3.0, i2 - 3.0);
    (0.5 + 0.1 * u2, 0.6 * u2 + 0.08 * (4.0 * u2).exp() + 0.1 * u1)
}

pub const STRETCH: &str = "0.0079*l1^-19 + 0.0003*l1^30";
pub fn stretch_slope(l: f64) -> f64 {
    -0.0079 * 19.0 * l.powi(-20) + 0.0003 * 30.0 * l.powi(29)
}

pub const STRAIN: &str = "2820.76*e1^6 + 43.27*e1^4 + -13.72*e1^3 + 1.37*e1^2";
pub fn strain_slope(l: f64) -> f64 {
    let e = l - 1.0;
    6.0 * 2820.76 * e.powi(5) + 4.0 * 43.27 * e.powi(3) - 3.0 * 13.72 * e * e + 2.0 * 1.37 * e
}
