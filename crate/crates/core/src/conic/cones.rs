//! Algebra on the product cone `R₊ˡ × Q^{n₁} × … × Q^{n_k}`.
//!
//! Vectors are stored flat: the orthant block first, then each second-order
//! cone block as `(t, x)` with the constraint `‖x‖ ≤ t`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) struct ConeLayout {
    pub orthant: usize,
    pub socs: Vec<usize>,
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.orthant + self.socs.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate, one per SOC block.
    pub fn degree(&self) -> usize {
        self.orthant + self.socs.len()
    }

    fn soc_ranges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut start = self.orthant;
        self.socs.iter().map(move |&len| {
            let r = (start, len);
            start += len;
            r
        })
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e.rows_mut(0, self.orthant).fill(1.0);
        for (start, _) in self.soc_ranges() {
            e[start] = 1.0;
        }
        e
    }

    /// Jordan product `u ∘ v`.
    pub fn product(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.orthant {
            out[i] = u[i] * v[i];
        }
        for (s, len) in self.soc_ranges() {
            let u0 = u[s];
            let v0 = v[s];
            out[s] = u.rows(s, len).dot(&v.rows(s, len));
            for j in 1..len {
                out[s + j] = u0 * v[s + j] + v0 * u[s + j];
            }
        }
        out
    }

    /// Solves `λ ∘ y = x` for `y`; `λ` must lie in the cone interior.
    pub fn divide(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.orthant {
            out[i] = x[i] / lambda[i];
        }
        for (s, len) in self.soc_ranges() {
            let l0 = lambda[s];
            let l1 = lambda.rows(s + 1, len - 1);
            let x0 = x[s];
            let x1 = x.rows(s + 1, len - 1);
            let det = l0 * l0 - l1.norm_squared();
            let y0 = (l0 * x0 - l1.dot(&x1)) / det;
            out[s] = y0;
            for j in 1..len {
                out[s + j] = (x[s + j] - y0 * lambda[s + j]) / l0;
            }
        }
        out
    }

    /// Smallest `α ≥ 0` such that `x + α e` lies in the closed cone, i.e.
    /// the amount by which `x` misses the cone (negative if interior).
    pub fn interior_margin(&self, x: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.orthant {
            worst = worst.max(-x[i]);
        }
        for (s, len) in self.soc_ranges() {
            worst = worst.max(x.rows(s + 1, len - 1).norm() - x[s]);
        }
        worst
    }

    /// Euclidean distance-like violation of `x ∈ K` (zero when inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.interior_margin(x).max(0.0)
    }

    /// Largest step `α` with `x + α dx` in the closed cone (`f64::INFINITY`
    /// when unbounded). `x` must be interior.
    pub fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        if dx.iter().any(|d| !d.is_finite()) {
            return 0.0;
        }
        let mut alpha = f64::INFINITY;
        for i in 0..self.orthant {
            if dx[i] < 0.0 {
                alpha = alpha.min(-x[i] / dx[i]);
            }
        }
        for (s, len) in self.soc_ranges() {
            let x0 = x[s];
            let d0 = dx[s];
            let x1 = x.rows(s + 1, len - 1);
            let d1 = dx.rows(s + 1, len - 1);
            // (x0 + α d0)² − ‖x1 + α d1‖² = a α² + b α + c, c > 0
            let a = d0 * d0 - d1.norm_squared();
            let b = 2.0 * (x0 * d0 - x1.dot(&d1));
            let c = x0 * x0 - x1.norm_squared();
            alpha = alpha.min(first_positive_root(a, b, c));
        }
        alpha
    }

    /// Nesterov–Todd scaling point for interior `s`, `z`.
    pub fn nt_scaling(&self, s: &DVector<f64>, z: &DVector<f64>) -> Scaling {
        let orthant: Vec<f64> = (0..self.orthant).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut socs = Vec::with_capacity(self.socs.len());
        for (st, len) in self.soc_ranges() {
            let sb = s.rows(st, len).into_owned();
            let zb = z.rows(st, len).into_owned();
            let s_det = jnorm_sq(&sb).max(f64::MIN_POSITIVE).sqrt();
            let z_det = jnorm_sq(&zb).max(f64::MIN_POSITIVE).sqrt();
            let sn = &sb / s_det;
            let zn = &zb / z_det;
            let gamma = ((1.0 + sn.dot(&zn)) / 2.0).sqrt();
            let mut w = sn.clone();
            w[0] += zn[0];
            for j in 1..len {
                w[j] -= zn[j];
            }
            w /= 2.0 * gamma;
            let mut v = w.clone();
            v[0] += 1.0;
            v /= (2.0 * (w[0] + 1.0)).sqrt();
            socs.push(SocScaling {
                start: st,
                beta: (s_det / z_det).sqrt(),
                v,
            });
        }
        Scaling { orthant, socs }
    }
}

fn jnorm_sq(x: &DVector<f64>) -> f64 {
    x[0] * x[0] - x.rows(1, x.len() - 1).norm_squared()
}

fn first_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots.sort_by(f64::total_cmp);
    roots
        .into_iter()
        .find(|&r| r > 0.0)
        .unwrap_or(f64::INFINITY)
}

#[derive(Clone, Debug)]
pub(crate) struct SocScaling {
    start: usize,
    beta: f64,
    v: DVector<f64>,
}

/// Symmetric NT scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    orthant: Vec<f64>,
    socs: Vec<SocScaling>,
}

impl Scaling {
    /// `W x` (`inverse = false`) or `W⁻¹ x` (`inverse = true`).
    pub fn apply(&self, x: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = x.clone();
        for (i, d) in self.orthant.iter().enumerate() {
            out[i] = if inverse { x[i] / d } else { x[i] * d };
        }
        for soc in &self.socs {
            let len = soc.v.len();
            let xb = x.rows(soc.start, len);
            // W  = β (2 v vᵀ − J),   W⁻¹ = β⁻¹ (2 Jv vᵀJ − J)
            let mut v = soc.v.clone();
            if inverse {
                for j in 1..len {
                    v[j] = -v[j];
                }
            }
            let coef = 2.0 * v.dot(&xb);
            let scale = if inverse { 1.0 / soc.beta } else { soc.beta };
            for j in 0..len {
                let jx = if j == 0 { xb[0] } else { -xb[j] };
                out[soc.start + j] = scale * (coef * v[j] - jx);
            }
        }
        out
    }

    /// `W⁻¹ M` applied column by column.
    pub fn apply_inverse_to_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (i, d) in self.orthant.iter().enumerate() {
            let mut row = out.row_mut(i);
            row /= *d;
        }
        for soc in &self.socs {
            let len = soc.v.len();
            let mut jv = soc.v.clone();
            for j in 1..len {
                jv[j] = -jv[j];
            }
            let block = m.rows(soc.start, len);
            // β⁻¹ (2 Jv (Jv)ᵀ B − J B)
            let proj = jv.transpose() * block;
            let mut res = (&jv * proj) * 2.0;
            for j in 0..len {
                let sign = if j == 0 { -1.0 } else { 1.0 };
                let mut row = res.row_mut(j);
                row += block.row(j) * sign;
            }
            res /= soc.beta;
            out.rows_mut(soc.start, len).copy_from(&res);
        }
        out
    }
}
