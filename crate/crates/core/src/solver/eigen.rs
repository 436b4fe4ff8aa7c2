//! Principal and low-lying eigenpairs of the pencil (K, M).

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Side;
use crate::error::{Error, Result};
use crate::forms::DiscreteForm;
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Imaginary part for members of a complex-conjugate pair.
    pub lambda_im: f64,
    /// Nodal values over all mesh nodes (zero on Dirichlet nodes).
    pub phi: Vec<f64>,
    /// `‖Kφ − λMφ‖ / ‖φ‖` on the free nodes.
    pub residual: f64,
    pub side: Side,
    /// Set when a neighbouring eigenvalue lies closer than 1e-10 (relative).
    pub degenerate: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Residual to aim for.
    pub tol: f64,
    /// Largest residual accepted before reporting a convergence failure.
    pub accept: f64,
    pub max_iter: usize,
    /// Cap on refactorizations with a Rayleigh-quotient shift.
    pub max_restarts: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-11, accept: 1e-8, max_iter: 2000, max_restarts: 30 }
    }
}

pub(crate) fn operator(form: &DiscreteForm, side: Side) -> CsrMatrix {
    match side {
        Side::Primal => form.k_int.clone(),
        Side::Adjoint => form.k_int.transpose(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mdot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn m_normalize(m: &[f64], x: &mut [f64]) {
    let s = mdot(m, x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= s);
}

fn residual(k: &CsrMatrix, m: &[f64], x: &[f64], lambda: f64) -> f64 {
    let kx = k.mul_vec(x);
    let r: f64 = kx.iter().zip(x).zip(m).map(|((a, b), w)| (a - lambda * w * b).powi(2)).sum();
    r.sqrt() / norm(x)
}

fn rayleigh(k: &CsrMatrix, m: &[f64], x: &[f64], symmetric: bool) -> f64 {
    let kx = k.mul_vec(x);
    if symmetric {
        dot(x, &kx) / mdot(m, x, x)
    } else {
        let mx: Vec<f64> = x.iter().zip(m).map(|(a, w)| a * w).collect();
        dot(&mx, &kx) / dot(&mx, &mx)
    }
}

fn shifted(k: &CsrMatrix, m: &[f64], sigma: f64) -> CsrMatrix {
    if sigma == 0.0 {
        k.clone()
    } else {
        k.add(1.0, &CsrMatrix::from_diagonal(m), -sigma)
    }
}

/// Eigenpair with the smallest real part, by inverse iteration followed by
/// Rayleigh-quotient shifts.
pub fn principal_eigenpair(form: &DiscreteForm, side: Side) -> Result<EigenPair> {
    principal_eigenpair_with(form, side, &EigenOptions::default())
}

pub fn principal_eigenpair_with(form: &DiscreteForm, side: Side, opts: &EigenOptions) -> Result<EigenPair> {
    let k = operator(form, side);
    let m = &form.ml_int;
    let n = m.len();
    if n == 0 {
        return Err(Error::InvalidArgument("form has no free nodes".into()));
    }
    let sym = form.symmetric;
    let (lu0, _) = match k.lu() {
        Ok(lu) => (lu, 0.0),
        Err(_) => (shifted(&k, m, -1.0).lu()?, -1.0),
    };
    let mut x = vec![1.0; n];
    m_normalize(m, &mut x);
    let mut lambda = rayleigh(&k, m, &x, sym);
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let mx: Vec<f64> = x.iter().zip(m).map(|(a, w)| a * w).collect();
        x = lu0.solve(&mx)?;
        m_normalize(m, &mut x);
        let next = rayleigh(&k, m, &x, sym);
        let done = (next - lambda).abs() <= 1e-9 * next.abs().max(1.0);
        lambda = next;
        if done {
            break;
        }
    }
    let mut res = residual(&k, m, &x, lambda);
    let mut restarts = 0;
    while res > opts.tol && restarts < opts.max_restarts {
        restarts += 1;
        iterations += 1;
        let lu = match shifted(&k, m, lambda).lu() {
            Ok(lu) => lu,
            Err(_) => shifted(&k, m, lambda * (1.0 + 1e-12)).lu()?,
        };
        let mx: Vec<f64> = x.iter().zip(m).map(|(a, w)| a * w).collect();
        let y = match lu.solve(&mx) {
            Ok(y) => y,
            Err(_) => break,
        };
        let mut y = y;
        m_normalize(m, &mut y);
        if y.iter().sum::<f64>() < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        let l2 = rayleigh(&k, m, &y, sym);
        let r2 = residual(&k, m, &y, l2);
        if r2 >= res {
            break;
        }
        x = y;
        lambda = l2;
        res = r2;
    }
    if res > opts.accept {
        return Err(Error::ConvergenceFailure { iterations, residual: res });
    }
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let negative = x.iter().filter(|&&v| v <= 0.0).count();
    if negative > 0 {
        return Err(Error::NonPositiveEigenvector { negative });
    }
    Ok(EigenPair { lambda, lambda_im: 0.0, phi: form.extend(&x), residual: res, side, degenerate: false, iterations })
}

fn m_orthonormalize(m: &[f64], xs: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for j in 0..xs.len() {
            for i in 0..j {
                let c = mdot(m, &xs[i], &xs[j]);
                let (head, tail) = xs.split_at_mut(j);
                for (a, b) in tail[0].iter_mut().zip(&head[i]) {
                    *a -= c * b;
                }
            }
            m_normalize(m, &mut xs[j]);
        }
    }
}

struct Ritz {
    re: f64,
    im: f64,
    vre: Vec<f64>,
    vim: Vec<f64>,
}

fn rayleigh_ritz(k: &CsrMatrix, xs: &[Vec<f64>], symmetric: bool) -> Result<Vec<Ritz>> {
    let p = xs.len();
    let kx: Vec<Vec<f64>> = xs.iter().map(|x| k.mul_vec(x)).collect();
    let h = Mat::from_fn(p, p, |i, j| dot(&xs[i], &kx[j]));
    let combine = |coef: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut v = vec![0.0; xs[0].len()];
        for (c, x) in xs.iter().enumerate() {
            let a = coef(c);
            if a != 0.0 {
                v.iter_mut().zip(x).for_each(|(s, xi)| *s += a * xi);
            }
        }
        v
    };
    let mut out = Vec::with_capacity(p);
    if symmetric {
        let hs = Mat::from_fn(p, p, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
        let e = hs
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Solver(format!("Ritz eigenproblem: {e:?}")))?;
        let s = e.S().column_vector();
        let u = e.U();
        for j in 0..p {
            let v = combine(&|c| u[(c, j)]);
            out.push(Ritz { re: s[j], im: 0.0, vre: v, vim: vec![] });
        }
    } else {
        let e = h.eigen().map_err(|e| Error::Solver(format!("Ritz eigenproblem: {e:?}")))?;
        let s = e.S().column_vector();
        let u = e.U();
        for j in 0..p {
            let vre = combine(&|c| u[(c, j)].re);
            let vim = combine(&|c| u[(c, j)].im);
            let im = s[j].im;
            out.push(Ritz { re: s[j].re, im, vre, vim: if im == 0.0 { vec![] } else { vim } });
        }
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

fn ritz_residual(k: &CsrMatrix, m: &[f64], r: &Ritz) -> f64 {
    if r.vim.is_empty() {
        return residual(k, m, &r.vre, r.re);
    }
    let kr = k.mul_vec(&r.vre);
    let ki = k.mul_vec(&r.vim);
    let mut s = 0.0;
    for i in 0..m.len() {
        let mr = m[i] * r.vre[i];
        let mi = m[i] * r.vim[i];
        let a = kr[i] - (r.re * mr - r.im * mi);
        let b = ki[i] - (r.re * mi + r.im * mr);
        s += a * a + b * b;
    }
    s.sqrt() / (dot(&r.vre, &r.vre) + dot(&r.vim, &r.vim)).sqrt()
}

/// The `count` eigenpairs with smallest real parts, by block shift-invert
/// subspace iteration with Rayleigh–Ritz extraction.
pub fn eigenpairs(form: &DiscreteForm, count: usize, side: Side) -> Result<Vec<EigenPair>> {
    eigenpairs_with(form, count, side, &EigenOptions { tol: 1e-9, accept: 1e-6, ..Default::default() })
}

pub fn eigenpairs_with(form: &DiscreteForm, count: usize, side: Side, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    let k = operator(form, side);
    let m = &form.ml_int;
    let n = m.len();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!("cannot compute {count} eigenpairs of a {n}-dimensional problem")));
    }
    let p = (2 * count + 4).min(n);
    let sym = form.symmetric;
    let lu = match k.lu() {
        Ok(lu) => lu,
        Err(_) => shifted(&k, m, -1.0).lu()?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut xs: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..n).map(|i| if j == 0 { 1.0 } else { rng.gen_range(-1.0..1.0) } + 1e-3 * i as f64 / n as f64).collect())
        .collect();
    m_orthonormalize(m, &mut xs);
    let mut best: Option<(f64, Vec<Ritz>, Vec<f64>)> = None;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let mx: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().zip(m).map(|(a, w)| a * w).collect()).collect();
        xs = lu.solve_many(&mx, false)?;
        m_orthonormalize(m, &mut xs);
        if it % 4 != 3 && it + 1 != opts.max_iter {
            continue;
        }
        let ritz = rayleigh_ritz(&k, &xs, sym)?;
        let res: Vec<f64> = ritz.iter().take(count).map(|r| ritz_residual(&k, m, r)).collect();
        let worst = res.iter().copied().fold(0.0, f64::max);
        if best.as_ref().map_or(true, |b| worst < b.0) {
            best = Some((worst, ritz, res));
        }
        if worst <= opts.tol {
            break;
        }
    }
    let (worst, ritz, res) = best.expect("at least one Ritz extraction");
    if worst > opts.accept {
        return Err(Error::ConvergenceFailure { iterations, residual: worst });
    }
    let mut out = Vec::with_capacity(count);
    for (j, (r, res)) in ritz.into_iter().take(count).zip(res).enumerate() {
        let mut v = r.vre;
        m_normalize(m, &mut v);
        let flip = if j == 0 {
            v.iter().sum::<f64>() < 0.0
        } else {
            let big = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            big < 0.0
        };
        if flip {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        out.push(EigenPair {
            lambda: r.re,
            lambda_im: r.im,
            phi: form.extend(&v),
            residual: res,
            side,
            degenerate: false,
            iterations,
        });
    }
    for j in 0..out.len() {
        let l = out[j].lambda;
        let close = |o: &EigenPair| (o.lambda - l).abs() < 1e-10 * l.abs().max(1.0);
        let prev = j > 0 && close(&out[j - 1]);
        let next = j + 1 < out.len() && close(&out[j + 1]);
        out[j].degenerate = prev || next;
    }
    Ok(out)
}
