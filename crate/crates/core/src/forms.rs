//! P1 assembly of non-symmetric second-order forms
//!
//! E(f, g) = ∫ a∇f·∇g + ∫ (b·∇f) g + ∫ f (d·∇g) + ∫ c f g
//!
//! with a symmetric. Matrices act on coefficient vectors of the trial
//! function: `K[i][j] = E(φ_j, φ_i)`, so the semi-discrete heat equation reads
//! `M u' = -K u`.

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// A scalar coefficient: a constant or an expression in `x` and `y`.
#[derive(Clone, Debug)]
pub enum Scalar {
    Const(f64),
    Expr { source: String, tree: Node<DefaultNumericTypes> },
}

impl Scalar {
    pub fn parse(source: &str) -> Result<Self> {
        if let Ok(v) = source.trim().parse::<f64>() {
            return Ok(Scalar::Const(v));
        }
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Parse(format!("coefficient `{source}`: {e}")))?;
        let s = Scalar::Expr { source: source.to_string(), tree };
        s.eval(Point::new(0.5, 0.5))
            .map_err(|e| Error::Parse(format!("coefficient `{source}`: {e}")))?;
        Ok(s)
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        match self {
            Scalar::Const(v) => Ok(*v),
            Scalar::Expr { source, tree } => {
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let set = |ctx: &mut HashMapContext<DefaultNumericTypes>, k: &str, v: f64| {
                    ctx.set_value(k.into(), Value::Float(v)).expect("fresh context accepts floats")
                };
                set(&mut ctx, "x", p.x);
                set(&mut ctx, "y", p.y);
                set(&mut ctx, "pi", std::f64::consts::PI);
                tree.eval_number_with_context(&ctx)
                    .map_err(|e| Error::Assembly(format!("`{source}` at ({}, {}): {e}", p.x, p.y)))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Scalar::Const(v) if *v == 0.0)
    }

    pub fn source(&self) -> String {
        match self {
            Scalar::Const(v) => format!("{v}"),
            Scalar::Expr { source, .. } => source.clone(),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Const(v)
    }
}

impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Scalar::Const(v) => s.serialize_f64(*v),
            Scalar::Expr { source, .. } => s.serialize_str(source),
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Scalar::Const(v)),
            Raw::Text(s) => Scalar::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Coefficients `a` (symmetric 2x2), `b`, `d` (vectors) and `c` (scalar).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientField {
    /// Entries `[a11, a12, a22]`.
    #[serde(default = "identity_a")]
    pub a: [Scalar; 3],
    #[serde(default = "zero_vec")]
    pub b: [Scalar; 2],
    #[serde(default = "zero_vec")]
    pub d: [Scalar; 2],
    #[serde(default = "zero_scalar")]
    pub c: Scalar,
}

impl PartialEq for CoefficientField {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

fn identity_a() -> [Scalar; 3] {
    [1.0.into(), 0.0.into(), 1.0.into()]
}
fn zero_vec() -> [Scalar; 2] {
    [0.0.into(), 0.0.into()]
}
fn zero_scalar() -> Scalar {
    0.0.into()
}

/// Coefficient values at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientSample {
    pub a: [f64; 3],
    pub b: [f64; 2],
    pub d: [f64; 2],
    pub c: f64,
}

impl CoefficientSample {
    /// Eigenvalues of `a`, ascending.
    pub fn a_eigenvalues(&self) -> (f64, f64) {
        let [p, q, r] = self.a;
        let m = 0.5 * (p + r);
        let s = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        (m - s, m + s)
    }
}

impl Default for CoefficientField {
    fn default() -> Self {
        Self::laplacian()
    }
}

impl CoefficientField {
    pub fn laplacian() -> Self {
        Self { a: identity_a(), b: zero_vec(), d: zero_vec(), c: zero_scalar() }
    }

    pub fn constant(b: [f64; 2], d: [f64; 2], c: f64) -> Self {
        Self { a: identity_a(), b: b.map(Scalar::from), d: d.map(Scalar::from), c: c.into() }
    }

    /// Coefficients of the formal adjoint: `b` and `d` swapped.
    pub fn adjoint(&self) -> Self {
        Self { a: self.a.clone(), b: self.d.clone(), d: self.b.clone(), c: self.c.clone() }
    }

    pub fn is_symmetric(&self) -> bool {
        // b = d makes the drift part symmetric
        self.b.iter().zip(&self.d).all(|(b, d)| b.source() == d.source())
    }

    pub fn eval(&self, p: Point) -> Result<CoefficientSample> {
        let s = CoefficientSample {
            a: [self.a[0].eval(p)?, self.a[1].eval(p)?, self.a[2].eval(p)?],
            b: [self.b[0].eval(p)?, self.b[1].eval(p)?],
            d: [self.d[0].eval(p)?, self.d[1].eval(p)?],
            c: self.c.eval(p)?,
        };
        let all = s.a.iter().chain(&s.b).chain(&s.d).chain(std::iter::once(&s.c));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly(format!("non-finite coefficient at ({}, {})", p.x, p.y)));
        }
        Ok(s)
    }

    /// Suprema of the quantities entering the Assumption-A bounds, over the given points.
    pub fn bounds_on(&self, points: &[Point]) -> Result<CoefficientBounds> {
        let mut out = CoefficientBounds {
            lambda_ell: f64::INFINITY,
            big_lambda_ell: 0.0,
            sup_b_minus_d: 0.0,
            sup_b_plus_d: 0.0,
            sup_c: 0.0,
        };
        for &p in points {
            let s = self.eval(p)?;
            let (lo, hi) = s.a_eigenvalues();
            out.lambda_ell = out.lambda_ell.min(lo);
            out.big_lambda_ell = out.big_lambda_ell.max(hi);
            let bm = (s.b[0] - s.d[0]).hypot(s.b[1] - s.d[1]);
            let bp = (s.b[0] + s.d[0]).hypot(s.b[1] + s.d[1]);
            out.sup_b_minus_d = out.sup_b_minus_d.max(bm);
            out.sup_b_plus_d = out.sup_b_plus_d.max(bp);
            out.sup_c = out.sup_c.max(s.c.abs());
        }
        if !(out.lambda_ell > 0.0) {
            return Err(Error::Assembly(format!("diffusion matrix not uniformly elliptic (min eigenvalue {})", out.lambda_ell)));
        }
        Ok(out)
    }

    pub fn bounds_on_mesh(&self, mesh: &Mesh) -> Result<CoefficientBounds> {
        let pts: Vec<Point> = mesh.triangles.iter().map(|t| centroid(mesh, t)).collect();
        self.bounds_on(&pts)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoefficientBounds {
    pub lambda_ell: f64,
    #[serde(rename = "Lambda_ell")]
    pub big_lambda_ell: f64,
    pub sup_b_minus_d: f64,
    pub sup_b_plus_d: f64,
    pub sup_c: f64,
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AssumptionConstants {
    pub C0: f64,
    pub C2: f64,
    pub C3: f64,
    pub C5: f64,
    pub C8: f64,
}

impl AssumptionConstants {
    /// Gårding shift: `xᵀKx ≥ -α xᵀMx` is expected with this α.
    pub fn garding_alpha(&self) -> f64 {
        self.C3 + self.C5 + 1.0
    }
}

/// Conservative Cauchy–Schwarz bounds; upper bounds, not sharp values.
pub fn estimate_assumption_constants(bounds: &CoefficientBounds) -> AssumptionConstants {
    let l = bounds.lambda_ell;
    let c5 = bounds.sup_b_minus_d.powi(2) / (4.0 * l);
    let c2 = bounds.sup_b_plus_d.powi(2) / (4.0 * l);
    let c3 = bounds.sup_c + c2;
    AssumptionConstants { C0: bounds.sup_b_minus_d / (2.0 * l.sqrt()), C2: c2, C3: c3, C5: c5, C8: c2 + c3 + c5 }
}

/// Assembled matrices over all mesh nodes plus the Dirichlet restriction.
#[derive(Clone, Debug)]
pub struct DiscreteForm {
    pub k_s: CsrMatrix,
    pub k_b: CsrMatrix,
    pub k_d: CsrMatrix,
    pub k_c: CsrMatrix,
    /// Consistent mass.
    pub m: CsrMatrix,
    /// Row-sum lumped mass per node.
    pub m_lumped: Vec<f64>,
    pub k: CsrMatrix,
    pub dirichlet_mask: Vec<bool>,
    /// Free (interior) node indices in increasing order.
    pub interior: Vec<usize>,
    /// Position of each node in `interior`, or `usize::MAX` on the boundary.
    pub interior_index: Vec<usize>,
    /// `K` restricted to interior rows and columns.
    pub k_int: CsrMatrix,
    pub m_int: CsrMatrix,
    pub ml_int: Vec<f64>,
    pub symmetric: bool,
}

fn centroid(mesh: &Mesh, t: &[usize; 3]) -> Point {
    let [p, q, r] = t.map(|v| mesh.nodes[v]);
    Point::new((p.x + q.x + r.x) / 3.0, (p.y + q.y + r.y) / 3.0)
}

/// Area and constant basis gradients of a P1 triangle.
pub(crate) fn p1_gradients(mesh: &Mesh, t: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    let [p0, p1, p2] = t.map(|v| mesh.nodes[v]);
    let det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    let area = 0.5 * det;
    let g = [
        [(p1.y - p2.y) / det, (p2.x - p1.x) / det],
        [(p2.y - p0.y) / det, (p0.x - p2.x) / det],
        [(p0.y - p1.y) / det, (p1.x - p0.x) / det],
    ];
    (area, g)
}

type Trip = Vec<(usize, usize, f64)>;

/// Assembles the form. Triangles are processed in parallel chunks whose
/// triplets are concatenated in triangle order, so results do not depend on
/// the thread count.
pub fn assemble(mesh: &Mesh, coeffs: &CoefficientField) -> Result<DiscreteForm> {
    let n = mesh.nodes.len();
    let chunks: Vec<Result<[Trip; 5]>> = mesh
        .triangles
        .par_chunks(256)
        .map(|tris| {
            let mut out: [Trip; 5] = Default::default();
            for t in tris {
                let (area, g) = p1_gradients(mesh, t);
                if !(area > 0.0) {
                    return Err(Error::Assembly(format!("triangle {t:?} has non-positive area {area}")));
                }
                let s = coeffs.eval(centroid(mesh, t))?;
                let [a11, a12, a22] = s.a;
                for i in 0..3 {
                    for j in 0..3 {
                        let (gi, gj) = (g[i], g[j]);
                        let ks = area
                            * (a11 * gj[0] * gi[0] + a12 * (gj[0] * gi[1] + gj[1] * gi[0]) + a22 * gj[1] * gi[1]);
                        let kb = area / 3.0 * (s.b[0] * gj[0] + s.b[1] * gj[1]);
                        let kd = area / 3.0 * (s.d[0] * gi[0] + s.d[1] * gi[1]);
                        let mm = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                        let (r, c) = (t[i], t[j]);
                        out[0].push((r, c, ks));
                        out[1].push((r, c, kb));
                        out[2].push((r, c, kd));
                        out[3].push((r, c, s.c * mm));
                        out[4].push((r, c, mm));
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all: [Trip; 5] = Default::default();
    for c in chunks {
        let c = c?;
        for (dst, src) in all.iter_mut().zip(c) {
            dst.extend(src);
        }
    }
    let [ts, tb, td, tc, tm] = all;
    let k_s = CsrMatrix::from_triplets(n, n, &ts);
    let k_b = CsrMatrix::from_triplets(n, n, &tb);
    let k_d = CsrMatrix::from_triplets(n, n, &td);
    let k_c = CsrMatrix::from_triplets(n, n, &tc);
    let m = CsrMatrix::from_triplets(n, n, &tm);
    let mut tk = ts;
    tk.extend(tb);
    tk.extend(td);
    tk.extend(tc);
    let k = CsrMatrix::from_triplets(n, n, &tk);
    Ok(DiscreteForm::from_parts(mesh, k_s, k_b, k_d, k_c, m, k, coeffs.is_symmetric()))
}

impl DiscreteForm {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        mesh: &Mesh,
        k_s: CsrMatrix,
        k_b: CsrMatrix,
        k_d: CsrMatrix,
        k_c: CsrMatrix,
        m: CsrMatrix,
        k: CsrMatrix,
        symmetric: bool,
    ) -> Self {
        let n = mesh.nodes.len();
        let dirichlet_mask = mesh.boundary_mask.clone();
        let interior: Vec<usize> = (0..n).filter(|&i| !dirichlet_mask[i]).collect();
        let mut interior_index = vec![usize::MAX; n];
        for (k, &i) in interior.iter().enumerate() {
            interior_index[i] = k;
        }
        let m_lumped = m.row_sums();
        let k_int = k.restrict(&interior);
        let m_int = m.restrict(&interior);
        let ml_int = interior.iter().map(|&i| m_lumped[i]).collect();
        Self { k_s, k_b, k_d, k_c, m, m_lumped, k, dirichlet_mask, interior, interior_index, k_int, m_int, ml_int, symmetric }
    }

    pub fn n_nodes(&self) -> usize {
        self.dirichlet_mask.len()
    }

    pub fn n_free(&self) -> usize {
        self.interior.len()
    }

    /// Interior values extended by zero to all nodes.
    pub fn extend(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (k, &i) in self.interior.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    pub fn restrict_vec(&self, v: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&i| v[i]).collect()
    }

    /// The same form with `K` replaced by `Kᵀ` (the adjoint operator).
    pub fn adjoint(&self) -> Self {
        let mut out = self.clone();
        out.k_b = self.k_d.transpose();
        out.k_d = self.k_b.transpose();
        out.k = self.k.transpose();
        out.k_int = self.k_int.transpose();
        out
    }

    /// Smallest eigenvalue of the symmetric pencil ((K + Kᵀ)/2, M) on the
    /// interior, computed densely; intended for coarse meshes.
    pub fn garding_min_eigenvalue(&self) -> Result<f64> {
        let s = self.k_int.to_dense();
        let s = (&s + s.transpose()) * 0.5;
        let m = self.m_int.to_dense();
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Assembly("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Assembly("mass Cholesky factor is singular".into()))?;
        let c: DMatrix<f64> = &linv * s * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let ev = c.symmetric_eigenvalues();
        Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Coordinate-format text of one assembled matrix.
    pub fn export_triplets(&self, which: &str) -> Result<String> {
        let m = match which {
            "K" => &self.k,
            "K_s" => &self.k_s,
            "K_b" => &self.k_b,
            "K_d" => &self.k_d,
            "K_c" => &self.k_c,
            "M" => &self.m,
            _ => return Err(Error::InvalidArgument(format!("unknown matrix `{which}`"))),
        };
        Ok(m.to_triplet_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{load_domain, triangulate, DomainSpec};
    use proptest::prelude::*;

    fn square_mesh(h: f64) -> Mesh {
        let d = load_domain(&DomainSpec {
            name: "sq".into(),
            outer: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            holes: vec![],
            slits: vec![],
        })
        .unwrap();
        triangulate(&d, h).unwrap()
    }

    #[test]
    fn laplacian_is_symmetric_psd() {
        let mesh = square_mesh(0.2);
        let f = assemble(&mesh, &CoefficientField::laplacian()).unwrap();
        assert!(f.k.max_abs_diff(&f.k_s) == 0.0);
        assert!(f.k_s.max_abs_diff(&f.k_s.transpose()) < 1e-14);
        // constants are in the kernel of the full Neumann stiffness
        assert!(f.k_s.row_sums().iter().all(|v| v.abs() < 1e-12));
        assert!(f.garding_min_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn drift_is_skew_with_vanishing_interior_row_sums() {
        let mesh = square_mesh(0.1);
        let f = assemble(&mesh, &CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0)).unwrap();
        let skew = f.k.add(0.5, &f.k.transpose(), -0.5);
        assert!(skew.max_abs() > 1e-3);
        let parts = f.k_b.add(0.5, &f.k_b.transpose(), -0.5).add(1.0, &f.k_d.add(0.5, &f.k_d.transpose(), -0.5), 1.0);
        assert!(skew.max_abs_diff(&parts) < 1e-14);
        let rs = f.k_b.row_sums();
        for &i in &f.interior {
            assert!(rs[i].abs() < 1e-14, "row {i}: {}", rs[i]);
        }
    }

    #[test]
    fn unit_potential_is_mass() {
        let mesh = square_mesh(0.25);
        let f = assemble(&mesh, &CoefficientField::constant([0.0; 2], [0.0; 2], 1.0)).unwrap();
        assert!(f.k_c.max_abs_diff(&f.m) < 1e-15);
        let total: f64 = f.m_lumped.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expression_coefficients() {
        let s = Scalar::parse("1 + x*y").unwrap();
        assert!((s.eval(Point::new(2.0, 3.0)).unwrap() - 7.0).abs() < 1e-15);
        let s = Scalar::parse("math::sin(pi * x)").unwrap();
        assert!((s.eval(Point::new(0.5, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(Scalar::parse("1 +"), Err(Error::Parse(_))));
        let c: CoefficientField = serde_json::from_str(r#"{"b": ["x", 0], "c": "y*y"}"#).unwrap();
        assert_eq!(c.b[0].eval(Point::new(0.25, 0.0)).unwrap(), 0.25);
    }

    #[test]
    fn non_finite_coefficient_is_rejected() {
        let mesh = square_mesh(0.5);
        let mut c = CoefficientField::laplacian();
        c.c = Scalar::parse("1 / (x - x)").unwrap_or(Scalar::Const(f64::NAN));
        assert!(matches!(assemble(&mesh, &c), Err(Error::Assembly(_))));
    }

    #[test]
    fn assumption_constants() {
        let pts = [Point::new(0.3, 0.3)];
        let zero = estimate_assumption_constants(&CoefficientField::laplacian().bounds_on(&pts).unwrap());
        assert_eq!(zero, AssumptionConstants { C0: 0.0, C2: 0.0, C3: 0.0, C5: 0.0, C8: 0.0 });
        let drift = CoefficientField::constant([1.0, 0.0], [0.0, 0.0], 0.0);
        let k = estimate_assumption_constants(&drift.bounds_on(&pts).unwrap());
        assert!((k.C5 - 0.25).abs() < 1e-15 && (k.C2 - 0.25).abs() < 1e-15);
        assert_eq!(k.C8, k.C2 + k.C3 + k.C5);
        let double = CoefficientField::constant([2.0, 0.0], [0.0, 0.0], 0.0);
        let k2 = estimate_assumption_constants(&double.bounds_on(&pts).unwrap());
        assert!((k2.C5 - 4.0 * k.C5).abs() < 1e-15);
    }

    #[test]
    fn smooth_form_converges_quadratically() {
        // f = x(1-x) + y²/2 has ∫|∇f|² = ∫(1-2x)² + ∫y² = 2/3
        let err = |h: f64| {
            let mesh = square_mesh(h);
            let f = assemble(&mesh, &CoefficientField::laplacian()).unwrap();
            let u: Vec<f64> = mesh.nodes.iter().map(|p| p.x * (1.0 - p.x) + 0.5 * p.y * p.y).collect();
            let ku = f.k.mul_vec(&u);
            let e: f64 = u.iter().zip(&ku).map(|(a, b)| a * b).sum();
            (e - 2.0 / 3.0).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn adjoint_assembly_is_transpose(b0 in -2.0..2.0f64, b1 in -2.0..2.0f64, d0 in -2.0..2.0f64, d1 in -2.0..2.0f64, c in 0.0..3.0f64) {
            let mesh = square_mesh(0.25);
            let coeffs = CoefficientField::constant([b0, b1], [d0, d1], c);
            let f = assemble(&mesh, &coeffs).unwrap();
            let g = assemble(&mesh, &coeffs.adjoint()).unwrap();
            prop_assert!(g.k.max_abs_diff(&f.k.transpose()) < 1e-12);
        }

        #[test]
        fn garding_bound_holds(b0 in -3.0..3.0f64, b1 in -3.0..3.0f64, c in -1.0..1.0f64) {
            let mesh = square_mesh(0.25);
            let coeffs = CoefficientField::constant([b0, b1], [0.0, 0.0], c);
            let f = assemble(&mesh, &coeffs).unwrap();
            let k = estimate_assumption_constants(&coeffs.bounds_on_mesh(&mesh).unwrap());
            prop_assert!(f.garding_min_eigenvalue().unwrap() >= -k.garding_alpha());
        }

        #[test]
        fn stiffness_is_positive_semidefinite(x in proptest::collection::vec(-1.0..1.0f64, 1..64)) {
            let mesh = square_mesh(0.25);
            let f = assemble(&mesh, &CoefficientField::laplacian()).unwrap();
            let v: Vec<f64> = (0..mesh.nodes.len()).map(|i| x[i % x.len()] * (i as f64 + 1.0).sin()).collect();
            let kv = f.k_s.mul_vec(&v);
            let q: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
            prop_assert!(q >= -1e-12);
        }
    }
}
