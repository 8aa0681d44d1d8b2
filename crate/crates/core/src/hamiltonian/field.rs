//! Scalar Hamiltonians and smooth planar vector fields.

use std::collections::BTreeMap;

use super::autodiff::{Dual2, Jet2, Real};
use super::expr::Tape;
use crate::error::{Error, Result};

/// A smooth function `H : R² → R`, either a builtin or a parsed expression.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarField {
    /// `(x1² − 1)²/4 + x2²/2`
    Dumbbell,
    /// `(x1² + x2²)/2`
    Harmonic,
    /// Dumbbell plus `a·x1·x2²`.
    PerturbedDumbbell { a: f64 },
    /// Dumbbell plus `c·x1`, which makes the wells unequal.
    TiltedDumbbell { c: f64 },
    Expr(Tape),
}

impl ScalarField {
    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let known: &[&str] = match name {
            "dumbbell" | "harmonic" => &[],
            "perturbed_dumbbell" => &["a"],
            "tilted_dumbbell" => &["c"],
            other => return Err(Error::Config(format!("unknown builtin Hamiltonian `{other}`"))),
        };
        if let Some(bad) = params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::Config(format!("parameter `{bad}` not accepted by `{name}`")));
        }
        Ok(match name {
            "dumbbell" => ScalarField::Dumbbell,
            "harmonic" => ScalarField::Harmonic,
            "perturbed_dumbbell" => ScalarField::PerturbedDumbbell { a: get("a", 0.05) },
            _ => ScalarField::TiltedDumbbell { c: get("c", 0.02) },
        })
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(ScalarField::Expr(Tape::parse(src)?))
    }

    pub fn name(&self) -> String {
        match self {
            ScalarField::Dumbbell => "dumbbell".into(),
            ScalarField::Harmonic => "harmonic".into(),
            ScalarField::PerturbedDumbbell { a } => format!("perturbed_dumbbell(a={a})"),
            ScalarField::TiltedDumbbell { c } => format!("tilted_dumbbell(c={c})"),
            ScalarField::Expr(t) => t.source().to_string(),
        }
    }

    #[inline]
    pub fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        let dumbbell = |x1: T, x2: T| {
            let a = x1 * x1 - T::cst(1.0);
            (a * a).scale(0.25) + (x2 * x2).scale(0.5)
        };
        match self {
            ScalarField::Dumbbell => dumbbell(x1, x2),
            ScalarField::Harmonic => (x1 * x1 + x2 * x2).scale(0.5),
            ScalarField::PerturbedDumbbell { a } => dumbbell(x1, x2) + (x1 * x2 * x2).scale(*a),
            ScalarField::TiltedDumbbell { c } => dumbbell(x1, x2) + x1.scale(*c),
            ScalarField::Expr(t) => t.eval(x1, x2),
        }
    }

    #[inline]
    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.eval(x[0], x[1])
    }

    #[inline]
    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            // the hot loop integrates the dumbbell; skip the dual-number pass
            ScalarField::Dumbbell => [x[0] * (x[0] * x[0] - 1.0), x[1]],
            _ => self.eval(Dual2::var(x[0], 0), Dual2::var(x[1], 1)).g,
        }
    }

    #[inline]
    pub fn value_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let d = self.eval(Dual2::var(x[0], 0), Dual2::var(x[1], 1));
        (d.v, d.g)
    }

    /// Value, gradient and Hessian at `x`.
    #[inline]
    pub fn jet(&self, x: [f64; 2]) -> Jet2 {
        self.eval(Jet2::var(x[0], 0), Jet2::var(x[1], 1))
    }
}

/// The rotated gradient `∇⊥H = (−∂₂H, ∂₁H)`.
#[inline]
pub fn perp(g: [f64; 2]) -> [f64; 2] {
    [-g[1], g[0]]
}

/// A planar vector field `e(x)` with its Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorField {
    Constant([f64; 2]),
    Expr(Box<[Tape; 2]>),
}

impl VectorField {
    pub fn parse(c1: &str, c2: &str) -> Result<Self> {
        let t1 = Tape::parse(c1)?;
        let t2 = Tape::parse(c2)?;
        if t1.is_constant() && t2.is_constant() {
            Ok(VectorField::Constant([t1.eval(0.0, 0.0), t2.eval(0.0, 0.0)]))
        } else {
            Ok(VectorField::Expr(Box::new([t1, t2])))
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VectorField::Constant(_))
    }

    #[inline]
    pub fn value(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            VectorField::Constant(c) => *c,
            VectorField::Expr(t) => [t[0].eval(x[0], x[1]), t[1].eval(x[0], x[1])],
        }
    }

    /// Value and Jacobian `J[i][k] = ∂e_i/∂x_k`.
    pub fn jacobian(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        match self {
            VectorField::Constant(c) => (*c, [[0.0; 2]; 2]),
            VectorField::Expr(t) => {
                let (a, b) = (Dual2::var(x[0], 0), Dual2::var(x[1], 1));
                let e1 = t[0].eval(a, b);
                let e2 = t[1].eval(a, b);
                ([e1.v, e2.v], [e1.g, e2.g])
            }
        }
    }

    pub fn divergence(&self, x: [f64; 2]) -> f64 {
        let (_, j) = self.jacobian(x);
        j[0][0] + j[1][1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumbbell_builtin_matches_formula_and_expression() {
        let h = ScalarField::Dumbbell;
        let e = ScalarField::parse("(x1^2 - 1)^2/4 + x2^2/2").unwrap();
        for &x in &[[0.3, -0.7], [1.0, 0.0], [-1.4, 2.2]] {
            let exact = (x[0] * x[0] - 1.0f64).powi(2) / 4.0 + x[1] * x[1] / 2.0;
            assert_eq!(h.value(x), exact);
            assert!((e.value(x) - exact).abs() < 1e-14);
            let g = h.grad(x);
            let gj = h.jet(x).g;
            let ge = e.grad(x);
            for i in 0..2 {
                assert!((g[i] - gj[i]).abs() < 1e-14 && (g[i] - ge[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn builtin_params_are_checked() {
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), 0.1);
        assert_eq!(
            ScalarField::builtin("perturbed_dumbbell", &p).unwrap(),
            ScalarField::PerturbedDumbbell { a: 0.1 }
        );
        assert!(ScalarField::builtin("dumbbell", &p).is_err());
        assert!(ScalarField::builtin("nope", &BTreeMap::new()).is_err());
    }

    #[test]
    fn vector_field_jacobian() {
        let e = VectorField::parse("1 + 0.3*sin(x2)", "0").unwrap();
        assert!(!e.is_constant());
        let (v, j) = e.jacobian([0.2, 0.5]);
        assert!((v[0] - (1.0 + 0.3 * 0.5f64.sin())).abs() < 1e-15);
        assert!((j[0][1] - 0.3 * 0.5f64.cos()).abs() < 1e-15);
        assert_eq!(e.divergence([0.2, 0.5]), 0.0);
        let c = VectorField::parse("1", "0").unwrap();
        assert_eq!(c, VectorField::Constant([1.0, 0.0]));
    }
}
