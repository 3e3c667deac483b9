//! Second-order jets: value, gradient and Hessian propagated together.
//!
//! The chain rules are exact, so metric derivatives obtained this way carry
//! only rounding error. This is what makes jet-exact Christoffel symbols
//! possible without symbolic differentiation.

use nalgebra::{DMatrix, DVector};

use super::{BinaryOp, EvalError, Span, UnaryOp, MAX_INT_POW};

#[derive(Clone, Debug)]
pub struct Jet2 {
    pub v: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Jet2 {
    pub fn constant(dim: usize, v: f64) -> Jet2 {
        Jet2 { v, g: DVector::zeros(dim), h: DMatrix::zeros(dim, dim) }
    }

    pub fn coordinate(dim: usize, index: usize, v: f64) -> Jet2 {
        let mut g = DVector::zeros(dim);
        g[index] = 1.0;
        Jet2 { v, g, h: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn is_constant(&self) -> bool {
        self.g.iter().all(|&c| c == 0.0) && self.h.iter().all(|&c| c == 0.0)
    }

    /// Compose with a scalar function given its value and first two
    /// derivatives at `self.v`.
    fn compose(&self, fv: f64, d1: f64, d2: f64) -> Jet2 {
        let g = &self.g * d1;
        let h = &self.h * d1 + (&self.g * self.g.transpose()) * d2;
        Jet2 { v: fv, g, h }
    }

    fn mul(&self, o: &Jet2) -> Jet2 {
        let g = &self.g * o.v + &o.g * self.v;
        // Pairing cross with its transpose before anything else keeps the
        // Hessian bit-for-bit symmetric: addition is commutative but not
        // associative, so folding the transpose in last would round the
        // two triangles differently.
        let cross = &self.g * o.g.transpose();
        let sym = &cross + cross.transpose();
        let h = &self.h * o.v + &o.h * self.v + sym;
        Jet2 { v: self.v * o.v, g, h }
    }

    fn check(self, what: &str, span: Span) -> Result<Jet2, EvalError> {
        let ok = self.v.is_finite()
            && self.g.iter().all(|c| c.is_finite())
            && self.h.iter().all(|c| c.is_finite());
        if ok {
            Ok(self)
        } else {
            Err(EvalError::new(format!("{what} produced a non-finite jet"), span))
        }
    }

    pub(super) fn apply_unary(&self, op: UnaryOp, span: Span) -> Result<Jet2, EvalError> {
        let v = self.v;
        let out = match op {
            UnaryOp::Neg => self.compose(-v, -1.0, 0.0),
            UnaryOp::Sin => self.compose(v.sin(), v.cos(), -v.sin()),
            UnaryOp::Cos => self.compose(v.cos(), -v.sin(), -v.cos()),
            UnaryOp::Sinh => self.compose(v.sinh(), v.cosh(), v.sinh()),
            UnaryOp::Cosh => self.compose(v.cosh(), v.sinh(), v.cosh()),
            UnaryOp::Tanh => {
                let th = v.tanh();
                let sech2 = 1.0 - th * th;
                self.compose(th, sech2, -2.0 * th * sech2)
            }
            UnaryOp::Exp => {
                let e = v.exp();
                self.compose(e, e, e)
            }
            UnaryOp::Ln => {
                if v <= 0.0 {
                    return Err(EvalError::new(format!("ln of {v}"), span));
                }
                self.compose(v.ln(), 1.0 / v, -1.0 / (v * v))
            }
            UnaryOp::Sqrt => {
                // The value is fine at 0 but the jet is not; the jet path
                // therefore requires a strictly positive radicand.
                if v <= 0.0 {
                    return Err(EvalError::new(format!("sqrt jet at {v}"), span));
                }
                let r = v.sqrt();
                self.compose(r, 0.5 / r, -0.25 / (r * v))
            }
            UnaryOp::Abs => {
                if v == 0.0 {
                    return Err(EvalError::new("abs is not differentiable at 0", span));
                }
                let s = v.signum();
                self.compose(v.abs(), s, 0.0)
            }
            UnaryOp::Arcsin => {
                if v.abs() >= 1.0 {
                    return Err(EvalError::new(format!("arcsin jet at {v}"), span));
                }
                let w = 1.0 - v * v;
                let d1 = 1.0 / w.sqrt();
                self.compose(v.asin(), d1, v * d1 / w)
            }
        };
        out.check(op.name(), span)
    }

    pub(super) fn apply_binary(
        &self,
        op: BinaryOp,
        o: &Jet2,
        span: Span,
    ) -> Result<Jet2, EvalError> {
        let out = match op {
            BinaryOp::Add => {
                Jet2 { v: self.v + o.v, g: &self.g + &o.g, h: &self.h + &o.h }
            }
            BinaryOp::Sub => {
                Jet2 { v: self.v - o.v, g: &self.g - &o.g, h: &self.h - &o.h }
            }
            BinaryOp::Mul => self.mul(o),
            BinaryOp::Div => {
                if o.v == 0.0 {
                    return Err(EvalError::new("division by zero", span));
                }
                let w = o.v;
                let recip = o.compose(1.0 / w, -1.0 / (w * w), 2.0 / (w * w * w));
                self.mul(&recip)
            }
            BinaryOp::Pow => {
                if o.is_constant() {
                    self.pow_const(o.v, span)?
                } else {
                    // General exponent: f^g = exp(g * ln f), base must be
                    // strictly positive.
                    if self.v <= 0.0 {
                        return Err(EvalError::new(
                            format!("{}^{} with non-positive base", self.v, o.v),
                            span,
                        ));
                    }
                    let lnf = self.apply_unary(UnaryOp::Ln, span)?;
                    o.mul(&lnf).apply_unary(UnaryOp::Exp, span)?
                }
            }
        };
        out.check("arithmetic", span)
    }

    fn pow_const(&self, p: f64, span: Span) -> Result<Jet2, EvalError> {
        let v = self.v;
        if p == p.round() && p.abs() <= MAX_INT_POW {
            let k = p as i32;
            if k == 0 {
                return Ok(Jet2::constant(self.dim(), 1.0));
            }
            if v == 0.0 && k < 0 {
                return Err(EvalError::new("zero base with negative exponent", span));
            }
            // Integer powers stay valid for negative bases. k == 1 is kept
            // off the generic formula so 0^0 factors cannot poison it.
            let fv = v.powi(k);
            let d1 = p * if k == 1 { 1.0 } else { v.powi(k - 1) };
            let d2 = if k == 1 { 0.0 } else { p * (p - 1.0) * v.powi(k - 2) };
            self.compose(fv, d1, d2).check("pow", span)
        } else {
            if v <= 0.0 {
                return Err(EvalError::new(
                    format!("{v}^{p} with non-positive base and non-integer exponent"),
                    span,
                ));
            }
            let fv = v.powf(p);
            let d1 = p * v.powf(p - 1.0);
            let d2 = p * (p - 1.0) * v.powf(p - 2.0);
            self.compose(fv, d1, d2).check("pow", span)
        }
    }
}
