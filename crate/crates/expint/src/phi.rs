//! φ-functions on scalars and operators, and exponential quadrature weights.
//!
//! The φ family is defined by φ_0 = exp and φ_j(z) = (φ_{j-1}(z) − 1/(j-1)!)/z
//! with φ_j(0) = 1/j!. Operator arguments are always handled spectrally: every
//! in-scope operator is symmetric-diagonalizable, so φ_j(τA)v is exact up to
//! transform error.
//!
//! Weights b_i(τA) of an s-stage exponential quadrature rule solve
//! (1/(j-1)!) Σ_i b_i(τA) c_i^{j-1} = φ_j(τA), j = 1..s, which makes each b_i
//! a fixed linear combination of φ_1..φ_s. The combination coefficients come
//! from expanding the Lagrange basis polynomials of the nodes; the expansion
//! is accumulated in double-double arithmetic so the order-condition residuals
//! stay below 1e-12 through s = 8.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;

/// Highest φ index supported by the scalar kernel.
pub const MAX_PHI_ORDER: usize = 16;

const FACT: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
    355687428096000.0,
    6402373705728000.0,
    121645100408832000.0,
    2432902008176640000.0,
];

/// φ_j(z) for real z ≤ 0 (also fine for moderate z > 0).
///
/// Series branch for |z| < j+1, recurrence otherwise; the j-dependent
/// switchover keeps the relative error below 5e-14 for every j ≤ 16.
pub fn phi_scalar(j: usize, z: f64) -> f64 {
    assert!(j <= MAX_PHI_ORDER, "phi order {j} exceeds {MAX_PHI_ORDER}");
    if j == 0 {
        return z.exp();
    }
    if z == 0.0 {
        return 1.0 / FACT[j];
    }
    if z.abs() < (j + 1) as f64 {
        phi_series(j, z)
    } else {
        phi_recurrence(j, z)
    }
}

fn phi_series(j: usize, z: f64) -> f64 {
    // Σ_{n≥0} z^n / (n+j)!
    let mut term = 1.0 / FACT[j];
    let mut sum = term;
    for n in 0..200 {
        term *= z / (n + j + 1) as f64;
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum
}

fn phi_recurrence(j: usize, z: f64) -> f64 {
    let mut phi = z.exp();
    for k in 1..=j {
        phi = (phi - 1.0 / FACT[k - 1]) / z;
    }
    phi
}

/// Spectral evaluator for φ_j(τA)v on a diagonalizable operator.
///
/// Immutable after construction; safe to share across workers.
pub struct PhiEvaluator {
    op: Arc<DiscreteOperator>,
    max_order: usize,
}

impl PhiEvaluator {
    /// Evaluator supporting φ_0..φ_8.
    pub fn new(op: Arc<DiscreteOperator>) -> Self {
        Self::with_max_order(op, 8)
    }

    pub fn with_max_order(op: Arc<DiscreteOperator>, max_order: usize) -> Self {
        assert!((4..=MAX_PHI_ORDER).contains(&max_order));
        Self { op, max_order }
    }

    pub fn operator(&self) -> &Arc<DiscreteOperator> {
        &self.op
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// φ_j(τA)v; j = 0 is the semigroup action e^{τA}v.
    pub fn apply(&self, j: usize, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
        assert!(j <= self.max_order, "phi order {j} exceeds evaluator max {}", self.max_order);
        assert!(tau > 0.0, "tau must be positive");
        if v.len() != self.op.dim() {
            return Err(Error::DimensionMismatch { expected: self.op.dim(), got: v.len() });
        }
        self.op.apply_function(|l| phi_scalar(j, tau * l), v)
    }

    /// e^{τA}v.
    pub fn semigroup(&self, tau: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(0, tau, v)
    }
}

/// Free-function form of the φ application.
pub fn phi_apply(j: usize, tau: f64, evaluator: &PhiEvaluator, v: &[f64]) -> Result<Vec<f64>> {
    evaluator.apply(j, tau, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLabel {
    Gauss,
    Radau,
    Lobatto,
    Custom,
}

/// Distinct, strictly increasing quadrature nodes in [0,1].
#[derive(Debug, Clone)]
pub struct NodeSet {
    nodes: Vec<f64>,
    label: NodeLabel,
}

impl NodeSet {
    pub fn custom(nodes: Vec<f64>) -> Result<Self> {
        Self::checked(nodes, NodeLabel::Custom)
    }

    fn checked(nodes: Vec<f64>, label: NodeLabel) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidNodes("empty node set".into()));
        }
        for &c in &nodes {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidNodes(format!("node {c} outside [0,1]")));
            }
        }
        for w in nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidNodes("nodes must be strictly increasing".into()));
            }
        }
        Ok(Self { nodes, label })
    }

    /// Gauss–Legendre nodes on [0,1].
    pub fn gauss(s: usize) -> Result<Self> {
        if s == 0 || s > 8 {
            return Err(Error::TooManyNodes(s));
        }
        let mut xs = legendre_roots(s);
        xs.sort_by(f64::total_cmp);
        Self::checked(xs.iter().map(|x| 0.5 * (x + 1.0)).collect(), NodeLabel::Gauss)
    }

    /// Right Radau nodes on [0,1] (c_s = 1); roots of P_{s-1} − P_s.
    pub fn radau_right(s: usize) -> Result<Self> {
        if s == 0 || s > 8 {
            return Err(Error::TooManyNodes(s));
        }
        let mut xs = if s > 1 {
            scan_roots(|x| legendre(s - 1, x).0 - legendre(s, x).0, s - 1, 1.0 - 1e-9)
        } else {
            Vec::new()
        };
        xs.push(1.0);
        xs.sort_by(f64::total_cmp);
        Self::checked(xs.iter().map(|x| 0.5 * (x + 1.0)).collect(), NodeLabel::Radau)
    }

    /// Lobatto nodes on [0,1] (c_1 = 0, c_s = 1); interior roots of P'_{s-1}.
    pub fn lobatto(s: usize) -> Result<Self> {
        if !(2..=8).contains(&s) {
            return Err(Error::InvalidNodes(format!("lobatto needs 2..=8 stages, got {s}")));
        }
        let mut xs = if s > 2 {
            scan_roots(|x| legendre(s - 1, x).1, s - 2, 1.0 - 1e-9)
        } else {
            Vec::new()
        };
        xs.push(-1.0);
        xs.push(1.0);
        xs.sort_by(f64::total_cmp);
        Self::checked(xs.iter().map(|x| 0.5 * (x + 1.0)).collect(), NodeLabel::Lobatto)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self) -> NodeLabel {
        self.label
    }
}

/// (P_s(x), P'_s(x)) by the three-term recurrence.
fn legendre(s: usize, x: f64) -> (f64, f64) {
    if s == 0 {
        return (1.0, 0.0);
    }
    let mut pm = 1.0;
    let mut p = x;
    for k in 1..s {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * pm) / (k + 1) as f64;
        pm = p;
        p = next;
    }
    let dp = if (x * x - 1.0).abs() < 1e-14 {
        // endpoint derivative: P'_s(±1) = ±^(s+1) s(s+1)/2
        let sign = if x > 0.0 { 1.0 } else { (-1.0f64).powi(s as i32 + 1) };
        sign * (s * (s + 1)) as f64 / 2.0
    } else {
        s as f64 * (x * p - pm) / (x * x - 1.0)
    };
    (p, dp)
}

fn legendre_roots(s: usize) -> Vec<f64> {
    let mut roots = Vec::with_capacity(s);
    for k in 1..=s {
        // Chebyshev-style initial guess, then Newton
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (s as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(s, x);
            let dxn = p / dp;
            x -= dxn;
            if dxn.abs() < 1e-16 {
                break;
            }
        }
        roots.push(x);
    }
    roots
}

/// Find `count` simple roots of `f` in (−1, hi) by sign-change scan + bisection.
fn scan_roots(f: impl Fn(f64) -> f64, count: usize, hi: f64) -> Vec<f64> {
    let samples = 4000;
    let lo = -1.0 + 1e-9;
    let mut roots = Vec::with_capacity(count);
    let mut xa = lo;
    let mut fa = f(xa);
    for i in 1..=samples {
        let xb = lo + (hi - lo) * i as f64 / samples as f64;
        let fb = f(xb);
        if fa == 0.0 {
            roots.push(xa);
        } else if fa * fb < 0.0 {
            let (mut a, mut b, mut va) = (xa, xb, fa);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let vm = f(m);
                if vm == 0.0 || (b - a) < 1e-17 {
                    a = m;
                    b = m;
                    break;
                }
                if va * vm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    va = vm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        xa = xb;
        fa = fb;
    }
    assert_eq!(roots.len(), count, "root scan found {} of {count} roots", roots.len());
    roots
}

// ---------------------------------------------------------------------------
// double-double accumulation for the weight solve
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::quick_two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::quick_two_sum(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    fn mul_f(self, f: f64) -> Dd {
        let p = Dd::two_prod(self.hi, f);
        Dd::quick_two_sum(p.hi, p.lo + self.lo * f)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul_f(-q1));
        let q2 = r.hi / o.hi;
        let r2 = r.add(o.mul_f(-q2));
        let q3 = r2.hi / o.hi;
        Dd::quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Operator-valued weights of an exponential quadrature rule in the φ basis:
/// b_i(τA) = Σ_j β_{i,j} φ_j(τA).
#[derive(Debug, Clone)]
pub struct WeightSet {
    nodes: NodeSet,
    /// beta[i][j] is the coefficient of φ_{j+1} in b_{i+1}.
    beta: Vec<Vec<f64>>,
    /// b_i(0), the classical quadrature weights.
    b0: Vec<f64>,
}

/// Solve the order conditions for the weights of the given nodes.
///
/// Each b_i is the Lagrange basis polynomial ℓ_i pushed through the
/// variation-of-constants integral: b_i(τA) = Σ_m ℓ_{i,m} m! φ_{m+1}(τA),
/// where ℓ_i(t) = Σ_m ℓ_{i,m} t^m. This is the unique solution of the
/// Vandermonde system arising from the order conditions.
pub fn solve_weights(nodes: &NodeSet) -> Result<WeightSet> {
    let c = nodes.nodes();
    let s = c.len();
    if s > 8 {
        return Err(Error::TooManyNodes(s));
    }
    let mut min_sep = f64::INFINITY;
    for i in 0..s {
        for k in 0..i {
            min_sep = min_sep.min((c[i] - c[k]).abs());
        }
    }
    if s > 1 && min_sep < 1e-12 {
        return Err(Error::ConfluentNodes(min_sep));
    }

    let mut beta = Vec::with_capacity(s);
    let mut b0 = Vec::with_capacity(s);
    for i in 0..s {
        // expand Π_{k≠i} (t − c_k) and the denominator Π_{k≠i} (c_i − c_k)
        let mut poly = vec![Dd::ZERO; s];
        poly[0] = Dd::from(1.0);
        let mut deg = 0usize;
        let mut denom = Dd::from(1.0);
        for (k, &ck) in c.iter().enumerate() {
            if k == i {
                continue;
            }
            denom = denom.mul(Dd::two_sum(c[i], -ck));
            deg += 1;
            for m in (0..=deg).rev() {
                let lower = if m > 0 { poly[m - 1] } else { Dd::ZERO };
                poly[m] = lower.add(poly[m].mul_f(-ck));
            }
        }
        let coeffs: Vec<Dd> = poly.iter().map(|p| p.div(denom)).collect();
        beta.push(
            coeffs
                .iter()
                .enumerate()
                .map(|(m, l)| l.mul_f(FACT[m]).to_f64())
                .collect::<Vec<f64>>(),
        );
        // b_i(0) = ∫₀¹ ℓ_i = Σ_m ℓ_{i,m}/(m+1)
        let mut w0 = Dd::ZERO;
        for (m, l) in coeffs.iter().enumerate() {
            w0 = w0.add(l.div(Dd::from((m + 1) as f64)));
        }
        b0.push(w0.to_f64());
    }
    Ok(WeightSet { nodes: nodes.clone(), beta, b0 })
}

impl WeightSet {
    pub fn stages(&self) -> usize {
        self.beta.len()
    }

    pub fn nodes(&self) -> &[f64] {
        self.nodes.nodes()
    }

    pub fn node_set(&self) -> &NodeSet {
        &self.nodes
    }

    /// φ-basis coefficients of b_i (index j ↦ coefficient of φ_{j+1}).
    pub fn beta(&self, i: usize) -> &[f64] {
        &self.beta[i]
    }

    /// b_i(z) on a scalar argument.
    pub fn weight_scalar(&self, i: usize, z: f64) -> f64 {
        self.beta[i]
            .iter()
            .enumerate()
            .map(|(j, &b)| b * phi_scalar(j + 1, z))
            .sum()
    }

    /// Classical quadrature weights b_i(0).
    pub fn weights_at_zero(&self) -> &[f64] {
        &self.b0
    }

    /// Diagnostic ψ_{s+1}(z) = φ_{s+1}(z) − (1/s!) Σ_i b_i(z) c_i^s.
    /// Vanishes at z = 0 exactly when the first weak order condition holds.
    pub fn psi_defect(&self, z: f64) -> f64 {
        let s = self.stages();
        let c = self.nodes.nodes();
        let sum: f64 = (0..s).map(|i| self.weight_scalar(i, z) * c[i].powi(s as i32)).sum();
        phi_scalar(s + 1, z) - sum / FACT[s]
    }
}

/// True iff Σ_i b_i(0) c_i^{s+l} = 1/(s+l+1) holds for 0 ≤ l ≤ m−1 to 1e-12,
/// i.e. the underlying quadrature rule has classical order ≥ s+m.
pub fn check_weak_order(nodes: &NodeSet, m: usize) -> Result<bool> {
    let w = solve_weights(nodes)?;
    let s = w.stages();
    let c = nodes.nodes();
    for l in 0..m {
        let sum: f64 = (0..s).map(|i| w.b0[i] * c[i].powi((s + l) as i32)).sum();
        if (sum - 1.0 / (s + l + 1) as f64).abs() > 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}
