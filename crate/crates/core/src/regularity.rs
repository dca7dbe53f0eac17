//! Sobolev index calculators in exact rational arithmetic.

use num_rational::Rational64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentLadder {
    pub n: usize,
    pub p: Vec<Rational64>,
    pub j_max: usize,
    /// `p_{j_max} = n/2` exactly.
    pub borderline: bool,
}

impl ExponentLadder {
    /// Space-separated terms, integers printed without a denominator.
    pub fn render(&self) -> String {
        self.p.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// `p₀ = 2`, `p_{j+1} = n p_j / (n − 2 p_j)` until `p_j ≥ n/2`.
pub fn bootstrap_exponents(n: usize) -> ExponentLadder {
    assert!(n >= 3, "dimension must be at least 3");
    let nr = Rational64::from_integer(n as i64);
    let half = nr / 2;
    let mut p = vec![Rational64::from_integer(2)];
    while *p.last().expect("nonempty") < half {
        let q = *p.last().expect("nonempty");
        p.push(nr * q / (nr - q * 2));
    }
    let j_max = p.len() - 1;
    let borderline = p[j_max] == half;
    ExponentLadder { n, p, j_max, borderline }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplicationFailure {
    SigmaAboveMin,
    NegativeSum,
    SumTooSmall,
}

/// `H^{r1} × H^{r2} → H^σ` conditions: `σ ≤ min(r1, r2)`, `r1 + r2 ≥ 0`, `r1 + r2 > n/2 + σ`.
pub fn check_multiplication(r1: Rational64, r2: Rational64, sigma: Rational64, n: usize) -> Result<(), MultiplicationFailure> {
    let half = Rational64::new(n as i64, 2);
    if sigma > r1.min(r2) {
        Err(MultiplicationFailure::SigmaAboveMin)
    } else if r1 + r2 < Rational64::from_integer(0) {
        Err(MultiplicationFailure::NegativeSum)
    } else if r1 + r2 <= half + sigma {
        Err(MultiplicationFailure::SumTooSmall)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HsGates {
    /// `s > n/2 + 1`.
    pub index: bool,
    /// `n ≤ 12`.
    pub dimension: bool,
}

impl HsGates {
    pub fn feasible(&self) -> bool {
        self.index && self.dimension
    }
}

pub fn hs_feasible(n: usize, s: Rational64) -> HsGates {
    HsGates { index: s > Rational64::new(n as i64, 2) + 1, dimension: n <= 12 }
}
