//! Polynomial interaction densities and the θ-splitting decision.
//!
//! A potential is a finite sum of monomials in site values plus a constant.
//! `F` is θ-splitting when `F(T) = G(π₊T) + G(π₊θT)` for some `G` of the
//! positive-half values. For polynomials this holds iff no monomial touches
//! both halves and the negative-half part is the mirror image of the
//! positive-half part; the constant is shared evenly between the two copies
//! of `G`.
//!
//! Site indices in a [`Potential`] are full-lattice indices, except for the
//! splitting witness, which is indexed by position in the positive half (so
//! it evaluates directly on a [`crate::HalfVector`]).

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// `coefficient · ∏ φ_site^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    /// `(site, power)`, sorted by site, sites distinct, powers positive.
    pub factors: Vec<(usize, u32)>,
}

impl Term {
    pub fn new(coefficient: f64, factors: Vec<(usize, u32)>) -> Self {
        Self {
            coefficient,
            factors,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.factors.iter().map(|&(s, _)| s)
    }

    pub fn eval(&self, config: &[f64]) -> f64 {
        self.factors
            .iter()
            .fold(self.coefficient, |acc, &(s, p)| acc * config[s].powi(p as i32))
    }
}

/// Canonical sum of monomials plus a constant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Potential {
    terms: Vec<Term>,
    constant: f64,
}

fn normalize_factors(factors: &[(usize, u32)]) -> Vec<(usize, u32)> {
    let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
    for &(site, power) in factors {
        *merged.entry(site).or_default() += power;
    }
    merged.into_iter().filter(|&(_, p)| p > 0).collect()
}

impl Potential {
    /// Builds a canonical potential from arbitrary terms.
    pub fn new(terms: Vec<Term>, constant: f64) -> Self {
        let mut merged: BTreeMap<Vec<(usize, u32)>, f64> = BTreeMap::new();
        let mut constant = constant;
        for term in terms {
            let factors = normalize_factors(&term.factors);
            if factors.is_empty() {
                constant += term.coefficient;
            } else {
                *merged.entry(factors).or_insert(0.0) += term.coefficient;
            }
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(factors, coefficient)| Term {
                coefficient,
                factors,
            })
            .collect();
        Self { terms, constant }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant_only(constant: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant,
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }

    /// Merges like terms, drops zero coefficients, sorts. Idempotent.
    pub fn canonicalize(&self) -> Self {
        Self::new(self.terms.clone(), self.constant)
    }

    /// Largest site index used, if any.
    pub fn max_site(&self) -> Option<usize> {
        self.terms.iter().flat_map(Term::sites).max()
    }

    /// `Σ coeff · ∏ config[site]^power + constant`.
    pub fn eval(&self, config: &[f64]) -> Result<f64> {
        if let Some(site) = self.max_site() {
            if site >= config.len() {
                return Err(Error::SiteOutOfRange {
                    site,
                    site_count: config.len(),
                });
            }
        }
        Ok(self.eval_unchecked(config))
    }

    /// [`Potential::eval`] without the range check; panics on a short config.
    pub fn eval_unchecked(&self, config: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(config)).sum::<f64>() + self.constant
    }

    /// Relabels every site through `f` and re-canonicalizes.
    pub fn map_sites(&self, f: impl Fn(usize) -> usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coefficient: t.coefficient,
                factors: t.factors.iter().map(|&(s, p)| (f(s), p)).collect(),
            })
            .collect();
        Self::new(terms, self.constant)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term::new(t.coefficient * factor, t.factors.clone()))
            .collect();
        Self::new(terms, self.constant * factor)
    }

    fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }
}

impl Add for &Potential {
    type Output = Potential;
    fn add(self, rhs: &Potential) -> Potential {
        let terms = self.terms.iter().chain(&rhs.terms).cloned().collect();
        Potential::new(terms, self.constant + rhs.constant)
    }
}

impl Neg for &Potential {
    type Output = Potential;
    fn neg(self) -> Potential {
        self.scale(-1.0)
    }
}

impl Sub for &Potential {
    type Output = Potential;
    fn sub(self, rhs: &Potential) -> Potential {
        self + &(-rhs)
    }
}

/// Free-function form of [`Potential::canonicalize`].
pub fn canonicalize(p: &Potential) -> Potential {
    p.canonicalize()
}

pub fn eval_potential(p: &Potential, config: &[f64]) -> Result<f64> {
    p.eval(config)
}

/// `p ∘ θ`: every site is replaced by its reflection.
pub fn reflect_potential(lattice: &Lattice, p: &Potential) -> Potential {
    p.map_sites(|s| lattice.theta(s))
}

/// Lifts a half-indexed potential to full-lattice indices on the positive
/// half.
pub fn lift_half(lattice: &Lattice, g: &Potential) -> Potential {
    g.map_sites(|h| lattice.plus_site(h))
}

/// `-λ Σ_x φ_x⁴` over every site.
pub fn phi4(lattice: &Lattice, lambda: f64) -> Result<Potential> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "coupling must be positive and finite, got {lambda}"
        )));
    }
    let terms = (0..lattice.site_count())
        .map(|x| Term::new(-lambda, vec![(x, 4)]))
        .collect();
    Ok(Potential::new(terms, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationReason {
    /// The monomial involves sites on both sides of the reflection plane.
    MixedSupport,
    /// The monomial has no mirror image with the same coefficient.
    UnmatchedMirror,
    /// The candidate witness failed to reproduce `F` exactly.
    WitnessMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub term: Term,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub is_splitting: bool,
    /// Half-indexed `G` with `F = G∘π₊ + G∘π₊∘θ`, present iff splitting.
    pub witness_g: Option<Potential>,
    pub violations: Vec<Violation>,
}

/// Decides whether `f` is θ-splitting and extracts the witness `G`.
pub fn split_check(lattice: &Lattice, f: &Potential) -> SplitResult {
    let f = f.canonicalize();
    let mut violations = Vec::new();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for term in f.terms() {
        let positive = term.sites().filter(|&s| lattice.is_positive(s)).count();
        if positive == term.factors.len() {
            plus.push(term.clone());
        } else if positive == 0 {
            minus.push(term.clone());
        } else {
            violations.push(Violation {
                term: term.clone(),
                reason: ViolationReason::MixedSupport,
            });
        }
    }
    let f_plus = Potential::new(plus, 0.0);
    let f_minus = Potential::new(minus, 0.0);
    let mirror = reflect_potential(lattice, &f_minus);
    let residual = &f_plus - &mirror;
    for term in residual.terms() {
        if let Some(t) = f_plus.terms().iter().find(|t| t.factors == term.factors) {
            violations.push(Violation {
                term: t.clone(),
                reason: ViolationReason::UnmatchedMirror,
            });
        }
        let mirrored: Vec<_> = term.factors.iter().map(|&(s, p)| (lattice.theta(s), p)).collect();
        let mirrored = normalize_factors(&mirrored);
        if let Some(t) = f_minus.terms().iter().find(|t| t.factors == mirrored) {
            violations.push(Violation {
                term: t.clone(),
                reason: ViolationReason::UnmatchedMirror,
            });
        }
    }
    if !violations.is_empty() {
        return SplitResult {
            is_splitting: false,
            witness_g: None,
            violations,
        };
    }

    let half = lattice.half_count();
    let g = f_plus
        .map_sites(|s| s - half)
        .with_constant(f.constant() / 2.0);
    let lifted = lift_half(lattice, &g);
    let rebuilt = &lifted + &reflect_potential(lattice, &lifted);
    if rebuilt != f {
        return SplitResult {
            is_splitting: false,
            witness_g: None,
            violations: vec![Violation {
                term: Term::new(f.constant(), Vec::new()),
                reason: ViolationReason::WitnessMismatch,
            }],
        };
    }
    SplitResult {
        is_splitting: true,
        witness_g: Some(g),
        violations,
    }
}

/// One factor of a serialized term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    /// Site coordinate `[t, x_1, .., x_d]`.
    pub site: Vec<i64>,
    pub power: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coefficient: f64,
    pub factors: Vec<FactorSpec>,
}

/// Serialized potential with sites named by lattice coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub constant: f64,
}

impl PotentialSpec {
    /// Resolves coordinates to full-lattice indices.
    pub fn resolve(&self, lattice: &Lattice) -> Result<Potential> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let factors = t
                .factors
                .iter()
                .map(|f| Ok((lattice.index_of(&f.site)?, f.power)))
                .collect::<Result<Vec<_>>>()?;
            terms.push(Term::new(t.coefficient, factors));
        }
        Ok(Potential::new(terms, self.constant))
    }

    /// Serializes a full-lattice potential.
    pub fn from_potential(lattice: &Lattice, p: &Potential) -> Self {
        Self::with_sites(p, |s| lattice.coordinate(s))
    }

    /// Serializes a half-indexed potential (such as a witness `G`) using the
    /// coordinates of the positive-time sites.
    pub fn from_half_potential(lattice: &Lattice, g: &Potential) -> Self {
        Self::with_sites(g, |h| lattice.coordinate(lattice.plus_site(h)))
    }

    fn with_sites(p: &Potential, coord: impl Fn(usize) -> Vec<i64>) -> Self {
        Self {
            terms: p.terms().iter().map(|t| TermSpec::with_sites(t, &coord)).collect(),
            constant: p.constant(),
        }
    }
}

impl TermSpec {
    /// Serializes a full-lattice term.
    pub fn from_term(lattice: &Lattice, term: &Term) -> Self {
        Self::with_sites(term, &|s| lattice.coordinate(s))
    }

    fn with_sites(term: &Term, coord: &impl Fn(usize) -> Vec<i64>) -> Self {
        Self {
            coefficient: term.coefficient,
            factors: term
                .factors
                .iter()
                .map(|&(s, power)| FactorSpec {
                    site: coord(s),
                    power,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_sites() -> Lattice {
        Lattice::new(1, &[]).unwrap()
    }

    #[test]
    fn canonicalize_merges_commuted_terms() {
        let p = Potential::new(
            vec![Term::new(2.0, vec![(0, 1), (1, 1)]), Term::new(3.0, vec![(1, 1), (0, 1)])],
            0.0,
        );
        assert_eq!(p.terms(), &[Term::new(5.0, vec![(0, 1), (1, 1)])]);
    }

    #[test]
    fn canonicalize_cancels() {
        let p = Potential::new(vec![Term::new(1.0, vec![(0, 2)]), Term::new(-1.0, vec![(0, 2)])], 0.0);
        assert!(p.is_zero());
    }

    #[test]
    fn canonicalize_folds_repeated_sites_and_constants() {
        let p = Potential::new(
            vec![
                Term::new(1.5, vec![(3, 1), (3, 2)]),
                Term::new(2.0, vec![]),
                Term::new(1.0, vec![(2, 0)]),
            ],
            0.5,
        );
        assert_eq!(p.terms(), &[Term::new(1.5, vec![(3, 3)])]);
        assert_eq!(p.constant(), 3.5);
    }

    #[test]
    fn eval_examples() {
        let lat = two_sites();
        let f = phi4(&lat, 0.1).unwrap();
        assert_abs_diff_eq!(f.eval(&[1.0, 2.0]).unwrap(), -1.7, epsilon = 1e-15);
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(Potential::zero().eval(&[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(Potential::constant_only(2.5).eval(&[3.0, 4.0]).unwrap(), 2.5);
        assert!(matches!(
            f.eval(&[1.0]),
            Err(Error::SiteOutOfRange { site: 1, site_count: 1 })
        ));
    }

    #[test]
    fn phi4_terms() {
        let lat = two_sites();
        let f = phi4(&lat, 1.0).unwrap();
        assert_eq!(
            f.terms(),
            &[Term::new(-1.0, vec![(0, 4)]), Term::new(-1.0, vec![(1, 4)])]
        );
        assert!(phi4(&lat, 0.0).is_err());
        assert!(phi4(&lat, -2.0).is_err());
    }

    #[test]
    fn reflect_examples() {
        let lat = two_sites();
        let p = Potential::new(vec![Term::new(1.0, vec![(0, 1)])], 0.0);
        assert_eq!(
            reflect_potential(&lat, &p),
            Potential::new(vec![Term::new(1.0, vec![(1, 1)])], 0.0)
        );
        let lat = Lattice::new(2, &[3]).unwrap();
        let f = phi4(&lat, 0.3).unwrap();
        assert_eq!(reflect_potential(&lat, &f), f);
    }

    #[test]
    fn phi4_splits_with_half_witness() {
        let lat = Lattice::new(2, &[4]).unwrap();
        let lambda = 0.1;
        let r = split_check(&lat, &phi4(&lat, lambda).unwrap());
        assert!(r.is_splitting);
        assert!(r.violations.is_empty());
        let g = r.witness_g.unwrap();
        let expected: Vec<_> = (0..lat.half_count()).map(|h| Term::new(-lambda, vec![(h, 4)])).collect();
        assert_eq!(g.terms(), &expected[..]);
        assert_eq!(g.constant(), 0.0);
    }

    #[test]
    fn cross_plane_coupling_is_mixed() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let a = lat.index_of(&[-1, 0]).unwrap();
        let b = lat.index_of(&[1, 0]).unwrap();
        let f = Potential::new(vec![Term::new(0.7, vec![(a, 1), (b, 1)])], 0.0);
        let r = split_check(&lat, &f);
        assert!(!r.is_splitting);
        assert!(r.witness_g.is_none());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].reason, ViolationReason::MixedSupport);
    }

    #[test]
    fn plus_only_quartic_is_unmatched() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let terms = (lat.half_count()..lat.site_count())
            .map(|x| Term::new(-0.1, vec![(x, 4)]))
            .collect();
        let r = split_check(&lat, &Potential::new(terms, 0.0));
        assert!(!r.is_splitting);
        assert_eq!(r.violations.len(), lat.half_count());
        assert!(r.violations.iter().all(|v| v.reason == ViolationReason::UnmatchedMirror));
    }

    #[test]
    fn constant_is_shared_between_halves() {
        let lat = two_sites();
        let f = Potential::new(
            vec![Term::new(1.0, vec![(0, 2)]), Term::new(1.0, vec![(1, 2)])],
            3.0,
        );
        let r = split_check(&lat, &f);
        assert!(r.is_splitting);
        assert_eq!(r.witness_g.unwrap().constant(), 1.5);
        let r = split_check(&lat, &Potential::constant_only(-1.0));
        assert!(r.is_splitting);
        assert_eq!(r.witness_g.unwrap(), Potential::constant_only(-0.5));
    }

    #[test]
    fn coefficient_mismatch_reports_both_sides() {
        let lat = two_sites();
        let f = Potential::new(vec![Term::new(1.0, vec![(0, 2)]), Term::new(2.0, vec![(1, 2)])], 0.0);
        let r = split_check(&lat, &f);
        assert!(!r.is_splitting);
        assert_eq!(r.violations.len(), 2);
    }

    #[test]
    fn spec_round_trip() {
        let lat = Lattice::new(2, &[3]).unwrap();
        let f = phi4(&lat, 0.25).unwrap();
        let spec = PotentialSpec::from_potential(&lat, &f);
        assert_eq!(spec.terms[0].factors[0].site, vec![-2, 0]);
        assert_eq!(spec.resolve(&lat).unwrap(), f);

        let g = split_check(&lat, &f).witness_g.unwrap();
        let spec = PotentialSpec::from_half_potential(&lat, &g);
        assert!(spec.terms.iter().all(|t| t.factors[0].site[0] >= 1));
        assert_eq!(lift_half(&lat, &g), spec.resolve(&lat).unwrap());

        let bad = PotentialSpec {
            terms: vec![TermSpec {
                coefficient: 1.0,
                factors: vec![FactorSpec { site: vec![0, 0], power: 1 }],
            }],
            constant: 0.0,
        };
        assert!(bad.resolve(&lat).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"terms":[{"coefficient":-0.1,"factors":[{"site":[1],"power":4}]}],"constant":2}"#;
        let spec: PotentialSpec = serde_json::from_str(json).unwrap();
        let p = spec.resolve(&two_sites()).unwrap();
        assert_eq!(p.terms(), &[Term::new(-0.1, vec![(1, 4)])]);
        assert_eq!(p.constant(), 2.0);
    }

    // Random potentials on a 2x2 lattice (8 sites) with dyadic coefficients,
    // so sums of like terms are exact regardless of order.
    fn potential_strategy(sites: usize) -> impl Strategy<Value = Potential> {
        let term = (
            -8i32..=8,
            prop::collection::vec((0..sites, 0u32..4), 0..4),
        )
            .prop_map(|(c, factors)| Term::new(c as f64 / 4.0, factors));
        (prop::collection::vec(term, 0..8), -4i32..=4)
            .prop_map(|(terms, c)| Potential::new(terms, c as f64 / 2.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn canonicalize_is_idempotent(p in potential_strategy(8)) {
            prop_assert_eq!(p.canonicalize(), p.canonicalize().canonicalize());
        }

        #[test]
        fn reflect_is_involution(p in potential_strategy(8)) {
            let lat = Lattice::new(2, &[2]).unwrap();
            prop_assert_eq!(reflect_potential(&lat, &reflect_potential(&lat, &p)), p);
        }
    }

    proptest! {
        #[test]
        fn reflect_commutes_with_eval(
            p in potential_strategy(8),
            config in prop::collection::vec(-2.0f64..2.0, 8),
        ) {
            let lat = Lattice::new(2, &[2]).unwrap();
            let lhs = reflect_potential(&lat, &p).eval(&config).unwrap();
            let rhs = p.eval(&lat.reflect(&config).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn symmetrized_plus_potential_splits(p in potential_strategy(4)) {
            let lat = Lattice::new(2, &[2]).unwrap();
            let plus = lift_half(&lat, &p);
            let f = &plus + &reflect_potential(&lat, &plus);
            let r = split_check(&lat, &f);
            prop_assert!(r.is_splitting);
            let r2 = split_check(&lat, &reflect_potential(&lat, &f));
            prop_assert!(r2.is_splitting);
        }

        #[test]
        fn witness_reproduces_f_exactly(
            p in potential_strategy(4),
            configs in prop::collection::vec(prop::collection::vec(-3i32..=3, 8), 100),
        ) {
            // Integer configs and dyadic coefficients keep every evaluation exact.
            let lat = Lattice::new(2, &[2]).unwrap();
            let plus = lift_half(&lat, &p);
            let f = &plus + &reflect_potential(&lat, &plus);
            let g = split_check(&lat, &f).witness_g.unwrap();
            for c in configs {
                let t: Vec<f64> = c.into_iter().map(f64::from).collect();
                let lhs = f.eval(&t).unwrap();
                let rhs = g.eval(&lat.restrict_plus(&t).unwrap()).unwrap()
                    + g.eval(&lat.restrict_plus(&lat.reflect(&t).unwrap()).unwrap()).unwrap();
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn split_check_ignores_term_order(p in potential_strategy(8), seed in any::<u64>()) {
            let lat = Lattice::new(2, &[2]).unwrap();
            let mut terms = p.terms().to_vec();
            let k = terms.len().max(1);
            terms.rotate_left((seed as usize) % k);
            terms.reverse();
            let shuffled = Potential::new(terms, p.constant());
            prop_assert_eq!(split_check(&lat, &p), split_check(&lat, &shuffled));
        }

        #[test]
        fn reflection_preserves_splitting(p in potential_strategy(8)) {
            let lat = Lattice::new(2, &[2]).unwrap();
            let a = split_check(&lat, &p).is_splitting;
            let b = split_check(&lat, &reflect_potential(&lat, &p)).is_splitting;
            prop_assert_eq!(a, b);
        }
    }
}
