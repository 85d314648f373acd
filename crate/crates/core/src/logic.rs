//! Finite Heyting algebras of truth values: downsets of a containment poset
//! of basis balls, ordered by inclusion.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{QrError, Result};
use crate::interval::Interval;
use crate::qr::QrNumber;
use crate::state::{trace_distance, Ball};

const MERGE_TOL: f64 = 1e-12;

/// A finite partial order on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poset {
    // leq[i][j] <=> i <= j
    leq: Vec<Vec<bool>>,
}

impl Poset {
    /// Reflexive-transitive closure of `pairs` (each `(i, j)` meaning
    /// `i <= j`); fails if the closure is not antisymmetric.
    pub fn from_relation(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(QrError::InvalidParameter(format!("pair ({i}, {j}) out of range for {n} elements")));
            }
            leq[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    for j in 0..n {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if leq[i][j] && leq[j][i] {
                    return Err(QrError::InvalidParameter(format!(
                        "relation is not antisymmetric: {i} and {j} are mutually below each other"
                    )));
                }
            }
        }
        Ok(Self { leq })
    }

    /// `0 < 1 < ... < n-1`.
    pub fn chain(n: usize) -> Self {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_relation(n, &pairs).expect("a chain is a poset")
    }

    /// Antichain on `n` elements.
    pub fn discrete(n: usize) -> Self {
        Self::from_relation(n, &[]).expect("an antichain is a poset")
    }

    pub fn len(&self) -> usize {
        self.leq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leq.is_empty()
    }

    pub fn leq(&self, i: usize, j: usize) -> bool {
        self.leq[i][j]
    }

    pub fn is_downset(&self, members: &[bool]) -> bool {
        members.len() == self.len()
            && (0..self.len()).all(|x| !members[x] || (0..self.len()).all(|y| !self.leq[y][x] || members[y]))
    }
}

/// A downset of a shared poset, i.e. an open of its Alexandrov frame.
#[derive(Clone)]
pub struct TruthValue {
    poset: Arc<Poset>,
    members: Vec<bool>,
}

impl TruthValue {
    pub fn new(poset: &Arc<Poset>, indices: &[usize]) -> Result<Self> {
        let mut members = vec![false; poset.len()];
        for &i in indices {
            if i >= poset.len() {
                return Err(QrError::InvalidParameter(format!("index {i} out of range")));
            }
            members[i] = true;
        }
        Self::from_members(poset, members)
    }

    pub fn from_members(poset: &Arc<Poset>, members: Vec<bool>) -> Result<Self> {
        if !poset.is_downset(&members) {
            return Err(QrError::InvalidParameter("set is not downward closed".into()));
        }
        Ok(Self {
            poset: Arc::clone(poset),
            members,
        })
    }

    pub fn full(poset: &Arc<Poset>) -> Self {
        Self {
            poset: Arc::clone(poset),
            members: vec![true; poset.len()],
        }
    }

    pub fn empty(poset: &Arc<Poset>) -> Self {
        Self {
            poset: Arc::clone(poset),
            members: vec![false; poset.len()],
        }
    }

    /// `↓x`
    pub fn principal(poset: &Arc<Poset>, x: usize) -> Self {
        Self {
            poset: Arc::clone(poset),
            members: (0..poset.len()).map(|y| poset.leq(y, x)).collect(),
        }
    }

    /// Largest downset contained in an arbitrary subset.
    pub fn interior(poset: &Arc<Poset>, set: &[bool]) -> Self {
        let n = poset.len();
        Self {
            poset: Arc::clone(poset),
            members: (0..n).map(|x| (0..n).all(|y| !poset.leq(y, x) || set[y])).collect(),
        }
    }

    /// Every downset of a small poset.
    pub fn all(poset: &Arc<Poset>) -> Vec<TruthValue> {
        let n = poset.len();
        assert!(n < 24, "too many elements to enumerate downsets");
        (0u32..1 << n)
            .map(|mask| (0..n).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|m| poset.is_downset(m))
            .map(|members| Self {
                poset: Arc::clone(poset),
                members,
            })
            .collect()
    }

    pub fn poset(&self) -> &Arc<Poset> {
        &self.poset
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i]).collect()
    }

    pub fn is_full(&self) -> bool {
        self.members.iter().all(|&m| m)
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn is_subset_of(&self, other: &TruthValue) -> Result<bool> {
        self.same_poset(other)?;
        Ok(self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b))
    }

    fn same_poset(&self, other: &TruthValue) -> Result<()> {
        if Arc::ptr_eq(&self.poset, &other.poset) || self.poset == other.poset {
            Ok(())
        } else {
            Err(QrError::PosetMismatch)
        }
    }

    fn zip(&self, other: &TruthValue, f: impl Fn(bool, bool) -> bool) -> Result<TruthValue> {
        self.same_poset(other)?;
        Ok(TruthValue {
            poset: Arc::clone(&self.poset),
            members: self.members.iter().zip(&other.members).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

impl PartialEq for TruthValue {
    fn eq(&self, other: &Self) -> bool {
        self.same_poset(other).is_ok() && self.members == other.members
    }
}

impl fmt::Debug for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruthValue{:?}", self.indices())
    }
}

impl Serialize for TruthValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices().serialize(s)
    }
}

pub fn meet(u: &TruthValue, v: &TruthValue) -> Result<TruthValue> {
    u.zip(v, |a, b| a && b)
}

pub fn join(u: &TruthValue, v: &TruthValue) -> Result<TruthValue> {
    u.zip(v, |a, b| a || b)
}

/// `{x : ↓x ∩ U ⊆ V}`
pub fn implies(u: &TruthValue, v: &TruthValue) -> Result<TruthValue> {
    u.same_poset(v)?;
    let p = &u.poset;
    let n = p.len();
    let members = (0..n)
        .map(|x| (0..n).all(|y| !p.leq(y, x) || !u.members[y] || v.members[y]))
        .collect();
    Ok(TruthValue {
        poset: Arc::clone(p),
        members,
    })
}

pub fn neg(u: &TruthValue) -> TruthValue {
    implies(u, &TruthValue::empty(&u.poset)).expect("same poset")
}

/// Basis balls ordered by the sufficient containment criterion
/// `d(c_i, c_j) + r_i <= r_j`.
#[derive(Clone, Debug)]
pub struct BasisPoset {
    balls: Vec<Ball>,
    poset: Arc<Poset>,
}

impl BasisPoset {
    /// Builds the order, merging balls that agree up to rounding.
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        if let Some(first) = balls.first() {
            for b in &balls {
                crate::operator::check_dims(first.center.dim(), b.center.dim())?;
            }
        }
        let mut kept: Vec<Ball> = Vec::new();
        'outer: for b in balls {
            for k in &kept {
                if (k.radius - b.radius).abs() <= MERGE_TOL && trace_distance(&k.center, &b.center)? <= MERGE_TOL {
                    continue 'outer;
                }
            }
            kept.push(b);
        }
        let n = kept.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && kept[i].is_inside(&kept[j])? {
                    pairs.push((i, j));
                }
            }
        }
        let poset = Arc::new(Poset::from_relation(n, &pairs)?);
        Ok(Self { balls: kept, poset })
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn poset(&self) -> &Arc<Poset> {
        &self.poset
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn full(&self) -> TruthValue {
        TruthValue::full(&self.poset)
    }

    pub fn empty(&self) -> TruthValue {
        TruthValue::empty(&self.poset)
    }
}

/// Poset file: `{"balls": [...], "order": "auto"}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosetFile {
    pub balls: Vec<Ball>,
    #[serde(default)]
    pub order: OrderSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSpec {
    #[default]
    Auto,
}

impl PosetFile {
    pub fn build(self) -> Result<BasisPoset> {
        let balls = self
            .balls
            .into_iter()
            .map(|b| Ball::new(b.center, b.radius))
            .collect::<Result<Vec<_>>>()?;
        BasisPoset::new(balls)
    }
}

/// The extent to which "the value of `a` lies in `interval`" holds: the
/// largest downset of basis balls on each of which the outer enclosure of
/// `a` lies inside `interval`.
pub fn locate_proposition(a: &QrNumber, interval: &Interval, basis: &BasisPoset) -> Result<TruthValue> {
    let mut certified = Vec::with_capacity(basis.len());
    for b in basis.balls() {
        crate::operator::check_dims(a.dim(), b.center.dim())?;
        certified.push(a.expr().enclose(b)?.is_subset_of(interval));
    }
    Ok(TruthValue::interior(basis.poset(), &certified))
}

/// Abstract poset file: `{"elements": n, "leq": [[i, j], ...]}`, closed
/// reflexively and transitively.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractPosetFile {
    pub elements: usize,
    #[serde(default)]
    pub leq: Vec<[usize; 2]>,
}

impl AbstractPosetFile {
    pub fn build(&self) -> Result<Poset> {
        let pairs: Vec<(usize, usize)> = self.leq.iter().map(|p| (p[0], p[1])).collect();
        Poset::from_relation(self.elements, &pairs)
    }
}

/// First `U` (in enumeration order) with `U ∨ ¬U` not the top element.
pub fn lem_counterexample(poset: &Arc<Poset>) -> Option<TruthValue> {
    TruthValue::all(poset).into_iter().find(|u| !join(u, &neg(u)).expect("same poset").is_full())
}

/// First `U` with `¬¬U != U`.
pub fn double_negation_counterexample(poset: &Arc<Poset>) -> Option<TruthValue> {
    TruthValue::all(poset).into_iter().find(|u| neg(&neg(u)) != *u)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LawReport {
    pub truth_values: usize,
    pub triples: usize,
    pub adjunction_failures: usize,
    pub distributivity_failures: usize,
    pub non_contradiction_failures: usize,
}

impl LawReport {
    pub fn holds(&self) -> bool {
        self.adjunction_failures + self.distributivity_failures + self.non_contradiction_failures == 0
    }
}

/// Checks `W ∧ U ≤ V ⟺ W ≤ (U ⇒ V)`, `U ∧ (V ∨ W) = (U ∧ V) ∨ (U ∧ W)` and
/// `U ∧ ¬U = ∅` over every downset triple.
pub fn check_laws(poset: &Arc<Poset>) -> LawReport {
    let all = TruthValue::all(poset);
    let mut r = LawReport {
        truth_values: all.len(),
        ..LawReport::default()
    };
    for u in &all {
        if !meet(u, &neg(u)).expect("same poset").is_empty() {
            r.non_contradiction_failures += 1;
        }
        for v in &all {
            let imp = implies(u, v).expect("same poset");
            for w in &all {
                r.triples += 1;
                let lhs = meet(w, u).and_then(|m| m.is_subset_of(v)).expect("same poset");
                if lhs != w.is_subset_of(&imp).expect("same poset") {
                    r.adjunction_failures += 1;
                }
                let left = meet(u, &join(v, w).expect("same poset")).expect("same poset");
                let right = join(&meet(u, v).expect("same poset"), &meet(u, w).expect("same poset")).expect("same poset");
                if left != right {
                    r.distributivity_failures += 1;
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::HermitianOperator;
    use crate::state::{Condition, DensityState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain3() -> Arc<Poset> {
        Arc::new(Poset::chain(3))
    }

    // Every naturally labelled poset (i <= j only if i <= j as integers) on n
    // elements, up to equality.
    fn naturally_labelled(n: usize) -> Vec<Arc<Poset>> {
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
        let mut out: Vec<Poset> = Vec::new();
        for mask in 0u32..1 << slots.len() {
            let pairs: Vec<_> = (0..slots.len()).filter(|&k| mask >> k & 1 == 1).map(|k| slots[k]).collect();
            let p = Poset::from_relation(n, &pairs).unwrap();
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out.into_iter().map(Arc::new).collect()
    }

    #[test]
    fn chain_examples() {
        let p = chain3();
        let u = TruthValue::new(&p, &[0, 1]).unwrap();
        let v = TruthValue::new(&p, &[0]).unwrap();
        let full = TruthValue::full(&p);
        let empty = TruthValue::empty(&p);
        assert_eq!(meet(&u, &full).unwrap(), u);
        assert_eq!(meet(&u, &empty).unwrap(), empty);
        assert_eq!(meet(&u, &v).unwrap(), v);
        assert_eq!(join(&u, &empty).unwrap(), u);
        assert_eq!(join(&u, &u).unwrap(), u);
        assert_eq!(implies(&empty, &v).unwrap(), full);
        assert_eq!(implies(&u, &u).unwrap(), full);
        assert_eq!(implies(&v, &empty).unwrap(), empty);
        assert_eq!(neg(&full), empty);
        assert_eq!(neg(&empty), full);
    }

    #[test]
    fn excluded_middle_and_double_negation_fail() {
        let p = chain3();
        assert_eq!(lem_counterexample(&p).unwrap().indices(), vec![0]);
        assert!(lem_counterexample(&Arc::new(Poset::discrete(3))).is_none());
        assert!(double_negation_counterexample(&p).is_some());
        let r = super::check_laws(&p);
        assert!(r.holds() && r.triples == 64 && r.truth_values == 4);
        let u = TruthValue::new(&p, &[0]).unwrap();
        assert!(neg(&u).is_empty());
        let lem = join(&u, &neg(&u)).unwrap();
        assert_eq!(lem.indices(), vec![0]);
        assert!(!lem.is_full());
        let nn = neg(&neg(&u));
        assert!(nn.is_full());
        assert!(u.is_subset_of(&nn).unwrap() && nn != u);
    }

    #[test]
    fn rejects_non_downsets_and_mismatch() {
        let p = chain3();
        assert!(TruthValue::new(&p, &[1]).is_err());
        let q = Arc::new(Poset::discrete(3));
        let a = TruthValue::full(&p);
        let b = TruthValue::full(&q);
        assert!(matches!(meet(&a, &b), Err(QrError::PosetMismatch)));
        assert!(Poset::from_relation(2, &[(0, 1), (1, 0)]).is_err());
    }

    fn check_laws(p: &Arc<Poset>, all: &[TruthValue]) {
        let full = TruthValue::full(p);
        let empty = TruthValue::empty(p);
        for u in all {
            assert!(meet(u, &neg(u)).unwrap().is_empty());
            assert!(u.is_subset_of(&neg(&neg(u))).unwrap());
            assert_eq!(meet(u, &full).unwrap(), *u);
            assert_eq!(join(u, &empty).unwrap(), *u);
            for v in all {
                let imp = implies(u, v).unwrap();
                assert!(p.is_downset(&imp.members));
                for w in all {
                    let lhs = meet(w, u).unwrap().is_subset_of(v).unwrap();
                    let rhs = w.is_subset_of(&imp).unwrap();
                    assert_eq!(lhs, rhs, "adjunction fails for W={w:?} U={u:?} V={v:?}");
                    assert_eq!(
                        meet(u, &join(v, w).unwrap()).unwrap(),
                        join(&meet(u, v).unwrap(), &meet(u, w).unwrap()).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn heyting_laws_exhaustive_small_posets() {
        let mut count = 0;
        for n in 0..=5 {
            for p in naturally_labelled(n) {
                let all = TruthValue::all(&p);
                check_laws(&p, &all);
                // double negation is strict somewhere once a non-minimal
                // element sits above a minimal one
                let has_cover = (0..n).any(|x| (0..n).any(|y| x != y && p.leq(y, x)));
                if has_cover {
                    assert!(all.iter().any(|u| neg(&neg(u)) != *u));
                }
                count += 1;
            }
        }
        assert!(count > 100);
    }

    #[test]
    fn heyting_laws_random_posets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let n = rng.random_range(6..=12);
            let mut pairs = Vec::new();
            for j in 0..n {
                for i in 0..j {
                    if rng.random_bool(0.2) {
                        pairs.push((i, j));
                    }
                }
            }
            let p = Arc::new(Poset::from_relation(n, &pairs).unwrap());
            let sets: Vec<TruthValue> = (0..12)
                .map(|_| {
                    let raw: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
                    TruthValue::interior(&p, &raw)
                })
                .collect();
            check_laws(&p, &sets);
        }
    }

    #[test]
    fn basis_poset_order_and_merge() {
        let c = DensityState::maximally_mixed(2);
        let balls = vec![
            Ball::new(c.clone(), 0.1).unwrap(),
            Ball::new(c.clone(), 0.2).unwrap(),
            Ball::new(c.clone(), 0.2).unwrap(),
            Ball::new(DensityState::basis(2, 0), 0.05).unwrap(),
        ];
        let b = BasisPoset::new(balls).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.poset().leq(0, 1));
        assert!(!b.poset().leq(1, 0));
        assert!(!b.poset().leq(2, 1) && !b.poset().leq(1, 2));
    }

    #[test]
    fn locate_examples() {
        let basis = BasisPoset::new(vec![
            Ball::new(DensityState::basis(2, 0), 0.05).unwrap(),
            Ball::new(DensityState::maximally_mixed(2), 0.05).unwrap(),
            Ball::new(DensityState::basis(2, 0), 0.02).unwrap(),
        ])
        .unwrap();
        let w = Condition::ball(DensityState::maximally_mixed(2), 2.5).unwrap();
        let id = QrNumber::linear(HermitianOperator::identity(2), w.clone()).unwrap();
        assert!(locate_proposition(&id, &Interval::new(0.5, 1.5).unwrap(), &basis).unwrap().is_full());
        let z = QrNumber::linear(HermitianOperator::pauli_z(), w).unwrap();
        let t = locate_proposition(&z, &Interval::new(0.8, 1.2).unwrap(), &basis).unwrap();
        assert!(t.contains(0) && t.contains(2) && !t.contains(1));
        assert!(locate_proposition(&z, &Interval::new(5.0, 6.0).unwrap(), &basis).unwrap().is_empty());
    }

    #[test]
    fn poset_file_json() {
        let json = serde_json::json!({
            "balls": [
                {"center": {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}, "radius": 0.1},
                {"center": {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}, "radius": 0.3}
            ],
            "order": "auto"
        });
        let file: PosetFile = serde_json::from_value(json).unwrap();
        let b = file.build().unwrap();
        assert!(b.poset().leq(0, 1));
        let t = TruthValue::principal(b.poset(), 1);
        assert_eq!(serde_json::to_string(&t).unwrap(), "[0,1]");
        let bad = serde_json::json!({"balls": [], "order": "manual"});
        assert!(serde_json::from_value::<PosetFile>(bad).is_err());
    }
}
