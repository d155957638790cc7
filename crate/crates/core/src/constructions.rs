//! Explicit extremal objects: the prime-phase family that violates the bound
//! for every party count, the once-per-party measurement trees that saturate
//! it, and the 3×3 nine-state product basis.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::operator::{psd_sqrt, CMatrix};
use crate::sep::{ProductOperator, SeparableOperation};
use crate::tree::random::random_state;
use crate::tree::{LoccTree, NodeSpec};
use crate::{Error, HermitianOperator, Result, Tolerances};

/// Least prime strictly greater than `n`.
pub fn smallest_prime_above(n: u64) -> u64 {
    (n + 1..)
        .find(|&k| is_prime(k))
        .expect("primes are unbounded")
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    (2..)
        .take_while(|k| k * k <= n)
        .all(|k| !n.is_multiple_of(k))
}

/// `p_1 = 1`, `p_α = d_1⋯d_{α−1}`.
pub fn positional_multipliers(dims: &[usize]) -> Vec<u64> {
    let mut out = Vec::with_capacity(dims.len());
    let mut p = 1u64;
    for &d in dims {
        out.push(p);
        p *= d as u64;
    }
    out
}

/// Number of pairs of distinct index tuples `m ≠ n` with
/// `Σ p_α m_α = Σ p_α n_α`. Zero for every valid `dims`.
pub fn mixed_radix_collisions(dims: &[usize]) -> usize {
    let p = positional_multipliers(dims);
    let total: usize = dims.iter().product();
    let mut seen = vec![0usize; total];
    let mut collisions = 0;
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        let key: u64 = idx.iter().zip(&p).map(|(&m, &pa)| m as u64 * pa).sum();
        let key = key as usize;
        if key < total {
            collisions += seen[key];
            seen[key] += 1;
        } else {
            // unreachable for mixed radix, counted defensively
            collisions += 1;
        }
        for (a, &d) in dims.iter().enumerate() {
            idx[a] += 1;
            if idx[a] < d {
                break;
            }
            idx[a] = 0;
        }
    }
    collisions
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidParameter("need at least two parties".into()));
    }
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidParameter(
            "party dimensions must be at least 2".into(),
        ));
    }
    Ok(())
}

/// Prime-phase family with the smallest admissible prime.
pub fn appendix_a_sep(dims: &[usize]) -> Result<SeparableOperation> {
    appendix_a_sep_with_prime(dims, None)
}

/// `N` outcomes `(D/N) ⊗_α |ψ_j^(α)⟩⟨ψ_j^(α)|` with
/// `|ψ_j^(α)⟩ = d_α^{-1/2} Σ_m e^{2πi j p_α m / N} |m⟩`, `N` prime and `> D`.
pub fn appendix_a_sep_with_prime(dims: &[usize], prime: Option<u64>) -> Result<SeparableOperation> {
    check_dims(dims)?;
    if dims.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "dims must be sorted ascending".into(),
        ));
    }
    let total: usize = dims.iter().product();
    let n = match prime {
        None => smallest_prime_above(total as u64),
        Some(n) if is_prime(n) && n > total as u64 => n,
        Some(n) => {
            return Err(Error::InvalidParameter(format!(
                "{n} is not a prime exceeding {total}"
            )));
        }
    };
    let p = positional_multipliers(dims);
    let tol = Tolerances::default();
    let weight = total as f64 / n as f64;
    let mut outcomes = Vec::with_capacity(n as usize);
    for j in 1..=n {
        let locals = dims
            .iter()
            .zip(&p)
            .map(|(&d, &pa)| {
                let amp = 1.0 / (d as f64).sqrt();
                let psi: Vec<Complex64> = (1..=d as u64)
                    .map(|m| {
                        // reduce before converting to keep the phase exact
                        let k = (j * pa % n) * m % n;
                        Complex64::from_polar(amp, 2.0 * PI * k as f64 / n as f64)
                    })
                    .collect();
                HermitianOperator::projector(&psi)
            })
            .collect();
        outcomes.push(ProductOperator::new(locals, weight, &tol)?);
    }
    SeparableOperation::new(dims.to_vec(), outcomes, &tol)
}

pub const XI_OVERLAP_BOUNDS: (f64, f64) = (1e-6, 1.0 - 1e-6);
const XI_RETRIES: usize = 1000;

fn projector_matrix(psi: &[Complex64]) -> CMatrix {
    HermitianOperator::projector(psi).into_matrix()
}

/// Haar states with every pairwise overlap inside [`XI_OVERLAP_BOUNDS`].
fn xi_states(d: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<Complex64>>> {
    let (lo, hi) = XI_OVERLAP_BOUNDS;
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        if draws == XI_RETRIES {
            return Err(Error::RetryBudget(XI_RETRIES));
        }
        draws += 1;
        let cand = random_state(d, rng);
        let ok = out.iter().all(|s| {
            let ov = s
                .iter()
                .zip(&cand)
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
                .norm();
            (lo..=hi).contains(&ov)
        });
        if ok {
            out.push(cand);
        }
    }
    Ok(out)
}

/// Depth-`P` tree in which party `α` (0-based) measures
/// `{|ξ⟩⟨ξ|, I − |ξ⟩⟨ξ|}` at every node of level `α`, with a fresh `ξ` per node.
pub fn appendix_d_tree(parties: usize, dims: &[usize], seed: u64) -> Result<LoccTree> {
    check_dims(dims)?;
    if parties != dims.len() {
        return Err(Error::InvalidParameter(format!(
            "{parties} parties but {} dims",
            dims.len()
        )));
    }
    if parties > 16 {
        return Err(Error::InvalidParameter("at most 16 parties".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = dims
        .iter()
        .enumerate()
        .map(|(a, &d)| xi_states(d, 1 << a, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut next = vec![0usize; parties];
    let root = build_level(0, None, dims, &states, &mut next);
    LoccTree::new(dims.to_vec(), root)
}

fn build_level(
    level: usize,
    kraus: Option<CMatrix>,
    dims: &[usize],
    states: &[Vec<Vec<Complex64>>],
    next: &mut [usize],
) -> NodeSpec {
    if level == dims.len() {
        return NodeSpec::leaf(kraus.expect("leaves sit below the root"));
    }
    let xi = projector_matrix(&states[level][next[level]]);
    next[level] += 1;
    let rest = CMatrix::identity(dims[level], dims[level]) - &xi;
    let children = vec![
        build_level(level + 1, Some(xi), dims, states, next),
        build_level(level + 1, Some(rest), dims, states, next),
    ];
    NodeSpec::measure(level, kraus, children)
}

/// Largest admissible omission count, `2^P − P − 1`.
pub fn max_omissions(parties: usize) -> usize {
    (1usize << parties) - parties - 1
}

/// Replaces `k` measurements whose outcomes are both leaves by a leaf.
///
/// Each step takes such a node from the highest-index party that still has at
/// least two measurements, left-most first, so the first `2^{P−1} − 1` steps
/// remove last-party measurements. Every step lowers `N` by one and the
/// extreme-ray total by two.
pub fn appendix_d_omit(tree: &LoccTree, k: usize) -> Result<LoccTree> {
    let parties = tree.party_count();
    if k > max_omissions(parties) {
        return Err(Error::InvalidParameter(format!(
            "omission count {k} exceeds {}",
            max_omissions(parties)
        )));
    }
    let mut spec = tree.root_spec();
    for _ in 0..k {
        let mut counts = vec![0usize; parties];
        count_measurements(&spec, &mut counts);
        let target = (0..parties)
            .rev()
            .find(|&a| counts[a] >= 2 && has_terminal_measurement(&spec, a));
        let Some(a) = target else {
            return Err(Error::InvalidParameter(format!(
                "no removable measurement left after fewer than {k} omissions"
            )));
        };
        omit_first(&mut spec, a);
    }
    LoccTree::new(tree.dims().to_vec(), spec)
}

fn count_measurements(spec: &NodeSpec, counts: &mut [usize]) {
    if let Some(a) = spec.party {
        counts[a] += 1;
    }
    for c in &spec.children {
        count_measurements(c, counts);
    }
}

fn is_terminal_measurement(spec: &NodeSpec, party: usize) -> bool {
    spec.party == Some(party) && spec.children.iter().all(|c| c.party.is_none())
}

fn has_terminal_measurement(spec: &NodeSpec, party: usize) -> bool {
    is_terminal_measurement(spec, party)
        || spec
            .children
            .iter()
            .any(|c| has_terminal_measurement(c, party))
}

fn omit_first(spec: &mut NodeSpec, party: usize) -> bool {
    if spec.kraus.is_some() && is_terminal_measurement(spec, party) {
        spec.party = None;
        spec.children.clear();
        return true;
    }
    spec.children.iter_mut().any(|c| omit_first(c, party))
}

/// The tree of [`appendix_d_tree`] with its left-most last-party measurement
/// `{ξ, I−ξ}` replaced by a two-level gadget producing each outcome twice.
///
/// The gadget measures `{X, I−X}` with `X = ½ξ + t(I−ξ)`, then
/// `{½ξ, t(I−ξ)}` under `X` and `{½ξ, (1−t)(I−ξ)}` under `I−X`, so the
/// extracted operation is unchanged.
pub fn appendix_d_duplicated(parties: usize, dims: &[usize], seed: u64) -> Result<LoccTree> {
    let base = appendix_d_tree(parties, dims, seed)?;
    let mut spec = base.root_spec();
    graft_duplicate(&mut spec, parties - 1, 0.3);
    LoccTree::new(dims.to_vec(), spec)
}

fn graft_duplicate(spec: &mut NodeSpec, party: usize, t: f64) -> bool {
    if is_terminal_measurement(spec, party) {
        let xi = spec.children[0].kraus.clone().expect("child edge");
        let d = xi.nrows();
        let rest = CMatrix::identity(d, d) - &xi;
        let x = xi.scale(0.5) + rest.scale(t);
        let y = CMatrix::identity(d, d) - &x;
        // party has not measured above, so its product so far is `I`
        let kx = psd_sqrt(&x);
        let ky = psd_sqrt(&y);
        let child = |k: &CMatrix, labels: [CMatrix; 2]| {
            let inv = k
                .clone()
                .try_inverse()
                .expect("gadget effects are full rank");
            let leaves = labels
                .iter()
                .map(|l| NodeSpec::leaf(psd_sqrt(&(inv.adjoint() * l * &inv))))
                .collect();
            NodeSpec::measure(party, Some(k.clone()), leaves)
        };
        spec.children = vec![
            child(&kx, [xi.scale(0.5), rest.scale(t)]),
            child(&ky, [xi.scale(0.5), rest.scale(1.0 - t)]),
        ];
        return true;
    }
    spec.children
        .iter_mut()
        .any(|c| graft_duplicate(c, party, t))
}

/// The nine-state orthonormal product basis of `C³ ⊗ C³`, weight 1 each.
pub fn domino_fixture() -> SeparableOperation {
    let s = 1.0 / 2.0_f64.sqrt();
    let basis = |i: usize| {
        let mut v = vec![Complex64::new(0.0, 0.0); 3];
        v[i] = Complex64::new(1.0, 0.0);
        v
    };
    let pm = |a: usize, b: usize, sign: f64| {
        let mut v = vec![Complex64::new(0.0, 0.0); 3];
        v[a] = Complex64::new(s, 0.0);
        v[b] = Complex64::new(sign * s, 0.0);
        v
    };
    let states = vec![
        (basis(1), basis(1)),
        (basis(0), pm(0, 1, 1.0)),
        (basis(0), pm(0, 1, -1.0)),
        (basis(2), pm(1, 2, 1.0)),
        (basis(2), pm(1, 2, -1.0)),
        (pm(1, 2, 1.0), basis(0)),
        (pm(1, 2, -1.0), basis(0)),
        (pm(0, 1, 1.0), basis(2)),
        (pm(0, 1, -1.0), basis(2)),
    ];
    let tol = Tolerances::default();
    let outcomes = states
        .into_iter()
        .map(|(a, b)| {
            ProductOperator::new(
                vec![
                    HermitianOperator::projector(&a),
                    HermitianOperator::projector(&b),
                ],
                1.0,
                &tol,
            )
            .expect("fixture states are normalized")
        })
        .collect();
    SeparableOperation::new(vec![3, 3], outcomes, &tol).expect("fixture outcomes are distinct")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ExtremeRays;
    use crate::tree::{extract_sep, is_canonical, lemma1_scan};

    #[test]
    fn primes() {
        assert_eq!(smallest_prime_above(4), 5);
        assert_eq!(smallest_prime_above(8), 11);
        assert_eq!(smallest_prime_above(32), 37);
        assert_eq!(smallest_prime_above(1), 2);
    }

    #[test]
    fn prime_phase_family_closes() {
        for dims in [vec![2, 2], vec![2, 3], vec![2, 2, 2], vec![3, 3, 3]] {
            let sep = appendix_a_sep(&dims).unwrap();
            assert!(sep.closure_residual() <= 1e-9, "{dims:?}");
        }
        assert_eq!(appendix_a_sep(&[2, 2]).unwrap().len(), 5);
        assert_eq!(appendix_a_sep(&[2, 2, 2]).unwrap().len(), 11);
        let custom = appendix_a_sep_with_prime(&[2, 2], Some(7)).unwrap();
        assert_eq!(custom.len(), 7);
        assert!(custom.closure_residual() <= 1e-9);
    }

    #[test]
    fn prime_phase_family_rejects_bad_input() {
        assert!(appendix_a_sep(&[3, 2]).is_err());
        assert!(appendix_a_sep(&[2]).is_err());
        assert!(appendix_a_sep_with_prime(&[2, 2], Some(4)).is_err());
        assert!(appendix_a_sep_with_prime(&[2, 2], Some(3)).is_err());
    }

    #[test]
    fn mixed_radix_has_no_collisions() {
        assert_eq!(mixed_radix_collisions(&[2, 3, 4]), 0);
        assert_eq!(positional_multipliers(&[2, 3, 4]), vec![1, 2, 6]);
    }

    #[test]
    fn once_per_party_tree_counts() {
        let tol = Tolerances::default();
        for p in 2..=3 {
            let t = appendix_d_tree(p, &vec![2; p], 11).unwrap();
            assert!(is_canonical(&t, &tol));
            assert!(lemma1_scan(&t, &extract_sep(&t, &tol).unwrap(), &tol)
                .unwrap()
                .is_empty());
            let sep = extract_sep(&t, &tol).unwrap();
            assert_eq!(sep.len(), 1 << p);
            let rays = ExtremeRays::from_sep(&sep, tol.cone, tol.psd).unwrap();
            for a in 0..p {
                assert_eq!(rays.party(a).len(), 2 << a);
            }
        }
    }

    #[test]
    fn omissions_keep_saturation() {
        let tol = Tolerances::default();
        let t = appendix_d_tree(3, &[2, 2, 2], 5).unwrap();
        for k in 0..=max_omissions(3) {
            let o = appendix_d_omit(&t, k).unwrap();
            let sep = extract_sep(&o, &tol).unwrap();
            assert_eq!(sep.len(), 8 - k);
            let rays = ExtremeRays::from_sep(&sep, tol.cone, tol.psd).unwrap();
            assert_eq!(rays.total(), 2 * (sep.len() - 1), "k = {k}");
        }
        assert!(appendix_d_omit(&t, 5).is_err());
    }

    #[test]
    fn first_omission_is_last_party() {
        let t = appendix_d_tree(2, &[2, 2], 1).unwrap();
        let o = appendix_d_omit(&t, 1).unwrap();
        assert_eq!(o.len(), t.len() - 2);
        assert_eq!((0..o.len()).filter(|&i| o.party(i) == Some(1)).count(), 1);
    }

    #[test]
    fn duplicated_branch_extracts_same_operation() {
        let tol = Tolerances::default();
        let base = extract_sep(&appendix_d_tree(2, &[2, 2], 3).unwrap(), &tol).unwrap();
        let dup = appendix_d_duplicated(2, &[2, 2], 3).unwrap();
        assert!(is_canonical(&dup, &tol));
        assert_eq!(dup.leaves().len(), 6);
        let sep = extract_sep(&dup, &tol).unwrap();
        assert_eq!(sep.len(), 4);
        for o in base.outcomes() {
            let j = sep.find_outcome(o, tol.cone).unwrap();
            assert!((sep.outcomes()[j].weight() - o.weight()).abs() < 1e-9);
        }
    }

    #[test]
    fn domino_closes() {
        let sep = domino_fixture();
        assert_eq!(sep.len(), 9);
        assert!(sep.closure_residual() <= 1e-9);
    }
}
