use proptest::prelude::*;
use qvkit_core::schemes::{
    score, tally, validate_ballot, vscore, BallotProfile, SchemeFamily, SchemeSpec, StakeMode, ValidationOptions,
};
use qvkit_core::stake::{StakeDistribution, StakeEntry};

fn family() -> impl Strategy<Value = SchemeFamily> {
    prop_oneof![
        Just(SchemeFamily::Linear),
        Just(SchemeFamily::Qv1),
        Just(SchemeFamily::Qv2),
        Just(SchemeFamily::Qv3),
        (0.05f64..0.95).prop_map(SchemeFamily::Gpv),
    ]
}

/// Stakes plus, per voter, nonnegative weights that get scaled onto the credit.
fn population(m: usize) -> impl Strategy<Value = Vec<(f64, Vec<f64>)>> {
    prop::collection::vec(
        (0.1f64..1e3, prop::collection::vec(0.0f64..1.0, m)).prop_filter("some weight", |(_, w)| {
            w.iter().sum::<f64>() > 1e-3
        }),
        1..12,
    )
}

fn ballots_for(scheme: &SchemeSpec, pop: &[(f64, Vec<f64>)], offset: usize) -> (Vec<StakeEntry>, Vec<BallotProfile>) {
    let mut entries = Vec::new();
    let mut ballots = Vec::new();
    for (i, (stake, weights)) in pop.iter().enumerate() {
        let id = format!("v{}", i + offset);
        let credit = scheme.credit_fn(*stake);
        let allocations = match scheme.mode() {
            StakeMode::Split => {
                let total: f64 = weights.iter().sum();
                weights.iter().map(|w| w / total * credit).collect()
            }
            StakeMode::Unsplit => weights.iter().map(|&w| if w > 0.5 { credit } else { 0.0 }).collect(),
        };
        entries.push(StakeEntry::new(id.clone(), *stake));
        ballots.push(BallotProfile::new(id, allocations));
    }
    (entries, ballots)
}

proptest! {
    #[test]
    fn identity_vote_function_means_vscore_equals_score(f in family(), m in 1usize..6, seed_pop in population(5)) {
        let scheme = SchemeSpec::of(f).unwrap();
        let pop: Vec<_> = seed_pop.into_iter().map(|(s, w)| (s, w[..m].to_vec())).collect();
        let (_, ballots) = ballots_for(&scheme, &pop, 0);
        let v = vscore(&scheme, &ballots, m).unwrap();
        let sc = score(&ballots, m).unwrap();
        if scheme.vote_exponent() == 1.0 {
            prop_assert_eq!(v, sc);
        }
    }

    #[test]
    fn tally_is_additive_over_disjoint_voters(f in family(), a in population(4), b in population(4)) {
        let scheme = SchemeSpec::of(f).unwrap();
        let opts = ValidationOptions::default();
        let (ea, ba) = ballots_for(&scheme, &a, 0);
        let (eb, bb) = ballots_for(&scheme, &b, a.len());
        let da = StakeDistribution::from_entries(ea.clone()).unwrap();
        let db = StakeDistribution::from_entries(eb.clone()).unwrap();
        let dall = StakeDistribution::from_entries(ea.into_iter().chain(eb).collect()).unwrap();
        let all: Vec<_> = ba.iter().chain(&bb).cloned().collect();
        let ta = tally(&scheme, &da, &ba, 4, opts).unwrap();
        let tb = tally(&scheme, &db, &bb, 4, opts).unwrap();
        let tall = tally(&scheme, &dall, &all, 4, opts).unwrap();
        for r in 0..4 {
            let sum = ta.vscores()[r] + tb.vscores()[r];
            prop_assert!((tall.vscores()[r] - sum).abs() <= 1e-9 * (1.0 + sum.abs()));
        }
    }

    #[test]
    fn concentrated_ballot_is_valid(f in family(), stake in 1e-3f64..1e6, m in 1usize..8) {
        let scheme = SchemeSpec::of(f).unwrap();
        let mut alloc = vec![0.0; m];
        alloc[0] = scheme.credit_fn(stake);
        let ballot = BallotProfile::new("v", alloc);
        prop_assert!(validate_ballot(&scheme, stake, &ballot, m, ValidationOptions::default()).is_ok());
        if f == SchemeFamily::Qv1 {
            let v = vscore(&scheme, &[ballot], m).unwrap();
            prop_assert!((v[0] - stake.sqrt()).abs() <= 1e-12 * stake.sqrt());
        }
    }

    #[test]
    fn unsplit_voter_contributes_count_times_credit(stake in 1e-3f64..1e6, mask in prop::collection::vec(any::<bool>(), 1..8)) {
        let scheme = SchemeSpec::qv3();
        let credit = scheme.credit_fn(stake);
        let alloc: Vec<f64> = mask.iter().map(|&on| if on { credit } else { 0.0 }).collect();
        let dist = StakeDistribution::from_stakes(&[stake]).unwrap();
        let ballot = BallotProfile::new("v0", alloc);
        let t = tally(&scheme, &dist, &[ballot], mask.len(), ValidationOptions::default()).unwrap();
        let count = mask.iter().filter(|&&on| on).count() as f64;
        let mass: f64 = t.vscores().iter().sum();
        prop_assert!((mass - count * credit).abs() <= 1e-12 * (1.0 + count * credit));
    }
}
