use std::sync::Arc;

use proptest::prelude::*;

use tune_landscape::constraint;
use tune_landscape::space::{Parameter, ParameterSpace, SpaceRef};

fn arb_space() -> impl Strategy<Value = SpaceRef> {
    // 1-4 parameters, each with 1-6 distinct ascending values.
    prop::collection::vec(
        prop::collection::btree_set(-50i64..50, 1..=6),
        1..=4,
    )
    .prop_map(|domains| {
        let parameters = domains
            .into_iter()
            .enumerate()
            .map(|(i, values)| Parameter {
                name: format!("p{i}"),
                values: values.into_iter().collect(),
            })
            .collect();
        Arc::new(ParameterSpace::new("prop", parameters, &[]).unwrap())
    })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(space in arb_space(), raw in any::<u64>()) {
        let index = raw % space.cardinality();
        let config = space.decode(index).unwrap();
        prop_assert_eq!(space.encode(&config).unwrap(), index);
    }

    #[test]
    fn decode_is_injective_on_neighbors(space in arb_space(), raw in any::<u64>()) {
        let n = space.cardinality();
        let i = raw % n;
        let j = (i + 1) % n;
        if i != j {
            prop_assert_ne!(space.decode(i).unwrap(), space.decode(j).unwrap());
        }
    }

    #[test]
    fn ordinals_round_trip(space in arb_space(), raw in any::<u64>()) {
        let index = raw % space.cardinality();
        let ordinals = space.ordinals(index);
        prop_assert_eq!(space.index_from_ordinals(&ordinals), index);
        for (o, p) in ordinals.iter().zip(space.parameters()) {
            prop_assert!(*o < p.values.len());
        }
    }

    #[test]
    fn sampled_configs_are_valid_and_distinct(space in arb_space(), seed in any::<u64>()) {
        let n = space.cardinality().min(10);
        let configs = space.sample_valid(n, seed).unwrap();
        prop_assert_eq!(configs.len() as u64, n);
        let mut indices: Vec<u64> = configs
            .iter()
            .map(|c| space.encode(c).unwrap())
            .collect();
        indices.sort_unstable();
        indices.dedup();
        prop_assert_eq!(indices.len() as u64, n, "sampling must be without replacement");
    }

    #[test]
    fn parser_never_panics(input in "\\PC{0,40}") {
        let _ = constraint::parse(&input);
        let _ = constraint::parse_any(&input);
    }

    #[test]
    fn parsed_expressions_round_trip_through_display(
        a in -20i64..20, b in -20i64..20, c in 1i64..20
    ) {
        // A family of well-formed constraints exercising precedence.
        let sources = [
            format!("p0 * {a} + {b} <= p1 * {c}"),
            format!("p0 % {c} == 0 && p1 / {c} > {b}"),
            format!("!(p0 < {a}) || p1 != {b}"),
        ];
        for src in &sources {
            let expr = constraint::parse(src).unwrap();
            let rendered = expr.to_string();
            prop_assert_eq!(constraint::parse(&rendered).unwrap(), expr);
        }
    }
}
