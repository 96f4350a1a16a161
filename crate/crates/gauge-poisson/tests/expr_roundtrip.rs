//! Property tests for the expression language: the canonical printed form
//! must re-parse to the same expression, and printing must be a fixpoint.

use gauge_poisson::expr::{evaluate, parse, print, EvalContext};
use nalgebra::DVector;
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0..3usize).prop_map(|i| format!("q{}", i + 1)),
        (0..3usize).prop_map(|i| format!("p{}", i + 1)),
        (0..2usize).prop_map(|i| format!("y{}", i + 1)),
        Just("t".to_string()),
        (0.0..10.0f64).prop_map(|v| format!("{v:.4}")),
    ]
}

fn source() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof!["\\+", "-", "\\*", "/"])
                .prop_map(|(a, b, op)| format!("({a} {op} {b})")),
            // exponents are restricted to signed numeric literals
            (inner.clone(), 1..4u32).prop_map(|(a, k)| format!("({a}) ^ {k}")),
            inner.clone().prop_map(|a| format!("(-({a}))")),
            (prop_oneof!["sin", "cos", "exp", "abs", "sqrt"], inner.clone())
                .prop_map(|(f, a)| format!("{f}(abs({a}) + 1)")),
            (prop_oneof!["min", "max", "atan2"], inner.clone(), inner)
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
        ]
    })
}

fn ctx() -> EvalContext {
    EvalContext::new(
        DVector::from_vec(vec![0.7, 1.2, 0.4]),
        DVector::from_vec(vec![-0.3, 0.8, 1.5]),
        DVector::from_vec(vec![0.9, -0.6]),
        2.5,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_form_is_a_fixpoint(src in source()) {
        let e1 = parse(&src, 3, 2).expect("generated source parses");
        let p1 = print(&e1);
        let e2 = parse(&p1, 3, 2).expect("printed form parses");
        let p2 = print(&e2);
        prop_assert_eq!(&p1, &p2);
    }

    #[test]
    fn printing_preserves_value(src in source()) {
        let e1 = parse(&src, 3, 2).expect("generated source parses");
        let e2 = parse(&print(&e1), 3, 2).expect("printed form parses");
        let c = ctx();
        match (evaluate(&e1, &c), evaluate(&e2, &c)) {
            (Ok(a), Ok(b)) => {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "verdicts differ: {a:?} vs {b:?}"),
        }
    }
}
