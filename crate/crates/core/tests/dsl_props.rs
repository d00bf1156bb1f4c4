use mixedvalue::dsl::{parse, Bindings, VarSet};
use proptest::prelude::*;

/// Random source text over the running-payoff variables in two dimensions.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| format!("{}", n as f64 / 8.0)),
        prop::sample::select(vec!["t", "x1", "x2", "y", "z1", "z2", "u1", "v1"]).prop_map(str::to_string),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!['+', '-', '*', '/']), inner.clone())
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (prop::sample::select(vec!["sin", "cos", "exp", "abs", "tanh", "sqrt"]), inner.clone())
                .prop_map(|(f, a)| format!("{f}({a})")),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner).prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
        ]
    })
}

fn vars() -> VarSet {
    VarSet::running(2, 1, 1)
}

fn env() -> Bindings<'static> {
    Bindings { t: Some(0.3), x: &[0.7, -1.1], y: Some(0.4), z: &[0.2, -0.5], u: &[1.0], v: &[-1.0] }
}

fn same(a: Result<f64, impl std::fmt::Debug>, b: Result<f64, impl std::fmt::Debug>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x == y || (x.is_nan() && y.is_nan()),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #[test]
    fn display_round_trips(src in source()) {
        let e = parse(&src, &vars()).unwrap();
        let again = parse(&e.to_string(), &vars()).unwrap();
        prop_assert_eq!(&again, &e);
        prop_assert!(same(e.evaluate(&env()), again.evaluate(&env())));
    }

    #[test]
    fn neutral_elements_preserve_values(src in source()) {
        let e = parse(&src, &vars()).unwrap();
        let plus = parse(&format!("({src}) + 0"), &vars()).unwrap();
        let times = parse(&format!("({src}) * 1"), &vars()).unwrap();
        prop_assert!(same(e.evaluate(&env()), plus.evaluate(&env())));
        prop_assert!(same(e.evaluate(&env()), times.evaluate(&env())));
    }

    #[test]
    fn unbalanced_parentheses_are_rejected(src in source()) {
        let (open, close) = (format!("({src}"), format!("{src})"));
        prop_assert!(parse(&open, &vars()).is_err());
        prop_assert!(parse(&close, &vars()).is_err());
    }

    #[test]
    fn variables_outside_the_set_are_rejected(src in source()) {
        let e = parse(&src, &vars()).unwrap();
        if e.uses_y() {
            prop_assert!(parse(&src, &VarSet::dynamics(2, 1, 1)).is_err());
        }
    }
}
