use super::*;
use proptest::prelude::*;

fn var(i: usize) -> Node {
    Node::Variable(i)
}

fn parse2(text: &str) -> Expression {
    Expression::parse(text, 2).unwrap()
}

/// Independent reference evaluator: a second, deliberately naive recursive
/// walk that mirrors the mathematical definitions and nothing else. Domain
/// errors surface as NaN here; comparisons only use in-domain points.
fn oracle_eval(node: &Node, x: &[f64]) -> f64 {
    match node {
        Node::Constant(c) => *c,
        Node::Variable(i) => x[*i - 1],
        Node::Neg(u) => -oracle_eval(u, x),
        Node::Add(a, b) => oracle_eval(a, x) + oracle_eval(b, x),
        Node::Sub(a, b) => oracle_eval(a, x) - oracle_eval(b, x),
        Node::Mul(a, b) => oracle_eval(a, x) * oracle_eval(b, x),
        Node::Div(a, b) => oracle_eval(a, x) / oracle_eval(b, x),
        Node::Pow(u, Exponent::Int(n)) => {
            let base = oracle_eval(u, x);
            let mut acc = 1.0;
            for _ in 0..n.unsigned_abs() {
                acc *= base;
            }
            if *n < 0 {
                1.0 / acc
            } else {
                acc
            }
        }
        Node::Pow(u, Exponent::Real(r)) => oracle_eval(u, x).powf(*r),
        Node::Func(f, u) => {
            let v = oracle_eval(u, x);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Log => v.ln(),
                Func::Sqrt => v.sqrt(),
                Func::Abs => v.abs(),
                Func::Sign => {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
            }
        }
    }
}

#[test]
fn parse_single_variable() {
    assert_eq!(parse2("x1").node(), &var(1));
}

#[test]
fn parse_field_component_with_abs() {
    // -|x2|*x2, the first component of the rotation-with-kink system.
    let expected = Node::Mul(
        Box::new(Node::Neg(Box::new(Node::Func(Func::Abs, Box::new(var(2)))))),
        Box::new(var(2)),
    );
    assert_eq!(parse2("-abs(x2)*x2").node(), &expected);
}

#[test]
fn parse_sum_of_squares() {
    let expected = Node::Add(
        Box::new(Node::Pow(Box::new(var(1)), Exponent::Int(2))),
        Box::new(Node::Pow(Box::new(var(2)), Exponent::Int(2))),
    );
    assert_eq!(parse2("x1^2 + x2^2").node(), &expected);
}

#[test]
fn parse_errors_carry_positions() {
    match Expression::parse("x1 +", 2) {
        Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 4),
        other => panic!("expected syntax error, got {other:?}"),
    }
    match Expression::parse("x1 + y", 2) {
        Err(ExprError::UnknownIdentifier { name, position }) => {
            assert_eq!(name, "y");
            assert_eq!(position, 5);
        }
        other => panic!("expected unknown identifier, got {other:?}"),
    }
    match Expression::parse("x3", 2) {
        Err(ExprError::VariableOutOfRange { index, dimension }) => {
            assert_eq!((index, dimension), (3, 2));
        }
        other => panic!("expected out-of-range variable, got {other:?}"),
    }
    assert!(Expression::parse("", 2).is_err());
    assert!(Expression::parse("  ", 2).is_err());
}

#[test]
fn unary_minus_precedence() {
    // ^ binds tighter than unary minus.
    let e = parse2("-x1^2");
    assert_eq!(
        e.node(),
        &Node::Neg(Box::new(Node::Pow(Box::new(var(1)), Exponent::Int(2))))
    );
    assert_eq!(e.evaluate(&[3.0, 0.0]).unwrap(), -9.0);
    let c = parse2("-4^2");
    assert_eq!(c.evaluate(&[0.0, 0.0]).unwrap(), -16.0);
}

#[test]
fn evaluate_field_component() {
    let e = parse2("-abs(x2)*x2");
    assert_eq!(e.evaluate(&[0.0, 2.0]).unwrap(), -4.0);
    assert_eq!(e.evaluate(&[0.0, -2.0]).unwrap(), 4.0);
    assert_eq!(e.evaluate(&[5.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn evaluate_sin_at_zero() {
    let e = parse2("sin(x1)");
    assert_eq!(e.evaluate(&[0.0, 5.0]).unwrap(), 0.0);
}

#[test]
fn evaluate_domain_errors() {
    assert!(matches!(
        parse2("log(x1)").evaluate(&[-1.0, 0.0]),
        Err(ExprError::LogDomain(_))
    ));
    assert!(matches!(
        parse2("sqrt(x1)").evaluate(&[-4.0, 0.0]),
        Err(ExprError::SqrtDomain(_))
    ));
    assert!(matches!(
        parse2("x1/x2").evaluate(&[1.0, 0.0]),
        Err(ExprError::DivisionByZero)
    ));
    assert!(matches!(
        parse2("x1^0.5").evaluate(&[-1.0, 0.0]),
        Err(ExprError::PowDomain { .. })
    ));
    // Overflow is an error, not a silent infinity.
    assert!(matches!(
        parse2("exp(x1)").evaluate(&[1.0e4, 0.0]),
        Err(ExprError::Overflow { .. })
    ));
}

#[test]
fn evaluate_checks_point_dimension() {
    assert!(matches!(
        parse2("x2").evaluate(&[1.0]),
        Err(ExprError::DimensionMismatch { need: 2, got: 1 })
    ));
}

#[test]
fn sign_is_exact_at_zero() {
    let e = parse2("sign(x1)");
    assert_eq!(e.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(e.evaluate(&[-0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(e.evaluate(&[3.0, 0.0]).unwrap(), 1.0);
    assert_eq!(e.evaluate(&[-3.0, 0.0]).unwrap(), -1.0);
}

#[test]
fn derivative_of_sum_of_squares() {
    let d = parse2("x1^2 + x2^2").differentiate(1).unwrap();
    assert_eq!(format!("{d}"), "2*x1");
}

#[test]
fn derivative_of_constant_is_zero() {
    let d = parse2("5").differentiate(1).unwrap();
    assert_eq!(d.node(), &Node::Constant(0.0));
}

#[test]
fn derivative_of_abs_times_arg() {
    // d/dx2 (|x2|*x2) = 2|x2| everywhere, including at the kink.
    let d = parse2("abs(x2)*x2").differentiate(2).unwrap();
    let reference = parse2("2*abs(x2)");
    let mut x = -3.0;
    while x <= 3.0 {
        assert_eq!(
            d.evaluate(&[0.0, x]).unwrap(),
            reference.evaluate(&[0.0, x]).unwrap(),
            "mismatch at x2 = {x}"
        );
        x += 0.25;
    }
    assert_eq!(d.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
}

/// Central finite differences, the independent derivative oracle.
fn fd_derivative(e: &Expression, point: &[f64], var: usize) -> f64 {
    let h = 1e-5 * point[var - 1].abs().max(1.0);
    let mut hi = point.to_vec();
    let mut lo = point.to_vec();
    hi[var - 1] += h;
    lo[var - 1] -= h;
    (e.evaluate(&hi).unwrap() - e.evaluate(&lo).unwrap()) / (2.0 * h)
}

#[test]
fn derivative_matches_finite_differences() {
    let exprs = [
        "abs(x2)*x2",
        "x1^3 - 2*x1*x2 + x2^2",
        "sin(x1)*cos(x2)",
        "exp(x1/4)*x2",
        "sqrt(x1^2 + x2^2 + 1)",
        "x1/(x2^2 + 1)",
        "sign(x1)*x1^2",
        "x1^2.5 + x2",
    ];
    let mut state = 0x9e3779b97f4a7c15_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 + 0.5 // in [0.5, 4.5]
    };
    for text in exprs {
        let e = parse2(text);
        for var in 1..=2 {
            let d = e.differentiate(var).unwrap();
            for _ in 0..100 {
                // Positive coordinates keep every point clear of the
                // abs/sign kinks and of fractional-power domain edges.
                let point = [next(), next()];
                let symbolic = d.evaluate(&point).unwrap();
                let numeric = fd_derivative(&e, &point, var);
                let scale = symbolic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (symbolic - numeric).abs() / scale <= 1e-6,
                    "{text} d/dx{var} at {point:?}: {symbolic} vs {numeric}"
                );
            }
        }
    }
}

#[test]
fn lie_derivative_of_coordinate_function() {
    // V = x1 against f = (-|x2|x2, |x2|x1) gives V' = -|x2|x2.
    let v = parse2("x1");
    let field = [parse2("-abs(x2)*x2"), parse2("abs(x2)*x1")];
    let lie = lie_derivative(&v, &field).unwrap();
    let reference = parse2("-abs(x2)*x2");
    for (a, b) in [(0.3, -1.7), (2.0, 0.0), (-1.0, 4.0), (0.0, 0.0)] {
        assert_eq!(
            lie.evaluate(&[a, b]).unwrap(),
            reference.evaluate(&[a, b]).unwrap()
        );
    }
}

#[test]
fn lie_derivative_of_radius_vanishes() {
    // V = x1^2+x2^2 is conserved by the rotation-with-kink field.
    let v = parse2("x1^2 + x2^2");
    let field = [parse2("-abs(x2)*x2"), parse2("abs(x2)*x1")];
    let lie = lie_derivative(&v, &field).unwrap();
    let mut state = 42_u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    for _ in 0..1000 {
        let point = [next(), next()];
        assert!(lie.evaluate(&point).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn lie_derivative_against_zero_field_is_zero() {
    let v = parse2("sin(x1)*exp(x2)");
    let field = [Expression::constant(0.0, 2), Expression::constant(0.0, 2)];
    let lie = lie_derivative(&v, &field).unwrap();
    assert_eq!(lie.node(), &Node::Constant(0.0));
}

#[test]
fn lie_derivative_rejects_dimension_mismatch() {
    let v = parse2("x1");
    let field = [parse2("x2")];
    assert!(matches!(
        lie_derivative(&v, &field),
        Err(ExprError::MixedDimensions { .. })
    ));
    let field3 = [
        Expression::parse("x1", 3).unwrap(),
        Expression::parse("x2", 3).unwrap(),
    ];
    assert!(lie_derivative(&v, &field3).is_err());
}

#[test]
fn from_node_validates_indices() {
    assert!(Expression::from_node(var(3), 2).is_err());
    assert!(Expression::from_node(var(2), 2).is_ok());
}

// Random expression trees for the property suite.
fn arb_node(depth: u32) -> BoxedStrategy<Node> {
    let leaf = prop_oneof![
        (1usize..=4).prop_map(Node::Variable),
        (-1.0e6..1.0e6_f64).prop_map(Node::Constant),
        Just(Node::Constant(0.0)),
        Just(Node::Constant(1.0)),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        let exponent = prop_oneof![
            (-4..=4_i32).prop_map(Exponent::Int),
            (-3.0..3.0_f64)
                .prop_filter("non-integral", |r| r.fract() != 0.0)
                .prop_map(Exponent::Real),
        ];
        let func = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Exp),
            Just(Func::Log),
            Just(Func::Sqrt),
            Just(Func::Abs),
            Just(Func::Sign),
        ];
        prop_oneof![
            inner.clone().prop_map(|u| Node::Neg(Box::new(u))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Node::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Node::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Node::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Node::Div(Box::new(a), Box::new(b))),
            (inner.clone(), exponent).prop_map(|(u, e)| Node::Pow(Box::new(u), e)),
            (func, inner).prop_map(|(f, u)| Node::Func(f, Box::new(u))),
        ]
    })
    .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    /// print -> parse recovers the constant-folded tree.
    #[test]
    fn print_parse_round_trip(node in arb_node(8)) {
        let folded = Expression::from_node(fold(node), 4).unwrap();
        let printed = format!("{folded}");
        let reparsed = Expression::parse(&printed, 4)
            .unwrap_or_else(|e| panic!("failed to reparse `{printed}`: {e}"));
        prop_assert_eq!(reparsed.node(), folded.node(), "printed form: {}", printed);
    }

    /// The two evaluators agree wherever both are defined and finite.
    #[test]
    fn evaluate_matches_naive_oracle(node in arb_node(6), x1 in -10.0..10.0f64, x2 in -10.0..10.0f64,
                                     x3 in -10.0..10.0f64, x4 in -10.0..10.0f64) {
        let point = [x1, x2, x3, x4];
        let e = Expression::from_node(node, 4).unwrap();
        if let Ok(value) = e.evaluate(&point) {
            let reference = oracle_eval(e.node(), &point);
            let scale = value.abs().max(reference.abs()).max(1.0);
            prop_assert!((value - reference).abs() / scale <= 1e-12,
                "{} vs oracle {} for {}", value, reference, e);
        }
    }

    /// Differentiation is linear: (a*u + b*v)' = a*u' + b*v'.
    #[test]
    fn differentiation_is_linear(u in arb_node(4), v in arb_node(4),
                                 a in -5.0..5.0f64, b in -5.0..5.0f64,
                                 x1 in -3.0..3.0f64, x2 in -3.0..3.0f64,
                                 x3 in -3.0..3.0f64, x4 in -3.0..3.0f64) {
        let point = [x1, x2, x3, x4];
        let combo = Node::Add(
            Box::new(Node::Mul(Box::new(Node::Constant(a)), Box::new(u.clone()))),
            Box::new(Node::Mul(Box::new(Node::Constant(b)), Box::new(v.clone()))),
        );
        let combo = Expression::from_node(combo, 4).unwrap();
        let u = Expression::from_node(u, 4).unwrap();
        let v = Expression::from_node(v, 4).unwrap();
        for var in 1..=4 {
            let left = combo.differentiate(var).unwrap().evaluate(&point);
            let du = u.differentiate(var).unwrap().evaluate(&point);
            let dv = v.differentiate(var).unwrap().evaluate(&point);
            if let (Ok(left), Ok(du), Ok(dv)) = (left, du, dv) {
                let right = a * du + b * dv;
                if right.is_finite() {
                    let scale = left.abs().max(right.abs()).max(1.0);
                    prop_assert!((left - right).abs() / scale <= 1e-12);
                }
            }
        }
    }

    /// The Lie derivative along the zero field vanishes identically.
    #[test]
    fn lie_derivative_zero_field(node in arb_node(5), x1 in -5.0..5.0f64, x2 in -5.0..5.0f64,
                                 x3 in -5.0..5.0f64, x4 in -5.0..5.0f64) {
        let v = Expression::from_node(node, 4).unwrap();
        let field = vec![Expression::constant(0.0, 4); 4];
        let lie = lie_derivative(&v, &field).unwrap();
        if let Ok(value) = lie.evaluate(&[x1, x2, x3, x4]) {
            prop_assert_eq!(value, 0.0);
        }
    }
}
