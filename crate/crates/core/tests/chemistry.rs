use std::collections::BTreeMap;

use proptest::prelude::*;
use virtlab::chemistry::{
    balance_report, check_balance, parse_equation, parse_formula, parse_formula_bytes,
    FormulaError,
};

const OVERALL: &str = "2HNO3 + 3H2SO4 + 6FeSO4 -> 3Fe2(SO4)3 + 2NO + 4H2O";
const COMPLEX: &str = "[Fe(H2O)6]SO4 + NO -> [Fe(H2O)5(NO)]SO4 + H2O";

const SYMBOLS: [&str; 12] = ["H", "He", "C", "N", "O", "Na", "S", "Cl", "Fe", "Cu", "K", "U"];

/// Formula syntax tree with its expected element tally.
#[derive(Clone, Debug)]
enum Node {
    Atom(&'static str, u64),
    Group(Vec<Node>, char, u64),
}

fn render(nodes: &[Node]) -> String {
    let mut s = String::new();
    for n in nodes {
        match n {
            Node::Atom(sym, k) => {
                s.push_str(sym);
                if *k > 1 {
                    s.push_str(&k.to_string());
                }
            }
            Node::Group(inner, open, k) => {
                s.push(*open);
                s.push_str(&render(inner));
                s.push(if *open == '(' { ')' } else { ']' });
                if *k > 1 {
                    s.push_str(&k.to_string());
                }
            }
        }
    }
    s
}

fn tally(nodes: &[Node], mult: u64, out: &mut BTreeMap<String, u64>) {
    for n in nodes {
        match n {
            Node::Atom(sym, k) => *out.entry(sym.to_string()).or_insert(0) += k * mult,
            Node::Group(inner, _, k) => tally(inner, k * mult, out),
        }
    }
}

fn formula_tree() -> impl Strategy<Value = Vec<Node>> {
    let atom = (prop::sample::select(SYMBOLS.to_vec()), 1u64..6).prop_map(|(s, k)| Node::Atom(s, k));
    let node = atom.prop_recursive(3, 12, 4, |inner| {
        (
            prop::collection::vec(inner, 1..4),
            prop::sample::select(vec!['(', '[']),
            1u64..5,
        )
            .prop_map(|(v, o, k)| Node::Group(v, o, k))
    });
    prop::collection::vec(node, 1..5)
}

#[test]
fn both_equations_balance() {
    for eq in [OVERALL, COMPLEX] {
        let report = balance_report(&parse_equation(eq).unwrap());
        assert!(report.balanced, "{eq}\n{report}");
        assert!(report.to_string().ends_with("BALANCED"));
    }
}

#[test]
fn every_single_coefficient_nudge_unbalances() {
    let eq = parse_equation(OVERALL).unwrap();
    let mut seen = 0;
    for side in 0..2 {
        let n = if side == 0 { eq.lhs.len() } else { eq.rhs.len() };
        for i in 0..n {
            for delta in [-1i64, 1] {
                let mut e = eq.clone();
                let terms = if side == 0 { &mut e.lhs } else { &mut e.rhs };
                terms[i].coefficient = (terms[i].coefficient as i64 + delta) as u64;
                let report = balance_report(&e);
                assert!(!report.balanced, "{e}");
                // the textual form reads back the same way
                assert!(!balance_report(&parse_equation(&e.to_string()).unwrap()).balanced);
                seen += 1;
            }
        }
    }
    assert_eq!(seen, 12);
}

#[test]
fn nitrosonium_complex_parses() {
    let f = parse_formula("[Fe(H2O)5(NO)]SO4").unwrap();
    assert_eq!(f.count("Fe"), 1);
    assert_eq!(f.count("H"), 10);
    assert_eq!(f.count("O"), 10);
    assert_eq!(f.count("N"), 1);
    assert_eq!(f.count("S"), 1);
}

#[test]
fn formula_errors_carry_offsets() {
    let cases: [(&str, usize); 5] = [
        ("", 0),
        ("Fe2(SO4", 3),
        ("H2O)", 3),
        ("Xx2", 0),
        ("H0", 1),
    ];
    for (text, offset) in cases {
        let e = parse_formula(text).unwrap_err();
        assert_eq!(e.offset(), offset, "{text}: {e}");
    }
    assert!(matches!(parse_formula("Fe2(SO4"), Err(FormulaError::Unclosed { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rendered_formulas_parse_to_their_tally(tree in formula_tree()) {
        let text = render(&tree);
        let mut expected = BTreeMap::new();
        tally(&tree, 1, &mut expected);
        let f = parse_formula(&text).unwrap();
        prop_assert_eq!(f.elements(), &expected);
        prop_assert_eq!(f.to_string(), text);
    }

    #[test]
    fn balance_is_symmetric_and_scale_free(
        lhs in prop::collection::vec((1u64..5, formula_tree()), 1..4),
        rhs in prop::collection::vec((1u64..5, formula_tree()), 1..4),
        k in 2u64..7,
    ) {
        let side = |terms: &[(u64, Vec<Node>)], k: u64| {
            terms
                .iter()
                .map(|(c, t)| format!("{}{}", c * k, render(t)))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let eq = parse_equation(&format!("{} -> {}", side(&lhs, 1), side(&rhs, 1))).unwrap();
        let flipped = parse_equation(&format!("{} -> {}", side(&rhs, 1), side(&lhs, 1))).unwrap();
        let scaled = parse_equation(&format!("{} -> {}", side(&lhs, k), side(&rhs, k))).unwrap();
        let b = check_balance(&eq.lhs, &eq.rhs);
        prop_assert_eq!(b, check_balance(&flipped.lhs, &flipped.rhs));
        prop_assert_eq!(b, check_balance(&scaled.lhs, &scaled.rhs));
        // a side always balances against itself, and never after one nudge
        let same = parse_equation(&format!("{} -> {}", side(&lhs, 1), side(&lhs, 1))).unwrap();
        prop_assert!(check_balance(&same.lhs, &same.rhs));
        let mut nudged = same.clone();
        nudged.rhs[0].coefficient += 1;
        prop_assert!(!check_balance(&nudged.lhs, &nudged.rhs));
    }

    #[test]
    fn formula_parsing_is_total(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        match parse_formula_bytes(&bytes) {
            Ok(f) => prop_assert!(!f.elements().is_empty()),
            Err(e) => prop_assert!(e.offset() <= bytes.len()),
        }
    }

    #[test]
    fn formula_parsing_is_total_on_near_misses(
        text in "[A-Za-z0-9()\\[\\] ]{0,24}",
    ) {
        match parse_formula(&text) {
            Ok(f) => prop_assert!(!f.elements().is_empty()),
            Err(e) => prop_assert!(e.offset() <= text.len()),
        }
    }
}
