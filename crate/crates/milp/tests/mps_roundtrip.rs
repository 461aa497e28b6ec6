use mipnet_milp::mps::{export_mps, import_mps};
use mipnet_milp::{LinExpr, ModelIR, Sense};
use proptest::prelude::*;

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![(-50i32..50).prop_map(f64::from), -1e3f64..1e3, Just(0.1), Just(-1.0 / 3.0)]
}

fn bounds() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![
        Just((0.0, f64::INFINITY)),
        Just((f64::NEG_INFINITY, f64::INFINITY)),
        Just((-1.0, 1.0)),
        Just((2.5, 2.5)),
        (-10.0f64..0.0, 0.0f64..10.0),
        (-5.0f64..5.0).prop_map(|u| (f64::NEG_INFINITY, u)),
    ]
}

prop_compose! {
    fn model()(
        vars in prop::collection::vec((any::<bool>(), bounds()), 1..8),
        rows in prop::collection::vec((prop::collection::vec((0usize..8, coef()), 0..6), 0..3u8, coef()), 0..6),
        obj in prop::collection::vec((0usize..8, coef()), 0..6),
    ) -> ModelIR {
        let mut m = ModelIR::new("prop");
        let ids: Vec<_> = vars.iter().enumerate().map(|(i, (bin, (l, u)))| {
            if *bin { m.add_binary(format!("b[{i}]")).unwrap() } else { m.add_continuous(format!("x[{i}]"), *l, *u).unwrap() }
        }).collect();
        for (r, (terms, s, rhs)) in rows.into_iter().enumerate() {
            let mut e = LinExpr::new();
            for (v, a) in terms { e.add(ids[v % ids.len()], a); }
            let sense = [Sense::Le, Sense::Eq, Sense::Ge][s as usize];
            m.add_row(format!("c{r}"), e, sense, rhs).unwrap();
        }
        let mut e = LinExpr::new();
        for (v, a) in obj { e.add(ids[v % ids.len()], a); }
        m.set_objective(e.into_terms()).unwrap();
        m
    }
}

proptest! {
    #[test]
    fn export_import_is_identity(m in model()) {
        let text = export_mps(&m);
        let back = import_mps(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(export_mps(&back), text.clone());
        prop_assert_eq!(export_mps(&m), text);
    }
}
