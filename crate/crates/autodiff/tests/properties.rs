use hg_autodiff::{Graph, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn concat_then_slice_recovers_parts(
        a in prop::collection::vec(-10.0..10.0f64, 12),
        b in prop::collection::vec(-10.0..10.0f64, 8),
    ) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[4, 3], a.clone()).unwrap()).unwrap();
        let y = g.constant(Tensor::new(&[4, 2], b.clone()).unwrap()).unwrap();
        let c = g.concat_last(&[x, y]).unwrap();
        let sx = g.slice_last(c, 0, 3).unwrap();
        let sy = g.slice_last(c, 3, 2).unwrap();
        prop_assert_eq!(g.value(sx).data(), &a[..]);
        prop_assert_eq!(g.value(sy).data(), &b[..]);
    }

    #[test]
    fn conv_is_linear_in_input(
        x in prop::collection::vec(-1.0..1.0f64, 5 * 5 * 2),
        y in prop::collection::vec(-1.0..1.0f64, 5 * 5 * 2),
        w in prop::collection::vec(-1.0..1.0f64, 25 * 2),
        stride in 1usize..3,
    ) {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(&[5, 5, 2], x).unwrap()).unwrap();
        let yv = g.constant(Tensor::new(&[5, 5, 2], y).unwrap()).unwrap();
        let wv = g.constant(Tensor::new(&[5, 5, 2, 1], w).unwrap()).unwrap();
        let s = g.add(xv, yv).unwrap();
        let lhs = g.conv(s, wv, stride).unwrap();
        let cx = g.conv(xv, wv, stride).unwrap();
        let cy = g.conv(yv, wv, stride).unwrap();
        let rhs = g.add(cx, cy).unwrap();
        prop_assert!(g.value(lhs).max_abs_diff(g.value(rhs)) < 1e-12);
    }
}
