use mtlrank_core::{Tape, Tensor};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..5, 1usize..5).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-3.0..3.0f64, r * c)))
}

proptest! {
    #[test]
    fn reshape_there_and_back_is_identity((r, c, data) in matrix()) {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(r, c, data.clone()));
        let flat = t.reshape(x, &[r * c]).unwrap();
        let back = t.reshape(flat, &[r, c]).unwrap();
        prop_assert_eq!(t.value(back).data(), &data[..]);
        prop_assert_eq!(t.value(back).shape(), &[r, c][..]);
    }

    #[test]
    fn backward_is_bitwise_repeatable((r, c, data) in matrix()) {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(r, c, data));
        let xt = t.transpose(x).unwrap();
        let m = t.matmul(x, xt).unwrap();
        let s = t.softmax(m).unwrap();
        let e = t.exp(s).unwrap();
        let y = t.mean(e, None).unwrap();
        let a = t.backward(y).unwrap().wrt(x);
        let b = t.backward(y).unwrap().wrt(x);
        prop_assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn masked_softmax_renormalizes_the_rest(
        (r, c, data) in matrix(),
        flags in prop::collection::vec(any::<bool>(), 16),
    ) {
        let mut mask: Vec<bool> = (0..r * c).map(|i| flags[i % 16]).collect();
        for row in mask.chunks_mut(c) {
            row[c - 1] = false;
        }
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(r, c, data.clone()));
        let f = t.masked_fill(x, &mask, f64::NEG_INFINITY).unwrap();
        let s = t.softmax(f).unwrap();
        let out = t.value(s).data();
        for i in 0..r {
            let row = i * c..(i + 1) * c;
            let z: f64 = row.clone().filter(|&j| !mask[j]).map(|j| data[j].exp()).sum();
            for j in row {
                if mask[j] {
                    prop_assert_eq!(out[j], 0.0);
                } else {
                    prop_assert!((out[j] - data[j].exp() / z).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn fully_masked_softmax_row_is_an_error() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
    let f = t.masked_fill(x, &[true; 3], f64::NEG_INFINITY).unwrap();
    assert!(t.softmax(f).is_err());
}
