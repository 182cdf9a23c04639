use super::{expect_extent, Element, Tensor};
use crate::error::Result;

/// Batched matrix product `out[g] = a[g] · b[g]` for `a: [G,M,K]`, `b: [G,K,N]`.
///
/// Each output element is summed over `K` in index order.
pub fn bmm<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "bmm";
    a.expect_rank(OP, 3)?;
    b.expect_rank(OP, 3)?;
    let (g, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    expect_extent(OP, "batch", g, b.shape()[0])?;
    expect_extent(OP, "inner", k, b.shape()[1])?;
    let n = b.shape()[2];

    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); g * m * n];
    for gi in 0..g {
        let am = &ad[gi * m * k..(gi + 1) * m * k];
        let bm = &bd[gi * k * n..(gi + 1) * k * n];
        let om = &mut out[gi * m * n..(gi + 1) * m * n];
        for (arow, orow) in am.chunks_exact(k).zip(om.chunks_exact_mut(n)) {
            for (&av, brow) in arow.iter().zip(bm.chunks_exact(n)) {
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
    }
    Tensor::new(&[g, m, n], out)
}
