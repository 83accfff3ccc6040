use super::{Leg, Result, Tensor, TensorError};

/// Multiplies `a` and `b` through the given leg pairs.
///
/// The result carries `a`'s unpaired legs followed by `b`'s unpaired legs, each
/// in their original order. Every entry is the nested sum over the paired
/// indices.
pub fn contract_pair(a: &Tensor, b: &Tensor, pairs: &[(&str, &str)]) -> Result<Tensor> {
    if pairs.is_empty() {
        return Err(TensorError::EmptyPairing);
    }
    let mut idx = Vec::with_capacity(pairs.len());
    for (la, lb) in pairs {
        let ia = a.leg_index(la).ok_or_else(|| TensorError::UnknownLeg(la.to_string()))?;
        let ib = b.leg_index(lb).ok_or_else(|| TensorError::UnknownLeg(lb.to_string()))?;
        if idx.iter().any(|&(x, _)| x == ia) {
            return Err(TensorError::DuplicatePairing(la.to_string()));
        }
        if idx.iter().any(|&(_, y)| y == ib) {
            return Err(TensorError::DuplicatePairing(lb.to_string()));
        }
        let (da, db) = (a.legs()[ia].dim, b.legs()[ib].dim);
        if da != db {
            return Err(TensorError::DimMismatch {
                left: la.to_string(),
                left_dim: da,
                right: lb.to_string(),
                right_dim: db,
            });
        }
        idx.push((ia, ib));
    }
    let out = contract_axes(a, b, &idx);
    // unpaired labels of a and b may collide
    for (i, leg) in out.legs().iter().enumerate() {
        if out.legs()[..i].iter().any(|l| l.label == leg.label) {
            return Err(TensorError::DuplicateLabel(leg.label.clone()));
        }
    }
    Ok(out)
}

/// Contraction over already-validated axis pairs; an empty list is the outer product.
pub(crate) fn contract_axes(a: &Tensor, b: &Tensor, pairs: &[(usize, usize)]) -> Tensor {
    let a_free: Vec<usize> = (0..a.order()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let b_free: Vec<usize> = (0..b.order()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();

    let mut a_perm = a_free.clone();
    a_perm.extend(pairs.iter().map(|p| p.0));
    let mut b_perm: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    b_perm.extend(&b_free);

    let a_t = a.permute_axes(&a_perm);
    let b_t = b.permute_axes(&b_perm);

    let m: usize = a_free.iter().map(|&i| a.legs()[i].dim).product();
    let k: usize = pairs.iter().map(|p| a.legs()[p.0].dim).product();
    let n: usize = b_free.iter().map(|&i| b.legs()[i].dim).product();

    let data = matmul(a_t.data(), b_t.data(), m, k, n);
    let mut legs: Vec<Leg> = a_free.iter().map(|&i| a.legs()[i].clone()).collect();
    legs.extend(b_free.iter().map(|&i| b.legs()[i].clone()));
    Tensor::from_parts_unchecked(legs, data)
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cij, bpj) in row.iter_mut().zip(brow) {
                *cij += aip * bpj;
            }
        }
    }
    c
}
