//! Small complex-vector helpers and the (regularized) right pseudo-inverse
//! used for zero-forcing.

use nalgebra::DMatrix;

use crate::C64;

/// `aᴴb`.
#[inline]
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn scale(a: &[C64], s: f64) -> Vec<C64> {
    a.iter().map(|x| x * s).collect()
}

pub fn is_finite(a: &[C64]) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Columns of `Hᴴ(HHᴴ + λI)⁻¹` where the rows of `H` are `hᵤᴴ`.
///
/// Returns one length-`N` direction per input channel, or `None` when the
/// Gram matrix cannot be inverted.
pub fn regularized_pinv_columns(channels: &[&[C64]], lambda: f64) -> Option<Vec<Vec<C64>>> {
    let k = channels.len();
    if k == 0 {
        return Some(Vec::new());
    }
    let n = channels[0].len();
    // H is k×n with H[u][a] = conj(h_u[a]).
    let h = DMatrix::from_fn(k, n, |u, a| channels[u][a].conj());
    let hh = h.adjoint();
    let mut gram = &h * &hh;
    for i in 0..k {
        gram[(i, i)] += C64::new(lambda, 0.0);
    }
    let inv = gram.try_inverse()?;
    let w = hh * inv;
    if w.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return None;
    }
    Some((0..k).map(|u| w.column(u).iter().copied().collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_nulls_cross_terms() {
        let h1 = vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.0, 1.0)];
        let h2 = vec![C64::new(0.2, -0.1), C64::new(1.1, 0.0), C64::new(0.4, 0.4)];
        let w = regularized_pinv_columns(&[&h1, &h2], 0.0).unwrap();
        assert!(inner(&h1, &w[1]).norm() < 1e-12);
        assert!(inner(&h2, &w[0]).norm() < 1e-12);
        assert!((inner(&h1, &w[0]) - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn singular_gram_is_reported() {
        let h = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        assert!(regularized_pinv_columns(&[&h, &h], 0.0).is_none());
        assert!(regularized_pinv_columns(&[&h, &h], 0.1).is_some());
    }
}
