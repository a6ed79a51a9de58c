//! Numerical building blocks: quadrature, special functions, interpolation.

pub mod legendre;
pub mod pchip;
pub mod quad;
pub mod roots;
pub mod special;

pub use legendre::GaussLegendre;
pub use pchip::Pchip;
pub use quad::Quadrature;

/// Running sums with Neumaier compensation, starting from `start`.
pub fn cumulative_sum(start: f64, terms: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![start];
    let (mut sum, mut comp) = (start, 0.0);
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
        out.push(sum + comp);
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn compensated_sum_is_exact_for_tenths() {
        let v = super::cumulative_sum(0.0, std::iter::repeat(0.1).take(10_000));
        assert_eq!(v.len(), 10_001);
        assert!((v[10_000] - 1000.0).abs() < 1e-12);
    }
}
