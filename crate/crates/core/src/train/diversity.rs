//! Topic diversity: the mean `ζ` and variance `ν` of the pairwise angles
//! `a(t_i, t_j) = arccos(|t_i · t_j| / (‖t_i‖ ‖t_j‖))` over all `K²`
//! ordered pairs, diagonal included. Training maximises `ζ − ν`.

use crate::error::{Error, Result};
use crate::gradcore::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diversity {
    pub zeta: f64,
    pub nu: f64,
}

impl Diversity {
    /// The term `λ(ζ − ν)` added to the objective.
    pub fn penalty(&self, lambda: f64) -> f64 {
        lambda * (self.zeta - self.nu)
    }
}

fn check_rows(t: &Tensor) -> Result<()> {
    let (k, h) = t.dims();
    for i in 0..k {
        if t.data()[i * h..(i + 1) * h].iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!("topic vector {i} has zero norm")));
        }
    }
    Ok(())
}

pub fn diversity_penalty(t: &Tensor) -> Result<Diversity> {
    check_rows(t)?;
    let (k, h) = t.dims();
    let norms: Vec<f64> = (0..k).map(|i| t.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut angles = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                angles.push(0.0);
                continue;
            }
            let dot: f64 = (0..h).map(|c| t.data()[i * h + c] * t.data()[j * h + c]).sum();
            let cos = (dot.abs() / (norms[i] * norms[j])).min(1.0);
            angles.push(cos.acos());
        }
    }
    let n = angles.len() as f64;
    let zeta = angles.iter().sum::<f64>() / n;
    let nu = angles.iter().map(|a| (a - zeta).powi(2)).sum::<f64>() / n;
    Ok(Diversity { zeta, nu })
}

/// `(ζ, ν)` as `1 × 1` tape values for a `K × H` topic matrix.
pub fn diversity_on(tape: &mut Tape, t: Var) -> Result<(Var, Var)> {
    check_rows(tape.value(t))?;
    let sq = tape.mul(t, t)?;
    let sq = tape.sum_rows(sq);
    let norms = tape.sqrt(sq);
    let unit = tape.div(t, norms)?;
    let unit_t = tape.transpose(unit);
    let cos = tape.matmul(unit, unit_t)?;
    let cos = tape.abs(cos);
    let angles = tape.acos(cos);
    let k = tape.value(t).rows();
    let off_diagonal = tape.constant(Tensor::identity(k).map(|v| 1.0 - v));
    let angles = tape.mul(angles, off_diagonal)?;
    let zeta = tape.mean(angles);
    let dev = tape.sub(angles, zeta)?;
    let dev2 = tape.mul(dev, dev)?;
    let nu = tape.mean(dev2);
    Ok((zeta, nu))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcore::grad_check;

    #[test]
    fn identical_rows_have_no_spread() {
        let t = Tensor::from_rows(&[&[1.0, 2.0], &[1.0, 2.0], &[-2.0, -4.0]]);
        let d = diversity_penalty(&t).unwrap();
        assert_abs_diff_eq!(d.zeta, 0.0, epsilon = 1e-7);
        assert_eq!(diversity_penalty(&Tensor::row(&[0.3, 4.0])).unwrap(), Diversity { zeta: 0.0, nu: 0.0 });
        assert_abs_diff_eq!(d.nu, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_pair() {
        let d = diversity_penalty(&Tensor::identity(2)).unwrap();
        assert_abs_diff_eq!(d.zeta, PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.nu, PI * PI / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.penalty(0.1), 0.1 * (PI / 4.0 - PI * PI / 16.0), epsilon = 1e-15);
    }

    #[test]
    fn matches_double_loop() {
        let t = Tensor::randn(3, 5, 1.0, &mut ChaCha8Rng::seed_from_u64(11));
        let row = |i: usize| t.row_slice(i).to_vec();
        let mut a = [[0.0; 3]; 3];
        for (i, ai) in a.iter_mut().enumerate() {
            for (j, aij) in ai.iter_mut().enumerate().filter(|(j, _)| *j != i) {
                let (x, y) = (row(i), row(j));
                let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                *aij = (dot.abs() / (nx * ny)).min(1.0).acos();
            }
        }
        let zeta = a.iter().flatten().sum::<f64>() / 9.0;
        let nu = a.iter().flatten().map(|v| (v - zeta).powi(2)).sum::<f64>() / 9.0;
        let d = diversity_penalty(&t).unwrap();
        assert_abs_diff_eq!(d.zeta, zeta, epsilon = 1e-14);
        assert_abs_diff_eq!(d.nu, nu, epsilon = 1e-14);

        let mut tape = Tape::new();
        let v = tape.constant(t.clone());
        let (z, n) = diversity_on(&mut tape, v).unwrap();
        assert_abs_diff_eq!(tape.value(z).item(), zeta, epsilon = 1e-12);
        assert_abs_diff_eq!(tape.value(n).item(), nu, epsilon = 1e-12);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let t = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(diversity_penalty(&t), Err(Error::Degenerate(_))));
        let mut tape = Tape::new();
        let v = tape.constant(t);
        assert!(diversity_on(&mut tape, v).is_err());
    }

    #[test]
    fn gradient_of_zeta_minus_nu() {
        let t = Tensor::randn(3, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let err = grad_check(
            |tape, v| {
                let (z, n) = diversity_on(tape, v)?;
                tape.sub(z, n)
            },
            &t,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant(seed in any::<u64>(), k in 2usize..6, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::randn(k, 4, 1.0, &mut rng);
            let d = diversity_penalty(&t).unwrap();
            prop_assert!(d.zeta >= 0.0 && d.zeta <= PI / 2.0);
            prop_assert!(d.nu >= 0.0);
            let mut s = t.clone();
            s.data_mut()[..4].iter_mut().for_each(|v| *v *= scale);
            let e = diversity_penalty(&s).unwrap();
            prop_assert!((d.zeta - e.zeta).abs() < 1e-7);
            prop_assert!((d.nu - e.nu).abs() < 1e-7);
        }
    }
}
