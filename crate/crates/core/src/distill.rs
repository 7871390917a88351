//! Temperature-scaled distillation loss.
//!
//! For teacher logits `t`, student logits `s` and temperature `λ`:
//!
//! ```text
//! L = λ² · mean_rows KL(softmax(t/λ) || softmax(s/λ))
//! ∂L/∂s = λ · (softmax(s/λ) − softmax(t/λ)) / n
//! ```
//!
//! No labels are involved.

use crate::matrix::Matrix;
use crate::nn::{log_softmax_rows, softmax_rows};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LogitsPair<'a> {
    pub teacher: &'a Matrix,
    pub student: &'a Matrix,
    pub temperature: f64,
}

impl<'a> LogitsPair<'a> {
    pub fn new(teacher: &'a Matrix, student: &'a Matrix, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if teacher.rows() != student.rows() || teacher.cols() != student.cols() {
            return Err(Error::DimensionMismatch {
                context: "teacher/student logits",
                expected: teacher.rows() * teacher.cols(),
                actual: student.rows() * student.cols(),
            });
        }
        if teacher.rows() == 0 {
            return Err(Error::InvalidInput("empty logits".into()));
        }
        Ok(Self {
            teacher,
            student,
            temperature,
        })
    }
}

/// Row-wise softmax of `logits / temperature`.
pub fn temp_softmax(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !logits.is_finite() {
        return Err(Error::InvalidInput("non-finite logits".into()));
    }
    Ok(softmax_rows(logits, temperature))
}

pub fn kld_loss(pair: &LogitsPair<'_>) -> f64 {
    let lam = pair.temperature;
    let lt = log_softmax_rows(pair.teacher, lam);
    let ls = log_softmax_rows(pair.student, lam);
    let mut total = 0.0;
    for (a, b) in lt.as_slice().iter().zip(ls.as_slice()) {
        let p = a.exp();
        if p > 0.0 {
            total += p * (a - b);
        }
    }
    // KL is non-negative; clamp rounding noise
    (lam * lam * total / pair.teacher.rows() as f64).max(0.0)
}

pub fn kld_grad_student(pair: &LogitsPair<'_>) -> Matrix {
    let lam = pair.temperature;
    let pt = softmax_rows(pair.teacher, lam);
    let mut g = softmax_rows(pair.student, lam);
    let scale = lam / pair.teacher.rows() as f64;
    for (gv, &t) in g.as_mut_slice().iter_mut().zip(pt.as_slice()) {
        *gv = scale * (*gv - t);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use crate::seed;
    use rand::Rng as _;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = temp_softmax(&m(&[vec![0.0, 0.0, 0.0]]), 2.5).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let p = temp_softmax(&m(&[vec![3f64.ln(), 0.0]]), 1.0).unwrap();
        assert!((p[(0, 0)] - 0.75).abs() < 1e-15 && (p[(0, 1)] - 0.25).abs() < 1e-15);

        let p = temp_softmax(&m(&[vec![5.0, -3.0, 1.0, 0.2]]), 1e4).unwrap();
        let max = p.as_slice().iter().cloned().fold(0.0, f64::max);
        assert!(max - 0.25 < 0.01);

        assert!(temp_softmax(&m(&[vec![f64::NAN, 0.0]]), 1.0).is_err());
        assert!(temp_softmax(&m(&[vec![0.0, 0.0]]), 0.0).is_err());
    }

    #[test]
    fn kld_examples() {
        let t = m(&[vec![3f64.ln(), 0.0]]);
        let s = m(&[vec![0.0, 0.0]]);
        let pair = LogitsPair::new(&t, &s, 1.0).unwrap();
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((kld_loss(&pair) - expected).abs() < 1e-12);
        assert!((kld_loss(&pair) - 0.130812).abs() < 1e-6);

        let same = LogitsPair::new(&t, &t, 3.0).unwrap();
        assert_eq!(kld_loss(&same), 0.0);
        assert!(kld_grad_student(&same).as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn temperature_scaling_identity() {
        let mut rng = seed::rng_from(17);
        for _ in 0..20 {
            let lam = rng.random_range(0.5..6.0);
            let t = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-4.0..4.0)).collect())
                .unwrap();
            let s = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-4.0..4.0)).collect())
                .unwrap();
            let scaled = kld_loss(&LogitsPair::new(&t, &s, lam).unwrap());
            let (tu, su) = (t.scale(1.0 / lam), s.scale(1.0 / lam));
            let unit = kld_loss(&LogitsPair::new(&tu, &su, 1.0).unwrap());
            assert!((scaled - lam * lam * unit).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_and_sums_to_zero() {
        let mut rng = seed::rng_from(23);
        for _ in 0..20 {
            let lam = rng.random_range(0.5..5.0);
            let t = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-3.0..3.0)).collect())
                .unwrap();
            let s = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-3.0..3.0)).collect())
                .unwrap();
            let g = kld_grad_student(&LogitsPair::new(&t, &s, lam).unwrap());
            for i in 0..4 {
                assert!(g.row(i).iter().sum::<f64>().abs() < 1e-9);
            }
            let err = finite_diff_check(
                |p| {
                    let sm = Matrix::from_vec(4, 5, p.to_vec()).unwrap();
                    kld_loss(&LogitsPair::new(&t, &sm, lam).unwrap())
                },
                s.as_slice(),
                g.as_slice(),
                1e-5,
            );
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn kld_is_non_negative() {
        let mut rng = seed::rng_from(29);
        for _ in 0..100 {
            let t = Matrix::from_vec(2, 3, (0..6).map(|_| rng.random_range(-8.0..8.0)).collect())
                .unwrap();
            let s = Matrix::from_vec(2, 3, (0..6).map(|_| rng.random_range(-8.0..8.0)).collect())
                .unwrap();
            assert!(kld_loss(&LogitsPair::new(&t, &s, 2.0).unwrap()) >= 0.0);
        }
    }
}
