//! Shared fixtures for the benchmarks.

use circlelab_core::{DiagonalForm, FormSystem, GeneralForm, Monomial};

/// Four variables coupled through `x₁x₂ − x₃x₄`; exercises the split search.
pub fn quartic_system() -> FormSystem {
    let g = GeneralForm::from_terms(4, 2, &[(&[1, 1, 0, 0], 1), (&[0, 0, 1, 1], -1)]).unwrap();
    FormSystem::new(DiagonalForm::new(3, vec![1, 1, 1, -2]).unwrap(), vec![g], Some(0)).unwrap()
}

/// Separable system in `s` variables with cycling coefficients.
pub fn separable_system(s: usize) -> FormSystem {
    let c: Vec<i64> = (0..s).map(|i| 1 + (i % 3) as i64).collect();
    let monos = (0..s)
        .map(|i| {
            let mut exps = vec![0; s];
            exps[i] = 2;
            Monomial { exps, coef: if i % 2 == 0 { 1 + (i % 3) as i64 } else { -1 - (i % 3) as i64 } }
        })
        .collect();
    FormSystem::new(DiagonalForm::new(3, c).unwrap(), vec![GeneralForm::new(s, 2, monos).unwrap()], None).unwrap()
}
