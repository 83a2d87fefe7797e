//! Token assembly for one sample. The student sequence holds the class token,
//! the embedded s-part patches, then one mask token per l-part patch; the
//! teacher sequence holds the class token and the embedded t-part patches.
//! Every kept token receives the positional embedding of its original grid
//! slot, so sparse sequences stay position-faithful. Each network assembles
//! from its own class token, mask token, and positional table.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::views::trimask::TriMask;

#[derive(Clone, Debug)]
pub struct StudentAssembly<F> {
    /// [1 + |s| + |l|, D]; rows ordered class token, s patches, mask tokens.
    pub tokens: Array2<F>,
    /// Prefix length 1 + |s| processed before mask tokens join.
    pub visible: usize,
    /// [|l|, patch_dim] pixel patches the predictor must reproduce, taken
    /// from the student view before color distortion.
    pub targets: Array2<F>,
}

pub fn assemble_student<F: Scalar>(
    patches: &ArrayView2<F>,
    target_patches: &ArrayView2<F>,
    mask: &TriMask,
    cls_token: &ArrayView1<F>,
    mask_token: &ArrayView1<F>,
    pos_embed: &ArrayView2<F>,
) -> Result<StudentAssembly<F>> {
    let n = mask.n;
    let dim = cls_token.len();
    if patches.dim() != (n, dim) {
        return Err(Error::contract(format!(
            "embedded patches must be [{n}, {dim}], got {:?}",
            patches.dim()
        )));
    }
    check_pos(pos_embed, n, dim)?;
    if mask_token.len() != dim {
        return Err(Error::contract("mask token width differs from embed width"));
    }
    if target_patches.nrows() != n {
        return Err(Error::contract(format!(
            "target patches must have {n} rows, got {}",
            target_patches.nrows()
        )));
    }

    let (s, l) = (mask.s_idx.len(), mask.l_idx.len());
    let mut tokens = Array2::<F>::zeros((1 + s + l, dim));
    let cls_row = &cls_token.to_owned() + &pos_embed.row(0);
    tokens.row_mut(0).assign(&cls_row);
    for (slot, &i) in mask.s_idx.iter().enumerate() {
        let token = &patches.row(i) + &pos_embed.row(i + 1);
        tokens.row_mut(1 + slot).assign(&token);
    }
    for (slot, &i) in mask.l_idx.iter().enumerate() {
        let token = &mask_token.to_owned() + &pos_embed.row(i + 1);
        tokens.row_mut(1 + s + slot).assign(&token);
    }

    let mut targets = Array2::<F>::zeros((l, target_patches.ncols()));
    for (slot, &i) in mask.l_idx.iter().enumerate() {
        targets.row_mut(slot).assign(&target_patches.row(i));
    }

    Ok(StudentAssembly { tokens, visible: 1 + s, targets })
}

/// Routes d(student tokens) back onto the pieces the assembly combined.
/// Accumulates into the class-token, mask-token, and positional gradients,
/// and returns the gradient of the embedded s patches, row `j` belonging to
/// grid slot `mask.s_idx[j]`.
pub fn assemble_student_backward<F: Scalar>(
    d_tokens: &ArrayView2<F>,
    mask: &TriMask,
    d_cls: &mut Array1<F>,
    d_mask_token: &mut Array1<F>,
    d_pos: &mut Array2<F>,
) -> Array2<F> {
    let s = mask.s_idx.len();
    let dim = d_tokens.ncols();
    *d_cls += &d_tokens.row(0);
    d_pos.row_mut(0).scaled_add(F::one(), &d_tokens.row(0));
    let mut d_patches = Array2::<F>::zeros((s, dim));
    for (slot, &i) in mask.s_idx.iter().enumerate() {
        let row = d_tokens.row(1 + slot);
        d_patches.row_mut(slot).assign(&row);
        d_pos.row_mut(i + 1).scaled_add(F::one(), &row);
    }
    for (slot, &i) in mask.l_idx.iter().enumerate() {
        let row = d_tokens.row(1 + s + slot);
        *d_mask_token += &row;
        d_pos.row_mut(i + 1).scaled_add(F::one(), &row);
    }
    d_patches
}

/// [1 + |t|, D]; rows ordered class token, t patches. Forward only: nothing
/// propagates back into the teacher.
pub fn assemble_teacher<F: Scalar>(
    patches: &ArrayView2<F>,
    mask: &TriMask,
    cls_token: &ArrayView1<F>,
    pos_embed: &ArrayView2<F>,
) -> Result<Array2<F>> {
    let n = mask.n;
    let dim = cls_token.len();
    if patches.dim() != (n, dim) {
        return Err(Error::contract(format!(
            "embedded patches must be [{n}, {dim}], got {:?}",
            patches.dim()
        )));
    }
    check_pos(pos_embed, n, dim)?;
    let mut tokens = Array2::<F>::zeros((1 + mask.t_idx.len(), dim));
    let cls_row = &cls_token.to_owned() + &pos_embed.row(0);
    tokens.row_mut(0).assign(&cls_row);
    for (slot, &i) in mask.t_idx.iter().enumerate() {
        let token = &patches.row(i) + &pos_embed.row(i + 1);
        tokens.row_mut(1 + slot).assign(&token);
    }
    Ok(tokens)
}

fn check_pos<F: Scalar>(pos_embed: &ArrayView2<F>, n: usize, dim: usize) -> Result<()> {
    if pos_embed.dim() != (n + 1, dim) {
        return Err(Error::contract(format!(
            "positional table must be [{}, {dim}], got {:?}",
            n + 1,
            pos_embed.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};
    use crate::views::trimask::{sample_trimask, MaskRatios};
    use ndarray::{Array1, Array2};

    fn tagged(n: usize, dim: usize, base: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, dim), |(i, j)| base + i as f64 + j as f64 * 1e-3)
    }

    #[test]
    fn rows_carry_their_grid_positions() {
        let (n, dim) = (16, 4);
        let mut rng = stream(0, purpose::TRIMASK, 0, 0);
        let mask = sample_trimask(n, &MaskRatios::default(), &mut rng).unwrap();
        let student = tagged(n, dim, 100.0);
        let teacher = tagged(n, dim, 200.0);
        let raw = tagged(n, 6, 300.0);
        let cls = Array1::from_elem(dim, 0.5);
        let t_cls = Array1::from_elem(dim, 0.75);
        let mask_token = Array1::from_elem(dim, -0.25);
        let pos = tagged(n + 1, dim, 1000.0);
        let t_pos = tagged(n + 1, dim, 2000.0);

        let out = assemble_student(
            &student.view(),
            &raw.view(),
            &mask,
            &cls.view(),
            &mask_token.view(),
            &pos.view(),
        )
        .unwrap();
        let t_tokens =
            assemble_teacher(&teacher.view(), &mask, &t_cls.view(), &t_pos.view()).unwrap();

        assert_eq!(out.tokens.nrows(), 1 + mask.s_idx.len() + mask.l_idx.len());
        assert_eq!(out.visible, 1 + mask.s_idx.len());
        assert_eq!(t_tokens.nrows(), 1 + mask.t_idx.len());

        let expect_cls = &cls + &pos.row(0);
        assert_eq!(out.tokens.row(0), expect_cls.view());
        let expect_t_cls = &t_cls + &t_pos.row(0);
        assert_eq!(t_tokens.row(0), expect_t_cls.view());
        for (slot, &i) in mask.s_idx.iter().enumerate() {
            let expect = &student.row(i) + &pos.row(i + 1);
            assert_eq!(out.tokens.row(1 + slot), expect.view());
        }
        for (slot, &i) in mask.l_idx.iter().enumerate() {
            let expect = &mask_token + &pos.row(i + 1);
            assert_eq!(out.tokens.row(out.visible + slot), expect.view());
            assert_eq!(out.targets.row(slot), raw.row(i));
        }
        for (slot, &i) in mask.t_idx.iter().enumerate() {
            let expect = &teacher.row(i) + &t_pos.row(i + 1);
            assert_eq!(t_tokens.row(1 + slot), expect.view());
        }
    }

    #[test]
    fn token_count_bookkeeping_matches_part_sizes() {
        // On a 196-patch grid at the default ratios the student sequence has
        // 99 rows and the teacher sequence has 99 rows.
        let (n, dim) = (196, 2);
        let mut rng = stream(1, purpose::TRIMASK, 0, 0);
        let mask = sample_trimask(n, &MaskRatios::default(), &mut rng).unwrap();
        let patches = tagged(n, dim, 0.0);
        let raw = tagged(n, 3, 0.0);
        let cls = Array1::zeros(dim);
        let mask_token = Array1::zeros(dim);
        let pos = Array2::zeros((n + 1, dim));
        let out = assemble_student(
            &patches.view(),
            &raw.view(),
            &mask,
            &cls.view(),
            &mask_token.view(),
            &pos.view(),
        )
        .unwrap();
        let t_tokens =
            assemble_teacher(&patches.view(), &mask, &cls.view(), &pos.view()).unwrap();
        assert_eq!(out.tokens.nrows(), 99);
        assert_eq!(t_tokens.nrows(), 99);
        assert_eq!(out.targets.nrows(), 39);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let mut rng = stream(2, purpose::TRIMASK, 0, 0);
        let mask = sample_trimask(16, &MaskRatios::default(), &mut rng).unwrap();
        let patches = tagged(16, 4, 0.0);
        let raw = tagged(16, 3, 0.0);
        let cls = Array1::<f64>::zeros(4);
        let mask_token = Array1::<f64>::zeros(4);
        let bad_pos = Array2::<f64>::zeros((16, 4));
        let err = assemble_student(
            &patches.view(),
            &raw.view(),
            &mask,
            &cls.view(),
            &mask_token.view(),
            &bad_pos.view(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err =
            assemble_teacher(&patches.view(), &mask, &cls.view(), &bad_pos.view()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_scatters_exactly_where_forward_gathered() {
        let (n, dim) = (16, 4);
        let mut rng = stream(3, purpose::TRIMASK, 0, 0);
        let mask = sample_trimask(n, &MaskRatios::default(), &mut rng).unwrap();
        let t = 1 + mask.s_idx.len() + mask.l_idx.len();
        let d_tokens = tagged(t, dim, 10.0);
        let mut d_cls = Array1::<f64>::zeros(dim);
        let mut d_mask_token = Array1::<f64>::zeros(dim);
        let mut d_pos = Array2::<f64>::zeros((n + 1, dim));
        let d_patches = assemble_student_backward(
            &d_tokens.view(),
            &mask,
            &mut d_cls,
            &mut d_mask_token,
            &mut d_pos,
        );

        assert_eq!(d_cls, d_tokens.row(0).to_owned());
        assert_eq!(d_pos.row(0), d_tokens.row(0));
        for (slot, &i) in mask.s_idx.iter().enumerate() {
            assert_eq!(d_patches.row(slot), d_tokens.row(1 + slot));
            assert_eq!(d_pos.row(i + 1), d_tokens.row(1 + slot));
        }
        let mut mask_sum = Array1::<f64>::zeros(dim);
        for (slot, &i) in mask.l_idx.iter().enumerate() {
            let row = d_tokens.row(1 + mask.s_idx.len() + slot);
            mask_sum += &row;
            assert_eq!(d_pos.row(i + 1), row);
        }
        assert_eq!(d_mask_token, mask_sum);
        // Positions never touched by this sample receive nothing.
        let untouched: Vec<usize> = mask.t_idx.iter().map(|&i| i + 1).collect();
        for i in untouched {
            assert!(d_pos.row(i).iter().all(|&v| v == 0.0));
        }
    }
}
