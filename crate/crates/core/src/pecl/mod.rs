//! Pixel-and-embedding consistency loss with a Siamese embedding encoder.

mod encoder;
mod loss;

pub use encoder::{EncoderConfig, EncoderTrace, SiameseEncoder};
pub use loss::{
    contrastive_loss, embed_pair, embedding_distance, l2_normalize, mae_with_grad, mse_with_grad,
    pixel_loss, project_weight, weighted_total, ContrastiveMode, Distance, Embedding, LossParts,
    Pecl, PeclConfig, EMBED_DIMS, NORM_EPS,
};

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::Module;
    use crate::tensor::Tensor;

    fn patch(seed: u64, shape: &[usize]) -> Tensor<f64> {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| r.random::<f64>()).collect()).unwrap()
    }

    fn basis(i: usize, d: usize) -> Embedding {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        l2_normalize(&v)
    }

    #[test]
    fn contrastive_examples() {
        let m = ContrastiveMode::Margin;
        assert_eq!(contrastive_loss(0.0, 2.0, m), 4.0);
        assert_eq!(contrastive_loss(2.0, 2.0, m), 0.0);
        assert_eq!(contrastive_loss(3.7, 2.0, m), 0.0);
        assert_eq!(contrastive_loss(1.5, 2.0, m), 0.25);
        assert_eq!(contrastive_loss(1.5, 2.0, ContrastiveMode::SimilarPair), 2.25);
    }

    #[test]
    fn weighting_and_projection() {
        assert_eq!(weighted_total(1.0, 0.02, 0.25), 0.02);
        assert_eq!(weighted_total(0.0, 0.02, 0.25), 0.25);
        assert!((weighted_total(0.5, 0.02, 0.25) - 0.135).abs() < 1e-15);
        assert_eq!(project_weight(1.07), (1.0, 0.0));
        assert_eq!(project_weight(-0.2), (0.0, 1.0));
        assert_eq!(project_weight(0.37), (0.37, 0.63));
    }

    #[test]
    fn basis_vector_distances() {
        let (a, b) = (basis(0, 128), basis(1, 128));
        assert!((embedding_distance(&a, &b, Distance::Manhattan).unwrap() - 2.0).abs() < 1e-9);
        let e = embedding_distance(&a, &b, Distance::Euclidean).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(embedding_distance(&a, &a, Distance::Euclidean).unwrap(), 0.0);
        assert!(embedding_distance(&a, &basis(0, 64), Distance::Manhattan).is_err());
    }

    #[test]
    fn zero_vector_is_flagged() {
        let e = l2_normalize(&[0.0; 4]);
        assert!(e.degenerate);
        assert!(e.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pixel_loss_examples() {
        let hr = patch(1, &[3, 4, 4]);
        assert_eq!(pixel_loss(&hr, &hr).unwrap(), 0.0);
        let sr = hr.map(|v| v + 0.5);
        assert!((pixel_loss(&sr, &hr).unwrap() - 0.25).abs() < 1e-15);
        assert!(pixel_loss(&sr, &patch(1, &[3, 4, 5])).is_err());
    }

    #[test]
    fn embed_pair_is_shared_and_normalized() {
        let enc = SiameseEncoder::<f64>::new(EncoderConfig::tiny(), 64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = patch(3, &[3, 16, 16]);
        let b = patch(4, &[3, 16, 16]);
        let (x, y) = embed_pair(&a, &a, &enc).unwrap();
        assert_eq!(x, y);
        let (x, y) = embed_pair(&a, &b, &enc).unwrap();
        for e in [&x, &y] {
            let n: f64 = e.v.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
        let (y2, x2) = embed_pair(&b, &a, &enc).unwrap();
        let d1 = embedding_distance(&x, &y, Distance::Manhattan).unwrap();
        let d2 = embedding_distance(&y2, &x2, Distance::Manhattan).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn encoder_resizes_to_native_size() {
        let cfg = EncoderConfig {
            widths: [4, 4, 8, 8],
            input_size: Some(32),
        };
        let enc = SiameseEncoder::<f64>::new(cfg, 64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(enc.forward(&patch(5, &[2, 3, 12, 12])).unwrap().shape(), [2, 64]);
    }

    #[test]
    fn extreme_weights_select_one_term() {
        let mut pecl = Pecl::<f64>::new(
            PeclConfig {
                embed_dim: 64,
                ..PeclConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let sr = patch(6, &[2, 3, 16, 16]);
        let hr = patch(7, &[2, 3, 16, 16]);
        pecl.set_w_pixel(1.0);
        let p = pecl.evaluate(&sr, &hr).unwrap();
        assert_eq!(p.total, p.pixel);
        pecl.set_w_pixel(0.0);
        let p = pecl.evaluate(&sr, &hr).unwrap();
        assert_eq!(p.total, p.contrastive);
    }

    #[test]
    fn frozen_encoder_receives_no_gradient() {
        let cfg = PeclConfig {
            embed_dim: 64,
            freeze_siamese: true,
            ..PeclConfig::default()
        };
        let mut pecl = Pecl::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let sr = patch(6, &[1, 3, 16, 16]);
        let hr = patch(7, &[1, 3, 16, 16]);
        let (_, dsr) = pecl.loss_backward(&sr, &hr).unwrap();
        let mut total = 0.0;
        pecl.encoder.visit_params("", &mut |_, p| total += p.grad.data().iter().map(|v| v.abs()).sum::<f64>());
        assert_eq!(total, 0.0);
        assert!(dsr.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(PeclConfig::default().validate().is_ok());
        let bad = PeclConfig {
            embed_dim: 100,
            ..PeclConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PeclConfig {
            margin: 0.0,
            ..PeclConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
