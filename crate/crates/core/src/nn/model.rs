//! The fused network: auxiliary image CNN, LiDAR channel expansion, feature
//! warp, a compact encoder-decoder with skip aggregation, and the 1x1
//! prediction head.
//!
//! The auxiliary network is three residual blocks (two 3x3 convolutions with
//! a 1x1 stride-2 projection shortcut), each halving resolution, so its
//! output sits at 1/8 scale. The primary network downsamples three times and
//! aggregates back up with skip concatenations; the head emits 6 class logits
//! and 6 box parameters per range-image cell.

use super::conv::Conv2d;
use super::ops::{
    add_into, concat_channels, relu, relu_backward, split_channels, upsample2x,
    upsample2x_backward,
};
use crate::error::{CoreError, Result};
use crate::fusion::{rescale_mapping, warp_backward, warp_features, FeatureMap, PixelMapping};
use crate::rangeimage::{RangeImage, CH_AZIMUTH, CH_HEIGHT, CH_INTENSITY, CH_OCCUPANCY, CH_RANGE};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

pub const NUM_CLASSES: usize = 6;
pub const BOX_PARAMS: usize = 6;

/// Channel widths of the network; everything else about the architecture is
/// fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Output channels of the three auxiliary residual blocks. The last entry
    /// is also the LiDAR expansion width so both sensors contribute equally.
    pub aux_channels: [usize; 3],
    /// Channels of the three encoder stages of the primary network.
    pub primary_channels: [usize; 3],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            aux_channels: [16, 24, 32],
            primary_channels: [32, 48, 64],
        }
    }
}

impl NetworkConfig {
    pub fn image_feature_channels(&self) -> usize {
        self.aux_channels[2]
    }
}

/// Mutable view of one named parameter tensor and its gradient.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a mut Tensor<T>,
}

fn push_conv<'a, T: Scalar>(out: &mut Vec<ParamRef<'a, T>>, name: &str, conv: &'a mut Conv2d<T>) {
    let Conv2d { w, b, gw, gb, .. } = conv;
    out.push(ParamRef {
        name: format!("{name}.w"),
        value: w,
        grad: gw,
    });
    out.push(ParamRef {
        name: format!("{name}.b"),
        value: b,
        grad: gb,
    });
}

/// Residual block: stride-2 3x3, 3x3, and a stride-2 1x1 projection shortcut.
#[derive(Debug, Clone)]
pub struct ResBlock<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub proj: Conv2d<T>,
}

pub struct ResBlockCache<T> {
    x: Tensor<T>,
    h1: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Scalar> ResBlock<T> {
    fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        ResBlock {
            conv1: Conv2d::new(in_ch, out_ch, 3, 2, 1, rng),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, rng),
            proj: Conv2d::new(in_ch, out_ch, 1, 2, 0, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResBlockCache<T>)> {
        let h1 = relu(&self.conv1.forward(x)?);
        let mut z = self.conv2.forward(&h1)?;
        let sc = self.proj.forward(x)?;
        add_into(&mut z, &sc);
        let out = relu(&z);
        Ok((
            out.clone(),
            ResBlockCache {
                x: x.clone(),
                h1,
                out,
            },
        ))
    }

    fn backward(&mut self, cache: &ResBlockCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let gz = relu_backward(&cache.out, grad_out);
        let g_h1 = self.conv2.backward(&cache.h1, &gz)?;
        let g_a1 = relu_backward(&cache.h1, &g_h1);
        let mut gx = self.conv1.backward(&cache.x, &g_a1)?;
        let gx_proj = self.proj.backward(&cache.x, &gz)?;
        add_into(&mut gx, &gx_proj);
        Ok(gx)
    }
}

/// Image feature extractor: three residual blocks, 1/8 output scale.
#[derive(Debug, Clone)]
pub struct AuxNet<T> {
    pub blocks: [ResBlock<T>; 3],
}

pub struct AuxCache<T> {
    blocks: [ResBlockCache<T>; 3],
}

impl<T: Scalar> AuxNet<T> {
    fn new(cfg: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let [c1, c2, c3] = cfg.aux_channels;
        AuxNet {
            blocks: [
                ResBlock::new(3, c1, rng),
                ResBlock::new(c1, c2, rng),
                ResBlock::new(c2, c3, rng),
            ],
        }
    }

    pub fn forward(&self, rgb: &Tensor<T>) -> Result<(FeatureMap<T>, AuxCache<T>)> {
        let (h, w, c) = rgb.dims3();
        if c != 3 {
            return Err(CoreError::Contract(format!("rgb must have 3 channels, got {c}")));
        }
        if h % 8 != 0 || w % 8 != 0 {
            return Err(CoreError::Contract(format!(
                "image dims {h}x{w} must be divisible by 8"
            )));
        }
        let (f1, c1) = self.blocks[0].forward(rgb)?;
        let (f2, c2) = self.blocks[1].forward(&f1)?;
        let (f3, c3) = self.blocks[2].forward(&f2)?;
        Ok((
            FeatureMap::new(f3, (8.0, 8.0)),
            AuxCache {
                blocks: [c1, c2, c3],
            },
        ))
    }

    fn backward(&mut self, cache: &AuxCache<T>, grad: &Tensor<T>) -> Result<()> {
        let g2 = self.blocks[2].backward(&cache.blocks[2], grad)?;
        let g1 = self.blocks[1].backward(&cache.blocks[1], &g2)?;
        let _ = self.blocks[0].backward(&cache.blocks[0], &g1)?;
        Ok(())
    }

    fn visit<'a>(&'a mut self, out: &mut Vec<ParamRef<'a, T>>) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("aux.block{}", i + 1);
            push_conv(out, &format!("{p}.conv1"), &mut b.conv1);
            push_conv(out, &format!("{p}.conv2"), &mut b.conv2);
            push_conv(out, &format!("{p}.proj"), &mut b.proj);
        }
    }
}

/// Encoder-decoder over the fused range-view channels: three stride-2 stages
/// down, three nearest-upsample stages back, each aggregating its skip by
/// concatenation.
#[derive(Debug, Clone)]
pub struct PrimaryNet<T> {
    pub down1: Conv2d<T>,
    pub refine1: Conv2d<T>,
    pub down2: Conv2d<T>,
    pub refine2: Conv2d<T>,
    pub down3: Conv2d<T>,
    pub refine3: Conv2d<T>,
    pub up3: Conv2d<T>,
    pub up2: Conv2d<T>,
    pub up1: Conv2d<T>,
}

pub struct PrimaryCache<T> {
    x: Tensor<T>,
    r1: Tensor<T>,
    d1: Tensor<T>,
    r3: Tensor<T>,
    d2: Tensor<T>,
    r5: Tensor<T>,
    d3: Tensor<T>,
    c3: Tensor<T>,
    e3: Tensor<T>,
    c2: Tensor<T>,
    e2: Tensor<T>,
    c1: Tensor<T>,
    e1: Tensor<T>,
}

impl<T: Scalar> PrimaryNet<T> {
    fn new(in_ch: usize, cfg: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let [p1, p2, p3] = cfg.primary_channels;
        PrimaryNet {
            down1: Conv2d::new(in_ch, p1, 3, 2, 1, rng),
            refine1: Conv2d::new(p1, p1, 3, 1, 1, rng),
            down2: Conv2d::new(p1, p2, 3, 2, 1, rng),
            refine2: Conv2d::new(p2, p2, 3, 1, 1, rng),
            down3: Conv2d::new(p2, p3, 3, 2, 1, rng),
            refine3: Conv2d::new(p3, p3, 3, 1, 1, rng),
            up3: Conv2d::new(p3 + p2, p2, 3, 1, 1, rng),
            up2: Conv2d::new(p2 + p1, p1, 3, 1, 1, rng),
            up1: Conv2d::new(p1 + in_ch, p1, 1, 1, 0, rng),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PrimaryCache<T>)> {
        let (h, w, _) = x.dims3();
        if h % 8 != 0 || w % 8 != 0 {
            return Err(CoreError::Contract(format!(
                "range view dims {h}x{w} must be divisible by 8"
            )));
        }
        let r1 = relu(&self.down1.forward(x)?);
        let d1 = relu(&self.refine1.forward(&r1)?);
        let r3 = relu(&self.down2.forward(&d1)?);
        let d2 = relu(&self.refine2.forward(&r3)?);
        let r5 = relu(&self.down3.forward(&d2)?);
        let d3 = relu(&self.refine3.forward(&r5)?);

        let c3 = concat_channels(&upsample2x(&d3), &d2);
        let e3 = relu(&self.up3.forward(&c3)?);
        let c2 = concat_channels(&upsample2x(&e3), &d1);
        let e2 = relu(&self.up2.forward(&c2)?);
        let c1 = concat_channels(&upsample2x(&e2), x);
        let e1 = relu(&self.up1.forward(&c1)?);
        Ok((
            e1.clone(),
            PrimaryCache {
                x: x.clone(),
                r1,
                d1,
                r3,
                d2,
                r5,
                d3,
                c3,
                e3,
                c2,
                e2,
                c1,
                e1,
            },
        ))
    }

    fn backward(&mut self, cache: &PrimaryCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let [p1, p2, p3] = [
            self.down1.out_ch,
            self.down2.out_ch,
            self.down3.out_ch,
        ];

        let g_a9 = relu_backward(&cache.e1, grad_out);
        let g_c1 = self.up1.backward(&cache.c1, &g_a9)?;
        let (g_u1, g_x_skip) = split_channels(&g_c1, p1);
        let (eh, ew, _) = cache.e2.dims3();
        let g_e2 = upsample2x_backward(&g_u1, eh, ew);

        let g_a8 = relu_backward(&cache.e2, &g_e2);
        let g_c2 = self.up2.backward(&cache.c2, &g_a8)?;
        let (g_u2, g_d1a) = split_channels(&g_c2, p2);
        let (eh, ew, _) = cache.e3.dims3();
        let g_e3 = upsample2x_backward(&g_u2, eh, ew);

        let g_a7 = relu_backward(&cache.e3, &g_e3);
        let g_c3 = self.up3.backward(&cache.c3, &g_a7)?;
        let (g_u3, g_d2a) = split_channels(&g_c3, p3);
        let (dh, dw, _) = cache.d3.dims3();
        let g_d3 = upsample2x_backward(&g_u3, dh, dw);

        let g_a6 = relu_backward(&cache.d3, &g_d3);
        let g_r5 = self.refine3.backward(&cache.r5, &g_a6)?;
        let g_a5 = relu_backward(&cache.r5, &g_r5);
        let mut g_d2 = self.down3.backward(&cache.d2, &g_a5)?;
        add_into(&mut g_d2, &g_d2a);

        let g_a4 = relu_backward(&cache.d2, &g_d2);
        let g_r3 = self.refine2.backward(&cache.r3, &g_a4)?;
        let g_a3 = relu_backward(&cache.r3, &g_r3);
        let mut g_d1 = self.down2.backward(&cache.d1, &g_a3)?;
        add_into(&mut g_d1, &g_d1a);

        let g_a2 = relu_backward(&cache.d1, &g_d1);
        let g_r1 = self.refine1.backward(&cache.r1, &g_a2)?;
        let g_a1 = relu_backward(&cache.r1, &g_r1);
        let mut g_x = self.down1.backward(&cache.x, &g_a1)?;
        add_into(&mut g_x, &g_x_skip);
        Ok(g_x)
    }

    fn visit<'a>(&'a mut self, out: &mut Vec<ParamRef<'a, T>>) {
        push_conv(out, "primary.down1", &mut self.down1);
        push_conv(out, "primary.refine1", &mut self.refine1);
        push_conv(out, "primary.down2", &mut self.down2);
        push_conv(out, "primary.refine2", &mut self.refine2);
        push_conv(out, "primary.down3", &mut self.down3);
        push_conv(out, "primary.refine3", &mut self.refine3);
        push_conv(out, "primary.up3", &mut self.up3);
        push_conv(out, "primary.up2", &mut self.up2);
        push_conv(out, "primary.up1", &mut self.up1);
    }
}

/// Per-cell class logits and box parameters
/// `(dx, dy, log_w, log_l, sin_yaw, cos_yaw)`.
#[derive(Debug, Clone)]
pub struct PerPointPrediction<T> {
    pub class_logits: Tensor<T>,
    pub box_params: Tensor<T>,
}

/// Everything needed to run the fused backward pass.
pub struct FusedCache<T> {
    aux: Option<(AuxCache<T>, PixelMapping, (usize, usize, usize))>,
    lidar_input: Tensor<T>,
    primary: PrimaryCache<T>,
    feats: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct FusedModel<T> {
    pub cfg: NetworkConfig,
    pub aux: AuxNet<T>,
    pub expand: Conv2d<T>,
    pub primary: PrimaryNet<T>,
    pub head: Conv2d<T>,
}

impl<T: Scalar> FusedModel<T> {
    pub fn new(cfg: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let cimg = cfg.image_feature_channels();
        FusedModel {
            cfg: cfg.clone(),
            aux: AuxNet::new(cfg, rng),
            expand: Conv2d::new(5, cimg, 3, 1, 1, rng),
            primary: PrimaryNet::new(2 * cimg, cfg, rng),
            head: Conv2d::new(cfg.primary_channels[0], NUM_CLASSES + BOX_PARAMS, 1, 1, 0, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        let mut m = self.clone();
        m.params_mut().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Every parameter with its gradient, in a fixed order (checkpoint and
    /// optimizer order).
    pub fn params_mut(&mut self) -> Vec<ParamRef<'_, T>> {
        let mut refs = Vec::new();
        self.aux.visit(&mut refs);
        push_conv(&mut refs, "expand", &mut self.expand);
        self.primary.visit(&mut refs);
        push_conv(&mut refs, "head", &mut self.head);
        refs
    }

    pub fn visit_params(&mut self, f: &mut impl FnMut(ParamRef<'_, T>)) {
        for r in self.params_mut() {
            f(r);
        }
    }

    /// Forward through aux CNN, warp, expansion, concat, primary and head.
    /// An all-absent mapping skips the image path entirely; the warped
    /// features are exact zeros either way.
    pub fn forward(
        &self,
        lidar_input: &Tensor<T>,
        rgb: &Tensor<T>,
        mapping: &PixelMapping,
    ) -> Result<(PerPointPrediction<T>, FusedCache<T>)> {
        let (lh, lw, lc) = lidar_input.dims3();
        if lc != 5 {
            return Err(CoreError::Contract(format!(
                "lidar input must have 5 channels, got {lc}"
            )));
        }
        let cimg = self.cfg.image_feature_channels();

        let (warped, aux_cache) = if mapping.present_count() == 0 {
            (Tensor::zeros(&[lh, lw, cimg]), None)
        } else {
            let (feat, cache) = self.aux.forward(rgb)?;
            let m8 = rescale_mapping(mapping, feat.scale.0, feat.scale.1)?;
            let warped = warp_features(&feat, &m8)?;
            let shape = (feat.height(), feat.width(), feat.channels());
            (warped.tensor, Some((cache, m8, shape)))
        };

        let expanded = self.expand.forward(lidar_input)?;
        let cat = concat_channels(&expanded, &warped);
        let (feats, primary_cache) = self.primary.forward(&cat)?;
        let out = self.head.forward(&feats)?;
        let (class_logits, box_params) = split_channels(&out, NUM_CLASSES);

        Ok((
            PerPointPrediction {
                class_logits,
                box_params,
            },
            FusedCache {
                aux: aux_cache,
                lidar_input: lidar_input.clone(),
                primary: primary_cache,
                feats,
            },
        ))
    }

    /// Backward from per-cell logit and box cotangents; accumulates into all
    /// parameter gradients (including the auxiliary network through the warp
    /// adjoint).
    pub fn backward(
        &mut self,
        cache: &FusedCache<T>,
        grad_logits: &Tensor<T>,
        grad_box: &Tensor<T>,
    ) -> Result<()> {
        let g_out = concat_channels(grad_logits, grad_box);
        let g_feats = self.head.backward(&cache.feats, &g_out)?;
        let g_cat = self.primary.backward(&cache.primary, &g_feats)?;
        let cimg = self.cfg.image_feature_channels();
        let (g_expanded, g_warped) = split_channels(&g_cat, cimg);
        let _ = self.expand.backward(&cache.lidar_input, &g_expanded)?;
        if let Some((aux_cache, m8, cam_shape)) = &cache.aux {
            let g_feat = warp_backward(&g_warped, m8, *cam_shape)?;
            self.aux.backward(aux_cache, &g_feat)?;
        }
        Ok(())
    }
}

/// Network input from a range image: occupied cells carry
/// `[r/35 - 1, z/10, theta/pi, 2e - 1, 1]`, unoccupied cells are all zeros.
pub fn range_image_to_input<T: Scalar>(img: &RangeImage) -> Tensor<T> {
    let (h, w) = (img.height(), img.width());
    let mut out = Tensor::zeros(&[h, w, 5]);
    for row in 0..h {
        for col in 0..w {
            if !img.is_occupied(row, col) {
                continue;
            }
            let base = out.data_mut();
            let idx = (row * w + col) * 5;
            base[idx] = T::from_f64(img.channel(row, col, CH_RANGE) / 35.0 - 1.0);
            base[idx + 1] = T::from_f64(img.channel(row, col, CH_HEIGHT) / 10.0);
            base[idx + 2] = T::from_f64(img.channel(row, col, CH_AZIMUTH) / std::f64::consts::PI);
            base[idx + 3] = T::from_f64(2.0 * img.channel(row, col, CH_INTENSITY) - 1.0);
            base[idx + 4] = T::from_f64(img.channel(row, col, CH_OCCUPANCY));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> NetworkConfig {
        NetworkConfig {
            aux_channels: [2, 3, 4],
            primary_channels: [4, 5, 6],
        }
    }

    #[test]
    fn aux_output_is_one_eighth_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = FusedModel::<f32>::new(&NetworkConfig::default(), &mut rng);
        let rgb = Tensor::zeros(&[64, 64, 3]);
        let (feat, _) = model.aux.forward(&rgb).unwrap();
        assert_eq!(
            (feat.height(), feat.width(), feat.channels()),
            (8, 8, 32)
        );
        assert_eq!(feat.scale, (8.0, 8.0));

        let odd = Tensor::<f32>::zeros(&[60, 64, 3]);
        assert!(model.aux.forward(&odd).is_err());
    }

    #[test]
    fn aux_paper_shape() {
        // 640x1920 RGB -> 80x240x32 feature map after three halvings.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = NetworkConfig {
            aux_channels: [16, 24, 32],
            primary_channels: [4, 5, 6],
        };
        let model = FusedModel::<f32>::new(&cfg, &mut rng);
        let rgb = Tensor::zeros(&[640, 1920, 3]);
        let (feat, _) = model.aux.forward(&rgb).unwrap();
        assert_eq!(
            (feat.height(), feat.width(), feat.channels()),
            (80, 240, 32)
        );
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_aux_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = FusedModel::<f32>::new(&tiny_cfg(), &mut rng);
        let rgb = Tensor::zeros(&[16, 16, 3]);
        let (feat, _) = model.aux.forward(&rgb).unwrap();
        assert!(feat.tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fused_output_shapes_match_range_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = FusedModel::<f32>::new(&tiny_cfg(), &mut rng);
        let lidar = Tensor::zeros(&[16, 32, 5]);
        let rgb = Tensor::zeros(&[16, 24, 3]);
        let mapping = PixelMapping::all_absent(32, 16);
        let (pred, _) = model.forward(&lidar, &rgb, &mapping).unwrap();
        assert_eq!(pred.class_logits.shape(), &[16, 32, 6]);
        assert_eq!(pred.box_params.shape(), &[16, 32, 6]);
    }

    #[test]
    fn param_visit_order_is_stable_and_counts_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = FusedModel::<f32>::new(&tiny_cfg(), &mut rng);
        let mut names = Vec::new();
        model.visit_params(&mut |p| names.push(p.name.clone()));
        assert_eq!(names.len(), 2 * (9 + 1 + 9 + 1));
        assert_eq!(names[0], "aux.block1.conv1.w");
        assert!(names.contains(&"expand.w".to_string()));
        assert_eq!(names.last().unwrap(), "head.b");
    }
}
