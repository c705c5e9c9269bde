//! Manual timing probe (run with `cargo test --test perf_probe -- --nocapture --ignored`).

use rvfuse_core::nn::{prepare_frame, NetworkConfig, TrainConfig, TrainMode, Trainer};
use rvfuse_core::synth::{generate_scene, make_frame, SceneConfig, SensorRig};
use std::time::Instant;

#[test]
#[ignore]
fn probe_step_time() {
    let scene = generate_scene(&SceneConfig::default(), 1).unwrap();
    let rig = SensorRig::standard(384, 128, 768); // crop -> 192 wide range image
    let frame = make_frame(&scene, &rig, 0.0).unwrap();
    println!(
        "range image {}x{}, camera {}x{}",
        frame.range_image.width(),
        frame.range_image.height(),
        frame.calibration.image_width,
        frame.calibration.image_height
    );
    let prepared = prepare_frame::<f32>(&frame, TrainMode::Fused).unwrap();
    let cfg = TrainConfig {
        network: NetworkConfig {
            aux_channels: [6, 9, 12],
            primary_channels: [8, 12, 16],
        },
        batch_size: 4,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(cfg);
    let batch = vec![&prepared, &prepared, &prepared, &prepared];
    // warmup
    trainer.step_batch(&batch).unwrap();
    let t0 = Instant::now();
    let n = 10;
    for _ in 0..n {
        trainer.step_batch(&batch).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    println!("fused step (batch 4): {:.1} ms -> 2000 steps = {:.1} min", dt * 1e3, dt * 2000.0 / 60.0);

    let prepared_lo = prepare_frame::<f32>(&frame, TrainMode::LidarOnly).unwrap();
    let batch_lo = vec![&prepared_lo, &prepared_lo, &prepared_lo, &prepared_lo];
    let mut trainer_lo = Trainer::<f32>::new(TrainConfig {
        network: NetworkConfig {
            aux_channels: [6, 9, 12],
            primary_channels: [8, 12, 16],
        },
        batch_size: 4,
        mode: TrainMode::LidarOnly,
        ..TrainConfig::default()
    });
    trainer_lo.step_batch(&batch_lo).unwrap();
    let t0 = Instant::now();
    for _ in 0..n {
        trainer_lo.step_batch(&batch_lo).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    println!("lidar-only step (batch 4): {:.1} ms", dt * 1e3);
}

#[test]
#[ignore]
fn probe_frame_gen_time() {
    let rig = SensorRig::standard(384, 128, 768);
    let t0 = Instant::now();
    let n = 10;
    for i in 0..n {
        let scene = generate_scene(&SceneConfig::default(), i).unwrap();
        let _ = make_frame(&scene, &rig, 0.0).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    println!("frame generation: {:.1} ms -> 600 frames = {:.1} s", dt * 1e3, dt * 600.0);
}
