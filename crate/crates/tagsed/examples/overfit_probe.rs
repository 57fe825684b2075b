// probe: stage-1 overfit trajectory on the 20-clip acceptance fixture
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagsed::augment::AugmentConfig;
use tagsed::features::{load_audio, logmel};
use tagsed::labels::manifest::parse_strong;
use tagsed::labels::weakify;
use tagsed::models::{AtBackbone, AtBackboneConfig};
use tagsed::synth::{generate, SynthConfig};
use tagsed::train::{train_stage1, AflConfig, SlotLoss, SslConfig, StageData, TrainClip, TrainConfig, Validation};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let warmup: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(8);

    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n_clips: 23, n_classes: 3, seed: 505, split: (0.9, 0.02, 0.02), ..SynthConfig::default() };
    let s = generate(dir.path(), &cfg).unwrap();
    let truth: Vec<_> = parse_strong(&s.strong_manifest, &s.vocab).unwrap().into_iter().take(20).collect();
    let clips: Vec<TrainClip> = truth.iter().map(|c| {
        let f = logmel(&load_audio(&s.audio_dir.join(&c.clip_id)).unwrap(), 64).unwrap().frames;
        TrainClip { clip_id: c.clip_id.clone(), features: f, clip_label: Some(weakify(c).multi_hot(3)), frame_label: None }
    }).collect();
    let data = StageData {
        slots: [Vec::new(), clips.clone(), Vec::new()],
        slot_loss: [SlotLoss::Clip, SlotLoss::Clip, SlotLoss::Unsupervised],
        validation: Validation::ClipF1(clips),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut model = AtBackbone::new(AtBackboneConfig::desk(3), &mut rng).unwrap();
    let tc = TrainConfig {
        epochs: 40, batch_size: batch,
        adam: tagsed::numerics::AdamConfig { lr, ..Default::default() },
        ssl: SslConfig { consistency_weight_max: 0.0, warmup_epochs: warmup, ..SslConfig::default() },
        loss: AflConfig::default(),
        augment: AugmentConfig::disabled(),
        bn_momentum: 0.1, seed: 52, threads: 4,
    };
    let out = train_stage1(&mut model, &data, &tc).unwrap();
    for e in out.log.iter() {
        if e.epoch % 4 == 0 || e.epoch >= 36 {
            println!("epoch {:2} sup {:.4} val {:?}", e.epoch, e.supervised_loss, e.val_metric);
        }
    }
    println!("best {:?} at {:?}", out.best_metric, out.best_epoch);
}
