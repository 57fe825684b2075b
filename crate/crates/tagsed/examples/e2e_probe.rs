// probe: criterion-6 style two-stage vs stage-2-only comparison
use std::time::Instant;
use tagsed::cli::{cmd_evaluate, cmd_infer_pseudo, cmd_synthdata, cmd_train_stage1, cmd_train_stage2};
use tagsed::config::RunConfig;

fn cfg_for(corpus: &std::path::Path, out: &std::path::Path, seed: u64, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::desk_defaults();
    cfg.out_dir = out.to_path_buf();
    cfg.audio_root = corpus.join("audio");
    cfg.strong_manifest = corpus.join("strong.tsv");
    cfg.weak_manifest = corpus.join("weak.tsv");
    cfg.unlabeled_manifest = corpus.join("unlabeled.tsv");
    cfg.validation_manifest = corpus.join("validation.tsv");
    cfg.feature_cache_dir = Some(corpus.join("feature_cache"));
    cfg.classes = tagsed::synth::class_names(3);
    cfg.seed = seed;
    cfg.threads = 4;
    cfg.stage1.epochs = 12;
    cfg.stage1.warmup_epochs = 2;
    cfg.stage1.ict = false;
    cfg.stage1.width_div = 12;
    cfg.stage1.pooling = tagsed::config::PoolingKind::Attention;
    cfg.stage2.epochs = epochs;
    cfg.stage2.warmup_epochs = 2;
    cfg.stage2.ict = false;
    cfg.stage2.conv_filters = vec![4, 8, 16, 16, 16, 16, 16];
    cfg.stage2.gru_hidden = 16;
    cfg
}

fn main() {
    let epochs: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(5);
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    cmd_synthdata(&corpus, 60, 3, 606).unwrap();
    for seed in [11u64, 12, 13] {
        let t0 = Instant::now();
        let out = dir.path().join(format!("two_{seed}"));
        let cfg = cfg_for(&corpus, &out, seed, epochs);
        let s1 = cmd_train_stage1(&cfg).unwrap();
        cmd_infer_pseudo(&cfg).unwrap();
        cmd_train_stage2(&cfg).unwrap();
        let (p1, p2) = cmd_evaluate(&cfg, None).unwrap();
        let t1 = Instant::now();
        let out = dir.path().join(format!("abl_{seed}"));
        let mut cfg = cfg_for(&corpus, &out, seed, epochs);
        cfg.stage2.allow_missing_pseudo = true;
        cmd_train_stage2(&cfg).unwrap();
        let (a1, a2) = cmd_evaluate(&cfg, None).unwrap();
        println!(
            "seed {seed}: two-stage {:.3} (s1F1 {:?}, {:.0}s) vs ablation {:.3} ({:.0}s)",
            p1 + p2, s1.best_metric, t1.duration_since(t0).as_secs_f64(), a1 + a2,
            t1.elapsed().as_secs_f64()
        );
    }
}
