// probe: stage-1 tagger quality and pseudo-label accuracy vs width/epochs
use std::collections::BTreeSet;
use std::time::Instant;
use tagsed::cli::{cmd_infer_pseudo, cmd_synthdata, cmd_train_stage1};
use tagsed::config::RunConfig;
use tagsed::labels::manifest::{parse_strong, parse_weak};
use tagsed::labels::weakify;
use tagsed::synth::{generate, SynthConfig};

fn main() {
    let width: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(16);
    let epochs: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    cmd_synthdata(&corpus, 60, 3, 606).unwrap();
    // regenerate the same corpus elsewhere to recover unlabeled truth
    let truth_dir = dir.path().join("truth");
    let s = generate(&truth_dir, &SynthConfig { n_clips: 60, n_classes: 3, seed: 606, ..SynthConfig::default() }).unwrap();
    let _ = s;
    let mut cfg = RunConfig::desk_defaults();
    cfg.out_dir = dir.path().join("run");
    cfg.audio_root = corpus.join("audio");
    cfg.strong_manifest = corpus.join("strong.tsv");
    cfg.weak_manifest = corpus.join("weak.tsv");
    cfg.unlabeled_manifest = corpus.join("unlabeled.tsv");
    cfg.validation_manifest = corpus.join("validation.tsv");
    cfg.feature_cache_dir = Some(corpus.join("feature_cache"));
    cfg.classes = tagsed::synth::class_names(3);
    cfg.seed = 11;
    cfg.threads = 4;
    cfg.stage1.width_div = width;
    cfg.stage1.epochs = epochs;
    cfg.stage1.warmup_epochs = 2;
    cfg.stage1.ict = false;
    cfg.stage1.augment = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(true);
    if std::env::args().nth(4).as_deref() == Some("attention") {
        cfg.stage1.pooling = tagsed::config::PoolingKind::Attention;
    }
    if let Some(th) = std::env::args().nth(5) {
        cfg.stage1.pseudo_threshold = th.parse().unwrap();
    }
    let t0 = Instant::now();
    let out = cmd_train_stage1(&cfg).unwrap();
    cmd_infer_pseudo(&cfg).unwrap();
    // pseudo accuracy vs hidden truth: clips 30..48 are the unlabeled split
    let vocab = tagsed::labels::Vocabulary::new(&cfg.classes).unwrap();
    let strong_truth = {
        // synth writes strong for first 18; unlabeled are 30..48; rebuild truth by regenerating all strong
        let all = generate(&dir.path().join("truth2"), &SynthConfig { n_clips: 60, n_classes: 3, seed: 606, split: (0.98, 0.0, 0.0), ..SynthConfig::default() }).unwrap();
        parse_strong(&all.strong_manifest, &vocab).unwrap()
    };
    let pseudo = parse_weak(&cfg.out_dir.join("pseudo_weak.tsv"), &vocab).unwrap();
    let mut exact = 0; let mut total = 0; let mut extra = 0; let mut missing = 0;
    for p in &pseudo {
        if let Some(t) = strong_truth.iter().find(|t| t.clip_id == p.clip_id) {
            let want: BTreeSet<usize> = weakify(t).classes;
            total += 1;
            if want == p.classes { exact += 1; }
            extra += p.classes.difference(&want).count();
            missing += want.difference(&p.classes).count();
        }
    }
    println!(
        "width {width} epochs {epochs}: valF1 {:?} pseudo exact {exact}/{total} (extra {extra}, missing {missing}) in {:.0}s",
        out.best_metric, t0.elapsed().as_secs_f64()
    );
}
