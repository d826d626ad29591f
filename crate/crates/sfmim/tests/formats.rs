use sfmim::checkpoint::{load_checkpoint, save_checkpoint};
use sfmim::image_io::load_field;
use sfmim::manifest::{build_manifest, load_manifest};
use sfmim::source::FsSource;
use sfmim::synth_io::{write_corpus, MANIFEST_FILE};
use sfmim_core::model::{init_model, ModelConfig};
use sfmim_core::rng::stream_rng;
use sfmim_core::synth::{render, SynthSpec};
use sfmim_core::trainer::{pretrain, TrainConfig};

fn small_spec() -> SynthSpec {
    let mut spec = SynthSpec::default();
    for (o, n) in spec.organs.iter_mut().zip([6, 3, 2]) {
        o.count = n;
    }
    spec
}

#[test]
fn written_corpus_scans_back_to_the_same_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let written = write_corpus(&spec, tmp.path()).unwrap();
    assert_eq!(written, spec.manifest().unwrap());
    let scanned = build_manifest(tmp.path()).unwrap();
    let listed = load_manifest(&tmp.path().join(MANIFEST_FILE)).unwrap();
    // Scanning sorts organ directories by name; the listing keeps corpus order.
    let mut by_name = listed.organs().to_vec();
    by_name.sort_by(|a, b| a.name.cmp(&b.name));
    assert_eq!(scanned.organs(), by_name.as_slice());
}

#[test]
fn stored_images_are_within_quantization_of_the_render() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    write_corpus(&spec, tmp.path()).unwrap();
    let stored = load_field(&tmp.path().join(spec.image_path(1, 2))).unwrap();
    let exact = render(&spec, 1, 2).unwrap();
    let worst = stored.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 0.5 / 255.0 + 1e-12, "{worst}");
}

#[test]
fn trained_state_survives_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let manifest = write_corpus(&spec, tmp.path()).unwrap();
    let model = ModelConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 8,
        depth: 1,
        decoder_depth: 1,
        heads: 2,
        num_classes: 0,
        ..ModelConfig::default()
    };
    let mut cfg = TrainConfig {
        steps: 3,
        batch_size: 2,
        warmup_steps: 1,
        ..TrainConfig::default()
    };
    cfg.augment.out_size = 16;
    cfg.freq.preserve = 4;
    cfg.freq.n_bands = 3;
    cfg.freq.n_select = 1;
    let init = init_model(&model, &mut stream_rng(0, 0)).unwrap();
    let mut source = FsSource::new(tmp.path());
    let (state, _) = pretrain(&cfg, init, 0, &manifest, &mut source, &mut ()).unwrap();
    let path = tmp.path().join("x.ckpt");
    save_checkpoint(&path, &state, 3).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.step, 3);
    assert_eq!(back.state, state);
}
