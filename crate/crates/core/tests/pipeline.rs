use crbm_core::complex::{SeededRng, C64};
use crbm_core::crbm::TrainConfig;
use crbm_core::optim::{CsaConfig, OptimizerConfig};
use crbm_core::persistence::{load_any_model, load_basis, read_wav, save_basis, save_crbm, write_wav, AnyModel};
use crbm_core::pipeline::{fit_basis, model_input, reconstruct, static_features, train_model, Method, PipelineConfig};
use crbm_core::signal::Waveform;
use crbm_core::synth::{speech_like, SpeechSpec};

fn train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 20,
        cd_steps: 1,
        optimizer: OptimizerConfig::Csa(CsaConfig {
            alpha: C64::new(0.01, 0.0),
            momentum: 0.1,
        }),
        seed: 4,
        log_interval: 0,
    }
}

/// Everything a reconstruction depends on survives a trip through disk.
#[test]
fn reloaded_artifacts_reconstruct_identically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SpeechSpec {
        seconds: 1.0,
        ..SpeechSpec::default()
    };
    let samples = speech_like(&spec, &mut SeededRng::new(4, 0)).unwrap();
    let wav_path = dir.path().join("in.wav");
    write_wav(&wav_path, &Waveform::new(samples, 16_000).unwrap()).unwrap();
    let wave = read_wav(&wav_path).unwrap();

    let cfg = PipelineConfig::default();
    let method = Method::CrbmT;
    let basis = fit_basis(std::slice::from_ref(&wave), &cfg, method, 12, true).unwrap();
    let input = model_input(&static_features(&wave, &basis, &cfg, method).unwrap(), method).unwrap();
    let (model, log) = train_model(method.family().unwrap(), &input, 16, &train_cfg()).unwrap();
    assert_eq!(log.len(), 3);
    let AnyModel::Crbm(params) = &model else {
        panic!("expected a CRBM")
    };

    save_crbm(&dir.path().join("m.crbm"), params).unwrap();
    save_basis(&dir.path().join("b.cpca"), &basis).unwrap();
    let model2 = load_any_model(&dir.path().join("m.crbm")).unwrap();
    let basis2 = load_basis(&dir.path().join("b.cpca")).unwrap();

    let a = reconstruct(&wave, method, Some(&model), &basis, &cfg).unwrap();
    let b = reconstruct(&wave, method, Some(&model2), &basis2, &cfg).unwrap();
    assert_eq!(a.waveform.samples, b.waveform.samples);
    assert_eq!(a.metrics, b.metrics);
    assert!(a.metrics.psnr_ms.is_finite() && a.metrics.lsd > 0.0);
}
