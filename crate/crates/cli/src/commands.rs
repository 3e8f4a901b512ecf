use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use hasr_core::align::{
    adapt as run_adapt, train as run_train, AdaptParams, CoactPrior, Dataset, FeatureConfig, FeatureExtractor,
    HmmTopology, LayerSchedule, Model, NetSpec, NetState, TrainParams,
};
use hasr_core::audio::{mixdown, parse_wav, resample_decimate, to_16k_mono, write_wav};
use hasr_core::g2p::{build_lexicon, bundled_rules, parse_lexicon_tsv, phones_to_string};
use hasr_core::pipeline::Recognizer;
use hasr_core::textnorm::{normalize_text, AbbrevTable, NormalizeOptions, NumberWordTable};
use hasr_core::vad::{detect_segments, gate_audio};
use hasr_core::{AudioBuffer, VadConfig};
use hasr_service::auth::{hash_password, DEFAULT_ITERATIONS};
use hasr_service::{AppState, ServiceConfig, Store, UserAccount};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::{
    AdaptArgs, AlignArgs, FeaturesArgs, Format, G2pArgs, ImportArgs, LexiconArgs, NormalizeArgs, PhoneFormat, ResampleArgs,
    Schedule, ServeArgs, TrainArgs, UseraddArgs, VadArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(data(path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(data(path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(data(path.display()))
}

fn read_audio(path: &Path) -> Result<AudioBuffer> {
    parse_wav(&read_bytes(path)?).map_err(data(path.display()))
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    let s = serde_json::to_string(value).map_err(data("json"))?;
    emit(&format!("{s}\n"))
}

fn emit(s: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(s.as_bytes()).and_then(|_| out.flush()).map_err(data("stdout"))
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_json(&read_text(path)?).map_err(data(path.display()))
}

fn load_prior(path: &Path) -> Result<CoactPrior> {
    CoactPrior::from_json(&read_text(path)?).map_err(data(path.display()))
}

pub fn resample(a: ResampleArgs) -> Result<()> {
    let audio = mixdown(&read_audio(&a.input)?);
    let out = resample_decimate(&audio, a.rate).map_err(data(a.input.display()))?;
    write_file(&a.out, &write_wav(&out))?;
    emit_json(&serde_json::json!({"frames": out.frames(), "sample_rate_hz": out.sample_rate_hz()}))
}

pub fn vad(a: VadArgs) -> Result<()> {
    let cfg = VadConfig::new(a.window, a.threshold, a.hangover).map_err(|e| CliError::Usage(e.to_string()))?;
    let audio = mixdown(&read_audio(&a.input)?);
    let segments = detect_segments(&audio, &cfg).map_err(data(a.input.display()))?;
    if let Some(path) = &a.gate {
        let gated = gate_audio(&audio, &segments).map_err(data(a.input.display()))?;
        write_file(path, &write_wav(&gated))?;
    }
    match a.format {
        Format::Json => emit_json(&segments),
        Format::Tsv => emit(&segments.iter().map(|s| format!("{}\t{}\n", s.start_sample, s.end_sample)).collect::<String>()),
    }
}

pub fn normalize(a: NormalizeArgs) -> Result<()> {
    let text = match &a.input {
        Some(p) => read_text(p)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(data("stdin"))?;
            s
        }
    };
    let numbers = NumberWordTable::bundled();
    let abbrev = match &a.abbrev {
        Some(Some(p)) => Some(AbbrevTable::from_tsv(&read_text(p)?).map_err(data(p.display()))?),
        Some(None) => Some(AbbrevTable::bundled()),
        None => None,
    };
    // Neither flag means both, with the bundled tables.
    let (numbers_on, abbrev) = match (a.numbers, abbrev) {
        (false, None) => (true, Some(AbbrevTable::bundled())),
        other => other,
    };
    let opts = NormalizeOptions { numbers: numbers_on.then_some(&numbers), abbreviations: abbrev.as_ref() };
    emit(&normalize_text(&text, opts))
}

pub fn g2p(a: G2pArgs) -> Result<()> {
    let rules = bundled_rules();
    let mut out = Vec::new();
    for w in &a.words {
        let phones = rules.g2p(w).map_err(data(w))?;
        out.push((w.clone(), phones_to_string(&phones)));
    }
    match a.format {
        PhoneFormat::Text => emit(&out.iter().map(|(_, p)| format!("{p}\n")).collect::<String>()),
        PhoneFormat::Json => emit_json(
            &out.iter().map(|(w, p)| serde_json::json!({"word": w, "phones": p})).collect::<Vec<_>>(),
        ),
    }
}

pub fn lexicon(a: LexiconArgs) -> Result<()> {
    let text = read_text(&a.input)?;
    let words: Vec<&str> = text.split_whitespace().collect();
    let lex = build_lexicon(bundled_rules(), &words);
    for f in &lex.failures {
        eprintln!("hasr: skipped {:?}: {}", f.word, f.error);
    }
    let body = match a.format {
        Format::Tsv => lex.to_tsv(),
        Format::Json => serde_json::to_string(&lex).map_err(data("json"))? + "\n",
    };
    match &a.out {
        Some(p) => write_file(p, body.as_bytes()),
        None => emit(&body),
    }
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    if a.label.is_some() && a.format != Format::Tsv {
        return Err(CliError::Usage("--label needs --format tsv".into()));
    }
    let audio = to_16k_mono(&read_audio(&a.input)?).map_err(data(a.input.display()))?;
    let cfg = FeatureConfig { window_samples: a.window, shift_samples: a.shift, bands: a.bands, ..Default::default() };
    let fx = FeatureExtractor::new(cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let feats = fx.extract(&audio).map_err(data(a.input.display()))?;
    let rows: Vec<Vec<f64>> = feats.frames.row_iter().map(|r| r.iter().copied().collect()).collect();
    match a.format {
        Format::Json => emit_json(&serde_json::json!({
            "frame_shift_samples": feats.frame_shift_samples,
            "window_samples": feats.window_samples,
            "frames": rows,
        })),
        Format::Tsv => {
            let prefix = a.label.map(|l| format!("{l}\t")).unwrap_or_default();
            emit(
                &rows
                    .iter()
                    .map(|r| format!("{prefix}{}\n", r.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")))
                    .collect::<String>(),
            )
        }
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let ds = Dataset::from_tsv(&read_text(&a.data)?).map_err(data(a.data.display()))?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{}: no training rows", a.data.display())));
    }
    let input = ds.features.ncols();
    let classes = ds.labels.iter().max().map_or(0, |m| m + 1);
    let outputs = match &a.phones {
        Some(p) => HmmTopology::new(p.clone()).map_err(|e| CliError::Usage(e.to_string()))?.total_states(),
        None => classes,
    };
    let spec = match &a.dims {
        Some(d) => {
            let dims: [usize; 8] =
                d.clone().try_into().map_err(|_| CliError::Usage(format!("--dims needs 8 widths, got {}", d.len())))?;
            let mut trainable = [true; 7];
            trainable[0] = false;
            NetSpec::new(dims, trainable).map_err(|e| CliError::Usage(e.to_string()))?
        }
        None => NetSpec::with_normalization(input, a.hidden, outputs),
    };
    if spec.input_dim() != input {
        return Err(CliError::Data(format!("rows have {input} features but the network takes {}", spec.input_dim())));
    }
    if classes > spec.output_dim() {
        return Err(CliError::Data(format!("label {} exceeds the {} outputs", classes - 1, spec.output_dim())));
    }
    let prior = match (&a.prior, a.lambda > 0.0) {
        (Some(p), true) => Some(load_prior(p)?),
        (None, true) => return Err(CliError::Usage("--lambda > 0 needs --prior".into())),
        (_, false) => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let net = NetState::with_input_normalization(spec, &ds.features, &mut rng).map_err(|e| CliError::Usage(e.to_string()))?;
    let params = TrainParams { epochs: a.epochs, learning_rate: a.lr, batch_size: a.batch, seed: a.seed, lambda: a.lambda };
    let (net, metrics) = run_train(&net, &ds, &params, prior.as_ref()).map_err(data("train"))?;
    for m in &metrics {
        eprintln!("epoch {:>4}  loss {:.6}  accuracy {:.4}", m.epoch, m.loss, m.accuracy);
    }
    if let Some(path) = &a.prior_out {
        let p = CoactPrior::collect(&net, &ds.features, &a.layers, a.ridge).map_err(|e| CliError::Usage(e.to_string()))?;
        write_file(path, p.to_json().as_bytes())?;
    }
    let features = (net.spec.input_dim() == FeatureConfig::default().bands).then(FeatureConfig::default);
    let model = Model { net, features, phones: a.phones.clone() };
    write_file(&a.out, model.to_json().as_bytes())?;
    emit_json(&serde_json::json!({"epochs": metrics}))
}

/// Feature rows with an optional `label<TAB>` prefix.
fn parse_rows(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut values = Vec::new();
    let mut dim = None;
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let feats = line.split_once('\t').map_or(line, |(_, f)| f);
        let row = feats
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(data(format!("{}:{}", path.display(), i + 1)))?;
        if *dim.get_or_insert(row.len()) != row.len() {
            return Err(CliError::Data(format!("{}:{}: inconsistent feature width", path.display(), i + 1)));
        }
        values.extend(row);
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, dim.unwrap_or(0), &values))
}

pub fn adapt(a: AdaptArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let prior = load_prior(&a.prior)?;
    let rows = parse_rows(&read_text(&a.data)?, &a.data)?;
    if rows.nrows() == 0 || a.batch == 0 {
        return Err(CliError::Data(format!("{}: no adaptation rows", a.data.display())));
    }
    let mut order: Vec<usize> = (0..rows.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
    let batches: Vec<DMatrix<f64>> = order.chunks(a.batch).map(|c| rows.select_rows(c)).collect();
    let schedule = match a.schedule {
        Schedule::BottomUp => LayerSchedule::bottom_up(&model.net),
        Schedule::All => LayerSchedule::single((0..7).collect()),
    };
    let params = AdaptParams { lambda: a.lambda, steps: a.steps, learning_rate: a.lr, schedule };
    let (net, report) = run_adapt(&model.net, &batches, &prior, &params).map_err(data("adapt"))?;
    write_file(&a.out, Model { net, ..model }.to_json().as_bytes())?;
    emit_json(&serde_json::json!({
        "steps": report.penalties_before.len(),
        "non_increasing_fraction": report.non_increasing_fraction(),
        "penalty_first": report.penalties_before.first(),
        "penalty_last": report.penalties_after.last(),
    }))
}

pub fn align(a: AlignArgs) -> Result<()> {
    let rec = Recognizer::new(load_model(&a.model)?).map_err(data(a.model.display()))?;
    let lexicon = match &a.lexicon {
        Some(p) => parse_lexicon_tsv(&read_text(p)?).map_err(data(p.display()))?,
        None => HashMap::new(),
    };
    let text = read_text(&a.text)?;
    let words: Vec<&str> = text.split_whitespace().collect();
    let audio = to_16k_mono(&read_audio(&a.audio)?).map_err(data(a.audio.display()))?;
    let result = rec.align_words(&audio, &words, &lexicon, bundled_rules(), !a.no_silence).map_err(data("align"))?;
    emit_json(&result)
}

pub fn serve(a: ServeArgs) -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ServiceConfig::new(&a.data);
    cfg.model_path = a.model;
    cfg.abbrev_path = a.abbrev;
    cfg.session_ttl = Duration::from_secs(a.session_ttl_secs);
    let state = AppState::load(&cfg).map_err(data(a.data.display()))?;
    let rt = tokio::runtime::Runtime::new().map_err(data("runtime"))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(data(format!("{}:{}", a.host, a.port)))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        hasr_service::serve(listener, state, shutdown).await.map_err(data("serve"))
    })
}

pub fn useradd(a: UseraddArgs) -> Result<()> {
    let password = match a.password {
        Some(p) => p,
        None => {
            let mut line = String::new();
            std::io::stdin().read_line(&mut line).map_err(data("stdin"))?;
            line.trim_end_matches(['\n', '\r']).to_string()
        }
    };
    if password.is_empty() {
        return Err(CliError::Usage("password must not be empty".into()));
    }
    let store = Store::open(&a.data).map_err(data(a.data.display()))?;
    store
        .add_user(UserAccount {
            user_id: a.user.clone(),
            password_hash: hash_password(&password, DEFAULT_ITERATIONS),
            language_id: a.language.clone(),
        })
        .map_err(data(&a.user))?;
    emit_json(&serde_json::json!({"user_id": a.user, "language_id": a.language}))
}

pub fn import(a: ImportArgs) -> Result<()> {
    let store = Store::open(&a.data).map_err(data(a.data.display()))?;
    let report = store.import_manifest(&a.manifest, &a.language).map_err(data(a.manifest.display()))?;
    emit_json(&report)
}
