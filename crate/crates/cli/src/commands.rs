//! Subcommand bodies. Each takes a fully resolved config.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fakesent::checkpoint;
use fakesent::classifier::{self, LossReduction, TrainOutputs};
use fakesent::corpus::{build_vocab, load_embeddings_file, read_corpus_file, EmbeddingTable, Sentence};
use fakesent::encoder::EncoderError;
use fakesent::fakegen::{build_dataset, read_dataset, write_dataset};
use fakesent::numcore::{grad_check, NumError, Precision, Scalar, Tensor};
use fakesent::probe::{run_probes, ProbeConfig, ProbeTask};
use fakesent::seed::rng_for;
use fakesent::{ClassifierConfig, FakeDetector, LabeledExample, Strategy, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{self, key, optional, Key, RunConfig};
use crate::error::CliError;

const GEN_FAKES: &[Key] = &[
    optional("in"),
    optional("out"),
    key("strategy", "shuffle"),
    key("fakes_per_real", "1"),
    optional("seed"),
];

const TRAIN: &[Key] = &[
    optional("data"),
    optional("valid"),
    optional("embeddings"),
    key("embed_dim", "300"),
    key("hidden", "2048"),
    key("mlp", "1024,512"),
    key("epochs", "15"),
    key("batch", "64"),
    key("lr", "0.1"),
    key("lr_decay", "0.5"),
    key("max_grad_norm", "5"),
    key("loss_reduction", "sum"),
    optional("seed"),
    optional("out"),
    optional("metrics"),
    key("precision", "f32"),
    key("freeze_embeddings", "false"),
    key("min_count", "1"),
];

const ENCODE: &[Key] = &[optional("model"), optional("in"), optional("out")];

const EVALUATE: &[Key] = &[optional("model"), optional("data"), optional("report")];

const PROBE: &[Key] = &[
    optional("model"),
    optional("corpus"),
    key("tasks", "sentlen,wc,bshift"),
    key("seed", "0"),
    optional("report"),
    key("l2_grid", "0.0001,0.001,0.01,0.1,1"),
    key("max_iterations", "3000"),
    key("tolerance", "0.00001"),
];

const GRADCHECK: &[Key] = &[
    key("h", "8"),
    key("d", "8"),
    key("vocab", "50"),
    key("seed", "1"),
    key("samples", "200"),
    key("eps", "0.00001"),
    key("batch", "4"),
];

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const ENCODE_BATCH: usize = 256;

pub fn resolve(command: &str, file: Option<&Path>, flags: config::Settings) -> Result<RunConfig, CliError> {
    let keys = match command {
        "gen-fakes" => GEN_FAKES,
        "train" => TRAIN,
        "encode" => ENCODE,
        "evaluate" => EVALUATE,
        "probe" => PROBE,
        "gradcheck" => GRADCHECK,
        other => return Err(CliError::usage(format!("unknown command {other}"))),
    };
    let file = file.map(config::read).transpose()?;
    Ok(config::resolve(command, keys, file, flags)?)
}

fn path(cfg: &RunConfig, key: &str) -> Result<PathBuf, CliError> {
    Ok(PathBuf::from(cfg.get::<String>(key)?))
}

fn read_examples(path: &Path) -> Result<Vec<LabeledExample>, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(read_dataset(BufReader::new(file))?)
}

fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CliError> {
    read_corpus_file(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_config(cfg: &RunConfig, output: &Path) -> Result<(), CliError> {
    cfg.write_beside(output)
        .map_err(|e| CliError::data(format!("cannot write config beside {}: {e}", output.display())))
}

pub fn gen_fakes(cfg: RunConfig) -> Result<(), CliError> {
    let input = path(&cfg, "in")?;
    let out = path(&cfg, "out")?;
    let strategy: Strategy = cfg.get("strategy")?;
    let fakes_per_real: usize = cfg.get("fakes_per_real")?;
    let seed: u64 = cfg.get("seed")?;
    if fakes_per_real == 0 {
        return Err(CliError::usage("fakes_per_real must be at least 1"));
    }
    let corpus = read_sentences(&input)?;
    let data = build_dataset(&corpus, strategy, fakes_per_real, seed)?;
    let mut w = BufWriter::new(File::create(&out)?);
    write_dataset(&mut w, &data)?;
    w.flush()?;
    write_config(&cfg, &out)?;
    println!("wrote {} examples from {} sentences to {}", data.len(), corpus.len(), out.display());
    Ok(())
}

pub fn train(cfg: RunConfig) -> Result<(), CliError> {
    let precision: Precision = cfg.get("precision")?;
    match precision {
        Precision::F32 => train_with::<f32>(&cfg),
        Precision::F64 => train_with::<f64>(&cfg),
    }
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let max_grad_norm = match cfg.raw("max_grad_norm") {
        Some("none") => None,
        _ => cfg.get_opt("max_grad_norm")?,
    };
    let reduction = match cfg.get::<String>("loss_reduction")?.as_str() {
        "sum" => LossReduction::Sum,
        "mean" => LossReduction::Mean,
        other => return Err(CliError::usage(format!("loss_reduction must be sum or mean, got '{other}'"))),
    };
    Ok(TrainConfig {
        batch_size: cfg.get("batch")?,
        epochs: cfg.get("epochs")?,
        learning_rate: cfg.get("lr")?,
        lr_decay_factor: cfg.get("lr_decay")?,
        seed: cfg.get("seed")?,
        freeze_embeddings: cfg.get("freeze_embeddings")?,
        reduction,
        max_grad_norm,
    })
}

fn train_with<T: Scalar>(cfg: &RunConfig) -> Result<(), CliError> {
    let tc = train_config(cfg)?;
    let data = path(cfg, "data")?;
    let valid = path(cfg, "valid")?;
    let out = path(cfg, "out")?;
    let metrics = match cfg.raw("metrics") {
        Some(m) => PathBuf::from(m),
        None => {
            let mut name = out.as_os_str().to_owned();
            name.push(".metrics.jsonl");
            PathBuf::from(name)
        }
    };
    let hidden: usize = cfg.get("hidden")?;
    let mlp: Vec<usize> = cfg.get_list("mlp")?;
    let [hidden1, hidden2] = mlp[..] else {
        return Err(CliError::usage("mlp must list exactly two layer widths"));
    };
    let head = ClassifierConfig { hidden1, hidden2 };
    head.validate().map_err(CliError::usage)?;
    if hidden == 0 {
        return Err(CliError::usage("hidden must be at least 1"));
    }
    let min_count: usize = cfg.get("min_count")?;

    let train_set = read_examples(&data)?;
    let valid_set = read_examples(&valid)?;
    let vocab = build_vocab(train_set.iter().map(|e| &e.sentence), min_count)?;
    let mut rng = rng_for(tc.seed, "init");
    let embeddings = match cfg.raw("embeddings") {
        Some(p) => {
            let (table, coverage) = load_embeddings_file::<T, _>(Path::new(p), &vocab, &mut rng)
                .map_err(|e| CliError::data(format!("{p}: {e}")))?;
            eprintln!("pretrained vectors cover {}/{} words", coverage.found, coverage.total);
            table
        }
        None => {
            let dim: usize = cfg.get("embed_dim")?;
            if dim == 0 {
                return Err(CliError::usage("embed_dim must be at least 1"));
            }
            EmbeddingTable::random(vocab.len(), dim, &mut rng)
        }
    };
    let mut model = FakeDetector::new(vocab, embeddings, hidden, head, &mut rng)?;

    write_config(cfg, &out)?;
    let outputs = TrainOutputs { checkpoint: Some(&out), metrics: Some(&metrics) };
    let report = classifier::train(&mut model, &train_set, &valid_set, &tc, outputs)?;
    if report.best_checkpoint.is_none() {
        // no epoch improved on zero accuracy; still leave a usable model behind
        checkpoint::save(&model, &out)?;
    }
    for e in &report.epochs {
        println!(
            "epoch {:>3}  lr {:.4}  loss {:.4}  train acc {:.4}  valid acc {:.4}",
            e.epoch, e.learning_rate, e.train_loss, e.train_accuracy, e.valid_accuracy
        );
    }
    println!("best epoch {} valid accuracy {:.4} -> {}", report.best_epoch, report.best_valid_accuracy, out.display());
    Ok(())
}

pub fn encode(cfg: RunConfig) -> Result<(), CliError> {
    let model = path(&cfg, "model")?;
    match checkpoint::peek_header(&model)?.precision {
        Precision::F32 => encode_with::<f32>(&cfg, &model),
        Precision::F64 => encode_with::<f64>(&cfg, &model),
    }
}

fn encode_with<T: Scalar>(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let model = checkpoint::load::<T>(model_path)?;
    let corpus = read_sentences(&path(cfg, "in")?)?;
    let out = path(cfg, "out")?;
    let mut w = BufWriter::new(File::create(&out)?);
    for chunk in corpus.chunks(ENCODE_BATCH) {
        for (s, enc) in chunk.iter().zip(model.encode_batch(chunk)?) {
            write!(w, "{}", s.id())?;
            for v in &enc.z {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    write_config(cfg, &out)?;
    Ok(())
}

pub fn evaluate(cfg: RunConfig) -> Result<(), CliError> {
    let model = path(&cfg, "model")?;
    match checkpoint::peek_header(&model)?.precision {
        Precision::F32 => evaluate_with::<f32>(&cfg, &model),
        Precision::F64 => evaluate_with::<f64>(&cfg, &model),
    }
}

fn evaluate_with<T: Scalar>(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let model = checkpoint::load::<T>(model_path)?;
    let data = read_examples(&path(cfg, "data")?)?;
    let metrics = classifier::evaluate(&model, &data)?;
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    println!("{json}");
    if let Some(report) = cfg.raw("report") {
        let report = Path::new(report);
        std::fs::write(report, format!("{json}\n"))?;
        write_config(cfg, report)?;
    }
    Ok(())
}

pub fn probe(cfg: RunConfig) -> Result<(), CliError> {
    let model = path(&cfg, "model")?;
    match checkpoint::peek_header(&model)?.precision {
        Precision::F32 => probe_with::<f32>(&cfg, &model),
        Precision::F64 => probe_with::<f64>(&cfg, &model),
    }
}

fn probe_with<T: Scalar>(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    let tasks: Vec<ProbeTask> = cfg.get_list("tasks")?;
    let seed: u64 = cfg.get("seed")?;
    let report_path = path(cfg, "report")?;
    let probe_cfg = ProbeConfig {
        l2_grid: cfg.get_list("l2_grid")?,
        max_iterations: cfg.get("max_iterations")?,
        tolerance: cfg.get("tolerance")?,
    };
    probe_cfg.validate()?;
    let model = checkpoint::load::<T>(model_path)?;
    let corpus = read_sentences(&path(cfg, "corpus")?)?;
    let report = run_probes(&model, &corpus, &tasks, seed, &probe_cfg)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, format!("{json}\n"))?;
    write_config(cfg, &report_path)?;
    for (task, out) in &report {
        println!(
            "{task:<8} test acc {:.4}  l2 {:e}  classes {}  majority {:.4}",
            out.test_accuracy, out.chosen_l2, out.num_classes, out.majority_baseline
        );
    }
    Ok(())
}

/// Full encoder plus head in f64 on one random batch with lengths 2 to 6.
pub fn gradcheck(cfg: RunConfig) -> Result<(), CliError> {
    let h: usize = cfg.get("h")?;
    let d: usize = cfg.get("d")?;
    let vocab_size: usize = cfg.get("vocab")?;
    let seed: u64 = cfg.get("seed")?;
    let samples: usize = cfg.get("samples")?;
    let eps: f64 = cfg.get("eps")?;
    let batch_size: usize = cfg.get("batch")?;
    if h == 0 || d == 0 || batch_size == 0 || samples == 0 {
        return Err(CliError::usage("h, d, batch and samples must be positive"));
    }
    // PAD and UNK take the first two slots
    if vocab_size < 3 {
        return Err(CliError::usage("vocab must be at least 3"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab_size - 2).map(|i| format!("w{i}")).collect();
    let vocab = build_vocab(&[Sentence::new("vocab", words)?], 1)?;
    // unit-scale vectors, like pretrained ones; with the small random init
    // many gradients sit near the finite-difference noise floor
    let values = (0..vocab.len() * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let emb = EmbeddingTable::from_matrix(Tensor::from_vec(&[vocab.len(), d], values)?);
    let head = ClassifierConfig { hidden1: h, hidden2: h };
    let mut model = FakeDetector::new(vocab, emb, h, head, &mut rng)?;
    let batch: Vec<Vec<usize>> = (0..batch_size)
        .map(|_| (0..rng.gen_range(2..=6)).map(|_| rng.gen_range(2..vocab_size)).collect())
        .collect();
    let classes: Vec<usize> = (0..batch_size).map(|i| i % 2).collect();
    let (encoder, mlp) = (model.encoder.clone(), model.head.clone());
    let report = grad_check(
        &mut model.params,
        |tape| {
            let trace = encoder.forward(tape, &batch).map_err(|e| match e {
                EncoderError::Num(n) => n,
                other => NumError::InvalidArgument(other.to_string()),
            })?;
            let logits = mlp.forward(tape, trace.pooled)?;
            tape.softmax_cross_entropy(logits, &classes)
        },
        eps,
        samples,
        &mut rng,
    )
    .map_err(|e| match e {
        NumError::InvalidArgument(m) => CliError::usage(m),
        other => CliError::numerical(other),
    })?;
    println!("max_rel_error {:e} samples {}", report.max_rel_error, report.samples);
    if let Some((name, idx)) = &report.worst {
        println!(
            "worst {name}[{idx}] analytic {:e} numeric {:e}",
            report.worst_analytic, report.worst_numeric
        );
    }
    if report.max_rel_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "max relative error {:e} exceeds {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error
        )))
    }
}
