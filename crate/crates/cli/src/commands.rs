use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use crof_core::adapter::save_params;
use crof_core::embedding_store::{
    generate_synthetic, inject_noise, load_class_names, load_embeddings, load_labels,
    save_class_names, save_embeddings, save_labels, EmbeddingMatrix, FewShotDataset, NoiseSpec,
    SynthSpec,
};
use crof_core::label_weighting::{weigh_sample, WeightParams};
use crof_core::prompt_fusion::{
    aggregate_descriptions, build_prompt_request, fuse, interclass_similarity, mean_offdiagonal,
    similarity_csv,
};
use crof_core::trainer::{sweep, sweep_csv, train, SweepData, SweepRow, Toggles, TrainOutcome};
use crof_core::{CrofError, Result};
use log::info;

use crate::args::{
    FuseArgs, GenSynthArgs, InjectNoiseArgs, PromptRequestArgs, SweepArgs, TrainArgs, WeightsArgs,
};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::settings::{entries, kv_lookup, resolve, Resolved};

pub const IMAGES_FILE: &str = "images.emb";
pub const LABELS_FILE: &str = "labels.txt";
pub const PROTOTYPES_FILE: &str = "prototypes.emb";
pub const CLASSES_FILE: &str = "classes.txt";
pub const NOISY_LABELS_FILE: &str = "noisy_labels.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CrofError::storage(path, e))
}

fn stdout_text(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CrofError::storage("<stdout>", e))
}

/// Loads a dataset directory with clean labels on every row. The train split
/// size comes from `shots`, or from the directory's manifest.
pub fn load_dataset(dir: &Path, shots: Option<usize>) -> Result<FewShotDataset> {
    let images = load_embeddings(dir.join(IMAGES_FILE))?;
    let labels = load_labels(dir.join(LABELS_FILE))?;
    let names = load_class_names(dir.join(CLASSES_FILE))?;
    let shots = match shots {
        Some(s) => s,
        None => {
            let manifest = dir.join(MANIFEST_FILE);
            let raw = kv_lookup(&manifest, "shots")?.ok_or_else(|| {
                CrofError::Config(format!(
                    "{} has no `shots` entry; pass --shots",
                    manifest.display()
                ))
            })?;
            raw.parse()
                .map_err(|_| CrofError::Config(format!("bad shots value `{raw}`")))?
        }
    };
    FewShotDataset::new(images, labels.clone(), labels, names.len(), shots, names)
}

pub fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_classes: args.classes,
        dims: args.dims,
        shots: args.shots,
        test_per_class: args.test_per_class,
        sigma: args.sigma,
        seed: args.seed,
    };
    RunManifest::new("gen-synth", &args.out)
        .with("classes", spec.n_classes)
        .with("dims", spec.dims)
        .with("shots", spec.shots)
        .with("test_per_class", spec.test_per_class)
        .with("sigma", spec.sigma)
        .with("seed", spec.seed)
        .write()?;
    let (ds, protos) = generate_synthetic(&spec)?;
    save_embeddings(ds.images(), args.out.join(IMAGES_FILE))?;
    save_labels(ds.clean_labels(), args.out.join(LABELS_FILE))?;
    save_embeddings(&protos, args.out.join(PROTOTYPES_FILE))?;
    save_class_names(ds.class_names(), args.out.join(CLASSES_FILE))?;
    info!("wrote {} rows to {}", ds.images().rows(), args.out.display());
    Ok(())
}

pub fn cmd_inject_noise(args: &InjectNoiseArgs) -> Result<()> {
    let spec = NoiseSpec::new(args.kind.clone(), args.delta, args.seed);
    spec.validate()?;
    let mut manifest = RunManifest::new("inject-noise", &args.out)
        .with("data", args.data.display())
        .with("noise", &spec.kind)
        .with("delta", spec.delta)
        .with("seed", spec.seed);
    if let Some(s) = args.shots {
        manifest = manifest.with("shots", s);
    }
    manifest.write()?;
    let ds = load_dataset(&args.data, args.shots)?;
    let noisy = inject_noise(&ds, &spec)?;
    save_labels(noisy.noisy_labels(), args.out.join(NOISY_LABELS_FILE))?;
    info!("wrote {}", args.out.join(NOISY_LABELS_FILE).display());
    Ok(())
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<()> {
    let mut sup = load_embeddings(&args.sup)?;
    let mut cafo = load_embeddings(&args.cafo)?;
    if args.per_class > 1 {
        sup = aggregate_descriptions(&sup, args.per_class)?;
        cafo = aggregate_descriptions(&cafo, args.per_class)?;
    }
    let fused = fuse(&sup, &cafo)?;
    save_embeddings(&fused, &args.out)?;
    let sim = interclass_similarity(&fused);
    if let Some(path) = &args.similarity {
        write_text(path, &similarity_csv(&sim))?;
    }
    let mut report = String::from("set,mean_offdiagonal\n");
    if fused.rows() >= 2 {
        for (name, m) in [("cafo", &cafo), ("sup", &sup), ("fused", &fused)] {
            let v = mean_offdiagonal(&interclass_similarity(m))?;
            report.push_str(&format!("{name},{v}\n"));
        }
    }
    stdout_text(&report)
}

pub fn cmd_prompt_request(args: &PromptRequestArgs) -> Result<()> {
    let names = load_class_names(&args.classes)?;
    let mut text = build_prompt_request(&args.target, &names)?;
    text.push('\n');
    match &args.out {
        Some(path) => write_text(path, &text),
        None => stdout_text(&text),
    }
}

fn resolve_train(args: &TrainArgs, matches: &ArgMatches) -> Result<Resolved> {
    let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
    let extra = vec![
        ("seed", "seed", args.seed.to_string()),
        ("delta", "delta", args.delta.to_string()),
        ("no_tpg", "tpg", (!args.no_tpg).to_string()),
        ("no_ft", "ft", (!args.no_ft).to_string()),
        ("no_wt", "wt", (!args.no_wt).to_string()),
        ("data", "data", path(&args.data)),
        ("noisy_labels", "noisy_labels", path(&args.noisy_labels)),
        ("text", "text", path(&args.text)),
        ("fused", "fused", path(&args.fused)),
        ("shots", "shots", args.shots.map_or(String::new(), |s| s.to_string())),
    ];
    let r = resolve(&args.hyper, extra, matches)?;
    r.cfg.validate()?;
    Ok(r)
}

fn optional_usize(r: &Resolved, key: &str) -> Result<Option<usize>> {
    r.input(key)
        .map(|v| {
            v.parse()
                .map_err(|_| CrofError::Config(format!("bad {key} value `{v}`")))
        })
        .transpose()
}

/// Trains one configuration and writes `metrics.csv` plus the adapter
/// weights into `--out`.
pub fn cmd_train(args: &TrainArgs, matches: &ArgMatches) -> Result<TrainOutcome> {
    let r = resolve_train(args, matches)?;
    let cfg = &r.cfg;
    let data = r
        .input_path("data")
        .ok_or_else(|| CrofError::Config("no dataset given (--data)".into()))?;
    let text_path = r
        .input_path("text")
        .unwrap_or_else(|| data.join(PROTOTYPES_FILE));
    let fused_path = r.input_path("fused");
    if cfg.toggles.use_tpg && fused_path.is_none() {
        return Err(CrofError::Config(
            "prompt fusion is on but no fused embeddings were given (--fused, or --no-tpg)".into(),
        ));
    }

    let mut inputs = r.inputs.clone();
    if r.input("text").is_none() {
        inputs.push(("text".into(), text_path.display().to_string()));
    }
    RunManifest::new("train", &args.out)
        .with_all(inputs)
        .with_all(entries(cfg))
        .write()?;

    let mut ds = load_dataset(&data, optional_usize(&r, "shots")?)?;
    if let Some(path) = r.input_path("noisy_labels") {
        ds = ds.with_noisy_labels(load_labels(path)?)?;
    }
    if cfg.noise.delta > 0.0 {
        ds = inject_noise(&ds, &cfg.noise)?;
    }
    let text = load_embeddings(&text_path)?;
    let fused: Option<EmbeddingMatrix> = fused_path.map(load_embeddings).transpose()?;

    let outcome = train(&ds, fused.as_ref(), &text, cfg)?;
    write_text(&args.out.join(METRICS_FILE), &outcome.metrics.to_csv())?;
    if cfg.toggles.use_ft {
        save_params(&outcome.params, &args.out)?;
    }
    info!(
        "final accuracy {} (best {})",
        outcome.metrics.final_accuracy().unwrap_or(0.0),
        outcome.metrics.best_accuracy().unwrap_or(0.0)
    );
    Ok(outcome)
}

/// Runs the sweep grid and writes `sweep.csv` into `--out`.
pub fn cmd_sweep(args: &SweepArgs, matches: &ArgMatches) -> Result<Vec<SweepRow>> {
    let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
    let extra = vec![
        ("data", "data", path(&args.data)),
        ("text", "text", path(&args.text)),
        ("fused", "fused", path(&args.fused)),
        ("shots", "shots", args.shots.map_or(String::new(), |s| s.to_string())),
    ];
    let r = resolve(&args.hyper, extra, matches)?;
    let toggle_sets: Vec<Toggles> = args
        .toggles
        .iter()
        .map(|t| t.parse())
        .collect::<Result<_>>()?;
    let synth = SynthSpec {
        n_classes: args.classes,
        dims: args.dims,
        shots: args.synth_shots,
        test_per_class: args.test_per_class,
        sigma: args.sigma,
        seed: 0,
    };

    let join = |v: Vec<String>| v.join(",");
    let mut manifest = RunManifest::new("sweep", &args.out).with_all(r.inputs.clone());
    if r.input("data").is_none() {
        manifest = manifest
            .with("synth_classes", synth.n_classes)
            .with("synth_dims", synth.dims)
            .with("synth_shots", synth.shots)
            .with("synth_test_per_class", synth.test_per_class)
            .with("synth_sigma", synth.sigma);
    }
    manifest
        .with("deltas", join(args.deltas.iter().map(f64::to_string).collect()))
        .with("toggles", join(toggle_sets.iter().map(Toggles::to_string).collect()))
        .with("seeds", join(args.seeds.iter().map(u64::to_string).collect()))
        .with_all(entries(&r.cfg))
        .write()?;

    let data = match r.input_path("data") {
        Some(dir) => SweepData::Fixed {
            dataset: load_dataset(&dir, optional_usize(&r, "shots")?)?,
            text_plain: load_embeddings(
                r.input_path("text").unwrap_or_else(|| dir.join(PROTOTYPES_FILE)),
            )?,
            text_fused: r.input_path("fused").map(load_embeddings).transpose()?,
        },
        None => SweepData::Synthetic(synth),
    };
    let rows = sweep(&r.cfg, &data, &args.deltas, &toggle_sets, &args.seeds)?;
    write_text(&args.out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    info!("wrote {} sweep rows", rows.len());
    Ok(rows)
}

/// CSV of the soft targets of one sample: one row per candidate class.
pub fn weights_csv(args: &WeightsArgs) -> Result<String> {
    let params = WeightParams::new(args.alpha, args.beta, args.gamma)?;
    let names = args.classes.as_ref().map(load_class_names).transpose()?;
    if let Some(names) = &names {
        if names.len() != args.logits.len() {
            return Err(CrofError::Length(format!(
                "{} class names for {} logits",
                names.len(),
                args.logits.len()
            )));
        }
    }
    let (rs, wv) = weigh_sample(&args.logits, args.label, args.topk, &params)?;
    let w_star = wv.w_star.as_ref().expect("normalized");
    let mut out = String::from("rank,class,logit,r,scenario,w,w_star\n");
    for (i, &c) in wv.candidates.iter().enumerate() {
        let class = names.as_ref().map_or(c.to_string(), |n| n[c].clone());
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i + 1,
            class,
            rs.logits()[i],
            rs.rank(),
            rs.scenario().id(),
            wv.w[i],
            w_star[i]
        ));
    }
    Ok(out)
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    stdout_text(&weights_csv(args)?)
}
