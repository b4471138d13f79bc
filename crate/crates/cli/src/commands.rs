use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use sdc_core::analysis::{
    collapse_report, feature_collapse_report, write_histogram_csv, write_pairs_csv, CollapseConfig,
};
use sdc_core::baselines::{encode_itq, fit_itq, fit_lsh, ItqOptions, RankPolicy};
use sdc_core::dataio::{
    generate_synthetic, read_checkpoint, read_codes, read_features, write_codes, write_features,
    write_itq, write_model, Checkpoint, FeatureMatrix, SyntheticSpec,
};
use sdc_core::retrieval::{evaluate, search_topk, ApNormalization, EvalOptions};
use sdc_core::trainer::{encode_dataset, train, PairObjective, TrainConfig};
use sdc_core::{Error, HashModel, PackedCodes};

use crate::config::ConfigFile;
use crate::{
    AnalyzeArgs, BaselineArgs, BaselineMethod, Cli, CodeSource, Command, EncodeArgs, EvalArgs,
    Failure, GenDataArgs, NormalizationArg, ObjectiveArg, RetrieveArgs, TrainArgs,
};

type CmdResult = Result<Value, Failure>;

pub fn dispatch(cli: &Cli) -> CmdResult {
    let cfg = ConfigFile::load(cli.global.config.as_deref())?;
    let ctx = Ctx {
        cfg,
        seed: cli.global.seed,
        out: cli.global.out.clone(),
    };
    match &cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Encode(a) => encode_cmd(&ctx, a),
        Command::Retrieve(a) => retrieve_cmd(&ctx, a),
        Command::Eval(a) => eval_cmd(&ctx, a),
        Command::Analyze(a) => analyze_cmd(&ctx, a),
        Command::Baseline(a) => baseline_cmd(&ctx, a),
    }
}

struct Ctx {
    cfg: ConfigFile,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn required_out(&self, what: &str) -> Result<&Path, Failure> {
        self.out
            .as_deref()
            .ok_or_else(|| Failure::usage(format!("--out is required to write the {what}")))
    }

    fn seed(&self) -> Result<u64, Failure> {
        match self.seed {
            Some(s) => Ok(s),
            None => Ok(self.cfg.get("seed")?.unwrap_or(0)),
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn features(path: &Path) -> Result<FeatureMatrix<f64>, Failure> {
    Ok(read_features(path)?)
}

fn gen_data(ctx: &Ctx, a: &GenDataArgs) -> CmdResult {
    let mut spec: SyntheticSpec = ctx.cfg.section()?;
    set(&mut spec.n_clusters, a.clusters);
    set(&mut spec.points_per_cluster, a.per);
    set(&mut spec.dim, a.dim);
    set(&mut spec.center_scale, a.center_scale);
    set(&mut spec.within_std, a.within_std);
    spec.seed = ctx.seed()?;
    let out = ctx.required_out("feature file")?;
    spec.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let data = generate_synthetic(&spec)?;
    write_features(out, &data)?;
    log::info!("wrote {} x {} features to {}", data.n(), data.dim(), out.display());
    Ok(json!({
        "command": "gen-data",
        "spec": spec,
        "n": data.n(),
        "dim": data.dim(),
        "out": out,
    }))
}

fn train_config(ctx: &Ctx, a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut c: TrainConfig = ctx.cfg.section()?;
    set(&mut c.k_bits, a.bits);
    set(&mut c.epochs, a.epochs);
    set(&mut c.batch_size, a.batch_size);
    set(&mut c.lr, a.lr);
    set(&mut c.lambda_q, a.lambda_q);
    set(&mut c.lambda_cl, a.lambda_cl);
    set(&mut c.calib_alpha, a.alpha);
    set(&mut c.calib_beta, a.beta);
    set(&mut c.preservation_p, a.p);
    if let Some(o) = a.objective {
        c.objective = match o {
            ObjectiveArg::Sdc => PairObjective::Sdc,
            ObjectiveArg::Preservation => PairObjective::Preservation,
        };
    }
    if a.no_shuffle {
        c.shuffle = false;
    }
    c.seed = ctx.seed()?;
    c.validate()?;
    Ok(c)
}

/// `model.sdcm` → `model.json`; falls back to appending when that collides.
fn sidecar_path(out: &Path) -> PathBuf {
    let p = out.with_extension("json");
    if p == out {
        let mut s = out.as_os_str().to_owned();
        s.push(".config.json");
        PathBuf::from(s)
    } else {
        p
    }
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> CmdResult {
    let cfg = train_config(ctx, a)?;
    let out = ctx.required_out("model")?;
    let data = features(&a.features)?;
    log::info!(
        "training {} bits on {} x {} for {} epochs",
        cfg.k_bits,
        data.n(),
        data.dim(),
        cfg.epochs
    );
    let (model, report) = train(&data, &cfg)?;
    write_model(out, &model)?;
    let sidecar = sidecar_path(out);
    let cfg_json = serde_json::to_string_pretty(&cfg).map_err(Error::from)?;
    std::fs::write(&sidecar, cfg_json + "\n").map_err(|e| Failure {
        code: crate::EXIT_DATA,
        message: format!("writing {}: {e}", sidecar.display()),
    })?;
    if let (Some(f), Some(l)) = (report.first(), report.last()) {
        log::info!("loss {:.6} -> {:.6}", f.loss, l.loss);
    }
    Ok(json!({
        "command": "train",
        "config": cfg,
        "report": report,
        "out": out,
        "config_out": sidecar,
    }))
}

enum Encoder {
    Hash(HashModel<f64>),
    Itq(sdc_core::ItqModel),
}

impl Encoder {
    fn load(path: &Path) -> Result<Self, Failure> {
        Ok(match read_checkpoint(path)? {
            Checkpoint::Hash(m) => Encoder::Hash(m),
            Checkpoint::Itq(m) => Encoder::Itq(m),
        })
    }

    fn encode(&self, data: &FeatureMatrix<f64>) -> Result<PackedCodes, Failure> {
        Ok(match self {
            Encoder::Hash(m) => encode_dataset(m, data)?,
            Encoder::Itq(m) => encode_itq(m, &data.x)?,
        })
    }
}

fn encode_cmd(ctx: &Ctx, a: &EncodeArgs) -> CmdResult {
    let out = ctx.required_out("code file")?;
    let encoder = Encoder::load(&a.model)?;
    let data = features(&a.features)?;
    let codes = encoder.encode(&data)?;
    write_codes(out, &codes)?;
    Ok(json!({
        "command": "encode",
        "n": codes.len(),
        "k_bits": codes.k_bits(),
        "out": out,
    }))
}

fn retrieve_cmd(ctx: &Ctx, a: &RetrieveArgs) -> CmdResult {
    let queries = read_codes(&a.queries)?;
    let gallery = read_codes(&a.gallery)?;
    let k = match a.k {
        Some(k) => k,
        None => ctx.cfg.get("k")?.unwrap_or(100),
    };
    let results = search_topk(&queries, &gallery, k)?;
    let doc = json!({
        "command": "retrieve",
        "k": k,
        "results": results,
    });
    if let Some(out) = &ctx.out {
        write_json(out, &doc)?;
    }
    Ok(doc)
}

fn write_json(path: &Path, doc: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| Failure {
        code: crate::EXIT_DATA,
        message: format!("writing {}: {e}", path.display()),
    })
}

fn resolve_codes(src: &CodeSource, data: &FeatureMatrix<f64>) -> Result<PackedCodes, Failure> {
    let codes = match (&src.codes, &src.model) {
        (Some(c), _) => read_codes(c)?,
        (None, Some(m)) => Encoder::load(m)?.encode(data)?,
        (None, None) => return Err(Failure::usage("one of --codes or --model is required")),
    };
    if codes.len() != data.n() {
        return Err(Error::shape("codes vs features", data.n(), codes.len()).into());
    }
    Ok(codes)
}

fn eval_cmd(ctx: &Ctx, a: &EvalArgs) -> CmdResult {
    let gallery_data = features(&a.features)?;
    let gallery = resolve_codes(&a.source, &gallery_data)?;
    let gallery_labels = gallery_data.labels()?;
    let normalization = match a.normalization {
        NormalizationArg::MinRelevant => ApNormalization::MinRelevantK,
        NormalizationArg::RetrievedRelevant => ApNormalization::RetrievedRelevant,
    };
    let k = match a.k {
        Some(k) => k,
        None => ctx.cfg.get("k")?.unwrap_or(100),
    };
    let summary = match &a.query_features {
        None => {
            let opts = EvalOptions { k, exclude_self: true, normalization };
            evaluate(&gallery, &gallery, gallery_labels, gallery_labels, &opts)?
        }
        Some(qf) => {
            let query_data = features(qf)?;
            let src = CodeSource {
                codes: a.query_codes.clone(),
                model: a.source.model.clone(),
            };
            let queries = resolve_codes(&src, &query_data)?;
            let opts = EvalOptions { k, exclude_self: false, normalization };
            evaluate(&queries, &gallery, query_data.labels()?, gallery_labels, &opts)?
        }
    };
    if let Some(path) = &a.pr_csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
        w.write_record(["radius", "precision", "recall"]).map_err(|e| Error::Csv(e.to_string()))?;
        for p in &summary.pr_curve {
            w.serialize((p.radius, p.precision, p.recall)).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    }
    log::info!("mAP@{} = {:.4}", summary.k, summary.map_at_k);
    let doc = json!({
        "command": "eval",
        "k": summary.k,
        "normalization": normalization,
        "map_at_k": summary.map_at_k,
        "n_queries": summary.per_query_ap.len(),
        "pr_curve": summary.pr_curve,
    });
    if let Some(out) = &ctx.out {
        write_json(out, &doc)?;
    }
    Ok(doc)
}

fn analyze_cmd(ctx: &Ctx, a: &AnalyzeArgs) -> CmdResult {
    let mut cc: CollapseConfig = ctx.cfg.section()?;
    set(&mut cc.n_pos, a.n_pos);
    set(&mut cc.n_neg, a.n_neg);
    set(&mut cc.bins, a.bins);
    cc.seed = ctx.seed()?;
    let data = features(&a.features)?;
    let labels = data.labels()?;
    let report = if a.raw {
        feature_collapse_report(&data.x, labels, &cc)?
    } else {
        collapse_report(&resolve_codes(&a.source, &data)?, labels, &cc)?
    };
    let mut doc = json!({
        "command": "analyze",
        "similarity": if a.raw { "features" } else { "codes" },
        "report": report,
    });
    if let Some(dir) = &ctx.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_histogram_csv(dir.join("histogram.csv"), &report.histogram)?;
        write_pairs_csv(dir.join("pairs.csv"), &report)?;
        write_json(&dir.join("report.json"), &doc)?;
        doc["out"] = json!(dir);
    }
    log::info!("intersection {:.4}", report.intersection);
    Ok(doc)
}

fn baseline_cmd(ctx: &Ctx, a: &BaselineArgs) -> CmdResult {
    let out = ctx.required_out("baseline model")?;
    let data = features(&a.features)?;
    let k = match a.bits {
        Some(b) => b,
        None => ctx.cfg.get("k_bits")?.unwrap_or(64),
    };
    let seed = ctx.seed()?;
    match a.method {
        BaselineMethod::Lsh => {
            let model = fit_lsh::<f64>(data.dim(), k, seed)?;
            write_model(out, &model)?;
            Ok(json!({ "command": "baseline", "method": "lsh", "k_bits": k, "seed": seed, "out": out }))
        }
        BaselineMethod::Itq => {
            let mut opts: ItqOptions = ctx.cfg.section()?;
            set(&mut opts.iters, a.iters);
            opts.seed = seed;
            if a.allow_rank_deficient {
                opts.on_rank_deficient = RankPolicy::Warn;
            }
            let fit = fit_itq(&data.x, k, &opts)?;
            write_itq(out, &fit.model)?;
            Ok(json!({
                "command": "baseline",
                "method": "itq",
                "k_bits": k,
                "options": opts,
                "objective": fit.objective,
                "out": out,
            }))
        }
    }
}
