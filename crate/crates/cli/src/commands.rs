use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use sarforge::dataset::{augment_flips, resample_echo, Dataset, EchoTensor, NormStats};
use sarforge::formats::{read_echo, write_echo};
use sarforge::metrics::{accuracy, argmax, mean_ssim, throughput_bench, SsimParams, Stage};
use sarforge::models::{
    build_classifier, build_rdanet, image_label_samples, labeled_images, split_rdanet, train_arm_a,
    train_arm_b, train_arm_c, EpochStats, History, ImageSystem, Integrated,
};
use sarforge::nn::{Checkpoint, Mode, Network, Tensor4};
use sarforge::numerics::{Prng, RealMatrix};
use sarforge::rda::form_image;
use sarforge::sim::{random_scene, synthesize_echo, Scene, SceneClass};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_image_set, write_json};
use crate::{Metric, Which, VERSION};

pub const CHECKPOINT_FILE: &str = "model.sarm";
pub const LOSS_FILE: &str = "loss.csv";

fn load_echo(path: &Path) -> Result<sarforge::sim::RawEcho, CliError> {
    read_echo(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn log_epoch(tag: &str) -> impl FnMut(&EpochStats) + '_ {
    move |e| {
        eprintln!(
            "[{tag}] epoch {:>3}  train {:.6}  val {:.6}",
            e.epoch, e.train_loss, e.val_loss
        )
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path, n: usize, point: Option<&[f64]>, noise: Option<f64>) -> Result<(), CliError> {
    let noise = noise.unwrap_or(cfg.dataset.gen.noise_std);
    if !(noise >= 0.0) {
        return Err(CliError::Usage(format!("noise {noise} must be >= 0")));
    }
    for i in 0..n {
        let mut p = Prng::with_stream(cfg.seed, i as u64);
        let scene = match point {
            Some(&[r, x]) => Scene::single(r, x, 1.0),
            Some(_) => return Err(CliError::Usage("--point takes RANGE AZIMUTH".into())),
            None => {
                let class = if i % 2 == 0 { SceneClass::Ridge } else { SceneClass::River };
                random_scene(&cfg.radar, class, &mut p)
            }
        };
        let echo = synthesize_echo(&cfg.radar, &scene, &mut p, noise)?;
        write_echo(&out.join(format!("echo_{i:04}.sare")), &echo)?;
        scene.save(&out.join(format!("scene_{i:04}.json")))?;
    }
    println!("wrote {n} echoes to {}", out.display());
    Ok(())
}

pub fn focus(cfg: &RunConfig, out: &Path, echo_path: &Path, png: bool) -> Result<(), CliError> {
    let echo = load_echo(echo_path)?;
    let rda = cfg.rda_config_for(&echo.config);
    let img = form_image(&echo, &rda)?;
    if !img.pixels.is_finite() {
        return Err(CliError::Numeric("focused image is not finite".into()));
    }
    write_image_set(out, "image", &img.pixels, png)?;
    let (r, c) = img.pixels.argmax();
    println!("focused {}x{} image, peak at ({r}, {c})", img.pixels.rows(), img.pixels.cols());
    Ok(())
}

pub fn dataset(cfg: &RunConfig, out: &Path, n: Option<usize>, val: Option<usize>) -> Result<(), CliError> {
    let mut dc = cfg.dataset.clone();
    if let Some(n) = n {
        dc.pairs = n;
    }
    if let Some(v) = val {
        dc.val_pairs = v;
    }
    let rda = cfg.rda_config();
    let mut ds = Dataset::build(&dc, &cfg.radar, &rda, cfg.seed)?;
    ds.save(out)?;
    println!(
        "wrote {} pairs ({} train, {} val) to {}",
        ds.pairs.len(),
        ds.manifest.train.len(),
        ds.manifest.val.len(),
        out.display()
    );
    Ok(())
}

fn load_dataset(cfg: &RunConfig, dir: &Path) -> Result<Dataset, CliError> {
    let ds = Dataset::load(dir)?;
    ds.manifest.check_configs(&cfg.radar, &cfg.rda_config())?;
    Ok(ds)
}

fn metadata(cfg: &RunConfig, kind: &str, ds: &Dataset, history: &History) -> Result<serde_json::Value, CliError> {
    Ok(json!({
        "kind": kind,
        "version": VERSION,
        "seed": cfg.seed,
        "arch": cfg.arch,
        "norm_stats": ds.norm_stats()?,
        "history": history,
    }))
}

fn save_run(out: &Path, ckpt: &Checkpoint, history: &History) -> Result<(), CliError> {
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    fs::write(out.join(LOSS_FILE), history.to_csv())?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train {:.6} val {:.6}",
            last.epoch, last.train_loss, last.val_loss
        );
    }
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn load_section(path: &Path, name: &str) -> Result<(Checkpoint, Network), CliError> {
    let mut ckpt = Checkpoint::load(path)?;
    let net = ckpt
        .take(name)
        .ok_or_else(|| CliError::Format(format!("{}: no '{name}' network", path.display())))?;
    Ok((ckpt, net))
}

pub fn train(cfg: &RunConfig, out: &Path, which: Which, data: &Path, dce_path: Option<&Path>) -> Result<(), CliError> {
    let ds = load_dataset(cfg, data)?;
    let (arch, tc) = (&cfg.arch, &cfg.train);
    let (ckpt, history) = match which {
        Which::Rdanet | Which::ArmC => {
            let (net, h) = train_arm_c(&ds, arch, tc, log_epoch("rdanet"))?;
            let kind = if which == Which::Rdanet { "rdanet" } else { "arm-c" };
            (Checkpoint::new(metadata(cfg, kind, &ds, &h)?).with("rdanet", &net), h)
        }
        Which::ArmA => {
            let (dce, h) = train_arm_a(&ds, arch, tc, log_epoch("arm-a"))?;
            (Checkpoint::new(metadata(cfg, "arm-a", &ds, &h)?).with("dce", &dce), h)
        }
        Which::ArmB => {
            let mut dce = match dce_path {
                Some(p) => load_section(p, "dce")?.1,
                None => train_arm_a(&ds, arch, tc, log_epoch("arm-a"))?.0,
            };
            let (drn, h) = train_arm_b(&ds, arch, tc, &mut dce, log_epoch("arm-b"))?;
            let ckpt = Checkpoint::new(metadata(cfg, "arm-b", &ds, &h)?)
                .with("dce", &dce)
                .with("drn", &drn);
            (ckpt, h)
        }
        Which::Classifier => {
            let tc = &cfg.classifier;
            let tr = image_label_samples(&augment_flips(&labeled_images(&ds.train())?))?;
            let va = image_label_samples(&labeled_images(&ds.val())?)?;
            let mut net = build_classifier(arch, tc.seed)?;
            let h = sarforge::models::train(&mut net, &tr, &va, tc, log_epoch("classifier"))?;
            let acc = classify(&mut net, &va.inputs, va.input)?;
            let labels = match &va.targets {
                sarforge::models::Targets::Labels(l) => l.clone(),
                _ => unreachable!("label samples"),
            };
            println!("validation accuracy {:.4}", accuracy(&acc, &labels)?);
            (Checkpoint::new(metadata(cfg, "classifier", &ds, &h)?).with("classifier", &net), h)
        }
    };
    save_run(out, &ckpt, &history)
}

/// Inference-mode class probabilities, one row per input.
fn classify(net: &mut Network, inputs: &[Vec<f64>], shape: sarforge::nn::Shape) -> Result<Vec<Vec<f64>>, CliError> {
    net.set_mode(Mode::Infer);
    let mut probs = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(32) {
        let y = net.forward(&Tensor4::stack(shape, chunk)?)?;
        probs.extend((0..y.n()).map(|i| y.sample(i).to_vec()));
    }
    Ok(probs)
}

fn image_system(path: &Path) -> Result<ImageSystem, CliError> {
    let mut ckpt = Checkpoint::load(path)?;
    if let Some(rdanet) = ckpt.take("rdanet") {
        return Ok(ImageSystem::Joint { rdanet });
    }
    let dce = ckpt
        .take("dce")
        .ok_or_else(|| CliError::Format(format!("{}: no image network", path.display())))?;
    Ok(match ckpt.take("drn") {
        Some(drn) => ImageSystem::Separate { dce, drn },
        None => ImageSystem::DceBilinear { dce },
    })
}

pub fn eval(cfg: &RunConfig, out: &Path, metric: Metric, ckpt_path: &Path, data: &Path) -> Result<(), CliError> {
    let ds = load_dataset(cfg, data)?;
    let val = ds.val();
    let mut csv = String::new();
    match metric {
        Metric::Ssim => {
            let mut sys = image_system(ckpt_path)?;
            let echoes: Vec<&[f64]> = val.iter().map(|p| p.echo.data.as_slice()).collect();
            let outputs: Vec<RealMatrix> = sys
                .predict_all(&echoes, cfg.arch.echo_shape(), cfg.train.minibatch)?
                .into_iter()
                .map(|m| m.map(|v| v.clamp(0.0, 1.0)))
                .collect();
            let refs: Vec<RealMatrix> = val.iter().map(|p| p.image.clone()).collect();
            let (each, s) = mean_ssim(&outputs, &refs, &SsimParams::default())?;
            csv.push_str("index,ssim\n");
            for (i, v) in ds.manifest.val.iter().zip(&each) {
                writeln!(csv, "{i},{v:?}").unwrap();
            }
            fs::write(out.join("ssim.csv"), &csv)?;
            write_json(&out.join("ssim_summary.json"), &s)?;
            println!("mean ssim {:.4} (std {:.4}, n {})", s.mean, s.std, s.count);
        }
        Metric::Accuracy => {
            let (_, mut net) = load_section(ckpt_path, "classifier")?;
            let imgs = labeled_images(&val)?;
            let samples = image_label_samples(&imgs)?;
            let probs = classify(&mut net, &samples.inputs, samples.input)?;
            let labels: Vec<usize> = imgs.iter().map(|li| li.label.index()).collect();
            let acc = accuracy(&probs, &labels)?;
            csv.push_str("index,label,p_ridge,p_river,predicted\n");
            for ((i, p), l) in ds.manifest.val.iter().zip(&probs).zip(&labels) {
                writeln!(csv, "{i},{l},{:?},{:?},{}", p[0], p[1], argmax(p)).unwrap();
            }
            fs::write(out.join("accuracy.csv"), &csv)?;
            write_json(&out.join("accuracy_summary.json"), &json!({ "accuracy": acc, "count": labels.len() }))?;
            println!("accuracy {acc:.4} (n {})", labels.len());
        }
    }
    Ok(())
}

fn norm_stats_of(ckpt: &Checkpoint, path: &Path) -> Result<NormStats, CliError> {
    let v = ckpt
        .metadata
        .get("norm_stats")
        .ok_or_else(|| CliError::Format(format!("{}: no normalization statistics", path.display())))?;
    serde_json::from_value(v.clone()).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn infer(out: &Path, echo_path: &Path, rdanet_path: &Path, cls_path: &Path, png: bool) -> Result<(), CliError> {
    let (ckpt, rdanet) = load_section(rdanet_path, "rdanet")?;
    let stats = norm_stats_of(&ckpt, rdanet_path)?;
    let (_, classifier) = load_section(cls_path, "classifier")?;
    let mut model = Integrated::new(rdanet, classifier)?;

    let raw = load_echo(echo_path)?;
    let (h, w) = (stats.echo_height, stats.echo_width);
    let samples = if raw.samples.dims() == (h, w) {
        raw.samples
    } else if raw.samples.rows() % h == 0 && raw.samples.rows() / h == raw.samples.cols() / w && raw.samples.cols() % w == 0 {
        resample_echo(&raw.samples, raw.samples.rows() / h)?
    } else {
        return Err(CliError::Format(format!(
            "echo is {:?}, model expects {h}x{w}",
            raw.samples.dims()
        )));
    };
    let echo = stats.normalize_echo(&EchoTensor::from_complex(&samples))?;
    let x = Tensor4::from_vec(1, model.rdanet.input_shape(), echo.data)?;
    let (img, probs) = model.infer(&x)?;
    if !img.is_finite() || !probs.is_finite() {
        return Err(CliError::Numeric("network output is not finite".into()));
    }
    let s = img.shape();
    let image = RealMatrix::from_vec(s.h, s.w, img.into_vec()).expect("single-channel image");
    write_image_set(out, "image", &image, png)?;
    let p = probs.data().to_vec();
    let class = SceneClass::from_index(argmax(&p)).expect("two classes");
    write_json(
        &out.join("probabilities.json"),
        &json!({ "probabilities": p, "class": class }),
    )?;
    println!("class {class:?}: p_ridge {:.4} p_river {:.4}", p[0], p[1]);
    Ok(())
}

/// What the timings ran on.
#[derive(Debug, serde::Serialize)]
struct Hardware {
    os: &'static str,
    arch: &'static str,
    logical_cpus: usize,
    cpu_model: Option<String>,
}

impl Hardware {
    fn probe() -> Self {
        let cpu_model = fs::read_to_string("/proc/cpuinfo").ok().and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

/// Runs on one worker thread unless `threads` asks for more.
pub fn bench(
    cfg: &RunConfig,
    out: &Path,
    rdanet_path: Option<&Path>,
    cls_path: Option<&Path>,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| bench_in_pool(cfg, out, rdanet_path, cls_path))
}

fn bench_in_pool(cfg: &RunConfig, out: &Path, rdanet_path: Option<&Path>, cls_path: Option<&Path>) -> Result<(), CliError> {
    let rdanet = match rdanet_path {
        Some(p) => load_section(p, "rdanet")?.1,
        None => build_rdanet(&cfg.arch, cfg.seed)?,
    };
    let mut classifier = match cls_path {
        Some(p) => load_section(p, "classifier")?.1,
        None => build_classifier(&cfg.arch, cfg.seed + 2)?,
    };
    let (mut dce, mut drn) = split_rdanet(&rdanet, &cfg.arch)?;
    let shape = cfg.arch.echo_shape();
    let mut p = Prng::with_stream(cfg.seed, 0xbe4c);
    let n = cfg.bench.batch;
    let x = Tensor4::from_vec(n, shape, (0..n * shape.len()).map(|_| 0.1 * p.normal()).collect())?;
    let mut stages = [
        Stage { name: "dce", net: &mut dce },
        Stage { name: "drn", net: &mut drn },
        Stage {
            name: "classifier",
            net: &mut classifier,
        },
    ];
    let report = throughput_bench(&mut stages, &x, cfg.bench.reps, cfg.bench.warmup)?;
    let hardware = Hardware::probe();
    print!("{}", report.to_table());
    println!(
        "{} {} | {} logical cpus | {}",
        hardware.os,
        hardware.arch,
        hardware.logical_cpus,
        hardware.cpu_model.as_deref().unwrap_or("unknown cpu")
    );
    let mut csv = String::from("stage,median_seconds\n");
    for s in &report.stages {
        writeln!(csv, "{},{:?}", s.name, s.median_seconds).unwrap();
    }
    writeln!(csv, "total,{:?}", report.median_batch_seconds).unwrap();
    fs::write(out.join("bench.csv"), csv)?;
    write_json(&out.join("bench.json"), &json!({ "report": report, "hardware": hardware }))?;
    Ok(())
}
