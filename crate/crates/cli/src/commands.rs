use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use easn::analysis::{self, HfMap, RdPoint, Rect};
use easn::checks::{self, Subject, CHECK_TOLERANCE};
use easn::codec::weights::{self, LoadedWeights};
use easn::codec::{train_with, Dataset, EpochLog, TrainReport};
use easn::io::{list_images, read_image, write_atomic, write_image};
use easn::{Model64, Tensor64, Variant};
use rayon::prelude::*;

use crate::config::{config_base, DatasetSource, Overrides, Run, RunConfig};
use crate::CliError;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const STATS_FILE: &str = "stats.txt";
const TRAIN_LOG_HEADER: &str = "epoch,step,train_loss,val_loss,lr";
const ABLATION_HEADER: &str = "variant,final_train_loss,final_val_loss,param_count";
const GRADCHECK_SEEDS: u64 = 5;

fn io_error(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot {what} {}: {e}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_weights(path: &Path) -> Result<LoadedWeights<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read weights {}: {e}", path.display())))?;
    weights::deserialize(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_image(path: &Path) -> Result<Tensor64, CliError> {
    read_image(path).map_err(CliError::usage)
}

/// Images with the names used to label them in reports.
fn load_dataset(source: &DatasetSource) -> Result<(Dataset<f64>, Vec<String>), CliError> {
    match source {
        DatasetSource::Dir(dir) => {
            let paths = list_images(dir).map_err(CliError::usage)?;
            if paths.is_empty() {
                return Err(CliError::Usage(format!("no images in {}", dir.display())));
            }
            let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
            let names = paths.iter().map(|p| stem(p)).collect();
            Ok((Dataset::new(images).map_err(CliError::usage)?, names))
        }
        &DatasetSource::Synthetic { count, size, seed } => {
            let data = Dataset::synthetic(count, size, seed).map_err(CliError::usage)?;
            Ok((data, (0..count).map(|i| format!("synthetic_{i:03}")).collect()))
        }
    }
}

fn load_run(config: &Path, overrides: &Overrides) -> Result<(Run, Dataset<f64>, Vec<String>), CliError> {
    let run = RunConfig::load(config)?.resolve(&config_base(config), overrides)?;
    let (data, names) = load_dataset(&run.dataset)?;
    if data.min_side() < run.train.crop {
        return Err(CliError::Usage(format!(
            "the dataset has an image smaller than the {0}x{0} training crop",
            run.train.crop
        )));
    }
    Ok((run, data, names))
}

fn fit(run: &Run, data: &Dataset<f64>) -> Result<(Model64, TrainReport), CliError> {
    let mut model = Model64::new(run.model.clone()).map_err(CliError::usage)?;
    let variant = run.model.variant;
    let report = train_with(&mut model, data, &run.train, |e: &EpochLog| {
        eprintln!(
            "{variant} epoch {} step {} train {:.6} val {:.6} lr {:e}",
            e.epoch, e.step, e.train_loss, e.val_loss, e.lr
        );
    })?;
    Ok((model, report))
}

fn train_log_csv(report: &TrainReport) -> String {
    let mut out = format!("{TRAIN_LOG_HEADER}\n");
    for e in &report.epochs {
        let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.step, e.train_loss, e.val_loss, e.lr);
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| io_error("write", path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error("create", path, e))
}

/// Compresses every image in parallel, keeping input order.
fn evaluate_all(
    loaded: &LoadedWeights<f64>,
    images: &[Tensor64],
    names: &[String],
) -> Result<Vec<RdPoint>, CliError> {
    let variant = loaded.model.config.variant;
    let points = images
        .par_iter()
        .zip(names)
        .map(|(img, name)| {
            analysis::evaluate_image(&loaded.model, loaded.id, loaded.lambda, img, format!("{variant}:{name}"))
                .map(|(_, p)| p)
        })
        .collect::<easn::Result<Vec<_>>>()?;
    let mean = analysis::mean_point(format!("{variant}:mean"), &points).expect("at least one image");
    Ok(points.into_iter().chain([mean]).collect())
}

pub fn train(config: &Path, overrides: Overrides) -> Result<(), CliError> {
    let (run, data, names) = load_run(config, &overrides)?;
    let (model, report) = fit(&run, &data)?;
    let bytes = weights::serialize(&model, run.train.lambda)?;
    let loaded = weights::deserialize::<f64>(&bytes)?;
    let val = data.split().1;
    let summary = evaluate_all(&loaded, &data.images[val.clone()], &names[val])?;

    create_dir(&run.out)?;
    write_file(&run.out.join(WEIGHTS_FILE), &bytes)?;
    write_file(&run.out.join(TRAIN_LOG_FILE), train_log_csv(&report).as_bytes())?;
    write_file(&run.out.join(SUMMARY_FILE), &analysis::rd_csv_bytes(&summary)?)?;

    let mean = summary.last().expect("mean row");
    println!(
        "trained {} for {} steps ({} epochs{}), weights {} id {}",
        run.model.variant,
        report.steps,
        report.epochs.len(),
        if report.stopped_early { ", stopped on plateau" } else { "" },
        run.out.join(WEIGHTS_FILE).display(),
        weights::format_model_id(&loaded.id)
    );
    println!("validation mean bpp {:.6} psnr {:.4} dB", mean.bpp, mean.psnr_db);
    Ok(())
}

pub fn compress(weights_path: &Path, image: &Path, out: &Path) -> Result<(), CliError> {
    let loaded = load_weights(weights_path)?;
    let x = load_image(image)?;
    let [_, _, h, w] = x.shape().0;
    let c = easn::codec::compress(&loaded.model, loaded.id, &x)?;
    write_file(out, &c.bytes)?;
    let size = fs::metadata(out).map_err(|e| io_error("stat", out, e))?.len();
    println!("bpp {}", analysis::bpp(size, w, h)?);
    Ok(())
}

pub fn decompress(weights_path: &Path, bitstream: &Path, out: &Path) -> Result<(), CliError> {
    let ext = out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if !matches!(ext.as_deref(), Some("png" | "ppm" | "pnm")) {
        return Err(CliError::Usage(format!(
            "output {} must end in .png, .ppm or .pnm",
            out.display()
        )));
    }
    let loaded = load_weights(weights_path)?;
    let bytes = fs::read(bitstream)
        .map_err(|e| CliError::Usage(format!("cannot read bitstream {}: {e}", bitstream.display())))?;
    let x = easn::codec::decompress(&loaded.model, loaded.id, &bytes)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", bitstream.display())))?;
    write_image(out, &x)?;
    let [_, _, h, w] = x.shape().0;
    println!("decoded {w}x{h} to {}", out.display());
    Ok(())
}

pub fn eval(weights_path: &Path, dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = load_weights(weights_path)?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let paths = list_images(dir).map_err(CliError::usage)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no images in {}", dir.display())));
    }
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = paths.iter().map(|p| stem(p)).collect();
    let points = evaluate_all(&loaded, &images, &names)?;
    let csv = analysis::rd_csv_bytes(&points)?;
    match out {
        Some(path) => {
            write_file(path, &csv)?;
            let mean = points.last().expect("mean row");
            println!(
                "{} images, mean bpp {:.6} psnr {:.4} dB, written to {}",
                images.len(),
                mean.bpp,
                mean.psnr_db,
                path.display()
            );
        }
        None => print!("{}", String::from_utf8_lossy(&csv)),
    }
    Ok(())
}

pub fn gradcheck(variant: Option<&str>, seed: u64, corrupt_backward: bool) -> Result<(), CliError> {
    let subjects = match variant {
        Some(name) => checks::variant_suite(name.parse::<Variant>().map_err(CliError::usage)?),
        None => checks::full_suite(),
    };
    easn::tape::set_corrupt_backward(corrupt_backward);
    let mut failures = 0usize;
    for &subject in &subjects {
        let (worst, groups) = check_subject(subject, seed)?;
        let ok = worst <= CHECK_TOLERANCE;
        failures += usize::from(!ok);
        println!(
            "{:<24} max rel error {worst:.3e} {}",
            subject.to_string(),
            if ok { "ok" } else { "FAIL" }
        );
        for (name, (elements, err)) in groups {
            println!("    {name:<36} {elements:>6} elements  {err:.3e}");
        }
    }
    easn::tape::set_corrupt_backward(false);
    if failures == 0 {
        println!("PASS: {} subjects within {CHECK_TOLERANCE:e}", subjects.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "FAIL: {failures} of {} subjects exceed {CHECK_TOLERANCE:e}",
            subjects.len()
        )))
    }
}

type GroupErrors = BTreeMap<String, (usize, f64)>;

/// Worst error of `subject` over the seeds, and per parameter group.
fn check_subject(subject: Subject, seed: u64) -> Result<(f64, GroupErrors), CliError> {
    let mut groups = GroupErrors::new();
    let mut worst = 0.0f64;
    for s in seed..seed + GRADCHECK_SEEDS {
        let report = checks::run_check(subject, s).map_err(|e| CliError::Runtime(format!("{subject}: {e}")))?;
        worst = worst.max(report.max_rel_error());
        for g in report.groups {
            let entry = groups.entry(g.name).or_insert((g.elements, 0.0));
            entry.1 = entry.1.max(g.max_rel_error);
        }
    }
    Ok((worst, groups))
}

fn model_variants() -> Vec<Variant> {
    Variant::ALL.into_iter().filter(|&v| v != Variant::GdnInverse).collect()
}

pub fn ablate(config: &Path, variants: &[String], overrides: Overrides) -> Result<(), CliError> {
    let variants: Vec<Variant> = if variants.is_empty() {
        model_variants()
    } else {
        variants
            .iter()
            .map(|v| v.trim().parse::<Variant>().map_err(CliError::usage))
            .collect::<Result<_, _>>()?
    };
    for (i, v) in variants.iter().enumerate() {
        if variants[..i].contains(v) {
            return Err(CliError::Usage(format!("variant {v} listed twice")));
        }
    }
    // Validate every variant's configuration before any training starts.
    let base = RunConfig::load(config)?;
    let runs = variants
        .iter()
        .map(|v| {
            base.resolve(
                &config_base(config),
                &Overrides {
                    variant: Some(v.name().to_string()),
                    ..overrides.clone()
                },
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (data, _) = load_dataset(&runs[0].dataset)?;
    if data.min_side() < runs[0].train.crop {
        return Err(CliError::Usage(format!(
            "the dataset has an image smaller than the {0}x{0} training crop",
            runs[0].train.crop
        )));
    }
    let out_dir = runs[0].out.clone();

    let mut table = format!("{ABLATION_HEADER}\n");
    println!("{ABLATION_HEADER}");
    for run in &runs {
        let (model, report) = fit(run, &data)?;
        let dir = out_dir.join(run.model.variant.name());
        create_dir(&dir)?;
        write_file(&dir.join(WEIGHTS_FILE), &weights::serialize(&model, run.train.lambda)?)?;
        write_file(&dir.join(TRAIN_LOG_FILE), train_log_csv(&report).as_bytes())?;
        let row = format!(
            "{},{},{},{}",
            run.model.variant,
            report.final_train_loss().unwrap_or(f64::NAN),
            report.final_val_loss().unwrap_or(f64::NAN),
            model.param_count()
        );
        println!("{row}");
        table.push_str(&row);
        table.push('\n');
    }
    write_file(&out_dir.join(ABLATION_FILE), table.as_bytes())
}

fn parse_region(text: &str, h: usize, w: usize) -> Result<Rect, CliError> {
    let bad = || CliError::Usage(format!("--region expects top,left,height,width inside the {h}x{w} image, got `{text}`"));
    let v: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [top, left, height, width] = v[..] else {
        return Err(bad());
    };
    if height == 0 || width == 0 || top + height > h || left + width > w {
        return Err(bad());
    }
    Ok(Rect {
        top,
        left,
        height,
        width,
    })
}

fn write_map(path: &Path, map: &HfMap) -> Result<(), CliError> {
    analysis::write_pgm(path, map).map_err(|e| io_error("write", path, e))
}

pub fn visualize(
    weight_paths: &[PathBuf],
    image: &Path,
    taps: &[String],
    region: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let mut labels: Vec<String> = Vec::new();
    let mut models = Vec::new();
    for p in weight_paths {
        let label = match p.parent().and_then(Path::file_name) {
            // `run/weights.bin` is labelled by its run directory.
            Some(dir) if stem(p) == stem(Path::new(WEIGHTS_FILE)) => dir.to_string_lossy().into_owned(),
            _ => stem(p),
        };
        if labels.contains(&label) {
            return Err(CliError::Usage(format!(
                "two weight files share the label `{label}`; rename one"
            )));
        }
        labels.push(label);
        models.push(load_weights(p)?);
    }
    // Validate taps against every model before writing anything.
    let mut per_model_taps = Vec::new();
    for (loaded, label) in models.iter().zip(&labels) {
        let valid = loaded.model.tap_names();
        let chosen: Vec<String> = if taps.is_empty() {
            valid.iter().filter(|t| t.starts_with("encoder.0")).cloned().collect()
        } else {
            taps.to_vec()
        };
        if let Some(bad) = chosen.iter().find(|t| !valid.contains(t)) {
            return Err(CliError::Usage(format!(
                "unknown tap `{bad}` for {label}; valid taps: {}",
                valid.join(", ")
            )));
        }
        per_model_taps.push(chosen);
    }

    let x = load_image(image)?;
    let [_, _, h, w] = x.shape().0;
    let gradient = analysis::log_gradient_map(&x, format!("log gradient of {}", image.display()))?;
    let rect = match region {
        Some(text) => parse_region(text, h, w)?,
        None => analysis::flattest_window(&gradient, (h.min(w) / 4).max(1)),
    };

    let mut outputs: Vec<(PathBuf, HfMap)> = Vec::new();
    let mut stats = String::new();
    let image_stem = stem(image);
    for ((loaded, label), taps) in models.iter().zip(&labels).zip(&per_model_taps) {
        let d = loaded.model.config.divisor();
        let (ph, pw) = (h.div_ceil(d) * d, w.div_ceil(d) * d);
        for tap in taps {
            let features = analysis::capture_scaling_features(&loaded.model, &x, tap)?;
            let map = analysis::high_freq_map(&features, format!("{label} {tap} on {}", image.display()))?;
            let r = rect.rescale(ph, pw, map.height, map.width);
            let stat = analysis::flat_region_stat(&map, r)?;
            let _ = writeln!(
                stats,
                "{label} lambda={} tap={tap} region={},{},{},{} flat_mean_abs={stat:.6e}",
                loaded.lambda, r.top, r.left, r.height, r.width
            );
            outputs.push((out.join(format!("{image_stem}.{label}.{tap}.pgm")), map));
        }
    }

    create_dir(out)?;
    write_map(&out.join(format!("{image_stem}.log_gradient.pgm")), &gradient)?;
    for (path, map) in &outputs {
        write_map(path, map)?;
    }
    write_file(&out.join(STATS_FILE), stats.as_bytes())?;
    print!(
        "region {},{},{},{} (image pixels)\n{stats}",
        rect.top, rect.left, rect.height, rect.width
    );
    Ok(())
}
