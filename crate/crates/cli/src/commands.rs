//! One function per subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use seisr::analysis::{build_comparison_report, fourier_amplitude_spectrum, ComparisonReport, SpectrumResult};
use seisr::codec::{decode_tiles, dequantize, quantize, tile_file_name, TileKind};
use seisr::gm_io::{
    load_record_triplet, parse_peer_record, split_dataset, synthesize_record, Channel, GroundMotionRecord,
};
use seisr::metrics::format_metric;
use seisr::model::{load_checkpoint, save_checkpoint, FeatureExtractor, VggFeatures};
use seisr::training::{generate_tiles, train, TilePair, TrainError};

use crate::config::RunConfig;
use crate::store::{
    list_records, parse_series_csv, sanitize_id, series_csv, table, write_atomic, write_png_atomic, write_record,
    StoredRecord, WrittenRecord,
};
use crate::Failure;

type CmdResult = Result<(), Failure>;

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_written(written: &[WrittenRecord], out: &Path) {
    let mut rows: Vec<Vec<String>> =
        written.iter().map(|w| vec![w.record_id.clone(), w.tiles.to_string(), w.samples.to_string()]).collect();
    rows.push(vec![
        format!("total ({} records)", written.len()),
        written.iter().map(|w| w.tiles).sum::<usize>().to_string(),
        written.iter().map(|w| w.samples).sum::<usize>().to_string(),
    ]);
    print!("{}", table(&["record", "tiles", "samples"], &rows));
    println!("written to {}", out.display());
}

const PEER_EXTENSIONS: [&str; 3] = ["AT2", "VT2", "DT2"];

/// Groups PEER files into acceleration/velocity/displacement triplets by
/// file stem.
fn peer_triplets(paths: &[PathBuf]) -> anyhow::Result<BTreeMap<String, [Option<PathBuf>; 3]>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            entries.sort();
            files.extend(entries.into_iter().filter(|e| e.is_file() && peer_slot(e).is_some()));
        } else if p.is_file() {
            if peer_slot(p).is_none() {
                return Err(anyhow!("{}: expected a .AT2, .VT2 or .DT2 file", p.display()));
            }
            files.push(p.clone());
        } else {
            return Err(anyhow!("{} does not exist", p.display()));
        }
    }
    let mut groups: BTreeMap<String, [Option<PathBuf>; 3]> = BTreeMap::new();
    for f in files {
        let slot = peer_slot(&f).expect("filtered above");
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        groups.entry(stem).or_default()[slot] = Some(f);
    }
    Ok(groups)
}

fn peer_slot(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_string_lossy().to_ascii_uppercase();
    PEER_EXTENSIONS.iter().position(|e| *e == ext)
}

pub fn ingest(paths: &[PathBuf], out: &Path) -> CmdResult {
    let groups = peer_triplets(paths)?;
    if groups.is_empty() {
        return Err(Failure::Usage(anyhow!("no .AT2/.VT2/.DT2 files among the inputs")));
    }
    create_dir(out)?;
    let mut written = Vec::new();
    for (stem, slots) in &groups {
        let mut texts = Vec::with_capacity(3);
        for (slot, ext) in slots.iter().zip(PEER_EXTENSIONS) {
            let path = slot.as_ref().ok_or_else(|| anyhow!("{stem}: missing the .{ext} file of the triplet"))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_peer_record(&text).with_context(|| path.display().to_string())?;
            texts.push(text);
        }
        let rec =
            load_record_triplet(&texts[0], &texts[1], &texts[2], stem).with_context(|| format!("record {stem}"))?;
        info!("ingested {stem}: {} samples at dt {}", rec.len(), rec.dt);
        written.push(write_record(out, &rec)?);
    }
    print_written(&written, out);
    Ok(())
}

pub struct SynthOptions {
    pub seed: u64,
    pub count: usize,
    pub samples: usize,
    pub dt: f64,
    pub modes: usize,
}

pub fn synth(o: &SynthOptions, out: &Path) -> CmdResult {
    if o.count == 0 {
        return Err(Failure::Usage(anyhow!("--count must be at least 1")));
    }
    create_dir(out)?;
    let mut written = Vec::with_capacity(o.count);
    for i in 0..o.count as u64 {
        let rec = synthesize_record(o.seed + i, o.samples, o.dt, o.modes).map_err(|e| Failure::Usage(e.into()))?;
        written.push(write_record(out, &rec)?);
    }
    print_written(&written, out);
    Ok(())
}

pub fn encode(inputs: &[PathBuf], dt: Option<f64>, out: &Path) -> CmdResult {
    create_dir(out)?;
    let mut written = Vec::with_capacity(inputs.len());
    for path in inputs {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let id = stem.strip_suffix("_series").unwrap_or(&stem);
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let rec = parse_series_csv(&text, id, dt).with_context(|| path.display().to_string())?;
        written.push(write_record(out, &rec)?);
    }
    print_written(&written, out);
    Ok(())
}

fn load_pairs(records: &[StoredRecord]) -> anyhow::Result<Vec<TilePair>> {
    let mut pairs = Vec::new();
    for r in records {
        let hr = r.tiles(TileKind::Hr)?;
        let lr = r.tiles(TileKind::Lr)?;
        pairs.extend(hr.into_iter().zip(lr).map(|(hr, lr)| TilePair { lr, hr }));
    }
    Ok(pairs)
}

fn write_history(out: &Path, history: &seisr::training::LossHistory) -> anyhow::Result<()> {
    write_atomic(&out.join("loss.csv"), history.to_csv().as_bytes())?;
    write_atomic(&out.join("loss_components.csv"), history.components_csv().as_bytes())
}

pub fn train_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let dataset = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Failure::Usage(anyhow!("no dataset given (--dataset or `dataset = ...`)")))?;
    cfg.check_paths().map_err(Failure::Usage)?;
    let train_cfg = cfg.train_config(out.join("checkpoints")).map_err(Failure::Usage)?;
    create_dir(out)?;
    write_atomic(&out.join("config.txt"), cfg.render().as_bytes())?;

    let records = list_records(dataset)?;
    let (train_recs, test_recs) =
        split_dataset(records, cfg.test_fraction, cfg.seed).map_err(|e| Failure::Usage(e.into()))?;
    let mut split = String::from("record_id,split\n");
    for (recs, name) in [(&train_recs, "train"), (&test_recs, "test")] {
        for r in recs.iter() {
            let _ = writeln!(split, "{},{name}", r.id());
        }
    }
    write_atomic(&out.join("split.csv"), split.as_bytes())?;
    let train_pairs = load_pairs(&train_recs)?;
    let test_pairs = load_pairs(&test_recs)?;
    info!(
        "{} training tiles from {} records, {} test tiles from {} records",
        train_pairs.len(),
        train_recs.len(),
        test_pairs.len(),
        test_recs.len()
    );

    let mut vgg = match &cfg.vgg_weights {
        Some(path) => {
            let mut v = VggFeatures::<f32>::load_vgg19(path).map_err(|e| Failure::Data(e.into()))?;
            v.vgg_input_norm = true;
            Some(v)
        }
        None => {
            warn!("no vgg_weights given; the content loss is disabled");
            None
        }
    };
    let phi = vgg.as_mut().map(|v| v as &mut dyn FeatureExtractor<f32>);

    let outcome = match train(&train_cfg, &train_pairs, &test_pairs, phi) {
        Ok(o) => o,
        Err(TrainError::Diverged { epoch, cause, last_checkpoint, history }) => {
            write_history(out, &history)?;
            let resume = last_checkpoint
                .map_or("no checkpoint was written".to_string(), |p| format!("last checkpoint {}", p.display()));
            return Err(Failure::Diverged(anyhow!("training diverged at epoch {epoch}: {cause}; {resume}")));
        }
        Err(e) => return Err(Failure::Data(e.into())),
    };
    write_history(out, &outcome.history)?;
    let final_dir = out.join("checkpoints").join("final");
    save_checkpoint(
        &final_dir,
        &outcome.generator,
        &outcome.discriminator,
        train_cfg.total_epochs,
        train_cfg.adversarial_mode,
    )
    .map_err(|e| Failure::Data(e.into()))?;

    let last = outcome.history.last().expect("at least one epoch");
    let rows = vec![
        vec!["epochs".into(), last.epoch.to_string()],
        vec!["final train loss".into(), format!("{:e}", last.train.total)],
        vec!["final test loss".into(), format!("{:e}", last.test.total)],
        vec!["final discriminator loss".into(), format!("{:e}", last.discriminator)],
        vec!["best epoch".into(), outcome.best_epoch.to_string()],
        vec!["best test loss".into(), format!("{:e}", outcome.best_test_loss)],
    ];
    print!("{}", table(&["quantity", "value"], &rows));
    println!("checkpoints in {}", out.join("checkpoints").display());
    Ok(())
}

pub fn infer(checkpoint: &Path, input: &Path, batch: usize, out: &Path) -> CmdResult {
    if batch == 0 {
        return Err(Failure::Usage(anyhow!("--batch must be at least 1")));
    }
    let loaded = load_checkpoint::<f32>(checkpoint).map_err(|e| Failure::Data(e.into()))?;
    let mut g = loaded.generator;
    let records = list_records(input)?;
    create_dir(out)?;
    let mut rows = Vec::new();
    for r in &records {
        let lr = r.tiles(TileKind::Lr)?;
        let generated = generate_tiles(&mut g, &lr, batch).map_err(|e| Failure::Data(anyhow!("{}: {e}", r.id())))?;
        let dir = out.join(r.id());
        create_dir(&dir)?;
        for (k, t) in generated.iter().enumerate() {
            write_png_atomic(&dir.join(tile_file_name(r.id(), k, TileKind::Gen)), t)?;
        }
        // decode what was written, so the series matches the PNGs
        let written: Vec<_> =
            generated.iter().map(|t| quantize(t).map(|q| dequantize(&q))).collect::<Result<_, _>>()?;
        let rec = decode_tiles(&written, &r.metadata())?;
        write_atomic(&dir.join(format!("{}.meta", r.id())), r.sidecar.render().as_bytes())?;
        write_atomic(&dir.join(format!("{}_series.csv", r.id())), series_csv(&rec).as_bytes())?;
        rows.push(vec![
            r.id().to_string(),
            generated.len().to_string(),
            format!("{}×{}×3", generated[0].side(), generated[0].side()),
        ]);
    }
    print!("{}", table(&["record", "tiles", "tile shape"], &rows));
    println!("generated tiles in {}", out.display());
    Ok(())
}

/// `freq_hz,amp_real,amp_generated`
fn spectrum_pair_csv(real: &SpectrumResult, generated: &SpectrumResult) -> String {
    let mut s = String::from("freq_hz,amp_real,amp_generated\n");
    for ((f, a), b) in real.frequencies.iter().zip(&real.amplitudes).zip(&generated.amplitudes) {
        let _ = writeln!(s, "{f},{a},{b}");
    }
    s
}

/// Real, generated and interpolated series side by side.
fn timeseries_csv(real: &GroundMotionRecord, generated: &GroundMotionRecord, report: &ComparisonReport) -> String {
    let mut s = String::from("time_s");
    for c in Channel::ALL {
        let n = c.name();
        let _ = write!(s, ",real_{n},srgan_{n},interp_{n}");
    }
    s.push('\n');
    for i in 0..real.len() {
        let _ = write!(s, "{}", i as f64 * real.dt);
        for c in Channel::ALL {
            let _ =
                write!(s, ",{},{},{}", real.channel(c)[i], generated.channel(c)[i], report.interpolated.channel(c)[i]);
        }
        s.push('\n');
    }
    s
}

/// Which SSIM variant the evaluation tables report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsimWindowMode {
    Full,
    Sliding,
}

impl FromStr for SsimWindowMode {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "sliding" => Ok(Self::Sliding),
            other => bail!("unknown ssim window `{other}` (expected full or sliding)"),
        }
    }
}

impl SsimWindowMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Sliding => "sliding",
        }
    }
}

pub fn evaluate(dataset: &Path, generated: &Path, window: SsimWindowMode, out: &Path) -> CmdResult {
    let reals = list_records(dataset)?;
    let gens = list_records(generated)?;
    create_dir(out)?;
    let mut report_csv = String::from("record_id,channel,mse_srgan,mse_interp\n");
    let mut metrics_csv = String::from("record_id,tile,ssim,psnr,mse\n");
    let mut interp_csv = String::from("record_id,tile,ssim,psnr,mse\n");
    let mut rows = Vec::new();
    for g in &gens {
        let r = reals
            .iter()
            .find(|r| r.id() == g.id())
            .ok_or_else(|| anyhow!("record {} is not in {}", g.id(), dataset.display()))?;
        let real = r.record(TileKind::Hr)?;
        let lr = r.lr_record()?;
        let kind = if g.has_tiles(TileKind::Gen) { TileKind::Gen } else { TileKind::Hr };
        let gen = g.record(kind)?;
        let report = build_comparison_report(&real, &gen, &lr).with_context(|| g.id().to_string())?;

        for c in &report.channels {
            let _ = writeln!(report_csv, "{},{},{},{}", g.id(), c.channel.name(), c.mse_srgan, c.mse_interp);
            rows.push(vec![
                g.id().to_string(),
                c.channel.name().to_string(),
                format!("{:.4e}", c.mse_srgan),
                format!("{:.4e}", c.mse_interp),
                if c.mse_srgan < c.mse_interp { "srgan" } else { "interpolation" }.to_string(),
            ]);
        }
        for t in &report.tiles {
            let (s, i) = match window {
                SsimWindowMode::Full => (t.srgan.ssim, t.interp.ssim),
                SsimWindowMode::Sliding => (t.srgan_ssim_sliding, t.interp_ssim_sliding),
            };
            let _ = writeln!(
                metrics_csv,
                "{},{},{},{},{}",
                g.id(),
                t.tile,
                format_metric(s),
                format_metric(t.srgan.psnr),
                format_metric(t.srgan.mse)
            );
            let _ = writeln!(
                interp_csv,
                "{},{},{},{},{}",
                g.id(),
                t.tile,
                format_metric(i),
                format_metric(t.interp.psnr),
                format_metric(t.interp.mse)
            );
        }

        let dir = out.join(g.id());
        create_dir(&dir)?;
        write_atomic(&dir.join(format!("{}_timeseries.csv", g.id())), timeseries_csv(&real, &gen, &report).as_bytes())?;
        for sp in &report.spectra {
            let name = format!("{}_spectrum_{}.csv", g.id(), sp.channel.name());
            write_atomic(&dir.join(name), spectrum_pair_csv(&sp.real, &sp.generated).as_bytes())?;
        }
    }
    write_atomic(&out.join("report.csv"), report_csv.as_bytes())?;
    write_atomic(&out.join("metrics.csv"), metrics_csv.as_bytes())?;
    write_atomic(&out.join("metrics_interp.csv"), interp_csv.as_bytes())?;
    print!("{}", table(&["record", "channel", "mse_srgan", "mse_interp", "lower"], &rows));
    println!("SSIM window: {}; reports in {}", window.name(), out.display());
    Ok(())
}

fn spectrum_records(input: &Path) -> anyhow::Result<Vec<GroundMotionRecord>> {
    if input.is_file() {
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let id = stem.strip_suffix("_series").unwrap_or(&stem).to_string();
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        return Ok(vec![parse_series_csv(&text, &id, None).with_context(|| input.display().to_string())?]);
    }
    list_records(input)?.iter().map(|r| r.record(TileKind::Hr)).collect()
}

pub fn spectrum(input: &Path, generated: Option<&Path>, out: &Path) -> CmdResult {
    let reals = spectrum_records(input)?;
    let gens = generated.map(spectrum_records).transpose()?;
    create_dir(out)?;
    let mut rows = Vec::new();
    for real in &reals {
        let id = sanitize_id(&real.record_id);
        let spectra: Vec<SpectrumResult> = Channel::ALL
            .iter()
            .map(|&c| fourier_amplitude_spectrum(real.channel(c), real.dt))
            .collect::<Result<_, _>>()?;
        match &gens {
            None => {
                let mut s = String::from("freq_hz,acceleration,velocity,displacement\n");
                for k in 0..spectra[0].frequencies.len() {
                    let _ = writeln!(
                        s,
                        "{},{},{},{}",
                        spectra[0].frequencies[k],
                        spectra[0].amplitudes[k],
                        spectra[1].amplitudes[k],
                        spectra[2].amplitudes[k]
                    );
                }
                write_atomic(&out.join(format!("{id}_spectrum.csv")), s.as_bytes())?;
            }
            Some(gens) => {
                let gen = gens
                    .iter()
                    .find(|g| g.record_id == real.record_id)
                    .ok_or_else(|| anyhow!("no generated record {}", real.record_id))?;
                if gen.len() != real.len() {
                    return Err(Failure::Data(anyhow!(
                        "{}: {} real vs {} generated samples",
                        id,
                        real.len(),
                        gen.len()
                    )));
                }
                for (c, sp) in Channel::ALL.iter().zip(&spectra) {
                    let g = fourier_amplitude_spectrum(gen.channel(*c), gen.dt)?;
                    write_atomic(
                        &out.join(format!("{id}_spectrum_{}.csv", c.name())),
                        spectrum_pair_csv(sp, &g).as_bytes(),
                    )?;
                }
            }
        }
        let (k, peak) =
            spectra[0].amplitudes.iter().enumerate().fold((0, 0.0), |m, (k, &a)| if a > m.1 { (k, a) } else { m });
        rows.push(vec![id, real.len().to_string(), format!("{:.4}", spectra[0].frequencies[k]), format!("{peak:.4e}")]);
    }
    print!("{}", table(&["record", "samples", "peak acc. freq (Hz)", "peak amplitude"], &rows));
    println!("spectra in {}", out.display());
    Ok(())
}
