//! Acceptance gate. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use docsynth::augment::{augment_dataset, salt_pepper, AugmentParams};
use docsynth::background::{extract_background, BackgroundParams};
use docsynth::binarize::otsu_threshold;
use docsynth::compose::{composite, ForegroundLayer, Generator};
use docsynth::dataset::{generate_dataset, Backgrounds, BwMode, DatasetConfig};
use docsynth::manifest::{read_manifest, write_manifest, Augmentation};
use docsynth::metrics::{accuracy, error_metric, PredictionSet};
use docsynth::model::{load_model, parse_model};
use docsynth::raster::{Raster, Rect};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn shipped(name: &str) -> Generator {
    let model = load_model(&repo().join("models").join(name)).expect("shipped model parses");
    Generator::new(model).expect("shipped assets load")
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    if took > limit {
        Err(format!("took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Ok(took)
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Count-error oracle: direct transcription, rational result as (num, den).
fn brute_error(p: &[f64], r: &[u32]) -> (u64, u64) {
    let mut num = 0u64;
    let mut den = 0u64;
    for (&pi, &ri) in p.iter().zip(r) {
        // Half-up rounding by exhaustive search for the unique k with
        // k - 1/2 <= p < k + 1/2 on the doubled integer grid.
        let mut k = 0i64;
        while (2 * k + 1) as f64 <= 2.0 * pi {
            k += 1;
        }
        let k = k.max(0) as u64;
        num += k.abs_diff(ri as u64);
        den += ri as u64;
    }
    (num, den)
}

fn c1_count_error_oracle() -> Verdict {
    let started = Instant::now();
    let hand = PredictionSet::from_pairs(&[5.4, 2.2], &[5, 3]).unwrap();
    let e = error_metric(&hand).unwrap();
    ensure(e == 0.125, || format!("hand case gave {e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=50);
        let r: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=20)).collect();
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..25.0)).collect();
        // Put some predictions exactly on the rounding boundary.
        for v in p.iter_mut().filter(|_| rng.gen_bool(0.2)) {
            *v = v.floor() + 0.5;
        }
        let (num, den) = brute_error(&p, &r);
        let set = PredictionSet::from_pairs(&p, &r).unwrap();
        match error_metric(&set) {
            Ok(got) => {
                let want = num as f64 / den as f64;
                ensure(got == want, || format!("p={p:?} r={r:?}: {got} != {want}"))?;
                checked += 1;
            }
            Err(_) => ensure(den == 0, || format!("unexpected error on r={r:?}"))?,
        }
        let hits = p
            .iter()
            .zip(&r)
            .filter(|(pi, ri)| brute_error(&[**pi], &[**ri]).0 == 0)
            .count();
        let acc = accuracy(&set);
        ensure(acc == 100.0 * hits as f64 / n as f64, || format!("accuracy {acc}"))?;
    }
    let took = within(Duration::from_secs(1), started)?;
    Ok(format!("hand case 0.125; {checked}/1000 random sets exact; {:.0} ms", took.as_millis()))
}

// Between-class-variance maximizer over every threshold, exact arithmetic.
fn brute_otsu(img: &Raster) -> Option<u8> {
    let px: Vec<u64> = img.pixels().iter().map(|&v| v as u64).collect();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u64 {
        let (mut n0, mut s0, mut n1, mut s1) = (0u128, 0u128, 0u128, 0u128);
        for &v in &px {
            if v <= t {
                n0 += 1;
                s0 += v as u128;
            } else {
                n1 += 1;
                s1 += v as u128;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n1 * s0).abs_diff(n0 * s1);
        let (num, den) = (d * d, n0 * n1);
        // Strictly greater keeps the lowest threshold on ties.
        if best.is_none_or(|(_, bn, bd)| num * bd > bn * den) {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

fn random_image(rng: &mut ChaCha8Rng, kind: usize) -> Raster {
    let lo: u8 = rng.gen_range(0..200);
    let hi: u8 = rng.gen_range(lo..=255);
    let levels: Vec<u8> = (0..rng.gen_range(2..5)).map(|_| rng.gen()).collect();
    let split = rng.gen_range(0.05..0.6);
    Raster::gray_from_fn(64, 64, |_, _| match kind % 4 {
        0 => rng.gen(),
        1 => {
            if rng.gen_bool(split) {
                rng.gen_range(0..=lo.max(1))
            } else {
                rng.gen_range(lo..=hi)
            }
        }
        2 => levels[rng.gen_range(0..levels.len())],
        _ => {
            if kind % 40 == 3 {
                lo
            } else {
                rng.gen_range(lo..=hi.min(lo.saturating_add(3)))
            }
        }
    })
}

fn c2_otsu_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut constant = 0;
    for i in 0..200 {
        let img = random_image(&mut rng, i);
        let want = brute_otsu(&img);
        let got = otsu_threshold(&img);
        ensure(got == want, || format!("image {i}: got {got:?}, oracle {want:?}"))?;
        constant += usize::from(want.is_none());
    }
    let took = within(Duration::from_secs(5), started)?;
    Ok(format!("200 images exact ({constant} constant); {:.2}s", took.as_secs_f64()))
}

fn substrate(w: u32, h: u32) -> Raster {
    // Smooth diagonal ramp from 180 to 220.
    Raster::gray_from_fn(w, h, |x, y| {
        let t = (x as f64 / (w - 1) as f64 + y as f64 / (h - 1) as f64) / 2.0;
        (180.0 + 40.0 * t).round() as u8
    })
}

fn c3_background_fidelity() -> Verdict {
    let started = Instant::now();
    let g = shipped("table.xml");
    let (w, h) = (g.model().width, g.model().height);
    let truth = substrate(w, h);
    let params = BackgroundParams::default();
    let keep = (truth.pixel_count() * 99).div_ceil(100);
    let (mut worst_mad, mut worst_strict) = (0.0f64, 1.0f64);
    for seed in 0..20u64 {
        let (fg, _) = g.generate_page(1000 + seed).map_err(|e| e.to_string())?;
        let page = composite(&fg, &truth);
        let bg = extract_background(&page, &params);
        let mut diffs: Vec<u8> = bg
            .pixels()
            .iter()
            .zip(truth.pixels())
            .map(|(a, b)| a.abs_diff(*b))
            .collect();
        diffs.sort_unstable();
        // Mean absolute deviation over the best-matching 99% of pixels.
        let mad = diffs[..keep].iter().map(|&d| d as u64).sum::<u64>() as f64 / keep as f64;
        let strict = diffs.partition_point(|&d| d <= 5) as f64 / diffs.len() as f64;
        worst_mad = worst_mad.max(mad);
        worst_strict = worst_strict.min(strict);
        ensure(mad <= 5.0, || format!("page {seed}: deviation {mad:.3} over 99% of pixels"))?;
    }
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!(
        "20 pages {w}x{h}; worst deviation over 99% of pixels {worst_mad:.3}; \
         worst share of pixels individually within 5 levels {:.2}%; {:.1}s",
        100.0 * worst_strict,
        took.as_secs_f64()
    ))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn c4_generation_determinism() -> Verdict {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for (name, target, range) in [
        ("table.xml", (366, 256), (3, 9)),
        ("columns.xml", (450, 190), (1, 10)),
    ] {
        let g = shipped(name);
        let m = g.model();
        ensure((m.records_min, m.effective_records_max()) == range, || {
            format!("{name}: declared range {}..{}", m.records_min, m.effective_records_max())
        })?;
        let mut runs = Vec::new();
        for workers in [1usize, 4] {
            let out = tmp.path().join(format!("{name}-{workers}"));
            let cfg = DatasetConfig {
                count: 500,
                base_seed: 77,
                target: Some(target),
                bw: BwMode::Otsu,
                save_foreground: false,
                workers,
            };
            let rows = generate_dataset(&g, &Backgrounds::white(), &cfg, &out)
                .map_err(|e| format!("{name}: {e}"))?;
            write_manifest(&out.join("manifest.jsonl"), &rows).map_err(|e| e.to_string())?;
            for r in &rows {
                ensure((range.0..=range.1).contains(&r.record_count), || {
                    format!("{name} {}: {} records", r.page_id, r.record_count)
                })?;
                ensure(r.record_count as usize == r.record_boxes.len(), || {
                    format!("{name} {}: count {} vs {} boxes", r.page_id, r.record_count, r.record_boxes.len())
                })?;
            }
            runs.push(dir_bytes(&out));
        }
        ensure(runs[0].len() == 501, || format!("{name}: {} files", runs[0].len()))?;
        ensure(runs[0] == runs[1], || format!("{name}: bytes differ between 1 and 4 workers"))?;
        let rows = read_manifest(&tmp.path().join(format!("{name}-1/manifest.jsonl"))).unwrap();
        let seen: std::collections::BTreeSet<u32> = rows.iter().map(|r| r.record_count).collect();
        notes.push(format!("{name} counts {:?}", seen));
    }
    let took = within(Duration::from_secs(120), started)?;
    Ok(format!("2x500 pages identical at 1 and 4 workers; {}; {:.1}s", notes.join(", "), took.as_secs_f64()))
}

fn degenerate_model_xml() -> String {
    let font = repo().join("assets/fonts/DejaVuSerif-Italic.ttf");
    let words = repo().join("models/words/it.txt");
    // Header advance 60 from top 20; each record advances 110 and spans 90,
    // so records end at 170, 280, 390, 500 and a fifth would end at 610.
    format!(
        r#"<document width="600" height="800" top="20" minCorpusHeight="500" maxCorpusHeight="500" maxAppendRecords="10">
  <fonts><font name="f" path="{}"/></fonts>
  <dictionaries><dictionary name="d" path="{}"/></dictionaries>
  <header><line h="50" vspace="10"><cell x="400" w="150" font="f" dict="d" mandatory="true"/></line></header>
  <recordGroup prob="1">
    <line h="40" vspace="10" prob="1"><cell x="20" w="250" font="f" dict="d" prob="1"/><cell x="300" w="250" font="f" dict="d" prob="1"/></line>
    <line h="40" vspace="20" prob="1"><cell x="20" w="500" font="f" dict="d" prob="1"/></line>
  </recordGroup>
</document>"#,
        font.display(),
        words.display()
    )
}

fn c5_degenerate_geometry() -> Verdict {
    let started = Instant::now();
    let model = parse_model(&degenerate_model_xml()).map_err(|e| e.to_string())?;
    let g = Generator::new(model).map_err(|e| e.to_string())?;
    for seed in 0..100u64 {
        let seed = seed * 7919 + 3;
        let (_, layout) = g.generate_page(seed).map_err(|e| e.to_string())?;
        ensure(layout.record_count() == 4, || format!("seed {seed}: {} records", layout.record_count()))?;
    }
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("100 seeds, all 4 records; {:.2}s", took.as_secs_f64()))
}

fn c6_augmentation_contracts() -> Verdict {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = tmp.path().join("src");
    let g = shipped("table.xml");
    let cfg = DatasetConfig {
        count: 100,
        base_seed: 500,
        target: Some((366, 256)),
        workers: workers(),
        ..DatasetConfig::default()
    };
    let rows = generate_dataset(&g, &Backgrounds::white(), &cfg, &src).map_err(|e| e.to_string())?;

    let same = tmp.path().join("same");
    let out = augment_dataset(&rows, &src, &same, &AugmentParams::default(), workers())
        .map_err(|e| e.to_string())?;
    ensure(out == rows, || "identity changed the manifest".into())?;
    for r in &rows {
        let a = fs::read(src.join(&r.image)).unwrap();
        let b = fs::read(same.join(&r.image)).unwrap();
        ensure(a == b, || format!("{}: identity changed bytes", r.image))?;
    }

    let page = Raster::filled_gray(140, 140, 128);
    let region = Rect::new(20, 20, 100, 100);
    let (mut lo, mut hi) = (usize::MAX, 0);
    for t in 0..100u64 {
        let mut rng = docsynth::SeedTree::new(t).rng();
        let noisy = salt_pepper(&page, 0.1, Some(region), &mut rng);
        let flipped = noisy.pixels().iter().filter(|&&v| v != 128).count();
        (lo, hi) = (lo.min(flipped), hi.max(flipped));
        ensure((820..=1180).contains(&flipped), || format!("trial {t}: {flipped} flips"))?;
    }

    let rot = tmp.path().join("rot");
    let params = AugmentParams {
        rotate: 2.0,
        salt_pepper: 0.01,
        seed: 3,
        ..AugmentParams::default()
    };
    let out = augment_dataset(&rows, &src, &rot, &params, workers()).map_err(|e| e.to_string())?;
    let mut angles = Vec::new();
    for (before, after) in rows.iter().zip(&out) {
        ensure(before.record_count == after.record_count, || format!("{}: count changed", after.page_id))?;
        let angle = after.applied_augmentations.iter().find_map(|a| match a {
            Augmentation::Rotate { angle, .. } => Some(*angle),
            _ => None,
        });
        let angle = angle.ok_or_else(|| format!("{}: no rotation recorded", after.page_id))?;
        ensure((-2.0..=2.0).contains(&angle), || format!("{}: angle {angle}", after.page_id))?;
        angles.push(angle);
    }
    let spread = angles.iter().cloned().fold(f64::MIN, f64::max) - angles.iter().cloned().fold(f64::MAX, f64::min);
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!(
        "identity byte-exact; flips {lo}..{hi}; 100 angles in [-2, 2] (spread {spread:.2}); {:.1}s",
        took.as_secs_f64()
    ))
}

fn c7_throughput() -> Verdict {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let g = shipped("table.xml");
    let cfg = DatasetConfig {
        count: 1000,
        base_seed: 9000,
        target: Some((366, 256)),
        bw: BwMode::Otsu,
        save_foreground: false,
        workers: workers(),
    };
    let bg = Backgrounds::from_rasters(vec![("ramp".into(), substrate(800, 1100))]).unwrap();
    let rows = generate_dataset(&g, &bg, &cfg, tmp.path()).map_err(|e| e.to_string())?;
    write_manifest(&tmp.path().join("manifest.jsonl"), &rows).map_err(|e| e.to_string())?;
    ensure(rows.len() == 1000, || format!("{} pages", rows.len()))?;
    let took = within(Duration::from_secs(300), started)?;
    Ok(format!(
        "1000 black/white 366x256 pages with manifest on {} workers in {:.1}s",
        cfg.workers,
        took.as_secs_f64()
    ))
}

fn c8_compositing_exactness() -> Verdict {
    // Every (alpha, ink) pair over a substrate that sweeps all gray levels.
    let (w, h) = (256u32, 256u32);
    let mut layer = Raster::transparent(w, h);
    for y in 0..h {
        for x in 0..w {
            let ink = ((x * 7 + y * 13) % 256) as u8;
            layer.set_rgba(x, y, [ink, ink, ink, y as u8]);
        }
    }
    let fg = ForegroundLayer::from_raster(layer.clone()).ok_or("layer rejected")?;
    let bg = Raster::gray_from_fn(w, h, |x, _| x as u8);
    let out = composite(&fg, &bg);
    let mut mid = 0;
    for y in 0..h {
        for x in 0..w {
            let [ink, _, _, a] = layer.rgba(x, y);
            let (a, ink, b) = (a as u32, ink as u32, bg.gray(x, y) as u32);
            let want = match a {
                0 => b,
                255 => ink,
                // Half-up division on the doubled grid.
                _ => (2 * (a * ink + (255 - a) * b) + 255) / 510,
            };
            let got = out.gray(x, y) as u32;
            ensure(got == want, || format!("({x},{y}) a={a} ink={ink} bg={b}: {got} != {want}"))?;
            mid += usize::from(a == 128);
        }
    }
    Ok(format!("{} pixels exact, {mid} at alpha 128", w * h))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("count-error oracle", c1_count_error_oracle),
        ("otsu oracle", c2_otsu_oracle),
        ("background fidelity", c3_background_fidelity),
        ("generation determinism and labels", c4_generation_determinism),
        ("degenerate model geometry", c5_degenerate_geometry),
        ("augmentation contracts", c6_augmentation_contracts),
        ("throughput", c7_throughput),
        ("compositing exactness", c8_compositing_exactness),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
