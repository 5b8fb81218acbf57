//! CSV formats.
//!
//! All files are UTF-8, comma-separated, first line header, floats as
//! decimal text (shortest round-trip form on write). Exact headers:
//!
//! * light curves: `object_id,time,flux,flux_err,passband,redshift,mwebv,label`
//! * features:     `object_id,label,f0..f{d-1}`
//! * latents:      `object_id,label,z0..z{k-1}`
//! * ranked:       `rank,object_id,score,nearest_class,label`
//! * timelines:    `object_id,label,l,score,eligible`

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mcif_core::data::{FeatureVector, LcPoint, LightCurve, Passband};
use mcif_core::eval::{RecallAggregate, SweepRow};
use mcif_core::mcif::RankedObject;
use mcif_core::realtime::{MedianPoint, ScoreTimeline};

pub const LIGHT_CURVE_HEADER: [&str; 8] = [
    "object_id",
    "time",
    "flux",
    "flux_err",
    "passband",
    "redshift",
    "mwebv",
    "label",
];

pub const RANKED_HEADER: [&str; 5] = ["rank", "object_id", "score", "nearest_class", "label"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Rows rejected for non-positive flux_err.
    pub rows_dropped: usize,
    /// Objects left with no usable rows.
    pub objects_dropped: usize,
}

fn check_header(got: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let got_cols: Vec<&str> = got.iter().collect();
    let missing: Vec<&str> = expected
        .iter()
        .filter(|c| !got_cols.contains(*c))
        .copied()
        .collect();
    if !missing.is_empty() {
        bail!(
            "{}: malformed header, missing column(s): {}",
            path.display(),
            missing.join(", ")
        );
    }
    if got_cols != expected {
        bail!(
            "{}: header must be exactly `{}`, got `{}`",
            path.display(),
            expected.join(","),
            got_cols.join(",")
        );
    }
    Ok(())
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .with_context(|| format!("line {line}: cannot parse {what} from `{field}`"))
}

fn parse_opt_f64(field: &str, what: &str, line: usize) -> Result<Option<f64>> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    Ok(Some(parse_f64(t, what, line)?))
}

/// Load and group light curves. Rows with non-positive flux_err are dropped
/// per-row (counted in the returned stats); points are time-sorted per
/// object. Unknown passband tokens are a hard error with the line number.
pub fn load_light_curves(path: &Path) -> Result<(Vec<LightCurve>, LoadStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    check_header(reader.headers()?, &LIGHT_CURVE_HEADER, path)?;

    struct Partial {
        points: Vec<LcPoint>,
        redshift: Option<f64>,
        mwebv: Option<f64>,
        label: Option<String>,
        order: usize,
    }
    let mut objects: BTreeMap<String, Partial> = BTreeMap::new();
    let mut stats = LoadStats::default();
    let mut order = 0usize;

    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.with_context(|| format!("line {line}"))?;
        if record.len() != LIGHT_CURVE_HEADER.len() {
            bail!(
                "{}: line {line}: expected {} fields, got {}",
                path.display(),
                LIGHT_CURVE_HEADER.len(),
                record.len()
            );
        }
        let object_id = record[0].to_string();
        let time = parse_f64(&record[1], "time", line)?;
        let flux = parse_f64(&record[2], "flux", line)?;
        let flux_err = parse_f64(&record[3], "flux_err", line)?;
        let passband = Passband::parse(record[4].trim()).with_context(|| {
            format!(
                "{}: line {line}: unknown passband token `{}`",
                path.display(),
                &record[4]
            )
        })?;
        let redshift = parse_opt_f64(&record[5], "redshift", line)?;
        let mwebv = parse_opt_f64(&record[6], "mwebv", line)?;
        let label = {
            let t = record[7].trim();
            if t.is_empty() {
                None
            } else {
                Some(t.to_string())
            }
        };

        let entry = objects.entry(object_id).or_insert_with(|| {
            order += 1;
            Partial {
                points: Vec::new(),
                redshift,
                mwebv,
                label: label.clone(),
                order: order - 1,
            }
        });
        if entry.label.is_none() {
            entry.label = label;
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN flux_err is dropped too
        if !(flux_err > 0.0) {
            stats.rows_dropped += 1;
            continue;
        }
        entry.points.push(LcPoint {
            time,
            flux,
            flux_err,
            passband,
        });
    }

    let mut curves: Vec<(usize, LightCurve)> = Vec::with_capacity(objects.len());
    for (object_id, mut partial) in objects {
        if partial.points.is_empty() {
            stats.objects_dropped += 1;
            continue;
        }
        partial.points.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then_with(|| a.passband.cmp(&b.passband))
        });
        let lc = LightCurve {
            object_id,
            points: partial.points,
            redshift: partial.redshift,
            mwebv: partial.mwebv,
            label: partial.label,
        };
        lc.validate().map_err(anyhow::Error::msg)?;
        curves.push((partial.order, lc));
    }
    // Preserve first-appearance file order.
    curves.sort_by_key(|(order, _)| *order);
    Ok((curves.into_iter().map(|(_, lc)| lc).collect(), stats))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_light_curves(path: &Path, curves: &[LightCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LIGHT_CURVE_HEADER)?;
    for lc in curves {
        for p in &lc.points {
            w.write_record([
                lc.object_id.as_str(),
                &fmt(p.time),
                &fmt(p.flux),
                &fmt(p.flux_err),
                p.passband.as_str(),
                &lc.redshift.map(fmt).unwrap_or_default(),
                &lc.mwebv.map(fmt).unwrap_or_default(),
                lc.label.as_deref().unwrap_or(""),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a rectangular feature table `object_id,label,f0..f{d-1}`.
/// Non-finite cells and ragged rows are hard errors.
pub fn load_feature_table(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "object_id" || cols[1] != "label" {
        bail!(
            "{}: feature header must be `object_id,label,f0..`, got `{}`",
            path.display(),
            cols.join(",")
        );
    }
    for (j, name) in cols[2..].iter().enumerate() {
        if *name != format!("f{j}") {
            bail!(
                "{}: feature column {} must be named `f{j}`, got `{name}`",
                path.display(),
                j + 2
            );
        }
    }
    let d = cols.len() - 2;

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.with_context(|| format!("line {line}: inconsistent width"))?;
        if record.len() != d + 2 {
            bail!(
                "{}: line {line}: expected {} fields, got {}",
                path.display(),
                d + 2,
                record.len()
            );
        }
        let mut values = Vec::with_capacity(d);
        for (j, field) in record.iter().skip(2).enumerate() {
            let v = parse_f64(field, &format!("f{j}"), line)?;
            if !v.is_finite() {
                bail!(
                    "{}: non-finite value at line {line}, column f{j}",
                    path.display()
                );
            }
            values.push(v);
        }
        let label = {
            let t = record[1].trim();
            if t.is_empty() {
                None
            } else {
                Some(t.to_string())
            }
        };
        out.push(FeatureVector {
            object_id: record[0].to_string(),
            values,
            label,
        });
    }
    Ok(out)
}

pub fn write_feature_table(path: &Path, rows: &[FeatureVector]) -> Result<()> {
    let d = rows.first().map(|r| r.values.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["object_id".to_string(), "label".to_string()];
    header.extend((0..d).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.object_id.clone(), r.label.clone().unwrap_or_default()];
        rec.extend(r.values.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A latent row: id, label, vector.
pub type LatentRow = (String, Option<String>, Vec<f64>);

pub fn write_latents(path: &Path, rows: &[LatentRow]) -> Result<()> {
    let k = rows.first().map(|r| r.2.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["object_id".to_string(), "label".to_string()];
    header.extend((0..k).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for (id, label, z) in rows {
        let mut rec = vec![id.clone(), label.clone().unwrap_or_default()];
        rec.extend(z.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_latents(path: &Path) -> Result<Vec<LatentRow>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "object_id" || cols[1] != "label" || cols[2] != "z0" {
        bail!(
            "{}: latent header must be `object_id,label,z0..`, got `{}`",
            path.display(),
            cols.join(",")
        );
    }
    let k = cols.len() - 2;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != k + 2 {
            bail!("{}: line {line}: ragged latent row", path.display());
        }
        let label = {
            let t = record[1].trim();
            if t.is_empty() {
                None
            } else {
                Some(t.to_string())
            }
        };
        let mut z = Vec::with_capacity(k);
        for (j, field) in record.iter().skip(2).enumerate() {
            z.push(parse_f64(field, &format!("z{j}"), line)?);
        }
        out.push((record[0].to_string(), label, z));
    }
    Ok(out)
}

pub fn write_ranked(path: &Path, ranked: &[RankedObject]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RANKED_HEADER)?;
    for (i, r) in ranked.iter().enumerate() {
        w.write_record([
            &(i + 1).to_string(),
            r.object_id.as_str(),
            &fmt(r.score),
            r.nearest_class.as_str(),
            r.label.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores(path: &Path, ranked: &[RankedObject]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object_id", "score", "nearest_class", "label"])?;
    for r in ranked {
        w.write_record([
            r.object_id.as_str(),
            &fmt(r.score),
            r.nearest_class.as_str(),
            r.label.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_recall_curve(path: &Path, curve: &[RecallAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "mean_recovered", "std_recovered", "mean_fraction"])?;
    for p in curve {
        w.write_record([
            &p.k.to_string(),
            &fmt(p.mean_recovered),
            &fmt(p.std_recovered),
            &fmt(p.mean_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timelines(path: &Path, timelines: &[ScoreTimeline]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object_id", "label", "l", "score", "eligible"])?;
    for tl in timelines {
        for (l, score) in tl.days().zip(&tl.scores) {
            w.write_record([
                tl.object_id.as_str(),
                tl.label.as_deref().unwrap_or(""),
                &l.to_string(),
                &score.map(fmt).unwrap_or_default(),
                if score.is_some() { "true" } else { "false" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_median_curves(
    path: &Path,
    curves: &BTreeMap<String, Vec<MedianPoint>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "l", "median_score", "count"])?;
    for (class, points) in curves {
        for p in points {
            w.write_record([
                class.as_str(),
                &p.l.to_string(),
                &fmt(p.median),
                &p.count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dim", "auroc_mean", "auroc_std", "n_runs"])?;
    for r in rows {
        w.write_record([
            &r.dim.to_string(),
            &fmt(r.auroc_mean),
            &fmt(r.auroc_std),
            &r.n_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_training_log(path: &Path, log: &[mcif_core::encoder::EpochStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "train_loss",
        "train_accuracy",
        "val_loss",
        "val_accuracy",
    ])?;
    for e in log {
        w.write_record([
            &e.epoch.to_string(),
            &fmt(e.train_loss),
            &fmt(e.train_accuracy),
            &e.val_loss.map(fmt).unwrap_or_default(),
            &e.val_accuracy.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_and_groups_a_small_file() {
        let f = temp_csv(
            "object_id,time,flux,flux_err,passband,redshift,mwebv,label\n\
             obj1,1.0,5.0,0.5,g,0.1,0.02,SNIa\n\
             obj1,0.0,3.0,0.5,g,0.1,0.02,SNIa\n\
             obj1,2.0,4.0,0.5,r,0.1,0.02,SNIa\n",
        );
        let (curves, stats) = load_light_curves(f.path()).unwrap();
        assert_eq!(curves.len(), 1);
        assert_eq!(stats, LoadStats::default());
        let lc = &curves[0];
        assert_eq!(lc.points.len(), 3);
        // Time-sorted regardless of file order.
        assert_eq!(lc.points[0].time, 0.0);
        assert_eq!(lc.points[2].passband, Passband::R);
        assert_eq!(lc.redshift, Some(0.1));
    }

    #[test]
    fn drops_rows_with_bad_flux_err_and_counts_them() {
        let f = temp_csv(
            "object_id,time,flux,flux_err,passband,redshift,mwebv,label\n\
             obj1,0.0,3.0,0.5,g,,,\n\
             obj1,1.0,5.0,0,g,,,\n",
        );
        let (curves, stats) = load_light_curves(f.path()).unwrap();
        assert_eq!(curves[0].points.len(), 1);
        assert_eq!(stats.rows_dropped, 1);
        assert_eq!(curves[0].redshift, None);
        assert_eq!(curves[0].label, None);
    }

    #[test]
    fn missing_column_is_named() {
        let f = temp_csv("object_id,time,flux,passband,redshift,mwebv,label\nx,0,1,g,,,\n");
        let err = load_light_curves(f.path()).unwrap_err();
        assert!(err.to_string().contains("flux_err"), "{err}");
    }

    #[test]
    fn unknown_passband_reports_line() {
        let f = temp_csv(
            "object_id,time,flux,flux_err,passband,redshift,mwebv,label\n\
             obj1,0.0,3.0,0.5,g,,,\n\
             obj1,1.0,3.0,0.5,q,,,\n",
        );
        let err = load_light_curves(f.path()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains('q'), "{msg}");
    }

    #[test]
    fn light_curves_roundtrip_exactly() {
        // Shortest round-trip float formatting: write then load is exact.
        let curves = vec![LightCurve {
            object_id: "rt-0".into(),
            points: vec![
                LcPoint {
                    time: -3.25,
                    flux: 0.1,
                    flux_err: 0.01,
                    passband: Passband::G,
                },
                LcPoint {
                    time: 2.0 / 3.0,
                    flux: 123.456789012345,
                    flux_err: 1e-7,
                    passband: Passband::R,
                },
            ],
            redshift: Some(0.123456789),
            mwebv: None,
            label: Some("KNe".into()),
        }];
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_light_curves(f.path(), &curves).unwrap();
        let (loaded, stats) = load_light_curves(f.path()).unwrap();
        assert_eq!(stats, LoadStats::default());
        assert_eq!(loaded, curves);
    }

    #[test]
    fn synthetic_population_roundtrips_through_csv() {
        // Write-then-load over the 17-class generator output reproduces
        // every value; shortest round-trip float text makes this exact,
        // comfortably inside the 1e-12 contract.
        let mut config = mcif_core::synth::default_population(0.0005, 99).unwrap();
        config.counts.iter_mut().for_each(|(_, c)| *c = (*c).min(4));
        let curves = mcif_core::synth::generate(&config).unwrap();
        assert_eq!(
            curves
                .iter()
                .filter_map(|c| c.label.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .len(),
            17
        );
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_light_curves(f.path(), &curves).unwrap();
        let (loaded, stats) = load_light_curves(f.path()).unwrap();
        assert_eq!(stats, LoadStats::default());
        assert_eq!(loaded.len(), curves.len());
        for (a, b) in loaded.iter().zip(&curves) {
            assert_eq!(a.object_id, b.object_id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.points.len(), b.points.len());
            for (pa, pb) in a.points.iter().zip(&b.points) {
                assert!((pa.time - pb.time).abs() <= 1e-12);
                assert!((pa.flux - pb.flux).abs() <= 1e-12);
                assert!((pa.flux_err - pb.flux_err).abs() <= 1e-12);
                assert_eq!(pa.passband, pb.passband);
            }
        }
    }

    #[test]
    fn feature_table_shape_and_errors() {
        let f = temp_csv("object_id,label,f0,f1,f2\na,SNIa,1.0,2.0,3.0\nb,KNe,4,5,6\n");
        let rows = load_feature_table(f.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].values, vec![1.0, 2.0, 3.0]);

        let bad = temp_csv("object_id,label,f0,f1\na,SNIa,1.0,NaN\n");
        let err = load_feature_table(bad.path()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 2") && msg.contains("f1"), "{msg}");

        let ragged = temp_csv("object_id,label,f0,f1\na,SNIa,1.0\n");
        assert!(load_feature_table(ragged.path()).is_err());
    }

    #[test]
    fn ranked_csv_has_exact_header() {
        let ranked = vec![RankedObject {
            object_id: "x".into(),
            score: 0.75,
            nearest_class: "SNIa".into(),
            label: None,
        }];
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_ranked(f.path(), &ranked).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("rank,object_id,score,nearest_class,label\n"));
        assert!(text.contains("1,x,0.75,SNIa,"));
    }

    #[test]
    fn latents_roundtrip() {
        let rows: Vec<LatentRow> = vec![
            ("a".into(), Some("SNIa".into()), vec![0.5, -1.25]),
            ("b".into(), None, vec![1e-12, 3.0]),
        ];
        let f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_latents(f.path(), &rows).unwrap();
        assert_eq!(load_latents(f.path()).unwrap(), rows);
    }
}
