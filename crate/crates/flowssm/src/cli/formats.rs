//! CSV file formats owned by the CLI. Every file starts with `#`-prefixed
//! comment lines carrying the format version and, where needed, the
//! parameters required to interpret the rows (context length, window,
//! alpha). Readers tolerate and use those comments.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::detector::DetectionResult;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::series::TimeSeries;

pub const SERIES_VERSION: u32 = 1;
pub const DETECTIONS_VERSION: u32 = 1;

/// Writes `t,x0..x{D-1}[,label]` with a version comment.
pub fn write_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-series format_version={SERIES_VERSION}")?;
    let mut header = String::from("t");
    for d in 0..series.dims() {
        header.push_str(&format!(",x{d}"));
    }
    if series.labels().is_some() {
        header.push_str(",label");
    }
    writeln!(out, "{header}")?;
    for t in 0..series.len() {
        let mut row = t.to_string();
        for v in series.row(t) {
            row.push_str(&format!(",{v}"));
        }
        if let Some(labels) = series.labels() {
            row.push_str(if labels[t] { ",1" } else { ",0" });
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Reads a series file; accepts any column count `>= 2`, with an optional
/// trailing `label` column, and demands `t` strictly increasing from 0.
pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("t") {
        return Err(Error::invalid("series file must start with a `t` column"));
    }
    let has_label = headers.iter().last() == Some("label");
    let value_cols = headers.len() - 1 - usize::from(has_label);
    if value_cols == 0 {
        return Err(Error::invalid("series file has no value columns"));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::invalid(format!("row {idx} has inconsistent column count")));
        }
        let t: usize = record[0]
            .parse()
            .map_err(|_| Error::invalid(format!("row {idx}: bad timestep `{}`", &record[0])))?;
        if t != idx {
            return Err(Error::invalid(format!(
                "timesteps must increase strictly from 0; row {idx} has t={t}"
            )));
        }
        let mut row = Vec::with_capacity(value_cols);
        for c in 1..=value_cols {
            let v: f64 = record[c]
                .parse()
                .map_err(|_| Error::invalid(format!("row {idx}: bad value `{}`", &record[c])))?;
            row.push(v);
        }
        values.push(row);
        if has_label {
            let raw = &record[headers.len() - 1];
            labels.push(match raw {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::invalid(format!("row {idx}: bad label `{other}`")))
                }
            });
        }
    }
    TimeSeries::new(values, has_label.then_some(labels))
}

/// Detection export: per-timestep scores/flags with the parameters needed to
/// re-derive masks and buffers stored as comments.
pub fn write_detections(
    path: &Path,
    result: &DetectionResult,
    labels: Option<&[bool]>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-detections format_version={DETECTIONS_VERSION}")?;
    writeln!(
        out,
        "# k={} w={} stride={} alpha={}",
        result.context, result.window, result.stride, result.alpha
    )?;
    let mut header = String::from("t,ks_score,ks_flag,nll_score");
    if labels.is_some() {
        header.push_str(",label");
    }
    writeln!(out, "{header}")?;
    for t in 0..result.ks_score.len() {
        let mut row = format!(
            "{t},{},{},{}",
            result.ks_score[t],
            u8::from(result.ks_flag[t]),
            result.nll_score[t]
        );
        if let Some(l) = labels {
            row.push_str(if l[t] { ",1" } else { ",0" });
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Parsed detection file: scores plus the metadata comment.
pub struct DetectionsFile {
    pub ks_score: Vec<f64>,
    pub ks_flag: Vec<bool>,
    pub nll_score: Vec<f64>,
    pub labels: Option<Vec<bool>>,
    pub context: usize,
    pub window: usize,
    pub alpha: f64,
}

pub fn read_detections(path: &Path) -> Result<DetectionsFile> {
    let text = std::fs::read_to_string(path)?;
    let mut context = None;
    let mut window = None;
    let mut alpha = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for token in line.trim_start_matches('#').split_whitespace() {
            if let Some(v) = token.strip_prefix("k=") {
                context = v.parse().ok();
            } else if let Some(v) = token.strip_prefix("w=") {
                window = v.parse().ok();
            } else if let Some(v) = token.strip_prefix("alpha=") {
                alpha = v.parse().ok();
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["t", "ks_score", "ks_flag", "nll_score"];
    for (i, name) in expected.iter().enumerate() {
        if headers.get(i) != Some(*name) {
            return Err(Error::invalid(format!(
                "detections file missing column `{name}` at position {i}"
            )));
        }
    }
    let has_label = headers.iter().any(|h| h == "label");
    let mut ks_score = Vec::new();
    let mut ks_flag = Vec::new();
    let mut nll_score = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let t: usize = record[0].parse().map_err(|_| Error::invalid("bad timestep"))?;
        if t != idx {
            return Err(Error::invalid("detection rows must cover t = 0..T-1 in order"));
        }
        ks_score.push(record[1].parse().map_err(|_| Error::invalid("bad ks_score"))?);
        ks_flag.push(&record[2] == "1");
        nll_score.push(record[3].parse().map_err(|_| Error::invalid("bad nll_score"))?);
        if has_label {
            labels.push(&record[4] == "1");
        }
    }
    if ks_score.is_empty() {
        return Err(Error::invalid("detections file has no rows"));
    }
    Ok(DetectionsFile {
        ks_score,
        ks_flag,
        nll_score,
        labels: has_label.then_some(labels),
        context: context.ok_or_else(|| Error::invalid("detections file lacks `# k=` comment"))?,
        window: window.unwrap_or(0),
        alpha: alpha.unwrap_or(0.05),
    })
}

pub fn write_loss_history(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-loss format_version=1")?;
    writeln!(out, "epoch,loss")?;
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(out, "{epoch},{loss}")?;
    }
    Ok(())
}

/// One metrics row per (dataset, score source, window).
pub fn write_metric_rows(path: &Path, rows: &[(String, String, usize, MetricReport)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-metrics format_version=1")?;
    writeln!(
        out,
        "dataset,score_source,window,max_buffer,auc_roc,auc_pr,vus_roc,vus_pr,f1_standard,f1_point_adjusted,threshold"
    )?;
    for (dataset, source, window, report) in rows {
        writeln!(
            out,
            "{dataset},{source},{window},{},{},{},{},{},{},{},{}",
            report.max_buffer,
            report.auc_roc,
            report.auc_pr,
            report.vus_roc,
            report.vus_pr,
            report.f1_standard,
            report.f1_point_adjusted,
            report.threshold
        )?;
    }
    Ok(())
}

/// Whitened-latent export: `t,z0..z{D-1}` over the scored range.
pub fn write_latents(path: &Path, whitened: &[Vec<f64>], k: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-latents format_version=1 k={k}")?;
    let dims = whitened.first().map(Vec::len).unwrap_or(0);
    let mut header = String::from("t");
    for d in 0..dims {
        header.push_str(&format!(",z{d}"));
    }
    writeln!(out, "{header}")?;
    for (i, row) in whitened.iter().enumerate() {
        let mut line = (k + i).to_string();
        for v in row {
            line.push_str(&format!(",{v}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_latents(path: &Path) -> Result<(Vec<Vec<f64>>, usize)> {
    let file = std::fs::File::open(path)?;
    let mut k = 0usize;
    let mut first_line = String::new();
    {
        let mut peek = std::io::BufReader::new(std::fs::File::open(path)?);
        peek.read_line(&mut first_line)?;
        for token in first_line.trim_start_matches('#').split_whitespace() {
            if let Some(v) = token.strip_prefix("k=") {
                k = v.parse().unwrap_or(0);
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(str::parse::<f64>).collect();
        rows.push(row.map_err(|_| Error::invalid("bad latent value"))?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("latents file has no rows"));
    }
    Ok((rows, k))
}

/// Long-format heatmap export from a detections file: one `(t, channel,
/// value)` row per score channel and timestep.
pub fn write_heatmap(path: &Path, det: &DetectionsFile) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-plotdata format_version=1")?;
    writeln!(out, "t,channel,value")?;
    for t in 0..det.ks_score.len() {
        writeln!(out, "{t},ks_score,{}", det.ks_score[t])?;
        writeln!(out, "{t},ks_flag,{}", u8::from(det.ks_flag[t]))?;
        writeln!(out, "{t},nll_score,{}", det.nll_score[t])?;
        if let Some(labels) = &det.labels {
            writeln!(out, "{t},label,{}", u8::from(labels[t]))?;
        }
    }
    Ok(())
}

/// Scatter export of 2-D latent projections: every unordered dimension pair.
pub fn write_scatter(path: &Path, whitened: &[Vec<f64>], k: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# flowssm-plotdata format_version=1 k={k}")?;
    writeln!(out, "pair,t,u,v")?;
    let dims = whitened.first().map(Vec::len).unwrap_or(0);
    for i in 0..dims {
        for j in i + 1..dims {
            for (idx, row) in whitened.iter().enumerate() {
                writeln!(out, "z{i}-z{j},{},{},{}", k + idx, row[i], row[j])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn series_roundtrip_with_labels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let series = TimeSeries::new(
            vec![vec![0.5, -1.0], vec![0.25, 2.0], vec![-0.125, 0.0]],
            Some(vec![false, true, false]),
        )
        .unwrap();
        write_series(&path, &series).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn series_roundtrip_without_labels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let series = TimeSeries::new(vec![vec![1.0], vec![2.5]], None).unwrap();
        write_series(&path, &series).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn series_rejects_gap_in_timesteps() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("series.csv");
        std::fs::write(&path, "t,x0\n0,1.0\n2,2.0\n").unwrap();
        assert!(read_series(&path).is_err());
    }

    #[test]
    fn detections_roundtrip_preserves_metadata() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("det.csv");
        let det = DetectionResult {
            ks_score: vec![0.0, 0.1, 0.4],
            ks_flag: vec![false, false, true],
            nll_score: vec![0.0, 2.0, 9.5],
            windows: vec![],
            context: 1,
            window: 2,
            stride: 1,
            alpha: 0.05,
        };
        write_detections(&path, &det, Some(&[false, false, true])).unwrap();
        let parsed = read_detections(&path).unwrap();
        assert_eq!(parsed.context, 1);
        assert_eq!(parsed.window, 2);
        assert_eq!(parsed.ks_score, det.ks_score);
        assert_eq!(parsed.labels, Some(vec![false, false, true]));
    }

    #[test]
    fn latents_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("z.csv");
        let latents = vec![vec![0.1, -0.2], vec![0.3, 0.4]];
        write_latents(&path, &latents, 5).unwrap();
        let (back, k) = read_latents(&path).unwrap();
        assert_eq!(back, latents);
        assert_eq!(k, 5);
    }
}
