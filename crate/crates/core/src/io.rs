//! File formats: GMT gene sets, expression and phenotype CSV.
//!
//! Expression files are samples × genes with a header of gene names and a
//! leading sample-ID column. Phenotype files hold `sample_id,label` rows with
//! labels 0/1 and an optional header. Samples are joined by ID.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GmtSet {
    pub name: String,
    pub description: String,
    pub genes: Vec<String>,
}

pub fn read_gmt(path: &Path) -> Result<Vec<GmtSet>> {
    parse_gmt(BufReader::new(File::open(path)?), path)
}

pub fn parse_gmt<R: BufRead>(reader: R, path: &Path) -> Result<Vec<GmtSet>> {
    let mut sets = Vec::new();
    let mut names = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or("").trim().to_string();
        if name.is_empty() {
            return Err(parse_err(path, i + 1, "missing set name"));
        }
        let description = fields
            .next()
            .ok_or_else(|| parse_err(path, i + 1, format!("set `{name}` has no description field")))?
            .to_string();
        let mut seen = HashSet::new();
        let genes: Vec<String> = fields
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .filter(|g| seen.insert(g.to_string()))
            .map(str::to_string)
            .collect();
        if !names.insert(name.clone()) {
            return Err(parse_err(path, i + 1, format!("duplicate set name `{name}`")));
        }
        sets.push(GmtSet { name, description, genes });
    }
    if sets.is_empty() {
        return Err(parse_err(path, 0, "no gene sets found"));
    }
    Ok(sets)
}

pub fn write_gmt(path: &Path, sets: &[GmtSet]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sets {
        write!(w, "{}\t{}", s.name, s.description)?;
        for g in &s.genes {
            write!(w, "\t{g}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Sets mapped onto column indices of `genes`.
#[derive(Clone, Debug)]
pub struct ResolvedSets {
    pub sets: Vec<(String, Vec<usize>)>,
    /// Member names absent from the expression header.
    pub dropped_genes: Vec<String>,
    /// Sets with no member left after intersecting with the header.
    pub dropped_sets: Vec<String>,
}

/// Intersects set membership with the expression panel.
pub fn resolve_sets(sets: &[GmtSet], genes: &[String]) -> ResolvedSets {
    let index: HashMap<&str, usize> = genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut dropped = HashSet::new();
    let mut resolved = Vec::new();
    let mut dropped_sets = Vec::new();
    for s in sets {
        let mut members = Vec::new();
        for g in &s.genes {
            match index.get(g.as_str()) {
                Some(&k) => members.push(k),
                None => {
                    dropped.insert(g.clone());
                }
            }
        }
        if members.is_empty() {
            dropped_sets.push(s.name.clone());
        } else {
            resolved.push((s.name.clone(), members));
        }
    }
    let mut dropped_genes: Vec<String> = dropped.into_iter().collect();
    dropped_genes.sort();
    if !dropped_genes.is_empty() {
        let shown: Vec<&str> = dropped_genes.iter().take(10).map(String::as_str).collect();
        warn!(
            "dropped {} set members missing from the expression header: {}{}",
            dropped_genes.len(),
            shown.join(", "),
            if dropped_genes.len() > shown.len() { ", ..." } else { "" }
        );
    }
    for s in &dropped_sets {
        warn!("gene set `{s}` has no members in the expression data and was skipped");
    }
    ResolvedSets { sets: resolved, dropped_genes, dropped_sets }
}

/// Remaps set members onto the columns that belong to at least one set and
/// returns those columns in ascending order.
pub fn restrict_to_grouped(sets: &mut [(String, Vec<usize>)]) -> Vec<usize> {
    let keep: Vec<usize> =
        sets.iter().flat_map(|(_, m)| m.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    for (_, m) in sets.iter_mut() {
        for k in m.iter_mut() {
            *k = remap[k];
        }
    }
    keep
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    pub samples: Vec<String>,
    pub genes: Vec<String>,
    /// samples × genes
    pub x: Array2<f64>,
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r)
}

fn record_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

pub fn read_expression(path: &Path) -> Result<Expression> {
    parse_expression(File::open(path)?, path)
}

pub fn parse_expression<R: Read>(r: R, path: &Path) -> Result<Expression> {
    let mut rdr = csv_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| csv_error(path, e))?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let genes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if genes.is_empty() {
        return Err(parse_err(path, 1, "header has no gene columns"));
    }
    let mut seen = HashSet::new();
    if let Some(g) = genes.iter().find(|g| !seen.insert(g.as_str())) {
        return Err(parse_err(path, 1, format!("duplicate gene name `{g}`")));
    }
    let mut samples = Vec::new();
    let mut values = Vec::new();
    let mut sample_set = HashSet::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec, i + 2);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != genes.len() + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", genes.len() + 1, rec.len())));
        }
        let id = rec[0].to_string();
        if !sample_set.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate sample `{id}`")));
        }
        for (k, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("gene `{}`: `{field}` is not a number", genes[k])))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("gene `{}`: non-finite value", genes[k])));
            }
            values.push(v);
        }
        samples.push(id);
    }
    if samples.is_empty() {
        return Err(parse_err(path, 2, "no sample rows"));
    }
    let x =
        Array2::from_shape_vec((samples.len(), genes.len()), values).map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(Expression { samples, genes, x })
}

pub fn write_expression(path: &Path, samples: &[String], genes: &[String], x: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(genes.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in samples.iter().zip(x.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_phenotype(path: &Path) -> Result<Vec<(String, f64)>> {
    parse_phenotype(File::open(path)?, path)
}

pub fn parse_phenotype<R: Read>(r: R, path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv_reader(r);
    let mut out: Vec<(String, f64)> = Vec::new();
    let mut first = true;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec, i + 1);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let label = match rec[1].parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => v,
            Ok(v) => return Err(parse_err(path, line, format!("label {v} is not 0 or 1"))),
            // a non-numeric first row is a header
            Err(_) if is_first => continue,
            Err(_) => return Err(parse_err(path, line, format!("label `{}` is not 0 or 1", &rec[1]))),
        };
        let id = rec[0].to_string();
        if out.iter().any(|(s, _)| *s == id) {
            return Err(parse_err(path, line, format!("duplicate sample `{id}`")));
        }
        out.push((id, label));
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no phenotype rows"));
    }
    Ok(out)
}

pub fn write_phenotype(path: &Path, samples: &[String], y: ArrayView1<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "label"])?;
    for (id, &v) in samples.iter().zip(y) {
        w.write_record([id.as_str(), if v == 1.0 { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

/// Labels in the sample order of the expression file.
pub fn align_phenotype(samples: &[String], pheno: &[(String, f64)]) -> Result<Array1<f64>> {
    let map: HashMap<&str, f64> = pheno.iter().map(|(s, v)| (s.as_str(), *v)).collect();
    let missing: Vec<&str> = samples.iter().map(String::as_str).filter(|s| !map.contains_key(s)).collect();
    if !missing.is_empty() {
        return Err(Error::Dimension(format!(
            "{} expression samples have no phenotype label (first: `{}`)",
            missing.len(),
            missing[0]
        )));
    }
    if pheno.len() != samples.len() {
        return Err(Error::Dimension(format!(
            "phenotype lists {} samples, expression has {}",
            pheno.len(),
            samples.len()
        )));
    }
    Ok(samples.iter().map(|s| map[s.as_str()]).collect())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}
