use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{Array1, Array2, Axis};
use serde_json::{json, Value};

use super::manifest::ManifestBuilder;
use super::{CompareArgs, DataArgs, FitArgs, GseaArgs, SimulateArgs};
use crate::error::{Error, Result};
use crate::gsea::{
    gsea_select_indices, permutation_test, warn_coarse_permutations, GeneSet, GseaConfig, RankingMetric, SelectionRule,
};
use crate::io::{self, fmt_f64, GmtSet};
use crate::model::{group_norms, selected_groups, ExpandedDesign, GroupStructure};
use crate::simulate::{replicate_data, run_experiment, Method, ReplicationSummary, SimConfig};
use crate::solver::{cross_validate, fit_path, Family, FitConfig, LambdaPath};

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

struct Dataset {
    samples: Vec<String>,
    genes: Vec<String>,
    x: Array2<f64>,
    y: Array1<f64>,
    sets: Vec<(String, Vec<usize>)>,
    dropped_genes: usize,
}

fn load(d: &DataArgs, drop_ungrouped: bool) -> Result<Dataset> {
    let expr = io::read_expression(&d.expression)?;
    let pheno = io::read_phenotype(&d.phenotype)?;
    let y = io::align_phenotype(&expr.samples, &pheno)?;
    let gmt = io::read_gmt(&d.sets)?;
    let resolved = io::resolve_sets(&gmt, &expr.genes);
    if resolved.sets.is_empty() {
        return Err(Error::Dimension("no gene set shares a gene with the expression data".into()));
    }
    let mut ds = Dataset {
        samples: expr.samples,
        genes: expr.genes,
        x: expr.x,
        y,
        sets: resolved.sets,
        dropped_genes: resolved.dropped_genes.len(),
    };
    if drop_ungrouped {
        let keep = io::restrict_to_grouped(&mut ds.sets);
        info!("dropping {} genes that belong to no set", ds.genes.len() - keep.len());
        ds.x = ds.x.select(Axis(1), &keep);
        ds.genes = keep.iter().map(|&k| ds.genes[k].clone()).collect();
    }
    Ok(ds)
}

fn inputs(d: &DataArgs) -> Vec<PathBuf> {
    vec![d.expression.clone(), d.phenotype.clone(), d.sets.clone()]
}

pub fn fit(a: FitArgs, name: &str) -> Result<()> {
    let family: Family = a.family.parse()?;
    let mut mb = ManifestBuilder::new(name, inputs(&a.data));
    let seed = mb.seed(a.seed);
    let ds = load(&a.data, a.drop_ungrouped)?;
    let n_sets = ds.sets.len();
    let mut gs = GroupStructure::new(ds.genes.len(), ds.sets.clone())?;
    if !gs.ungrouped().is_empty() {
        info!("{} genes belong to no set and enter as singleton groups", gs.ungrouped().len());
        gs = gs.with_implicit_singletons(Some(&ds.genes));
    }

    let mut cfg = FitConfig::new(family);
    cfg.lambda = if a.lambda.is_empty() {
        LambdaPath::Auto { count: a.n_lambda, min_ratio: a.lambda_min_ratio }
    } else {
        LambdaPath::Explicit(a.lambda.clone())
    };
    cfg.standardize = !a.no_standardize;
    cfg.max_iters = a.max_iters;
    cfg.seed = seed;
    cfg.cv_rule = a.cv_rule.parse()?;
    cfg.validate()?;

    let ed = ExpandedDesign::new(ds.x.view(), &gs, true)?;
    let (fit, chosen, cv) = match a.cv {
        Some(k) => {
            let cv = cross_validate(&ed, ds.y.view(), &gs, &cfg, k)?;
            (cv.fit.clone(), cv.selected, Some(cv))
        }
        None => {
            let fit = fit_path(&ed, ds.y.view(), &gs, &cfg)?;
            let last = fit.len() - 1;
            (fit, last, None)
        }
    };
    let lc = &fit.coefficients[chosen];
    let (beta, intercept) = ed.collapse(lc)?;
    let norms = group_norms(lc, &gs)?;
    let selected = selected_groups(&norms);

    fs::create_dir_all(&a.out)?;
    let coef_path = a.out.join("coefficients.csv");
    let mut rows = vec![vec!["(intercept)".to_string(), fmt_f64(intercept)]];
    rows.extend(ds.genes.iter().zip(&beta).map(|(g, &b)| vec![g.clone(), fmt_f64(b)]));
    write_table(&coef_path, &strings(&["gene", "beta"]), &rows)?;

    let pw_path = a.out.join("pathways.csv");
    let rows: Vec<Vec<String>> = (0..n_sets)
        .map(|j| {
            vec![gs.group(j).name.clone(), gs.group(j).len().to_string(), fmt_f64(norms[j]), selected[j].to_string()]
        })
        .collect();
    write_table(&pw_path, &strings(&["pathway", "size", "group_norm", "selected"]), &rows)?;

    let path_path = a.out.join("path.csv");
    let mut header = strings(&["lambda", "loss", "active_groups", "converged", "iterations"]);
    if cv.is_some() {
        header.extend(strings(&["cv_loss", "cv_se", "cv_misclassification"]));
    }
    header.push("chosen".into());
    let rows: Vec<Vec<String>> = (0..fit.len())
        .map(|i| {
            let active = selected_groups(&group_norms(&fit.coefficients[i], &gs).unwrap_or_default())
                .iter()
                .filter(|s| **s)
                .count();
            let mut r = vec![
                fmt_f64(fit.lambdas[i]),
                fmt_f64(fit.loss_values[i]),
                active.to_string(),
                fit.converged[i].to_string(),
                fit.iterations[i].to_string(),
            ];
            if let Some(cv) = &cv {
                r.push(fmt_f64(cv.mean_loss[i]));
                r.push(fmt_f64(cv.se_loss[i]));
                r.push(cv.misclassification.as_ref().map(|m| fmt_f64(m[i])).unwrap_or_default());
            }
            r.push((i == chosen).to_string());
            r
        })
        .collect();
    write_table(&path_path, &header, &rows)?;

    let n_selected = selected[..n_sets].iter().filter(|s| **s).count();
    info!("lambda = {:.6e}: {n_selected} of {n_sets} pathways selected", fit.lambdas[chosen]);
    let config = json!({
        "family": family,
        "cv_folds": a.cv,
        "cv_rule": cfg.cv_rule,
        "lambda": cfg.lambda,
        "standardize": cfg.standardize,
        "max_iters": cfg.max_iters,
        "tol": cfg.tol,
        "kkt_tol": cfg.kkt_tol,
        "drop_ungrouped": a.drop_ungrouped,
        "seed": seed,
        "n_samples": ds.samples.len(),
        "n_genes": ds.genes.len(),
        "n_sets": n_sets,
        "dropped_set_members": ds.dropped_genes,
        "lambda_max": fit.lambda_max,
        "chosen_lambda": fit.lambdas[chosen],
        "cv_misclassification": cv.as_ref().and_then(|c| c.selected_misclassification()),
        "unconverged_lambdas": fit.converged.iter().filter(|c| !**c).count(),
    });
    mb.write(&a.out, &[coef_path, pw_path, path_path], config)
}

pub fn gsea(a: GseaArgs) -> Result<()> {
    let metric: RankingMetric = a.metric.parse()?;
    let rule: SelectionRule = a.select.parse()?;
    let mut mb = ManifestBuilder::new("gsea", inputs(&a.data));
    let seed = mb.seed(a.seed);
    let ds = load(&a.data, false)?;
    let sets: Vec<GeneSet> = ds.sets.iter().map(|(n, m)| GeneSet { name: n.clone(), members: m.clone() }).collect();
    let cfg = GseaConfig { alpha: a.alpha, n_perm: a.perms as usize, seed, metric };
    warn_coarse_permutations(cfg.n_perm);
    let results = permutation_test(ds.x.view(), ds.y.view(), &sets, &cfg)?;
    let chosen = gsea_select_indices(&results, rule)?;
    let mut flag = vec![false; results.len()];
    for &i in &chosen {
        flag[i] = true;
    }

    fs::create_dir_all(&a.out)?;
    let csv_path = a.out.join("gsea.csv");
    let rows: Vec<Vec<String>> = results
        .iter()
        .zip(&flag)
        .map(|(r, f)| {
            vec![
                r.name.clone(),
                r.size.to_string(),
                fmt_f64(r.es),
                fmt_f64(r.nes),
                fmt_f64(r.p_nominal),
                fmt_f64(r.q_fdr),
                f.to_string(),
            ]
        })
        .collect();
    write_table(&csv_path, &strings(&["set", "size", "ES", "NES", "p_nominal", "q_fdr", "selected"]), &rows)?;
    let json_path = a.out.join("gsea.json");
    let selected: Vec<&str> = chosen.iter().map(|&i| results[i].name.as_str()).collect();
    fs::write(&json_path, serde_json::to_string_pretty(&json!({ "results": results, "selected": selected }))?)?;
    info!("{} of {} gene sets selected", selected.len(), results.len());

    let config = json!({
        "alpha": cfg.alpha,
        "n_perm": cfg.n_perm,
        "metric": cfg.metric,
        "select": rule,
        "seed": seed,
        "n_samples": ds.samples.len(),
        "n_genes": ds.genes.len(),
        "n_sets": sets.len(),
        "dropped_set_members": ds.dropped_genes,
    });
    mb.write(&a.out, &[csv_path, json_path], config)
}

/// Keys whose value may be an array; the run covers their Cartesian product.
const GRID_KEYS: [&str; 5] = ["setting", "n", "group_effect", "sigma", "rho"];

pub fn expand_grid(value: &Value) -> Result<Vec<SimConfig>> {
    let obj = value.as_object().ok_or_else(|| Error::Config("experiment config must be a JSON object".into()))?;
    let mut points = vec![obj.clone()];
    for key in GRID_KEYS {
        if let Some(Value::Array(values)) = obj.get(key) {
            if values.is_empty() {
                return Err(Error::Config(format!("grid for `{key}` is empty")));
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.to_string(), v.clone());
                        q
                    })
                })
                .collect();
        }
    }
    points
        .into_iter()
        .map(|p| serde_json::from_value(Value::Object(p)).map_err(|e| Error::Config(e.to_string())))
        .collect()
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut mb = ManifestBuilder::new("simulate", vec![a.config.clone()]);
    let text = fs::read_to_string(&a.config)?;
    let value: Value = serde_json::from_str(&text)?;
    let mut configs = expand_grid(&value)?;
    let given = a.seed.or_else(|| value.get("seed").and_then(Value::as_u64));
    let seed = mb.seed(given);
    for c in &mut configs {
        c.seed = seed;
        c.validate()?;
        if let Some(ext) = &mut c.external {
            // Relative paths are taken from the config file's directory.
            let base = a.config.parent().unwrap_or(Path::new(""));
            ext.design = base.join(&ext.design);
            ext.sets = base.join(&ext.sets);
            mb.add_input(&ext.design);
            mb.add_input(&ext.sets);
        }
    }
    if configs.iter().any(|c| c.methods.contains(&Method::Gsea)) {
        warn_coarse_permutations(configs.iter().map(|c| c.n_perm).min().unwrap_or(0));
    }

    let mut summary = Vec::new();
    let mut per_rep = Vec::new();
    let mut freq = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        info!("grid point {} of {}: {:?}", i + 1, configs.len(), c.setting);
        let s = run_experiment(c)?;
        let failures: usize = s.methods.iter().map(|m| m.failures).sum();
        if failures > 0 {
            warn!("{failures} method runs failed; see the error column of per_rep.csv");
        }
        summary.extend(s.summary_rows());
        per_rep.extend(s.per_rep_rows());
        freq.extend(s.frequency_rows());
    }

    fs::create_dir_all(&a.out)?;
    let paths = [a.out.join("summary.csv"), a.out.join("per_rep.csv"), a.out.join("frequencies.csv")];
    write_table(&paths[0], &ReplicationSummary::summary_header(), &summary)?;
    write_table(&paths[1], &ReplicationSummary::per_rep_header(), &per_rep)?;
    write_table(&paths[2], &ReplicationSummary::frequency_header(), &freq)?;
    let echo = a.out.join("config_echo.json");
    fs::write(&echo, serde_json::to_string_pretty(&configs)?)?;
    let mut outputs = paths.to_vec();
    outputs.push(echo);

    if a.export_data {
        outputs.extend(export_replication(&configs[0], &a.out.join("data"))?);
    }
    mb.write(&a.out, &outputs, serde_json::to_value(&configs)?)
}

/// Writes replication 0 of `cfg` as expression/phenotype/GMT files plus the
/// true coefficients.
pub fn export_replication(cfg: &SimConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let (sim, y, _, _) = replicate_data(cfg, &cfg.layout()?, 0)?;
    fs::create_dir_all(dir)?;
    let samples: Vec<String> = (1..=sim.x.nrows()).map(|i| format!("s{i}")).collect();
    let genes: Vec<String> = (1..=sim.x.ncols()).map(|k| format!("g{k}")).collect();
    let sets: Vec<GmtSet> = sim
        .gs
        .groups()
        .iter()
        .map(|g| GmtSet {
            name: g.name.clone(),
            description: if sim.truth.contains(&sim.gs.index_of(&g.name).unwrap_or(usize::MAX)) {
                "active".into()
            } else {
                "null".into()
            },
            genes: g.members.iter().map(|&k| genes[k].clone()).collect(),
        })
        .collect();
    let paths =
        [dir.join("expression.csv"), dir.join("phenotype.csv"), dir.join("sets.gmt"), dir.join("beta_true.csv")];
    io::write_expression(&paths[0], &samples, &genes, sim.x.view())?;
    io::write_phenotype(&paths[1], &samples, y.view())?;
    io::write_gmt(&paths[2], &sets)?;
    let rows: Vec<Vec<String>> = genes.iter().zip(&sim.beta).map(|(g, &b)| vec![g.clone(), fmt_f64(b)]).collect();
    write_table(&paths[3], &strings(&["gene", "beta"]), &rows)?;
    Ok(paths.to_vec())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Table { header, rows })
}

fn column(t: &Table, name: &str, path: &Path) -> Result<usize> {
    t.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: format!("missing column `{name}`"),
    })
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let mut files = Vec::new();
    for d in &a.dirs {
        files.push(d.join("frequencies.csv"));
        files.push(d.join("summary.csv"));
    }
    let mb = ManifestBuilder::new("compare", files);

    let mut labels: Vec<String> = Vec::new();
    for (i, d) in a.dirs.iter().enumerate() {
        let base = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("run{}", i + 1));
        let label = if labels.contains(&base) { format!("{base}#{}", i + 1) } else { base };
        labels.push(label);
    }

    // key (setting columns + group) -> (label:method) -> frequency
    const KEY: [&str; 8] = ["setting", "n", "group_effect", "sigma", "rho", "group", "size", "true_group"];
    let mut keys: Vec<Vec<String>> = Vec::new();
    let mut key_index: HashMap<Vec<String>, usize> = HashMap::new();
    let mut columns: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, String), String> = HashMap::new();
    let mut structure: Option<Vec<(String, String)>> = None;
    for (d, label) in a.dirs.iter().zip(&labels) {
        let path = d.join("frequencies.csv");
        let t = read_table(&path)?;
        let key_cols: Vec<usize> = KEY.iter().map(|k| column(&t, k, &path)).collect::<Result<_>>()?;
        let (mcol, fcol, gcol, scol) = (
            column(&t, "method", &path)?,
            column(&t, "frequency", &path)?,
            column(&t, "group", &path)?,
            column(&t, "size", &path)?,
        );
        let groups: Vec<(String, String)> =
            t.rows.iter().map(|r| (r[gcol].clone(), r[scol].clone())).collect::<BTreeSet<_>>().into_iter().collect();
        match &structure {
            None => structure = Some(groups),
            Some(s) if *s != groups => {
                return Err(Error::Dimension(format!(
                    "group structure of {} differs from the first input",
                    d.display()
                )))
            }
            _ => {}
        }
        for r in &t.rows {
            let key: Vec<String> = key_cols.iter().map(|&c| r[c].clone()).collect();
            let idx = *key_index.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            });
            let col = format!("{label}:{}", r[mcol]);
            if !columns.contains(&col) {
                columns.push(col.clone());
            }
            cells.insert((idx, col), r[fcol].clone());
        }
    }

    fs::create_dir_all(&a.out)?;
    let freq_path = a.out.join("comparison_frequencies.csv");
    let mut header = strings(&KEY);
    header.extend(columns.iter().cloned());
    let rows: Vec<Vec<String>> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let mut r = k.clone();
            r.extend(columns.iter().map(|c| cells.get(&(i, c.clone())).cloned().unwrap_or_default()));
            r
        })
        .collect();
    write_table(&freq_path, &header, &rows)?;

    let sum_path = a.out.join("comparison_summary.csv");
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (d, label) in a.dirs.iter().zip(&labels) {
        let t = read_table(&d.join("summary.csv"))?;
        match &header {
            None => header = Some(t.header.clone()),
            Some(h) if *h != t.header => {
                return Err(Error::Dimension(format!("summary.csv of {} has different columns", d.display())))
            }
            _ => {}
        }
        rows.extend(t.rows.into_iter().map(|r| {
            let mut out = vec![label.clone()];
            out.extend(r);
            out
        }));
    }
    let mut full = vec!["source".to_string()];
    full.extend(header.unwrap_or_default());
    write_table(&sum_path, &full, &rows)?;

    mb.write(&a.out, &[freq_path, sum_path], json!({ "inputs": a.dirs, "labels": labels }))
}
