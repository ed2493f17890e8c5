//! ROC AUC, rank-sum significance and the band-by-family report table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use statrs::function::erf::erfc;

use crate::data::{BandName, FeatureFamily, LabelKind};
use crate::error::{Error, Result};

/// Group sizes up to this use exact enumeration in [`wilcoxon_rank_sum`].
pub const EXACT_MAX_GROUP: usize = 8;

fn split_counts(labels_fail: &[bool]) -> (usize, usize) {
    let nf = labels_fail.iter().filter(|&&f| f).count();
    (nf, labels_fail.len() - nf)
}

/// 1-based midranks of `values`, plus the sizes of every tie group.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Probability that a failure trial outscores a success trial, ties counting half.
pub fn auc(scores: &[f64], labels_fail: &[bool]) -> Result<f64> {
    if scores.len() != labels_fail.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels_fail.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("AUC scores contain NaN".into()));
    }
    let (nf, ns) = split_counts(labels_fail);
    if nf == 0 || ns == 0 {
        return Err(Error::SingleClass(format!("AUC needs both classes, got {nf} failure / {ns} success")));
    }
    let (ranks, _) = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels_fail).filter(|(_, &f)| f).map(|(r, _)| r).sum();
    let u = rank_sum - (nf * (nf + 1)) as f64 / 2.0;
    Ok(u / (nf * ns) as f64)
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Two-sided rank-sum p-value with midranks for ties.
pub fn wilcoxon_rank_sum(scores_fail: &[f64], scores_succ: &[f64]) -> Result<f64> {
    let (n1, n2) = (scores_fail.len(), scores_succ.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass(format!("rank-sum test needs both groups, got {n1} and {n2}")));
    }
    let all: Vec<f64> = scores_fail.iter().chain(scores_succ).copied().collect();
    if all.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("rank-sum scores contain NaN".into()));
    }
    let n = n1 + n2;
    let (ranks, ties) = midranks(&all);
    let w: f64 = ranks[..n1].iter().sum();
    let expected = n1 as f64 * (n + 1) as f64 / 2.0;
    let observed = (w - expected).abs();

    if n1 <= EXACT_MAX_GROUP && n2 <= EXACT_MAX_GROUP {
        let (mut extreme, mut total) = (0u64, 0u64);
        // half-rank sums are exact in f64, the slack only absorbs summation order
        for_each_combination(n, n1, |pick| {
            let s: f64 = pick.iter().map(|&i| ranks[i]).sum();
            total += 1;
            if (s - expected).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        });
        return Ok(extreme as f64 / total as f64);
    }

    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1)) as f64;
    let var = n1 as f64 * n2 as f64 / 12.0 * ((n + 1) as f64 - tie_term);
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((observed - 0.5).max(0.0)) / var.sqrt();
    Ok(erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// A row of the report: one band, or the band-combined fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReportRow {
    Band(BandName),
    Combined,
}

impl ReportRow {
    pub const ALL: [ReportRow; 5] = [
        ReportRow::Band(BandName::Theta),
        ReportRow::Band(BandName::Alpha),
        ReportRow::Band(BandName::Beta),
        ReportRow::Band(BandName::Gamma),
        ReportRow::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportRow::Band(b) => b.as_str(),
            ReportRow::Combined => "Comb.",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCell {
    pub label: LabelKind,
    pub family: FeatureFamily,
    pub row: ReportRow,
    pub auc: f64,
    pub p_value: f64,
    pub n_fail: usize,
    pub n_succ: usize,
}

/// All-family fusion result for one label.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionCell {
    pub label: LabelKind,
    pub auc: f64,
    pub p_value: f64,
    pub n_fail: usize,
    pub n_succ: usize,
}

/// AUC and rank-sum p-value of one score vector.
pub fn evaluate_scores(scores: &[f64], labels_fail: &[bool]) -> Result<(f64, f64, usize, usize)> {
    let a = auc(scores, labels_fail)?;
    let fail: Vec<f64> = scores.iter().zip(labels_fail).filter(|(_, &f)| f).map(|(s, _)| *s).collect();
    let succ: Vec<f64> = scores.iter().zip(labels_fail).filter(|(_, &f)| !f).map(|(s, _)| *s).collect();
    let p = wilcoxon_rank_sum(&fail, &succ)?;
    Ok((a, p, fail.len(), succ.len()))
}

pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub const REPORT_HEADER: &str = "band,digit_connstruct,digit_connstruct_sig,digit_graphvar,digit_graphvar_sig,\
digit_power,digit_power_sig,sentence_connstruct,sentence_connstruct_sig,sentence_graphvar,\
sentence_graphvar_sig,sentence_power,sentence_power_sig";

pub const FUSION_HEADER: &str = "label,auc,sig,p_value,n_fail,n_succ";

pub const CELLS_HEADER: &str = "label,family,row,auc,p_value,n_fail,n_succ";

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub table_csv: String,
    pub fusion_csv: String,
    pub cells_csv: String,
}

/// Lays the cells out as bands plus "Comb." by label and family.
pub fn build_report(cells: &[EvalCell], fusion: &[FusionCell]) -> Result<Report> {
    let lookup: BTreeMap<(LabelKind, FeatureFamily, ReportRow), &EvalCell> =
        cells.iter().map(|c| ((c.label, c.family, c.row), c)).collect();
    let mut missing = Vec::new();
    for label in LabelKind::ALL {
        for family in FeatureFamily::ALL {
            for row in ReportRow::ALL {
                if !lookup.contains_key(&(label, family, row)) {
                    missing.push(format!("{label}/{family}/{}", row.as_str()));
                }
            }
        }
        if !fusion.iter().any(|f| f.label == label) {
            missing.push(format!("{label}/all-family fusion"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCell(missing.join(", ")));
    }

    let mut table = String::from(REPORT_HEADER);
    table.push('\n');
    for row in ReportRow::ALL {
        table.push_str(row.as_str());
        for label in LabelKind::ALL {
            for family in FeatureFamily::ALL {
                let c = lookup[&(label, family, row)];
                write!(table, ",{:.4},{}", c.auc, significance_marker(c.p_value)).expect("write to String");
            }
        }
        table.push('\n');
    }

    let mut fusion_csv = String::from(FUSION_HEADER);
    fusion_csv.push('\n');
    for label in LabelKind::ALL {
        let f = fusion.iter().find(|f| f.label == label).expect("checked above");
        writeln!(
            fusion_csv,
            "{label},{:.4},{},{:.6e},{},{}",
            f.auc,
            significance_marker(f.p_value),
            f.p_value,
            f.n_fail,
            f.n_succ
        )
        .expect("write to String");
    }

    let mut cells_csv = String::from(CELLS_HEADER);
    cells_csv.push('\n');
    for label in LabelKind::ALL {
        for family in FeatureFamily::ALL {
            for row in ReportRow::ALL {
                let c = lookup[&(label, family, row)];
                writeln!(
                    cells_csv,
                    "{label},{family},{},{:.6},{:.6e},{},{}",
                    row.as_str(),
                    c.auc,
                    c.p_value,
                    c.n_fail,
                    c.n_succ
                )
                .expect("write to String");
            }
        }
    }
    Ok(Report {
        table_csv: table,
        fusion_csv,
        cells_csv,
    })
}

impl Report {
    /// Writes `report.csv`, `fusion.csv` and `cells.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.csv", &self.table_csv),
            ("fusion.csv", &self.fusion_csv),
            ("cells.csv", &self.cells_csv),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Per-subject AUC; `None` where a subject has only one class.
pub fn per_subject_auc(scores: &[f64], labels_fail: &[bool], subjects: &[String]) -> Result<Vec<(String, Option<f64>)>> {
    if subjects.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: subjects.len(),
        });
    }
    let mut order: Vec<&String> = Vec::new();
    for s in subjects {
        if !order.contains(&s) {
            order.push(s);
        }
    }
    order
        .into_iter()
        .map(|subject| {
            let rows: Vec<usize> = (0..scores.len()).filter(|&r| &subjects[r] == subject).collect();
            let s: Vec<f64> = rows.iter().map(|&r| scores[r]).collect();
            let l: Vec<bool> = rows.iter().map(|&r| labels_fail[r]).collect();
            let (nf, ns) = split_counts(&l);
            let value = if nf > 0 && ns > 0 { Some(auc(&s, &l)?) } else { None };
            Ok((subject.clone(), value))
        })
        .collect()
}
