//! Published per-module costs as CSV: `component,params_m,gflops`.

use std::path::Path;

use scanshare_core::accounting::{format_thousandths, parse_thousandths, PublishedCost, Table3Check};

use crate::error::{CliError, Result};

pub const HEADER: &str = "component,params_m,gflops";

pub fn parse(text: &str, path: &Path) -> Result<Vec<PublishedCost>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        _ => return Err(CliError::format(path, format!("expected header '{HEADER}'"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [component, params, flops] = fields[..] else {
            return Err(CliError::format(path, format!("row {}: expected 3 fields", i + 1)));
        };
        let num = |s: &str| parse_thousandths(s).map_err(|e| CliError::format(path, format!("row {}: {e}", i + 1)));
        rows.push(PublishedCost {
            component: component.to_string(),
            params_k: num(params)?,
            mflops: num(flops)?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::format(path, "no rows"));
    }
    Ok(rows)
}

pub fn read(path: &Path) -> Result<Vec<PublishedCost>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

pub fn to_csv(rows: &[PublishedCost]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in rows {
        s += &format!("{},{},{}\n", r.component, format_thousandths(r.params_k), format_thousandths(r.mflops));
    }
    s
}

pub fn check_csv(c: &Table3Check) -> String {
    let gap = c.flops_gap_bp();
    format!(
        "quantity,value\n\
         total_params_m,{}\n\
         trainable_params_m,{}\n\
         total_gflops,{}\n\
         trainable_gflops,{}\n\
         reduced_trainable_params_pct,{}\n\
         shared_flops_pct,{}\n\
         published_shared_flops_pct,92.29\n\
         shared_flops_gap_pp,{}.{:02}\n",
        format_thousandths(c.total_params_k),
        format_thousandths(c.trainable_params_k),
        format_thousandths(c.total_mflops),
        format_thousandths(c.trainable_mflops),
        c.reduced_trainable_params,
        c.shared_flops,
        gap / 100,
        gap % 100
    )
}
