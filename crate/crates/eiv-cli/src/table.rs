//! Aligned text table for rejection-rate studies, shaped like the published
//! tables: one row per cell, column groups per nominal level.

use eiv::montecarlo::SimReport;

pub fn render(rows: &[(usize, usize, &SimReport)], levels: &[f64]) -> String {
    let mut out = String::new();
    let mut header1 = format!("{:>6} {:>4} ", "n_k", "q");
    let mut header2 = format!("{:>6} {:>4} ", "", "");
    for &level in levels {
        header1.push_str(&format!(
            "| {:^20} ",
            format!("gamma = {:.0}%", level * 100.0)
        ));
        header2.push_str(&format!("| {:>6} {:>6} {:>6} ", "LR", "LR*", "LR**"));
    }
    header1.push_str(&format!("| {:>6} {:>6}", "deg%", "fail%"));
    header2.push_str(&format!("| {:>6} {:>6}", "", ""));
    out.push_str(&header1);
    out.push('\n');
    out.push_str(&header2);
    out.push('\n');
    out.push_str(&"-".repeat(header1.len()));
    out.push('\n');
    for &(n_k, q, report) in rows {
        let mut line = format!("{n_k:>6} {q:>4} ");
        for &level in levels {
            match report
                .rates
                .iter()
                .find(|r| (r.level - level).abs() < 1e-12)
            {
                Some(r) => line.push_str(&format!(
                    "| {:>6.1} {:>6.1} {:>6.1} ",
                    r.lr, r.lr_star, r.lr_star_star
                )),
                None => line.push_str(&format!("| {:>6} {:>6} {:>6} ", "-", "-", "-")),
            }
        }
        line.push_str(&format!(
            "| {:>6.2} {:>6.2}",
            100.0 * report.degeneracy_fraction,
            100.0 * report.non_convergence_fraction
        ));
        out.push_str(&line);
        out.push('\n');
    }
    out
}
