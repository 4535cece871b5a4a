//! CSV and text outputs of runs and sweeps. Floats use Rust's shortest
//! round-trip formatting, so equal values always print identically.

use std::fmt::Write as _;
use std::path::Path;

use tgnn_core::trainer::EpochRecord;

use crate::checkpoint::save_checkpoint;
use crate::error::{write, Error, Result};
use crate::experiment::RunReport;

pub const HISTORY_HEADER: &str = "epoch,sup_loss,con_loss,val_acc";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in history {
        writeln!(s, "{},{},{},{}", r.epoch, r.sup_loss, r.con_loss, r.val_acc).expect("string write");
    }
    s
}

pub fn report_csv(report: &RunReport) -> String {
    let mut s = String::from("seed,test_acc,best_epoch,best_val_acc\n");
    for o in &report.outcomes {
        writeln!(s, "{},{},{},{}", o.seed, o.test_accuracy, o.best_epoch, o.best_val_acc).expect("string write");
    }
    s
}

pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    writeln!(s, "variant = {}", report.config.variant).expect("string write");
    writeln!(s, "mean_test_acc = {}", report.mean).expect("string write");
    writeln!(s, "std_test_acc = {}", report.std).expect("string write");
    writeln!(s, "wall_time_secs = {:.3}", report.wall_time.as_secs_f64()).expect("string write");
    for note in &report.notes {
        writeln!(s, "# {note}").expect("string write");
    }
    s.push_str("\n# config\n");
    s.push_str(&report.config.render());
    s
}

/// `report.csv`, `summary.txt`, and per seed `history_seed{S}.csv` and
/// `checkpoint_seed{S}.json`.
pub fn write_run(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.csv"), report_csv(report))?;
    write(&dir.join("summary.txt"), summary_text(report))?;
    for o in &report.outcomes {
        write(&dir.join(format!("history_seed{}.csv", o.seed)), history_csv(&o.history))?;
        save_checkpoint(&o.model, &dir.join(format!("checkpoint_seed{}.json", o.seed)))?;
    }
    Ok(())
}

pub fn sweep_csv(parameter: &str, rows: &[(String, RunReport)]) -> String {
    let mut s = String::from("parameter,value,mean,std,accuracies\n");
    for (value, r) in rows {
        let accs: Vec<String> = r.accuracies().iter().map(f64::to_string).collect();
        writeln!(s, "{parameter},{value},{},{},{}", r.mean, r.std, accs.join(";")).expect("string write");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_columns() {
        let h = [EpochRecord { epoch: 1, sup_loss: 0.5, con_loss: 0.0, val_acc: 1.0 / 3.0 }];
        assert_eq!(history_csv(&h), "epoch,sup_loss,con_loss,val_acc\n1,0.5,0,0.3333333333333333\n");
        assert_eq!(history_csv(&[]), "epoch,sup_loss,con_loss,val_acc\n");
    }
}
