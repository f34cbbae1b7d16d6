//! Episode CSV export. One row per recognition iteration, with the class
//! ranking spelled out so the file stands alone.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::model::Library;
use crate::planner::IterationRecord;

use super::HarnessError;

/// Writes one episode. Columns: iteration counters, the running
/// prediction, then the full class ranking as (label, distance) pairs in
/// ascending distance order (ties broken by class index).
pub fn write_episode_csv(
    path: &Path,
    provenance: &str,
    lib: &Library,
    records: &[IterationRecord],
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config: {provenance}")?;
    write!(w, "iter,moves,contacts,correct")?;
    for k in 1..=lib.class_count() {
        write!(w, ",nn{k},dist{k}")?;
    }
    writeln!(w)?;
    for r in records {
        write!(
            w,
            "{},{},{},{}",
            r.iter,
            r.moves,
            r.contacts,
            if r.correct { 1 } else { 0 }
        )?;
        let mut order: Vec<usize> = (0..lib.class_count()).collect();
        order.sort_by(|&a, &b| {
            r.distances[a]
                .partial_cmp(&r.distances[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        for c in order {
            write!(w, ",{},{:.6}", lib.label(c), r.distances[c])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
