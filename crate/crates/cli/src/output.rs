//! Atomic file output.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use powvar::harness::Report;

/// Write through a sibling temp file and rename it into place.
pub fn write_atomic_with(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_atomic_with(path, |w| w.write_all(bytes))
}

/// One-row covariance table.
pub fn write_covariance_csv(report: &Report, w: &mut impl Write) -> io::Result<()> {
    writeln!(
        w,
        "first,second,delta_n,replicates,empirical,theoretical,standard_error"
    )?;
    if let Some(c) = &report.covariance {
        writeln!(
            w,
            "\"{}\",\"{}\",{},{},{},{},{}",
            c.pair[0], c.pair[1], c.delta_n, c.replicates, c.empirical, c.theoretical, c.standard_error
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
