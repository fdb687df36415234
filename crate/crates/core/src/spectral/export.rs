use std::io::{Read, Write};

use super::{GroupAssignment, SpectralEmbedding, SpectralError};

fn csv_err(e: csv::Error) -> SpectralError {
    SpectralError::InvalidAssignment(e.to_string())
}

/// Writes `series_name,group_id` rows with one-based group ids.
pub fn write_assignment<W: Write>(out: W, names: &[String], a: &GroupAssignment) -> Result<(), SpectralError> {
    if names.len() != a.len() {
        return Err(SpectralError::InvalidAssignment(format!(
            "{} names for {} labels",
            names.len(),
            a.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series_name", "group_id"]).map_err(csv_err)?;
    for (name, &l) in names.iter().zip(a.labels()) {
        w.write_record([name.as_str(), &(l + 1).to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_assignment`]; `k` is the largest id.
pub fn read_assignment<R: Read>(input: R) -> Result<(Vec<String>, GroupAssignment), SpectralError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let id: usize = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .filter(|&id| id >= 1)
            .ok_or_else(|| SpectralError::InvalidAssignment(format!("row {}: bad group id", line + 2)))?;
        names.push(rec.get(0).unwrap_or_default().to_string());
        labels.push(id - 1);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok((names, GroupAssignment::complete(labels, k)?))
}

/// Writes `series_name,v1..vK` rows of embedding coordinates.
pub fn write_embedding<W: Write>(out: W, names: &[String], e: &SpectralEmbedding) -> Result<(), SpectralError> {
    let k = e.eigenvalues.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["series_name".to_string()];
    header.extend((1..=k).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..k).map(|j| format!("{:e}", e.vectors.at2(i, j))));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_table_round_trip() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let a = GroupAssignment::new(vec![1, 0, 1], 2).unwrap();
        let mut buf = Vec::new();
        write_assignment(&mut buf, &names, &a).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "series_name,group_id\na,2\nb,1\nc,2\n");
        let (n2, a2) = read_assignment(&buf[..]).unwrap();
        assert_eq!(n2, names);
        assert_eq!(a2, a);
    }

    #[test]
    fn zero_group_id_rejected() {
        let text = "series_name,group_id\na,0\n";
        assert!(read_assignment(text.as_bytes()).is_err());
    }
}
