use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::domain("need at least 2 points"));
    }
    Ok(())
}

/// Sample correlation coefficient. Constant input yields a domain error.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let m = a.len() as f64;
    let ma = a.iter().sum::<f64>() / m;
    let mb = b.iter().sum::<f64>() / m;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::domain("correlation of a constant sequence"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// 1-based ranks; tied values share their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Pearson correlation of the ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&ranks(a), &ranks(b))
}

/// Index of the closest mode in Euclidean distance; ties go to the lowest index.
pub fn nearest_mode(x: &[f64], modes: &[Vec<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, m) in modes.iter().enumerate() {
        if m.len() != x.len() {
            return Err(Error::domain(format!("mode {k} has length {}, expected {}", m.len(), x.len())));
        }
        let d: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::domain("no modes given"))
}
